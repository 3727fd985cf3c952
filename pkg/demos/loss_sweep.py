# %% [markdown]
# # Delivery ratio against channel loss
#
# A grid over `channel.loss_prob`, twenty seeds each. With collisions
# absent the delivery ratio should sit near `1 - p`.

# %%
import numpy as np

from nanoplatoon.metrics import aggregate
from nanoplatoon.runner import bundled_scenario, sweep
from nanoplatoon.scenario import apply_overrides, load_raw

data = apply_overrides(load_raw(bundled_scenario("reference")), ["t_end=5000"])
losses = [0.0, 0.1, 0.2, 0.3, 0.5]
rows = sweep(data, {"channel.loss_prob": losses}, list(range(1, 21)), workers=2)

# %%
for s in aggregate(rows, ["channel.loss_prob"]):
    p = s["channel.loss_prob"]
    print(f"p={p:.1f}  ratio {s['delivery_ratio_mean']:.4f} +/- {s['delivery_ratio_std']:.4f}  (1-p = {1 - p:.1f})")

# %%
ratios = np.array([[r["delivery_ratio"] for r in rows if r["channel.loss_prob"] == p] for p in losses])
print("largest gap from 1-p:", np.abs(ratios.mean(axis=1) - (1 - np.array(losses))).max())
