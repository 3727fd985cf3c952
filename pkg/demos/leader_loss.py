# %% [markdown]
# # Losing a leader beacon
#
# When a leader beacon never arrives, followers fall back on the backup
# they scheduled one interval after their own last send. Here the leader's
# beacon of cycle 2 is dropped on purpose.

# %%
from nanoplatoon.scenario import apply_overrides, from_dict, load_raw
from nanoplatoon.runner import bundled_scenario
from nanoplatoon.simulation import Simulation
from nanoplatoon.trace import parse

data = load_raw(bundled_scenario("reference"))
data = apply_overrides(data, ['channel.forced_losses=[{"sender": 0, "seq": 2}]'])
sim = Simulation(from_dict(data))
report = sim.run()

# %%
_, records = parse(sim.trace_text())
for rec in records:
    if 1990 <= rec[0] <= 2030 and rec[1] in ("TX", "LOST", "CANCELLED"):
        print(f"{rec[0] / 10:7.1f}  {rec[1]:<10} sender {rec[3]}  {rec[4]}")

# %% [markdown]
# Every follower still sends once in cycle 2, in its usual slot, although
# no leader beacon arrived to anchor it.

# %%
print(f"sent {report.beacons_sent}, collisions {report.collisions}")
