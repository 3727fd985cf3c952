# %% [markdown]
# # One platoon, three beacon intervals
#
# Four robots (Leader, Vision, Treatment, Power) beacon on a 100-unit
# interval with 0.5-unit slots. Followers transmit in order after each
# leader beacon and cancel their pending backup.

# %%
from nanoplatoon.runner import bundled_scenario
from nanoplatoon.scenario import load_scenario
from nanoplatoon.simulation import Simulation
from nanoplatoon.trace import parse

sim = Simulation(load_scenario(bundled_scenario("reference")))
report = sim.run()

# %% [markdown]
# The trace is tab separated: time, event, platoon, sender, kind, seq, receiver.

# %%
meta, records = parse(sim.trace_text())
for rec in records:
    if rec[0] <= 1020 and rec[1] != "RX":
        print(f"{rec[0] / 10:7.1f}  {rec[1]:<10} sender {rec[3]}  {rec[4]}")

# %%
print(f"sent {report.beacons_sent}, delivered {report.beacons_delivered}, "
      f"collisions {report.collisions}, cancelled backups {report.cancelled_backups}")
