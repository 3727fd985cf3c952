# %% [markdown]
# # Patrol, detect, treat, exit
#
# A platoon patrols a four-segment loop. Two malignant cells sit on
# segment 2. Each detection halts the platoon, the Treatment robot
# removes one cell, and the platoon resumes. Once `max_cycles` loops are
# done and the last one was clean, it leaves by the exit path.

# %%
from nanoplatoon.runner import bundled_scenario
from nanoplatoon.scenario import apply_overrides, from_dict, load_raw
from nanoplatoon.simulation import Simulation

data = load_raw(bundled_scenario("reference"))
data = apply_overrides(data, [
    "t_end=20000",
    "slb.beacon_interval=10",
    "platoons.0.mission.max_cycles=2",
    "world.segments.2.target_cells=2",
])
sim = Simulation(from_dict(data))
report = sim.run()

# %%
for t, state in sim.platoons[1].mission.history:
    print(f"{t / 10:8.1f}  {state.value}")

# %%
print("cells left:", sim.world.total)
print("detection to halt latencies:", report.detection_to_halt_latencies)
