"""
A first training run
====================

Trains the freshness-prioritized continual learner for a handful of
update rounds on a shrunken desk-scale scenario and prints the learning
curve next to the static baseline. Finishes in well under a minute; for
real experiments use the CLI (`vredge run ...`) with the full preset.
"""

import numpy as np

from vredge.agents import run_continual
from vredge.config import SimConfig

# smaller nets and shorter rounds than the preset, but not so small that
# the critic can no longer resolve the deadline cliff
cfg = SimConfig.preset("desk-scale").updated(
    hidden_width=128, hidden_layers=2, slots_per_round=50,
    buffer_capacity=5000)
ROUNDS = 60

print(f"{cfg.num_users} users, {ROUNDS} rounds x {cfg.slots_per_round} "
      f"slots, nets {cfg.hidden_layers}x{cfg.hidden_width}\n")

base = run_continual(cfg, "fixed_2k", ROUNDS, seed=0)
base_reward = float(base.round_table()["mean_reward"].mean())
print(f"static 2K baseline: mean reward {base_reward:.2f}, "
      f"delivery rate {base.slot_delivered.mean():.2f}")

res = run_continual(cfg, "fper", ROUNDS, seed=0)
table = res.round_table()
print(f"\nlearner (freshness-prioritized replay), seed 0:")
print("round  reward  success")
for r in range(0, ROUNDS, 10):
    sl = slice(r, r + 10)
    print(f"{r:3d}-{r + 9:3d} {table['mean_reward'][sl].mean():7.2f}"
          f"  {table['success_rate'][sl].mean():7.2f}")

first10 = table["mean_reward"][:10].mean()
last10 = table["mean_reward"][-10:].mean()
print(f"\nfirst 10 rounds {first10:.2f} -> last 10 rounds {last10:.2f} "
      f"(baseline {base_reward:.2f})")
print(f"train step: {res.train_time_mean_ms:.2f} ms mean over "
      f"{res.train_steps} steps")
