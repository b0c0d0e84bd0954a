"""
Comparing replay strategies
===========================

Runs the three learners and the static baseline side by side on a small
configuration and prints the ranking the harness produces. This is the
script-sized version of:

    vredge compare --preset desk-scale --rounds 500 --out-dir results

which writes the same table as CSV/JSON for real experiment sizes.
"""

import tempfile

from vredge.config import SimConfig
from vredge.harness import cmd_compare

cfg = SimConfig.preset("desk-scale").updated(
    hidden_width=128, hidden_layers=2, slots_per_round=50,
    buffer_capacity=5000)
ROUNDS = 60

with tempfile.TemporaryDirectory() as out:
    rows = cmd_compare(cfg, ["fper", "per", "cddpg", "fixed_2k"],
                       seeds=[0], rounds=ROUNDS, out_dir=out)

print(f"final-window means after {ROUNDS} rounds (1 seed, shrunken nets):\n")
print(f"{'variant':10s} {'reward':>8s} {'qoe':>7s} {'success':>8s} "
      f"{'step ms':>8s}")
for r in rows:
    print(f"{r['variant']:10s} {r['mean_reward']:8.2f} {r['mean_qoe']:7.2f} "
          f"{r['success_rate']:8.2f} {r['train_time_mean_ms']:8.2f}")
print("\n(rankings at this size are noisy; the shipped experiment uses "
      "500 rounds and 3 seeds)")
