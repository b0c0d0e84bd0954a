"""
Priority replay in numbers
==========================

Shows what the replay buffer actually does: proportional sampling from
priorities, importance weights compensating the skew, and the freshness
discount that demotes an experience each time it is replayed.
"""

import numpy as np

from vredge.replay import BufferConfig, ReplayBuffer

SDIM, ADIM = 6, 4
rng = np.random.default_rng(0)


def filled(mode, capacity=8, **kw):
    buf = ReplayBuffer(BufferConfig(capacity=capacity, mode=mode, **kw),
                       SDIM, ADIM)
    for i in range(capacity):
        buf.push(rng.uniform(size=SDIM), rng.uniform(size=ADIM),
                 float(i), rng.uniform(size=SDIM))
    return buf


# --- sampling follows the priorities ----------------------------------------
buf = filled("per", beta1=1.0)
buf.update_priorities(np.arange(8), np.arange(1.0, 9.0))   # p = 1..8
counts = np.zeros(8)
for _ in range(400):
    counts += np.bincount(buf.sample(64, rng)["indices"], minlength=8)
freq = counts / counts.sum()
print("priority:        ", buf.priority.round(3))
print("expected share:  ", (buf.priority / buf.priority.sum()).round(3))
print("empirical share: ", freq.round(3))

# --- importance weights undo the skew ---------------------------------------
batch = buf.sample(8, rng)
print("\nsampled indices: ", batch["indices"])
print("weights (max=1): ", batch["weights"].round(3))

# --- freshness: replaying an experience wears it out ------------------------
fresh = filled("fper", capacity=2, mu=0.95)
for n in (0, 5, 10, 20):
    # replay entry 0 up to n times, then apply the same TD magnitude
    b = filled("fper", capacity=1, mu=0.95)
    for _ in range(n):
        b.sample(1, rng)
    b.update_priorities([0], [2.0])
    print(f"replayed {n:2d} times -> priority after |td|=2 update: "
          f"{b.priority[0]:.4f}")
print("(the same surprise counts less once it has been seen often)")
