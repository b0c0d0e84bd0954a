"""Experience replay with optional priority and freshness decay.

Three modes share one ring buffer: `uniform` (plain sampling, unit
weights), `per` (priority = |TD error| + eps), and `fper` (priority =
mu^n * |TD error| + eps where n counts how often the entry was replayed).
Proportional sampling runs over an array-backed sum tree storing
priority^beta1 at the leaves; importance weights are (size * P)^-beta2
normalized by the batch maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SNAPSHOT_VERSION = 1

MODES = ("uniform", "per", "fper")


class EmptyBuffer(RuntimeError):
    pass


class CorruptSnapshot(ValueError):
    pass


class SumTree:
    """Fixed-capacity binary sum tree over non-negative leaf values.

    Heap layout in one array: node i has children 2i+1, 2i+2; the
    capacity leaves sit at indices [capacity-1, 2*capacity-1). Updates
    recompute ancestors from their actual children, so the root never
    accumulates float drift.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.nodes = np.zeros(2 * capacity - 1)

    @property
    def total(self):
        return float(self.nodes[0])

    def values(self, data_idx):
        return self.nodes[self.capacity - 1 + np.asarray(data_idx)]

    def update(self, data_idx, values):
        idx = np.atleast_1d(np.asarray(data_idx, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        if np.any(vals < 0):
            raise ValueError("leaf values must be non-negative")
        leaves = self.capacity - 1 + idx
        self.nodes[leaves] = vals        # duplicate idx: last write wins
        cur = np.unique(leaves)
        while True:
            cur = cur[cur > 0]
            if cur.size == 0:
                break
            cur = np.unique((cur - 1) // 2)
            self.nodes[cur] = self.nodes[2 * cur + 1] + self.nodes[2 * cur + 2]

    def find(self, prefix):
        """Data indices whose cumulative-sum interval contains each prefix."""
        prefix = np.asarray(prefix, dtype=float)
        if self.total <= 0:
            raise EmptyBuffer("sum tree holds no mass")
        vals = np.clip(prefix, 0.0, self.total * (1.0 - 1e-12)).copy()
        idx = np.zeros(vals.shape, dtype=np.int64)
        n = len(self.nodes)
        while True:
            left = 2 * idx + 1
            internal = left < n
            if not internal.any():
                break
            li = left[internal]
            left_sum = self.nodes[li]
            go_right = vals[internal] > left_sum
            idx[internal] = np.where(go_right, li + 1, li)
            vals[internal] = np.where(go_right, vals[internal] - left_sum,
                                      vals[internal])
        return idx - (self.capacity - 1)


@dataclass(frozen=True)
class BufferConfig:
    capacity: int = 10000
    mode: str = "fper"
    beta1: float = 0.9          # priority exponent
    beta2: float = 0.8          # importance-sampling exponent
    mu: float = 0.95            # freshness discount per replay
    eps_per: float = 0.001
    eps_fresh: float = 0.001

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.beta1 < 0 or not 0.0 <= self.beta2 <= 1.0:
            raise ValueError("need beta1 >= 0 and beta2 in [0, 1]")
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")

    @classmethod
    def from_sim(cls, sim, mode):
        return cls(capacity=sim.buffer_capacity, mode=mode,
                   beta1=sim.per_priority_exp, beta2=sim.per_is_exp,
                   mu=sim.freshness_mu, eps_per=sim.per_eps,
                   eps_fresh=sim.freshness_eps)


class ReplayBuffer:
    """Ring buffer of transitions with proportional prioritized sampling."""

    def __init__(self, cfg: BufferConfig, state_dim, action_dim):
        self.cfg = cfg
        cap = cfg.capacity
        self.states = np.zeros((cap, state_dim))
        self.actions = np.zeros((cap, action_dim))
        self.rewards = np.zeros(cap)
        self.next_states = np.zeros((cap, state_dim))
        self.priority = np.zeros(cap)       # raw p(m), before the exponent
        self.replay_count = np.zeros(cap, dtype=np.int64)
        self.stamps = np.zeros(cap, dtype=np.int64)   # bumps on overwrite
        self.tree = SumTree(cap) if cfg.mode != "uniform" else None
        self.cursor = 0
        self.size = 0
        self.stale_updates = 0

    def __len__(self):
        return self.size

    @property
    def max_priority(self):
        if self.size == 0:
            return 1.0
        return float(self.priority[:self.size].max())

    def push(self, state, action, reward, next_state):
        """Store one transition at max priority; returns its slot index."""
        m = self.cursor
        init_p = self.max_priority
        self.states[m] = state
        self.actions[m] = action
        self.rewards[m] = reward
        self.next_states[m] = next_state
        self.priority[m] = init_p
        self.replay_count[m] = 0
        self.stamps[m] += 1
        if self.tree is not None:
            self.tree.update(m, init_p ** self.cfg.beta1)
        self.cursor = (self.cursor + 1) % self.cfg.capacity
        self.size = min(self.size + 1, self.cfg.capacity)
        return m

    def sample(self, batch, rng):
        """Draw a batch; bumps each drawn entry's replay counter.

        Returns a dict with the transition arrays, normalized importance
        weights, slot indices, and staleness tokens for update_priorities.
        """
        if self.size == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        if self.cfg.mode == "uniform":
            idx = rng.integers(0, self.size, size=batch)
            weights = np.ones(batch)
        else:
            total = self.tree.total
            # stratified: one draw inside each of `batch` equal segments
            u = rng.uniform(0.0, 1.0, size=batch)
            prefix = total * (np.arange(batch) + u) / batch
            idx = self.tree.find(prefix)
            idx = np.minimum(idx, self.size - 1)
            probs = self.tree.values(idx) / total
            weights = (self.size * probs) ** (-self.cfg.beta2)
            weights = weights / weights.max()
        np.add.at(self.replay_count, idx, 1)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "weights": weights,
            "indices": idx,
            "stamps": self.stamps[idx],
        }

    def update_priorities(self, indices, td_abs, stamps=None):
        """Refresh priorities after a learning step.

        Entries overwritten since sampling (stamp mismatch) are skipped
        and counted. In uniform mode this is a no-op.
        """
        if self.cfg.mode == "uniform":
            return
        idx = np.asarray(indices, dtype=np.int64)
        td = np.abs(np.asarray(td_abs, dtype=float))
        if stamps is not None:
            ok = np.asarray(stamps) == self.stamps[idx]
            self.stale_updates += int(np.sum(~ok))
            idx, td = idx[ok], td[ok]
        if idx.size == 0:
            return
        # duplicates in a batch: keep the last update for each slot
        rev_uniq, pos = np.unique(idx[::-1], return_index=True)
        td_last = td[::-1][pos]
        if self.cfg.mode == "per":
            p = td_last + self.cfg.eps_per
        else:
            decay = self.cfg.mu ** self.replay_count[rev_uniq]
            p = decay * td_last + self.cfg.eps_fresh
        self.priority[rev_uniq] = p
        self.tree.update(rev_uniq, p ** self.cfg.beta1)

    def stats(self):
        if self.size == 0:
            return 0, 1.0, 0.0
        return (self.size, self.max_priority,
                float(self.replay_count[:self.size].mean()))

    # --- snapshots ---------------------------------------------------------

    def save(self, path):
        np.savez_compressed(
            path, version=SNAPSHOT_VERSION, mode=self.cfg.mode,
            capacity=self.cfg.capacity, beta1=self.cfg.beta1,
            beta2=self.cfg.beta2, mu=self.cfg.mu, eps_per=self.cfg.eps_per,
            eps_fresh=self.cfg.eps_fresh, cursor=self.cursor, size=self.size,
            stale_updates=self.stale_updates, states=self.states,
            actions=self.actions, rewards=self.rewards,
            next_states=self.next_states, priority=self.priority,
            replay_count=self.replay_count, stamps=self.stamps)

    @classmethod
    def load(cls, path):
        try:
            with np.load(path, allow_pickle=False) as z:
                if int(z["version"]) != SNAPSHOT_VERSION:
                    raise CorruptSnapshot(
                        f"snapshot version {z['version']} != {SNAPSHOT_VERSION}")
                cfg = BufferConfig(
                    capacity=int(z["capacity"]), mode=str(z["mode"]),
                    beta1=float(z["beta1"]), beta2=float(z["beta2"]),
                    mu=float(z["mu"]), eps_per=float(z["eps_per"]),
                    eps_fresh=float(z["eps_fresh"]))
                buf = cls(cfg, z["states"].shape[1], z["actions"].shape[1])
                buf.states = z["states"]
                buf.actions = z["actions"]
                buf.rewards = z["rewards"]
                buf.next_states = z["next_states"]
                buf.priority = z["priority"]
                buf.replay_count = z["replay_count"]
                buf.stamps = z["stamps"]
                buf.cursor = int(z["cursor"])
                buf.size = int(z["size"])
                buf.stale_updates = int(z["stale_updates"])
        except (KeyError, OSError, ValueError) as err:
            if isinstance(err, CorruptSnapshot):
                raise
            raise CorruptSnapshot(f"unreadable buffer snapshot {path}: {err}")
        if buf.tree is not None and buf.size:
            live = np.arange(buf.size)
            buf.tree.update(live, buf.priority[live] ** cfg.beta1)
        return buf
