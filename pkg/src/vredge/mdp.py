"""RL boundary: state vectors, action decoding, reward.

The agent sees a normalized state built from twin-side observations (two
slots of attention counts and QoE per user, last rates/CPU/latencies, the
fairness score) and emits raw actions in [0,1]^4K that decode onto the
constrained allocation: per-level resolutions inside their boxes plus
bandwidth and CPU shares that spend the full budgets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .env import SlotResult, nominal_user_rates


@dataclass
class ActionVector:
    """Decoded allocation; satisfies the budget equalities by construction."""
    res_frac: np.ndarray        # (K, 3), levels 1..3
    bandwidth_hz: np.ndarray    # (K,), sums to the bandwidth budget
    cpu_hz: np.ndarray          # (K,), sums to the CPU budget


@dataclass
class RewardComponents:
    sum_qoe: float
    q_qoe: int                  # users below the QoE threshold
    q_hf: int                   # 1 if fairness fell below its threshold
    w1: float
    w2: float

    @property
    def reward(self):
        return self.sum_qoe - self.w1 * self.q_qoe - self.w2 * self.q_hf


def decode_action(raw, cfg: SimConfig) -> ActionVector:
    """Map raw [0,1] components onto the solution set.

    Layout per user: (x_r1, x_r2, x_bw, x_cpu). Resolutions scale into
    their half-open boxes (eps-shrunk at the top); bandwidth/CPU become
    shares of the full budget, eps-shifted so an all-zero vector still
    splits evenly.
    """
    k = cfg.num_users
    x = np.asarray(raw, dtype=float).reshape(k, 4)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("raw action components must lie in [0, 1]")
    shrink = 1.0 - cfg.decode_eps_cap
    r1 = cfg.res_min_l1 + x[:, 0] * (cfg.res_max_l1 - cfg.res_min_l1) * shrink
    r2 = cfg.res_min_l2 + x[:, 1] * (cfg.res_max_l2 - cfg.res_min_l2) * shrink
    res = np.stack([r1, r2, np.full(k, cfg.res_l3)], axis=1)
    bw_w = x[:, 2] + cfg.share_eps
    cpu_w = x[:, 3] + cfg.share_eps
    return ActionVector(
        res_frac=res,
        bandwidth_hz=cfg.bw_total_hz * bw_w / bw_w.sum(),
        cpu_hz=cfg.cpu_total_hz * cpu_w / cpu_w.sum())


def reward(qoe_per_user, hfqoe, cfg: SimConfig) -> RewardComponents:
    q = np.asarray(qoe_per_user, dtype=float)
    return RewardComponents(
        sum_qoe=float(q.sum()),
        q_qoe=int(np.sum(q < cfg.qoe_min)),
        q_hf=int(hfqoe < cfg.hfqoe_min),
        w1=cfg.penalty_qoe,
        w2=cfg.penalty_fair)


def discounted_return(rewards, gamma):
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        return 0.0
    return float(np.sum(r * gamma ** np.arange(r.size)))


# ---------------------------------------------------------------------------
# state construction

def normalize_state(cfg: SimConfig, prev_profiles, prev_qoe, cur_profiles,
                    cur_qoe, rates, cpu_hz, t_down, t_render, t_total, hfqoe):
    """Assemble and scale the observation vector, clipped into [0,1].

    Per user: previous-slot twin (3 counts + QoE), current twin (same),
    then last rate, CPU share and the three latency figures; one trailing
    fairness entry. Length 13K+1.
    """
    k = cfg.num_users
    n = cfg.num_tiles
    per_user = np.column_stack([
        np.asarray(prev_profiles, float) / n,
        np.asarray(prev_qoe, float) / cfg.qoe_scale,
        np.asarray(cur_profiles, float) / n,
        np.asarray(cur_qoe, float) / cfg.qoe_scale,
        np.asarray(rates, float) / cfg.rate_scale,
        np.asarray(cpu_hz, float) / cfg.cpu_total_hz,
        np.asarray(t_down, float) / cfg.latency_scale,
        np.asarray(t_render, float) / cfg.latency_scale,
        np.asarray(t_total, float) / cfg.latency_scale,
    ])
    vec = np.concatenate([per_user.ravel(), [hfqoe]])
    assert vec.size == 13 * k + 1
    return np.clip(vec, 0.0, 1.0)


def denormalize_state(cfg: SimConfig, state):
    """Inverse of normalize_state for in-range values (testing aid)."""
    k = cfg.num_users
    per_user = np.asarray(state[:-1], dtype=float).reshape(k, 13)
    return {
        "prev_profiles": per_user[:, 0:3] * cfg.num_tiles,
        "prev_qoe": per_user[:, 3] * cfg.qoe_scale,
        "cur_profiles": per_user[:, 4:7] * cfg.num_tiles,
        "cur_qoe": per_user[:, 7] * cfg.qoe_scale,
        "rates": per_user[:, 8] * cfg.rate_scale,
        "cpu_hz": per_user[:, 9] * cfg.cpu_total_hz,
        "t_down": per_user[:, 10] * cfg.latency_scale,
        "t_render": per_user[:, 11] * cfg.latency_scale,
        "t_total": per_user[:, 12] * cfg.latency_scale,
        "hfqoe": float(state[-1]),
    }


class StateBuilder:
    """Tracks the twin observations needed to emit each slot's state."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.clip_warnings = 0
        self._prev_profiles = None
        self._prev_qoe = None
        self._cur_profiles = None
        self._cur_qoe = None

    def initial_state(self, first_profiles):
        """State before any step: twin windows coincide, nominal resources."""
        cfg = self.cfg
        k = cfg.num_users
        zeros = np.zeros(k)
        self._prev_profiles = np.asarray(first_profiles, float)
        self._prev_qoe = zeros.copy()
        self._cur_profiles = self._prev_profiles.copy()
        self._cur_qoe = zeros.copy()
        return self._emit(
            rates=nominal_user_rates(cfg),
            cpu_hz=np.full(k, cfg.cpu_total_hz / k),
            t_down=zeros, t_render=zeros, t_total=zeros, hfqoe=1.0)

    def next_state(self, result: SlotResult, next_profiles):
        """State after observing `result`, deciding for the next slot."""
        self._prev_profiles = self._cur_profiles
        self._prev_qoe = self._cur_qoe
        self._cur_profiles = np.asarray(next_profiles, float)
        self._cur_qoe = result.quality.qoe
        lat = result.latency
        return self._emit(
            rates=result.rates, cpu_hz=result.cpu_hz,
            t_down=lat.download_s, t_render=lat.render_s,
            t_total=lat.total_s, hfqoe=result.hfqoe)

    def _emit(self, rates, cpu_hz, t_down, t_render, t_total, hfqoe):
        cfg = self.cfg
        raw = np.concatenate([
            np.asarray(rates, float) / cfg.rate_scale,
            np.asarray(t_down, float) / cfg.latency_scale,
            np.asarray(t_render, float) / cfg.latency_scale,
            np.asarray(t_total, float) / cfg.latency_scale,
            np.asarray(self._cur_qoe, float) / cfg.qoe_scale,
            np.asarray(self._prev_qoe, float) / cfg.qoe_scale,
        ])
        self.clip_warnings += int(np.sum(raw > 1.0))
        return normalize_state(
            cfg, self._prev_profiles, self._prev_qoe, self._cur_profiles,
            self._cur_qoe, rates, cpu_hz, t_down, t_render, t_total, hfqoe)
