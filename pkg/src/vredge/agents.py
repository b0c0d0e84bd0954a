"""Actor-critic trainer, its replay ablations, and the non-learning
baselines, plus the continual round/slot run loop.

Variants: `fper` (freshness-prioritized replay), `per` (plain prioritized
replay), `cddpg` (uniform replay, trained continually), `offline_ddpg`
(uniform replay, trained for a fixed number of rounds then frozen),
`avg_alloc` (even resource shares, feasibility-scanned resolutions) and
`fixed_2k` (even shares, constant 2K tiles).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .env import EdgeEnv, nominal_user_rates
from .gaze import AttentionRule, attention_stream
from .mdp import ActionVector, StateBuilder, decode_action, discounted_return, \
    reward
from .nets import Adam, Mlp, NonFiniteGradient, grad_list, mlp_spec, \
    soft_update
from .replay import BufferConfig, ReplayBuffer

LEARNING_VARIANTS = ("fper", "per", "cddpg", "offline_ddpg")
BASELINE_VARIANTS = ("avg_alloc", "fixed_2k")
VARIANTS = LEARNING_VARIANTS + BASELINE_VARIANTS

_BUFFER_MODE = {"fper": "fper", "per": "per",
                "cddpg": "uniform", "offline_ddpg": "uniform"}

# 2K-equivalent tile, same pixel accounting as the 4K full-size tile
TILE_BITS_2K = 2560 * 1440 // 16 * 8 * 3


@dataclass(frozen=True)
class ContinualSchedule:
    slots_per_round: int
    rounds: int
    offline_rounds: int = 1000

    def __post_init__(self):
        if self.slots_per_round < 1 or self.rounds < 1:
            raise ValueError("schedule needs positive rounds and slot count")


class DdpgAgent:
    """Continual DDPG with a pluggable replay mode."""

    def __init__(self, cfg: SimConfig, variant, rng):
        if variant not in LEARNING_VARIANTS:
            raise ValueError(f"not a learning variant: {variant!r}")
        self.cfg = cfg
        self.variant = variant
        sdim, adim = cfg.state_dim, cfg.action_dim
        self.state_dim = sdim
        self.action_dim = adim
        self.actor = Mlp(mlp_spec(sdim, adim, cfg.hidden_width,
                                  cfg.hidden_layers, "sigmoid",
                                  final_scale=1e-3), rng)
        self.critic = Mlp(mlp_spec(sdim + adim, 1, cfg.hidden_width,
                                   cfg.hidden_layers, "identity"), rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.opt_actor = Adam(self.actor.params(), cfg.lr_actor)
        self.opt_critic = Adam(self.critic.params(), cfg.lr_critic)
        self.buffer = ReplayBuffer(
            BufferConfig.from_sim(cfg, _BUFFER_MODE[variant]), sdim, adim)
        self.gamma = cfg.discount
        self.tau = cfg.target_tau
        self.batch = cfg.batch_size
        self.skipped_steps = 0
        self.train_steps = 0

    def act(self, state, explore_std, rng):
        """Policy output with optional Gaussian exploration, in [0,1]."""
        a = self.actor.forward(state)[0]
        if explore_std > 0.0:
            a = a + rng.normal(0.0, explore_std, size=a.shape)
        return np.clip(a, 0.0, 1.0)

    def td_target(self, rewards, next_states):
        a_next = self.actor_target.forward(next_states)
        q_next = self.critic_target.forward(
            np.concatenate([np.atleast_2d(next_states), a_next], axis=1))
        return np.asarray(rewards, dtype=float)[:, None] + self.gamma * q_next

    def td_error(self, y, states, actions, cache=False):
        sa = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)],
                            axis=1)
        q = self.critic.forward(sa, cache=cache)
        return np.asarray(y, dtype=float).reshape(q.shape) - q

    def train_step(self, rng):
        """One weighted critic + actor update off a sampled mini-batch."""
        batch = self.buffer.sample(self.batch, rng)
        b = len(batch["rewards"])
        y = self.td_target(batch["rewards"], batch["next_states"])
        delta = self.td_error(y, batch["states"], batch["actions"], cache=True)
        w = batch["weights"][:, None]
        critic_loss = float(np.mean(w * delta * delta))

        # critic descends the weighted squared TD error
        up_critic = -2.0 * w * delta / b
        grads, _ = self.critic.backward(up_critic)
        try:
            self.opt_critic.step(self.critic.params(), grad_list(grads))
        except NonFiniteGradient:
            self.skipped_steps += 1
            return {"critic_loss": critic_loss, "mean_abs_td": float("nan"),
                    "skipped": True}

        # actor ascends the weighted critic value of its own actions
        a_pi = self.actor.forward(batch["states"], cache=True)
        sa_pi = np.concatenate([batch["states"], a_pi], axis=1)
        self.critic.forward(sa_pi, cache=True)
        _, dsa = self.critic.backward(w / b)
        da = dsa[:, self.state_dim:]
        actor_grads, _ = self.actor.backward(da)
        try:
            self.opt_actor.step(self.actor.params(),
                                [-g for g in grad_list(actor_grads)])
        except NonFiniteGradient:
            self.skipped_steps += 1
            return {"critic_loss": critic_loss, "mean_abs_td": float("nan"),
                    "skipped": True}

        self.buffer.update_priorities(batch["indices"],
                                      np.abs(delta[:, 0]), batch["stamps"])
        soft_update(self.actor_target, self.actor, self.tau)
        soft_update(self.critic_target, self.critic, self.tau)
        self.train_steps += 1
        return {"critic_loss": critic_loss,
                "mean_abs_td": float(np.mean(np.abs(delta))),
                "skipped": False}

    # --- checkpointing ----------------------------------------------------

    def net_arrays(self):
        out = {}
        out.update(self.actor.arrays("actor_"))
        out.update(self.critic.arrays("critic_"))
        out.update(self.actor_target.arrays("actor_t_"))
        out.update(self.critic_target.arrays("critic_t_"))
        out.update(self.opt_actor.arrays("adam_a_"))
        out.update(self.opt_critic.arrays("adam_c_"))
        return out

    def save(self, path):
        np.savez_compressed(path, variant=self.variant, **self.net_arrays())

    def restore_arrays(self, data):
        self.actor = Mlp.from_arrays(self.actor.spec, data, "actor_")
        self.critic = Mlp.from_arrays(self.critic.spec, data, "critic_")
        self.actor_target = Mlp.from_arrays(self.actor.spec, data, "actor_t_")
        self.critic_target = Mlp.from_arrays(self.critic.spec, data, "critic_t_")
        self.opt_actor.restore(data, "adam_a_")
        self.opt_critic.restore(data, "adam_c_")


# ---------------------------------------------------------------------------
# non-learning baselines

def baseline_fixed_2k(cfg: SimConfig) -> ActionVector:
    """Even shares, every attention level streamed at the fixed 2K tile."""
    frac = TILE_BITS_2K / cfg.tile_bits_full
    if frac > 1.0:
        raise ValueError("fixed-2K tile exceeds the configured full tile size")
    k = cfg.num_users
    return ActionVector(
        res_frac=np.full((k, 3), frac),
        bandwidth_hz=np.full(k, cfg.bw_total_hz / k),
        cpu_hz=np.full(k, cfg.cpu_total_hz / k))


def baseline_average_allocation(profiles, cfg: SimConfig) -> ActionVector:
    """Even shares; per user, the best resolution pair on an 8x8 grid that
    the twin predicts (unit gain, zero bias) to meet the latency budget.

    Falls back to the range minima when nothing is predicted feasible.
    """
    k = cfg.num_users
    share_f = cfg.cpu_total_hz / k
    rates = nominal_user_rates(cfg)
    span = 1.0 - cfg.decode_eps_cap
    g1 = cfg.res_min_l1 + (cfg.res_max_l1 - cfg.res_min_l1) * span \
        * np.arange(8) / 7.0
    g2 = cfg.res_min_l2 + (cfg.res_max_l2 - cfg.res_min_l2) * span \
        * np.arange(8) / 7.0
    r1m, r2m = np.meshgrid(g1, g2, indexing="ij")
    pairs = np.stack([r1m.ravel(), r2m.ravel(),
                      np.full(64, cfg.res_l3)], axis=1)      # (64, 3)
    bits = pairs * cfg.tile_bits_full

    res = np.empty((k, 3))
    profiles = np.asarray(profiles, dtype=float)
    for u in range(k):
        g = profiles[u] * bits * cfg.frames_per_gop          # (64, 3)
        total = g.sum(axis=1)
        t_down = total / (cfg.compression_ratio * rates[u])
        render_bits = g / cfg.compression_ratio if cfg.prerender_compression else g
        t_render = (render_bits * cfg.cycles_per_bit).sum(axis=1) / share_f
        feasible = t_down + t_render <= cfg.latency_budget_s
        if not feasible.any():
            res[u] = (g1[0], g2[0], cfg.res_l3)
            continue
        score = (np.array([1.0, 2.0, 3.0]) * profiles[u] / cfg.num_tiles
                 * np.log(bits / cfg.tile_bits_ref)).sum(axis=1)
        score = np.where(feasible, score, -np.inf)
        res[u] = pairs[int(np.argmax(score))]
    return ActionVector(
        res_frac=res,
        bandwidth_hz=np.full(k, cfg.bw_total_hz / k),
        cpu_hz=np.full(k, share_f))


# ---------------------------------------------------------------------------
# run loop

@dataclass
class RunResult:
    """Per-slot records plus run-level diagnostics for one continual run."""
    variant: str
    seed: int
    schedule: ContinualSchedule
    cfg: SimConfig
    slot_download: np.ndarray       # (T, K) seconds, may hold inf
    slot_render: np.ndarray
    slot_total: np.ndarray
    slot_delivered: np.ndarray      # (T, K) bool
    slot_qoe: np.ndarray            # (T, K)
    slot_reward: np.ndarray         # (T,)
    slot_sum_qoe: np.ndarray
    slot_q_qoe: np.ndarray          # (T,) ints
    slot_q_hf: np.ndarray
    slot_hfqoe: np.ndarray
    env_counters: dict
    clip_warnings: int
    train_steps: int
    skipped_steps: int
    stale_updates: int
    train_time_mean_ms: float
    train_time_std_ms: float
    return_estimate: float          # discounted return over the whole run
    freeze_blob: bytes | None = None
    final_blob: bytes | None = None
    agent: DdpgAgent | None = field(default=None, repr=False)

    @property
    def num_slots(self):
        return len(self.slot_reward)

    def capped_total(self):
        cap = self.cfg.fail_latency_cap_mult * self.cfg.latency_budget_s
        return np.minimum(self.slot_total, cap)

    def round_table(self):
        """Per-round aggregate columns, each an array of length rounds."""
        r = self.schedule.rounds
        s = self.schedule.slots_per_round
        k = self.cfg.num_users
        capped = self.capped_total().reshape(r, s, k)
        return {
            "round": np.arange(r),
            "mean_reward": self.slot_reward.reshape(r, s).mean(axis=1),
            "mean_qoe": self.slot_qoe.reshape(r, s, k).mean(axis=(1, 2)),
            "mean_latency_s": capped.mean(axis=(1, 2)),
            "success_rate": self.slot_delivered.reshape(r, s, k)
                                .mean(axis=(1, 2)),
            "hfqoe": self.slot_hfqoe.reshape(r, s)[:, -1],
            "qoe_violations": self.slot_q_qoe.reshape(r, s).sum(axis=1),
            "fair_violations": self.slot_q_hf.reshape(r, s).sum(axis=1),
        }


def _agent_blob(agent: DdpgAgent):
    return agent.actor.to_bytes() + agent.critic.to_bytes()


def run_continual(cfg: SimConfig, variant, schedule, seed, traces=None,
                  keep_agent=False) -> RunResult:
    """Execute one run: per round refresh twin biases, then step the slots.

    `schedule` may be a ContinualSchedule or a plain round count. With the
    same (cfg, variant, schedule, seed) the result is bit-reproducible.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r} (have {VARIANTS})")
    if isinstance(schedule, int):
        schedule = ContinualSchedule(cfg.slots_per_round, schedule,
                                     cfg.offline_rounds)
    ss = np.random.SeedSequence(seed)
    rng_env, rng_attn, rng_init, rng_expl, rng_buf = \
        (np.random.default_rng(s) for s in ss.spawn(5))

    slots = schedule.rounds * schedule.slots_per_round
    rule = AttentionRule(cfg.attn_inner_radius, cfg.attn_mid_radius)
    attn = attention_stream(slots, cfg.num_users, cfg.frames_per_gop, rule,
                            cfg.grid_cols, cfg.grid_rows, rng_attn,
                            traces=traces, step_scale=cfg.synth_step_scale)
    env = EdgeEnv(cfg, attn, rng_env)
    builder = StateBuilder(cfg)
    learning = variant in LEARNING_VARIANTS
    agent = DdpgAgent(cfg, variant, rng_init) if learning else None

    k = cfg.num_users
    t_down = np.empty((slots, k))
    t_render = np.empty((slots, k))
    t_total = np.empty((slots, k))
    delivered = np.empty((slots, k), dtype=bool)
    qoe_log = np.empty((slots, k))
    rew = np.empty(slots)
    sum_qoe = np.empty(slots)
    q_qoe = np.empty(slots, dtype=np.int64)
    q_hf = np.empty(slots, dtype=np.int64)
    hf_log = np.empty(slots)
    step_times = []

    std = cfg.explore_std
    state = builder.initial_state(env.current_profiles())
    freeze_blob = None
    t = 0
    for rnd in range(schedule.rounds):
        env.begin_round()
        training = learning and (variant != "offline_ddpg"
                                 or rnd < schedule.offline_rounds)
        if variant == "offline_ddpg" and rnd == schedule.offline_rounds \
                and freeze_blob is None and agent is not None:
            freeze_blob = _agent_blob(agent)
        for _ in range(schedule.slots_per_round):
            raw = None
            if variant == "fixed_2k":
                action = baseline_fixed_2k(cfg)
            elif variant == "avg_alloc":
                action = baseline_average_allocation(env.current_profiles(), cfg)
            else:
                explore = std if training else 0.0
                raw = agent.act(state, explore, rng_expl)
                action = decode_action(raw, cfg)
            result = env.step(action)
            parts = reward(result.quality.qoe, result.hfqoe, cfg)
            next_state = builder.next_state(result, env.current_profiles())

            if training:
                agent.buffer.push(state, raw, parts.reward, next_state)
                if len(agent.buffer) >= agent.batch:
                    tic = time.perf_counter()
                    agent.train_step(rng_buf)
                    step_times.append(time.perf_counter() - tic)

            lat = result.latency
            t_down[t] = lat.download_s
            t_render[t] = lat.render_s
            t_total[t] = lat.total_s
            delivered[t] = lat.delivered
            qoe_log[t] = result.quality.qoe
            rew[t] = parts.reward
            sum_qoe[t] = parts.sum_qoe
            q_qoe[t] = parts.q_qoe
            q_hf[t] = parts.q_hf
            hf_log[t] = result.hfqoe
            state = next_state
            t += 1
        if training:
            std = max(cfg.explore_floor, std * cfg.explore_decay)

    times = np.array(step_times)
    if times.size > 200:
        times = times[100:]         # drop cold-cache steps from the stats
    return RunResult(
        variant=variant, seed=seed, schedule=schedule, cfg=cfg,
        slot_download=t_down, slot_render=t_render, slot_total=t_total,
        slot_delivered=delivered, slot_qoe=qoe_log, slot_reward=rew,
        slot_sum_qoe=sum_qoe, slot_q_qoe=q_qoe, slot_q_hf=q_hf,
        slot_hfqoe=hf_log, env_counters=dict(env.counters),
        clip_warnings=builder.clip_warnings,
        train_steps=agent.train_steps if agent else 0,
        skipped_steps=agent.skipped_steps if agent else 0,
        stale_updates=agent.buffer.stale_updates if agent else 0,
        train_time_mean_ms=float(times.mean() * 1e3) if times.size else 0.0,
        train_time_std_ms=float(times.std() * 1e3) if times.size else 0.0,
        return_estimate=discounted_return(rew, cfg.discount),
        freeze_blob=freeze_blob,
        final_blob=_agent_blob(agent) if agent else None,
        agent=agent if keep_agent else None)
