"""Experiment orchestration and persistence.

Every command writes plain files under an output directory (argument,
else the VREDGE_OUT_DIR environment variable, else ./vredge-out): per-slot
and per-round CSVs, a summary JSON whose aggregates are recomputable from
the CSVs, agent/buffer checkpoints, comparison and sweep tables, and
train-step timing tables. Reals are serialized with 9 significant digits;
wall-clock numbers stay out of the CSVs so equal (config, seed) runs
produce byte-identical metric files.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np

from .agents import DdpgAgent, LEARNING_VARIANTS, RunResult, VARIANTS, \
    run_continual
from .config import SWEEPABLE_KEYS, ConfigError, SimConfig
from .gaze import AttentionRule, attention_stream, load_corpus, \
    write_attention_csv

FINAL_WINDOW_ROUNDS = 50        # aggregation window for comparisons


class UnknownParameter(ValueError):
    """Sweep over a key that is not in the sweepable set."""


def fmt(x):
    """9-significant-digit rendering used in every CSV."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.9g}"


def resolve_out_dir(out_dir=None):
    path = Path(out_dir or os.environ.get("VREDGE_OUT_DIR") or "vredge-out")
    path.mkdir(parents=True, exist_ok=True)
    return path

def load_config(config=None, preset=None) -> SimConfig:
    if config and preset:
        raise ConfigError("give either a config file or a preset, not both")
    if config:
        return SimConfig.from_file(config)
    return SimConfig.preset(preset or "paper-table1")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_slot_csv(path, result: RunResult):
    k = result.cfg.num_users
    s = result.schedule.slots_per_round
    header = ["t", "round"]
    for u in range(k):
        header += [f"u{u}_t_down_s", f"u{u}_t_render_s", f"u{u}_t_total_s",
                   f"u{u}_delivered", f"u{u}_qoe"]
    header += ["hfqoe", "reward", "sum_qoe", "qoe_violations",
               "fair_violation"]
    cap = result.cfg.fail_latency_cap_mult * result.cfg.latency_budget_s
    rows = []
    for t in range(result.num_slots):
        row = [t, t // s]
        for u in range(k):
            row += [min(result.slot_download[t, u], cap),
                    min(result.slot_render[t, u], cap),
                    min(result.slot_total[t, u], cap),
                    result.slot_delivered[t, u],
                    result.slot_qoe[t, u]]
        row += [result.slot_hfqoe[t], result.slot_reward[t],
                result.slot_sum_qoe[t], result.slot_q_qoe[t],
                result.slot_q_hf[t]]
        rows.append(row)
    _write_csv(path, header, rows)


def write_round_csv(path, result: RunResult):
    table = result.round_table()
    cols = list(table)
    rows = zip(*(table[c] for c in cols))
    _write_csv(path, cols, rows)


def final_window(result: RunResult, rounds=FINAL_WINDOW_ROUNDS):
    """Aggregates over the last `rounds` DT rounds (or all, if fewer)."""
    table = result.round_table()
    n = min(rounds, result.schedule.rounds)
    sl = slice(-n, None)
    return {
        "window_rounds": n,
        "mean_reward": float(table["mean_reward"][sl].mean()),
        "mean_qoe": float(table["mean_qoe"][sl].mean()),
        "mean_latency_s": float(table["mean_latency_s"][sl].mean()),
        "success_rate": float(table["success_rate"][sl].mean()),
        "hfqoe": float(table["hfqoe"][-1]),
    }


def summarize(result: RunResult):
    table = result.round_table()
    return {
        "variant": result.variant,
        "seed": result.seed,
        "rounds": result.schedule.rounds,
        "slots_per_round": result.schedule.slots_per_round,
        "num_users": result.cfg.num_users,
        "overall": {
            "mean_reward": float(result.slot_reward.mean()),
            "mean_qoe": float(result.slot_qoe.mean()),
            "mean_latency_s": float(result.capped_total().mean()),
            "success_rate": float(result.slot_delivered.mean()),
            "final_hfqoe": float(result.slot_hfqoe[-1]),
            "return_estimate": result.return_estimate,
        },
        "final_window": final_window(result),
        "per_round_mean_reward_first": float(table["mean_reward"][0]),
        "per_round_mean_reward_last": float(table["mean_reward"][-1]),
        "training": {
            "train_steps": result.train_steps,
            "skipped_steps": result.skipped_steps,
            "stale_priority_updates": result.stale_updates,
            "train_time_mean_ms": result.train_time_mean_ms,
            "train_time_std_ms": result.train_time_std_ms,
        },
        "counters": {**result.env_counters,
                     "state_clip_warnings": result.clip_warnings},
    }


def cmd_run(cfg: SimConfig, variant, seed, rounds, out_dir=None,
            gaze_dir=None, keep_agent=True):
    """Execute one run and persist slot/round CSVs, summary, checkpoints."""
    out = resolve_out_dir(out_dir)
    traces = load_corpus(gaze_dir) if gaze_dir else None
    result = run_continual(cfg, variant, rounds, seed, traces=traces,
                           keep_agent=keep_agent)
    stem = f"{variant}-seed{seed}"
    write_slot_csv(out / f"{stem}-slots.csv", result)
    write_round_csv(out / f"{stem}-rounds.csv", result)
    (out / f"{stem}-summary.json").write_text(
        json.dumps(summarize(result), indent=2, sort_keys=True) + "\n")
    if result.agent is not None:
        result.agent.save(out / f"{stem}-agent.npz")
        result.agent.buffer.save(out / f"{stem}-buffer.npz")
    return result


def cmd_compare(cfg: SimConfig, variants, seeds, rounds, out_dir=None,
                gaze_dir=None):
    """Cross product of variants and seeds; one aggregate row per variant,
    sorted by final-window mean reward (descending)."""
    out = resolve_out_dir(out_dir)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    traces = load_corpus(gaze_dir) if gaze_dir else None
    per_variant = {}
    for variant in variants:
        windows = []
        for seed in seeds:
            result = run_continual(cfg, variant, rounds, seed, traces=traces)
            windows.append((seed, final_window(result),
                            result.train_time_mean_ms))
        per_variant[variant] = windows
    rows = []
    for variant, windows in per_variant.items():
        rewards = np.array([w["mean_reward"] for _, w, _ in windows])
        rows.append({
            "variant": variant,
            "seeds": len(windows),
            "mean_reward": float(rewards.mean()),
            "std_reward": float(rewards.std()),
            "mean_qoe": float(np.mean([w["mean_qoe"] for _, w, _ in windows])),
            "mean_latency_s": float(np.mean(
                [w["mean_latency_s"] for _, w, _ in windows])),
            "success_rate": float(np.mean(
                [w["success_rate"] for _, w, _ in windows])),
            "hfqoe": float(np.mean([w["hfqoe"] for _, w, _ in windows])),
            "train_time_mean_ms": float(np.mean([ms for _, _, ms in windows])),
        })
    rows.sort(key=lambda r: r["mean_reward"], reverse=True)
    cols = list(rows[0])
    _write_csv(out / "compare.csv", cols, [[r[c] for c in cols] for r in rows])
    detail = {v: [{"seed": s, **w} for s, w, _ in ws]
              for v, ws in per_variant.items()}
    (out / "compare.json").write_text(
        json.dumps({"rounds": rounds, "table": rows, "per_seed": detail},
                   indent=2, sort_keys=True) + "\n")
    return rows


def _apply_sweep_value(cfg: SimConfig, parameter, value):
    if parameter == "num_users":
        return cfg.with_users(int(value))
    return cfg.updated(**{parameter: value})


def cmd_sweep(cfg: SimConfig, parameter, values, variant, seeds, rounds,
              out_dir=None):
    """Re-run one variant across a parameter's values; one row per value."""
    if parameter not in SWEEPABLE_KEYS:
        raise UnknownParameter(
            f"'{parameter}' is not sweepable (choose from {SWEEPABLE_KEYS})")
    out = resolve_out_dir(out_dir)
    rows = []
    for value in values:
        swept = _apply_sweep_value(cfg, parameter, value)
        agg = []
        for seed in seeds:
            result = run_continual(swept, variant, rounds, seed)
            win = final_window(result)
            # raw (uncapped) mean so rate-side rescalings show up exactly
            win["mean_download_s"] = float(result.slot_download.mean())
            agg.append(win)
        rows.append({
            "value": value,
            "mean_reward": float(np.mean([w["mean_reward"] for w in agg])),
            "mean_qoe": float(np.mean([w["mean_qoe"] for w in agg])),
            "mean_latency_s": float(np.mean(
                [w["mean_latency_s"] for w in agg])),
            "mean_download_s": float(np.mean(
                [w["mean_download_s"] for w in agg])),
            "success_rate": float(np.mean([w["success_rate"] for w in agg])),
            "hfqoe": float(np.mean([w["hfqoe"] for w in agg])),
        })
    cols = list(rows[0])
    path = out / f"sweep-{parameter}-{variant}.csv"
    _write_csv(path, cols, [[r[c] for c in cols] for r in rows])
    return rows


def _prefilled_agent(cfg: SimConfig, variant, seed):
    """Agent with a full replay buffer of synthetic transitions."""
    ss = np.random.SeedSequence(seed)
    rng_init, rng_fill = (np.random.default_rng(s) for s in ss.spawn(2))
    agent = DdpgAgent(cfg, variant, rng_init)
    cap = cfg.buffer_capacity
    states = rng_fill.uniform(0.0, 1.0, (cap, cfg.state_dim))
    nexts = rng_fill.uniform(0.0, 1.0, (cap, cfg.state_dim))
    actions = rng_fill.uniform(0.0, 1.0, (cap, cfg.action_dim))
    rewards = rng_fill.normal(50.0, 10.0, cap)
    for i in range(cap):
        agent.buffer.push(states[i], actions[i], rewards[i], nexts[i])
    return agent


def cmd_bench_optime(cfg: SimConfig, variants, steps, seed=0, out_dir=None,
                     user_counts=None, blocks=6, warmup=100):
    """Mean per-train-step wall time per (variant, K).

    Measurement is block-interleaved across the benched agents so slow
    drift (thermal, other tenants) cancels instead of biasing one variant;
    `warmup` uncounted steps run first per agent.
    """
    out = resolve_out_dir(out_dir)
    user_counts = list(user_counts or [cfg.num_users])
    jobs = []
    for variant in variants:
        if variant not in LEARNING_VARIANTS:
            raise ValueError(f"bench-optime needs a learning variant, "
                             f"got {variant!r}")
        for k in user_counts:
            jobs.append((variant, k,
                         _prefilled_agent(cfg.with_users(k), variant, seed)))
    rngs = {id(a): np.random.default_rng(seed) for _, _, a in jobs}
    for _, _, agent in jobs:
        for _ in range(warmup):
            agent.train_step(rngs[id(agent)])
    block_steps = max(1, steps // blocks)
    block_means = {(v, k): [] for v, k, _ in jobs}
    for _ in range(blocks):
        for variant, k, agent in jobs:
            rng = rngs[id(agent)]
            tic = time.perf_counter()
            for _ in range(block_steps):
                agent.train_step(rng)
            dt = time.perf_counter() - tic
            block_means[(variant, k)].append(dt / block_steps * 1e3)
    rows = []
    for variant, k, _ in jobs:
        ms = np.array(block_means[(variant, k)])
        rows.append({"variant": variant, "num_users": k,
                     "mean_ms": float(ms.mean()), "std_ms": float(ms.std()),
                     "steps": block_steps * blocks})
    cols = list(rows[0])
    _write_csv(out / "bench-optime.csv", cols,
               [[r[c] for c in cols] for r in rows])
    return rows


def cmd_ingest(cfg: SimConfig, out_dir=None, slots=1000, seed=0,
               gaze_dir=None, synthetic=False):
    """Produce the per-slot attention-count CSV from traces or synthesis."""
    out = resolve_out_dir(out_dir)
    traces = None
    if not synthetic:
        if gaze_dir is None:
            raise ConfigError("ingest needs a gaze directory or --synthetic")
        traces = load_corpus(gaze_dir)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rule = AttentionRule(cfg.attn_inner_radius, cfg.attn_mid_radius)
    stream = attention_stream(slots, cfg.num_users, cfg.frames_per_gop, rule,
                              cfg.grid_cols, cfg.grid_rows, rng,
                              traces=traces, step_scale=cfg.synth_step_scale)
    path = out / "attention.csv"
    write_attention_csv(path, stream)
    return path
