import json

import numpy as np
import pytest

from vredge import cli, harness
from vredge.config import ConfigError, SimConfig
from vredge.harness import UnknownParameter, cmd_bench_optime, cmd_compare, \
    cmd_ingest, cmd_run, cmd_sweep, fmt, load_config, resolve_out_dir


def tiny_cfg(**kw):
    base = dict(hidden_width=16, hidden_layers=1, batch_size=4,
                buffer_capacity=64, slots_per_round=5)
    base.update(kw)
    return SimConfig.preset("desk-scale").with_users(2).updated(**base)


def test_fmt_renders_types():
    assert fmt(True) == "1" and fmt(False) == "0"
    assert fmt(np.bool_(True)) == "1"
    assert fmt(7) == "7" and fmt(np.int64(-3)) == "-3"
    assert fmt("fper") == "fper"
    assert fmt(0.15) == "0.15"
    assert fmt(1.0 / 3.0) == "0.333333333"
    assert fmt(1.23456789e8) == "123456789"


def test_resolve_out_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("VREDGE_OUT_DIR", str(tmp_path / "env"))
    assert resolve_out_dir() == tmp_path / "env"
    assert (tmp_path / "env").is_dir()
    assert resolve_out_dir(tmp_path / "arg") == tmp_path / "arg"


def test_load_config_exclusive(tmp_path):
    path = tmp_path / "c.cfg"
    tiny_cfg().to_file(path)
    assert load_config(config=str(path)).num_users == 2
    assert load_config().frames_per_gop == 16       # paper defaults
    with pytest.raises(ConfigError, match="not both"):
        load_config(config=str(path), preset="desk-scale")


def test_cmd_run_outputs_and_determinism(tmp_path):
    cfg = tiny_cfg()
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    res = cmd_run(cfg, "fper", seed=3, rounds=2, out_dir=out_a)
    cmd_run(cfg, "fper", seed=3, rounds=2, out_dir=out_b)
    stem = "fper-seed3"
    for suffix in ("slots.csv", "rounds.csv", "summary.json", "agent.npz",
                   "buffer.npz"):
        assert (out_a / f"{stem}-{suffix}").exists(), suffix
    slots_a = (out_a / f"{stem}-slots.csv").read_text()
    assert slots_a == (out_b / f"{stem}-slots.csv").read_text()
    assert (out_a / f"{stem}-rounds.csv").read_text() \
        == (out_b / f"{stem}-rounds.csv").read_text()
    assert len(slots_a.splitlines()) == 1 + res.num_slots
    rounds_lines = (out_a / f"{stem}-rounds.csv").read_text().splitlines()
    assert len(rounds_lines) == 1 + 2


def test_cmd_run_baseline_writes_no_checkpoints(tmp_path):
    cmd_run(tiny_cfg(), "fixed_2k", seed=0, rounds=1, out_dir=tmp_path)
    assert (tmp_path / "fixed_2k-seed0-slots.csv").exists()
    assert not (tmp_path / "fixed_2k-seed0-agent.npz").exists()


def test_summary_recomputable_from_slot_csv(tmp_path):
    cmd_run(tiny_cfg(), "cddpg", seed=1, rounds=2, out_dir=tmp_path)
    summary = json.loads((tmp_path / "cddpg-seed1-summary.json").read_text())
    lines = (tmp_path / "cddpg-seed1-slots.csv").read_text().splitlines()
    header = lines[0].split(",")
    col = header.index("reward")
    rewards = np.array([float(l.split(",")[col]) for l in lines[1:]])
    assert summary["overall"]["mean_reward"] == \
        pytest.approx(rewards.mean(), rel=1e-6)
    qoe_cols = [i for i, h in enumerate(header)
                if h.startswith("u") and h.endswith("_qoe")]
    qoe = np.array([[float(l.split(",")[i]) for i in qoe_cols]
                    for l in lines[1:]])
    assert summary["overall"]["mean_qoe"] == pytest.approx(qoe.mean(), rel=1e-6)
    assert summary["rounds"] == 2
    assert summary["training"]["train_steps"] > 0


def test_cmd_compare_sorted_and_complete(tmp_path):
    rows = cmd_compare(tiny_cfg(), ["fixed_2k", "avg_alloc"], [0], rounds=2,
                       out_dir=tmp_path)
    rewards = [r["mean_reward"] for r in rows]
    assert rewards == sorted(rewards, reverse=True)
    text = (tmp_path / "compare.csv").read_text().splitlines()
    assert len(text) == 1 + 2
    assert text[0].startswith("variant,seeds,mean_reward")
    detail = json.loads((tmp_path / "compare.json").read_text())
    assert set(detail["per_seed"]) == {"fixed_2k", "avg_alloc"}
    assert len(detail["per_seed"]["fixed_2k"]) == 1


def test_cmd_compare_rejects_unknown_variant(tmp_path):
    with pytest.raises(ValueError, match="unknown variant"):
        cmd_compare(tiny_cfg(), ["fper", "dqn"], [0], 1, out_dir=tmp_path)


def test_cmd_sweep_rejects_unswept_parameter(tmp_path):
    with pytest.raises(UnknownParameter, match="explore_std"):
        cmd_sweep(tiny_cfg(), "explore_std", [0.1], "avg_alloc", [0], 1,
                  out_dir=tmp_path)


def test_sweep_download_latency_scales_with_compression(tmp_path):
    # deterministic baseline + identical rng streams: only the compression
    # factor changes, so mean download time obeys an exact reciprocal law
    cfg = SimConfig().with_users(2).updated(slots_per_round=5)
    rows = cmd_sweep(cfg, "compression_ratio", [200.0, 300.0, 400.0],
                     "avg_alloc", [0], rounds=2, out_dir=tmp_path)
    products = [r["value"] * r["mean_download_s"] for r in rows]
    assert products[1] == pytest.approx(products[0], rel=1e-12)
    assert products[2] == pytest.approx(products[0], rel=1e-12)
    csv = (tmp_path / "sweep-compression_ratio-avg_alloc.csv").read_text()
    assert len(csv.splitlines()) == 1 + 3


def test_sweep_num_users_recycles_positions(tmp_path):
    rows = cmd_sweep(tiny_cfg(), "num_users", [2, 4], "fixed_2k", [0],
                     rounds=1, out_dir=tmp_path)
    assert [r["value"] for r in rows] == [2, 4]
    assert all(np.isfinite(r["mean_latency_s"]) for r in rows)


def test_cmd_bench_rows(tmp_path):
    rows = cmd_bench_optime(tiny_cfg(), ["per", "cddpg"], steps=12,
                            seed=0, out_dir=tmp_path, user_counts=[2],
                            blocks=3, warmup=2)
    assert [(r["variant"], r["num_users"]) for r in rows] \
        == [("per", 2), ("cddpg", 2)]
    for r in rows:
        assert r["mean_ms"] > 0 and r["steps"] == 12
    assert (tmp_path / "bench-optime.csv").exists()


def test_cmd_bench_rejects_baseline(tmp_path):
    with pytest.raises(ValueError, match="learning variant"):
        cmd_bench_optime(tiny_cfg(), ["fixed_2k"], steps=4, out_dir=tmp_path)


def test_cmd_ingest_synthetic_deterministic(tmp_path):
    cfg = tiny_cfg()
    a = cmd_ingest(cfg, out_dir=tmp_path / "a", slots=20, seed=5,
                   synthetic=True)
    b = cmd_ingest(cfg, out_dir=tmp_path / "b", slots=20, seed=5,
                   synthetic=True)
    text = a.read_text()
    assert text == b.read_text()
    lines = text.splitlines()
    assert len(lines) == 1 + 20 * cfg.num_users
    sums = [sum(int(v) for v in l.split(",")[2:]) for l in lines[1:]]
    assert set(sums) == {cfg.num_tiles}


def test_cmd_ingest_requires_a_source(tmp_path):
    with pytest.raises(ConfigError, match="synthetic"):
        cmd_ingest(tiny_cfg(), out_dir=tmp_path)


def test_cmd_ingest_from_corpus(tmp_path):
    from vredge.gaze import save_trace, synth_gaze
    gaze_dir = tmp_path / "gaze"
    gaze_dir.mkdir()
    for i in range(2):
        save_trace(synth_gaze(200, 0.2, np.random.default_rng(i)),
                   gaze_dir / f"t{i}.csv")
    path = cmd_ingest(tiny_cfg(), out_dir=tmp_path, slots=10, seed=0,
                      gaze_dir=gaze_dir)
    assert len(path.read_text().splitlines()) == 1 + 10 * 2


# --- CLI --------------------------------------------------------------------

def test_cli_run_smoke(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.cfg"
    tiny_cfg().to_file(cfg_path)
    code = cli.main(["run", "--config", str(cfg_path), "--variant", "fixed_2k",
                     "--seed", "0", "--rounds", "1",
                     "--out-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "final-window reward" in out
    assert (tmp_path / "out" / "fixed_2k-seed0-summary.json").exists()


def test_cli_sweep_smoke(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.cfg"
    tiny_cfg().to_file(cfg_path)
    code = cli.main(["sweep", "--config", str(cfg_path), "--param",
                     "compression_ratio", "--values", "200,400", "--variant",
                     "fixed_2k", "--rounds", "1",
                     "--out-dir", str(tmp_path / "out")])
    assert code == 0
    assert "compression_ratio=200" in capsys.readouterr().out


def test_cli_config_error_exit_2(tmp_path, capsys):
    code = cli.main(["run", "--config", str(tmp_path / "absent.cfg"),
                     "--rounds", "1", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_runtime_error_exit_3(tmp_path, capsys):
    code = cli.main(["sweep", "--param", "nope", "--values", "1",
                     "--preset", "desk-scale", "--rounds", "1",
                     "--out-dir", str(tmp_path)])
    assert code == 3
    assert "not sweepable" in capsys.readouterr().err


def test_cli_out_dir_env_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("VREDGE_OUT_DIR", str(tmp_path / "envout"))
    cfg_path = tmp_path / "tiny.cfg"
    tiny_cfg().to_file(cfg_path)
    code = cli.main(["ingest", "--config", str(cfg_path), "--synthetic",
                     "--slots", "4"])
    assert code == 0
    assert (tmp_path / "envout" / "attention.csv").exists()