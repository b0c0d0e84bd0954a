import numpy as np
import pytest

from vredge.replay import BufferConfig, CorruptSnapshot, EmptyBuffer, \
    ReplayBuffer, SumTree

SDIM, ADIM = 6, 4


def make_buffer(mode="fper", capacity=16, **kw):
    cfg = BufferConfig(capacity=capacity, mode=mode, **kw)
    return ReplayBuffer(cfg, SDIM, ADIM)


def fill(buf, n, rng=None, reward=None):
    rng = rng or np.random.default_rng(0)
    for i in range(n):
        buf.push(rng.uniform(0, 1, SDIM), rng.uniform(0, 1, ADIM),
                 reward if reward is not None else float(i), rng.uniform(0, 1, SDIM))


# --- sum tree ---------------------------------------------------------------

def test_tree_total_tracks_leaves():
    tree = SumTree(8)
    tree.update([0, 3, 7], [2.0, 1.0, 4.5])
    assert tree.total == 7.5
    tree.update(3, 0.0)
    assert tree.total == 6.5


def test_tree_two_leaf_example():
    tree = SumTree(2)
    tree.update([0, 1], [2.0, 1.0])
    assert tree.total == 3.0
    assert tree.find([0.5, 1.99, 2.01, 2.99]).tolist() == [0, 0, 1, 1]


def test_tree_find_matches_linear_scan_pow2():
    # power-of-two capacity keeps leaves in data order across prefix space
    rng = np.random.default_rng(1)
    for cap in (1, 2, 4, 8, 16, 32):
        tree = SumTree(cap)
        vals = rng.uniform(0, 3, cap)
        vals[rng.uniform(0, 1, cap) < 0.3] = 0.0  # holes allowed
        if vals.sum() == 0:
            vals[0] = 1.0
        tree.update(np.arange(cap), vals)
        assert tree.total == pytest.approx(vals.sum(), rel=1e-12)
        cum = np.cumsum(vals)
        prefixes = rng.uniform(0, vals.sum(), 200)
        want = np.searchsorted(cum, prefixes, side="left")
        got = tree.find(prefixes)
        assert np.array_equal(got, want)
        assert np.all(vals[got] > 0)  # never lands on a zero leaf


def test_tree_find_mass_is_proportional_any_capacity():
    # ragged capacities reorder leaves in prefix space but each leaf still
    # owns an interval of length equal to its value
    rng = np.random.default_rng(21)
    for cap in (3, 5, 7, 33):
        tree = SumTree(cap)
        vals = rng.uniform(0.1, 3, cap)
        tree.update(np.arange(cap), vals)
        grid = 200000
        step = tree.total / grid
        hits = np.bincount(tree.find((np.arange(grid) + 0.5) * step),
                           minlength=cap)
        assert np.allclose(hits * step, vals, atol=2 * step)


def test_tree_duplicate_update_keeps_last():
    tree = SumTree(4)
    tree.update([2, 2], [5.0, 1.0])
    assert tree.values([2]).tolist() == [1.0]
    assert tree.total == 1.0


def test_tree_rejects_negative():
    tree = SumTree(4)
    with pytest.raises(ValueError):
        tree.update(0, -0.5)


def test_tree_empty_find_raises():
    with pytest.raises(EmptyBuffer):
        SumTree(4).find([0.0])


# --- push / ring semantics --------------------------------------------------

def test_push_initial_priority_is_one_then_max():
    buf = make_buffer()
    fill(buf, 1)
    assert buf.priority[0] == 1.0
    buf.update_priorities([0], [5.0])
    fill(buf, 1)
    # new arrivals inherit the live maximum so they get replayed soon
    assert buf.priority[1] == buf.priority[0] == buf.max_priority


def test_ring_overwrite_resets_counter_and_bumps_stamp():
    buf = make_buffer(capacity=4)
    fill(buf, 4)
    rng = np.random.default_rng(2)
    buf.sample(8, rng)
    assert buf.replay_count[:4].sum() == 8
    stamp_before = buf.stamps[0]
    fill(buf, 1)  # wraps onto slot 0
    assert buf.cursor == 1 and buf.size == 4
    assert buf.replay_count[0] == 0
    assert buf.stamps[0] == stamp_before + 1


def test_size_saturates_at_capacity():
    buf = make_buffer(capacity=8)
    fill(buf, 20)
    assert len(buf) == 8


# --- sampling ---------------------------------------------------------------

def test_sample_empty_raises():
    with pytest.raises(EmptyBuffer):
        make_buffer().sample(4, np.random.default_rng(0))


def test_uniform_mode_unit_weights():
    buf = make_buffer("uniform", capacity=32)
    fill(buf, 10)
    batch = buf.sample(64, np.random.default_rng(3))
    assert np.all(batch["weights"] == 1.0)
    assert np.all(batch["indices"] < 10)


def test_two_priority_frequencies():
    buf = make_buffer(capacity=2, beta1=1.0)
    fill(buf, 2)
    buf.update_priorities([0, 1], [2.0 - 0.001, 1.0 - 0.001])  # p = {2, 1}
    assert buf.priority[:2].tolist() == [2.0, 1.0]
    rng = np.random.default_rng(4)
    counts = np.zeros(2)
    for _ in range(200):
        idx = buf.sample(500, rng)["indices"]
        counts += np.bincount(idx, minlength=2)
    freq = counts / counts.sum()
    assert abs(freq[0] - 2 / 3) < 0.01 and abs(freq[1] - 1 / 3) < 0.01


def test_beta1_zero_flattens_sampling():
    buf = make_buffer(capacity=8, beta1=0.0)
    fill(buf, 8)
    buf.update_priorities(np.arange(8), np.arange(8) * 10.0)
    rng = np.random.default_rng(5)
    counts = np.bincount(buf.sample(40000, rng)["indices"], minlength=8)
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 1 / 8) < 0.01)


def test_beta2_zero_gives_unit_weights():
    buf = make_buffer(capacity=8, beta2=0.0)
    fill(buf, 8)
    buf.update_priorities(np.arange(8), np.arange(1, 9, dtype=float))
    batch = buf.sample(32, np.random.default_rng(6))
    assert np.all(batch["weights"] == 1.0)


def test_weights_normalized_by_batch_max():
    buf = make_buffer(capacity=8, beta1=1.0, beta2=0.8)
    fill(buf, 8)
    buf.update_priorities(np.arange(8), np.arange(1, 9, dtype=float))
    batch = buf.sample(64, np.random.default_rng(7))
    assert batch["weights"].max() == 1.0
    assert np.all(batch["weights"] > 0)
    # manual recomputation of the IS weight for each drawn index
    total = buf.tree.total
    probs = buf.tree.values(batch["indices"]) / total
    manual = (len(buf) * probs) ** -0.8
    assert np.allclose(batch["weights"], manual / manual.max(), rtol=1e-12)


def test_weights_use_live_size_not_capacity():
    buf = make_buffer(capacity=1000, beta1=1.0, beta2=1.0)
    fill(buf, 4)
    buf.update_priorities(np.arange(4), [1.0, 2.0, 3.0, 4.0])
    batch = buf.sample(16, np.random.default_rng(8))
    total = buf.tree.total
    probs = buf.tree.values(batch["indices"]) / total
    manual = (4 * probs) ** -1.0
    assert np.allclose(batch["weights"], manual / manual.max(), rtol=1e-12)


def test_sampling_bumps_replay_counters_with_duplicates():
    buf = make_buffer(capacity=2)
    fill(buf, 2)
    batch = buf.sample(10, np.random.default_rng(9))
    counts = np.bincount(batch["indices"], minlength=2)
    assert np.array_equal(buf.replay_count[:2], counts)


def test_stratified_indices_monotone():
    buf = make_buffer(capacity=64, beta1=1.0)
    fill(buf, 64)
    batch = buf.sample(32, np.random.default_rng(10))
    assert np.all(np.diff(batch["indices"]) >= 0)


# --- priority updates -------------------------------------------------------

def test_freshness_priority_after_ten_replays():
    buf = make_buffer(capacity=1, mu=0.95, eps_fresh=0.001)
    fill(buf, 1)
    rng = np.random.default_rng(11)
    for _ in range(10):
        buf.sample(1, rng)
    assert buf.replay_count[0] == 10
    buf.update_priorities([0], [2.0])
    assert buf.priority[0] == pytest.approx(1.1984738784767572, abs=1e-12)


def test_freshness_decay_uses_current_counter():
    buf = make_buffer(capacity=4)
    fill(buf, 4)
    buf.update_priorities([0], [2.0])  # n = 0: no decay yet
    assert buf.priority[0] == 2.001


def test_per_mode_priority_floor():
    buf = make_buffer("per", capacity=4, eps_per=0.001)
    fill(buf, 4)
    buf.update_priorities([0, 1], [0.0, 3.0])
    assert buf.priority[0] == 0.001
    assert buf.priority[1] == 3.001


def test_uniform_mode_update_is_noop():
    buf = make_buffer("uniform", capacity=4)
    fill(buf, 4)
    before = buf.priority.copy()
    buf.update_priorities([0], [9.0])
    assert np.array_equal(buf.priority, before)


def test_stale_update_skipped_and_counted():
    buf = make_buffer(capacity=2)
    fill(buf, 2)
    batch = buf.sample(2, np.random.default_rng(12))
    fill(buf, 2)  # overwrite both slots
    p_before = buf.priority.copy()
    buf.update_priorities(batch["indices"], [7.0, 7.0], batch["stamps"])
    assert buf.stale_updates == 2
    assert np.array_equal(buf.priority, p_before)


def test_duplicate_indices_keep_last_update():
    buf = make_buffer("per", capacity=4)
    fill(buf, 4)
    buf.update_priorities([1, 1], [10.0, 2.0])
    assert buf.priority[1] == 2.001


def test_update_negative_td_uses_magnitude():
    buf = make_buffer("per", capacity=4)
    fill(buf, 4)
    buf.update_priorities([0], [-3.0])
    assert buf.priority[0] == 3.001


# --- stats ------------------------------------------------------------------

def test_stats_empty_and_growth():
    buf = make_buffer(capacity=8)
    assert buf.stats() == (0, 1.0, 0.0)
    fill(buf, 4)
    size, maxp, mean_n = buf.stats()
    assert (size, maxp, mean_n) == (4, 1.0, 0.0)
    rng = np.random.default_rng(13)
    buf.sample(8, rng)
    assert buf.stats()[2] == 2.0
    buf.sample(8, rng)
    assert buf.stats()[2] == 4.0


# --- snapshots --------------------------------------------------------------

def test_snapshot_round_trip(tmp_path):
    buf = make_buffer(capacity=8)
    fill(buf, 6)
    rng = np.random.default_rng(14)
    batch = buf.sample(4, rng)
    buf.update_priorities(batch["indices"], rng.uniform(0, 2, 4),
                          batch["stamps"])
    path = tmp_path / "buf.npz"
    buf.save(path)
    back = ReplayBuffer.load(path)
    assert back.cfg == buf.cfg
    assert back.size == buf.size and back.cursor == buf.cursor
    for name in ("states", "actions", "rewards", "next_states", "priority",
                 "replay_count", "stamps"):
        assert np.array_equal(getattr(back, name), getattr(buf, name)), name
    assert back.tree.total == pytest.approx(buf.tree.total, rel=1e-12)
    # identical rng stream draws the same batch afterwards
    a = buf.sample(4, np.random.default_rng(15))
    b = back.sample(4, np.random.default_rng(15))
    assert np.array_equal(a["indices"], b["indices"])
    assert np.array_equal(a["states"], b["states"])


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "junk.npz"
    path.write_bytes(b"not an npz archive")
    with pytest.raises(CorruptSnapshot):
        ReplayBuffer.load(path)


def test_snapshot_rejects_wrong_version(tmp_path):
    buf = make_buffer(capacity=4)
    fill(buf, 2)
    path = tmp_path / "buf.npz"
    buf.save(path)
    with np.load(path) as z:
        data = {k: z[k] for k in z.files}
    data["version"] = np.int64(99)
    np.savez_compressed(path, **data)
    with pytest.raises(CorruptSnapshot, match="version"):
        ReplayBuffer.load(path)


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        BufferConfig(mode="nope")
    with pytest.raises(ValueError):
        BufferConfig(capacity=0)
    with pytest.raises(ValueError):
        BufferConfig(mu=1.0)
    with pytest.raises(ValueError):
        BufferConfig(beta2=1.5)
