"""Gaze traces and the attention pipeline.

Per-frame gaze coordinates map to grid tiles; tiles near the gaze point get
higher attention levels (3 at the gaze tile, 2 within a Chebyshev ring, 1
elsewhere); a GoP's level per tile is the max over its frames. Trace files
are plain text, one `u,v` pair per line, `#` comments ignored. A reflected
random walk stands in for recorded data when no trace corpus is given.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EmptyCorpus(ValueError):
    """No usable gaze trace files were found."""


@dataclass
class GazeTrace:
    samples: np.ndarray          # (n, 2) floats in [0, 1)
    source_id: str = ""
    clamped: int = 0             # out-of-range samples clipped at load time

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 2:
            raise ValueError(f"samples must be (n, 2), got {self.samples.shape}")
        if len(self.samples) == 0:
            raise ValueError("empty gaze trace")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class AttentionRule:
    inner_radius: int = 0        # Chebyshev distance earning level 3
    mid_radius: int = 2          # ... earning at least level 2

    def __post_init__(self):
        if self.inner_radius >= self.mid_radius:
            raise ValueError("inner_radius must be < mid_radius")


def gaze_to_tile(sample, cols, rows):
    """Grid tile (i, j) holding the gaze point; i indexes u, j indexes v."""
    u, v = float(sample[0]), float(sample[1])
    if not (0.0 <= u < 1.0 and 0.0 <= v < 1.0):
        raise ValueError(f"gaze sample outside [0,1): {(u, v)}")
    return int(u * cols), int(v * rows)


def frame_attention(tile, rule: AttentionRule, cols, rows):
    """(cols, rows) array of attention levels for a single gaze tile."""
    gi, gj = tile
    if not (0 <= gi < cols and 0 <= gj < rows):
        raise ValueError(f"tile {tile} outside {cols}x{rows} grid")
    di = np.abs(np.arange(cols)[:, None] - gi)
    dj = np.abs(np.arange(rows)[None, :] - gj)
    dist = np.maximum(di, dj)
    levels = np.ones((cols, rows), dtype=np.int64)
    levels[dist <= rule.mid_radius] = 2
    levels[dist <= rule.inner_radius] = 3
    return levels


def level_counts(levels):
    """Tile counts at levels (1, 2, 3) for a level map or batch thereof."""
    lv = np.asarray(levels)
    flat = lv.reshape(lv.shape[:-2] + (-1,)) if lv.ndim >= 2 else lv
    return np.stack([(flat == a).sum(axis=-1) for a in (1, 2, 3)], axis=-1)


def _pairwise_chebyshev(cols, rows):
    """(N, N) Chebyshev distances between all tile pairs, row-major ids."""
    ii, jj = np.meshgrid(np.arange(cols), np.arange(rows), indexing="ij")
    pos = np.stack([ii.ravel(), jj.ravel()], axis=1)
    d = np.abs(pos[:, None, :] - pos[None, :, :]).max(axis=2)
    return d.astype(np.uint8)


def gop_attention_batch(tile_ids, rule: AttentionRule, cols, rows):
    """Counts (T, 3) for T GoPs given their frames' flat tile ids (T, F).

    A tile's level is the max over frames, i.e. it is set by the closest
    gaze tile among the GoP's frames.
    """
    tile_ids = np.asarray(tile_ids)
    dist = _pairwise_chebyshev(cols, rows)
    dmin = dist[tile_ids[:, 0]]
    for f in range(1, tile_ids.shape[1]):
        dmin = np.minimum(dmin, dist[tile_ids[:, f]])
    levels = np.ones(dmin.shape, dtype=np.int64)
    levels[dmin <= rule.mid_radius] = 2
    levels[dmin <= rule.inner_radius] = 3
    return np.stack([(levels == a).sum(axis=1) for a in (1, 2, 3)], axis=-1)


def samples_to_tile_ids(samples, cols, rows):
    """Flat (row-major) tile ids for an (..., 2) block of gaze samples."""
    s = np.asarray(samples, dtype=float)
    if np.any(s < 0) or np.any(s >= 1):
        raise ValueError("gaze samples outside [0,1)")
    i = (s[..., 0] * cols).astype(np.int64)
    j = (s[..., 1] * rows).astype(np.int64)
    return i * rows + j


def gop_attention(frames, rule: AttentionRule, cols, rows):
    """Attention tile counts (3,) for one GoP of gaze samples (F, 2)."""
    ids = samples_to_tile_ids(np.asarray(frames, float), cols, rows)
    return gop_attention_batch(ids[None, :], rule, cols, rows)[0]


# ---------------------------------------------------------------------------
# trace sources

def synth_gaze(steps, step_scale, rng, source_id="synthetic"):
    """Reflected random walk over the unit square, one sample per frame."""
    if not 0.0 < step_scale <= 0.5:
        raise ValueError("step_scale must lie in (0, 0.5]")
    start = rng.uniform(0.0, 1.0, size=2)
    inc = rng.uniform(-step_scale, step_scale, size=(steps, 2))
    inc[0] = 0.0
    path = start + np.cumsum(inc, axis=0)
    folded = np.abs((path + 1.0) % 2.0 - 1.0)     # reflect at 0 and 1
    return GazeTrace(np.clip(folded, 0.0, np.nextafter(1.0, 0.0)), source_id)


def compose_long_trace(traces, target_frames, rng, source_id="composed"):
    """Concatenate uniformly drawn traces (with replacement) to a length."""
    traces = list(traces)
    if not traces:
        raise EmptyCorpus("no gaze traces to compose")
    if target_frames <= 0:
        raise ValueError("target_frames must be positive")
    parts, have = [], 0
    while have < target_frames:
        t = traces[int(rng.integers(len(traces)))]
        parts.append(t.samples)
        have += len(t)
    return GazeTrace(np.concatenate(parts)[:target_frames], source_id)


# ---------------------------------------------------------------------------
# file I/O

def save_trace(trace: GazeTrace, path):
    lines = [f"# gaze trace: {trace.source_id}"]
    # float() strips the numpy scalar wrapper; repr keeps full precision
    lines += [f"{float(u)!r},{float(v)!r}" for u, v in trace.samples]
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path):
    """Read a trace file; out-of-range samples are clamped and counted."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            u_s, v_s = line.split(",")
            rows.append((float(u_s), float(v_s)))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected 'u,v' floats, "
                             f"got {line!r}") from None
    if not rows:
        raise EmptyCorpus(f"{path}: no samples")
    raw = np.array(rows)
    hi = np.nextafter(1.0, 0.0)
    clipped = np.clip(raw, 0.0, hi)
    n_clamped = int(np.sum(np.any(raw != clipped, axis=1)))
    return GazeTrace(clipped, source_id=path.stem, clamped=n_clamped)


def load_corpus(directory):
    directory = Path(directory)
    files = sorted(list(directory.glob("*.csv")) + list(directory.glob("*.txt")))
    traces = [load_trace(f) for f in files]
    if not traces:
        raise EmptyCorpus(f"no .csv/.txt gaze traces under {directory}")
    return traces


# ---------------------------------------------------------------------------
# per-user attention streams

def attention_stream(num_slots, num_users, frames_per_gop, rule, cols, rows,
                     rng, traces=None, step_scale=0.05):
    """(num_slots, K, 3) attention counts, one GoP per slot per user.

    Each user gets an independent frame stream: a fresh synthetic walk, or
    a fresh with-replacement composition of the given trace corpus.
    """
    total_frames = num_slots * frames_per_gop
    out = np.empty((num_slots, num_users, 3), dtype=np.int64)
    for k in range(num_users):
        if traces is None:
            tr = synth_gaze(total_frames, step_scale, rng, f"synthetic-u{k}")
        else:
            tr = compose_long_trace(traces, total_frames, rng, f"composed-u{k}")
        ids = samples_to_tile_ids(tr.samples, cols, rows)
        ids = ids.reshape(num_slots, frames_per_gop)
        out[:, k, :] = gop_attention_batch(ids, rule, cols, rows)
    return out


def write_attention_csv(path, stream):
    """Export a (T, K, 3) stream as rows of t, user, N1, N2, N3."""
    stream = np.asarray(stream)
    lines = ["t,user,N1,N2,N3"]
    for t in range(stream.shape[0]):
        for k in range(stream.shape[1]):
            n1, n2, n3 = stream[t, k]
            lines.append(f"{t},{k},{n1},{n2},{n3}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_attention_csv(path):
    """Parse an attention CSV back into a (T, K, 3) array."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "t,user,N1,N2,N3":
        raise ValueError(f"{path}: missing attention CSV header")
    body = [line.split(",") for line in text[1:] if line.strip()]
    if not body:
        raise ValueError(f"{path}: no rows")
    arr = np.array(body, dtype=np.int64)
    num_t = arr[:, 0].max() + 1
    num_k = arr[:, 1].max() + 1
    if len(arr) != num_t * num_k:
        raise ValueError(f"{path}: expected {num_t * num_k} rows, got {len(arr)}")
    out = np.empty((num_t, num_k, 3), dtype=np.int64)
    out[arr[:, 0], arr[:, 1]] = arr[:, 2:5]
    return out
