"""
From gaze samples to attention profiles
=======================================

Runs the gaze pipeline end to end: synthesize a fixation walk over the
viewport, bucket each sample into the tile grid, and collapse a group of
frames into per-level tile counts. The final section prints a small map
of the attention levels so the ring structure is visible.
"""

import numpy as np

from vredge.gaze import AttentionRule, frame_attention, gaze_to_tile, \
    gop_attention, level_counts, samples_to_tile_ids, synth_gaze

COLS = ROWS = 4
RULE = AttentionRule(inner_radius=0, mid_radius=2)

# --- a single fixation ------------------------------------------------------
# Chebyshev distance to the gazed tile decides the level: the gazed tile
# itself is high attention, a two-tile ring around it mid, the rest low.
for uv in [(0.05, 0.05), (0.55, 0.45)]:
    tile = gaze_to_tile(uv, COLS, ROWS)
    levels = frame_attention(tile, RULE, COLS, ROWS)
    n1, n2, n3 = level_counts(levels)
    print(f"gaze {uv} -> tile {tile} -> levels N1={n1} N2={n2} N3={n3}")

# --- a synthetic walk across one GoP ----------------------------------------
rng = np.random.default_rng(7)
trace = synth_gaze(16, 0.05, rng, "demo-walk")
flat = samples_to_tile_ids(trace.samples, COLS, ROWS)   # row-major ids
tiles = sorted({(int(f) // ROWS, int(f) % ROWS) for f in flat})
print("\nvisited tiles over 16 frames:", tiles)

profile = gop_attention(trace.samples, RULE, COLS, ROWS)
print("GoP profile (N1, N2, N3):", tuple(int(v) for v in profile))

# --- show the per-tile levels of the GoP ------------------------------------
# a tile's level is its best (closest-to-gaze) level over the GoP's frames
best = np.ones((COLS, ROWS), dtype=int)
for tile in tiles:
    lv = frame_attention(tile, RULE, COLS, ROWS)
    best = np.maximum(best, lv)
print("\nattention map (rows = j, 3 = follow the gaze):")
for j in range(ROWS - 1, -1, -1):
    print("  " + " ".join(str(best[i, j]) for i in range(COLS)))
