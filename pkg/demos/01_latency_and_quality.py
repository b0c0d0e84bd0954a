"""
Latency and quality, piece by piece
===================================

Walks the closed-form core of the simulator for a single user: tile bits
at each attention level, GoP size, link rate, download and render delay,
and the attention-weighted quality score. Every number printed here can
be checked with a pocket calculator.
"""

import numpy as np

from vredge.config import SimConfig
from vredge.env import ChannelState, ComputeState, download_latency, \
    gop_size, psnr, qoe, render_latency, tile_bits, transmission_rate

cfg = SimConfig()           # full-scale defaults

# --- content: one GoP under a fixed attention profile -----------------------
# 16 tiles split into levels (low/mid/high attention), resolution rising
# with the level.
counts = np.array([3, 9, 4])
res = np.array([1 / 8, 1 / 4, 1.0])
bits = tile_bits(res, cfg.tile_bits_full)
per_level, total = gop_size(counts, bits, cfg.frames_per_gop)
print("tiles per level:   ", counts)
print("bits per tile:     ", bits.astype(int))
print("GoP bits per level:", per_level.astype(int))
print(f"GoP total:          {total:,.0f} bits")

# --- link: Shannon rate over the configured downlink ------------------------
ch = ChannelState(
    bandwidth_hz=cfg.bw_total_hz / cfg.num_users,
    tx_power_w=cfg.tx_power_w, gain=1.0,
    distance_m=cfg.user_distances[0],
    path_loss_exp=cfg.path_loss_exp,
    noise_w=cfg.noise_w,
    compression=cfg.compression_ratio)
rate = transmission_rate(ch)
t_down = download_latency(total, ch)
print(f"\nlink rate:          {rate/1e6:,.1f} Mbit/s "
      f"(distance {ch.distance_m:.1f} m)")
print(f"download latency:   {t_down*1e3:.2f} ms "
      f"(compression x{cfg.compression_ratio:.0f})")

# --- compute: render time on an even CPU share ------------------------------
comp = ComputeState(cpu_hz=cfg.cpu_total_hz / cfg.num_users)
t_render = render_latency(per_level, cfg.cycles_per_bit, comp)
print(f"render latency:     {t_render*1e3:.2f} ms "
      f"on {comp.cpu_hz/1e9:.2f} GHz")
print(f"latency budget:     {cfg.latency_budget_s*1e3:.0f} ms -> "
      f"{'delivered' if t_down + t_render <= cfg.latency_budget_s else 'missed'}")

# --- quality: PSNR gates the attention-weighted score -----------------------
p_ok = float(psnr(True, cfg.psnr_eps))
p_fail = float(psnr(False, cfg.psnr_eps))
print(f"\npsnr delivered:     {p_ok:.4f} dB   missed: {p_fail:.1f} dB")
q = float(qoe(p_ok, counts, bits, cfg.num_tiles, cfg.tile_bits_ref))
print(f"qoe of this profile: {q:.4f}")

# doubling every mid-level tile's resolution buys a visible bump
bits_up = tile_bits(np.array([1 / 8, 1 / 2, 1.0]), cfg.tile_bits_full)
q_up = float(qoe(p_ok, counts, bits_up, cfg.num_tiles, cfg.tile_bits_ref))
print(f"with mid level at 1/2: {q_up:.4f} (+{q_up - q:.4f})")
