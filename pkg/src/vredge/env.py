"""Edge-rendering environment core.

Physical-side formulas (tile/GoP sizes, Shannon rate, download and render
latency, delivery PSNR, attention-weighted QoE, horizon fairness) plus the
stateful `EdgeEnv` that composes them slot by slot. The twin's calibration
biases enter as per-round rate/frequency offsets subtracted from the
theoretical values.

Units: bits, bit/s, Hz, W, seconds. Decibel values only at config I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SimConfig

ATTN_LEVELS = np.array([1.0, 2.0, 3.0])   # perception weights per level


class CalibrationError(RuntimeError):
    """Twin bias at or above the physical quantity it calibrates."""


class CalibratedRateNonPositive(CalibrationError):
    pass


class CalibratedFrequencyNonPositive(CalibrationError):
    pass


# ---------------------------------------------------------------------------
# per-formula operations (scalar or broadcast over per-user arrays)

def tile_bits(res_frac, full_bits):
    """Bits per tile at a fractional resolution of the full-size tile."""
    r = np.asarray(res_frac, dtype=float)
    if np.any(r <= 0) or np.any(r > 1):
        raise ValueError(f"resolution fraction outside (0, 1]: {res_frac}")
    return r * full_bits


def gop_size(counts, bits_per_tile, frames):
    """Per-level and total GoP bits for one user.

    counts: tiles per attention level (..., 3); bits_per_tile likewise.
    """
    counts = np.asarray(counts, dtype=float)
    total_tiles = counts.sum(axis=-1)
    if np.any(total_tiles <= 0):
        raise ValueError("attention profile covers no tiles")
    g = counts * np.asarray(bits_per_tile, dtype=float) * frames
    return g, g.sum(axis=-1)


@dataclass
class ChannelState:
    """Downlink parameters for one user (fields may be per-user arrays)."""
    bandwidth_hz: float
    tx_power_w: float
    gain: float                 # Rayleigh power gain, unit mean
    distance_m: float
    path_loss_exp: float
    interference_w: float = 0.0
    noise_w: float = 1e-21
    rate_bias_bps: float = 0.0  # twin's rate overestimate, subtracted
    compression: float = 1.0


@dataclass
class ComputeState:
    """Render CPU share for one user."""
    cpu_hz: float
    cpu_bias_hz: float = 0.0    # twin's frequency overestimate


def transmission_rate(ch: ChannelState):
    """Theoretical downlink rate before bias calibration, bit/s."""
    snr = (ch.tx_power_w * ch.gain * np.asarray(ch.distance_m, float)
           ** (-ch.path_loss_exp)) / (ch.interference_w + ch.noise_w)
    return ch.bandwidth_hz * np.log2(1.0 + snr)


def download_latency(total_bits, ch: ChannelState):
    """Compressed-GoP download time over the calibrated link."""
    net_rate = transmission_rate(ch) - ch.rate_bias_bps
    if np.any(net_rate <= 0):
        raise CalibratedRateNonPositive(
            f"calibrated rate {net_rate} <= 0 (bias too large)")
    return total_bits / (ch.compression * net_rate)


def render_latency(level_bits, cycles_per_bit, comp: ComputeState):
    """GoP render time on the calibrated CPU share."""
    net_hz = comp.cpu_hz - comp.cpu_bias_hz
    if np.any(net_hz <= 0):
        raise CalibratedFrequencyNonPositive(
            f"calibrated frequency {net_hz} <= 0 (bias too large)")
    cycles = (np.asarray(level_bits, float)
              * np.asarray(cycles_per_bit, float)).sum(axis=-1)
    return cycles / net_hz


def psnr(delivered, eps):
    """Delivery quality in dB under the binary frame-error model."""
    good = 10.0 * math.log10((1.0 + eps) / eps)
    return np.where(np.asarray(delivered, bool), good, 0.0)


def qoe(psnr_db, counts, bits_per_tile, num_tiles, ref_bits):
    """Attention-weighted perceptual quality for one user (or a batch).

    counts, bits_per_tile: (..., 3). Levels weight linearly (1, 2, 3) and
    resolution enters through log bits relative to the smallest tile.
    """
    counts = np.asarray(counts, dtype=float)
    weight = (ATTN_LEVELS * counts / num_tiles
              * np.log(np.asarray(bits_per_tile, float) / ref_bits))
    return np.asarray(psnr_db, float) * weight.sum(axis=-1)


class FairnessTracker:
    """Running horizon-fairness state: per-user QoE averages and the
    historical instantaneous extremes."""

    def __init__(self, num_users):
        self.num_users = num_users
        self.low = None           # lowest instantaneous QoE seen
        self.high = None          # highest
        self.qoe_sums = np.zeros(num_users)
        self.slots = 0

    def update(self, qoe_per_user):
        q = np.asarray(qoe_per_user, dtype=float)
        if q.shape != (self.num_users,):
            raise ValueError(f"expected {self.num_users} QoE values, got {q.shape}")
        lo, hi = q.min(), q.max()
        self.low = lo if self.low is None else min(self.low, lo)
        self.high = hi if self.high is None else max(self.high, hi)
        self.qoe_sums += q
        self.slots += 1
        return self.hfqoe

    @property
    def averages(self):
        if self.slots == 0:
            return np.zeros(self.num_users)
        return self.qoe_sums / self.slots

    @property
    def hfqoe(self):
        # vacuously fair before any data or when every slot hit one value
        if self.slots == 0 or self.high == self.low:
            return 1.0
        spread = np.std(self.averages)      # population std across users
        return 1.0 - 2.0 * spread / (self.high - self.low)


@dataclass
class LatencyRecord:
    """Per-user latency outcome for one slot (array fields, length K)."""
    download_s: np.ndarray
    render_s: np.ndarray
    total_s: np.ndarray
    delivered: np.ndarray
    budget_s: float


@dataclass
class QoERecord:
    psnr_db: np.ndarray
    qoe: np.ndarray
    eps: float


@dataclass
class SlotResult:
    """Everything one environment step produced."""
    slot: int
    profiles: np.ndarray        # (K, 3) attention tile counts
    res_frac: np.ndarray        # (K, 3) applied resolution fractions
    bits_per_tile: np.ndarray   # (K, 3)
    gop_bits: np.ndarray        # (K,) total bits per user GoP
    rates: np.ndarray           # (K,) theoretical rates this slot
    cpu_hz: np.ndarray          # (K,) allocated CPU
    latency: LatencyRecord
    quality: QoERecord
    hfqoe: float
    calib_failures: int         # users whose biased rate/CPU went non-positive


def nominal_user_rates(cfg: SimConfig):
    """Even-share, unit-gain rates per user; the twin's static estimate."""
    share = cfg.bw_total_hz / cfg.num_users
    return np.array([cfg.shannon_rate(share, d) for d in cfg.user_distances])


class EdgeEnv:
    """Slot-stepped simulation of K users streaming attention-tiled GoPs.

    `attention` is a (T, K, 3) array of tile counts; the environment walks
    it cyclically, one row per slot. Channel gains are redrawn each slot,
    calibration biases once per DT round via `begin_round`.
    """

    def __init__(self, cfg: SimConfig, attention, rng):
        attention = np.asarray(attention)
        if attention.ndim != 3 or attention.shape[1:] != (cfg.num_users, 3):
            raise ValueError(
                f"attention must be (T, {cfg.num_users}, 3), got {attention.shape}")
        if np.any(attention.sum(axis=2) != cfg.num_tiles):
            raise ValueError("attention rows must sum to the tile count")
        self.cfg = cfg
        self.attention = attention
        self.rng = rng
        self.slot = 0
        self.fairness = FairnessTracker(cfg.num_users)
        self.rate_bias = np.zeros(cfg.num_users)
        self.cpu_bias = np.zeros(cfg.num_users)
        # bias caps: a fraction of the twin's nominal estimates
        self.rate_bias_cap = cfg.bias_frac * nominal_user_rates(cfg)
        self.cpu_bias_cap = cfg.bias_frac * cfg.cpu_total_hz / cfg.num_users
        self.counters = {"calib_rate": 0, "calib_cpu": 0, "deadline_miss": 0}

    def begin_round(self):
        """Redraw the twin's calibration biases (mean-reverting, clipped)."""
        cfg = self.cfg
        k = cfg.num_users
        innov_r = self.rng.normal(0.0, cfg.bias_innov * self.rate_bias_cap, k)
        innov_f = self.rng.normal(0.0, cfg.bias_innov * self.cpu_bias_cap, k)
        self.rate_bias = np.clip(cfg.bias_rho * self.rate_bias + innov_r,
                                 0.0, self.rate_bias_cap)
        self.cpu_bias = np.clip(cfg.bias_rho * self.cpu_bias + innov_f,
                                0.0, self.cpu_bias_cap)

    def current_profiles(self):
        return self.attention[self.slot % len(self.attention)]

    def step(self, action) -> SlotResult:
        """Advance one slot under the decoded allocation `action`.

        Needs attributes res_frac (K,3), bandwidth_hz (K,), cpu_hz (K,).
        Calibration failures never raise here; the affected user simply
        misses delivery with an infinite latency component.
        """
        cfg = self.cfg
        k = cfg.num_users
        profiles = self.current_profiles()
        res = np.asarray(action.res_frac, dtype=float)
        bw = np.asarray(action.bandwidth_hz, dtype=float)
        cpu = np.asarray(action.cpu_hz, dtype=float)

        bits = tile_bits(res, cfg.tile_bits_full)
        g, g_total = gop_size(profiles, bits, cfg.frames_per_gop)

        gains = self.rng.exponential(1.0, size=k)
        ch = ChannelState(
            bandwidth_hz=bw, tx_power_w=cfg.tx_power_w, gain=gains,
            distance_m=cfg.user_distances, path_loss_exp=cfg.path_loss_exp,
            interference_w=cfg.interference_w, noise_w=cfg.noise_w,
            rate_bias_bps=self.rate_bias, compression=cfg.compression_ratio)
        rates = transmission_rate(ch)

        net_rate = rates - self.rate_bias
        rate_ok = net_rate > 0
        t_down = np.full(k, np.inf)
        t_down[rate_ok] = g_total[rate_ok] / (cfg.compression_ratio
                                              * net_rate[rate_ok])

        render_bits = g / cfg.compression_ratio if cfg.prerender_compression else g
        cycles = (render_bits * cfg.cycles_per_bit).sum(axis=1)
        net_hz = cpu - self.cpu_bias
        cpu_ok = net_hz > 0
        t_render = np.full(k, np.inf)
        t_render[cpu_ok] = cycles[cpu_ok] / net_hz[cpu_ok]

        t_total = t_down + t_render
        delivered = t_total <= cfg.latency_budget_s

        self.counters["calib_rate"] += int(np.sum(~rate_ok))
        self.counters["calib_cpu"] += int(np.sum(~cpu_ok))
        self.counters["deadline_miss"] += int(np.sum(~delivered))

        psnr_db = psnr(delivered, cfg.psnr_eps)
        q = qoe(psnr_db, profiles, bits, cfg.num_tiles, cfg.tile_bits_ref)
        hf = self.fairness.update(q)

        result = SlotResult(
            slot=self.slot, profiles=profiles.copy(), res_frac=res,
            bits_per_tile=bits, gop_bits=g_total, rates=rates, cpu_hz=cpu,
            latency=LatencyRecord(download_s=t_down, render_s=t_render,
                                  total_s=t_total, delivered=delivered,
                                  budget_s=cfg.latency_budget_s),
            quality=QoERecord(psnr_db=psnr_db, qoe=q, eps=cfg.psnr_eps),
            hfqoe=hf,
            calib_failures=int(np.sum(~rate_ok) + np.sum(~cpu_ok)))
        self.slot += 1
        return result

    def capped_latency(self, latency: LatencyRecord):
        """Latency with failure sentinels capped, for finite metric means."""
        cap = self.cfg.fail_latency_cap_mult * self.cfg.latency_budget_s
        return np.minimum(latency.total_s, cap)
