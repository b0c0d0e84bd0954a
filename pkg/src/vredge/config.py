"""Simulation configuration: every system constant and tuning knob in one place.

Values are loaded from plain ``key = value`` files with an ``include`` mechanism
for the shipped presets (``paper-table1``, ``desk-scale``), or constructed
directly as a dataclass. All sizes are bits, rates bit/s, frequencies Hz and
times seconds; dBm only appears at the config boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

PRESET_DIR = Path(__file__).parent / "presets"

SWEEPABLE_KEYS = (
    "per_priority_exp",   # replay priority exponent
    "per_is_exp",         # importance-sampling correction exponent
    "freshness_mu",       # replay freshness discount
    "latency_budget_s",
    "hfqoe_min",
    "compression_ratio",
    "num_users",
    "cpu_total_hz",
    "bw_total_hz",
)


class ConfigError(ValueError):
    """Raised for unknown/missing/ill-typed configuration keys."""


@dataclass(frozen=True)
class SimConfig:
    # --- content model ---------------------------------------------------
    frames_per_gop: int = 16           # frames sharing one attention map
    grid_cols: int = 4
    grid_rows: int = 4
    num_tiles: int = 16                # must equal grid_cols * grid_rows
    tile_bits_full: float = 12441600.0  # 4K tile: 3840*2160/16 px * 8 bit * 3
    tile_bits_ref: float = 460800.0     # SD tile: 640*480/16 px * 8 bit * 3
    res_min_l1: float = 0.125
    res_max_l1: float = 0.25
    res_min_l2: float = 0.25
    res_max_l2: float = 0.5
    res_l3: float = 1.0
    cycles_per_bit_l1: float = 800.0
    cycles_per_bit_l2: float = 900.0
    cycles_per_bit_l3: float = 1000.0

    # --- users and radio link --------------------------------------------
    num_users: int = 4
    user_positions: tuple = ((23.0, 1.0), (20.0, 0.0), (10.0, 5.0), (15.0, 5.0))
    tx_power_w: float = 1.0
    path_loss_exp: float = 4.0
    noise_dbm: float = -174.0          # total link noise power
    interference_w: float = 0.0        # inter-cell term, 0 = single cell
    bw_total_hz: float = 10e6
    cpu_total_hz: float = 15e9
    compression_ratio: float = 300.0   # applied to the downlink rate

    # --- timing and thresholds -------------------------------------------
    latency_budget_s: float = 0.150
    slots_per_round: int = 100         # slots between twin refreshes
    qoe_min: float = 9.8645
    hfqoe_min: float = 0.97
    psnr_eps: float = 1.0
    penalty_qoe: float = 2.0
    penalty_fair: float = 2.0

    # --- twin calibration-bias process -----------------------------------
    bias_rho: float = 0.9              # AR(1) pull toward previous bias
    bias_frac: float = 0.05            # cap as fraction of nominal rate/cpu
    bias_innov: float = 0.3            # innovation std as fraction of the cap

    # --- gaze / attention rule -------------------------------------------
    attn_inner_radius: int = 0         # Chebyshev radius for top attention
    attn_mid_radius: int = 2           # Chebyshev radius for mid attention
    synth_step_scale: float = 0.05     # random-walk step for synthetic gaze

    # --- state normalization and action decoding -------------------------
    qoe_scale: float = 30.0            # above the analytic per-user maximum
    latency_scale_mult: float = 4.0    # latency entries scaled by mult*budget
    decode_eps_cap: float = 1e-6       # keeps decoded res inside open ends
    share_eps: float = 1e-6            # avoids zero-sum share normalization
    fail_latency_cap_mult: float = 10.0  # metrics cap for failed deliveries
    prerender_compression: bool = False  # divide rendered bits by compression

    # --- learner ----------------------------------------------------------
    discount: float = 0.99
    target_tau: float = 0.01
    lr_critic: float = 2e-4
    lr_actor: float = 1e-7
    batch_size: int = 64
    buffer_capacity: int = 10000
    per_priority_exp: float = 0.9
    per_is_exp: float = 0.8
    freshness_mu: float = 0.95
    per_eps: float = 0.001
    freshness_eps: float = 0.001
    hidden_width: int = 256
    hidden_layers: int = 3
    explore_std: float = 0.2
    explore_decay: float = 0.995
    explore_floor: float = 0.01
    offline_rounds: int = 1000         # training window of the offline variant

    # ---------------------------------------------------------------------

    def __post_init__(self):
        self.validate()

    def validate(self):
        c = self
        if c.num_tiles != c.grid_cols * c.grid_rows:
            raise ConfigError(
                f"num_tiles={c.num_tiles} != grid_cols*grid_rows="
                f"{c.grid_cols * c.grid_rows}")
        if not (0 < c.tile_bits_ref < c.tile_bits_full):
            raise ConfigError("need 0 < tile_bits_ref < tile_bits_full")
        if not (c.cycles_per_bit_l1 <= c.cycles_per_bit_l2 <= c.cycles_per_bit_l3):
            raise ConfigError("cycles_per_bit must be non-decreasing in level")
        if not (0 < c.res_min_l1 < c.res_max_l1 <= c.res_min_l2 < c.res_max_l2
                <= c.res_l3 <= 1.0):
            raise ConfigError("resolution ranges must be ordered inside (0, 1]")
        if len(c.user_positions) != c.num_users:
            raise ConfigError(
                f"user_positions has {len(c.user_positions)} entries for "
                f"num_users={c.num_users}")
        for key in ("frames_per_gop", "num_users", "slots_per_round",
                    "batch_size", "buffer_capacity", "hidden_width",
                    "hidden_layers"):
            if getattr(c, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        for key in ("tx_power_w", "bw_total_hz", "cpu_total_hz",
                    "compression_ratio", "latency_budget_s", "psnr_eps",
                    "qoe_scale"):
            if getattr(c, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if not 0 <= c.discount < 1:
            raise ConfigError("discount must lie in [0, 1)")
        if not 0 < c.target_tau <= 1:
            raise ConfigError("target_tau must lie in (0, 1]")
        if not 0 < c.freshness_mu < 1:
            raise ConfigError("freshness_mu must lie in (0, 1)")
        if c.batch_size > c.buffer_capacity:
            raise ConfigError("batch_size cannot exceed buffer_capacity")
        if c.attn_inner_radius >= c.attn_mid_radius:
            raise ConfigError("attn_inner_radius must be < attn_mid_radius")
        if not 0 < c.synth_step_scale <= 0.5:
            raise ConfigError("synth_step_scale must lie in (0, 0.5]")

    # --- derived quantities ----------------------------------------------

    @property
    def noise_w(self):
        return 10.0 ** ((self.noise_dbm - 30.0) / 10.0)

    @property
    def cycles_per_bit(self):
        return np.array([self.cycles_per_bit_l1, self.cycles_per_bit_l2,
                         self.cycles_per_bit_l3])

    @property
    def res_lo(self):
        return np.array([self.res_min_l1, self.res_min_l2, self.res_l3])

    @property
    def res_hi(self):
        return np.array([self.res_max_l1, self.res_max_l2, self.res_l3])

    @property
    def user_distances(self):
        return np.array([math.hypot(x, y) for x, y in self.user_positions])

    def shannon_rate(self, bandwidth_hz, distance_m, gain=1.0):
        """Rate of one link at the given bandwidth and power gain."""
        snr = (self.tx_power_w * gain * distance_m ** (-self.path_loss_exp)
               / (self.interference_w + self.noise_w))
        return bandwidth_hz * math.log2(1.0 + snr)

    @property
    def rate_scale(self):
        """State-normalization scale: full bandwidth, unit gain, nearest user."""
        return self.shannon_rate(self.bw_total_hz, self.user_distances.min())

    @property
    def latency_scale(self):
        return self.latency_scale_mult * self.latency_budget_s

    @property
    def state_dim(self):
        return 13 * self.num_users + 1

    @property
    def action_dim(self):
        return 4 * self.num_users

    def with_users(self, num_users):
        """Same scenario with a different user count; positions cycle."""
        base = self.user_positions
        pos = tuple(base[k % len(base)] for k in range(num_users))
        return replace(self, num_users=num_users, user_positions=pos)

    def updated(self, **kwargs):
        return replace(self, **kwargs)

    # --- file I/O ----------------------------------------------------------

    @classmethod
    def preset(cls, name):
        path = PRESET_DIR / f"{name}.cfg"
        if not path.exists():
            known = sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
            raise ConfigError(f"unknown preset '{name}' (have: {', '.join(known)})")
        return cls.from_file(path)

    @classmethod
    def from_file(cls, path):
        """Load a config file; every key must be present after includes."""
        values, origins = _read_kv_file(Path(path), seen=set())
        allowed = {f.name: f for f in fields(cls)}
        missing = [name for name in allowed if name not in values]
        if missing:
            raise ConfigError(
                f"{path}: missing config key(s): {', '.join(sorted(missing))}")
        parsed = {}
        for key, raw in values.items():
            parsed[key] = _coerce(key, raw, allowed[key].type, origins[key])
        try:
            return cls(**parsed)
        except ConfigError as err:
            raise ConfigError(f"{path}: {err}") from None

    def to_file(self, path):
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "user_positions":
                val = "; ".join(f"{x:g},{y:g}" for x, y in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = f"{val!r}"
            lines.append(f"{f.name} = {val}")
        Path(path).write_text("\n".join(lines) + "\n")


def _read_kv_file(path, seen):
    """Parse one file, resolving ``include`` lines depth-first."""
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"{path}: circular include")
    seen.add(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values, origins = {}, {}
    known = {f.name for f in fields(SimConfig)}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        where = f"{path}:{lineno}"
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("include"):
            target = stripped[len("include"):].strip()
            if not target:
                raise ConfigError(f"{where}: include needs a preset name or path")
            inc = PRESET_DIR / f"{target}.cfg"
            if not inc.exists():
                inc = path.parent / target
            sub_vals, sub_orig = _read_kv_file(inc, seen)
            values.update(sub_vals)
            origins.update(sub_orig)
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{where}: unknown config key '{key}'")
        values[key] = raw.strip()
        origins[key] = where
    return values, origins


def _coerce(key, raw, ftype, where):
    try:
        if key == "user_positions":
            pairs = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                x, y = chunk.split(",")
                pairs.append((float(x), float(y)))
            return tuple(pairs)
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
        if ftype in ("bool", bool):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{where}: bad value for '{key}': {err}") from None
