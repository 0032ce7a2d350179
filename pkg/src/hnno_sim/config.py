"""Experiment configuration: nested JSON with documented defaults.

Unknown keys are rejected with their dotted path; missing keys take the
defaults below.  ``null`` in a default means "derived" (see comments).
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigurationError

__all__ = ["DEFAULTS", "resolve", "load_config", "config_hash", "canonical_json", "apply_overrides"]

DEFAULTS: dict = {
    "seed": 42,  # array rest-state draw and synthetic data, unless overridden per section
    "device": {
        "x_rest_um": 2.25,
        "r_x_mohm_per_um": 0.4,
        "x_min_um": 1.5,
        "x_max_um": 3.0,
        "eta_plus_um_per_v_us": 0.002,
        "eta_minus_um_per_v_us": 0.004,
        "v_th_v": 1.0,
        "tau_x_us": 20.0,
        "tau_film_us": 5.0,
        "c_film_pf": None,  # null: calibrated from tau_film_us
    },
    "array": {
        "n_nodes": 128,
        "mode": "spatiotemporal",
        "dt_us": 0.5,
        "x_init_um": [2.0, 2.5],
        "v_read_v": 0.1,
    },
    "encoding": {"theta": 0.5, "v_pulse_v": 5.0, "pulse_width_us": 0.5},
    "schedule": {"n_sample": [1, 2, 4]},
    "task": {
        "manifest": None,  # JSON-lines clip manifest; null: use the generator
        "generator": {
            "n_classes": 10,
            "n_channels": 64,
            "n_steps": 100,
            "n_clips": 500,
            "seed": None,  # null: top-level seed
            "motifs_per_class": 12,
            "repeats": 5,
            "max_lag": 4,
            "noise_rate": 0.02,
        },
        "modes": ["bypass", "temporal-only", "spatiotemporal"],
        "min_gap_pp": 3.0,
    },
    "readout": {"k": 5, "ridge": 1e-3, "levels": 16, "cv_seed": 0},
    "device_fit": {
        "amplitude_v": 5.0,
        "width_us": 0.5,
        "intervals_us": [0.5, 1.5, 2.5, 3.5],
        "pulse_count": 5,
        "sample_dt_us": 0.1,
        "tail_us": 30.0,
        "tau_target_us": 5.0,
        "tau_tolerance": 0.05,
    },
    "pattern": {
        "n_nodes": 6,
        "step_us": 0.5,
        "sample_dt_us": 0.1,
        "tail_us": 5.0,
        "gain_v_per_ua": 0.015,
        "features": "final",  # "final": I1, I2 at the last input step; "steps": at every step end
        "ridge": 0.0,
        "levels": 16,
        "min_correlation": 0.9,
        "min_amplitude_gap": 0.05,
    },
    "seizure": {
        "manifest": None,  # null: synthetic surrogate
        "n_per_class": 100,
        "n_channels": 23,
        "fs_hz": 256,
        "seconds": 10.0,
        "seed": 7,
        "horizons_s": [1.0, 2.0, 3.0, 10.0],
        "samples_per_s": 2.0,
        "thetas": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
        "theta_horizon_s": 3.0,
    },
    "field": {
        "pad_um": 120.0,
        "gap_um": 10.0,
        "ring_um": 3.5,
        "margin_um": 260.0,
        "cloud_reading": "extension",
        "total_cloud_length_um": 17.0,
        "h_um": 1.0,
        "refine": True,  # repeat the 2x3 suite at h/2
        "map_stride": 4,  # potential maps are written every map_stride cells
        "rho_nno_ohm_m": 2.5e-6,
        "rho_hnno_ohm_m": 8.85,
        "thickness_nm": 50.0,
        "rtol": 1e-8,
        "v_pulse_v": 5.0,
        "distance_positions": [1, 2, 3, 4],
        "max_mismatch": 0.05,
        "max_spread_ratio": 0.25,
        "max_refine_change": 0.02,
    },
}


def _type_ok(default, value) -> bool:
    if default is None or value is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _merge(default: dict, user: dict, path: str) -> dict:
    if not isinstance(user, dict):
        raise ConfigurationError(f"expected an object, got {type(user).__name__}", path or "<root>")
    out = copy.deepcopy(default)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in default:
            raise ConfigurationError(f"unknown key {key!r}", where)
        d = default[key]
        if isinstance(d, dict):
            out[key] = _merge(d, value, where)
        elif not _type_ok(d, value):
            raise ConfigurationError(f"expected {type(d).__name__}, got {type(value).__name__}", where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check(cfg: dict):
    if cfg["array"]["mode"] not in ("spatiotemporal", "temporal-only", "bypass"):
        raise ConfigurationError(f"unknown mode {cfg['array']['mode']!r}", "array.mode")
    for m in cfg["task"]["modes"]:
        if m not in ("spatiotemporal", "temporal-only", "bypass"):
            raise ConfigurationError(f"unknown mode {m!r}", "task.modes")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigurationError("seed must be a non-negative integer", "seed")
    if cfg["pattern"]["features"] not in ("final", "steps"):
        raise ConfigurationError("must be 'final' or 'steps'", "pattern.features")
    if cfg["field"]["cloud_reading"] not in ("extension", "total_length"):
        raise ConfigurationError("must be 'extension' or 'total_length'", "field.cloud_reading")
    for path, v in (("array.n_nodes", cfg["array"]["n_nodes"]), ("readout.k", cfg["readout"]["k"])):
        if not isinstance(v, int) or v < 2:
            raise ConfigurationError("must be an integer >= 2", path)


def resolve(user: dict | None = None) -> dict:
    """Defaults overlaid with ``user``; raises ConfigurationError on bad keys."""
    cfg = _merge(DEFAULTS, user or {}, "")
    _check(cfg)
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config ({exc.strerror})", str(path)) from None
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno}: {exc.msg}", str(path)) from None
    return resolve(user)


def apply_overrides(cfg: dict, *, seed: int | None = None, mode: str | None = None) -> dict:
    """Command-line overrides, validated like file values."""
    user = copy.deepcopy(cfg)
    if seed is not None:
        user["seed"] = seed
    if mode is not None:
        user["array"]["mode"] = mode
        user["task"]["modes"] = [mode]
    return resolve(user)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
