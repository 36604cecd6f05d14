"""Run configuration: JSON key-value file over fixed defaults.

Unknown keys are rejected anywhere in the tree.  The COOPTRACK_SEED
environment variable overrides the configured seed.
"""

import copy
import hashlib
import json
import os

from . import ekf
from . import metrics
from . import track_manager
from .errors import ConfigError

SEED_ENV_VAR = "COOPTRACK_SEED"

DEFAULTS = {
    "seed": 20240001,
    "output_dir": "out",
    "models": ["P", "C"],
    "filter": {
        "process": {"sigma_w_gamma_dot": 1.5, "sigma_w_v_dot": 2.5, "T": 0.020},
        "measurement": {"sigma_x": 0.15, "sigma_y": 0.15, "sigma_gamma_dot": 0.3,
                        "r_divide_by_T": True},
        "device_gate": 5.0,
    },
    "manager": {
        "pixel": {"gate_distance": 40.0, "miss_ratio_max": 0.30,
                  "update_timeout": 1.0, "min_valid_age": 4},
        "coop": {"gate_distance": 2.0, "miss_ratio_max": 0.50,
                 "update_timeout": 2.0, "min_valid_age": 4},
    },
    "metric": {"tau": 1.0, "alpha": 0.025, "beta": 0.01},
    "scenes": {
        "n_starting": 5,
        "n_turning": 5,
        "occlusion_durations": [1.0, 2.0],
        "occlusion_end_offset": 3.0,
        "starting": {"duration": 14.0, "v_peak": 3.0, "ramp_rate": 1.5,
                     "ramp_center_time": 10.0},
        "turning": {"duration": 12.0, "v_peak": 4.0, "turn_radius": 5.0,
                    "turn_center_time": 8.0},
        "noise": {"sigma_detection": 0.15, "sigma_device_gamma_dot": 0.3,
                  "sigma_device_v": 0.3, "device_delay": 0.3,
                  "device_bias_gamma_dot": 0.35, "device_bias_v": 0.35,
                  "device_bias_tau": 4.0,
                  "dropout_prob": 0.05, "sigma_gnss_v": 0.3,
                  "sigma_gnss_pos": 3.0},
    },
    "velocity": {"n_trees": 300, "max_depth": 6, "n_bins": 64,
                 "training_scenes": 24, "holdout_fraction": 0.25},
}


def _merge(defaults, overrides, path=""):
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown configuration key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here} must be an object")
            merged[key] = _merge(defaults[key], value, here)
        else:
            merged[key] = value
    return merged


class RunConfig:
    """Resolved configuration tree with typed accessors."""

    def __init__(self, raw):
        self.raw = raw
        try:
            self.process = ekf.ProcessNoiseParams(**raw["filter"]["process"])
            self.measurement = ekf.MeasurementNoiseParams(**raw["filter"]["measurement"])
            self.metric = metrics.MetricConfig(**raw["metric"])
            self.manager_pixel = track_manager.ManagerConfig(
                mode=track_manager.Mode.PIXEL_2D, **raw["manager"]["pixel"])
            self.manager_coop = track_manager.ManagerConfig(
                mode=track_manager.Mode.COOP_3D, **raw["manager"]["coop"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        self.device_gate = float(raw["filter"]["device_gate"])
        self.seed = int(raw["seed"])
        self.output_dir = str(raw["output_dir"])
        self.models = list(raw["models"])
        for model in self.models:
            if model not in ("P", "C"):
                raise ConfigError(f"unknown model: {model}")
        self.scenes = raw["scenes"]
        self.velocity = raw["velocity"]

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def load_config(path=None, overrides=None) -> RunConfig:
    """Defaults, optionally overlaid with a JSON file and an override dict."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        raw = _merge(raw, data)
    if overrides:
        raw = _merge(raw, overrides)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            raw["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
    return RunConfig(raw)
