import copy
import json
import logging
import os

import numpy as np

from ..errors import ConfigError
from .constants import (
    ASR_CONTEXT,
    ASR_HIDDEN_SIZES,
    ASR_HOP,
    ASR_INCLUDE_DCT,
    ASR_LOG_FLOOR_DB,
    ASR_MEL_FILTERS,
    ASR_WINDOW,
    ATTACK_ALPHA_INIT,
    ATTACK_ALPHA_VALUE,
    ATTACK_CHECK_INTERVAL,
    ATTACK_DURATION,
    ATTACK_EPSILON,
    ATTACK_LR,
    ATTACK_LR_DECAY,
    ATTACK_MAX_ITERS,
    ATTACK_MIN_LR,
    ATTACK_PATIENCE,
    ATTACK_ROBUST_CHECKS,
    ATTACK_SIGMA,
    ATTACK_STAGE2_ITERS,
    CORPUS_SIZE,
    DEFAULT_DURATIONS_MS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SAMPLE_RATE,
    DEFAULT_TIMBRES,
    DEFAULT_TONES_HZ,
    DEFENSE_LOW_RATE,
    DEFENSE_RESTORE_RATE,
    DEFENSE_SIGMA_GRID,
    DEFENSE_TRIALS,
    LOG_INTERVAL,
    PSY_HOP,
    PSY_WINDOW_SIZE,
    RELAY_GAIN_JITTER_DB,
    RELAY_LOW_RATE,
    RELAY_NOISE_SIGMA,
    RELAY_REVERB_DECAY_MS,
    RELAY_REVERB_WET,
    SEARCH_AMPLITUDE,
    SEARCH_BATCH,
    SEARCH_FRAME_LEN_MS,
    SEARCH_K,
    SEARCH_LEVEL,
    SEARCH_LEVEL_BACKOFF_STEPS,
    SEARCH_MAX_ITERS,
    SEARCH_MAX_SATURATION,
    TRAIN_AUGMENT_COPIES,
    TRAIN_BATCH_SIZE,
    TRAIN_EPOCHS,
    TRAIN_HOLDOUT,
    TRAIN_LR,
)

logger = logging.getLogger(__name__)

# Sections whose seed is derived from run.seed when left null
SEED_STREAMS = {
    "corpus": 1,
    "train": 2,
    "attack": 3,
    "search": 4,
    "defense": 5,
    "relay": 6,
}

# Keys whose value may be null
NULLABLE = {
    ("run", "jobs"),
    ("relay", "low_rate"),
    ("search", "level"),
} | {(section, "seed") for section in SEED_STREAMS}

DEFAULTS = {
    "paths": {
        "output_dir": DEFAULT_OUTPUT_DIR,
        "model": "",
        "train_manifest": "",
        "input_wav": "",
        "samples_manifest": "",
        "benign_manifest": "",
        "bank": "",
    },
    "corpus": {
        "size": CORPUS_SIZE,
        "sample_rate": DEFAULT_SAMPLE_RATE,
        "write_wavs": False,
        "seed": None,
    },
    "train": {
        "epochs": TRAIN_EPOCHS,
        "batch_size": TRAIN_BATCH_SIZE,
        "learning_rate": TRAIN_LR,
        "hidden_sizes": list(ASR_HIDDEN_SIZES),
        "context": ASR_CONTEXT,
        "holdout": TRAIN_HOLDOUT,
        "window": ASR_WINDOW,
        "hop": ASR_HOP,
        "mel_filters": ASR_MEL_FILTERS,
        "log_floor_db": ASR_LOG_FLOOR_DB,
        "include_dct": ASR_INCLUDE_DCT,
        "augment_copies": TRAIN_AUGMENT_COPIES,
        "seed": None,
    },
    "attack": {
        "target": "play music",
        "epsilon": ATTACK_EPSILON,
        "lr": ATTACK_LR,
        "sigma": ATTACK_SIGMA,
        "max_iters": ATTACK_MAX_ITERS,
        "alpha_value": ATTACK_ALPHA_VALUE,
        "alpha_init": ATTACK_ALPHA_INIT,
        "duration": ATTACK_DURATION,
        "check_interval": ATTACK_CHECK_INTERVAL,
        "stage2_iters": ATTACK_STAGE2_ITERS,
        "robust_checks": ATTACK_ROBUST_CHECKS,
        "patience": ATTACK_PATIENCE,
        "lr_decay": ATTACK_LR_DECAY,
        "min_lr": ATTACK_MIN_LR,
        "robustness_draws": DEFENSE_TRIALS,
        "seed": None,
    },
    "search": {
        "k": SEARCH_K,
        "frame_len_ms": SEARCH_FRAME_LEN_MS,
        "max_iters": SEARCH_MAX_ITERS,
        "level": SEARCH_LEVEL,
        "amplitude": SEARCH_AMPLITUDE,
        "level_backoff": SEARCH_LEVEL_BACKOFF_STEPS,
        "batch": SEARCH_BATCH,
        "hinge": False,
        "max_saturation": SEARCH_MAX_SATURATION,
        "seed": None,
    },
    "bank": {
        "tones_hz": list(DEFAULT_TONES_HZ),
        "timbres": list(DEFAULT_TIMBRES),
        "durations_ms": list(DEFAULT_DURATIONS_MS),
    },
    "defense": {
        "low_rate": DEFENSE_LOW_RATE,
        "restore_rate": DEFENSE_RESTORE_RATE,
        "sigma_grid": list(DEFENSE_SIGMA_GRID),
        "trials": DEFENSE_TRIALS,
        "benign_count": 40,
        "seed": None,
    },
    "relay": {
        "hops": 2,
        "low_rate": RELAY_LOW_RATE,
        "gain_jitter_db": RELAY_GAIN_JITTER_DB,
        "noise_sigma": RELAY_NOISE_SIGMA,
        "reverb_decay_ms": RELAY_REVERB_DECAY_MS,
        "reverb_wet": RELAY_REVERB_WET,
        "seed": None,
    },
    "run": {
        "seed": 0,
        "jobs": None,
        "log_interval": LOG_INTERVAL,
        "threshold_window": PSY_WINDOW_SIZE,
        "threshold_hop": PSY_HOP,
    },
}


def _kind(value):
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    return type(value).__name__


def _coerce(key, default, value):
    """Check a user value against the default's type; ints stay ints where the default is int"""
    if default is None or value is None:
        return value
    if isinstance(value, tuple):
        value = list(value)
    if _kind(default) != _kind(value):
        raise ConfigError(key, f"expected {_kind(default)}, got {_kind(value)}")
    if isinstance(default, int) and not isinstance(default, bool):
        if float(value) != int(value):
            raise ConfigError(key, f"expected an integer, got {value}")
        return int(value)
    return value


class ExperimentConfig:
    """
    Sectioned experiment settings over built-in defaults.

    Unknown sections or keys are rejected with a ConfigError naming the key.
    """

    def __init__(self, config_file=None):
        self.config_file = config_file
        self.settings = copy.deepcopy(DEFAULTS)
        if config_file:
            self.merge(self.load_settings(config_file))

    def load_settings(self, path):
        """Load a UTF-8 JSON settings document"""
        if not os.path.exists(path):
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError("config", f"invalid JSON in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object of sections")
        logger.info(f"[CONFIG] Loaded settings from {path}")
        return data

    def merge(self, data):
        for section, values in data.items():
            if section not in DEFAULTS:
                raise ConfigError(section, "unknown config section")
            if not isinstance(values, dict):
                raise ConfigError(section, "section must be an object")
            for key, value in values.items():
                self.set_setting(section, key, value)

    def get_section(self, section):
        if section not in self.settings:
            raise ConfigError(section, "unknown config section")
        return dict(self.settings[section])

    def get_setting(self, section, key):
        values = self.get_section(section)
        if key not in values:
            self._unknown(section, key)
        return values[key]

    def _unknown(self, section, key):
        raise ConfigError(f"{section}.{key}", "unknown config key")

    def set_setting(self, section, key, value):
        """Set one value; None leaves non-nullable keys untouched (unset CLI flags)"""
        if section not in DEFAULTS:
            raise ConfigError(section, "unknown config section")
        if key not in DEFAULTS[section]:
            self._unknown(section, key)
        if value is None and (section, key) not in NULLABLE:
            return
        self.settings[section][key] = _coerce(
            f"{section}.{key}", DEFAULTS[section][key], value
        )

    def override(self, section, **values):
        """Apply CLI flag values; flags left unset (None) are ignored"""
        for key, value in values.items():
            if value is not None:
                self.set_setting(section, key, value)

    def seed_for(self, section):
        """Section seed, derived from run.seed when not given"""
        seed = self.settings[section].get("seed")
        if seed is not None:
            return int(seed)
        stream = SEED_STREAMS[section]
        state = np.random.SeedSequence([int(self.settings["run"]["seed"]), stream])
        return int(state.generate_state(1)[0])

    def resolved(self):
        """Full settings with every derived seed filled in"""
        data = copy.deepcopy(self.settings)
        for section in SEED_STREAMS:
            data[section]["seed"] = self.seed_for(section)
        return data

    def save_resolved(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.resolved(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path
