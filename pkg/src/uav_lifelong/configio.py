"""Experiment-config file handling.

Configs are TOML with one table per concern; every key maps onto a field
of ExperimentConfig (or PropulsionParams under [uav]). Unknown tables or
keys are schema violations and raise, so typos cannot silently fall back
to defaults.
"""

from __future__ import annotations

from dataclasses import fields, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .harness import ExperimentConfig
from .uav import PropulsionParams

SECTIONS = {
    "experiment": ("n_devices", "region_side", "horizon_slots", "episodes",
                   "master_seed", "controller", "pipeline", "placement_seed"),
    "device": ("beta", "duration_mean_range", "duration_std_frac",
               "lambda_range", "a_bar_range", "sigma_range", "kappa_range",
               "eps_max_range"),
    "policy": ("sigma_z", "learn_rate", "episodes_per_step",
               "base_learn_budget", "base_learn_budget_new", "rollout_horizon",
               "step_cap", "test_finetune_budget", "init_policy_std"),
    "lifelong": ("h", "eta1", "eta2", "eta3", "gamma_floor", "gamma_trace_cap",
                 "change_threshold", "estimation_window"),
    "flight": ("mu", "v_min", "v_max", "eta4", "eta_a", "hidden_width",
               "velocity_noise", "initial_velocity", "value_coef", "entropy_coef",
               "epsilon_start", "epsilon_end",
               "epsilon_decay", "hover_slots", "slot_seconds"),
}

_UAV_KEYS = tuple(f.name for f in fields(PropulsionParams))
_RANGE_KEYS = ("duration_mean_range", "lambda_range", "a_bar_range",
               "sigma_range", "kappa_range", "eps_max_range")


class ConfigError(ValueError):
    """Raised for unreadable, malformed or schema-violating config files."""


def config_from_dict(data: dict) -> ExperimentConfig:
    kwargs = {}
    for section, content in data.items():
        if section == "uav":
            unknown = set(content) - set(_UAV_KEYS)
            if unknown:
                raise ConfigError(f"unknown [uav] keys: {sorted(unknown)}")
            kwargs["propulsion"] = PropulsionParams(**content)
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown config table [{section}]")
        allowed = SECTIONS[section]
        for key, value in content.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in table [{section}]")
            if key in _RANGE_KEYS:
                if not (isinstance(value, (list, tuple)) and len(value) == 2):
                    raise ConfigError(f"{key} must be a two-element array")
                value = (float(value[0]), float(value[1]))
            kwargs[key] = value
    try:
        config = ExperimentConfig(**kwargs)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return config_from_dict(data)


def apply_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Copy of ``config`` with non-None overrides applied and re-validated."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    new = replace(config, **updates)
    new.validate()
    return new
