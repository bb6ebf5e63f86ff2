"""Run configuration: a flat JSON object, validated before any allocation.

Rejected configs name the offending key.  The only environment override
is KBESOLVE_WORKERS for the worker count.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .engine import INDEX_MODES, REDUCE_MODES, Schedule
from .errors import ConfigError
from .model import ModelConfig
from .propagator import StepConfig

_REQUIRED = ("n_k", "dt", "n_steps")

_KNOWN = {
    "n_k", "dt", "n_steps",
    "band_gap", "hopping", "u", "pulse_intensity", "pulse_center", "dipole",
    "hf_mode", "eps_v_table", "eps_c_table",
    "eps", "max_iter", "quadrature", "limit_mode", "memory_budget_mb",
    "n_shards", "workers", "block_size", "batch_enabled", "fusion_enabled",
    "index_mode", "reduce_mode",
    "trajectory_path", "observables_path", "report_path", "seed",
}


@dataclass
class RunConfig:
    n_k: int
    model: ModelConfig
    step: StepConfig
    schedule: Schedule
    trajectory_path: str | None
    observables_path: str | None
    report_path: str | None
    seed: int


def _want(data: dict, key: str, kind, default=None):
    if key not in data:
        return default
    val = data[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(f"{key}: expected a number, got {val!r}")
        return float(val)
    if kind is int:
        if not isinstance(val, int) or isinstance(val, bool):
            raise ConfigError(f"{key}: expected an integer, got {val!r}")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{key}: expected true/false, got {val!r}")
        return val
    if kind is str:
        if not isinstance(val, str):
            raise ConfigError(f"{key}: expected a string, got {val!r}")
        return val
    return val


def _complex_value(key: str, val) -> complex:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return complex(val)
    if isinstance(val, (list, tuple)) and len(val) == 2:
        return complex(float(val[0]), float(val[1]))
    raise ConfigError(f"{key}: expected a number or [re, im] pair, got {val!r}")


def validate_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    for key in data:
        if key not in _KNOWN:
            raise ConfigError(f"{key}: unknown configuration key")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"{key}: required key missing")

    n_k = _want(data, "n_k", int)
    dt = _want(data, "dt", float)
    n_steps = _want(data, "n_steps", int)
    if n_steps < 0:
        raise ConfigError(f"n_steps: must be >= 0, got {n_steps}")

    u = data.get("u", 0.0)
    if isinstance(u, list):
        u = np.asarray(u, dtype=float)
    elif not isinstance(u, (int, float)) or isinstance(u, bool):
        raise ConfigError(f"u: expected a number or list, got {u!r}")

    model = ModelConfig(
        band_gap=_want(data, "band_gap", float, 2.0),
        hopping=_want(data, "hopping", float, 1.0),
        u_protocol=u,
        pulse_intensity=_want(data, "pulse_intensity", float, 0.0),
        pulse_center=_want(data, "pulse_center", float, 0.5),
        dipole=_complex_value("dipole", data.get("dipole", 1.0)),
        hf_mode=_want(data, "hf_mode", str, "off"),
        eps_v_table=np.asarray(data["eps_v_table"], dtype=float) if "eps_v_table" in data else None,
        eps_c_table=np.asarray(data["eps_c_table"], dtype=float) if "eps_c_table" in data else None,
    )
    try:
        model.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc)) from None

    budget_mb = _want(data, "memory_budget_mb", float, 2048.0)
    if budget_mb <= 0:
        raise ConfigError(f"memory_budget_mb: must be > 0, got {budget_mb}")
    step = StepConfig(
        dt=dt,
        n_steps=n_steps,
        eps=_want(data, "eps", float, 1e-9),
        max_iter=_want(data, "max_iter", int, 6),
        quadrature=_want(data, "quadrature", str, "trapezoid"),
        limit_mode=_want(data, "limit_mode", str, "as-printed"),
        memory_budget=int(budget_mb * 1024**2),
    )
    if step.quadrature not in ("trapezoid", "simpson"):
        raise ConfigError(f"quadrature: must be 'trapezoid' or 'simpson', got {step.quadrature!r}")
    if step.limit_mode not in ("as-printed", "langreth"):
        raise ConfigError(f"limit_mode: must be 'as-printed' or 'langreth', got {step.limit_mode!r}")
    step.validate()

    workers = _want(data, "workers", int, 1)
    env_workers = os.environ.get("KBESOLVE_WORKERS")
    if env_workers is not None:
        try:
            workers = int(env_workers)
        except ValueError:
            raise ConfigError(f"KBESOLVE_WORKERS: expected an integer, got {env_workers!r}") from None
    schedule = Schedule(
        n_shards=_want(data, "n_shards", int, 1),
        workers=workers,
        block_size=_want(data, "block_size", int, 128),
        batch_enabled=_want(data, "batch_enabled", bool, True),
        fusion_enabled=_want(data, "fusion_enabled", bool, True),
        index_mode=_want(data, "index_mode", str, "on-the-fly"),
        reduce_mode=_want(data, "reduce_mode", str, "tree"),
    )
    try:
        schedule.validate(n_k)
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if ":" in msg else f"schedule: {msg}") from None

    return RunConfig(
        n_k=n_k,
        model=model,
        step=step,
        schedule=schedule,
        trajectory_path=_want(data, "trajectory_path", str),
        observables_path=_want(data, "observables_path", str),
        report_path=_want(data, "report_path", str),
        seed=_want(data, "seed", int, 0),
    )


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from None
    return validate_config(data)
