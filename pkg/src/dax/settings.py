"""
Experiment configuration loading.

Config files are flat `key = value` documents with `#` comments, read with
python-dotenv. Unspecified keys fall back to the baseline in config.py, and
environment variables named DAX_<key> (key spelled exactly as in the file)
override file values. Other DAX_* names are ignored.
"""

from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from dotenv import dotenv_values

from . import config
from .errors import ConfigError, InvalidInputError
from .models import FilterConfig, ModelParams

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass
class ExperimentConfig:
    """Everything one `dax run` needs.

    Attributes:
        n, m, N, L, W: Dimensions, ensemble size, window length, window count.
        sigma_obs: Observation noise std.
        lambda_infl: Inflation for the stochastic methods.
        lambda_infl_qpca: Inflation for QPCA-EnDCF (baseline 1.00).
        kappa: QPCA truncation rank.
        forcing, dt, t_obs: Lorenz-96 parameters.
        seed: Base seed for all substreams.
        n_trials: Monte-Carlo trials per method.
        methods: Methods to run, in output order.
        output_dir: Directory receiving CSV files.
        sigma_init: Initial ensemble spread about the true initial state.
        spinup_time: Integration time before x_true(0).
        n_jobs: joblib workers for (trial, method) tasks.
        gain_inverse: "pinv" or "tikhonov" for the QPCA gain.
        tikhonov_eps: Ridge for the Tikhonov gain.
        share_truth: Use one truth/observation set for every trial.
    """
    n: int = config.STATE_DIM
    m: int = config.OBS_DIM
    N: int = config.ENSEMBLE_SIZE
    L: int = config.WINDOW_LENGTH
    W: int = config.NUM_WINDOWS
    sigma_obs: float = config.SIGMA_OBS
    lambda_infl: float = config.LAMBDA_INFL_STOCHASTIC
    lambda_infl_qpca: float = config.LAMBDA_INFL_QPCA
    kappa: int = config.KAPPA
    forcing: float = config.FORCING
    dt: float = config.INTEGRATOR_DT
    t_obs: float = config.OBS_INTERVAL
    seed: int = config.BASE_SEED
    n_trials: int = config.NUM_TRIALS
    methods: list[str] = field(default_factory=lambda: list(config.METHODS))
    output_dir: str = config.OUTPUT_DIR
    sigma_init: float = config.SIGMA_INIT
    spinup_time: float = config.SPINUP_TIME
    n_jobs: int = config.NUM_JOBS
    gain_inverse: str = "pinv"
    tikhonov_eps: float | None = None
    share_truth: bool = True

    @property
    def K(self) -> int:
        return self.W * self.L

    def model_params(self) -> ModelParams:
        return ModelParams(n=self.n, forcing=self.forcing, dt=self.dt, t_obs=self.t_obs)

    def to_filter_config(self, method: str) -> FilterConfig:
        """FilterConfig for one method; inflation depends on the method."""
        lambda_infl = self.lambda_infl_qpca if method == "qpca_endcf" else self.lambda_infl
        return FilterConfig(
            method=method,
            n=self.n,
            m=self.m,
            N=self.N,
            L=self.L,
            W=self.W,
            sigma_obs=self.sigma_obs,
            lambda_infl=lambda_infl,
            kappa=self.kappa,
            model=self.model_params(),
            seed=self.seed,
            gain_inverse=self.gain_inverse,
            tikhonov_eps=self.tikhonov_eps,
        )

    def validate(self) -> None:
        """Check every invariant; the raised ConfigError names the offending key."""
        if self.n < config.MIN_STATE_DIM:
            raise ConfigError("n", f"must be >= {config.MIN_STATE_DIM}, got {self.n}")
        if not 1 <= self.m <= self.n:
            raise ConfigError("m", f"must lie in [1, n={self.n}], got {self.m}")
        if self.N < 2:
            raise ConfigError("N", f"must be >= 2, got {self.N}")
        if self.L < 1:
            raise ConfigError("L", f"must be >= 1, got {self.L}")
        if self.W < 1:
            raise ConfigError("W", f"must be >= 1, got {self.W}")
        if not self.sigma_obs > 0:
            raise ConfigError("sigma_obs", f"must be > 0, got {self.sigma_obs}")
        if self.lambda_infl < 1.0:
            raise ConfigError("lambda_infl", f"must be >= 1, got {self.lambda_infl}")
        if self.lambda_infl_qpca < 1.0:
            raise ConfigError("lambda_infl_qpca", f"must be >= 1, got {self.lambda_infl_qpca}")
        max_kappa = min(self.m * self.L, self.N - 1)
        if not 1 <= self.kappa <= max_kappa:
            raise ConfigError("kappa", f"must lie in [1, min(mL, N-1)={max_kappa}], got {self.kappa}")
        if self.seed < 0:
            raise ConfigError("seed", f"must be >= 0, got {self.seed}")
        if self.n_trials < 1:
            raise ConfigError("n_trials", f"must be >= 1, got {self.n_trials}")
        if not self.methods:
            raise ConfigError("methods", "must name at least one method")
        for method in self.methods:
            if method not in config.METHODS:
                raise ConfigError("methods", f"unknown method '{method}'")
        if not self.sigma_init >= 0:
            raise ConfigError("sigma_init", f"must be >= 0, got {self.sigma_init}")
        if self.spinup_time < 0:
            raise ConfigError("spinup_time", f"must be >= 0, got {self.spinup_time}")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs", "must be nonzero (negative counts from the CPU total)")
        if self.gain_inverse not in config.GAIN_INVERSES:
            raise ConfigError("gain_inverse", f"must be one of {config.GAIN_INVERSES}")
        if self.gain_inverse == "tikhonov" and not (self.tikhonov_eps or 0) > 0:
            raise ConfigError("tikhonov_eps", "must be > 0 when gain_inverse is tikhonov")
        if not self.dt > 0:
            raise ConfigError("dt", f"must be > 0, got {self.dt}")
        try:
            self.model_params()
        except InvalidInputError as exc:
            raise ConfigError("t_obs", str(exc)) from exc


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_methods(raw: str) -> list[str]:
    """Comma-separated method names; "all" and hyphenated CLI spellings accepted."""
    names = [part.strip() for part in raw.split(",") if part.strip()]
    if names == ["all"]:
        return list(config.METHODS)
    return [config.METHOD_ALIASES.get(name, name) for name in names]


def _coerce(key: str, raw: str | None):
    if raw is None or raw.strip() == "":
        raise ConfigError(key, "has no value")
    text = raw.strip()
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() == "none" else float(text)
        if kind == "bool":
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "list[str]":
            return parse_methods(text)
        return text
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {text!r}: {exc}") from exc


def apply_overrides(cfg: ExperimentConfig, values: Mapping[str, str | None]) -> ExperimentConfig:
    """Return a copy of cfg with raw string values applied.

    Raises:
        ConfigError: On an unknown key or an unparseable value.
    """
    updates = {}
    for key, raw in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown key")
        updates[key] = _coerce(key, raw)
    return replace(cfg, **updates)


def load_config(
    path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """Read a config file, apply DAX_* environment overrides and validate.

    Args:
        path: Config file; None means baseline defaults only.
        environ: Environment to scan for overrides (defaults to os.environ).
            DAX_* names that are not config keys are ignored.

    Raises:
        ConfigError: Missing file, unknown key, bad value or violated invariant.
    """
    cfg = ExperimentConfig()
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError("config", f"file not found: {config_path}")
        cfg = apply_overrides(cfg, dotenv_values(config_path))

    env = os.environ if environ is None else environ
    overrides = {
        key: value
        for name, value in env.items()
        if name.startswith(config.ENV_PREFIX)
        and (key := name[len(config.ENV_PREFIX):]) in _FIELD_TYPES
    }
    if overrides:
        cfg = apply_overrides(cfg, overrides)

    cfg.validate()
    return cfg
