"""Experiment configuration: dataclass defaults, the line-based key=value
file format, and validation that names the offending field."""

from dataclasses import dataclass, fields, replace
from typing import Optional

from . import model
from .jumps import LevyRadialMeasure, normalizing_c_nu


class ConfigError(ValueError):
    """Invalid configuration; carries the field name and file line if known."""

    def __init__(self, message, field_name=None, line=None):
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        super().__init__(f"{prefix}{message}")
        self.field_name = field_name
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of the study and its diagnostics.

    c_nu1/c_nu2 default to the values that give each truncated intensity
    measure unit total mass ("auto"); beta1/beta2, the eps grid, sample
    count, horizon and grid size carry the study's published defaults.
    """

    # discretization / horizon
    n: int = 32
    dt: float = 1e-3
    t_final: float = 1.0
    record_count: int = 101
    fast_substeps: Optional[int] = None

    # eps grid and sampling
    eps_list: tuple = (1.0, 0.5, 0.25, 0.1)
    n_samples: int = 100
    base_seed: int = 20240

    # jump-noise parameters
    beta1: float = 0.8
    beta2: float = 0.6
    c_nu1: Optional[float] = None  # None -> unit total mass
    c_nu2: Optional[float] = None
    r_min: float = 1e-3

    # moment order and dissipativity slack
    p: int = 1
    gamma: float = 0.1

    # initial data amplitudes: j0 = a(cos x + sin y), theta0 = b(sin x + cos y)
    j0_amplitude: float = 1.0
    theta0_amplitude: float = 0.02

    # blow-up monitor (observation only)
    blowup_threshold: Optional[float] = None

    # ergodic / frozen-equation runs
    frozen_dt: float = 5e-3
    ergodic_burn_in: Optional[float] = None  # None -> 20 / lambda_p
    ergodic_window: Optional[float] = None  # None -> 200 / lambda_p
    ergodic_spacing: Optional[float] = None  # None -> 1 / lambda_p
    ergodic_batches: int = 20
    contraction_t: float = 3.0
    contraction_samples: int = 24

    # increment study
    increment_lags: tuple = (2e-3, 4e-3, 8e-3, 16e-3)
    increment_paths: int = 50
    increment_eps: float = 1.0

    # auxiliary block refinement
    delta_list: tuple = (1e-3, 2e-3, 4e-3, 8e-3)
    khasminskii_eps: float = 0.25
    khasminskii_samples: int = 12
    khasminskii_t: float = 0.5

    # moment study
    moment_samples: int = 32

    # diagnostics thresholds
    slope_slack: float = 0.15
    rate_factor: float = 3.0
    sigma_band: float = 3.0
    exponent_lo: float = 0.30
    exponent_hi: float = 1.00
    r2_min: float = 0.9
    max_blowup_frac: float = 0.05
    trend_alpha: float = 0.05
    kappa_c: float = model.DEFAULT_KAPPA_C

    # orchestration
    workers: int = 1
    out_dir: str = "out"

    # ---- resolved objects -------------------------------------------------

    def resolved_c_nu1(self) -> float:
        if self.c_nu1 is not None:
            return self.c_nu1
        return normalizing_c_nu(self.beta1, self.r_min)

    def resolved_c_nu2(self) -> float:
        if self.c_nu2 is not None:
            return self.c_nu2
        return normalizing_c_nu(self.beta2, self.r_min)

    def measure1(self) -> LevyRadialMeasure:
        return LevyRadialMeasure(self.beta1, self.resolved_c_nu1(), self.r_min)

    def measure2(self) -> LevyRadialMeasure:
        return LevyRadialMeasure(self.beta2, self.resolved_c_nu2(), self.r_min)

    def rates(self) -> model.DissipativityRates:
        return model.compute_rates(self.p, self.gamma, self.measure2())

    def snapshot(self) -> dict:
        """Resolved values for the manifest."""
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["eps_list"] = list(self.eps_list)
        out["delta_list"] = list(self.delta_list)
        out["increment_lags"] = list(self.increment_lags)
        out["c_nu1_resolved"] = self.resolved_c_nu1()
        out["c_nu2_resolved"] = self.resolved_c_nu2()
        return out


_INT_FIELDS = {
    "n", "record_count", "n_samples", "base_seed", "p", "ergodic_batches",
    "contraction_samples", "increment_paths", "khasminskii_samples",
    "moment_samples", "workers",
}
_OPT_INT_FIELDS = {"fast_substeps"}
_FLOAT_FIELDS = {
    "dt", "t_final", "beta1", "beta2", "r_min", "gamma", "j0_amplitude",
    "theta0_amplitude", "frozen_dt", "contraction_t", "increment_eps",
    "khasminskii_eps", "khasminskii_t", "slope_slack", "rate_factor",
    "sigma_band", "exponent_lo", "exponent_hi", "r2_min", "max_blowup_frac",
    "trend_alpha", "kappa_c",
}
_OPT_FLOAT_FIELDS = {
    "c_nu1", "c_nu2", "blowup_threshold", "ergodic_burn_in",
    "ergodic_window", "ergodic_spacing",
}
_LIST_FIELDS = {"eps_list", "delta_list", "increment_lags"}
_STR_FIELDS = {"out_dir"}

# file keys that differ from attribute names
_KEY_ALIASES = {"T": "t_final"}


def _parse_value(name: str, raw: str, line: int):
    try:
        if name in _INT_FIELDS:
            return int(raw)
        if name in _OPT_INT_FIELDS:
            return None if raw.lower() == "auto" else int(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
        if name in _OPT_FLOAT_FIELDS:
            return None if raw.lower() == "auto" else float(raw)
        if name in _LIST_FIELDS:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if not items:
                raise ValueError("empty list")
            return tuple(float(s) for s in items)
        if name in _STR_FIELDS:
            return raw
    except ValueError as exc:
        raise ConfigError(
            f"cannot parse value for {name!r}: {raw!r} ({exc})", name, line
        ) from None
    raise ConfigError(f"unknown key {name!r}", name, line)


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse the line-based key=value format; '#' starts a comment."""
    cfg = base if base is not None else ExperimentConfig()
    overrides = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", line=lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        name = _KEY_ALIASES.get(key, key)
        known = (
            _INT_FIELDS | _OPT_INT_FIELDS | _FLOAT_FIELDS | _OPT_FLOAT_FIELDS
            | _LIST_FIELDS | _STR_FIELDS
        )
        if name not in known:
            raise ConfigError(f"unknown key {key!r}", key, lineno)
        overrides[name] = _parse_value(name, raw, lineno)
    cfg = replace(cfg, **overrides)
    validate_config(cfg)
    return cfg


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base=base)


def _require(cond: bool, message: str, field_name: str):
    if not cond:
        raise ConfigError(message, field_name)


def validate_config(cfg: ExperimentConfig) -> None:
    _require(cfg.n >= 4 and cfg.n % 2 == 0, f"n must be an even integer >= 4, got {cfg.n}", "n")
    _require(cfg.dt > 0.0, f"dt must be positive, got {cfg.dt}", "dt")
    _require(cfg.t_final > 0.0, f"T must be positive, got {cfg.t_final}", "T")
    n_steps = round(cfg.t_final / cfg.dt)
    _require(
        abs(n_steps * cfg.dt - cfg.t_final) < 1e-9 * max(1.0, cfg.t_final),
        f"T={cfg.t_final} must be an integer multiple of dt={cfg.dt}",
        "T",
    )
    _require(cfg.record_count >= 2, "record_count must be >= 2", "record_count")
    _require(len(cfg.eps_list) >= 1, "eps_list must be nonempty", "eps_list")
    for e in cfg.eps_list:
        _require(0.0 < e <= 1.0, f"eps_list values must lie in (0, 1], got {e}", "eps_list")
    _require(cfg.n_samples >= 1, "n_samples must be >= 1", "n_samples")
    for nm, b in (("beta1", cfg.beta1), ("beta2", cfg.beta2)):
        _require(0.0 < b < 1.0, f"{nm} must lie in (0, 1), got {b}", nm)
    for nm, c in (("c_nu1", cfg.c_nu1), ("c_nu2", cfg.c_nu2)):
        if c is not None:
            _require(c >= 0.0, f"{nm} must be nonnegative, got {c}", nm)
    _require(0.0 < cfg.r_min < 1.0, f"r_min must lie in (0, 1), got {cfg.r_min}", "r_min")
    _require(cfg.p >= 1, f"p must be >= 1, got {cfg.p}", "p")
    _require(0.0 < cfg.gamma < 1.0, f"gamma must lie in (0, 1), got {cfg.gamma}", "gamma")
    _require(cfg.frozen_dt > 0.0, "frozen_dt must be positive", "frozen_dt")
    _require(cfg.contraction_t > 0.0, "contraction_t must be positive", "contraction_t")
    _require(cfg.khasminskii_t > 0.0, "khasminskii_t must be positive", "khasminskii_t")
    _require(
        0.0 < cfg.khasminskii_eps <= 1.0, "khasminskii_eps must lie in (0, 1]", "khasminskii_eps"
    )
    _require(
        0.0 < cfg.increment_eps <= 1.0, "increment_eps must lie in (0, 1]", "increment_eps"
    )
    for nm, lst in (("delta_list", cfg.delta_list), ("increment_lags", cfg.increment_lags)):
        _require(len(lst) >= 1, f"{nm} must be nonempty", nm)
        for d in lst:
            k = round(d / cfg.dt)
            _require(
                k >= 1 and abs(k * cfg.dt - d) < 1e-9 * max(cfg.dt, d),
                f"{nm} entries must be positive integer multiples of dt, got {d}",
                nm,
            )
    _require(cfg.workers >= 1, "workers must be >= 1", "workers")
    for nm in (
        "slope_slack", "rate_factor", "sigma_band", "r2_min", "max_blowup_frac",
        "trend_alpha", "j0_amplitude", "kappa_c",
    ):
        _require(getattr(cfg, nm) >= 0.0, f"{nm} must be nonnegative", nm)
    _require(cfg.theta0_amplitude >= 0.0, "theta0_amplitude must be nonnegative", "theta0_amplitude")
    _require(
        cfg.exponent_lo <= cfg.exponent_hi,
        "exponent_lo must not exceed exponent_hi",
        "exponent_lo",
    )
    if cfg.fast_substeps is not None:
        _require(cfg.fast_substeps >= 1, "fast_substeps must be >= 1", "fast_substeps")
    for nm in ("ergodic_burn_in", "ergodic_window", "ergodic_spacing", "blowup_threshold"):
        v = getattr(cfg, nm)
        if v is not None:
            _require(v > 0.0, f"{nm} must be positive", nm)
    _require(cfg.ergodic_batches >= 2, "ergodic_batches must be >= 2", "ergodic_batches")
    for nm in (
        "contraction_samples", "increment_paths", "khasminskii_samples", "moment_samples",
    ):
        _require(getattr(cfg, nm) >= 1, f"{nm} must be >= 1", nm)
