"""Compensated Poisson jump noise with truncated power-law radial intensity.

The intensity measure nu(dz) = C |z|^(-1-beta) dz on {|z|_H < 1} is reduced
to its radial marginal rho(r) = c_nu * r^(-1-beta) on [r_min, 1). Truncating
jumps below r_min makes the activity finite, so a step carries a Poisson
number of events plus the -nu*t compensator applied as a drift.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class LevyRadialMeasure:
    """Radial density rho(r) = c_nu * r^(-1-beta) on [r_min, 1)."""

    beta: float
    c_nu: float = 1.0
    r_min: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.c_nu < 0.0:
            raise ValueError(f"c_nu must be nonnegative, got {self.c_nu}")
        if not 0.0 < self.r_min < 1.0:
            raise ValueError(f"r_min must lie in (0, 1), got {self.r_min}")


@dataclass(frozen=True)
class JumpEvent:
    """One jump: offset within the current step and mark radius."""

    time: float
    radius: float


@dataclass(frozen=True)
class NoiseStream:
    """A deterministic event source; time_scale = 1/eps for the fast noise."""

    measure: LevyRadialMeasure
    rng: np.random.Generator
    time_scale: float = 1.0


def make_stream(measure: LevyRadialMeasure, base_seed: int, *stream_key: int) -> NoiseStream:
    """Stream seeded by (base_seed, *stream_key); the key makes independent
    streams reproducible regardless of worker scheduling."""
    rng = np.random.default_rng((int(base_seed),) + tuple(int(k) for k in stream_key))
    return NoiseStream(measure=measure, rng=rng)


def total_rate(m: LevyRadialMeasure) -> float:
    """Total mass Lambda = c_nu * (r_min^-beta - 1) / beta of the measure."""
    return m.c_nu * (m.r_min ** (-m.beta) - 1.0) / m.beta


def normalizing_c_nu(beta: float, r_min: float) -> float:
    """c_nu making the truncated measure a probability measure (Lambda = 1)."""
    return beta / (r_min ** (-beta) - 1.0)


def sample_count(stream: NoiseStream, dt: float) -> int:
    """Poisson event count with mean Lambda * time_scale * dt."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    lam = total_rate(stream.measure) * stream.time_scale * dt
    if lam == 0.0:
        return 0
    return int(stream.rng.poisson(lam))


def sample_radii(stream: NoiseStream, size: int) -> np.ndarray:
    """Inverse-CDF radius draws, r = (1 + U (r_min^-beta - 1))^(-1/beta)."""
    m = stream.measure
    u = stream.rng.random(size)
    r = (1.0 + u * (m.r_min ** (-m.beta) - 1.0)) ** (-1.0 / m.beta)
    return np.clip(r, m.r_min, np.nextafter(1.0, 0.0))


def sample_radius(stream: NoiseStream) -> float:
    return float(sample_radii(stream, 1)[0])


def sample_events(stream: NoiseStream, dt: float) -> list[JumpEvent]:
    """All jumps of one step: count, then offsets in [0, dt), then radii."""
    n = sample_count(stream, dt)
    if n == 0:
        return []
    times = stream.rng.uniform(0.0, dt, n)
    radii = sample_radii(stream, n)
    return [JumpEvent(float(t), float(r)) for t, r in zip(times, radii)]


def compensator_weight(m: LevyRadialMeasure, shape) -> float:
    """Integral of shape(r) against rho(r) over [r_min, 1).

    Used to apply the -nu*t compensator drift for jump amplitudes that
    factor as field x shape(r). Adaptive quadrature, abs tolerance 1e-10.
    """
    if m.c_nu == 0.0:
        return 0.0

    def integrand(r):
        return shape(r) * m.c_nu * r ** (-1.0 - m.beta)

    value, _ = quad(integrand, m.r_min, 1.0, epsabs=1e-10, epsrel=1e-10, limit=200)
    if not math.isfinite(value):
        raise FloatingPointError("compensator integrand produced non-finite values")
    return value


def rescale(stream: NoiseStream, eps: float) -> NoiseStream:
    """Speed the stream up by 1/eps (the fast-noise time change)."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return replace(stream, time_scale=1.0 / eps)
