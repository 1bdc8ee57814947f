"""Time stepping for the four process families: the two-scale system, the
frozen fast equation, the averaged slow equation, and the block-frozen
auxiliary pair.

One step is integrating-factor Euler: the exact diffusion factor
exp(-|k|^2 dt) (divided by eps for the fast variable) is applied to the
state plus the explicit drift increment, and the step's compensated jump
increments are added afterwards. The fast advection term may be split into
substeps (default ceil(1/sqrt(eps))) to keep the explicit part stable; the
diffusion factor is exact at any dt, so the 1/eps stiffness never enters
the stability constraint.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .jumps import NoiseStream, compensator_weight, rescale, sample_events, total_rate
from .spectral import (
    SpectralField,
    VelocityField,
    advect_physical,
    biot_savart,
    norm_grad,
    norm_h,
    velocity_physical,
)


class BlowUpError(RuntimeError):
    """A field became non-finite; carries the time and the variable name."""

    def __init__(self, t: float, variable: str):
        super().__init__(f"non-finite {variable} at t={t:.6g}")
        self.t = t
        self.variable = variable


@dataclass(frozen=True)
class StepConfig:
    dt: float
    eps: float = 1.0
    fast_substeps: Optional[int] = None
    blowup_threshold: Optional[float] = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def substeps(self) -> int:
        if self.fast_substeps is not None:
            return max(1, int(self.fast_substeps))
        return int(math.ceil(1.0 / math.sqrt(self.eps)))


@dataclass(frozen=True)
class SlowFastState:
    j: SpectralField
    theta: SpectralField
    t: float
    eps: float


@dataclass(frozen=True)
class CoupledNoise:
    """stream1 drives the slow jumps and is shared bit-identically with the
    paired averaged run; stream2 (absent for averaged runs) drives the fast
    jumps at its base rate, rescaled by the stepper."""

    stream1: NoiseStream
    stream2: Optional[NoiseStream] = None


@dataclass(frozen=True)
class _Precomp:
    e1: np.ndarray
    e2sub: np.ndarray
    n_sub: int
    w1: float
    w2: float


def _precompute(grid, cfg: StepConfig, coeffs, noise: CoupledNoise) -> _Precomp:
    e1 = np.exp(-grid.ksq * cfg.dt)
    n_sub = cfg.substeps
    e2sub = np.exp(-grid.ksq * cfg.dt / (n_sub * cfg.eps))
    w1 = 0.0
    if noise.stream1 is not None and total_rate(noise.stream1.measure) > 0.0:
        w1 = compensator_weight(noise.stream1.measure, coeffs.sigma1_shape)
    w2 = 0.0
    if noise.stream2 is not None and total_rate(noise.stream2.measure) > 0.0:
        w2 = compensator_weight(noise.stream2.measure, coeffs.sigma2_shape)
    return _Precomp(e1=e1, e2sub=e2sub, n_sub=n_sub, w1=w1, w2=w2)


def _compensated_shape_sum(stream: NoiseStream, dt: float, shape, weight: float) -> float:
    """Sum of shape(r) over the step's events minus the compensator mass."""
    events = sample_events(stream, dt)
    s = 0.0
    for e in events:
        s += shape(e.radius)
    return s - weight * stream.time_scale * dt


def _check_finite(coeffs: np.ndarray, t: float, variable: str):
    if not np.all(np.isfinite(coeffs)):
        raise BlowUpError(t, variable)


def step_slow_fast(
    state: SlowFastState,
    cfg: StepConfig,
    noise: CoupledNoise,
    coeffs,
    pre: Optional[_Precomp] = None,
    pin_slow: bool = False,
) -> SlowFastState:
    """One step of the two-scale system.

    pin_slow freezes j at its current value (used by the fast-marginal
    consistency diagnostics); theta still sees the pinned velocity.
    """
    grid = state.j.grid
    if pre is None:
        pre = _precompute(grid, cfg, coeffs, noise)
    dt = cfg.dt
    jc = state.j.coeffs
    thc = state.theta.coeffs

    u = biot_savart(state.j)
    u1p, u2p = velocity_physical(u)

    if not pin_slow:
        adv_j = advect_physical(u1p, u2p, state.j)
        drift = -adv_j.coeffs + 1j * grid.kx * thc
        if coeffs.f is not None:
            drift = drift + coeffs.f(state.j, state.theta).coeffs
        j_new = pre.e1 * (jc + dt * drift)
    else:
        j_new = jc.copy()

    dts = dt / pre.n_sub
    th_new = thc
    for _ in range(pre.n_sub):
        adv_t = advect_physical(u1p, u2p, SpectralField(grid, th_new))
        th_new = pre.e2sub * (th_new - (dts / cfg.eps) * adv_t.coeffs)

    if not pin_slow and noise.stream1 is not None and total_rate(noise.stream1.measure) > 0.0:
        inc1 = _compensated_shape_sum(noise.stream1, dt, coeffs.sigma1_shape, pre.w1)
        amp1 = coeffs.sigma1_amp(SpectralField(grid, j_new))
        j_new = j_new + inc1 * amp1.coeffs
    if noise.stream2 is not None and total_rate(noise.stream2.measure) > 0.0:
        fast = rescale(noise.stream2, cfg.eps)
        inc2 = _compensated_shape_sum(fast, dt, coeffs.sigma2_shape, pre.w2)
        amp2 = coeffs.sigma2_amp(SpectralField(grid, th_new))
        th_new = th_new + inc2 * amp2.coeffs

    j_new[0, 0] = 0.0
    th_new[0, 0] = 0.0
    t_new = state.t + dt
    _check_finite(j_new, t_new, "j")
    _check_finite(th_new, t_new, "theta")
    return SlowFastState(
        SpectralField(grid, j_new), SpectralField(grid, th_new), t_new, cfg.eps
    )


def step_frozen(
    theta: SpectralField,
    u_phys,
    cfg: StepConfig,
    stream2: NoiseStream,
    coeffs,
    e_unit: np.ndarray,
    w2: float,
    t: float = 0.0,
) -> SpectralField:
    """One unit-time-scale step of the frozen fast equation at fixed velocity.

    u_phys is the (u1, u2) physical sample pair, precomputed once per run
    since the advecting velocity never changes.
    """
    grid = theta.grid
    u1p, u2p = u_phys
    adv = advect_physical(u1p, u2p, theta)
    th_new = e_unit * (theta.coeffs - cfg.dt * adv.coeffs)
    if stream2 is not None and total_rate(stream2.measure) > 0.0:
        inc = _compensated_shape_sum(stream2, cfg.dt, coeffs.sigma2_shape, w2)
        amp = coeffs.sigma2_amp(SpectralField(grid, th_new))
        th_new = th_new + inc * amp.coeffs
    th_new[0, 0] = 0.0
    _check_finite(th_new, t + cfg.dt, "theta_frozen")
    return SpectralField(grid, th_new)


def step_averaged(
    j_bar: SpectralField,
    cfg: StepConfig,
    noise: CoupledNoise,
    avg,
    pre: Optional[_Precomp] = None,
    t: float = 0.0,
) -> SpectralField:
    """One step of the averaged slow equation; consumes stream1 only."""
    grid = j_bar.grid
    if pre is None:
        pre = _precompute(grid, cfg, _AveragedAsCoeffs(avg), noise)
    dt = cfg.dt
    u = biot_savart(j_bar)
    u1p, u2p = velocity_physical(u)
    adv = advect_physical(u1p, u2p, j_bar)
    drift = -adv.coeffs
    if avg.f_bar is not None:
        drift = drift + avg.f_bar(j_bar).coeffs
    g_field = avg.g(u)
    drift = drift + 1j * grid.kx * g_field.coeffs
    j_new = pre.e1 * (j_bar.coeffs + dt * drift)
    if noise.stream1 is not None and total_rate(noise.stream1.measure) > 0.0:
        inc = _compensated_shape_sum(noise.stream1, dt, avg.sigma1_shape, pre.w1)
        amp = avg.sigma1_amp(SpectralField(grid, j_new))
        j_new = j_new + inc * amp.coeffs
    j_new[0, 0] = 0.0
    _check_finite(j_new, t + dt, "j_bar")
    return SpectralField(grid, j_new)


class _AveragedAsCoeffs:
    """Adapter so the shared precompute sees sigma1 of an AveragedSet."""

    def __init__(self, avg):
        self.sigma1_shape = avg.sigma1_shape
        self.sigma2_shape = lambda r: 0.0
        self.f = avg.f_bar


@dataclass
class PathRecord:
    times: np.ndarray
    j_norm: np.ndarray
    j_grad_norm: np.ndarray
    theta_norm: Optional[np.ndarray] = None
    theta_grad_norm: Optional[np.ndarray] = None
    j_fields: Optional[list] = None
    theta_fields: Optional[list] = None
    tau_m: Optional[float] = None


def _record_indices(record_times, dt: float, n_steps: int) -> dict:
    out = {}
    for t in record_times:
        idx = int(round(t / dt))
        if abs(idx * dt - t) > 1e-9 * max(1.0, abs(t)) + 1e-12:
            raise ValueError(f"record time {t} is not a multiple of dt={dt}")
        if idx < 0 or idx > n_steps:
            raise ValueError(f"record time {t} outside [0, {n_steps * dt}]")
        out[idx] = t
    return out


def _steps_for(t_final: float, dt: float) -> int:
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"horizon {t_final} is not a multiple of dt={dt}")
    return n


def integrate_slow_fast(
    j0: SpectralField,
    theta0: SpectralField,
    cfg: StepConfig,
    noise: CoupledNoise,
    coeffs,
    t_final: float,
    record_times: Sequence[float],
    record_j_fields: bool = False,
    record_theta_fields: bool = False,
    pin_slow: bool = False,
) -> PathRecord:
    """Step the two-scale system to t_final, recording at record_times.

    Deterministic given the noise streams' seeds; the recorded norms of two
    runs with equal seeds agree bit for bit.
    """
    grid = j0.grid
    n_steps = _steps_for(t_final, cfg.dt)
    rec = _record_indices(record_times, cfg.dt, n_steps)
    pre = _precompute(grid, cfg, coeffs, noise)
    state = SlowFastState(j0, theta0, 0.0, cfg.eps)

    times, jn, jg, tn, tg = [], [], [], [], []
    j_fields = [] if record_j_fields else None
    theta_fields = [] if record_theta_fields else None
    tau_m = None

    def _record(i, st):
        if i in rec:
            times.append(rec[i])
            jn.append(norm_h(st.j))
            jg.append(norm_grad(st.j))
            tn.append(norm_h(st.theta))
            tg.append(norm_grad(st.theta))
            if j_fields is not None:
                j_fields.append(st.j.coeffs.copy())
            if theta_fields is not None:
                theta_fields.append(st.theta.coeffs.copy())

    _record(0, state)
    for i in range(1, n_steps + 1):
        state = step_slow_fast(state, cfg, noise, coeffs, pre=pre, pin_slow=pin_slow)
        if cfg.blowup_threshold is not None and tau_m is None:
            if norm_h(state.j) > cfg.blowup_threshold:
                tau_m = state.t
        _record(i, state)

    return PathRecord(
        times=np.asarray(times),
        j_norm=np.asarray(jn),
        j_grad_norm=np.asarray(jg),
        theta_norm=np.asarray(tn),
        theta_grad_norm=np.asarray(tg),
        j_fields=j_fields,
        theta_fields=theta_fields,
        tau_m=tau_m,
    )


def integrate_averaged(
    j0: SpectralField,
    cfg: StepConfig,
    noise: CoupledNoise,
    avg,
    t_final: float,
    record_times: Sequence[float],
    record_j_fields: bool = False,
) -> PathRecord:
    grid = j0.grid
    n_steps = _steps_for(t_final, cfg.dt)
    rec = _record_indices(record_times, cfg.dt, n_steps)
    pre = _precompute(grid, cfg, _AveragedAsCoeffs(avg), noise)

    times, jn, jg = [], [], []
    j_fields = [] if record_j_fields else None
    tau_m = None
    j = j0
    t = 0.0

    def _record(i, fld):
        if i in rec:
            times.append(rec[i])
            jn.append(norm_h(fld))
            jg.append(norm_grad(fld))
            if j_fields is not None:
                j_fields.append(fld.coeffs.copy())

    _record(0, j)
    for i in range(1, n_steps + 1):
        j = step_averaged(j, cfg, noise, avg, pre=pre, t=t)
        t = i * cfg.dt
        if cfg.blowup_threshold is not None and tau_m is None:
            if norm_h(j) > cfg.blowup_threshold:
                tau_m = t
        _record(i, j)

    return PathRecord(
        times=np.asarray(times),
        j_norm=np.asarray(jn),
        j_grad_norm=np.asarray(jg),
        j_fields=j_fields,
        tau_m=tau_m,
    )


def integrate_frozen(
    theta0: SpectralField,
    u: VelocityField,
    cfg: StepConfig,
    stream2: NoiseStream,
    coeffs,
    t_final: float,
    record_times: Sequence[float],
    record_theta_fields: bool = False,
) -> PathRecord:
    """Frozen fast equation at fixed velocity u, unit time scale."""
    grid = theta0.grid
    n_steps = _steps_for(t_final, cfg.dt)
    rec = _record_indices(record_times, cfg.dt, n_steps)
    e_unit = np.exp(-grid.ksq * cfg.dt)
    w2 = 0.0
    if stream2 is not None and total_rate(stream2.measure) > 0.0:
        w2 = compensator_weight(stream2.measure, coeffs.sigma2_shape)
    u_phys = velocity_physical(u)

    times, tn, tg = [], [], []
    theta_fields = [] if record_theta_fields else None
    theta = theta0

    def _record(i, fld):
        if i in rec:
            times.append(rec[i])
            tn.append(norm_h(fld))
            tg.append(norm_grad(fld))
            if theta_fields is not None:
                theta_fields.append(fld.coeffs.copy())

    _record(0, theta)
    for i in range(1, n_steps + 1):
        theta = step_frozen(theta, u_phys, cfg, stream2, coeffs, e_unit, w2, t=(i - 1) * cfg.dt)
        _record(i, theta)

    tn = np.asarray(tn)
    return PathRecord(
        times=np.asarray(times),
        j_norm=np.zeros_like(tn),
        j_grad_norm=np.zeros_like(tn),
        theta_norm=tn,
        theta_grad_norm=np.asarray(tg),
        theta_fields=theta_fields,
    )


def frozen_snapshots(
    theta0: SpectralField,
    u: VelocityField,
    coeffs,
    stream2: NoiseStream,
    dt: float,
    burn_in: float,
    window: float,
    spacing: float,
):
    """Yield frozen-run snapshots every `spacing` time units after burn-in."""
    grid = theta0.grid
    cfg = StepConfig(dt=dt)
    e_unit = np.exp(-grid.ksq * dt)
    w2 = 0.0
    if stream2 is not None and total_rate(stream2.measure) > 0.0:
        w2 = compensator_weight(stream2.measure, coeffs.sigma2_shape)
    u_phys = velocity_physical(u)

    burn_steps = int(math.ceil(burn_in / dt))
    gap_steps = max(1, int(round(spacing / dt)))
    total_steps = burn_steps + int(math.ceil(window / dt))

    theta = theta0
    for i in range(1, total_steps + 1):
        theta = step_frozen(theta, u_phys, cfg, stream2, coeffs, e_unit, w2, t=(i - 1) * dt)
        if i > burn_steps and (i - burn_steps) % gap_steps == 0:
            yield theta.copy()


@dataclass
class KhasminskiiRecord:
    """Joint true/auxiliary paths with the gap diagnostics pre-integrated."""

    times: np.ndarray
    theta_gap_sq: np.ndarray  # |theta_hat - theta|_H^2 at every step
    j_gap_sup: float  # sup_t |j_hat - j|_H
    theta_gap_integral: float  # trapezoid of theta_gap_sq over [0, T]
    theta_hat_fields: Optional[list] = None
    record_times: Optional[np.ndarray] = None


def run_khasminskii(
    j0: SpectralField,
    theta0: SpectralField,
    cfg: StepConfig,
    noise: CoupledNoise,
    coeffs,
    t_final: float,
    delta: float,
    record_times: Optional[Sequence[float]] = None,
    record_theta_hat_fields: bool = False,
) -> KhasminskiiRecord:
    """Integrate the true pair and the block-frozen auxiliary pair jointly.

    On each block [k delta, (k+1) delta) the auxiliary temperature advects
    with the velocity frozen at the block's left endpoint and feeds the
    auxiliary vorticity through f evaluated at the frozen slow state; both
    pairs consume identical jump events, as they live on one noise path.
    """
    grid = j0.grid
    dt = cfg.dt
    n_steps = _steps_for(t_final, cfg.dt)
    block_steps = max(1, int(round(delta / dt)))
    if abs(block_steps * dt - delta) > 1e-9 * max(dt, delta):
        raise ValueError(f"delta={delta} is not an integer multiple of dt={dt}")
    rec = (
        _record_indices(record_times, dt, n_steps) if record_times is not None else {}
    )
    pre = _precompute(grid, cfg, coeffs, noise)
    has_n1 = noise.stream1 is not None and total_rate(noise.stream1.measure) > 0.0
    has_n2 = noise.stream2 is not None and total_rate(noise.stream2.measure) > 0.0
    fast = rescale(noise.stream2, cfg.eps) if has_n2 else None
    dts = dt / pre.n_sub

    j = j0.coeffs.copy()
    th = theta0.coeffs.copy()
    jh = j0.coeffs.copy()
    thh = theta0.coeffs.copy()

    frozen_j = SpectralField(grid, j.copy())
    frozen_u_phys = velocity_physical(biot_savart(frozen_j))

    gap_sq = [0.0]
    j_gap_sup = 0.0
    th_hat_fields = [] if record_theta_hat_fields else None
    rec_times_out = []
    if 0 in rec:
        rec_times_out.append(rec[0])
        if th_hat_fields is not None:
            th_hat_fields.append(thh.copy())

    for i in range(n_steps):
        t = i * dt
        if i % block_steps == 0:
            frozen_j = SpectralField(grid, j.copy())
            frozen_u_phys = velocity_physical(biot_savart(frozen_j))

        j_field = SpectralField(grid, j)
        th_field = SpectralField(grid, th)
        u1p, u2p = velocity_physical(biot_savart(j_field))

        # true slow drift
        adv_j = advect_physical(u1p, u2p, j_field)
        drift_j = -adv_j.coeffs + 1j * grid.kx * th
        if coeffs.f is not None:
            drift_j = drift_j + coeffs.f(j_field, th_field).coeffs
        j_new = pre.e1 * (j + dt * drift_j)

        # auxiliary slow drift: true velocity, frozen slow argument of f,
        # auxiliary temperature in f and in the coupling term
        adv_jh = advect_physical(u1p, u2p, SpectralField(grid, jh))
        drift_jh = -adv_jh.coeffs + 1j * grid.kx * thh
        if coeffs.f is not None:
            drift_jh = drift_jh + coeffs.f(frozen_j, SpectralField(grid, thh)).coeffs
        jh_new = pre.e1 * (jh + dt * drift_jh)

        # fast variables: true advects with current u, auxiliary with frozen u
        th_new = th
        thh_new = thh
        for _ in range(pre.n_sub):
            adv_t = advect_physical(u1p, u2p, SpectralField(grid, th_new))
            th_new = pre.e2sub * (th_new - (dts / cfg.eps) * adv_t.coeffs)
            adv_th = advect_physical(
                frozen_u_phys[0], frozen_u_phys[1], SpectralField(grid, thh_new)
            )
            thh_new = pre.e2sub * (thh_new - (dts / cfg.eps) * adv_th.coeffs)

        if has_n1:
            inc1 = _compensated_shape_sum(noise.stream1, dt, coeffs.sigma1_shape, pre.w1)
            # sigma1 of the auxiliary slow equation reads the true state
            amp1 = coeffs.sigma1_amp(SpectralField(grid, j_new))
            j_new = j_new + inc1 * amp1.coeffs
            jh_new = jh_new + inc1 * amp1.coeffs
        if has_n2:
            inc2 = _compensated_shape_sum(fast, dt, coeffs.sigma2_shape, pre.w2)
            th_new = th_new + inc2 * coeffs.sigma2_amp(SpectralField(grid, th_new)).coeffs
            thh_new = thh_new + inc2 * coeffs.sigma2_amp(SpectralField(grid, thh_new)).coeffs

        for arr in (j_new, th_new, jh_new, thh_new):
            arr[0, 0] = 0.0
        _check_finite(j_new, t + dt, "j")
        _check_finite(th_new, t + dt, "theta")
        _check_finite(jh_new, t + dt, "j_hat")
        _check_finite(thh_new, t + dt, "theta_hat")
        j, th, jh, thh = j_new, th_new, jh_new, thh_new

        d = thh - th
        gap_sq.append(float(np.sum(np.abs(d) ** 2)) * (2.0 * np.pi) ** 2)
        dj = jh - j
        j_gap_sup = max(j_gap_sup, 2.0 * np.pi * float(np.sqrt(np.sum(np.abs(dj) ** 2))))
        if (i + 1) in rec:
            rec_times_out.append(rec[i + 1])
            if th_hat_fields is not None:
                th_hat_fields.append(thh.copy())

    times = np.arange(n_steps + 1) * dt
    gap_sq = np.asarray(gap_sq)
    return KhasminskiiRecord(
        times=times,
        theta_gap_sq=gap_sq,
        j_gap_sup=j_gap_sup,
        theta_gap_integral=float(np.trapezoid(gap_sq, times)),
        theta_hat_fields=th_hat_fields,
        record_times=np.asarray(rec_times_out) if rec_times_out else None,
    )


def integrate(kind: str, cfg: StepConfig, noise: CoupledNoise, t_final: float, **kwargs):
    """Dispatch by process family: slow_fast | frozen | averaged | auxiliary."""
    if kind == "slow_fast":
        return integrate_slow_fast(cfg=cfg, noise=noise, t_final=t_final, **kwargs)
    if kind == "frozen":
        return integrate_frozen(
            cfg=cfg, stream2=noise.stream2, t_final=t_final, **kwargs
        )
    if kind == "averaged":
        return integrate_averaged(cfg=cfg, noise=noise, t_final=t_final, **kwargs)
    if kind == "auxiliary":
        return run_khasminskii(cfg=cfg, noise=noise, t_final=t_final, **kwargs)
    raise ValueError(f"unknown process kind: {kind!r}")
