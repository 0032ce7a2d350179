"""Single Pd-Pd device transients and their calibration.

A device is a driven and a grounded cloud sharing one film node, i.e. a
two-node array from :mod:`hnno_sim.reservoir`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .devices import CloudDynParams, CurrentTrace, PulseSpec
from .errors import FitError
from .reservoir import make_array, step_array

__all__ = [
    "PairConfig",
    "calibrate_film_capacitance",
    "pair_array",
    "simulate_pair_transient",
    "sampled_after_pulses",
    "fit_decay_constant",
    "DecayFit",
]


def calibrate_film_capacitance(target_tau: float, r_driver: float, r_ground: float) -> float:
    """Film capacitance (pF) giving decay constant ``target_tau`` (µs) through
    two clouds of resistance ``r_driver`` and ``r_ground`` (MΩ)."""
    if not target_tau > 0:
        raise ValueError(f"target time constant must be positive, got {target_tau}")
    if not (r_driver > 0 and r_ground > 0):
        raise ValueError("resistances must be positive")
    return target_tau * (1.0 / r_driver + 1.0 / r_ground)


@dataclass(frozen=True)
class PairConfig:
    x_rest: float = 2.25  # µm, 0.9 MΩ at the default r_x
    r_x: float = 0.4
    x_bounds: tuple = (1.5, 3.0)
    dyn: CloudDynParams = field(default_factory=CloudDynParams)
    tau_film: float = 5.0
    c_film: float | None = None
    sample_dt: float = 0.1
    tail: float = 30.0  # relaxation recorded after the last pulse, µs
    v_bias: float = 0.0  # driven-terminal voltage between pulses

    def film_capacitance(self) -> float:
        if self.c_film is not None:
            return self.c_film
        r = self.r_x * self.x_rest
        return calibrate_film_capacitance(self.tau_film, r, r)


def pair_array(cfg: PairConfig):
    return make_array(
        2,
        "spatiotemporal",
        x_init=np.array([cfg.x_rest, cfg.x_rest]),
        params=cfg.dyn,
        r_x=cfg.r_x,
        x_bounds=cfg.x_bounds,
        c_film=cfg.film_capacitance(),
        tau_film=cfg.tau_film,
        dt=cfg.sample_dt,
    )


def _drive_waveform(pulses: PulseSpec, cfg: PairConfig) -> np.ndarray:
    """Driven-terminal voltage for each sampling step."""
    dt = cfg.sample_dt
    n = int(round((pulses.duration + cfg.tail) / dt))
    mid = (np.arange(n) + 0.5) * dt
    period = pulses.width + pulses.interval
    k = np.floor(mid / period)
    on = (mid - k * period < pulses.width) & (k < pulses.count)
    return np.where(on, pulses.amplitude, cfg.v_bias)


def simulate_pair_transient(pulses: PulseSpec, cfg: PairConfig | None = None) -> CurrentTrace:
    """Current delivered into the grounded terminal, sampled every ``sample_dt``.

    The value at ``t_k`` is the current flowing out of the film into the
    grounded electrode at the end of step ``k`` (positive when the film sits
    above ground).  Pulse edges must fall on the sampling grid.
    """
    cfg = cfg or PairConfig()
    dt = cfg.sample_dt
    for edge in (pulses.width, pulses.interval):
        if abs(edge / dt - round(edge / dt)) > 1e-9:
            raise ValueError(f"pulse timing {edge} µs is not a multiple of the {dt} µs sampling step")
    a = pair_array(cfg)
    v_drive = _drive_waveform(pulses, cfg)
    out = np.empty(v_drive.size)
    frame = np.zeros(2)
    for k, v in enumerate(v_drive):
        frame[0] = v
        a, cur = step_array(a, frame)
        out[k] = -cur[1]
    t = (np.arange(v_drive.size) + 1) * dt
    return CurrentTrace(t=t, i=out, dt=dt)


def sampled_after_pulses(trace: CurrentTrace, pulses: PulseSpec) -> np.ndarray:
    """Trace value at each falling edge (the sample ending with the pulse)."""
    period = pulses.width + pulses.interval
    edges = np.arange(pulses.count) * period + pulses.width
    idx = np.rint(edges / trace.dt).astype(int) - 1
    return trace.i[idx]


@dataclass(frozen=True)
class DecayFit:
    tau: float
    amplitude: float
    r2: float
    t_start: float


def fit_decay_constant(trace: CurrentTrace, t_start: float | None = None, t_stop: float | None = None) -> DecayFit:
    """Least-squares fit of ``I(t) = I0 * exp(-(t - t_start) / tau)``.

    Without ``t_start`` the window opens one sampling step after the peak
    (the falling edge of the last pulse).  A log-linear fit seeds the
    nonlinear one.
    """
    t, i = trace.t, trace.i
    if t_start is None:
        t_start = t[int(np.argmax(i))] + trace.dt
    sel = t >= t_start - 1e-12
    if t_stop is not None:
        sel &= t <= t_stop + 1e-12
    tt, ii = t[sel] - t_start, i[sel]
    if tt.size < 3:
        raise FitError("fewer than 3 samples in the decay window")
    if np.ptp(ii) <= 1e-12 * max(np.max(np.abs(ii)), 1e-300) or np.all(ii == ii[0]):
        raise FitError("trace does not decay")
    pos = ii > 0
    if pos.sum() < 3:
        raise FitError("decay window has fewer than 3 positive samples")
    slope, intercept = np.polyfit(tt[pos], np.log(ii[pos]), 1)
    if not slope < 0:
        raise FitError(f"trace is not decaying (log slope {slope:.3g})")
    p0 = (math.exp(intercept), -1.0 / slope)
    try:
        (i0, tau), _ = curve_fit(lambda x, a, tau: a * np.exp(-x / tau), tt, ii, p0=p0, maxfev=10000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"exponential fit failed: {exc}") from None
    if not (np.isfinite(tau) and tau > 0):
        raise FitError(f"non-physical decay constant {tau}")
    resid = ii - i0 * np.exp(-tt / tau)
    ss_tot = np.sum((ii - ii.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(tau=float(tau), amplitude=float(i0), r2=float(r2), t_start=float(t_start))
