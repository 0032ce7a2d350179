"""Compact models for the two nickelate junction types.

Volatile Pd-Pd nodes are described by the thickness of the hydrogen cloud
under each electrode (:class:`CloudState`).  Non-volatile Pd-Au cells are
described by a programmable conductance (:class:`NonVolatileCell`).

Units used throughout the package: µm, µs, V, MΩ for cloud resistance,
µS for conductance, µA for current, pF for capacitance.  Programming rate
constants of the non-volatile cell are in Ω·V⁻¹·µs⁻¹ because the update
rule acts on resistance in ohms.

All state objects are frozen dataclasses; fields may be scalars or numpy
arrays of any shape, in which case every operation acts elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidStateError, OutOfLinearRangeError

__all__ = [
    "CloudState",
    "CloudDynParams",
    "NonVolatileCell",
    "PulseSpec",
    "CurrentTrace",
    "cloud_resistance",
    "cloud_conductance",
    "step_cloud",
    "program_nonvolatile",
    "read_cell",
    "program_to_conductance",
    "multilevel_targets",
]

# Pd-Au conductance window, 40 kΩ .. 350 kΩ expressed in µS.
G_MIN_DEFAULT = 1e6 / 350e3
G_MAX_DEFAULT = 1e6 / 40e3


@dataclass(frozen=True)
class CloudState:
    """Hydrogen cloud thickness under one or more Pd electrodes."""

    x: np.ndarray | float
    x_rest: np.ndarray | float = 2.25
    x_min: float = 1.5
    x_max: float = 3.0
    r_x: float = 0.4  # MΩ per µm

    def __post_init__(self):
        if not (0 < self.x_min < self.x_max):
            raise InvalidStateError(f"bad thickness bounds [{self.x_min}, {self.x_max}]")
        if self.r_x <= 0:
            raise InvalidStateError(f"unit resistance must be positive, got {self.r_x}")

    def replace(self, **changes) -> "CloudState":
        return replace(self, **changes)


@dataclass(frozen=True)
class CloudDynParams:
    """Field-driven drift and relaxation of the hydrogen cloud.

    Shrinkage is faster than expansion (``eta_minus > eta_plus``).
    Rates are in µm·V⁻¹·µs⁻¹; ``tau_x`` may be ``inf`` to disable relaxation.
    """

    eta_plus: float = 0.002
    eta_minus: float = 0.004
    v_th: float = 1.0
    tau_x: float = 20.0

    def __post_init__(self):
        if self.eta_plus < 0 or self.eta_minus < 0:
            raise InvalidStateError("drift rates must be non-negative")
        if self.eta_plus > 0 and not self.eta_minus > self.eta_plus:
            raise InvalidStateError("shrink rate must exceed expansion rate")
        if self.v_th < 0:
            raise InvalidStateError("field threshold must be >= 0")
        if not self.tau_x > 0:
            raise InvalidStateError("relaxation constant must be > 0")

    @classmethod
    def frozen(cls, tau_x: float = math.inf) -> "CloudDynParams":
        """Parameters with drift disabled (clouds only relax, or stay put)."""
        return cls(eta_plus=0.0, eta_minus=0.0, tau_x=tau_x)


def _check_bounds(c: CloudState):
    x = np.asarray(c.x)
    if np.any(x < c.x_min) or np.any(x > c.x_max) or not np.all(np.isfinite(x)):
        raise InvalidStateError(
            f"cloud thickness outside [{c.x_min}, {c.x_max}] µm: "
            f"min={x.min():.6g}, max={x.max():.6g}"
        )


def cloud_resistance(c: CloudState):
    """Cloud resistance in MΩ, linear in thickness."""
    _check_bounds(c)
    return c.r_x * np.asarray(c.x, dtype=float) if np.ndim(c.x) else c.r_x * float(c.x)


def cloud_conductance(c: CloudState):
    """Reciprocal of :func:`cloud_resistance`, in µS."""
    return 1.0 / cloud_resistance(c)


def cloud_drift(p: CloudDynParams, v_local):
    """Thickness velocity (µm/µs) from the field term alone."""
    v = np.asarray(v_local, dtype=float)
    up = np.where(v > p.v_th, p.eta_plus * (v - p.v_th), 0.0)
    down = np.where(v < -p.v_th, p.eta_minus * (v + p.v_th), 0.0)
    return up + down


def step_cloud(c: CloudState, p: CloudDynParams, v_local, dt: float) -> CloudState:
    """Advance cloud thickness by one explicit step of length ``dt`` (µs).

    ``v_local`` is the electrode-minus-film voltage.  Above ``+v_th`` the cloud
    expands at ``eta_plus``; below ``-v_th`` it shrinks at ``eta_minus``; it
    always relaxes toward ``x_rest`` with time constant ``tau_x``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(c.x, dtype=float)
    dx = cloud_drift(p, v_local) * dt
    if math.isfinite(p.tau_x):
        dx = dx + (np.asarray(c.x_rest, dtype=float) - x) * (dt / p.tau_x)
    x_new = np.clip(x + dx, c.x_min, c.x_max)
    if x_new.ndim == 0:
        x_new = float(x_new)
    return replace(c, x=x_new)


@dataclass(frozen=True)
class PulseSpec:
    """Rectangular pulse train: ``count`` pulses separated by ``interval``."""

    amplitude: float
    width: float
    interval: float = 0.0
    count: int = 1

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise ValueError("pulse amplitude must be finite")
        if not self.width > 0:
            raise ValueError(f"pulse width must be > 0, got {self.width}")
        if self.interval < 0:
            raise ValueError(f"pulse interval must be >= 0, got {self.interval}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"pulse count must be an integer >= 1, got {self.count}")

    @property
    def duration(self) -> float:
        """Time from first rising edge to last falling edge (µs)."""
        return self.count * self.width + (self.count - 1) * self.interval


@dataclass(frozen=True)
class CurrentTrace:
    """Uniformly sampled current record (µs, µA)."""

    t: np.ndarray
    i: np.ndarray
    dt: float

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        i = np.asarray(self.i, dtype=float)
        if t.shape != i.shape or t.ndim != 1:
            raise ValueError("trace times and currents must be 1-D and equal length")
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise ValueError("trace times must be strictly increasing")
            if not np.allclose(steps, self.dt, rtol=1e-9, atol=1e-12):
                raise ValueError("trace sampling is not uniform")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "i", i)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t_us,i_uA\n")
            for t, i in zip(self.t, self.i):
                fh.write(f"{float(t)!r},{float(i)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "CurrentTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
        return cls(t=t, i=data[:, 1], dt=dt)


@dataclass(frozen=True)
class NonVolatileCell:
    """Pd-Au cell with a programmable, retained conductance (µS).

    ``conductance`` may be an array, which makes the object a whole bank of
    identically parameterised cells.
    """

    conductance: np.ndarray | float
    g_min: float = G_MIN_DEFAULT
    g_max: float = G_MAX_DEFAULT
    v_th_reset: float = 3.0
    v_th_set: float = 2.5
    k_reset: float = 250.0
    k_set: float = 350.0
    v_lin: float = 0.1

    def __post_init__(self):
        if not 0 < self.g_min < self.g_max:
            raise InvalidStateError(f"bad conductance window [{self.g_min}, {self.g_max}]")
        g = np.asarray(self.conductance, dtype=float)
        # 1 ppb slack absorbs the 1/(1/G) round trip at the window edges
        tol = 1e-9 * self.g_max
        if np.any(g < self.g_min - tol) or np.any(g > self.g_max + tol):
            raise InvalidStateError("cell conductance outside [g_min, g_max]")

    @property
    def resistance_ohm(self):
        return 1e6 / np.asarray(self.conductance, dtype=float)

    @property
    def r_min(self) -> float:
        return 1e6 / self.g_max

    @property
    def r_max(self) -> float:
        return 1e6 / self.g_min

    def with_conductance(self, g) -> "NonVolatileCell":
        return replace(self, conductance=g)


def program_nonvolatile(cell: NonVolatileCell, pulse: PulseSpec) -> NonVolatileCell:
    """Apply ``pulse.count`` identical programming pulses to ``cell``.

    Positive overdrive beyond ``v_th_reset`` raises resistance (RESET),
    negative overdrive beyond ``v_th_set`` lowers it (SET).  Each pulse moves
    resistance a fraction of the remaining distance to the window edge, so
    increments shrink as the edge is approached.  Sub-threshold pulses return
    ``cell`` itself.
    """
    v = pulse.amplitude
    if -cell.v_th_set <= v <= cell.v_th_reset:
        return cell
    r = cell.resistance_ohm
    r_lo, r_hi = cell.r_min, cell.r_max
    span = r_hi - r_lo
    for _ in range(int(pulse.count)):
        if v > cell.v_th_reset:
            frac = min(cell.k_reset * (v - cell.v_th_reset) * pulse.width / span, 1.0)
            r = r + frac * (r_hi - r)
        else:
            frac = min(cell.k_set * (-v - cell.v_th_set) * pulse.width / span, 1.0)
            r = r - frac * (r - r_lo)
        r = np.clip(r, r_lo, r_hi)
    g = np.clip(1e6 / r, cell.g_min, cell.g_max)
    return cell.with_conductance(g if np.ndim(g) else float(g))


def read_cell(cell: NonVolatileCell, v_read):
    """Ohmic read current (µA) for ``|v_read| <= v_lin``."""
    v = np.asarray(v_read, dtype=float)
    if np.any(np.abs(v) > cell.v_lin):
        raise OutOfLinearRangeError(
            f"read voltage {np.max(np.abs(v)):.4g} V exceeds linear limit {cell.v_lin} V"
        )
    out = np.asarray(cell.conductance, dtype=float) * v
    return float(out) if out.ndim == 0 else out


def multilevel_targets(cell: NonVolatileCell, levels: int = 16) -> np.ndarray:
    """``levels`` conductance targets evenly spaced over the cell window."""
    if levels < 2:
        raise ValueError("need at least two levels")
    return np.linspace(cell.g_min, cell.g_max, levels)


@dataclass(frozen=True)
class ProgrammingResult:
    cell: NonVolatileCell
    pulses: int
    history: list = field(default_factory=list)


def program_to_conductance(
    cell: NonVolatileCell,
    target: float,
    *,
    rtol: float = 0.01,
    set_pulse: PulseSpec = PulseSpec(-8.0, 10.0),
    reset_pulse: PulseSpec = PulseSpec(9.0, 10.0),
    max_pulses: int = 400,
) -> ProgrammingResult:
    """Write-verify loop driving one cell to ``target`` µS.

    Schedule: read at 0.1 V; if the cell is above the target band apply the
    RESET pulse, below it the SET pulse.  Every polarity reversal halves the
    pulse width, so the loop closes in on the target like a bisection.  The
    band is ``rtol`` times one level step of a 16-level grid, and targets at
    the low-conductance edge are accepted once within the band (the soft
    bound only reaches ``g_min`` asymptotically).
    """
    if not cell.g_min <= target <= cell.g_max:
        raise ValueError("target outside the cell window")
    if np.ndim(cell.conductance):
        raise ValueError("program_to_conductance works on a single cell")
    band = rtol * (cell.g_max - cell.g_min) / 15
    width = {+1: reset_pulse.width, -1: set_pulse.width}
    last = 0
    history = [float(cell.conductance)]
    for n in range(max_pulses):
        g = read_cell(cell, 0.1) / 0.1
        err = g - target
        if abs(err) <= band:
            return ProgrammingResult(cell, n, history)
        direction = +1 if err > 0 else -1  # +1: lower G via RESET
        if last and direction != last:
            width[+1] /= 2
            width[-1] /= 2
        last = direction
        base = reset_pulse if direction > 0 else set_pulse
        cell = program_nonvolatile(cell, replace(base, width=width[direction], count=1))
        history.append(float(cell.conductance))
    raise InvalidStateError(f"target {target:.4g} µS not reached within {max_pulses} pulses")
