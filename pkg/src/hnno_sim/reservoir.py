"""Lumped N-node Pd-Pd processing array.

Every node is a hydrogen cloud between a Pd electrode and the NNO film.  The
film is a single capacitive node per *film group*: one group for the whole
array in spatiotemporal mode, one group per electrode pair in temporal-only
mode.  A step of length ``dt`` runs three phases:

1. film update: exact exponential relaxation toward the conductance-weighted
   mean of the applied voltages, with the conductances held for the step;
2. cloud update: each cloud drifts under ``V_i - V_f`` (film value from 1);
3. readout: ``I_i = (V_i - V_f) * G_i`` with the conductances of phase 1,
   positive into the film.

Using the phase-1 conductances in the readout keeps the reported currents
consistent with the film potential they produced (Kirchhoff's law at the film
node holds exactly).

State arrays carry an optional leading batch axis, so many independent clips
can be advanced together; they never interact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .devices import CloudDynParams, CloudState, cloud_conductance, step_cloud
from .errors import ConfigurationError

__all__ = [
    "Mode",
    "FilmState",
    "ReservoirArray",
    "FeatureVector",
    "make_array",
    "film_equilibrium",
    "step_film",
    "step_array",
    "set_mode",
    "reset",
    "drive_frame",
    "run_spike_train",
    "run_batch",
    "energy_per_frame",
    "energy_per_clip",
]


class Mode(str, enum.Enum):
    SPATIOTEMPORAL = "spatiotemporal"
    TEMPORAL_ONLY = "temporal-only"
    BYPASS = "bypass"


@dataclass(frozen=True)
class FilmState:
    """Film potential per group (V) and group capacitance (pF).

    A capacitance of exactly zero marks a quasi-static group whose potential
    always sits at the equilibrium value.
    """

    potential: np.ndarray
    capacitance: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.capacitance, dtype=float)
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ConfigurationError("film capacitance must be finite and >= 0")


def film_equilibrium(voltages, conductances):
    """Conductance-weighted mean of node voltages (last axis)."""
    v = np.asarray(voltages, dtype=float)
    g = np.asarray(conductances, dtype=float)
    if v.size == 0 or g.size == 0:
        raise ValueError("empty node set")
    if np.any(g <= 0):
        raise ValueError("conductances must be positive")
    return np.sum(g * v, axis=-1) / np.sum(g, axis=-1)


def step_film(f: FilmState, v_eq, g_tot, dt: float) -> FilmState:
    """Exact exponential film update over ``dt`` with inputs frozen."""
    c = np.asarray(f.capacitance, dtype=float)
    if np.any(c <= 0):
        raise ConfigurationError("film capacitance must be positive for a transient step")
    if dt < 0:
        raise ValueError("dt must be >= 0")
    g_tot = np.asarray(g_tot, dtype=float)
    if np.any(g_tot <= 0):
        raise ValueError("total conductance must be positive")
    decay = np.exp(-dt * g_tot / c)
    v_eq = np.asarray(v_eq, dtype=float)
    return replace(f, potential=v_eq + (np.asarray(f.potential) - v_eq) * decay)


@dataclass(frozen=True)
class ReservoirArray:
    """Array state plus the static wiring it evolves under.

    ``pairs`` is an ``(N/2, 2)`` integer array of (driven, read) node indices;
    channel ``k`` of an input train drives ``pairs[k, 0]``.  ``groups`` maps
    each node to its film group.
    """

    clouds: CloudState
    params: CloudDynParams
    film: FilmState
    mode: Mode
    pairs: np.ndarray
    groups: np.ndarray
    dt: float = 0.5
    seed: int = 0
    v_read: float = 0.1
    tau_film: float = 5.0

    @property
    def n_nodes(self) -> int:
        return int(np.shape(self.clouds.x_rest)[-1])

    @property
    def n_groups(self) -> int:
        return int(np.shape(self.film.capacitance)[-1])

    @property
    def driven(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def read(self) -> np.ndarray:
        return self.pairs[:, 1]

    def membership(self) -> np.ndarray:
        """One-hot ``(N, n_groups)`` node-to-group matrix."""
        m = np.zeros((self.n_nodes, self.n_groups))
        m[np.arange(self.n_nodes), self.groups] = 1.0
        return m

    def conductances(self) -> np.ndarray:
        return cloud_conductance(self.clouds)


def _default_pairs(n: int) -> np.ndarray:
    return np.arange(n).reshape(-1, 2)


def _check_pairs(pairs: np.ndarray, n: int):
    flat = np.sort(pairs.ravel())
    if pairs.ndim != 2 or pairs.shape[1] != 2 or not np.array_equal(flat, np.arange(n)):
        raise ConfigurationError("pair map must be a perfect matching of the nodes")


def _groups_for(mode: Mode, pairs: np.ndarray, n: int) -> np.ndarray:
    if mode == Mode.TEMPORAL_ONLY:
        groups = np.empty(n, dtype=int)
        for k, (a, b) in enumerate(pairs):
            groups[a] = k
            groups[b] = k
        return groups
    return np.zeros(n, dtype=int)


def _capacitances(groups, g_rest, n_groups, tau_film, c_film):
    if c_film is not None:
        c = np.broadcast_to(np.asarray(c_film, dtype=float), (n_groups,)).copy()
        if np.any(c <= 0):
            raise ConfigurationError("film capacitance must be positive", "array.c_film_pF")
        return c
    if tau_film == 0:
        return np.zeros(n_groups)
    if not tau_film > 0:
        raise ConfigurationError("film time constant must be positive", "array.tau_film_us")
    g_group = np.bincount(groups, weights=g_rest, minlength=n_groups)
    return tau_film * g_group


def make_array(
    n_nodes: int,
    mode: Mode | str = Mode.SPATIOTEMPORAL,
    *,
    seed: int = 0,
    x_init: tuple[float, float] | np.ndarray = (2.0, 2.5),
    params: CloudDynParams | None = None,
    r_x: float = 0.4,
    x_bounds: tuple[float, float] = (1.5, 3.0),
    tau_film: float = 5.0,
    c_film=None,
    dt: float = 0.5,
    v_read: float = 0.1,
    pairs=None,
) -> ReservoirArray:
    """Build an array at rest.

    Rest thicknesses are drawn uniformly from ``x_init`` with
    ``numpy.random.default_rng(seed)``, or taken verbatim if ``x_init`` is an
    array of length ``n_nodes``.  Without an explicit ``c_film`` each film
    group gets the capacitance giving time constant ``tau_film`` at rest
    (``tau_film=0`` makes the film quasi-static).
    """
    mode = Mode(mode)
    if n_nodes < 2 or n_nodes % 2:
        raise ConfigurationError(f"node count must be even and >= 2, got {n_nodes}", "array.n_nodes")
    if not dt > 0:
        raise ConfigurationError("dt must be positive", "array.dt_us")
    pairs = _default_pairs(n_nodes) if pairs is None else np.asarray(pairs, dtype=int)
    _check_pairs(pairs, n_nodes)
    x_init_arr = np.asarray(x_init, dtype=float)
    if x_init_arr.shape == (n_nodes,):
        x_rest = x_init_arr.copy()
    elif x_init_arr.shape == (2,):
        rng = np.random.default_rng(seed)
        x_rest = rng.uniform(x_init_arr[0], x_init_arr[1], size=n_nodes)
    else:
        raise ConfigurationError("x_init must be a (lo, hi) range or one value per node", "array.x_init_um")
    clouds = CloudState(x=x_rest.copy(), x_rest=x_rest, x_min=x_bounds[0], x_max=x_bounds[1], r_x=r_x)
    params = params or CloudDynParams()
    groups = _groups_for(mode, pairs, n_nodes)
    n_groups = int(groups.max()) + 1
    g_rest = cloud_conductance(clouds)
    caps = _capacitances(groups, g_rest, n_groups, tau_film, c_film)
    if c_film is not None:
        # remember the time constant the explicit capacitance implies, for set_mode
        tau_film = float(np.mean(caps / np.bincount(groups, weights=g_rest, minlength=n_groups)))
    film = FilmState(potential=np.zeros(n_groups), capacitance=caps)
    return ReservoirArray(
        clouds=clouds, params=params, film=film, mode=mode, pairs=pairs, groups=groups,
        dt=dt, seed=seed, v_read=v_read, tau_film=tau_film,
    )


def set_mode(a: ReservoirArray, mode: Mode | str) -> ReservoirArray:
    """Regroup the film for ``mode``; the array is returned at rest.

    Temporal-only groups get the capacitance that preserves the configured
    film time constant for each pair.  Bypass keeps the global film (it only
    changes what :func:`run_spike_train` reports).
    """
    mode = Mode(mode)
    n = a.n_nodes
    if n % 2:
        raise ConfigurationError("pairing modes need an even node count")
    _check_pairs(a.pairs, n)
    groups = _groups_for(mode, a.pairs, n)
    n_groups = int(groups.max()) + 1
    clouds = reset(a).clouds
    g_rest = cloud_conductance(clouds)
    if a.tau_film == 0:
        caps = np.zeros(n_groups)
    else:
        caps = a.tau_film * np.bincount(groups, weights=g_rest, minlength=n_groups)
    film = FilmState(potential=np.zeros(n_groups), capacitance=caps)
    return replace(a, clouds=clouds, film=film, mode=mode, groups=groups)


def reset(a: ReservoirArray, batch: int | None = None) -> ReservoirArray:
    """Clouds back at rest and film at 0 V, optionally with a batch axis."""
    x_rest = np.asarray(a.clouds.x_rest, dtype=float)
    if batch is None:
        x = x_rest.copy()
        pot = np.zeros(a.n_groups)
    else:
        x = np.broadcast_to(x_rest, (batch, a.n_nodes)).copy()
        pot = np.zeros((batch, a.n_groups))
    return replace(a, clouds=replace(a.clouds, x=x), film=replace(a.film, potential=pot))


def drive_frame(a: ReservoirArray, spikes=None, *, v_pulse: float = 5.0, read: bool = False) -> np.ndarray:
    """Per-node voltages for one step.

    ``spikes`` (length ``N/2``, or ``(batch, N/2)``) puts ``v_pulse`` on the
    driven node of every spiking channel.  With ``read=True`` the read nodes
    sit at ``a.v_read``; otherwise they are grounded.
    """
    if spikes is None:
        lead = ()
    else:
        spikes = np.asarray(spikes, dtype=float)
        lead = spikes.shape[:-1]
        if spikes.shape[-1] != len(a.pairs):
            raise ValueError(f"expected {len(a.pairs)} channels, got {spikes.shape[-1]}")
    v = np.zeros(lead + (a.n_nodes,))
    if spikes is not None:
        v[..., a.driven] = v_pulse * spikes
    if read:
        v[..., a.read] = a.v_read
    return v


def step_array(a: ReservoirArray, frame, dt: float | None = None):
    """Advance the array by one step; returns ``(new_array, currents_µA)``."""
    dt = a.dt if dt is None else dt
    v = np.asarray(frame, dtype=float)
    if v.shape[-1] != a.n_nodes:
        raise ValueError(f"frame has {v.shape[-1]} entries, array has {a.n_nodes} nodes")
    if not np.all(np.isfinite(v)):
        raise ValueError("frame voltages must be finite")
    if a.groups.shape != (a.n_nodes,) or a.groups.max() >= a.n_groups:
        raise ConfigurationError("node-to-group map inconsistent with film groups")
    if a.mode == Mode.TEMPORAL_ONLY and a.n_groups != len(a.pairs):
        raise ConfigurationError("temporal-only mode needs one film group per pair")
    if a.mode == Mode.SPATIOTEMPORAL and a.n_groups != 1:
        raise ConfigurationError("spatiotemporal mode needs exactly one film group")

    g = a.conductances()
    caps = np.asarray(a.film.capacitance, dtype=float)
    if a.n_groups == 1:
        g_tot = np.sum(g, axis=-1, keepdims=True)
        v_eq = np.sum(g * v, axis=-1, keepdims=True) / g_tot
    else:
        m = a.membership()
        g_tot = g @ m
        v_eq = (g * v) @ m / g_tot
    pot = np.asarray(a.film.potential, dtype=float)
    if np.all(caps > 0):
        new_pot = step_film(a.film, v_eq, g_tot, dt).potential
    else:
        quasi = caps == 0
        safe = FilmState(potential=pot, capacitance=np.where(quasi, 1.0, caps))
        new_pot = np.where(quasi, v_eq, step_film(safe, v_eq, g_tot, dt).potential)
    v_film = new_pot if a.n_groups == 1 else new_pot[..., a.groups]
    v_local = v - v_film
    clouds = step_cloud(a.clouds, a.params, v_local, dt)
    currents = v_local * g
    return replace(a, clouds=clouds, film=replace(a.film, potential=new_pot)), currents


def energy_per_frame(a: ReservoirArray, frame, width: float | None = None) -> float:
    """Device energy (nJ) drawn while ``frame`` is held for ``width`` µs.

    Joule loss in the clouds is integrated exactly over the exponential film
    transient; the change of energy stored on the film capacitance is added.
    Conductances are those at the start of the frame.
    """
    width = a.dt if width is None else width
    v = np.asarray(frame, dtype=float)
    g = a.conductances()
    caps = np.asarray(a.film.capacitance, dtype=float)
    m = a.membership()
    g_tot = g @ m
    v_eq = (g * v) @ m / g_tot
    v0 = np.asarray(a.film.potential, dtype=float)
    u0 = v0 - v_eq
    static = np.sum(g * (v - v_eq[..., a.groups]) ** 2, axis=-1) * width
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(caps > 0, caps / g_tot, 0.0)
        transient = np.where(
            caps > 0, g_tot * u0**2 * tau / 2 * (1 - np.exp(-2 * width / np.where(tau > 0, tau, 1.0))), 0.0
        )
        v1 = np.where(caps > 0, v_eq + u0 * np.exp(-width / np.where(tau > 0, tau, 1.0)), v_eq)
    stored = 0.5 * caps * (v1**2 - v0**2)
    # µS·V²·µs and pF·V² are both pJ
    total_pj = static + np.sum(transient + stored, axis=-1)
    return float(total_pj) / 1000.0 if np.ndim(total_pj) == 0 else total_pj / 1000.0


def energy_per_clip(a: ReservoirArray, spikes, *, v_pulse: float = 5.0, pulse_width: float | None = None,
                    step_us: float | None = None) -> np.ndarray:
    """Total device energy (nJ) of each clip in a batch ``(B, channels, T)``.

    Input frames only; read steps are excluded.  Each clip starts at rest.
    """
    spikes = np.asarray(spikes, dtype=float)
    if spikes.ndim != 3 or spikes.shape[1] != len(a.pairs):
        raise ValueError(f"spikes must be (batch, {len(a.pairs)}, steps)")
    b, _, t_steps = spikes.shape
    step_us = a.dt if step_us is None else step_us
    pulse_width = step_us if pulse_width is None else pulse_width
    state = reset(a, batch=b)
    rest = np.zeros((b, a.n_nodes))
    total = np.zeros(b)
    for t in range(t_steps):
        frame = drive_frame(a, spikes[:, :, t], v_pulse=v_pulse)
        parts = [(frame, pulse_width)]
        if pulse_width < step_us - 1e-12:
            parts.append((rest, step_us - pulse_width))
        for f, w in parts:
            total += energy_per_frame(state, f, w)
            state, _ = step_array(state, f, dt=w)
    return total


@dataclass(frozen=True)
class FeatureVector:
    """Flat sampled-current record of one clip.

    ``values[k * N + i]`` is node ``i`` at sample ``k`` (sample-major,
    node-minor).  ``sample_steps`` are input-step indices.
    """

    values: np.ndarray
    sample_steps: np.ndarray
    n_nodes: int

    def __post_init__(self):
        if self.values.shape[-1] != self.n_nodes * len(self.sample_steps):
            raise ValueError("feature length must equal N * N_sample")

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(len(self.sample_steps), self.n_nodes)


def _validate_schedule(schedule, n_steps):
    s = np.asarray(schedule, dtype=int)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("schedule must be a non-empty 1-D list of step indices")
    if np.any(np.diff(s) <= 0):
        raise ValueError("schedule must be strictly increasing")
    if s[0] < 0 or s[-1] >= n_steps:
        raise ValueError(f"schedule {s.tolist()} outside train of {n_steps} steps")
    return s


def _raw_batch(a, spikes, schedule, v_pulse, pulse_width, step_us):
    """Simulate a batch ``(B, C, T)`` and return ``(B, n_sample, N)`` read currents."""
    b, c, t_steps = spikes.shape
    state = reset(a, batch=b)
    out = np.empty((b, len(schedule), a.n_nodes))
    sample_at = {int(s): k for k, s in enumerate(schedule)}
    split = pulse_width < step_us - 1e-12
    rest = np.zeros((b, a.n_nodes))
    read_frame = drive_frame(a, np.zeros((b, c)), read=True)
    for t in range(t_steps):
        frame = drive_frame(a, spikes[:, :, t], v_pulse=v_pulse)
        if split:
            state, _ = step_array(state, frame, dt=pulse_width)
            state, _ = step_array(state, rest, dt=step_us - pulse_width)
        else:
            state, _ = step_array(state, frame, dt=step_us)
        k = sample_at.get(t)
        if k is not None:
            state, cur = step_array(state, read_frame, dt=step_us)
            out[:, k, :] = cur
    return out


def run_batch(
    a: ReservoirArray,
    spikes,
    schedule,
    *,
    v_pulse: float = 5.0,
    pulse_width: float | None = None,
    step_us: float | None = None,
    subtract_baseline: bool = True,
) -> np.ndarray:
    """Features for a batch of binary trains ``(B, channels, T)``.

    Returns ``(B, N * N_sample)``.  Every clip starts from the rest state.
    At each scheduled step the inputs pause for one read step (read nodes at
    ``v_read``, driven nodes grounded) and all node currents are recorded.
    With ``subtract_baseline`` the response of the same array to an empty
    train is subtracted, so features measure input-driven current only.
    In bypass mode the raw spike values at the sampled steps are returned.
    """
    spikes = np.asarray(spikes)
    if spikes.ndim != 3:
        raise ValueError("spikes must be (batch, channels, steps)")
    b, c, t_steps = spikes.shape
    if c != len(a.pairs):
        raise ValueError(f"train has {c} channels, array drives {len(a.pairs)}")
    schedule = _validate_schedule(schedule, t_steps)
    step_us = a.dt if step_us is None else step_us
    pulse_width = step_us if pulse_width is None else pulse_width
    if not 0 < pulse_width <= step_us + 1e-12:
        raise ValueError("pulse width must be in (0, step]")
    if a.mode == Mode.BYPASS:
        raw = np.zeros((b, len(schedule), a.n_nodes))
        raw[:, :, a.driven] = np.transpose(spikes[:, :, schedule], (0, 2, 1))
        return raw.reshape(b, -1)
    spikes_f = spikes.astype(float)
    feats = _raw_batch(a, spikes_f, schedule, v_pulse, pulse_width, step_us)
    if subtract_baseline:
        base = _raw_batch(a, np.zeros((1, c, t_steps)), schedule, v_pulse, pulse_width, step_us)
        feats = feats - base
    return feats.reshape(b, -1)


def run_spike_train(a: ReservoirArray, train, schedule, **kwargs) -> FeatureVector:
    """Single-clip wrapper around :func:`run_batch` taking a SpikeTrain."""
    spikes = np.asarray(train.spikes)[None]
    kwargs.setdefault("v_pulse", train.v_pulse)
    kwargs.setdefault("pulse_width", train.pulse_width)
    kwargs.setdefault("step_us", train.step_us)
    values = run_batch(a, spikes, schedule, **kwargs)[0]
    return FeatureVector(values=values, sample_steps=np.asarray(schedule, dtype=int), n_nodes=a.n_nodes)


def time_constant(a: ReservoirArray) -> np.ndarray:
    """Film time constant per group at the current cloud state (µs)."""
    g_tot = a.conductances() @ a.membership()
    return np.asarray(a.film.capacitance) / g_tot


NEIGHBOR_CONFIGS = {"none": (0, 1, 0), "one": (1, 1, 0), "two": (1, 1, 1)}


def neighbor_replica(
    mode: Mode | str = Mode.SPATIOTEMPORAL,
    n_pulses: int = 5,
    *,
    x_rest: float = 2.25,
    params: CloudDynParams | None = None,
    tau_film: float = 5.0,
    dt: float = 0.5,
    v_pulse: float = 5.0,
) -> dict[str, float]:
    """Lumped copy of a 2x3 pad layout: three devices side by side.

    Device ``k`` is driven node ``k`` paired with grounded read node ``k + 3``;
    device 1 is the reference and devices 0 and 2 its neighbours.  The
    reference and every pulsed neighbour receive ``n_pulses`` consecutive
    pulses, then one read step is taken.  Returns, per configuration, the
    current flowing from the film into the reference read electrode (µA).
    """
    a = make_array(
        6, mode, x_init=np.full(6, x_rest), params=params, tau_film=tau_film, dt=dt,
        pairs=np.array([[0, 3], [1, 4], [2, 5]]),
    )
    out = {}
    for name, pulsed in NEIGHBOR_CONFIGS.items():
        spikes = np.repeat(np.array(pulsed, dtype=np.uint8)[:, None], n_pulses, axis=1)[None]
        cur = run_batch(a, spikes, [n_pulses - 1], v_pulse=v_pulse, subtract_baseline=False)
        out[name] = -float(cur[0, 4])
    return out
