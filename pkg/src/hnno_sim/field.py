"""Quasi-static potential in a 2D film with hydrogenated rings around pads.

The film is a sheet of square cells of side ``h`` (µm).  Each cell has a sheet
conductance ``g = thickness / resistivity`` (S); for square cells the face
conductance between two cells is the harmonic mean of their sheet
conductances.  Pads are Dirichlet patches, and a pad cell
couples to a free neighbour over half a cell, i.e. with ``2 * g_neighbour``.
The outer boundary is insulating.

Rings are rasterised by area fraction: a cell with ring fraction ``f`` gets
resistivity ``f * rho_hnno + (1 - f) * rho_nno``, so ring widths that are not
multiples of ``h`` are represented without snapping.

The linear system is Jacobi scaled and solved by conjugate gradients with a
classical (Ruge-Stuben) algebraic multigrid preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import GeometryError, SolverError
from .reservoir import film_equilibrium

__all__ = [
    "Materials",
    "ArrayGeometry",
    "PotentialGrid",
    "PotentialField",
    "FieldSolver",
    "build_grid",
    "uniform_strip",
    "solve_potential",
    "electrode_current",
    "ring_conductance",
    "lumped_static_currents",
    "pad_name",
    "CONFIGS",
    "CouplingResult",
    "coupling_voltages",
    "coupling_suite",
    "DistanceSweep",
    "distance_sweep",
]

FILM, RING, PAD = 0, 1, 2


@dataclass(frozen=True)
class Materials:
    rho_nno: float = 2.5e-6  # Ω·m
    rho_hnno: float = 8.85  # Ω·m
    thickness_nm: float = 50.0

    def __post_init__(self):
        if not (self.rho_nno > 0 and self.rho_hnno > 0 and self.thickness_nm > 0):
            raise GeometryError("resistivities and thickness must be positive")

    @property
    def g_nno(self) -> float:
        return self.thickness_nm * 1e-9 / self.rho_nno

    @property
    def g_hnno(self) -> float:
        return self.thickness_nm * 1e-9 / self.rho_hnno


@dataclass(frozen=True)
class ArrayGeometry:
    """Square pads on a regular grid, each wrapped in a hydrogenated ring.

    ``cloud_reading`` picks how the ring width is derived:
    ``"extension"`` uses ``ring`` (µm beyond each pad edge);
    ``"total_length"`` treats ``total_cloud_length`` as the summed extension
    over both sides of a pad, giving a ring of half that width.
    """

    rows: int = 2
    cols: int = 3
    pad: float = 120.0
    gap: float = 10.0
    ring: float = 3.5
    margin: float = 260.0
    cloud_reading: str = "extension"
    total_cloud_length: float = 17.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise GeometryError("rows and cols must be >= 1")
        if not (self.pad > 0 and self.gap > 0 and self.margin > 0):
            raise GeometryError("pad, gap and margin must be positive")
        if self.cloud_reading not in ("extension", "total_length"):
            raise GeometryError(f"unknown cloud reading {self.cloud_reading!r}")
        w = self.ring_width
        if not w > 0:
            raise GeometryError(f"ring width must be positive, got {w}")
        if (self.rows > 1 or self.cols > 1) and w >= self.gap:
            raise GeometryError(f"ring width {w} µm reaches the neighbouring pad across a {self.gap} µm gap")
        if w >= self.margin:
            raise GeometryError("ring extends past the domain margin")

    @property
    def ring_width(self) -> float:
        return self.ring if self.cloud_reading == "extension" else self.total_cloud_length / 2.0

    @property
    def pitch(self) -> float:
        return self.pad + self.gap

    @property
    def extent(self) -> tuple[float, float]:
        """Domain size (width, height) in µm."""
        w = self.cols * self.pad + (self.cols - 1) * self.gap + 2 * self.margin
        hgt = self.rows * self.pad + (self.rows - 1) * self.gap + 2 * self.margin
        return w, hgt

    def pad_origin(self, r: int, c: int) -> tuple[float, float]:
        return self.margin + c * self.pitch, self.margin + r * self.pitch


def pad_name(r: int, c: int) -> str:
    return f"r{r}c{c}"


@dataclass(frozen=True)
class PotentialGrid:
    """Cell-centred sheet: ``sheet_g[j, i]`` is the cell at row ``j``, column ``i``.

    ``patches`` holds the electrode index of each cell (-1 for free film) and
    ``patch_names[k]`` names electrode ``k``.  ``region`` tags cells as film,
    ring or pad for bookkeeping.
    """

    h: float
    sheet_g: np.ndarray
    patches: np.ndarray
    patch_names: tuple[str, ...]
    region: np.ndarray | None = None
    thickness_nm: float = 50.0

    def __post_init__(self):
        g = np.asarray(self.sheet_g, dtype=float)
        p = np.asarray(self.patches, dtype=int)
        if g.ndim != 2 or p.shape != g.shape:
            raise GeometryError("conductance and patch maps must be matching 2D arrays")
        if not self.h > 0:
            raise GeometryError("cell size must be positive")
        if not np.all(np.isfinite(g) & (g > 0)):
            raise GeometryError("sheet conductance must be positive everywhere")
        k = len(self.patch_names)
        if len(set(self.patch_names)) != k:
            raise GeometryError("patch names must be unique")
        if p.min() < -1 or p.max() >= k:
            raise GeometryError("patch index out of range")
        counts = np.bincount(p[p >= 0], minlength=k)
        if np.any(counts == 0):
            raise GeometryError(f"empty patch {self.patch_names[int(np.argmin(counts))]!r}")
        # different electrodes must not touch, or the current between them is unbounded
        for a, b in ((p[:, :-1], p[:, 1:]), (p[:-1, :], p[1:, :])):
            if np.any((a >= 0) & (b >= 0) & (a != b)):
                raise GeometryError("electrode patches touch")
        region = np.where(p >= 0, PAD, FILM) if self.region is None else np.asarray(self.region, dtype=int)
        object.__setattr__(self, "sheet_g", g)
        object.__setattr__(self, "patches", p)
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "patch_names", tuple(self.patch_names))

    @property
    def ny(self) -> int:
        return self.sheet_g.shape[0]

    @property
    def nx(self) -> int:
        return self.sheet_g.shape[1]

    def patch_index(self, name: str) -> int:
        try:
            return self.patch_names.index(name)
        except ValueError:
            raise ValueError(f"unknown electrode {name!r}") from None

    def cell_counts(self) -> dict[str, int]:
        return {n: int(np.sum(self.region == v)) for n, v in (("film", FILM), ("ring", RING), ("pad", PAD))}


def _overlap(c0, c1, a, b):
    return np.clip(np.minimum(c1, b) - np.maximum(c0, a), 0.0, None)


def _is_multiple(x: float, h: float) -> bool:
    q = x / h
    return abs(q - round(q)) < 1e-9 * max(1.0, q)


def build_grid(geom: ArrayGeometry, h: float = 1.0, materials: Materials | None = None) -> PotentialGrid:
    """Rasterise pads, rings and film at cell size ``h`` (µm)."""
    materials = materials or Materials()
    if not h > 0:
        raise GeometryError("cell size must be positive")
    for label, v in (("pad", geom.pad), ("gap", geom.gap), ("margin", geom.margin)):
        if not _is_multiple(v, h):
            raise GeometryError(f"{label} {v} µm is not a multiple of the cell size {h} µm")
    lx, ly = geom.extent
    nx, ny = int(round(lx / h)), int(round(ly / h))
    xe = np.arange(nx) * h
    ye = np.arange(ny) * h
    w = geom.ring_width
    ring_frac = np.zeros((ny, nx))
    patches = -np.ones((ny, nx), dtype=int)
    names = []
    for r in range(geom.rows):
        for c in range(geom.cols):
            x0, y0 = geom.pad_origin(r, c)
            ox = _overlap(xe, xe + h, x0 - w, x0 + geom.pad + w)
            oy = _overlap(ye, ye + h, y0 - w, y0 + geom.pad + w)
            px = _overlap(xe, xe + h, x0, x0 + geom.pad)
            py = _overlap(ye, ye + h, y0, y0 + geom.pad)
            pad_area = np.outer(py, px)
            ring_frac += (np.outer(oy, ox) - pad_area) / (h * h)
            cells = pad_area > 0.5 * h * h
            if np.any(patches[cells] >= 0):
                raise GeometryError("pads overlap")
            patches[cells] = len(names)
            names.append(pad_name(r, c))
    ring_frac = np.clip(ring_frac, 0.0, 1.0)
    rho = ring_frac * materials.rho_hnno + (1.0 - ring_frac) * materials.rho_nno
    g = materials.thickness_nm * 1e-9 / rho
    region = np.where(patches >= 0, PAD, np.where(ring_frac > 1e-12, RING, FILM))
    g[patches >= 0] = materials.g_nno  # unused inside Dirichlet cells
    return PotentialGrid(h=h, sheet_g=g, patches=patches, patch_names=tuple(names), region=region,
                         thickness_nm=materials.thickness_nm)


def uniform_strip(nx: int, ny: int, h: float = 1.0, g: float = 1.0) -> PotentialGrid:
    """Uniform sheet with full-height electrodes ``"left"`` and ``"right"`` in
    the first and last columns.  The free span between them is ``(nx - 2) * h``."""
    if nx < 3 or ny < 1:
        raise GeometryError("strip needs nx >= 3 and ny >= 1")
    patches = -np.ones((ny, nx), dtype=int)
    patches[:, 0] = 0
    patches[:, -1] = 1
    return PotentialGrid(h=h, sheet_g=np.full((ny, nx), float(g)), patches=patches, patch_names=("left", "right"))


@dataclass(frozen=True)
class PotentialField:
    grid: PotentialGrid
    potential: np.ndarray  # (ny, nx) V
    residual: float  # relative residual of the scaled system
    iterations: int

    def to_csv(self, path, fmt: str = "%.9e"):
        np.savetxt(path, self.potential, delimiter=",", fmt=fmt)

    def film_mask(self) -> np.ndarray:
        return self.grid.region == FILM

    def film_mean(self) -> float:
        return float(self.potential[self.film_mask()].mean())


class FieldSolver:
    """Assembles the system for one grid and keeps the multigrid hierarchy so
    repeated solves with different electrode voltages only change the
    right-hand side."""

    def __init__(self, grid: PotentialGrid, *, rtol: float = 1e-8, maxiter: int = 10**6):
        self.grid = grid
        self.rtol = rtol
        self.maxiter = maxiter
        if not grid.patch_names:
            raise ValueError("at least one Dirichlet patch is required")
        g = grid.sheet_g.ravel()
        pid = grid.patches.ravel()
        idx = np.arange(g.size).reshape(grid.ny, grid.nx)
        a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
        b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
        da, db = pid[a] >= 0, pid[b] >= 0
        keep = ~(da & db)
        a, b, da, db = a[keep], b[keep], da[keep], db[keep]
        hm = 2.0 * g[a] * g[b] / (g[a] + g[b])
        c = np.where(da, 2.0 * g[b], np.where(db, 2.0 * g[a], hm))
        self._links = (a, b, c, da, db)
        free = np.flatnonzero(pid < 0)
        self._free = free
        pos = -np.ones(g.size, dtype=int)
        pos[free] = np.arange(free.size)
        diag = np.zeros(g.size)
        np.add.at(diag, a, c)
        np.add.at(diag, b, c)
        uu = ~da & ~db
        ia, ib = pos[a[uu]], pos[b[uu]]
        off = sp.coo_matrix(
            (np.concatenate([-c[uu], -c[uu]]), (np.concatenate([ia, ib]), np.concatenate([ib, ia]))),
            shape=(free.size, free.size),
        )
        self.matrix = (off + sp.diags(diag[free])).tocsr()
        self._d = np.sqrt(diag[free])
        dinv = sp.diags(1.0 / self._d)
        self._scaled = (dinv @ self.matrix @ dinv).tocsr()
        self._precond = None

    def _preconditioner(self):
        if self._precond is None:
            ml = pyamg.ruge_stuben_solver(self._scaled, max_coarse=500)
            self._precond = ml.aspreconditioner(cycle="V")
        return self._precond

    def _dirichlet(self, boundary) -> np.ndarray:
        names = self.grid.patch_names
        extra = set(boundary) - set(names)
        if extra:
            raise ValueError(f"unknown electrode(s) {sorted(extra)}")
        missing = [n for n in names if n not in boundary]
        if missing:
            raise ValueError(f"no voltage given for electrode(s) {missing}")
        vals = np.array([float(boundary[n]) for n in names])
        if not np.all(np.isfinite(vals)):
            raise ValueError("electrode voltages must be finite")
        return vals

    def solve(self, boundary: dict) -> PotentialField:
        grid = self.grid
        vals = self._dirichlet(boundary)
        pid = grid.patches.ravel()
        v = np.zeros(pid.size)
        fixed = pid >= 0
        v[fixed] = vals[pid[fixed]]
        if self._free.size == 0:
            return PotentialField(grid, v.reshape(grid.ny, grid.nx), 0.0, 0)
        a, b, c, da, db = self._links
        rhs = np.zeros(pid.size)
        np.add.at(rhs, b[da], c[da] * v[a[da]])
        np.add.at(rhs, a[db], c[db] * v[b[db]])
        bs = rhs[self._free] / self._d
        norm = np.linalg.norm(bs)
        if norm == 0.0:
            v[self._free] = 0.0
            return PotentialField(grid, v.reshape(grid.ny, grid.nx), 0.0, 0)
        it = [0]

        def count(_):
            it[0] += 1

        ys, info = cg(self._scaled, bs, rtol=self.rtol, atol=0.0, maxiter=self.maxiter,
                      M=self._preconditioner(), callback=count)
        res = float(np.linalg.norm(bs - self._scaled @ ys) / norm)
        if info != 0 or not res <= self.rtol * 1.0001:
            raise SolverError(f"field solve did not converge (residual {res:.3e} after {it[0]} iterations)",
                              residual=res, iterations=it[0])
        v[self._free] = ys / self._d
        return PotentialField(grid, v.reshape(grid.ny, grid.nx), res, it[0])


def solve_potential(grid: PotentialGrid, boundary: dict, *, rtol: float = 1e-8, maxiter: int = 10**6) -> PotentialField:
    """One-off solve.  Use :class:`FieldSolver` to reuse the set-up work."""
    return FieldSolver(grid, rtol=rtol, maxiter=maxiter).solve(boundary)


def electrode_current(fld: PotentialField, name: str) -> float:
    """Current (A) leaving electrode ``name`` into the film."""
    grid = fld.grid
    k = grid.patch_index(name)
    p, g, v = grid.patches, grid.sheet_g, fld.potential
    total = 0.0
    for sl_in, sl_out in (
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
        ((slice(None), slice(1, None)), (slice(None), slice(None, -1))),
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None))),
        ((slice(1, None), slice(None)), (slice(None, -1), slice(None))),
    ):
        edge = (p[sl_in] == k) & (p[sl_out] < 0)
        total += float(np.sum(2.0 * g[sl_out][edge] * (v[sl_in][edge] - v[sl_out][edge])))
    return total


# --- comparison with the lumped picture -------------------------------------


def ring_conductance(geom: ArrayGeometry, materials: Materials | None = None) -> float:
    """Thin-band estimate (S) of one ring: sheet conductance times mid-line
    perimeter over width.  The film outside is taken as a perfect conductor."""
    materials = materials or Materials()
    w = geom.ring_width
    return materials.g_hnno * 4.0 * (geom.pad + w) / w


def lumped_static_currents(voltages, g_ring: float) -> np.ndarray:
    """Steady-state electrode currents (A, out of each electrode) when all
    clouds share one equipotential film node."""
    v = np.asarray(voltages, dtype=float)
    g = np.full(v.size, g_ring)
    return (v - film_equilibrium(v, g)) * g


CONFIGS = ("none", "one", "two")


@dataclass
class CouplingResult:
    """Static 2×3 runs: column 1 is the reference device, columns 0 and 2 are
    neighbours; row 0 pads are driven, row 1 pads are grounded."""

    names: tuple[str, ...]
    voltages: dict  # config -> per-electrode voltage array
    field_currents: dict  # config -> A per electrode
    lumped_currents: dict
    film_means: dict
    fields: dict = field(repr=False)

    def reference_current(self, source: str, config: str) -> float:
        """Current delivered into the grounded reference pad (A)."""
        cur = self.field_currents if source == "field" else self.lumped_currents
        return -float(cur[config][self.names.index(pad_name(1, 1))])

    def max_relative_mismatch(self) -> float:
        worst = 0.0
        for cfg in self.field_currents:
            f, l = self.field_currents[cfg], self.lumped_currents[cfg]
            worst = max(worst, float(np.max(np.abs(f - l) / np.abs(l))))
        return worst

    def ordering(self, source: str) -> bool:
        i = [self.reference_current(source, c) for c in CONFIGS]
        return i[2] > i[1] > i[0]

    def maps_ordered(self) -> bool:
        """Film potential ordered two > one > none in every film cell."""
        m = [self.fields[c].potential[self.fields[c].film_mask()] for c in CONFIGS]
        return bool(np.all(m[2] > m[1]) and np.all(m[1] > m[0]))


def coupling_voltages(v_pulse: float = 5.0) -> dict:
    out = {}
    for cfg, pulsed in (("none", ()), ("one", (0,)), ("two", (0, 2))):
        v = {pad_name(r, c): 0.0 for r in range(2) for c in range(3)}
        v[pad_name(0, 1)] = v_pulse
        for c in pulsed:
            v[pad_name(0, c)] = v_pulse
        out[cfg] = v
    return out


def coupling_suite(geom: ArrayGeometry | None = None, h: float = 1.0, materials: Materials | None = None,
                   v_pulse: float = 5.0, rtol: float = 1e-8) -> CouplingResult:
    geom = geom or ArrayGeometry(rows=2, cols=3)
    if (geom.rows, geom.cols) != (2, 3):
        raise GeometryError("the coupling suite uses a 2x3 layout")
    materials = materials or Materials()
    grid = build_grid(geom, h, materials)
    solver = FieldSolver(grid, rtol=rtol)
    g_ring = ring_conductance(geom, materials)
    names = grid.patch_names
    volts, fcur, lcur, means, fields = {}, {}, {}, {}, {}
    for cfg, bc in coupling_voltages(v_pulse).items():
        fld = solver.solve(bc)
        v = np.array([bc[n] for n in names])
        volts[cfg] = v
        fcur[cfg] = np.array([electrode_current(fld, n) for n in names])
        lcur[cfg] = lumped_static_currents(v, g_ring)
        means[cfg] = fld.film_mean()
        fields[cfg] = fld
    return CouplingResult(names, volts, fcur, lcur, means, fields)


@dataclass(frozen=True)
class DistanceSweep:
    positions: tuple[int, ...]
    currents: np.ndarray  # A into the grounded reference pad, per neighbour position
    baseline: float  # same with every neighbour grounded

    @property
    def spread_ratio(self) -> float:
        """Spread across positions over the mean pulsed-minus-grounded gain."""
        gain = float(np.mean(self.currents) - self.baseline)
        return float(np.ptp(self.currents)) / gain


def distance_sweep(positions=(1, 2, 3, 4), geom: ArrayGeometry | None = None, h: float = 1.0,
                   materials: Materials | None = None, v_pulse: float = 5.0, rtol: float = 1e-8) -> DistanceSweep:
    """Reference device in column 0 of a 2-row strip, one pulsed neighbour
    device ``p`` columns away; every other device grounded."""
    positions = tuple(int(p) for p in positions)
    if not positions or min(positions) < 1:
        raise ValueError("positions must be >= 1")
    ncols = max(positions) + 1
    geom = geom or ArrayGeometry(rows=2, cols=ncols)
    if geom.rows != 2 or geom.cols < ncols:
        raise GeometryError(f"distance sweep needs a 2-row layout with at least {ncols} columns")
    grid = build_grid(geom, h, materials)
    solver = FieldSolver(grid, rtol=rtol)
    ref = pad_name(1, 0)

    def bc(pulsed):
        v = {n: 0.0 for n in grid.patch_names}
        v[pad_name(0, 0)] = v_pulse
        if pulsed is not None:
            v[pad_name(0, pulsed)] = v_pulse
        return v

    base = -electrode_current(solver.solve(bc(None)), ref)
    cur = np.array([-electrode_current(solver.solve(bc(p)), ref) for p in positions])
    return DistanceSweep(positions, cur, base)
