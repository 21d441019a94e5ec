"""Energies, degree, local energy inequality, monotonicity quantity, concentration,
and a Bochner-type residual, all evaluated on fields or recorded flow runs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .flow import FlowParams, FlowRun, energy_density, gradient, tension_alpha
from .geometry import MapField, TorusGrid

FIT_CANDIDATES = (1, 2, 5, 10, 20, 50, 100)
MIN_WINDOW_SAMPLES = 4


class CoverageError(ValueError):
    pass


@dataclass
class EnergyReport:
    E: float
    E_alpha: float
    sup_e: float
    tau_norm: float
    degree_real: float
    degree_int: int
    E0: float

    @property
    def degree_gap(self) -> float:
        return abs(self.degree_real - self.degree_int)


@dataclass
class MonotonicityProbe:
    center: tuple
    t0: float
    radii: np.ndarray
    cutoff: np.ndarray = field(repr=False)
    psi_values: np.ndarray | None = None


@dataclass
class ConcentrationReport:
    t: float
    epsilon_0: float
    scales: np.ndarray
    flagged: list            # node indices, all of them
    ball_energies: np.ndarray  # (len(flagged), len(scales))
    centers: list            # one representative node per connected cluster
    psi: dict = field(default_factory=dict)  # center -> Psi at the smallest scale, if available

    def __len__(self):
        return len(self.flagged)


def dirichlet_energy(field: MapField) -> float:
    return float(np.sum(energy_density(field))) * field.grid.h ** 2


def alpha_energy(field: MapField, alpha: float) -> float:
    if alpha < 1:
        raise ValueError("alpha >= 1 required")
    return float(np.sum((1.0 + energy_density(field)) ** alpha)) * field.grid.h ** 2


def degree(field: MapField) -> tuple[float, int]:
    """``(1/4 pi) sum u . (u_x x u_y) h^2`` and its nearest integer."""
    if field.k != 3:
        raise ValueError("degree requires 3-dimensional ambient target")
    ux, uy = gradient(field)
    d = float(np.sum(field.values * np.cross(ux, uy))) * field.grid.h ** 2 / (4 * np.pi)
    return d, int(round(d))


def energy_report(field: MapField, params: FlowParams, E0: float | None = None) -> EnergyReport:
    e = energy_density(field)
    h2 = field.grid.h ** 2
    E_alpha = float(np.sum((1.0 + e) ** params.alpha)) * h2
    _, tau = tension_alpha(field, params)
    d_real, d_int = degree(field) if field.k == 3 else (float("nan"), 0)
    return EnergyReport(float(np.sum(e)) * h2, E_alpha, float(np.max(e)), tau,
                        d_real, d_int, E_alpha if E0 is None else E0)


def ball_energy(density: np.ndarray, grid: TorusGrid, radius: float) -> np.ndarray:
    """``sum_{B_radius(x)} density h^2`` for every node ``x`` (periodic FFT convolution)."""
    r = grid.distance_from((0.0, 0.0))
    disk = (r < radius).astype(float)
    conv = np.fft.irfft2(np.fft.rfft2(density) * np.fft.rfft2(disk), s=density.shape)
    return conv * grid.h ** 2


def _region_sum(density, grid, node, r_in, r_out):
    r = grid.distance_from(grid.point(node))
    return float(np.sum(density[(r >= r_in) & (r < r_out)])) * grid.h ** 2


def local_energy_residual(run: FlowRun, x, R: float, t1: float, t2: float, C_fit: float,
                          E0: float | None = None) -> float:
    """``int_{B_R(x)} e_a(t2) - int_{B_2R(x)} e_a(t1) - C (t2-t1) E0 / R^2``; <= 0 means
    the local energy inequality holds with constant ``C_fit``."""
    if not t1 < t2:
        raise ValueError("t1 < t2 required")
    if 2 * R > run.grid.cutoff_radius + 1e-12:
        raise ValueError("2R <= R_M required")
    try:
        i1, i2 = run.index_of(t1), run.index_of(t2)
    except KeyError as exc:
        raise CoverageError(f"missing snapshot: {exc}") from None
    a = run.params.alpha
    d1 = (1 + energy_density(run.snapshot(i1))) ** a
    d2 = (1 + energy_density(run.snapshot(i2))) ** a
    if E0 is None:
        E0 = float(np.sum((1 + energy_density(run.snapshot(0))) ** a)) * run.grid.h ** 2
    return (_region_sum(d2, run.grid, x, 0, R) - _region_sum(d1, run.grid, x, 0, 2 * R)
            - C_fit * (t2 - t1) * E0 / R ** 2)


def cutoff_function(grid: TorusGrid, center) -> np.ndarray:
    """1 on ``B_{R_M/2}``, 0 outside ``B_{R_M}``, quintic smoothstep between."""
    rm = grid.cutoff_radius
    r = grid.distance_from(grid.point(center))
    t = np.clip((r - rm / 2) / (rm / 2), 0.0, 1.0)
    return 1.0 - t ** 3 * (10 - 15 * t + 6 * t * t)


def make_probe(grid: TorusGrid, center, t0: float, radii) -> MonotonicityProbe:
    radii = np.asarray(sorted(radii), dtype=float)
    if np.any(4 * radii ** 2 > t0 * (1 + 1e-12)):
        raise ValueError("every radius needs 4 rho^2 <= t0")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    return MonotonicityProbe(tuple(center), float(t0), radii, cutoff_function(grid, center))


def _window_integrand(run, idx, r2, phi2, t0, alpha):
    t = run.times[idx]
    tau = abs(t - t0)
    e = energy_density(run.snapshot(idx))
    G = np.exp(-r2 / (4 * tau)) / tau
    return float(np.sum((1 + e) ** alpha * G * phi2)) * run.grid.h ** 2


def psi(run: FlowRun, probe: MonotonicityProbe, alpha: float | None = None) -> np.ndarray:
    """``rho^(2a-2) int_{t0-4rho^2}^{t0-rho^2} int (1+e)^a G phi^2 dx dt`` per radius.

    Time integration is trapezoidal over the snapshots inside each window, with the
    integrand linearly interpolated to the window ends from the bracketing snapshots.
    """
    alpha = run.params.alpha if alpha is None else alpha
    grid = run.grid
    dx, dy = grid.displacement_from(grid.point(probe.center))
    r2 = dx * dx + dy * dy
    phi2 = probe.cutoff ** 2
    times = run.snapshot_times()
    cache = {}

    def integrand(i):
        if i not in cache:
            cache[i] = _window_integrand(run, i, r2, phi2, probe.t0, alpha)
        return cache[i]

    def at(t):
        j = int(np.searchsorted(times, t))
        if j < len(times) and abs(times[j] - t) <= 1e-14 * max(1, t):
            return integrand(j)
        i0, i1 = j - 1, j
        w = (t - times[i0]) / (times[i1] - times[i0])
        return (1 - w) * integrand(i0) + w * integrand(i1)

    out = []
    for rho in probe.radii:
        lo, hi = probe.t0 - 4 * rho ** 2, probe.t0 - rho ** 2
        inside = np.nonzero((times >= lo - 1e-15) & (times <= hi + 1e-15))[0]
        bracketed = times[0] <= lo + 1e-15 and times[-1] >= hi - 1e-15
        if len(inside) < MIN_WINDOW_SAMPLES or not bracketed:
            raise CoverageError(
                f"window [{lo:.6g}, {hi:.6g}] for rho={rho:g} has {len(inside)} snapshots"
                f" (need {MIN_WINDOW_SAMPLES} and bracketing)")
        ts = [lo] + [times[i] for i in inside if lo < times[i] < hi] + [hi]
        vals = [at(lo)] + [integrand(i) for i in inside if lo < times[i] < hi] + [at(hi)]
        out.append(rho ** (2 * alpha - 2) * float(np.trapezoid(vals, ts)))
    probe.psi_values = np.asarray(out)
    return probe.psi_values


def almost_monotonicity_check(psi_values, radii, E0: float, c_fit: float) -> float:
    """Worst ``Psi_r - exp(c (rho-r)) Psi_rho - c E0 (rho-r)`` over pairs ``r < rho``."""
    psi_values = np.asarray(psi_values, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 2:
        raise ValueError("need at least two radii")
    worst = -math.inf
    for i in range(len(radii)):
        for j in range(len(radii)):
            if radii[i] < radii[j]:
                gap = radii[j] - radii[i]
                v = psi_values[i] - math.exp(c_fit * gap) * psi_values[j] - c_fit * E0 * gap
                worst = max(worst, v)
    return worst


def fit_constant(passes, candidates=FIT_CANDIDATES):
    """Smallest candidate constant ``c`` with ``passes(c)`` true, or None."""
    for c in candidates:
        if passes(c):
            return c
    return None


def detect_concentration(run_or_field, t: float | None, epsilon_0: float = 1.0, scales=None,
                         alpha: float | None = None) -> ConcentrationReport:
    """Flag nodes whose ball energy is at least ``epsilon_0`` at every scale.

    ``run_or_field`` is a :class:`FlowRun` (``t`` a snapshot time) or a bare
    :class:`MapField`.  When a run covers the backward windows, the monotonicity
    quantity at the smallest scale is reported for each cluster centre as a cross-check.
    """
    if isinstance(run_or_field, MapField):
        fld, run = run_or_field, None
        t = 0.0 if t is None else t
    else:
        run = run_or_field
        fld = run.snapshot(run.index_of(t))
    grid = fld.grid
    if scales is None:
        scales = [4 * grid.h * 2 ** i for i in range(4)]
    scales = np.asarray(sorted(scales), dtype=float)
    if scales[0] < 4 * grid.h * (1 - 1e-12):
        raise ValueError("smallest scale must be >= 4h")
    e = energy_density(fld)
    balls = np.stack([ball_energy(e, grid, R) for R in scales])
    mask = np.all(balls >= epsilon_0, axis=0)
    flagged = [tuple(int(a) for a in ij) for ij in np.argwhere(mask)]
    energies = balls[:, mask].T if flagged else np.zeros((0, len(scales)))
    centers = []
    if flagged:
        labels, count = _periodic_label(mask)
        strength = np.min(balls, axis=0)
        for lab in range(1, count + 1):
            idx = np.argwhere(labels == lab)
            best = idx[np.argmax(strength[labels == lab])]
            centers.append((int(best[0]), int(best[1])))
    report = ConcentrationReport(t, epsilon_0, scales, flagged, energies, centers)
    if run is not None and centers and t - 4 * scales[0] ** 2 >= 0:
        a = run.params.alpha if alpha is None else alpha
        for c in centers:
            try:
                probe = make_probe(grid, c, t, [scales[0]])
                report.psi[c] = float(psi(run, probe, a)[0])
            except (CoverageError, ValueError):
                break
    return report


def _periodic_label(mask):
    labels, count = ndimage.label(mask)
    # merge clusters touching across the periodic seams
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in list(zip(labels[0], labels[-1])) + list(zip(labels[:, 0], labels[:, -1])):
        if a and b:
            parent[find(a)] = find(b)
    roots = sorted({find(l) for l in range(1, count + 1)})
    remap = np.zeros(count + 1, dtype=int)
    for l in range(1, count + 1):
        remap[l] = roots.index(find(l)) + 1
    return remap[labels], len(roots)


def bochner_residual(run: FlowRun, t: float, C_fit: float = 1.0, margin: int = 0):
    """Residual of the Bochner-type inequality at snapshot time ``t``.

    ``de/dt - div((delta + 2(a-1) u_i.u_j/(r^2+e)) grad e) - C e (e+1)`` with the time
    derivative centred over the neighbouring snapshots.  ``margin`` trims that many
    nodes from each index edge.  Returns ``(residual, fraction_nonpositive)``.
    """
    i = run.index_of(t)
    if i == 0 or i == len(run.times) - 1:
        raise CoverageError("bochner residual needs snapshots on both sides of t")
    t0, t1, t2 = run.times[i - 1], run.times[i], run.times[i + 1]
    if abs((t2 - t1) - (t1 - t0)) > 1e-9 * (t2 - t0):
        raise ValueError("snapshot spacing must be uniform around t")
    grid = run.grid
    h = grid.h
    p = run.params
    fld = run.snapshot(i)
    ux, uy = gradient(fld)
    e = energy_density(fld)
    de_dt = (energy_density(run.snapshot(i + 1)) - energy_density(run.snapshot(i - 1))) / (t2 - t0)
    w = 2 * (p.alpha - 1) / (p.r_scale ** 2 + e)
    axx = 1 + w * np.sum(ux * ux, axis=-1)
    axy = w * np.sum(ux * uy, axis=-1)
    ayy = 1 + w * np.sum(uy * uy, axis=-1)

    def d(a, axis):
        return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2 * h)

    ex, ey = d(e, 0), d(e, 1)
    div = d(axx * ex + axy * ey, 0) + d(axy * ex + ayy * ey, 1)
    res = de_dt - div - C_fit * e * (e + 1)
    if margin:
        res = res[margin:-margin, margin:-margin]
    return res, float(np.mean(res <= 0))
