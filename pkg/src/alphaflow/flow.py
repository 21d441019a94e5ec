"""Finite-difference alpha-flow on the torus with node-wise projection.

The evolution is

    du/dt = P_u[ w^-1 div(w grad u) ],   w = (r^2 + e)^(alpha-1),   e = |grad u|^2,

which expands to ``P_u[lap u + (alpha-1) (grad e . grad u) / (r^2 + e)]``; ``P_u``
removes the component along ``u``.  On the sphere this is the same as adding the
second fundamental form term ``|grad u|^2 u``, and projecting discretely makes the
right-hand side exactly tangent.

Discretisation: ``e`` at a node is the mean over its four edges of the squared
one-sided difference quotients (twice the sum over edges, halved), and the
divergence is the conservative five-point stencil with edge weights
``(w_i + w_j)/2``.  With that pairing the right-hand side is exactly
``-grad E_h / (2 alpha w)`` for the discrete flow energy ``E_h = sum (r^2+e)^alpha h^2``,
so the discrete dissipation identity holds up to the time-stepping error.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .geometry import MapField, TorusGrid

log = logging.getLogger(__name__)

STOP_REASONS = ("converged", "time_exhausted", "concentration_event", "blow_up")
SERIES_COLUMNS = ("step", "t", "E", "E_alpha", "dissipation", "sup_e",
                  "degree_real", "degree_int", "tau_norm")
MONOTONE_SLACK = 1e-10
MAX_HALVINGS = 5


class NumericalBlowUp(FloatingPointError):
    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"{message} at node {node}")
        self.node = node


@dataclass(frozen=True)
class FlowParams:
    alpha: float
    r_scale: float = 1.0
    cfl_factor: float = 0.2
    integrator: str = "euler"
    tau_tolerance: float = 1e-5
    blowup_sup_e: float | None = None   # None means 1e6 / h^2

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError("alpha must lie in (1, 2]")
        if not 0.0 < self.cfl_factor <= 1.0:
            raise ValueError("cfl_factor must lie in (0, 1]")
        if self.r_scale < 0:
            raise ValueError("r_scale must be nonnegative")
        if self.integrator not in ("euler", "rk2"):
            raise ValueError("integrator must be 'euler' or 'rk2'")

    def sup_e_cap(self, grid: TorusGrid) -> float:
        return 1e6 / grid.h ** 2 if self.blowup_sup_e is None else self.blowup_sup_e


@dataclass
class FlowState:
    t: float
    field: MapField
    step_count: int = 0
    cumulative_dissipation: float = 0.0
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> TorusGrid:
        return self.field.grid

    def derivatives(self):
        """Cached ``(ux, uy, e)`` for the current field."""
        if self._cache is None:
            self._cache = _kernels.density(self.field.values, self.grid.h)
        return self._cache[:3]

    def stats(self, params: "FlowParams"):
        """Cached ``(ux, uy, e, w, sums)`` from :func:`_kernels.density_stats`."""
        key = (params.r_scale ** 2, params.alpha)
        if self._cache is None or len(self._cache) < 6 or self._cache[5] != key:
            out = _kernels.density_stats(self.field.values, self.grid.h, *key)
            self._cache = out + (key,)
        return self._cache[:5]


@dataclass
class FlowRun:
    """Snapshots plus a per-step diagnostic series of one flow integration."""

    grid: TorusGrid
    params: FlowParams
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list, repr=False)
    series: dict = field(default_factory=lambda: {c: [] for c in SERIES_COLUMNS}, repr=False)
    stop_reason: str | None = None
    error: str | None = None
    final_state: FlowState | None = field(default=None, repr=False)

    @classmethod
    def from_snapshots(cls, grid, params, times, fields):
        run = cls(grid, params)
        for t, f in zip(times, fields):
            run.add_snapshot(t, f.values if isinstance(f, MapField) else f)
        return run

    def add_snapshot(self, t, values):
        if self.times and t <= self.times[-1]:
            raise ValueError("snapshot times must increase")
        self.times.append(float(t))
        self.fields.append(np.asarray(values, dtype=np.float64))

    def snapshot(self, i) -> MapField:
        return MapField(self.grid, self.fields[i])

    def snapshot_times(self) -> np.ndarray:
        return np.asarray(self.times)

    def index_of(self, t, tol=1e-12) -> int:
        times = self.snapshot_times()
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return i

    def column(self, name) -> np.ndarray:
        return np.asarray(self.series[name])


def gradient(field: MapField) -> np.ndarray:
    """Central-difference partials, shape ``(2, nx, ny, k)``."""
    u = field.values
    h = field.grid.h
    ux = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2 * h)
    uy = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2 * h)
    return np.stack([ux, uy])


def energy_density(field: MapField) -> np.ndarray:
    """``e = (1/2h^2) sum_{j ~ i} |u_j - u_i|^2``; equals ``|grad u|^2 + O(h^2)``."""
    u = field.values
    e = np.zeros(field.grid.shape)
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        d = np.roll(u, shift, axis) - u
        e += np.sum(d * d, axis=-1)
    return e / (2 * field.grid.h ** 2)


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Five-point periodic Laplacian over the first two axes."""
    return (np.roll(values, 1, 0) + np.roll(values, -1, 0) + np.roll(values, 1, 1)
            + np.roll(values, -1, 1) - 4 * values) / h ** 2


def rhs(field: MapField, params: FlowParams) -> np.ndarray:
    """Right-hand side of the flow at every node (tangent vectors)."""
    r2 = params.r_scale ** 2
    _, _, _, w, _ = _kernels.density_stats(field.values, field.grid.h, r2, params.alpha)
    return _kernels.tension(field.values, w, field.grid.h)


def rhs_reference(field: MapField, params: FlowParams) -> np.ndarray:
    """Slow numpy evaluation of :func:`rhs`, kept as a cross-check."""
    u = field.values
    h = field.grid.h
    w = (params.r_scale ** 2 + energy_density(field)) ** (params.alpha - 1)
    safe = np.where(w > 0, w, 1.0)
    f = np.zeros_like(u)
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        c = np.where(w > 0, (w + np.roll(w, shift, axis)) / (2 * safe), 1.0)
        f += c[..., None] * (np.roll(u, shift, axis) - u)
    f /= h * h
    return f - np.sum(f * u, axis=-1, keepdims=True) * u


def cfl_dt(h: float, alpha: float, cfl_factor: float) -> float:
    # worst diffusion eigenvalue of delta_ij + 2(alpha-1) u_i.u_j / (r^2+e) is 1 + 2(alpha-1)
    return cfl_factor * h * h / (4.0 * (1.0 + 2.0 * (alpha - 1.0)))


def stable_dt(field: MapField | TorusGrid, params: FlowParams) -> float:
    grid = field if isinstance(field, TorusGrid) else field.grid
    return cfl_dt(grid.h, params.alpha, params.cfl_factor)


def tension_alpha(field: MapField, params: FlowParams):
    """The alpha-tension field and its L2 norm."""
    tau = rhs(field, params)
    return tau, l2_norm(tau, field.grid)


def l2_norm(values: np.ndarray, grid: TorusGrid) -> float:
    return math.sqrt(float(np.sum(values * values)) * grid.h ** 2)


def flow_energy(e: np.ndarray, params: FlowParams, grid: TorusGrid) -> float:
    """sum (r^2 + e)^alpha h^2, the Lyapunov functional of the flow."""
    return _kernels.power_sum(e, params.r_scale ** 2, params.alpha) * grid.h ** 2


def _advance(state: FlowState, v0: np.ndarray, dt: float, params: FlowParams):
    u = state.field.values
    h = state.grid.h
    if params.integrator == "euler":
        return _kernels.euler_project(u, v0, dt)
    half = _kernels.euler_project(u, v0, 0.5 * dt)
    w = _kernels.density_stats(half, h, params.r_scale ** 2, params.alpha)[3]
    v1 = _kernels.tension(half, w, h)
    return _kernels.euler_project(u, v1, dt)


def _check_finite(values):
    i, j = _kernels.first_nonfinite(values)
    if i >= 0:
        raise NumericalBlowUp("numerical blow-up", node=(int(i), int(j)))


def step(state: FlowState, params: FlowParams, dt: float | None = None,
         velocity: np.ndarray | None = None, energy_slack: float | None = None) -> FlowState:
    """Advance one explicit step, halving ``dt`` (at most 5 times) if the flow energy rises."""
    grid = state.grid
    h = grid.h
    r2 = params.r_scale ** 2
    dt = stable_dt(grid, params) if dt is None else dt
    ux, uy, e, w, sums = state.stats(params)
    if velocity is None:
        velocity = _kernels.tension(state.field.values, w, h)
    e_old = sums[1] * h * h
    slack = MONOTONE_SLACK * e_old if energy_slack is None else energy_slack
    for _ in range(MAX_HALVINGS + 1):
        new = _advance(state, velocity, dt, params)
        _check_finite(new)
        cache = _kernels.density_stats(new, h, r2, params.alpha)
        if cache[4][1] * h * h <= e_old + slack:
            break
        log.debug("energy increase at step %d, halving dt=%g", state.step_count, dt)
        dt *= 0.5
    else:
        raise NumericalBlowUp(f"flow energy increased after {MAX_HALVINGS} dt halvings")
    diss = 2.0 * params.alpha * dt * h * h * _kernels.weighted_speed(state.field.values, new, w, dt)
    return FlowState(state.t + dt, MapField(grid, new), state.step_count + 1,
                     state.cumulative_dissipation + diss, _cache=cache + ((r2, params.alpha),))


def _record(run: FlowRun, state: FlowState, tau_norm: float):
    h2 = state.grid.h ** 2
    se, sa, me, sd = state.stats(run.params)[4]
    s = run.series
    s["step"].append(state.step_count)
    s["t"].append(state.t)
    s["E"].append(se * h2)
    s["E_alpha"].append(sa * h2)
    s["dissipation"].append(state.cumulative_dissipation)
    s["sup_e"].append(me)
    if state.field.k == 3:
        deg = sd * h2 / (4 * np.pi)
        s["degree_real"].append(deg)
        s["degree_int"].append(int(round(deg)) if math.isfinite(deg) else 0)
    else:
        s["degree_real"].append(float("nan"))
        s["degree_int"].append(0)
    s["tau_norm"].append(tau_norm)


def run(state: FlowState, params: FlowParams, t_max: float | None = None,
        tau_below: float | bool | None = None, sup_e_above: float | bool | None = None,
        snapshot_stride: int = 1, max_steps: int | None = None,
        keep_snapshots: bool = True) -> FlowRun:
    """Integrate until a stop condition; see :data:`STOP_REASONS`.

    ``tau_below=True`` uses ``params.tau_tolerance``; ``sup_e_above=True`` uses
    ``params.blowup_sup_e`` (default ``1e6/h^2``).  At least one of ``t_max`` and
    ``max_steps`` bounds the run.  The final step is shortened to land on ``t_max``.
    """
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    if t_max is None and max_steps is None:
        raise ValueError("run needs t_max or max_steps")
    grid = state.grid
    if tau_below is True:
        tau_below = params.tau_tolerance
    if sup_e_above is True:
        sup_e_above = params.sup_e_cap(grid)
    out = FlowRun(grid, params)
    i, j = _kernels.first_nonfinite(state.field.values)
    if i >= 0:
        out.stop_reason = "blow_up"
        out.error = str(NumericalBlowUp("numerical blow-up", node=(int(i), int(j))))
        _record(out, state, math.nan)
        if keep_snapshots:
            out.add_snapshot(state.t, state.field.values)
        out.final_state = state
        return out
    h = grid.h
    dt0 = stable_dt(grid, params)
    slack = MONOTONE_SLACK * state.stats(params)[4][1] * h * h
    last_snap = None
    while True:
        w = state.stats(params)[3]
        v = _kernels.tension(state.field.values, w, h)
        tau = l2_norm(v, grid)
        _record(out, state, tau)
        if keep_snapshots and state.step_count % snapshot_stride == 0:
            out.add_snapshot(state.t, state.field.values)
            last_snap = state.step_count
        if tau_below is not None and tau_below is not False and tau <= tau_below:
            out.stop_reason = "converged"
        elif sup_e_above is not None and sup_e_above is not False and out.series["sup_e"][-1] > sup_e_above:
            out.stop_reason = "concentration_event"
        elif t_max is not None and state.t >= t_max * (1 - 1e-14):
            out.stop_reason = "time_exhausted"
        elif max_steps is not None and state.step_count >= max_steps:
            out.stop_reason = "time_exhausted"
        if out.stop_reason:
            break
        dt = dt0 if t_max is None else min(dt0, t_max - state.t)
        try:
            state = step(state, params, dt=dt, velocity=v, energy_slack=slack)
        except NumericalBlowUp as exc:
            out.stop_reason = "blow_up"
            out.error = str(exc)
            break
    if keep_snapshots and last_snap != state.step_count:
        out.add_snapshot(state.t, state.field.values)
    out.final_state = state
    return out


def with_params(params: FlowParams, **changes) -> FlowParams:
    return replace(params, **changes)
