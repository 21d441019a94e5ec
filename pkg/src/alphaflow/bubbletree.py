"""Bubble extraction, bubble-tree bookkeeping, and the neck surgery maps.

Conventions: a bubble chart is a :class:`MapField` on a square node grid measured
in units of the bubble scale ``lambda`` (so a resolved bubble has density ~1 at
the chart centre).  Annulus maps are sampled on a polar node grid, periodic in
``theta``; cylinder maps use the conformal coordinate ``rho = log(r / r0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import energy_density
from .geometry import (GeometryError, MapField, TorusGrid, exp_point, geodesic, log_point,
                       project, sphere_distance)

EPSILON_1 = 4 * np.pi
SIGMA = 0.5
MAX_DEPTH = 8
ZOOM_UNITS = 32
CHART_NODES = 129
ACCEPT_UNITS = 8      # bubble acceptance ball radius, in units of lambda
MAX_CANDIDATES = 64


class BubbleError(ValueError):
    pass


@dataclass
class BubbleNode:
    center: tuple
    scale: float
    bubble_field: MapField = field(repr=False)
    bubble_energy: float
    neck_inner: float
    neck_outer: float
    neck_energy: float
    children: list = field(default_factory=list)
    depth: int = 0

    def __post_init__(self):
        if not self.neck_inner < self.neck_outer:
            raise BubbleError("neck_inner < neck_outer required")

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class BubbleTree:
    root: MapField = field(repr=False)
    nodes: list
    total_energy_in: float
    body_energy: float
    identity_residual: float
    epsilon_1: float
    C_R: float

    def all_nodes(self):
        for n in self.nodes:
            yield from n.walk()

    @property
    def bubble_energies(self):
        return [n.bubble_energy for n in self.all_nodes()]

    @property
    def neck_energies(self):
        return [n.neck_energy for n in self.all_nodes()]

    def necks_ok(self) -> bool:
        return all(e < self.epsilon_1 / 6 for e in self.neck_energies)


@dataclass(frozen=True)
class NeckSpec:
    """Neck on ``a <= |x - center| <= b`` joining ``q`` (inner side) to ``p`` (outer side).

    The surgery maps also use the collars ``[a/2, a]`` and ``[b, 2b]``.
    """
    p: np.ndarray
    q: np.ndarray
    a: float
    b: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise BubbleError("neck radii need 0 < a < b")
        if self.b / self.a < math.e * (1 - 1e-12):
            raise BubbleError("neck needs b/a >= e")

    @property
    def modulus(self) -> float:
        return math.log(self.b / self.a)


@dataclass
class AnnulusMap:
    """Map on ``r_nodes[0] <= r <= r_nodes[-1]``; ``values[j, i]`` at ``(theta_j, r_i)``."""
    r_nodes: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def theta(self):
        n = self.values.shape[0]
        return 2 * np.pi * np.arange(n) / n

    def energy(self) -> float:
        return annulus_energy(self.values, self.r_nodes)


@dataclass
class CylinderMap:
    """Map on ``S^1 x [rho_nodes[0], rho_nodes[-1]]`` in the conformal coordinate."""
    rho_nodes: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def length(self) -> float:
        return float(self.rho_nodes[-1] - self.rho_nodes[0])

    def energy(self) -> float:
        return cylinder_energy(self.values, self.rho_nodes)


@dataclass
class Competitor:
    field: MapField
    region_energies: dict
    neck_mask: np.ndarray = field(repr=False)


# ---------------------------------------------------------------- quadrature

def _cell_derivatives(values, coord):
    """Cell-centred d/dcoord and d/dtheta on a (theta periodic) x coord node grid."""
    nxt = np.roll(values, -1, axis=0)
    dc = np.diff(coord)
    dth = 2 * np.pi / values.shape[0]
    f_c = 0.5 * (np.diff(values, axis=1) + np.diff(nxt, axis=1)) / dc[None, :, None]
    f_t = 0.5 * ((nxt - values)[:, 1:] + (nxt - values)[:, :-1]) / dth
    return f_c, f_t, dc, dth


def annulus_energy(values, r_nodes) -> float:
    """Midpoint rule for ``int (|f_r|^2 + |f_theta|^2 / r^2) r dr dtheta``."""
    r_nodes = np.asarray(r_nodes, dtype=float)
    f_r, f_t, dr, dth = _cell_derivatives(np.asarray(values, dtype=float), r_nodes)
    rc = 0.5 * (r_nodes[1:] + r_nodes[:-1])
    dens = np.sum(f_r ** 2, axis=-1) + np.sum(f_t ** 2, axis=-1) / rc ** 2
    return float(np.sum(dens * rc * dr) * dth)


def cylinder_energy(values, rho_nodes) -> float:
    """Midpoint rule for ``int (|f_rho|^2 + |f_theta|^2) drho dtheta``."""
    f_r, f_t, dr, dth = _cell_derivatives(np.asarray(values, dtype=float),
                                          np.asarray(rho_nodes, dtype=float))
    dens = np.sum(f_r ** 2, axis=-1) + np.sum(f_t ** 2, axis=-1)
    return float(np.sum(dens * dr) * dth)


# ------------------------------------------------------------ bubble charts

def _chart(field: MapField, c, lam, radius_units, spacing_units=None):
    """Resample ``field`` around point ``c`` on a square chart measured in units of ``lam``."""
    spacing = 2 * ZOOM_UNITS / (CHART_NODES - 1) if spacing_units is None else spacing_units
    half = max(int(math.ceil(radius_units / spacing)), (CHART_NODES - 1) // 2)
    n = 2 * half + 1
    grid = TorusGrid(n, side_length=n * spacing)
    s = (np.arange(n) - half) * spacing
    X, Y = np.meshgrid(s, s, indexing="ij")
    pts = np.stack([c[0] + lam * X, c[1] + lam * Y], axis=-1)
    return MapField(grid, field.sample(pts)), X, Y


def _window_mask(grid: TorusGrid, window):
    if window is None:
        return np.ones(grid.shape, dtype=bool)
    if isinstance(window, np.ndarray) and window.dtype == bool:
        return window
    center, radius = window
    return grid.distance_from(center) < radius


def detect_and_rescale(field: MapField, window=None, zoom_radius_units: float = ZOOM_UNITS,
                       density=None):
    """Centre ``c`` (density argmax in ``window``), scale ``lambda = e(c)^(-1/2)`` and
    the bubble chart of radius ``zoom_radius_units`` (in units of ``lambda``).

    ``window`` is ``None`` (whole torus), a boolean node mask, or ``(point, radius)``.
    """
    grid = field.grid
    e = energy_density(field) if density is None else density
    mask = _window_mask(grid, window)
    if not mask.any():
        raise BubbleError("empty window")
    masked = np.where(mask, e, -np.inf)
    node = np.unravel_index(int(np.argmax(masked)), e.shape)
    peak = float(e[node])
    if peak <= 0:
        raise BubbleError("no energy density in window")
    lam = peak ** -0.5
    if lam < grid.h / 4:
        raise BubbleError("bubble below resolution")
    c = tuple(grid.point(node))
    chart, _, _ = _chart(field, c, lam, zoom_radius_units)
    return c, lam, chart


def _sorted_shells(density, grid, c, radius):
    r = grid.distance_from(c).ravel()
    d = density.ravel()
    keep = r < radius
    order = np.argsort(-r[keep], kind="stable")
    return r[keep][order], d[keep][order] * grid.h ** 2


def lambda_by_energy(field: MapField, c, epsilon_out: float, C_R: float, density=None) -> float:
    """Largest ``lambda`` with ``int_{B_eps(c) minus B_lambda(c)} e >= C_R``.

    Radii are sorted from the outside in; the answer is the radius of the node shell
    at which the running annulus energy first reaches ``C_R``.
    """
    if C_R <= 0:
        return float(epsilon_out)
    e = energy_density(field) if density is None else density
    radii, mass = _sorted_shells(e, field.grid, c, epsilon_out)
    cum = np.cumsum(mass)
    if len(cum) == 0 or cum[-1] < C_R:
        raise BubbleError("insufficient energy for neck cut")
    i = int(np.searchsorted(cum, C_R))
    return float(radii[i])


def _candidates(grid, e, epsilon_1, region):
    """Concentration centres: density peaks whose acceptance ball holds >= epsilon_1."""
    rm = grid.cutoff_radius
    free = region.copy()
    found = []
    for _ in range(MAX_CANDIDATES):
        if not free.any():
            break
        node = np.unravel_index(int(np.argmax(np.where(free, e, -np.inf))), e.shape)
        peak = float(e[node])
        if peak <= 0:
            break
        lam = peak ** -0.5
        radius = ACCEPT_UNITS * lam
        if radius > rm / 2:
            break  # every remaining peak is flatter still
        c = tuple(grid.point(node))
        dist = grid.distance_from(c)
        ball = float(np.sum(e[dist < radius])) * grid.h ** 2
        if ball >= epsilon_1 and lam >= grid.h / 4:
            found.append((c, lam, radius, ball))
        free &= dist >= radius
    return found


def _arrange(found, grid):
    """Nest candidates: a centre inside a larger-scale candidate's ball becomes its child."""
    order = sorted(range(len(found)), key=lambda i: -found[i][1])
    parent = {}
    for pos, i in enumerate(order):
        best = None
        for j in order[:pos]:
            d = float(np.hypot(*grid.wrap(np.subtract(found[i][0], found[j][0]))))
            if d < found[j][2] and (best is None or found[j][1] < found[best][1]):
                best = j
        parent[i] = best
    return order, parent


def build_tree(field: MapField, epsilon_1: float = EPSILON_1, C_R: float | None = None,
               zoom_radius_units: float = ZOOM_UNITS, max_depth: int = MAX_DEPTH,
               E0: float | None = None) -> BubbleTree:
    """Detect bubbles, nest them, cut necks, and account for every piece of energy.

    ``E = body + sum(bubble) + sum(neck) + identity_residual``, where the body is the
    field outside the top-level outer neck radii, each neck is the annulus
    ``[neck_inner, neck_outer)`` on the torus grid, and each bubble energy is
    measured on its resampled chart inside ``neck_inner`` with child disks removed.
    """
    grid = field.grid
    C_R = epsilon_1 / 6 if C_R is None else C_R
    e = energy_density(field)
    h2 = grid.h ** 2
    E = float(np.sum(e)) * h2
    if E0 is not None and E > E0 * (1 + 1e-12):
        raise BubbleError("field energy exceeds E0")
    found = _candidates(grid, e, epsilon_1, np.ones(grid.shape, dtype=bool))
    order, parent = _arrange(found, grid)
    kids = {i: [j for j in order if parent[j] == i] for i in range(len(found))}
    tops = [i for i in order if parent[i] is None]

    def dist(a, b):
        return float(np.hypot(*grid.wrap(np.subtract(a, b))))

    def make(i, siblings, depth, limit):
        if depth >= max_depth:
            raise BubbleError(f"bubble tree deeper than {max_depth} levels")
        c, lam, radius, _ = found[i]
        eps = limit
        for j in siblings:
            if j != i:
                eps = min(eps, dist(c, found[j][0]) / 2)
        try:
            lam_neck = lambda_by_energy(field, c, eps, C_R, density=e)
        except BubbleError:
            lam_neck = eps / 4
        inner = min(2 * lam_neck, eps / 2)
        inner = max(inner, min(2 * lam, eps / 2))
        r = grid.distance_from(c)
        neck = float(np.sum(e[(r >= inner) & (r < eps)])) * h2
        children = []
        for j in kids[i]:
            lim = min(inner - dist(c, found[j][0]), dist(c, found[j][0]) / 2)
            if lim > 2 * grid.h:
                children.append(make(j, kids[i], depth + 1, lim))
        chart, X, Y = _chart(field, c, lam, max(zoom_radius_units, 1.1 * inner / lam))
        ce = energy_density(chart)
        region = np.hypot(X, Y) < inner / lam
        for ch in children:
            off = grid.wrap(np.subtract(ch.center, c)) / lam
            region &= np.hypot(X - off[0], Y - off[1]) >= ch.neck_outer / lam
        bubble = float(np.sum(ce[region])) * chart.grid.h ** 2
        return BubbleNode(c, lam, chart, bubble, inner, eps, neck, children, depth)

    nodes = [make(i, tops, 0, grid.cutoff_radius) for i in tops]
    outside = np.ones(grid.shape, dtype=bool)
    for n in nodes:
        outside &= grid.distance_from(n.center) >= n.neck_outer
    body = float(np.sum(e[outside])) * h2
    tree = BubbleTree(field, nodes, E, body, 0.0, epsilon_1, C_R)
    tree.identity_residual = E - body - sum(tree.bubble_energies) - sum(tree.neck_energies)
    return tree


# ------------------------------------------------------------ surgery maps

def _loop_tangents(loop, p):
    loop = np.asarray(loop, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(sphere_distance(np.broadcast_to(p, loop.shape), loop) >= np.pi / 2):
        raise GeometryError("loop leaves the hemisphere around the cone point")
    return log_point(np.broadcast_to(p, loop.shape), loop)


def cone_extension(loop, p, direction: str = "inward", n_radial: int = 256) -> AnnulusMap:
    """Fill ``1 <= r <= 2`` radially from a loop toward the point ``p``.

    ``inward``: ``exp_p((2 - r) log_p f(theta))``, equal to the loop at ``r = 1`` and
    to ``p`` at ``r = 2``.  ``outward``: ``exp_p((r - 1) log_p f(theta))``.
    """
    v = _loop_tangents(loop, p)
    r = np.linspace(1.0, 2.0, n_radial + 1)
    if direction == "inward":
        w = 2.0 - r
    elif direction == "outward":
        w = r - 1.0
    else:
        raise ValueError("direction must be 'inward' or 'outward'")
    tv = w[None, :, None] * v[:, None, :]
    vals = exp_point(np.broadcast_to(p, tv.shape), tv)
    return AnnulusMap(r, vals)


def geodesic_circle(p, d: float, n: int = 256) -> np.ndarray:
    """Loop at geodesic distance ``d`` around ``p``."""
    from .geometry import tangent_frame
    e1, e2 = tangent_frame(np.asarray(p, dtype=float))
    th = 2 * np.pi * np.arange(n) / n
    v = d * (np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2)
    return exp_point(np.broadcast_to(p, v.shape), v)


def squeeze_map(cyl: CylinderMap, margin: float = 4.0) -> CylinderMap:
    """Reparametrise ``S^1 x [0, K]`` onto ``S^1 x [margin, K - margin]`` linearly in rho."""
    K = cyl.length
    if K <= 4 * margin:
        raise BubbleError("neck too short to squeeze")
    rho = cyl.rho_nodes - cyl.rho_nodes[0]
    return CylinderMap(margin + rho * (K - 2 * margin) / K, cyl.values.copy())


def cylinder_from_annulus(ann: AnnulusMap) -> CylinderMap:
    r0 = ann.r_nodes[0]
    return CylinderMap(np.log(ann.r_nodes / r0), ann.values)


def annulus_from_cylinder(cyl: CylinderMap, r0: float) -> AnnulusMap:
    return AnnulusMap(r0 * np.exp(cyl.rho_nodes), cyl.values)


def geodesic_neck(spec: NeckSpec, n_theta: int = 64, n_radial: int = 512) -> AnnulusMap:
    """``gamma((log r - log a) / (log b - log a))`` from ``q`` at ``a`` to ``p`` at ``b``."""
    r = np.geomspace(spec.a, spec.b, n_radial + 1)
    s = np.log(r / spec.a) / spec.modulus
    line = geodesic(np.broadcast_to(spec.q, s.shape + (3,)),
                    np.broadcast_to(spec.p, s.shape + (3,)), s)
    return AnnulusMap(r, np.broadcast_to(line, (n_theta,) + line.shape).copy())


def _polar(grid, center):
    dx, dy = grid.displacement_from(center)
    return np.hypot(dx, dy), np.arctan2(dy, dx)


def _loop_at(field, center, radius, theta):
    pts = np.stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)], -1)
    return field.sample(pts)


def _cone_nodes(field, center, radius, theta, point, weight, label):
    loop = _loop_at(field, center, radius, theta)
    try:
        v = _loop_tangents(loop, point)
    except GeometryError:
        raise BubbleError(f"{label}: boundary loop leaves the hemisphere of its cone point") from None
    tv = weight[:, None] * v
    return exp_point(np.broadcast_to(point, tv.shape), tv)


def build_competitor(field: MapField, tree: BubbleTree | None = None, specs=None) -> Competitor:
    """Replace each neck ``[a/2, 2b]`` by cone, geodesic neck, cone.

    ``[a/2, a]``: cone from the field's loop at ``a/2`` to ``q``; ``[a, b]``: the
    logarithmic geodesic from ``q`` to ``p``; ``[b, 2b]``: cone from ``p`` to the
    field's loop at ``2b``.  Nodes outside every ``[a/2, 2b]`` annulus are copied
    bit for bit.
    """
    if specs is None:
        specs = [] if tree is None else [neck_spec_from_node(field, n) for n in tree.all_nodes()]
    grid = field.grid
    out = field.values.copy()
    e_in = energy_density(field)
    masks = {"inner_cone": np.zeros(grid.shape, bool), "geodesic": np.zeros(grid.shape, bool),
             "outer_cone": np.zeros(grid.shape, bool)}
    for k, sp in enumerate(specs):
        label = f"neck {k}"
        if sp.b - sp.a < 8 * grid.h:
            raise BubbleError(f"{label}: unresolved (b - a < 8h)")
        r, th = _polar(grid, sp.center)
        inner = (r >= sp.a / 2) & (r < sp.a)
        mid = (r >= sp.a) & (r <= sp.b)
        outer = (r > sp.b) & (r <= 2 * sp.b)
        if np.any((masks["inner_cone"] | masks["geodesic"] | masks["outer_cone"])
                  & (inner | mid | outer)):
            raise BubbleError(f"{label}: overlaps another neck")
        out[inner] = _cone_nodes(field, sp.center, sp.a / 2, th[inner], sp.q,
                                 (sp.a - r[inner]) / (sp.a / 2), label)
        s = np.log(r[mid] / sp.a) / sp.modulus
        out[mid] = geodesic(np.broadcast_to(sp.q, (s.size, 3)), np.broadcast_to(sp.p, (s.size, 3)), s)
        out[outer] = _cone_nodes(field, sp.center, 2 * sp.b, th[outer], sp.p,
                                 (r[outer] - sp.b) / sp.b, label)
        masks["inner_cone"] |= inner
        masks["geodesic"] |= mid
        masks["outer_cone"] |= outer
    comp = MapField(grid, project(out))
    e = energy_density(comp)
    h2 = grid.h ** 2
    neck = masks["inner_cone"] | masks["geodesic"] | masks["outer_cone"]
    comp.values[~neck] = field.values[~neck]   # projection may touch the last ulp
    energies = {name: float(np.sum(e[m])) * h2 for name, m in masks.items()}
    energies["kept"] = float(np.sum(e[~neck])) * h2
    energies["field_necks"] = float(np.sum(e_in[neck])) * h2
    energies["total"] = float(np.sum(e)) * h2
    return Competitor(comp, energies, neck)


def build_reference_map(field: MapField, spec: NeckSpec, margin: float = math.log(4.0)) -> Competitor:
    """Homotopic reference map: squeeze the field's neck ``[a/2, 2b]`` in the log
    coordinate onto ``[2a, b/2]`` and fill both freed collars by a cone down to the
    neck endpoint followed by its reflection ``r -> a^2/r`` (inner) or ``r -> b^2/r``
    (outer), so the map is unchanged outside ``[a/2, 2b]``.
    """
    grid = field.grid
    r, th = _polar(grid, spec.center)
    lo, hi = spec.a / 2, 2 * spec.b
    K = math.log(hi / lo)
    if K <= 4 * margin:
        raise BubbleError("neck too short to squeeze")
    out = field.values.copy()
    core = (r >= 2 * spec.a) & (r <= spec.b / 2)
    rho = np.log(r[core] / lo)
    src = lo * np.exp((rho - margin) * K / (K - 2 * margin))
    out[core] = field.sample(np.stack([spec.center[0] + src * np.cos(th[core]),
                                       spec.center[1] + src * np.sin(th[core])], -1))
    for sel, ref, radius, point, to_point in (
            ((r >= lo) & (r < spec.a), spec.a, lo, spec.q, lambda x: (spec.a - x) / (spec.a / 2)),
            ((r >= spec.a) & (r < 2 * spec.a), spec.a, lo, spec.q, lambda x: (x - spec.a) / spec.a),
            ((r > spec.b / 2) & (r <= spec.b), spec.b, hi, spec.p, lambda x: (spec.b - x) / (spec.b / 2)),
            ((r > spec.b) & (r <= hi), spec.b, hi, spec.p, lambda x: (x - spec.b) / spec.b)):
        out[sel] = _cone_nodes(field, spec.center, radius, th[sel], point, to_point(r[sel]),
                               "reference neck")
    ref = MapField(grid, project(out))
    neck = (r >= lo) & (r <= hi)
    ref.values[~neck] = field.values[~neck]
    e = energy_density(ref)
    h2 = grid.h ** 2
    energies = {"total": float(np.sum(e)) * h2, "neck": float(np.sum(e[neck])) * h2,
                "field_neck": float(np.sum(energy_density(field)[neck])) * h2}
    return Competitor(ref, energies, neck)


def close_maps_homotopic(f1: MapField, f2: MapField, sigma: float = SIGMA, mask=None):
    """``(max d(f1, f2) < sigma, max d)``, optionally restricted to a node mask."""
    if f1.grid != f2.grid:
        raise GeometryError("fields live on different grids")
    d = sphere_distance(f1.values, f2.values)
    if mask is not None:
        d = d[mask]
    dmax = float(np.max(d)) if d.size else 0.0
    return dmax < sigma, dmax


def neck_spec_from_node(field: MapField, node: BubbleNode, n_loop: int = 256) -> NeckSpec:
    """Neck spec whose collars end at the node's neck radii: ``a = 2 neck_inner``,
    ``b = neck_outer / 2``; ``p, q`` are the normalised loop means there."""
    if node.neck_outer < 4 * math.e * node.neck_inner:
        raise BubbleError("neck too short for surgery (needs neck_outer >= 4e neck_inner)")
    th = 2 * np.pi * np.arange(n_loop) / n_loop
    q = project(np.mean(_loop_at(field, node.center, node.neck_inner, th), axis=0))
    p = project(np.mean(_loop_at(field, node.center, node.neck_outer, th), axis=0))
    return NeckSpec(p, q, 2 * node.neck_inner, node.neck_outer / 2, tuple(node.center))
