"""Initial and synthetic map fields."""
from __future__ import annotations

import numpy as np

from .geometry import GeometryError, MapField, TorusGrid, exp_point, project

NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = np.array([0.0, 0.0, -1.0])


def constant(grid: TorusGrid, value=NORTH) -> MapField:
    value = project(np.asarray(value, dtype=float))
    return MapField(grid, np.broadcast_to(value, grid.shape + value.shape).copy())


def equatorial_wrap(grid: TorusGrid, d: int = 1, k: int = 3) -> MapField:
    """``x -> (cos 2 pi d x/L, sin 2 pi d x/L, 0)``; energy ``4 pi^2 d^2``."""
    X, _ = grid.coordinates()
    phase = 2 * np.pi * d * X / grid.side_length
    v = np.zeros(grid.shape + (k,))
    v[..., 0] = np.cos(phase)
    v[..., 1] = np.sin(phase)
    return MapField(grid, v)


def _bubble_profile(dx, dy, s, cutoff):
    r2 = dx * dx + dy * dy
    g = np.where(r2 < cutoff ** 2, (1 - r2 / cutoff ** 2) ** 2, 0.0)
    sg = s * g
    den = r2 + sg * sg
    v = np.empty(dx.shape + (3,))
    v[..., 0] = 2 * sg * dx / den
    v[..., 1] = 2 * sg * dy / den
    v[..., 2] = (sg * sg - r2) / den
    return v


def default_cutoff(grid: TorusGrid, s: float) -> float:
    return min(16 * s, grid.side_length / 2)


def glued_bubble(grid: TorusGrid, s: float, center=(0.5, 0.5), cutoff: float | None = None) -> MapField:
    """Degree-one inverse stereographic bubble of scale ``s``, equal to the south pole
    outside radius ``cutoff`` (default ``min(16 s, L/2)``).

    In stereographic coordinates about the south pole the map is ``z g(|z|)/s`` with
    ``g = (1 - r^2/cutoff^2)^2``, which leaves the map exactly conformal near the
    centre and smooth across the cutoff circle.
    """
    return glued_bubbles(grid, [(s, center)], cutoff=cutoff)


def glued_bubbles(grid: TorusGrid, bubbles, cutoff: float | None = None) -> MapField:
    """Several glued bubbles with disjoint cutoff disks; degree ``len(bubbles)``."""
    v = np.broadcast_to(SOUTH, grid.shape + (3,)).copy()
    placed = []
    for s, c in bubbles:
        if s <= 0:
            raise GeometryError("bubble scale must be positive")
        b = default_cutoff(grid, s) if cutoff is None else cutoff
        if b > grid.side_length / 2 + 1e-12:
            raise GeometryError("bubble cutoff exceeds half the torus period")
        for b2, c2 in placed:
            d = np.hypot(*grid.wrap(np.subtract(c, c2)))
            if d < b + b2:
                raise GeometryError("glued bubble disks overlap")
        placed.append((b, c))
        dx, dy = grid.displacement_from(c)
        inside = dx * dx + dy * dy < b * b
        v[inside] = _bubble_profile(dx[inside], dy[inside], s, b)
    return MapField(grid, v)


def fourier_perturbed(grid: TorusGrid, seed: int = 0, amplitude: float = 0.1,
                      modes: int = 2, k: int = 3) -> MapField:
    """Constant north pole plus low-frequency tangent noise of sup-norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    X, Y = grid.coordinates()
    L = grid.side_length
    noise = np.zeros(grid.shape + (k - 1,))
    for m in range(-modes, modes + 1):
        for n in range(-modes, modes + 1):
            if m == 0 and n == 0:
                continue
            phase = 2 * np.pi * (m * X + n * Y) / L
            a, b = rng.standard_normal((2, k - 1))
            noise += np.cos(phase)[..., None] * a + np.sin(phase)[..., None] * b
    noise *= amplitude / np.max(np.linalg.norm(noise, axis=-1))
    v = np.zeros(grid.shape + (k,))
    v[..., : k - 1] = noise
    v[..., k - 1] = 1.0
    return MapField(grid, project(v))


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _rotation_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(np.shape(angle) + (3, 3))
    out[..., 0, 0] = 1
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def long_neck(grid: TorusGrid, center=(0.5, 0.5), inner: float = 0.03, outer: float = 0.4,
              separation: float = 0.1, transition=(0.15, 0.175), slope: float = 1.0):
    """Two near-harmonic caps joined through a neck that wastes energy.

    The inner cap ``r < inner`` is ``exp_q`` of a linear chart map with gradient
    ``slope``; the outer cap ``r > outer`` is the constant ``p``.  Across the neck
    the map travels the geodesic from ``q`` to ``p`` (length ``separation``) on the
    short radial interval ``transition`` instead of spreading it logarithmically,
    while the linear part tapers off.  Returns ``(field, p, q)``.
    """
    p = NORTH.copy()
    q = _rotation_x(separation) @ p
    dx, dy = grid.displacement_from(center)
    r = np.hypot(dx, dy)
    lo, hi = np.log(transition[0]), np.log(transition[1])
    sigma = _smoothstep((np.log(np.maximum(r, 1e-300)) - lo) / (hi - lo))
    taper = 1 - _smoothstep((r - inner) / (transition[0] - inner))
    chart = np.zeros(grid.shape + (3,))
    chart[..., 0] = slope * taper * dx
    chart[..., 1] = slope * taper * dy
    v = exp_point(np.broadcast_to(p, chart.shape), chart)
    rot = _rotation_x(separation * (1 - sigma))
    v = np.einsum("ijab,ijb->ija", rot, v)
    v[r >= outer] = p
    return MapField(grid, project(v)), p, q
