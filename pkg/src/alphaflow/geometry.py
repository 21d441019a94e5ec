"""Flat square torus, round sphere target, and the map field living between them.

All sphere operations are vectorised over leading axes: a point is an array whose
last axis has length ``k`` (the ambient dimension).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROJECT_FLOOR = 1e-6
TANGENT_TOL = 1e-8
ANTIPODAL_TOL = 1e-8


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Doubly periodic ``nx`` x ``ny`` node grid on the square torus of side ``L``.

    Node ``(i, j)`` sits at ``(i*h, j*h)``.  ``cutoff_radius`` is the support
    radius of the monotonicity cutoff and must satisfy ``R_M <= L/4``.
    """

    nx: int
    side_length: float = 1.0
    ny: int | None = None
    cutoff_radius: float | None = None

    def __post_init__(self):
        ny = self.nx if self.ny is None else self.ny
        object.__setattr__(self, "ny", int(ny))
        object.__setattr__(self, "nx", int(self.nx))
        if self.nx != self.ny:
            raise GeometryError("torus grid must be square (nx = ny)")
        if self.nx < 8:
            raise GeometryError("nx >= 8 required")
        if not self.side_length > 0:
            raise GeometryError("side length must be positive")
        rm = self.side_length / 4 if self.cutoff_radius is None else self.cutoff_radius
        if not 0 < rm <= self.side_length / 4 + 1e-15:
            raise GeometryError("cutoff radius must satisfy 0 < R_M <= L/4")
        object.__setattr__(self, "cutoff_radius", float(rm))

    @property
    def h(self) -> float:
        return self.side_length / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.side_length ** 2

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(X, Y)``, each of shape ``(nx, ny)``."""
        x = np.arange(self.nx) * self.h
        y = np.arange(self.ny) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def point(self, node) -> np.ndarray:
        i, j = node
        return np.array([(i % self.nx) * self.h, (j % self.ny) * self.h])

    def nearest_node(self, point) -> tuple[int, int]:
        x, y = point
        return (int(round(x / self.h)) % self.nx, int(round(y / self.h)) % self.ny)

    def wrap(self, d):
        """Minimal periodic representative of a displacement, in ``(-L/2, L/2]``."""
        L = self.side_length
        w = np.asarray(d, dtype=float) - L * np.floor(np.asarray(d, dtype=float) / L)
        return np.where(w > L / 2, w - L, w)

    def displacement_from(self, point) -> tuple[np.ndarray, np.ndarray]:
        """Minimal periodic ``x - point`` for every node ``x``."""
        X, Y = self.coordinates()
        return self.wrap(X - point[0]), self.wrap(Y - point[1])

    def distance_from(self, point) -> np.ndarray:
        dx, dy = self.displacement_from(point)
        return np.hypot(dx, dy)


@dataclass(frozen=True)
class SphereTarget:
    """The unit sphere S^{k-1} in R^k."""

    ambient_dim: int = 3

    def __post_init__(self):
        if self.ambient_dim < 3:
            raise GeometryError("ambient dimension k >= 3 required")

    def contains(self, y, tol=1e-12) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(np.abs(np.linalg.norm(y, axis=-1) - 1) <= tol))


@dataclass
class MapField:
    """Per-node ambient vectors, ``values.shape == (nx, ny, k)``."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape[:2] != self.grid.shape or self.values.ndim != 3:
            raise GeometryError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @property
    def k(self) -> int:
        return self.values.shape[2]

    @property
    def target(self) -> SphereTarget:
        return SphereTarget(self.k)

    def norm_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0)))

    def validate(self, tol=1e-12) -> "MapField":
        if not np.all(np.isfinite(self.values)):
            raise GeometryError("map field contains non-finite values")
        defect = self.norm_defect()
        if defect > tol:
            raise GeometryError(f"map field is off the sphere by {defect:.3e}")
        return self

    def copy(self) -> "MapField":
        return MapField(self.grid, self.values.copy())

    def sample(self, points) -> np.ndarray:
        """Bilinear periodic interpolation at arbitrary planar points, then projection."""
        points = np.asarray(points, dtype=float)
        g = self.grid
        s = points[..., 0] / g.h
        t = points[..., 1] / g.h
        i0 = np.floor(s).astype(np.int64)
        j0 = np.floor(t).astype(np.int64)
        fs = (s - i0)[..., None]
        ft = (t - j0)[..., None]
        i0 %= g.nx
        j0 %= g.ny
        i1 = (i0 + 1) % g.nx
        j1 = (j0 + 1) % g.ny
        v = self.values
        out = ((1 - fs) * (1 - ft) * v[i0, j0] + fs * (1 - ft) * v[i1, j0]
               + (1 - fs) * ft * v[i0, j1] + fs * ft * v[i1, j1])
        return project(out)


def project(y):
    """Nearest-point retraction onto the sphere, ``y / |y|``."""
    y = np.asarray(y, dtype=float)
    n = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(n <= PROJECT_FLOOR):
        raise GeometryError("projection undefined at origin")
    return y / n


def _check_tangent(p, *vectors):
    for v in vectors:
        if np.any(np.abs(np.sum(p * v, axis=-1)) > TANGENT_TOL):
            raise GeometryError("vector is not tangent to the sphere at p")


def second_fundamental_form(p, X, Y):
    """``A(p)(X, Y) = (X.Y) p`` for tangent ``X, Y`` at ``p``.

    Sign chosen so that ``lap u + A(u)(du, du)`` is the tangential part of ``lap u``.
    """
    p, X, Y = (np.asarray(a, dtype=float) for a in (p, X, Y))
    _check_tangent(p, X, Y)
    return np.sum(X * Y, axis=-1, keepdims=True) * p


def exp_point(p, v):
    """Great-circle exponential map ``cos|v| p + sin|v| v/|v|``; requires ``|v| < pi``."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n >= np.pi):
        raise GeometryError("outside injectivity radius")
    small = n <= 1e-15
    safe = np.where(small, 1.0, n)
    out = np.cos(n) * p + np.sin(n) * v / safe
    return np.where(small, p + v, out) if np.any(small) else out


def log_point(p, q):
    """Inverse of :func:`exp_point`; the tangent vector at ``p`` pointing to ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = np.sum(p * q, axis=-1, keepdims=True)
    if np.any(c <= -1 + ANTIPODAL_TOL):
        raise GeometryError("log undefined at cut locus")
    w = q - c * p
    s = np.linalg.norm(w, axis=-1, keepdims=True)
    theta = np.arctan2(s, c)
    small = s <= 1e-300
    return np.where(small, 0.0, w * (theta / np.where(small, 1.0, s)))


def sphere_distance(p, q):
    """Geodesic distance, robust near 0 and pi."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = np.sum(p * q, axis=-1)
    s = np.linalg.norm(np.cross(p, q) if p.shape[-1] == 3 else q - c[..., None] * p, axis=-1)
    return np.arctan2(s, c)


def geodesic(p, q, s):
    """Point at parameter ``s`` on the minimal great-circle arc from ``p`` to ``q``.

    ``s`` broadcasts against the leading axes of ``p`` and ``q``.
    """
    p = np.asarray(p, dtype=float)
    v = log_point(p, q)
    s = np.asarray(s, dtype=float)[..., None]
    return exp_point(p, s * v)


def periodic_displacement(grid: TorusGrid, a, b) -> np.ndarray:
    """Minimal signed ``a - b`` for nodes ``a, b``; ties at ``L/2`` resolve to ``+L/2``."""
    d = grid.point(a) - grid.point(b)
    return grid.wrap(d)


def tangent_frame(p):
    """Two orthonormal tangent vectors at a point of S^2 (deterministic choice)."""
    p = np.asarray(p, dtype=float)
    ref = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - np.dot(ref, p) * p
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(p, e1)
    return e1, e2
