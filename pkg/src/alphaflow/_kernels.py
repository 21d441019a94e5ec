# Fused periodic stencils for the flow; numpy equivalents live in flow.py.
import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def density(u, h):
    """Central-difference partials and the edge-averaged density
    ``e_i = (1/2h^2) sum_{j ~ i} |u_j - u_i|^2`` over the four neighbours."""
    nx, ny, k = u.shape
    ux = np.empty_like(u)
    uy = np.empty_like(u)
    e = np.empty((nx, ny))
    inv = 0.5 / h
    inv2 = 0.5 / (h * h)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            jm = j - 1 if j > 0 else ny - 1
            s = 0.0
            for c in range(k):
                v = u[i, j, c]
                ux[i, j, c] = (u[ip, j, c] - u[im, j, c]) * inv
                uy[i, j, c] = (u[i, jp, c] - u[i, jm, c]) * inv
                a = u[ip, j, c] - v
                b = u[im, j, c] - v
                d = u[i, jp, c] - v
                f = u[i, jm, c] - v
                s += a * a + b * b + d * d + f * f
            e[i, j] = s * inv2
    return ux, uy, e


@numba.njit(cache=True, nogil=True)
def density_stats(u, h, r2, alpha):
    """Derivatives plus the weight ``(r^2+e)^(alpha-1)`` and the sums
    ``(sum e, sum (r^2+e)^alpha, max e, sum u.(ux x uy))`` in one sweep.
    The degree sum is 0 unless k == 3."""
    ux, uy, e = density(u, h)
    nx, ny, k = u.shape
    w = np.empty((nx, ny))
    am1 = alpha - 1.0
    se = 0.0
    sa = 0.0
    me = 0.0
    sd = 0.0
    for i in range(nx):
        for j in range(ny):
            x = e[i, j]
            b = r2 + x
            wij = b ** am1
            w[i, j] = wij
            se += x
            sa += b * wij
            if x > me:
                me = x
            if k == 3:
                cx = ux[i, j, 1] * uy[i, j, 2] - ux[i, j, 2] * uy[i, j, 1]
                cy = ux[i, j, 2] * uy[i, j, 0] - ux[i, j, 0] * uy[i, j, 2]
                cz = ux[i, j, 0] * uy[i, j, 1] - ux[i, j, 1] * uy[i, j, 0]
                sd += u[i, j, 0] * cx + u[i, j, 1] * cy + u[i, j, 2] * cz
    return ux, uy, e, w, (se, sa, me, sd)


@numba.njit(cache=True, nogil=True)
def tension(u, w, h):
    """Tangential part of ``sum_{j ~ i} (w_i + w_j) / (2 w_i) (u_j - u_i) / h^2``.

    This is ``w^-1 div(w grad u)`` in conservative form, so that with the
    edge-averaged density it is exactly the discrete gradient of
    ``sum (r^2 + e)^alpha h^2`` divided by ``-2 alpha w``.
    """
    nx, ny, k = u.shape
    out = np.empty_like(u)
    inv2 = 1.0 / (h * h)
    f = np.empty(k)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            jm = j - 1 if j > 0 else ny - 1
            wi = w[i, j]
            if wi > 0.0:
                half = 0.5 / wi
                cp = (wi + w[ip, j]) * half
                cm = (wi + w[im, j]) * half
                dp = (wi + w[i, jp]) * half
                dm = (wi + w[i, jm]) * half
            else:
                cp = cm = dp = dm = 1.0
            dot = 0.0
            for c in range(k):
                v = u[i, j, c]
                fc = (cp * (u[ip, j, c] - v) + cm * (u[im, j, c] - v)
                      + dp * (u[i, jp, c] - v) + dm * (u[i, jm, c] - v)) * inv2
                f[c] = fc
                dot += fc * v
            for c in range(k):
                out[i, j, c] = f[c] - dot * u[i, j, c]
    return out


@numba.njit(cache=True, nogil=True)
def euler_project(u, v, dt):
    nx, ny, k = u.shape
    out = np.empty_like(u)
    for i in range(nx):
        for j in range(ny):
            s = 0.0
            for c in range(k):
                y = u[i, j, c] + dt * v[i, j, c]
                out[i, j, c] = y
                s += y * y
            n = np.sqrt(s)
            for c in range(k):
                out[i, j, c] /= n
    return out


@numba.njit(cache=True, nogil=True)
def power_sum(e, r2, alpha):
    s = 0.0
    for x in e.ravel():
        s += (r2 + x) ** alpha
    return s


@numba.njit(cache=True, nogil=True)
def weighted_speed(u_old, u_new, w, dt):
    """sum w |(u_new - u_old)/dt|^2 over nodes."""
    nx, ny, k = u_old.shape
    s = 0.0
    inv = 1.0 / dt
    for i in range(nx):
        for j in range(ny):
            v2 = 0.0
            for c in range(k):
                d = (u_new[i, j, c] - u_old[i, j, c]) * inv
                v2 += d * d
            s += w[i, j] * v2
    return s


@numba.njit(cache=True, nogil=True)
def first_nonfinite(u):
    nx, ny, k = u.shape
    for i in range(nx):
        for j in range(ny):
            for c in range(k):
                if not np.isfinite(u[i, j, c]):
                    return i, j
    return -1, -1
