"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from the ``CHDBC_KERNELS``
environment variable: ``numba`` (default, falls back silently if numba is
unavailable) or ``numpy``.  Both implementations are always importable as
``numpy_impl`` / ``numba_impl`` so they can be compared directly.

Field layout: interior fields are ``(nx, ny)`` arrays indexed ``[i, j]`` with
``x = i*hx`` periodic and ``y = j*hy``; boundary fields are ``(2, nx)`` arrays
holding the bottom (``y=0``) and top (``y=1``) rows.
"""
import os
import types

import numpy as np

MAX_ITER = 200
RTOL = 1e-12


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def _np_neumann_laplacian(f, hx, hy):
    lx = (np.roll(f, -1, axis=0) - 2.0 * f + np.roll(f, 1, axis=0)) / (hx * hx)
    up = np.empty_like(f)
    dn = np.empty_like(f)
    up[:, :-1] = f[:, 1:]
    up[:, -1] = f[:, -2]
    dn[:, 1:] = f[:, :-1]
    dn[:, 0] = f[:, 1]
    return lx + (up - 2.0 * f + dn) / (hy * hy)


def _np_periodic_second_difference(v, hx):
    return (np.roll(v, -1, axis=-1) - 2.0 * v + np.roll(v, 1, axis=-1)) / (hx * hx)


def _np_dirichlet_form(a, b, hx, hy):
    ny = a.shape[1]
    wy = np.full(ny, hy)
    wy[0] = wy[-1] = 0.5 * hy
    dax = np.roll(a, -1, axis=0) - a
    dbx = np.roll(b, -1, axis=0) - b
    sx = np.sum((dax * dbx) @ wy) / hx
    day = a[:, 1:] - a[:, :-1]
    dby = b[:, 1:] - b[:, :-1]
    sy = np.sum(day * dby) * hx / hy
    return sx + sy


def _np_poly_resolvent(r, k, d):
    # s + k*s**d = r with k > 0 and odd d >= 3; Newton from the right of the
    # root is monotone because the map is convex on s > 0.
    r = np.asarray(r, dtype=float)
    a = np.abs(r).ravel()
    s = np.minimum(a, (a / k) ** (1.0 / d))
    active = a > 0.0
    for _ in range(MAX_ITER):
        if not active.any():
            break
        sa = s[active]
        phi = sa + k * sa**d - a[active]
        dphi = 1.0 + k * d * sa ** (d - 1)
        step = phi / dphi
        snew = np.maximum(sa - step, 0.0)
        s[active] = snew
        done = np.abs(step) <= RTOL * np.maximum(snew, 1e-300) + 1e-300
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return np.copysign(s.reshape(r.shape), r)


def _np_log_resolvent(r, k):
    # s + 2k*atanh(s) = r on (-1, 1), solved for t = atanh(s): tanh(t) + 2k*t
    # is concave and increasing on t >= 0, so Newton from t = 0 stays left of
    # the root and converges monotonically.
    r = np.asarray(r, dtype=float)
    a = np.abs(r).ravel()
    t = np.zeros_like(a)
    active = a > 0.0
    for _ in range(MAX_ITER):
        if not active.any():
            break
        ta = t[active]
        th = np.tanh(ta)
        phi = th + 2.0 * k * ta - a[active]
        dphi = (1.0 - th) * (1.0 + th) + 2.0 * k
        step = np.maximum(-phi / dphi, 0.0)
        tnew = ta + step
        t[active] = tnew
        done = step <= RTOL * np.maximum(tnew, 1e-300) + 1e-300
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    s = np.minimum(np.tanh(t), np.nextafter(1.0, 0.0))
    return np.copysign(s.reshape(r.shape), r)


numpy_impl = types.SimpleNamespace(
    name="numpy",
    neumann_laplacian=_np_neumann_laplacian,
    periodic_second_difference=_np_periodic_second_difference,
    dirichlet_form=_np_dirichlet_form,
    poly_resolvent=_np_poly_resolvent,
    log_resolvent=_np_log_resolvent,
)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

def _build_numba():
    import numba as nb

    @nb.njit(cache=True)
    def neumann_laplacian(f, hx, hy):
        nx, ny = f.shape
        out = np.empty_like(f)
        ihx2 = 1.0 / (hx * hx)
        ihy2 = 1.0 / (hy * hy)
        for i in range(nx):
            ip = i + 1 if i + 1 < nx else 0
            im = i - 1 if i > 0 else nx - 1
            for j in range(ny):
                jp = j + 1 if j + 1 < ny else ny - 2
                jm = j - 1 if j > 0 else 1
                out[i, j] = (f[ip, j] - 2.0 * f[i, j] + f[im, j]) * ihx2 + (
                    f[i, jp] - 2.0 * f[i, j] + f[i, jm]
                ) * ihy2
        return out

    @nb.njit(cache=True)
    def periodic_second_difference(v, hx):
        nr, nx = v.shape
        out = np.empty_like(v)
        ihx2 = 1.0 / (hx * hx)
        for r in range(nr):
            for i in range(nx):
                ip = i + 1 if i + 1 < nx else 0
                im = i - 1 if i > 0 else nx - 1
                out[r, i] = (v[r, ip] - 2.0 * v[r, i] + v[r, im]) * ihx2
        return out

    @nb.njit(cache=True)
    def dirichlet_form(a, b, hx, hy):
        nx, ny = a.shape
        sx = 0.0
        sy = 0.0
        for i in range(nx):
            ip = i + 1 if i + 1 < nx else 0
            for j in range(ny):
                w = 0.5 * hy if (j == 0 or j == ny - 1) else hy
                sx += w * (a[ip, j] - a[i, j]) * (b[ip, j] - b[i, j])
                if j + 1 < ny:
                    sy += (a[i, j + 1] - a[i, j]) * (b[i, j + 1] - b[i, j])
        return sx / hx + sy * hx / hy

    @nb.njit(cache=True)
    def _poly_scalar(r, k, d):
        a = abs(r)
        if a == 0.0:
            return 0.0
        s = min(a, (a / k) ** (1.0 / d))
        for _ in range(MAX_ITER):
            phi = s + k * s**d - a
            dphi = 1.0 + k * d * s ** (d - 1)
            step = phi / dphi
            s = max(s - step, 0.0)
            if abs(step) <= RTOL * max(s, 1e-300) + 1e-300:
                break
        return s if r > 0.0 else -s

    @nb.njit(cache=True)
    def _log_scalar(r, k):
        a = abs(r)
        if a == 0.0:
            return 0.0
        t = 0.0
        for _ in range(MAX_ITER):
            th = np.tanh(t)
            phi = th + 2.0 * k * t - a
            dphi = (1.0 - th) * (1.0 + th) + 2.0 * k
            step = max(-phi / dphi, 0.0)
            t += step
            if step <= RTOL * max(t, 1e-300) + 1e-300:
                break
        s = min(np.tanh(t), np.nextafter(1.0, 0.0))
        return s if r > 0.0 else -s

    @nb.njit(cache=True)
    def _poly_flat(r, k, d):
        out = np.empty_like(r)
        for n in range(r.size):
            out[n] = _poly_scalar(r[n], k, d)
        return out

    @nb.njit(cache=True)
    def _log_flat(r, k):
        out = np.empty_like(r)
        for n in range(r.size):
            out[n] = _log_scalar(r[n], k)
        return out

    def poly_resolvent(r, k, d):
        r = np.asarray(r, dtype=float)
        return _poly_flat(r.ravel(), float(k), int(d)).reshape(r.shape)

    def log_resolvent(r, k):
        r = np.asarray(r, dtype=float)
        return _log_flat(r.ravel(), float(k)).reshape(r.shape)

    return types.SimpleNamespace(
        name="numba",
        neumann_laplacian=neumann_laplacian,
        periodic_second_difference=periodic_second_difference,
        dirichlet_form=dirichlet_form,
        poly_resolvent=poly_resolvent,
        log_resolvent=log_resolvent,
    )


try:
    numba_impl = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None


def select(name=None):
    """Return the kernel namespace for ``name`` (``"numba"`` or ``"numpy"``)."""
    name = (name or os.environ.get("CHDBC_KERNELS", "numba")).lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"CHDBC_KERNELS must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and numba_impl is not None:
        return numba_impl
    return numpy_impl


K = select()
BACKEND = K.name
