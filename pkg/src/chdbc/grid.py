"""Node-centred finite differences on the unit square, periodic in x.

The domain has two boundary circles, the node rows ``y = 0`` and ``y = 1``.
Interior fields are ``(nx, ny)`` arrays and boundary fields are ``(2, nx)``
arrays (row 0 is the bottom, row 1 the top).  Quadrature is the trapezoid
rule in ``y`` and the uniform rule in ``x``.  Under this quadrature the
ghost-reflection Neumann Laplacian is exactly minus the stiffness form,
``inner(-laplacian_neumann(u), phi) == dirichlet_form(u, phi)``, so discrete
integration by parts holds to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels


class SolverError(RuntimeError):
    """Iterative linear solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


CG_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``nx`` periodic cells and ``ny`` nodes in y."""

    nx: int = 32
    ny: int = 33

    def __post_init__(self):
        if self.nx < 4 or self.nx % 2:
            raise ValueError(f"nx must be even and >= 4, got {self.nx}")
        if self.ny < 4:
            raise ValueError(f"ny must be >= 4, got {self.ny}")

    # -- geometry -------------------------------------------------------------
    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / (self.ny - 1)

    @property
    def shape(self) -> tuple:
        return (self.nx, self.ny)

    @property
    def bshape(self) -> tuple:
        return (2, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.hx

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.hy

    @cached_property
    def mesh(self) -> tuple:
        """``(X, Y)`` coordinate arrays of interior shape."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.shape, self.hx * self.hy)
        w[:, 0] *= 0.5
        w[:, -1] *= 0.5
        return w

    @cached_property
    def bweights(self) -> np.ndarray:
        return np.full(self.bshape, self.hx)

    @property
    def area(self) -> float:
        return 1.0

    @property
    def boundary_length(self) -> float:
        return 2.0

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def bzeros(self) -> np.ndarray:
        return np.zeros(self.bshape)

    def check_field(self, f, name="field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ValueError(f"{name} has shape {f.shape}, expected {self.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"{name} has nonfinite values")
        return f

    def check_bfield(self, v, name="boundary field") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != self.bshape:
            raise ValueError(f"{name} has shape {v.shape}, expected {self.bshape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} has nonfinite values")
        return v

    # -- quadrature -----------------------------------------------------------
    def mean(self, f) -> float:
        return float(np.sum(self.weights * f)) / self.area

    def inner(self, a, b) -> float:
        return float(np.sum(self.weights * a * b))

    def norm(self, f) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def boundary_inner(self, a, b) -> float:
        return float(np.sum(a * b)) * self.hx

    def boundary_norm(self, v) -> float:
        return float(np.sqrt(self.boundary_inner(v, v)))

    def boundary_mean(self, v) -> float:
        return float(np.sum(v)) * self.hx / self.boundary_length

    def dirichlet_form(self, a, b) -> float:
        """Quadrature of ``grad a . grad b`` over the domain."""
        return float(_kernels.K.dirichlet_form(np.ascontiguousarray(a, dtype=float),
                                                np.ascontiguousarray(b, dtype=float),
                                                self.hx, self.hy))

    def boundary_dirichlet_form(self, a, b) -> float:
        """Quadrature of the tangential gradient product along both circles."""
        da = np.roll(a, -1, axis=-1) - a
        db = np.roll(b, -1, axis=-1) - b
        return float(np.sum(da * db)) / self.hx

    def v_norm(self, f) -> float:
        """``sqrt(|grad f|^2 + mean(f)^2)``."""
        return float(np.sqrt(max(self.dirichlet_form(f, f), 0.0) + self.mean(f) ** 2))

    # -- operators ------------------------------------------------------------
    def trace(self, f) -> np.ndarray:
        f = np.asarray(f)
        return np.stack([f[:, 0], f[:, -1]])

    def laplacian_neumann(self, f) -> np.ndarray:
        """Five-point Laplacian with ghost reflection at ``y = 0, 1``."""
        return _kernels.K.neumann_laplacian(np.ascontiguousarray(f, dtype=float), self.hx, self.hy)

    def normal_derivative(self, f) -> np.ndarray:
        """Outward normal derivative at both boundary rows, one-sided and
        second order (exact for quadratics in y)."""
        f = np.asarray(f, dtype=float)
        h2 = 2.0 * self.hy
        bottom = (3.0 * f[:, 0] - 4.0 * f[:, 1] + f[:, 2]) / h2
        top = (3.0 * f[:, -1] - 4.0 * f[:, -2] + f[:, -3]) / h2
        return np.stack([bottom, top])

    def laplacian(self, f) -> np.ndarray:
        """Strong Laplacian that does not assume a vanishing normal derivative.

        Interior rows use the five-point stencil; boundary rows add back the
        flux that the ghost reflection suppresses, which makes the stencil
        exact for quadratics in y.
        """
        out = self.laplacian_neumann(f)
        dn = self.normal_derivative(f)
        out[:, 0] += (2.0 / self.hy) * dn[0]
        out[:, -1] += (2.0 / self.hy) * dn[1]
        return out

    def laplace_beltrami(self, v) -> np.ndarray:
        """Periodic three-point second difference along each boundary circle."""
        return _kernels.K.periodic_second_difference(np.ascontiguousarray(v, dtype=float), self.hx)

    # -- sparse assembly (flat index k = i*ny + j) ------------------------------
    def flat_index(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Flat interior indices of the boundary nodes, in ``(2, nx)`` order."""
        i = np.arange(self.nx)
        return np.stack([self.flat_index(i, 0), self.flat_index(i, self.ny - 1)])

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Matrix of :meth:`dirichlet_form`; symmetric positive semidefinite."""
        nx, ny, hx, hy = self.nx, self.ny, self.hx, self.hy
        rows, cols, vals = [], [], []
        idx = np.arange(self.size).reshape(self.shape)
        wy = np.full(ny, hy)
        wy[0] = wy[-1] = 0.5 * hy
        # x-edges
        a = idx.ravel()
        b = np.roll(idx, -1, axis=0).ravel()
        cx = np.broadcast_to(wy / hx, self.shape).ravel()
        # y-edges
        c = idx[:, :-1].ravel()
        d = idx[:, 1:].ravel()
        cy = np.full(c.size, hx / hy)
        for p, q, coef in ((a, b, cx), (c, d, cy)):
            rows += [p, q, p, q]
            cols += [p, q, q, p]
            vals += [coef, coef, -coef, -coef]
        m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size))
        return m.tocsr()

    @cached_property
    def boundary_stiffness(self) -> sp.csr_matrix:
        """Matrix of :meth:`boundary_dirichlet_form` on flattened ``(2, nx)`` fields."""
        n = self.nx
        ring = sp.diags([2.0 * np.ones(n), -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1], format="lil")
        ring[0, n - 1] = -1.0
        ring[n - 1, 0] = -1.0
        return (sp.block_diag([ring, ring]) / self.hx).tocsr()

    @cached_property
    def trace_matrix(self) -> sp.csr_matrix:
        """``B`` with ``B.T @ u.ravel() == trace(u).ravel()``."""
        cols = np.arange(2 * self.nx)
        rows = self.boundary_nodes.ravel()
        return sp.csr_matrix((np.ones(cols.size), (rows, cols)), shape=(self.size, 2 * self.nx))

    # -- elliptic solves ------------------------------------------------------
    def _pcg(self, lam: float, rhs: np.ndarray, what: str) -> np.ndarray:
        """Jacobi-preconditioned CG for ``(lam*W + K) y = rhs``, matrix free."""
        w = self.weights
        hx, hy = self.hx, self.hy
        kdiag = 2.0 * w * (1.0 / hx**2 + 1.0 / hy**2)
        dinv = 1.0 / (lam * w + kdiag)

        def apply(y):
            return lam * w * y - w * self.laplacian_neumann(y)

        bnorm = float(np.linalg.norm(rhs))
        y = np.zeros(self.shape)
        if bnorm == 0.0:
            return y
        r = rhs.copy()
        z = dinv * r
        p = z.copy()
        rz = float(np.sum(r * z))
        maxit = 10 * self.size
        res = 1.0
        for it in range(1, maxit + 1):
            ap = apply(p)
            alpha = rz / float(np.sum(p * ap))
            y += alpha * p
            r -= alpha * ap
            res = float(np.linalg.norm(r)) / bnorm
            if res <= CG_RTOL:
                break
            z = dinv * r
            rz_new = float(np.sum(r * z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise SolverError(f"{what} did not converge", res, maxit)
        true_res = float(np.linalg.norm(rhs - apply(y))) / bnorm
        if true_res > 10 * CG_RTOL:
            raise SolverError(f"{what} lost accuracy", true_res, it)
        return y

    def helmholtz_neumann_solve(self, lam: float, f) -> np.ndarray:
        """Solve ``lam*y - laplacian_neumann(y) = f``."""
        if not lam > 0:
            raise ValueError(f"lam must be positive, got {lam}")
        f = self.check_field(f, "rhs")
        y = self._pcg(float(lam), self.weights * f, "Helmholtz solve")
        # exact constant-mode balance: mean(y) = mean(f)/lam
        y += (self.mean(f) - lam * self.mean(y)) / lam
        return y

    def neumann_inverse_laplacian(self, f, mean_tol: float = 1e-10) -> np.ndarray:
        """Mean-free ``w`` with ``-laplacian_neumann(w) = f`` for mean-free ``f``."""
        f = self.check_field(f, "rhs")
        m = self.mean(f)
        if abs(m) > mean_tol:
            raise ValueError(f"neumann_inverse_laplacian requires a mean-free input, got mean {m:.3e}")
        y = self._pcg(0.0, self.weights * (f - m), "inverse Neumann Laplacian")
        return y - self.mean(y)

    def smooth_initial_datum(self, epsilon: float, u0) -> np.ndarray:
        """Solve ``u - sqrt(epsilon) * laplacian_neumann(u) = u0``."""
        if not epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        s = float(np.sqrt(epsilon))
        return self.helmholtz_neumann_solve(1.0 / s, np.asarray(u0, dtype=float) / s)

    def boundary_helmholtz_solve(self, lam: float, f) -> np.ndarray:
        """Solve ``lam*y - laplace_beltrami(y) = f`` on both circles (direct)."""
        if not lam > 0:
            raise ValueError(f"lam must be positive, got {lam}")
        f = self.check_bfield(f, "rhs")
        n = 2 * self.nx
        a = (lam * self.hx) * sp.identity(n, format="csc") + self.boundary_stiffness.tocsc()
        return spla.spsolve(a, self.hx * f.ravel()).reshape(self.bshape)
