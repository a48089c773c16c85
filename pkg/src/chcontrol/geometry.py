"""Structured cell-centered grids on rectangles, Neumann Laplacian and friends.

Fields are plain numpy arrays of shape ``grid.shape``; space-time fields carry
a leading time axis of length ``Nt + 1``.  Homogeneous Neumann conditions are
imposed by mirrored ghost cells, which gives a symmetric Laplacian whose rows
sum to zero exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft
import scipy.sparse as sp

from .errors import ConformanceError, PreconditionError, SolverError


@dataclass(frozen=True)
class Grid:
    """Cell-centered tensor grid on ``[0, Lx] (x [0, Ly])``."""

    lengths: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        nodes = tuple(int(v) for v in np.atleast_1d(self.nodes))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "nodes", nodes)
        if len(lengths) not in (1, 2) or len(nodes) != len(lengths):
            raise PreconditionError("grid must be 1D or 2D with one node count per extent")
        if any(n < 4 for n in nodes):
            raise PreconditionError(f"need at least 4 nodes per direction, got {nodes}")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise PreconditionError(f"extents must be positive, got {lengths}")

    @classmethod
    def uniform(cls, dim: int, length: float, n: int) -> "Grid":
        return cls((length,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.nodes[axis]) + 0.5) * h

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to ``self.shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dim)), indexing="ij"))

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Sparse Neumann Laplacian acting on C-order raveled fields."""
        ops = [_laplacian_1d(n, h) for n, h in zip(self.nodes, self.spacing)]
        if self.dim == 1:
            return ops[0].tocsr()
        ix = sp.identity(self.nodes[0], format="csr")
        iy = sp.identity(self.nodes[1], format="csr")
        return (sp.kron(ops[0], iy) + sp.kron(ix, ops[1])).tocsr()

    @cached_property
    def laplacian_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``-laplacian`` indexed like the DCT-II coefficients."""
        lam = [
            (2.0 / h**2) * (1.0 - np.cos(np.pi * np.arange(n) / n))
            for n, h in zip(self.nodes, self.spacing)
        ]
        if self.dim == 1:
            return lam[0]
        return lam[0][:, None] + lam[1][None, :]

    def check(self, f, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ConformanceError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        return f

    def check_series(self, f, tgrid: "TimeGrid", name: str = "space-time field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        expected = (tgrid.steps + 1,) + self.shape
        if f.shape != expected:
            raise ConformanceError(f"{name} has shape {f.shape}, expected {expected}")
        return f


def _laplacian_1d(n: int, h: float) -> sp.spmatrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0  # mirrored ghost: f[-1] = f[0], f[n] = f[n-1]
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], shape=(n, n)) / h**2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``steps`` intervals."""

    T: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise PreconditionError(f"final time must be positive, got {self.T}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise PreconditionError(f"need at least 2 time steps, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "T", float(self.T))

    @property
    def tau(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau

    def weights(self, rule: str = "right") -> np.ndarray:
        """Rectangle-rule quadrature weights over the time nodes.

        ``right`` puts weight tau on nodes 1..Nt, ``left`` on nodes 0..Nt-1.
        """
        w = np.full(self.steps + 1, self.tau)
        if rule == "right":
            w[0] = 0.0
        elif rule == "left":
            w[-1] = 0.0
        else:
            raise ValueError(f"unknown quadrature rule {rule!r}")
        return w


# -- spatial operators -------------------------------------------------------


def laplacian_neumann(f, g: Grid) -> np.ndarray:
    """Divergence of face fluxes, zero flux through the boundary.

    Same operator as ``g.laplacian`` but written with differences, so a
    constant field maps to exactly zero.
    """
    f = g.check(f)
    out = np.zeros(g.shape)
    for axis, h in enumerate(g.spacing):
        flux = np.diff(f, axis=axis) / h
        pad = [(0, 0)] * g.dim
        pad[axis] = (1, 1)
        out += np.diff(np.pad(flux, pad), axis=axis) / h
    return out


def mean(f, g: Grid) -> float:
    f = g.check(f)
    return float(f.sum() * g.cell_volume / g.volume)


def inner(f, h, g: Grid) -> float:
    """Discrete L2(Omega) inner product (midpoint rule)."""
    return float(np.vdot(g.check(f), g.check(h)) * g.cell_volume)


def norm_l2(f, g: Grid) -> float:
    return float(np.sqrt(inner(f, f, g)))


def gradient_norm(f, g: Grid) -> float:
    """L2 norm of the one-sided (face) differences; zero flux across the boundary."""
    f = g.check(f)
    total = 0.0
    for axis, h in enumerate(g.spacing):
        d = np.diff(f, axis=axis) / h
        total += float(np.sum(d * d))
    return float(np.sqrt(total * g.cell_volume))


def norm_h1(f, g: Grid) -> float:
    return float(np.hypot(norm_l2(f, g), gradient_norm(f, g)))


def inverse_neumann(psi, g: Grid, tol: float = 1e-12, method: str = "cg", max_iter: int | None = None) -> np.ndarray:
    """Zero-mean solution z of ``-laplacian(z) = psi`` for zero-mean ``psi``.

    ``method="cg"`` runs conjugate gradients restricted to the zero-mean
    subspace; ``method="dct"`` diagonalizes with the type-II cosine transform.
    """
    psi = g.check(psi, "psi")
    scale = float(np.max(np.abs(psi))) if psi.size else 0.0
    if abs(mean(psi, g)) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise PreconditionError("inverse_neumann needs a zero-mean right-hand side")
    if scale == 0.0:
        return np.zeros(g.shape)
    if method == "dct":
        return _inverse_neumann_dct(psi, g)
    if method == "cg":
        return _inverse_neumann_cg(psi, g, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def _inverse_neumann_dct(psi: np.ndarray, g: Grid) -> np.ndarray:
    coeff = scipy.fft.dctn(psi, type=2, norm="ortho")
    lam = np.array(g.laplacian_eigenvalues, copy=True)
    lam.flat[0] = 1.0
    coeff = coeff / lam
    coeff.flat[0] = 0.0
    return scipy.fft.idctn(coeff, type=2, norm="ortho")


def _inverse_neumann_cg(psi: np.ndarray, g: Grid, tol: float, max_iter: int | None) -> np.ndarray:
    A = -g.laplacian
    b = psi.ravel() - psi.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    cap = max_iter if max_iter is not None else 10 * g.size
    for _ in range(cap):
        if np.sqrt(rr) <= tol * bnorm:
            break
        Ap = A @ p
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        r -= r.mean()  # stay in the range of A
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    else:
        res = np.linalg.norm(b - A @ x) / bnorm
        if res > tol:
            raise SolverError(f"CG stalled after {cap} iterations", residual=float(res))
    x -= x.mean()
    return x.reshape(g.shape)


def dual_norm(psi, g: Grid, method: str = "cg") -> float:
    """Hilbert norm on the dual of H1: ``|grad N(psi - mean)|^2 + mean^2``."""
    psi = g.check(psi, "psi")
    m = mean(psi, g)
    centered = psi - m
    centered -= centered.mean()
    if np.max(np.abs(centered)) <= 1e-14 * np.max(np.abs(psi)):
        return abs(m)
    z = inverse_neumann(centered, g, method=method)
    return float(np.sqrt(gradient_norm(z, g) ** 2 + m * m))


# -- time operators ----------------------------------------------------------


def conv_forward(v, tgrid: TimeGrid, rule: str = "right") -> np.ndarray:
    """``(1 * v)(t_n) = int_0^{t_n} v``; the right rule matches implicit Euler."""
    v = np.asarray(v, dtype=float)
    _check_time_axis(v, tgrid)
    out = np.zeros_like(v)
    tau = tgrid.tau
    if rule == "right":
        np.cumsum(tau * v[1:], axis=0, out=out[1:])
    elif rule == "left":
        np.cumsum(tau * v[:-1], axis=0, out=out[1:])
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return out


def conv_backward(v, tgrid: TimeGrid, rule: str = "left") -> np.ndarray:
    """``(1 (*) v)(t_n) = int_{t_n}^T v``.

    With the left rule, ``(R[n+1] - R[n]) / tau = -v[n]`` holds exactly.
    """
    v = np.asarray(v, dtype=float)
    _check_time_axis(v, tgrid)
    out = np.zeros_like(v)
    tau = tgrid.tau
    if rule == "left":
        src = v[:-1]
    elif rule == "right":
        src = v[1:]
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    out[:-1] = np.cumsum((tau * src)[::-1], axis=0)[::-1]
    return out


def _check_time_axis(v: np.ndarray, tgrid: TimeGrid):
    if v.ndim < 1 or v.shape[0] != tgrid.steps + 1:
        raise ConformanceError(f"time axis has length {v.shape[0] if v.ndim else 0}, expected {tgrid.steps + 1}")


def inner_q(a, b, g: Grid, tgrid: TimeGrid, rule: str = "left") -> float:
    """L2(Q) inner product: rectangle rule in time, midpoint in space."""
    a = g.check_series(a, tgrid)
    b = g.check_series(b, tgrid)
    w = tgrid.weights(rule)
    per_slice = (a * b).reshape(len(a), -1).sum(axis=1)
    return float(np.dot(w, per_slice) * g.cell_volume)


def norm_q(a, g: Grid, tgrid: TimeGrid, rule: str = "left") -> float:
    return float(np.sqrt(inner_q(a, a, g, tgrid, rule)))

