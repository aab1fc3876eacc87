"""Periodic grids, finite-difference stencils as circular convolutions, and
circulant linear algebra.

A stencil with halfwidth m holds weights (w_{-m}, ..., w_0, ..., w_m) and acts
on a periodic sequence u of length M as

    (K u)_i = sum_j w_j * u[(i + j) mod M],

so a printed weight vector reads left-to-right as the coefficients of
u_{i-m}, ..., u_i, ..., u_{i+m}.  Central difference is then
[-1/(2h), 0, 1/(2h)] and the second difference is [1, -2, 1]/h^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import GridError, KernelError, ShapeError, SingularOperatorError

# Relative eigenvalue threshold below which a circulant operator is treated
# as singular.
SINGULAR_RTOL = 1e-12


class KernelConstraint(str, Enum):
    FREE = "free"
    SYMMETRIC = "symmetric"
    SKEW = "skew"
    ZERO = "zero"
    IDENTITY = "identity"


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic mesh with M nodes on [0, P); spacing h = P/M.

    Nodes double as quadrature points with uniform weights kappa_i = h
    (trapezoidal rule on a periodic grid).
    """

    M: int
    P: float
    h: float = field(init=False)
    kappa: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.M < 3:
            raise GridError(f"grid needs at least 3 nodes, got M={self.M}")
        if not self.P > 0:
            raise GridError(f"period must be positive, got P={self.P}")
        h = self.P / self.M
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "kappa", np.full(self.M, h))
        if abs(h * self.M - self.P) > 1e-14 * abs(self.P):
            raise GridError("h * M does not reproduce P")

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.M) * self.h


def make_grid(M: int, P: float) -> PeriodicGrid:
    return PeriodicGrid(int(M), float(P))


@dataclass(frozen=True)
class ConvKernel:
    """Odd-width circular convolution stencil with a symmetry constraint tag."""

    halfwidth: int
    weights: np.ndarray
    constraint: KernelConstraint = KernelConstraint.FREE
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        m = self.halfwidth
        if m < 0 or w.shape != (2 * m + 1,):
            raise KernelError(
                f"kernel width mismatch: halfwidth {m} needs {2*m+1} weights, got {w.shape}"
            )
        c = self.constraint
        if c == KernelConstraint.SYMMETRIC and not np.array_equal(w, w[::-1]):
            raise KernelError("symmetric kernel requires w_j == w_{-j}")
        if c == KernelConstraint.SKEW and not np.array_equal(w, -w[::-1]):
            raise KernelError("skew kernel requires w_j == -w_{-j}")
        if c == KernelConstraint.ZERO and np.any(w != 0):
            raise KernelError("zero kernel requires all-zero weights")
        if c == KernelConstraint.IDENTITY:
            expect = np.zeros(2 * m + 1)
            expect[m] = 1.0
            if not np.array_equal(w, expect):
                raise KernelError("identity kernel requires w_0 == 1 and zeros elsewhere")

    @property
    def width(self) -> int:
        return 2 * self.halfwidth + 1

    def reversed(self) -> "ConvKernel":
        """Index-reversed kernel; generates the transposed circulant."""
        return ConvKernel(self.halfwidth, self.weights[::-1], KernelConstraint.FREE, self.name)


def identity_kernel() -> ConvKernel:
    return ConvKernel(0, np.array([1.0]), KernelConstraint.IDENTITY, "identity")


def zero_kernel(halfwidth: int = 0) -> ConvKernel:
    return ConvKernel(halfwidth, np.zeros(2 * halfwidth + 1), KernelConstraint.ZERO, "zero")


def central_difference_kernel(h: float) -> ConvKernel:
    """delta_c: second-order first derivative, skew."""
    return ConvKernel(
        1, np.array([-1.0, 0.0, 1.0]) / (2.0 * h), KernelConstraint.SKEW, "delta_c"
    )


def second_difference_kernel(h: float) -> ConvKernel:
    """delta_c^2 = delta_f delta_b: second-order second derivative, symmetric."""
    return ConvKernel(
        1, np.array([1.0, -2.0, 1.0]) / (h * h), KernelConstraint.SYMMETRIC, "delta_c2"
    )


def _check_kernel_fits(kernel: ConvKernel, M: int):
    if M < kernel.width:
        raise KernelError(
            f"kernel of width {kernel.width} does not fit on a grid with M={M}"
        )


def stencil_apply(kernel: ConvKernel, u: np.ndarray) -> np.ndarray:
    """Apply the circular stencil along the last axis of u."""
    u = np.asarray(u, dtype=float)
    M = u.shape[-1]
    _check_kernel_fits(kernel, M)
    m = kernel.halfwidth
    w = kernel.weights
    out = np.zeros_like(u)
    for j in range(-m, m + 1):
        wj = w[j + m]
        if wj != 0.0:
            out += wj * np.roll(u, -j, axis=-1)
    return out


def circulant_matrix(kernel: ConvKernel, M: int) -> np.ndarray:
    """Dense circulant matrix whose product with u equals stencil_apply(kernel, u)."""
    _check_kernel_fits(kernel, M)
    m = kernel.halfwidth
    row0 = np.zeros(M)
    for j in range(-m, m + 1):
        row0[j % M] += kernel.weights[j + m]
    # C[i, (i+j) % M] = w_j, so row i is the first row rolled right by i
    out = np.empty((M, M))
    for i in range(M):
        out[i] = np.roll(row0, i)
    return out


def circulant_eigenvalues(kernel: ConvKernel, M: int) -> np.ndarray:
    """Eigenvalues of the generated circulant (DFT of the first row)."""
    _check_kernel_fits(kernel, M)
    m = kernel.halfwidth
    row0 = np.zeros(M)
    for j in range(-m, m + 1):
        row0[j % M] += kernel.weights[j + m]
    return np.fft.fft(row0)


def is_singular(kernel: ConvKernel, M: int, rtol: float = SINGULAR_RTOL) -> bool:
    lam = np.abs(circulant_eigenvalues(kernel, M))
    lmax = lam.max()
    return lmax == 0.0 or lam.min() < rtol * lmax


class CirculantSolver:
    """Cached dense LU factorization of the circulant generated by a kernel.

    Direct factorization only; M stays desk-scale (<= a few hundred) in this
    package so dense is both fast and deterministic.
    """

    def __init__(self, kernel: ConvKernel, M: int):
        if is_singular(kernel, M):
            raise SingularOperatorError(
                f"circulant operator '{kernel.name or 'unnamed'}' is singular at M={M}",
                kernel_name=kernel.name,
            )
        self.kernel = kernel
        self.M = M
        self._lu = scipy.linalg.lu_factor(circulant_matrix(kernel, M))
        self._lu_t = None

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve C y = b along the last axis of b."""
        b = np.asarray(b, dtype=float)
        if b.shape[-1] != self.M:
            raise ShapeError(f"rhs length {b.shape[-1]} != M={self.M}")
        flat = b.reshape(-1, self.M)
        sol = scipy.linalg.lu_solve(self._lu, flat.T).T
        return sol.reshape(b.shape)

    def solve_transposed(self, b: np.ndarray) -> np.ndarray:
        """Solve C^T y = b; the reverse-mode rule for the solve."""
        b = np.asarray(b, dtype=float)
        if b.shape[-1] != self.M:
            raise ShapeError(f"rhs length {b.shape[-1]} != M={self.M}")
        flat = b.reshape(-1, self.M)
        sol = scipy.linalg.lu_solve(self._lu, flat.T, trans=1).T
        return sol.reshape(b.shape)


def solve_circulant(kernel: ConvKernel, b: np.ndarray) -> np.ndarray:
    """One-shot circulant solve; use CirculantSolver when the kernel is reused."""
    b = np.asarray(b, dtype=float)
    return CirculantSolver(kernel, b.shape[-1]).solve(b)


def discrete_inner(u: np.ndarray, v: np.ndarray, grid: PeriodicGrid) -> float:
    """Quadrature-weighted inner product sum_i kappa_i u_i v_i."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (grid.M,) or v.shape != (grid.M,):
        raise ShapeError(f"discrete_inner needs two length-{grid.M} vectors")
    return float(np.sum(grid.kappa * u * v))
