"""Ground-truth discrete systems for the four benchmarks.

Each system is a composition  A u_t = S dH + R-dissipation + force  realized
with explicit stencils and hand-derived gradients of the discrete integrals,
so this module is independent of the autodiff core and can serve as its
oracle.  Gradients of the integrals divided by the grid spacing play the role
of discrete variational derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ShapeError
from .spatial import (
    CirculantSolver,
    ConvKernel,
    KernelConstraint,
    PeriodicGrid,
    central_difference_kernel,
    identity_kernel,
    make_grid,
    second_difference_kernel,
    stencil_apply,
    zero_kernel,
)

SYSTEM_NAMES = ("kdvburgers", "bbm", "peronamalik", "cahnhilliard")

DEFAULT_M = 100
DEFAULT_PERIODS = {"kdvburgers": 20.0, "bbm": 50.0, "peronamalik": 6.0, "cahnhilliard": 1.0}


@dataclass
class ForceFlags:
    on_u: bool = False
    on_x: bool = False
    on_t: bool = False


@dataclass
class SystemSpec:
    """A benchmark PDE reduced to its discrete building blocks."""

    name: str
    grid: PeriodicGrid
    params: dict
    A_kernel: ConvKernel
    S_kernel: ConvKernel
    R_kernel: ConvKernel
    force_flags: ForceFlags
    force_enabled: bool = True
    _A_solver: Optional[CirculantSolver] = field(default=None, repr=False)

    def __post_init__(self):
        if self.S_kernel.constraint not in (KernelConstraint.SKEW, KernelConstraint.ZERO):
            raise ConfigError("S kernel must be skew or zero")
        if self.A_kernel.constraint == KernelConstraint.SKEW:
            raise ConfigError("A kernel must be symmetric-like")
        if self.A_kernel.constraint != KernelConstraint.IDENTITY:
            self._A_solver = CirculantSolver(self.A_kernel, self.grid.M)

    # -- discrete integrals ------------------------------------------------

    def hamiltonian(self, u: np.ndarray) -> float:
        u = self._check(u)
        h = self.grid.h
        p = self.params
        if self.name == "kdvburgers":
            df = _forward_diff(u, h)
            return float(-h * np.sum(p["eta"] / 6.0 * u**3 + p["gamma"] ** 2 / 2.0 * df**2))
        if self.name == "bbm":
            return float(h / 2.0 * np.sum(u**2 + u**3 / 3.0))
        return 0.0

    def lyapunov(self, u: np.ndarray) -> float:
        u = self._check(u)
        h = self.grid.h
        p = self.params
        if self.name == "kdvburgers":
            df = _forward_diff(u, h)
            return float(p["nu"] / 2.0 * h * np.sum(df**2))
        if self.name == "peronamalik":
            df = _forward_diff(u, h)
            return float(h / 2.0 * np.sum(np.log1p(df**2)))
        if self.name == "cahnhilliard":
            df = _forward_diff(u, h)
            return float(
                h / 2.0 * np.sum(p["nu"] * u**2 + p["alpha"] / 2.0 * u**4 - p["mu"] * df**2)
            )
        return 0.0

    # -- analytic gradients of the integrals --------------------------------

    def grad_hamiltonian(self, u: np.ndarray) -> np.ndarray:
        h = self.grid.h
        p = self.params
        if self.name == "kdvburgers":
            return -h * (p["eta"] / 2.0 * u**2 - p["gamma"] ** 2 * _second_diff(u, h))
        if self.name == "bbm":
            return h * (u + u**2 / 2.0)
        return np.zeros_like(u)

    def grad_lyapunov(self, u: np.ndarray) -> np.ndarray:
        h = self.grid.h
        p = self.params
        if self.name == "kdvburgers":
            return -h * p["nu"] * _second_diff(u, h)
        if self.name == "peronamalik":
            df = _forward_diff(u, h)
            flux = df / (1.0 + df**2)
            return np.roll(flux, 1, axis=-1) - flux
        if self.name == "cahnhilliard":
            return h * (p["nu"] * u + p["alpha"] * u**3 + p["mu"] * _second_diff(u, h))
        return np.zeros_like(u)

    # -- force and right-hand side ------------------------------------------

    def force(self, u: np.ndarray, t) -> np.ndarray:
        if not self.force_enabled:
            return np.zeros_like(u)
        x = self.grid.nodes
        P = self.grid.P
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim:
            t_arr = t_arr[..., None]
        if self.name == "kdvburgers":
            vals = 0.6 * np.sin(4.0 * np.pi * x / P - t_arr)
            return np.broadcast_to(vals, u.shape).copy()
        if self.name == "bbm":
            return 0.1 * np.sin(t_arr) * u
        if self.name == "peronamalik":
            vals = 10.0 * np.sin(4.0 * np.pi * x / P)
            return np.broadcast_to(vals, u.shape).copy()
        if self.name == "cahnhilliard":
            window = (x > 0.3) & (x < 0.7)
            return 30.0 * u * window
        raise ConfigError(f"unknown system '{self.name}'")

    def rhs(self, u: np.ndarray, t) -> np.ndarray:
        """Instantaneous time derivative of the discrete state."""
        u = self._check(u)
        h = self.grid.h
        acc = np.zeros_like(u)
        if self.S_kernel.constraint != KernelConstraint.ZERO:
            acc = acc + stencil_apply(self.S_kernel, self.grad_hamiltonian(u) / h)
        if self.R_kernel.constraint != KernelConstraint.ZERO:
            acc = acc - stencil_apply(self.R_kernel, self.grad_lyapunov(u) / h)
        if self.force_enabled:
            acc = acc + self.force(u, t)
        if self._A_solver is not None:
            acc = self._A_solver.solve(acc)
        return acc

    def with_overrides(self, **overrides) -> "SystemSpec":
        params = dict(self.params)
        force_enabled = overrides.pop("force_enabled", self.force_enabled)
        for key, val in overrides.items():
            if key not in params:
                raise ConfigError(f"system '{self.name}' has no parameter '{key}'")
            params[key] = float(val)
        return _build(self.name, self.grid, params, force_enabled)

    def _check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.grid.M:
            raise ShapeError(f"state length {u.shape[-1]} != grid M={self.grid.M}")
        return u


def _forward_diff(u: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(u, -1, axis=-1) - u) / h


def _second_diff(u: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(u, -1, axis=-1) - 2.0 * u + np.roll(u, 1, axis=-1)) / (h * h)


_DEFAULT_PARAMS = {
    "kdvburgers": {"eta": 6.0, "nu": 0.3, "gamma": 1.0},
    "bbm": {},
    "peronamalik": {},
    "cahnhilliard": {"nu": -1.0, "alpha": 1.0, "mu": -1.0e-3},
}

_FORCE_FLAGS = {
    "kdvburgers": ForceFlags(on_x=True, on_t=True),
    "bbm": ForceFlags(on_u=True, on_t=True),
    "peronamalik": ForceFlags(on_x=True),
    "cahnhilliard": ForceFlags(on_u=True, on_x=True),
}


def _build(name: str, grid: PeriodicGrid, params: dict, force_enabled: bool) -> SystemSpec:
    h = grid.h
    if name == "kdvburgers":
        A, S, R = identity_kernel(), central_difference_kernel(h), identity_kernel()
    elif name == "bbm":
        w = np.array([-1.0, 2.0, -1.0]) / (h * h)
        w[1] += 1.0
        A = ConvKernel(1, w, KernelConstraint.SYMMETRIC, "one_minus_delta_c2")
        S, R = central_difference_kernel(h), zero_kernel()
    elif name == "peronamalik":
        A, S, R = identity_kernel(), zero_kernel(), identity_kernel()
    elif name == "cahnhilliard":
        A, S = identity_kernel(), zero_kernel()
        neg2 = second_difference_kernel(h)
        R = ConvKernel(1, -neg2.weights, KernelConstraint.SYMMETRIC, "neg_delta_c2")
    else:
        raise ConfigError(f"unknown system '{name}'")
    return SystemSpec(
        name=name,
        grid=grid,
        params=params,
        A_kernel=A,
        S_kernel=S,
        R_kernel=R,
        force_flags=_FORCE_FLAGS[name],
        force_enabled=force_enabled,
    )


def system_spec(name: str, grid: Optional[PeriodicGrid] = None, **overrides) -> SystemSpec:
    """Fully populated benchmark system with its default parameters."""
    if name not in SYSTEM_NAMES:
        raise ConfigError(f"unknown system '{name}'; expected one of {SYSTEM_NAMES}")
    if grid is None:
        grid = make_grid(DEFAULT_M, DEFAULT_PERIODS[name])
    params = dict(_DEFAULT_PARAMS[name])
    force_enabled = overrides.pop("force_enabled", True)
    for key, val in overrides.items():
        if key not in params:
            raise ConfigError(f"system '{name}' has no parameter '{key}'")
        params[key] = float(val)
    return _build(name, grid, params, force_enabled)


# Module-level ops mirroring the SystemSpec methods.

def discrete_hamiltonian(spec: SystemSpec, u: np.ndarray) -> float:
    return spec.hamiltonian(u)


def discrete_lyapunov(spec: SystemSpec, u: np.ndarray) -> float:
    return spec.lyapunov(u)


def ground_truth_rhs(spec: SystemSpec, u: np.ndarray, t=0.0) -> np.ndarray:
    return spec.rhs(u, t)


def external_force(spec: SystemSpec, u: np.ndarray, x: np.ndarray, t) -> np.ndarray:
    if not np.array_equal(x, spec.grid.nodes):
        raise ShapeError("force evaluation expects the spec's own grid nodes")
    return spec.force(np.asarray(u, dtype=float), t)


def integrals_derivative_free(spec: SystemSpec) -> bool:
    """True when H and V contain no spatial-derivative terms (regriddable)."""
    p = spec.params
    if spec.name == "kdvburgers":
        return p["gamma"] == 0.0 and p["nu"] == 0.0
    if spec.name == "bbm":
        return True
    if spec.name == "cahnhilliard":
        return p["mu"] == 0.0
    return False


# -- initial conditions ----------------------------------------------------

def sample_initial_profile(spec: SystemSpec, rng: np.random.Generator) -> Callable:
    """Draw IC parameters and return the closed-form profile x -> u(x, 0).

    Parameters are drawn in a fixed order so results are reproducible for a
    given generator state.
    """
    P = spec.grid.P
    if spec.name == "kdvburgers":
        c = rng.uniform(0.5, 2.0, size=2)
        d = rng.uniform(0.0, 1.0, size=2)

        def profile(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for cl, dl in zip(c, d):
                arg = cl * (np.mod(x + P / 2.0 - dl * P, P) - P / 2.0)
                out += 2.0 * cl**2 / np.cosh(arg) ** 2
            return out

        return profile
    if spec.name == "bbm":
        c = rng.uniform(1.0, 4.0, size=2)
        d = rng.uniform(0.0, 1.0, size=2)

        def profile(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for cl, dl in zip(c, d):
                arg = 0.5 * np.sqrt(1.0 - 1.0 / cl) * (np.mod(x + P / 2.0 - dl * P, P) - P / 2.0)
                out += 3.0 * (cl - 1.0) / np.cosh(arg) ** 2
            return out

        return profile
    if spec.name == "peronamalik":
        a = rng.uniform(-5.0, 5.0)
        b = rng.uniform(20.0, 40.0)
        c = rng.uniform(0.05, 0.15)
        d = rng.uniform(0.3, 3.0, size=2)
        hgt = rng.uniform(0.5, 1.5, size=2)
        r = rng.uniform(0.5, 3.0)
        s = rng.uniform(10.0, 20.0)

        def profile(x):
            x = np.asarray(x, dtype=float)
            out = np.full_like(x, a)
            for dl, hl in zip(d, hgt):
                out -= hl * (np.tanh(b * (x - dl)) - np.tanh(b * (x - P + dl)))
            out += c * np.sin(r * np.pi * x) ** 2 * np.sin(s * np.pi * x)
            return out

        return profile
    if spec.name == "cahnhilliard":
        a = rng.uniform(0.0, 0.2, size=2)
        b = rng.uniform(0.0, 0.05, size=2)
        # integer frequencies keep the profile exactly P-periodic
        c = rng.integers(1, 7, size=2)
        d = rng.integers(1, 7, size=2)

        def profile(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for al, bl, cl, dl in zip(a, b, c, d):
                out += al * np.sin(cl * 2.0 * np.pi / P * x) + bl * np.cos(dl * 2.0 * np.pi / P * x)
            return out

        return profile
    raise ConfigError(f"unknown system '{spec.name}'")


def sample_initial_condition(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_initial_profile(spec, rng)(spec.grid.nodes)
