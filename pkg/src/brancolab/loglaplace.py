"""Deterministic log-Laplace solver for the super random walk.

The Laplace functional of the measure-valued branching walk satisfies

    E^phi[ exp(-<Y_t, psi>) ] = exp(-<phi, u_t>),

where u_t solves the semilinear system u' = Q u + beta u - gamma u^2 with
u_0 = psi and Q the generator of the walk's single-particle motion.  Note
the orientation: the measure Y drifts by the adjoint of Q, so a motion
kernel handed over in its measure-drift form is applied here through its
generator (row) form.

Integration is classic fixed-step Runge-Kutta 4; the systems are small and
smooth, and a step-halving order check stands in for adaptive error control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .branco import RateParams
from .lattice import Lattice

__all__ = [
    "SuperRWParams",
    "LogLaplaceError",
    "loglaplace_solve",
    "super_laplace_functional",
    "subduality_rhs",
    "logistic_closed_form",
]

DT_FLOOR = 1e-6
_NEG_FUZZ = -1e-13


class LogLaplaceError(RuntimeError):
    """Raised when the solver cannot keep the solution nonnegative."""


@dataclass(frozen=True)
class SuperRWParams:
    """Growth parameter beta (any sign), activity gamma_act >= 0, motion kernel.

    ``motion`` is the walk kernel of the superprocess in its measure-drift
    orientation; the solver applies its generator to u.
    """

    beta: float
    gamma_act: float
    motion: Lattice

    def __post_init__(self):
        if self.gamma_act < 0:
            raise ValueError("activity gamma_act must be >= 0")


def _rhs_factory(params: SuperRWParams):
    gen = params.motion.generator_matrix()
    beta = params.beta
    gamma = params.gamma_act

    def rhs(u: np.ndarray) -> np.ndarray:
        return gen @ u + beta * u - gamma * u * u

    return rhs


def _rk4_path(psi: np.ndarray, params: SuperRWParams, t_grid: np.ndarray, dt: float) -> np.ndarray:
    rhs = _rhs_factory(params)
    u = psi.astype(float).copy()
    out = np.empty((t_grid.size, psi.size))
    t = 0.0
    for g, tg in enumerate(t_grid):
        span = tg - t
        while span > 1e-12:
            step = min(dt, span)
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * step * k1)
            k3 = rhs(u + 0.5 * step * k2)
            k4 = rhs(u + step * k3)
            u = u + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            low = u.min() if u.size else 0.0
            if low < _NEG_FUZZ:
                raise _NegativeStep(low)
            np.clip(u, 0.0, None, out=u)
            span -= step
        t = tg
        out[g] = u
    return out


class _NegativeStep(Exception):
    def __init__(self, low: float):
        self.low = low


def loglaplace_solve(psi, params: SuperRWParams, t_grid, dt: float = 1e-3) -> np.ndarray:
    """Solve u' = Q u + beta u - gamma u^2 from u_0 = psi on the grid times.

    Nonnegativity is asserted after every step; on violation the step size
    is halved and the solve restarted, down to a floor of 1e-6.
    """
    psi = np.asarray(psi, dtype=float)
    if (psi < 0).any():
        raise ValueError("psi must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or (np.diff(grid) < 0).any():
        raise ValueError("t_grid must be nondecreasing and start at >= 0")
    if psi.shape != (params.motion.n_sites,):
        raise ValueError("psi length must match the motion lattice")
    step = dt
    while True:
        try:
            return _rk4_path(psi, params, grid, step)
        except _NegativeStep as exc:
            step /= 2.0
            if step < DT_FLOOR:
                raise LogLaplaceError(
                    f"solution stayed negative ({exc.low:.3e}) down to dt = {step * 2:.2e}"
                ) from None


def super_laplace_functional(phi, psi, params: SuperRWParams, t: float, dt: float = 1e-3) -> float:
    """exp(-<phi, u_t>) with u_t the log-Laplace solution from psi."""
    phi = np.asarray(phi, dtype=float)
    if (phi < 0).any():
        raise ValueError("phi must be >= 0")
    u_t = loglaplace_solve(psi, params, [t], dt)[0]
    return float(math.exp(-float(phi @ u_t)))


def subduality_rhs(x, phi, params: RateParams, lat: Lattice, t: float, dt: float = 1e-3) -> float:
    """Lower bound for E^x[exp(-<phi, X_t>)] via the dominating branching walk.

    The comparison superprocess has motion kernel q-transpose, growth
    2a + b - d + c, and activity 2a + c; the bound is
    exp(-<phi, U_t x>) with x fed in as a real-valued vector.
    """
    sp = SuperRWParams(
        beta=2 * params.a + params.b - params.d + params.c,
        gamma_act=2 * params.a + params.c,
        motion=lat.transpose(),
    )
    return super_laplace_functional(phi, np.asarray(x, dtype=float), sp, t, dt)


def logistic_closed_form(u0: float, beta: float, gamma: float, t: float) -> float:
    """Solution of u' = beta u - gamma u^2 (single site, no motion)."""
    if beta == 0.0:
        return u0 / (1.0 + gamma * u0 * t)
    e = math.exp(beta * t)
    return beta * u0 * e / (beta + gamma * u0 * (e - 1.0))
