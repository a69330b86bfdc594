"""Duality function, parameter dictionaries, and thinning/Poisson samplers.

The two model worlds are linked through alpha = a / (a + c) and the duality
function

    Psi(x, phi) = prod_i (1 - (1 + alpha) * phi(i)) ** x(i),    0**0 := 1.

``generator_identity_check`` evaluates, in closed form, the particle-system
generator acting on Psi in x against the diffusion generator (with the
transposed kernel and mapped parameters) acting on Psi in phi; the two agree
to machine precision, which is the exact computation behind the duality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .branco import RateParams
from .lattice import Lattice
from .resem import ResemParams

__all__ = [
    "DualityParams",
    "ParamBridge",
    "branco_to_resem",
    "resem_to_branco",
    "duality_functional",
    "generator_identity_check",
    "thin_sample",
    "pois_sample",
]

ROUNDTRIP_TOL = 1e-12


@dataclass(frozen=True)
class DualityParams:
    """The thinning exponent alpha in [0, 1]."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class ParamBridge:
    """A matched (particle rates, diffusion rates, alpha) triple."""

    branco: RateParams
    resem: ResemParams
    alpha: DualityParams


def branco_to_resem(params: RateParams) -> ParamBridge:
    """Map (a, b, c, d) to (alpha; r, s, m).

    alpha = a/(a+c), r = a + c, s = (1 + alpha) b, m = alpha b + d.
    Requires a + c > 0.
    """
    if params.pair_removal <= 0:
        raise ValueError("parameter map needs a + c > 0")
    alpha = params.a / (params.a + params.c)
    resem = ResemParams(
        r=params.a + params.c,
        s=(1.0 + alpha) * params.b,
        m=alpha * params.b + params.d,
    )
    return ParamBridge(branco=params, resem=resem, alpha=DualityParams(alpha))


def resem_to_branco(alpha: float, resem: ResemParams) -> RateParams:
    """Inverse map: a = alpha r, b = s/(1+alpha), c = (1-alpha) r, d = m - alpha s/(1+alpha)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    d = resem.m - alpha * resem.s / (1.0 + alpha)
    if d < -ROUNDTRIP_TOL:
        raise ValueError(f"m - alpha*s/(1+alpha) = {d} < 0: no particle system matches")
    return RateParams(
        a=alpha * resem.r,
        b=resem.s / (1.0 + alpha),
        c=(1.0 - alpha) * resem.r,
        d=max(d, 0.0),
    )


def duality_functional(x, phi, alpha: float) -> float:
    """Psi(x, phi) = prod_i (1 - (1+alpha) phi(i)) ** x(i) with 0**0 = 1."""
    x = np.asarray(x, dtype=np.int64)
    base = 1.0 - (1.0 + alpha) * np.asarray(phi, dtype=float)
    return float(np.prod(base**x))


def _power_with_drop(base: np.ndarray, x: np.ndarray, i: int, drop: int) -> float:
    """prod_j base_j ** x_j with the exponent at site i reduced by ``drop``.

    Only called when x[i] >= drop, so the exponent never goes negative and
    zero factors are handled without division.
    """
    out = 1.0
    for j in range(base.size):
        e = x[j] - drop if j == i else x[j]
        if e:
            out *= base[j] ** e
    return out


def generator_identity_check(x, phi, params: RateParams, lat: Lattice) -> float:
    """|G Psi(., phi)(x) - G' Psi(x, .)(phi)|, both sides in closed form.

    The left side sums the five particle channels applied to Psi; the right
    side applies the diffusion generator with the transposed kernel and the
    mapped parameters (r, s, m), using the exact partial derivatives of Psi.
    Requires a + c > 0.
    """
    bridge = branco_to_resem(params)
    alpha = bridge.alpha.alpha
    r, s, m = bridge.resem.r, bridge.resem.s, bridge.resem.m
    x = np.asarray(x, dtype=np.int64)
    phi = np.asarray(phi, dtype=float)
    base = 1.0 - (1.0 + alpha) * phi
    n = lat.n_sites
    q = lat.rates

    lhs = 0.0
    rhs = 0.0
    for i in range(n):
        xi = int(x[i])
        if xi >= 1:
            p1 = _power_with_drop(base, x, i, 1)  # exponent x - delta_i
            # jump: particle at i moves to j, factor base_j replaces base_i
            for j in range(n):
                if q[i, j] > 0.0:
                    lhs += q[i, j] * xi * p1 * (base[j] - base[i])
            lhs += params.b * xi * p1 * (base[i] ** 2 - base[i])
            lhs += params.d * xi * p1 * (1.0 - base[i])
        if xi >= 2:
            p2 = _power_with_drop(base, x, i, 2)  # exponent x - 2 delta_i
            pair = xi * (xi - 1)
            lhs += params.a * pair * p2 * (1.0 - base[i] ** 2)
            lhs += params.c * pair * p2 * (base[i] - base[i] ** 2)

        # diffusion side: d/dphi_i Psi and d^2/dphi_i^2 Psi in closed form
        if xi >= 1:
            d1 = -(1.0 + alpha) * xi * _power_with_drop(base, x, i, 1)
            drift = s * phi[i] * (1.0 - phi[i]) - m * phi[i]
            for j in range(n):
                # transposed kernel: rate of the dual walk from j to i is q(i, j)
                if q[i, j] > 0.0:
                    drift += q[i, j] * (phi[j] - phi[i])
            rhs += drift * d1
        if xi >= 2:
            d2 = (1.0 + alpha) ** 2 * xi * (xi - 1) * _power_with_drop(base, x, i, 2)
            rhs += r * phi[i] * (1.0 - phi[i]) * d2
    return abs(lhs - rhs)


def thin_sample(x, phi, rng: np.random.Generator) -> np.ndarray:
    """Keep each particle at site i independently with probability phi(i)."""
    x = np.asarray(x, dtype=np.int64)
    phi = np.asarray(phi, dtype=float)
    if ((phi < 0) | (phi > 1)).any():
        raise ValueError("thinning probabilities must lie in [0, 1]")
    phi = np.broadcast_to(phi, x.shape)
    return rng.binomial(x, phi).astype(np.int64)


def pois_sample(intensity, rng: np.random.Generator) -> np.ndarray:
    """Independent Poisson counts per site with the given intensity vector."""
    lam = np.asarray(intensity, dtype=float)
    if (lam < 0).any():
        raise ValueError("Poisson intensity must be >= 0")
    return rng.poisson(lam).astype(np.int64)
