"""Interacting Wright-Fisher diffusions, single-site tools, and the moment dual.

The frequency system evolves per site i in [0, 1]:

    dX(i) = sum_j q(j, i) (X(j) - X(i)) dt + s X(i)(1 - X(i)) dt - m X(i) dt
            + sqrt(2 r X(i)(1 - X(i))) dB(i)

Two step schemes are provided:

* ``euler``  -- explicit Euler-Maruyama with projection onto [0, 1].  Simple,
  but the projection mis-samples the square-root boundary layers: its weak
  error on boundary-sensitive functionals decays far slower than O(h).
* ``hybrid`` (default) -- Euler in the interior; inside a boundary layer of
  width ~50 r h the transition is replaced by the exact law of the
  linear-drift branching diffusion dZ = (kappa + a Z) dt + sqrt(2 g Z) dB
  that matches the local drift and noise.  That law is compound
  Poisson-Gamma, N ~ Pois(x a e^{ah} / (g (e^{ah}-1))), Z = Gamma(N, g
  (e^{ah}-1)/a), so paths carry genuine atoms at the boundary and absorption
  happens at the exact rate.  Immigration within a step enters through its
  mean.

Batches draw all randomness from one generator per call; callers assign one
stream per fixed-size replicate block, which keeps ensembles reproducible
for any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice, uniformized_expm

__all__ = [
    "ResemParams",
    "ExtinctionEstimate",
    "simulate_resem",
    "frequency_paths",
    "extinction_probability",
    "extinction_batch",
    "wf_pair_simulate",
    "wf_pair_batch",
    "wf_terminal_batch",
    "moment_dual_expectation",
]

_LAYER_RATE_MULTIPLE = 50.0  # boundary-layer width in units of r * h
_LAYER_MAX = 0.25
_SLOPE_EPS = 1e-12


@dataclass(frozen=True)
class ResemParams:
    """Resampling rate r, selection rate s, mutation rate m (all >= 0)."""

    r: float
    s: float
    m: float

    def __post_init__(self):
        for name in ("r", "s", "m"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name} must be >= 0")


def _check_phi(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if ((phi < 0) | (phi > 1)).any():
        raise ValueError("frequency components must lie in [0, 1]")
    return phi


def _step_plan(t_grid, h: float) -> tuple[list[float], list[int]]:
    """Euler steps of size <= h that hit every grid time exactly.

    Returns (step sizes, index of the step after which each grid time is
    reached; -1 marks grid times at 0).
    """
    if h <= 0:
        raise ValueError("step size h must be > 0")
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("t_grid must be a nonempty 1-d sequence")
    if grid[0] < 0 or (np.diff(grid) < 0).any():
        raise ValueError("t_grid must be nondecreasing and start at >= 0")
    steps: list[float] = []
    record_after: list[int] = []
    t = 0.0
    for tg in grid:
        span = tg - t
        if span > 1e-12:
            n_full = int(span / h)
            steps.extend([h] * n_full)
            rem = span - n_full * h
            if rem > 1e-12:
                steps.append(rem)
            t = tg
        record_after.append(len(steps) - 1)
    return steps, record_after


def _csbp_step(x, kappa, slope, gamma_eff, dt, gen: np.random.Generator) -> np.ndarray:
    """Exact-in-law step of dZ = (kappa + slope Z) dt + sqrt(2 gamma_eff Z) dB.

    The branching part is sampled exactly (compound Poisson-Gamma, with an
    atom at zero); the immigration part enters through its deterministic
    mean kappa (e^{slope dt} - 1) / slope.  Entries with x = 0 have a
    deterministic branching part and consume no randomness.
    """
    eah = np.exp(slope * dt)
    small = np.abs(slope) < _SLOPE_EPS
    ramp = np.where(small, dt * np.ones_like(eah), (eah - 1.0) / np.where(small, 1.0, slope))
    core = np.zeros_like(x)
    pos = x > 0.0
    if pos.any():
        scale = gamma_eff[pos] * ramp[pos]
        nu = x[pos] * eah[pos] / scale
        n_jumps = gen.poisson(nu)
        core[pos] = gen.gamma(n_jumps.astype(float), scale)
    return core + kappa * ramp


def _hybrid_step(
    phi: np.ndarray,
    drift: np.ndarray,
    drift_at0: np.ndarray,
    drift_at1: np.ndarray,
    r: float,
    dt: float,
    gen: np.random.Generator,
) -> np.ndarray:
    """One step of the boundary-exact hybrid scheme on a flat batch."""
    noise = gen.standard_normal(phi.shape)
    if r == 0.0:
        return np.clip(phi + drift * dt, 0.0, 1.0)
    layer = min(_LAYER_RATE_MULTIPLE * r * dt, _LAYER_MAX)
    low = phi < layer
    up = (1.0 - phi) < layer
    mid = ~(low | up)
    out = np.empty_like(phi)

    x = phi[mid]
    out[mid] = np.clip(
        x + drift[mid] * dt + np.sqrt(2.0 * r * x * (1.0 - x) * dt) * noise[mid], 0.0, 1.0
    )

    if low.any():
        x = phi[low]
        kappa = np.maximum(drift_at0[low], 0.0)
        slope = np.where(x > 1e-12, (drift[low] - kappa) / np.maximum(x, 1e-12), 0.0)
        slope = np.clip(slope, -1e4, 1e4)
        g_eff = r * (1.0 - x)
        out[low] = np.clip(_csbp_step(x, kappa, slope, g_eff, dt, gen), 0.0, 1.0)

    if up.any():
        y = 1.0 - phi[up]
        kappa = np.maximum(-drift_at1[up], 0.0)
        slope = np.where(y > 1e-12, (-drift[up] - kappa) / np.maximum(y, 1e-12), 0.0)
        slope = np.clip(slope, -1e4, 1e4)
        g_eff = r * (1.0 - y)
        out[up] = np.clip(1.0 - _csbp_step(y, kappa, slope, g_eff, dt, gen), 0.0, 1.0)
    return out


class _ResemStepper:
    """Per-lattice stepping context for the frequency system."""

    def __init__(self, params: ResemParams, lat: Lattice, scheme: str):
        if scheme not in ("hybrid", "euler"):
            raise ValueError("scheme must be 'hybrid' or 'euler'")
        self.p = params
        self.q = lat.rates
        self.out_rates = lat.exit_rates
        self.scheme = scheme

    def drift(self, phi: np.ndarray) -> np.ndarray:
        # migration inflow uses q(j, i): row-vector product with the kernel
        p = self.p
        return phi @ self.q - phi * self.out_rates + p.s * phi * (1.0 - phi) - p.m * phi

    def step(self, phi: np.ndarray, dt: float, gen: np.random.Generator) -> np.ndarray:
        p = self.p
        mu = self.drift(phi)
        if self.scheme == "euler":
            noise = gen.standard_normal(phi.shape)
            nxt = phi + mu * dt + np.sqrt(2.0 * p.r * np.clip(phi - phi * phi, 0.0, None) * dt) * noise
            return np.clip(nxt, 0.0, 1.0)
        inflow = phi @ self.q
        at1 = inflow - self.out_rates - p.m  # drift evaluated at phi(i) = 1
        return _hybrid_step(phi, mu, inflow, np.broadcast_to(at1, phi.shape), p.r, dt, gen)


def frequency_paths(
    phi0,
    params: ResemParams,
    lat: Lattice,
    h: float,
    t_grid,
    gen: np.random.Generator,
    n_rep: int,
    scheme: str = "hybrid",
) -> np.ndarray:
    """Batch of frequency-system paths; shape (n_rep, len(t_grid), sites).

    ``phi0`` is one vector shared by the batch or a (n_rep, sites) array.
    All randomness comes from ``gen``.
    """
    phi0 = _check_phi(phi0)
    n = lat.n_sites
    phi = np.broadcast_to(phi0, (n_rep, n)).astype(float).copy()
    stepper = _ResemStepper(params, lat, scheme)
    steps, record_after = _step_plan(t_grid, h)
    out = np.empty((n_rep, len(record_after), n))
    marks: dict[int, list[int]] = {}
    for g, idx in enumerate(record_after):
        marks.setdefault(idx, []).append(g)
    for g in marks.get(-1, []):
        out[:, g, :] = phi
    for k, dt in enumerate(steps):
        phi = stepper.step(phi, dt, gen)
        for g in marks.get(k, []):
            out[:, g, :] = phi
    return out


def simulate_resem(
    phi0,
    params: ResemParams,
    lat: Lattice,
    h: float,
    t_grid,
    rng: np.random.Generator,
    scheme: str = "hybrid",
) -> np.ndarray:
    """One path of the frequency system, sampled at the grid times."""
    return frequency_paths(phi0, params, lat, h, t_grid, rng, 1, scheme)[0]


@dataclass(frozen=True)
class ExtinctionEstimate:
    """Monte Carlo estimate of the probability of hitting the all-zero state."""

    estimate: float
    se: float
    alive_fraction: float
    replicates: int
    late_arrivals: float  # fraction absorbed in (t_max/2, t_max]; stabilization diagnostic


def extinction_batch(
    phi0,
    params: ResemParams,
    lat: Lattice,
    t_max: float,
    h: float,
    gen: np.random.Generator,
    n_rep: int,
    scheme: str = "hybrid",
) -> tuple[np.ndarray, np.ndarray]:
    """Absorption times (nan if alive at t_max) and final total mass per replicate."""
    phi0 = _check_phi(phi0)
    n = lat.n_sites
    phi = np.broadcast_to(phi0, (n_rep, n)).astype(float).copy()
    stepper = _ResemStepper(params, lat, scheme)
    steps, _ = _step_plan([t_max], h)
    absorbed_at = np.full(n_rep, np.nan)
    final_mass = np.zeros(n_rep)
    active_idx = np.arange(n_rep)
    dead0 = (phi == 0.0).all(axis=1)
    absorbed_at[dead0] = 0.0
    active_idx = active_idx[~dead0]
    phi = phi[~dead0]
    t = 0.0
    for dt in steps:
        if active_idx.size == 0:
            break
        t += dt
        phi = stepper.step(phi, dt, gen)
        newly = (phi == 0.0).all(axis=1)
        if newly.any():
            # the all-zero state is a trap: drop absorbed paths from the batch
            absorbed_at[active_idx[newly]] = t
            keep = ~newly
            active_idx = active_idx[keep]
            phi = phi[keep]
    final_mass[active_idx] = phi.sum(axis=1)
    return absorbed_at, final_mass


def extinction_probability(
    phi0,
    params: ResemParams,
    lat: Lattice,
    t_max: float,
    h: float,
    gen: np.random.Generator,
    n_rep: int,
    scheme: str = "hybrid",
) -> ExtinctionEstimate:
    """Fraction of replicates whose frequency field hits exactly zero by t_max.

    Reports the fraction still alive at t_max (censoring diagnostic) and the
    fraction absorbed in the second half of the horizon: if absorption inflow
    has not stalled by t_max, the horizon is too short for a verdict.
    """
    absorbed_at, _ = extinction_batch(phi0, params, lat, t_max, h, gen, n_rep, scheme)
    extinct = ~np.isnan(absorbed_at)
    p_hat = float(extinct.mean())
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n_rep)
    late = float((extinct & (absorbed_at > t_max / 2.0)).mean())
    return ExtinctionEstimate(
        estimate=p_hat,
        se=se,
        alive_fraction=1.0 - p_hat,
        replicates=n_rep,
        late_arrivals=late,
    )


def wf_pair_simulate(
    z: float,
    a: float,
    b: float,
    c: float,
    r: float,
    h: float,
    t_grid,
    rng: np.random.Generator,
) -> np.ndarray:
    """Coupled pair of single-site Wright-Fisher diffusions, shared noise.

    dX = a(1-X) dt - bX dt + sqrt(2rX(1-X)) dB
    dY = -cY dt + sqrt(2rY(1-Y)) dB        (the same B)

    Both start at z; returns shape (len(t_grid), 2) with columns (X, Y).
    The shared Gaussian increment is the point of this routine, so it uses
    the plain projected-Euler scheme on both coordinates.
    """
    return wf_pair_batch(z, a, b, c, r, h, t_grid, rng, 1)[0]


def wf_pair_batch(
    z: float,
    a: float,
    b: float,
    c: float,
    r: float,
    h: float,
    t_grid,
    gen: np.random.Generator,
    n_rep: int,
) -> np.ndarray:
    """Batch version of :func:`wf_pair_simulate`; shape (n_rep, grid, 2)."""
    if not 0.0 <= z <= 1.0:
        raise ValueError("start value must lie in [0, 1]")
    for name, val in (("a", a), ("b", b), ("c", c), ("r", r)):
        if val < 0:
            raise ValueError(f"parameter {name} must be >= 0")
    x = np.full(n_rep, float(z))
    y = np.full(n_rep, float(z))
    steps, record_after = _step_plan(t_grid, h)
    out = np.empty((n_rep, len(record_after), 2))
    marks: dict[int, list[int]] = {}
    for g, idx in enumerate(record_after):
        marks.setdefault(idx, []).append(g)
    for g in marks.get(-1, []):
        out[:, g, 0] = x
        out[:, g, 1] = y
    for k, dt in enumerate(steps):
        shared = gen.standard_normal(n_rep) * math.sqrt(dt)
        x_new = x + (a * (1.0 - x) - b * x) * dt + np.sqrt(2.0 * r * np.clip(x - x * x, 0.0, None)) * shared
        y_new = y + (-c * y) * dt + np.sqrt(2.0 * r * np.clip(y - y * y, 0.0, None)) * shared
        x = np.clip(x_new, 0.0, 1.0)
        y = np.clip(y_new, 0.0, 1.0)
        for g in marks.get(k, []):
            out[:, g, 0] = x
            out[:, g, 1] = y
    return out


def wf_terminal_batch(
    x0: float,
    a: float,
    b: float,
    r: float,
    h: float,
    t: float,
    gen: np.random.Generator,
    n_rep: int,
    scheme: str = "hybrid",
) -> np.ndarray:
    """Terminal values of the single Wright-Fisher diffusion dX = a(1-X)dt - bXdt + ...."""
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0, 1]")
    x = np.full(n_rep, float(x0))
    steps, _ = _step_plan([t], h)
    for dt in steps:
        mu = a * (1.0 - x) - b * x
        if scheme == "euler":
            noise = gen.standard_normal(n_rep)
            x = np.clip(x + mu * dt + np.sqrt(2.0 * r * np.clip(x - x * x, 0.0, None) * dt) * noise, 0.0, 1.0)
        else:
            at0 = np.full(n_rep, a)
            at1 = np.full(n_rep, -b)
            x = _hybrid_step(x, mu, at0, at1, r, dt, gen)
    return x


def moment_dual_expectation(x: float, k: int, a: float, b: float, r: float, t: float) -> float:
    """E[X_t^k] for the single-site Wright-Fisher diffusion, via its moment dual.

    The dual is a chain on {0, ..., k, infinity} jumping j -> j-1 at rate
    a j + r j (j - 1) and j -> infinity at rate b j, with 0 and infinity as
    traps; the expectation equals E[x^(K_t)] with x^0 = 1 and x^inf = 0.
    Solved by uniformization to tail 1e-12.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    n_states = k + 2  # 0..k plus the trap at index k+1
    gen = np.zeros((n_states, n_states))
    for j in range(1, k + 1):
        down = a * j + r * j * (j - 1)
        up = b * j
        gen[j, j - 1] = down
        gen[j, k + 1] = up
        gen[j, j] = -(down + up)
    dist = uniformized_expm(gen, t)[k]
    values = np.array([x**j for j in range(k + 1)] + [0.0])
    return float(dist @ values)
