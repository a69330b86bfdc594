"""Exact event-driven simulation of branching-annihilating-coalescing walkers.

The state is a vector of particle counts per site.  Five channels act on it:

* jump         i -> j at rate q(i, j) * x(i)
* annihilation removes two particles at i, rate a * x(i) * (x(i) - 1)
* branching    adds one particle at i, rate b * x(i)
* coalescence  removes one particle at i, rate c * x(i) * (x(i) - 1)
* death        removes one particle at i, rate d * x(i)

Simulation is exact Gillespie: exponential waiting time at the grand total
rate, channel chosen proportionally, per-site rates updated incrementally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice

__all__ = [
    "RateParams",
    "EventTable",
    "SimulationError",
    "event_rates",
    "simulate",
    "simulate_from_infinity",
    "factorial_moment",
    "rising_factorial",
    "total_moment_bound",
    "started_at_infinity_mean_bound",
]

DEFAULT_COUNT_CAP = 10**9

# Grand-total rate is refreshed from scratch this often to stop float drift.
_RESYNC_EVERY = 4096


class SimulationError(RuntimeError):
    """Raised when a trajectory leaves the supported regime (count cap hit)."""


@dataclass(frozen=True)
class RateParams:
    """Channel rates: annihilation a, branching b, coalescence c, death d."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name} must be >= 0")

    @property
    def pair_removal(self) -> float:
        """Total pair-interaction removal weight a + c."""
        return self.a + self.c


@dataclass(frozen=True)
class EventTable:
    """Per-site channel rates, per-edge jump rates, and their grand total.

    ``site_channels`` columns: jump-out, annihilation, branching,
    coalescence, death.
    """

    site_channels: np.ndarray  # (n_sites, 5)
    edge_rates: dict  # (i, j) -> rate of the jump i -> j
    total: float


def event_rates(x: np.ndarray, params: RateParams, lat: Lattice) -> EventTable:
    """Instantaneous channel rates in state ``x``."""
    x = np.asarray(x, dtype=float)
    pair = x * (x - 1.0)
    table = np.column_stack(
        [
            lat.exit_rates * x,
            params.a * pair,
            params.b * x,
            params.c * pair,
            params.d * x,
        ]
    )
    edges = {}
    for i in range(lat.n_sites):
        if x[i] > 0:
            for j, q in lat.out_edges(i):
                edges[(i, j)] = q * x[i]
    return EventTable(site_channels=table, edge_rates=edges, total=float(table.sum()))


class _Uniforms:
    """Block-buffered uniform draws from one generator (order-stable)."""

    __slots__ = ("rng", "block", "buf", "pos")

    def __init__(self, rng: np.random.Generator, block: int = 1024):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= self.block:
            self.buf = self.rng.random(self.block)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


class _Engine:
    """Mutable Gillespie state with incremental per-site rate bookkeeping."""

    def __init__(self, x0, params: RateParams, lat: Lattice, cap: int):
        self.n = lat.n_sites
        self.x = [int(v) for v in x0]
        if any(v < 0 for v in self.x):
            raise ValueError("negative initial count")
        self.p = params
        self.cap = cap
        self.exit = [float(e) for e in lat.exit_rates]
        self.edges = [lat.out_edges(i) for i in range(self.n)]
        self.site_total = [self._site_rate(i) for i in range(self.n)]
        self.total = sum(self.site_total)
        self.events_since_resync = 0

    def _site_rate(self, i: int) -> float:
        xi = self.x[i]
        pair = xi * (xi - 1)
        p = self.p
        return xi * (self.exit[i] + p.b + p.d) + pair * (p.a + p.c)

    def _touch(self, i: int) -> None:
        if self.x[i] > self.cap:
            raise SimulationError(
                f"count {self.x[i]} at site {i} exceeds hard cap {self.cap}; "
                "non-explosion is expected, so this indicates a configuration "
                "or implementation problem"
            )
        new = self._site_rate(i)
        self.total += new - self.site_total[i]
        self.site_total[i] = new

    def resync(self) -> None:
        self.total = sum(self.site_total)
        self.events_since_resync = 0

    def step(self, v: float, pick: float) -> None:
        """Apply the event selected by v in [0, total); pick chooses a jump target.

        Scans only sites/channels with positive rate, so float drift in the
        cached total can never select an impossible event (an overshoot
        lands on the last active channel instead).
        """
        i = -1
        acc = 0.0
        for k in range(self.n):
            s = self.site_total[k]
            if s > 0.0:
                i = k
                acc += s
                if v < acc:
                    break
        if i < 0:  # total drifted positive with no active site
            self.resync()
            return
        xi = self.x[i]
        pair = xi * (xi - 1)
        p = self.p
        channels = (self.exit[i] * xi, p.a * pair, p.b * xi, p.c * pair, p.d * xi)
        r = v - (acc - self.site_total[i])
        idx = -1
        run = 0.0
        for k in range(5):
            rate = channels[k]
            if rate > 0.0:
                idx = k
                run += rate
                if r < run:
                    break
        if idx == 0:
            w = pick * self.exit[i]
            target = self.edges[i][-1][0]
            for j, q in self.edges[i]:
                w -= q
                if w < 0:
                    target = j
                    break
            self.x[i] -= 1
            self.x[target] += 1
            self._touch(i)
            self._touch(target)
        elif idx > 0:
            self.x[i] += (-2, 1, -1, -1)[idx - 1]
            self._touch(i)
        self.events_since_resync += 1
        if self.events_since_resync >= _RESYNC_EVERY:
            self.resync()


def _check_grid(t_grid) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("t_grid must be a nonempty 1-d sequence")
    if grid[0] < 0 or (np.diff(grid) < 0).any():
        raise ValueError("t_grid must be nondecreasing and start at >= 0")
    return grid


def simulate(
    x0,
    params: RateParams,
    lat: Lattice,
    t_grid,
    rng: np.random.Generator,
    count_cap: int = DEFAULT_COUNT_CAP,
) -> np.ndarray:
    """One exact trajectory, sampled at the grid times.

    Returns an int64 array of shape (len(t_grid), n_sites).  The same
    (seed, configuration) pair reproduces the trajectory bit for bit.
    """
    grid = _check_grid(t_grid)
    eng = _Engine(x0, params, lat, count_cap)
    draws = _Uniforms(rng)
    out = np.empty((grid.size, lat.n_sites), dtype=np.int64)
    t = 0.0
    g = 0
    while g < grid.size:
        if eng.total <= 0.0:
            while g < grid.size:
                out[g] = eng.x
                g += 1
            break
        u = draws.next()
        t_next = t - math.log(1.0 - u) / eng.total
        while g < grid.size and grid[g] < t_next:
            out[g] = eng.x
            g += 1
        if g >= grid.size:
            break
        t = t_next
        eng.step(draws.next() * eng.total, draws.next())
    return out


def simulate_from_infinity(
    n_cap: int,
    params: RateParams,
    lat: Lattice,
    t_grid,
    rng: np.random.Generator,
    count_cap: int = DEFAULT_COUNT_CAP,
) -> np.ndarray:
    """Trajectory started from n_cap particles on every site.

    Desk-scale stand-in for the process started at infinity; requires
    a + c > 0 so the explicit mean bound is meaningful.
    """
    if n_cap < 0:
        raise ValueError("n_cap must be >= 0")
    if params.pair_removal <= 0:
        raise ValueError("started-at-infinity runs need a + c > 0")
    x0 = np.full(lat.n_sites, n_cap, dtype=np.int64)
    return simulate(x0, params, lat, t_grid, rng, count_cap)


def rising_factorial(z: float, k: int) -> float:
    """z (z+1) ... (z+k-1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = 1.0
    for step in range(k):
        out *= z + step
    return out


def factorial_moment(x, k: int) -> float:
    """Rising factorial of the total particle count, |x| (|x|+1) ... (|x|+k-1)."""
    total = float(np.asarray(x).sum())
    return rising_factorial(total, k)


def total_moment_bound(x0, k: int, b: float, t: float) -> float:
    """Upper bound |x0|^(k, rising) * exp(k b t) for E[|X_t|^(k, rising)]."""
    return factorial_moment(x0, k) * math.exp(k * b * t)


def started_at_infinity_mean_bound(params: RateParams, t: float) -> float:
    """Explicit per-site mean bound for the process started at infinity.

    With r = a + b + c - d, the bound is r / ((2a + c)(1 - e^{-rt})) when
    r != 0 and 1 / ((2a + c) t) when r = 0.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    denom = 2 * params.a + params.c
    if denom <= 0:
        raise ValueError("bound needs 2a + c > 0")
    r = params.a + params.b + params.c - params.d
    if r == 0:
        return 1.0 / (denom * t)
    return r / (denom * (1.0 - math.exp(-r * t)))
