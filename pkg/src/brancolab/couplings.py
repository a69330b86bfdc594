"""Coupled multi-type simulations: standard, comparison, and pure-birth domination.

All three couplings run the same exact event-driven scheme as the plain
simulator, but over typed particle counts.  Channel rates are recomputed
from scratch after every event; the coupled populations are small, so
clarity of the rate bookkeeping wins over incremental updates here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .branco import DEFAULT_COUNT_CAP, RateParams, SimulationError, _check_grid, _Uniforms
from .lattice import Lattice

__all__ = [
    "TriTrajectory",
    "standard_coupling_simulate",
    "comparison_simulate",
    "pure_birth_domination",
]


@dataclass(frozen=True)
class TriTrajectory:
    """Typed counts on the grid: y01, y11, y10 of shape (grid, sites).

    The two marginal processes are X = y01 + y11 and X' = y10 + y11.
    """

    y01: np.ndarray
    y11: np.ndarray
    y10: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.y01 + self.y11

    @property
    def x_prime(self) -> np.ndarray:
        return self.y10 + self.y11


class _TypedEngine:
    """Shared event loop over a list of (rate, effect) channels."""

    def __init__(self, lat: Lattice, cap: int):
        self.lat = lat
        self.n = lat.n_sites
        self.exit = lat.exit_rates
        self.cap = cap

    def channels(self) -> list[tuple[float, tuple]]:
        raise NotImplementedError

    def apply(self, effect: tuple, draws: _Uniforms) -> None:
        raise NotImplementedError

    def snapshot(self) -> np.ndarray:
        raise NotImplementedError

    def _jump_target(self, i: int, draws: _Uniforms) -> int:
        edges = self.lat.out_edges(i)
        w = draws.next() * self.exit[i]
        target = edges[-1][0]
        for j, q in edges:
            w -= q
            if w < 0:
                target = j
                break
        return target

    def _guard(self, counts) -> None:
        for row in counts:
            for v in row:
                if v > self.cap:
                    raise SimulationError(f"count {v} exceeds hard cap {self.cap}")

    def run(self, t_grid) -> np.ndarray:
        grid = _check_grid(t_grid)
        frames = []
        t = 0.0
        g = 0
        while g < grid.size:
            chans = self.channels()
            total = sum(rate for rate, _ in chans)
            if total <= 0.0:
                while g < grid.size:
                    frames.append(self.snapshot())
                    g += 1
                break
            t_next = t - math.log(1.0 - self.draws.next()) / total
            while g < grid.size and grid[g] < t_next:
                frames.append(self.snapshot())
                g += 1
            if g >= grid.size:
                break
            t = t_next
            v = self.draws.next() * total
            effect = chans[-1][1]
            for rate, eff in chans:
                v -= rate
                if v < 0:
                    effect = eff
                    break
            self.apply(effect, self.draws)
        return np.stack(frames)


class _StandardCouplingEngine(_TypedEngine):
    """Trivariate (01, 11, 10) coupling; both x-marginals follow the full dynamics.

    Same-type particles use the usual five channels; cross-type pairs on one
    site transform as 01+10 -> 11 (rate r_c per pair), 01+11 -> 10 / 11 at
    2a / 2c per pair, and symmetrically 10+11 -> 01 / 11.
    """

    def __init__(self, init, params: RateParams, r_c: float, lat: Lattice, rng, cap: int):
        super().__init__(lat, cap)
        self.y = [list(map(int, row)) for row in init]  # [type][site]
        self.p = params
        self.r_c = r_c
        self.draws = _Uniforms(rng)

    def channels(self):
        p = self.p
        out = []
        for i in range(self.n):
            y0, y1, y2 = self.y[0][i], self.y[1][i], self.y[2][i]
            for tau, cnt in ((0, y0), (1, y1), (2, y2)):
                if cnt:
                    out.append((self.exit[i] * cnt, ("jump", tau, i)))
                    out.append((p.b * cnt, ("branch", tau, i)))
                    out.append((p.d * cnt, ("death", tau, i)))
                    pair = cnt * (cnt - 1)
                    if pair:
                        out.append((p.a * pair, ("ann", tau, i)))
                        out.append((p.c * pair, ("coal", tau, i)))
            if y0 and y2:
                out.append((self.r_c * y0 * y2, ("meet", i)))
            if y0 and y1:
                out.append((2 * p.a * y0 * y1, ("flip01", i)))
                out.append((2 * p.c * y0 * y1, ("absorb0", i)))
            if y2 and y1:
                out.append((2 * p.a * y2 * y1, ("flip10", i)))
                out.append((2 * p.c * y2 * y1, ("absorb2", i)))
        return [(r, e) for r, e in out if r > 0]

    def apply(self, effect, draws):
        kind = effect[0]
        y = self.y
        if kind == "jump":
            _, tau, i = effect
            j = self._jump_target(i, draws)
            y[tau][i] -= 1
            y[tau][j] += 1
        elif kind == "branch":
            _, tau, i = effect
            y[tau][i] += 1
        elif kind == "death":
            _, tau, i = effect
            y[tau][i] -= 1
        elif kind == "ann":
            _, tau, i = effect
            y[tau][i] -= 2
        elif kind == "coal":
            _, tau, i = effect
            y[tau][i] -= 1
        elif kind == "meet":  # 01 + 10 -> 11
            i = effect[1]
            y[0][i] -= 1
            y[2][i] -= 1
            y[1][i] += 1
        elif kind == "flip01":  # 01 + 11 -> 10
            i = effect[1]
            y[0][i] -= 1
            y[1][i] -= 1
            y[2][i] += 1
        elif kind == "absorb0":  # 01 + 11 -> 11
            i = effect[1]
            y[0][i] -= 1
        elif kind == "flip10":  # 10 + 11 -> 01
            i = effect[1]
            y[2][i] -= 1
            y[1][i] -= 1
            y[0][i] += 1
        else:  # absorb2: 10 + 11 -> 11
            i = effect[1]
            y[2][i] -= 1
        self._guard(y)

    def snapshot(self):
        return np.array(self.y, dtype=np.int64)


def standard_coupling_simulate(
    y01_0,
    y11_0,
    y10_0,
    params: RateParams,
    r_c: float,
    lat: Lattice,
    t_grid,
    rng: np.random.Generator,
    count_cap: int = DEFAULT_COUNT_CAP,
) -> TriTrajectory:
    """Simulate the trivariate coupling; any r_c >= 0 preserves both marginals.

    The default choice elsewhere in the package is r_c = 2 (a + c), the value
    the comparison arguments rely on.
    """
    if r_c < 0:
        raise ValueError("coupling rate r_c must be >= 0")
    init = np.array([y01_0, y11_0, y10_0], dtype=np.int64)
    if (init < 0).any():
        raise ValueError("negative initial count")
    eng = _StandardCouplingEngine(init, params, r_c, lat, rng, count_cap)
    frames = eng.run(t_grid)  # (grid, 3, sites)
    return TriTrajectory(y01=frames[:, 0], y11=frames[:, 1], y10=frames[:, 2])


class _ComparisonEngine(_TypedEngine):
    """Black/white coupling: black is the full process, black+white the
    annihilation-free majorant.

    theta = c~ / (a + c) splits each black-pair event into the four variants
    that keep both marginal laws exact: the pair becomes one black and one
    white at 2(1-theta)c, two whites at 2(1-theta)a, one black at 2 theta c,
    or one white at 2 theta a (rates per pair).
    """

    def __init__(self, x0, w0, params, b_up, c_up, d_up, lat, rng, cap):
        super().__init__(lat, cap)
        self.black = [int(v) for v in x0]
        self.white = [int(v) for v in w0]
        self.p = params
        self.b_up = b_up
        self.c_up = c_up
        self.d_up = d_up
        denom = params.a + params.c
        self.theta = (c_up / denom) if denom > 0 else 0.0
        self.draws = _Uniforms(rng)

    def channels(self):
        p = self.p
        th = self.theta
        out = []
        for i in range(self.n):
            nb, nw = self.black[i], self.white[i]
            if nb:
                out.append((self.exit[i] * nb, ("bjump", i)))
                out.append((p.b * nb, ("bbranch", i)))
                out.append(((self.b_up - p.b) * nb, ("wchild", i)))
                out.append((self.d_up * nb, ("bdie", i)))
                out.append(((p.d - self.d_up) * nb, ("bfade", i)))
                pair = nb * (nb - 1)
                if pair:
                    out.append(((1 - th) * p.c * pair, ("bpair_cw", i)))
                    out.append(((1 - th) * p.a * pair, ("bpair_ww", i)))
                    out.append((th * p.c * pair, ("bpair_c", i)))
                    out.append((th * p.a * pair, ("bpair_w", i)))
            if nw:
                out.append((self.exit[i] * nw, ("wjump", i)))
                out.append((self.b_up * nw, ("wbranch", i)))
                out.append((self.d_up * nw, ("wdie", i)))
                pairw = nw * (nw - 1)
                if pairw:
                    out.append((self.c_up * pairw, ("wpair", i)))
            if nb and nw:
                out.append((2 * self.c_up * nb * nw, ("bwpair", i)))
        return [(r, e) for r, e in out if r > 0]

    def apply(self, effect, draws):
        kind, i = effect
        if kind == "bjump":
            j = self._jump_target(i, draws)
            self.black[i] -= 1
            self.black[j] += 1
        elif kind == "bbranch":
            self.black[i] += 1
        elif kind == "wchild":  # black stays, white child keeps the majorant's rate
            self.white[i] += 1
        elif kind == "bdie":
            self.black[i] -= 1
        elif kind == "bfade":  # extra black death converts to white: majorant unchanged
            self.black[i] -= 1
            self.white[i] += 1
        elif kind == "bpair_cw":
            self.black[i] -= 1
            self.white[i] += 1
        elif kind == "bpair_ww":
            self.black[i] -= 2
            self.white[i] += 2
        elif kind == "bpair_c":
            self.black[i] -= 1
        elif kind == "bpair_w":
            self.black[i] -= 2
            self.white[i] += 1
        elif kind == "wjump":
            j = self._jump_target(i, draws)
            self.white[i] -= 1
            self.white[j] += 1
        elif kind == "wbranch":
            self.white[i] += 1
        elif kind == "wdie":
            self.white[i] -= 1
        elif kind == "wpair":
            self.white[i] -= 1
        else:  # bwpair: black-white pair coalesces, black survives
            self.white[i] -= 1
        if self.black[i] < 0 or self.white[i] < 0:
            raise SimulationError("coupling bookkeeping produced a negative count")
        self._guard((self.black, self.white))

    def snapshot(self):
        black = np.array(self.black, dtype=np.int64)
        white = np.array(self.white, dtype=np.int64)
        return np.stack([black, black + white])


def comparison_simulate(
    x0,
    x0_up,
    params: RateParams,
    b_up: float,
    c_up: float,
    d_up: float,
    lat: Lattice,
    t_grid,
    rng: np.random.Generator,
    count_cap: int = DEFAULT_COUNT_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled (X, X~) with X~ an annihilation-free (0, b~, c~, d~) process.

    Requires x0 <= x0_up componentwise, b <= b~, a + c >= c~, and d >= d~.
    Returns trajectories (grid, sites) with X_t <= X~_t at every event time
    by construction (X~ - X is the white population, which never goes
    negative; this is asserted after every event).
    """
    x0 = np.asarray(x0, dtype=np.int64)
    x0_up = np.asarray(x0_up, dtype=np.int64)
    if (x0 > x0_up).any():
        raise ValueError("initial domination x0 <= x0_up violated")
    problems = []
    if params.b > b_up:
        problems.append(f"b={params.b} > b_up={b_up}")
    if params.a + params.c < c_up:
        problems.append(f"a+c={params.a + params.c} < c_up={c_up}")
    if params.d < d_up:
        problems.append(f"d={params.d} < d_up={d_up}")
    if c_up < 0 or d_up < 0 or b_up < 0:
        problems.append("majorant rates must be >= 0")
    if problems:
        raise ValueError("comparison coupling needs b <= b_up, a+c >= c_up, d >= d_up: " + "; ".join(problems))
    eng = _ComparisonEngine(x0, x0_up - x0, params, b_up, c_up, d_up, lat, rng, count_cap)
    frames = eng.run(t_grid)  # (grid, 2, sites)
    return frames[:, 0], frames[:, 1]


class _PureBirthEngine(_TypedEngine):
    """Black = full process; white particles only give birth (at j with rate
    q(i, j), at i with rate b) and never move or die.  Every black loss
    spawns a white at the site it vacated, so V = black + white never
    decreases anywhere."""

    def __init__(self, x0, params, lat, rng, cap):
        super().__init__(lat, cap)
        self.black = [int(v) for v in x0]
        self.white = [0] * self.n
        self.p = params
        self.draws = _Uniforms(rng)

    def channels(self):
        p = self.p
        out = []
        for i in range(self.n):
            nb, nw = self.black[i], self.white[i]
            if nb:
                out.append((self.exit[i] * nb, ("bjump", i)))
                out.append((p.b * nb, ("bbranch", i)))
                out.append((p.d * nb, ("bdie", i)))
                pair = nb * (nb - 1)
                if pair:
                    out.append((p.a * pair, ("bann", i)))
                    out.append((p.c * pair, ("bcoal", i)))
            if nw:
                out.append((self.exit[i] * nw, ("wspawn", i)))
                out.append((p.b * nw, ("wbranch", i)))
        return [(r, e) for r, e in out if r > 0]

    def apply(self, effect, draws):
        kind, i = effect
        if kind == "bjump":
            j = self._jump_target(i, draws)
            self.black[i] -= 1
            self.black[j] += 1
            self.white[i] += 1
        elif kind == "bbranch":
            self.black[i] += 1
        elif kind == "bdie":
            self.black[i] -= 1
            self.white[i] += 1
        elif kind == "bann":
            self.black[i] -= 2
            self.white[i] += 2
        elif kind == "bcoal":
            self.black[i] -= 1
            self.white[i] += 1
        elif kind == "wspawn":  # white at i gives birth at a neighbor, does not move
            j = self._jump_target(i, draws)
            self.white[j] += 1
        else:  # wbranch
            self.white[i] += 1
        if self.black[i] < 0:
            raise SimulationError("pure-birth coupling produced a negative count")
        self._guard((self.black, self.white))

    def snapshot(self):
        black = np.array(self.black, dtype=np.int64)
        white = np.array(self.white, dtype=np.int64)
        return np.stack([black, black + white])


def pure_birth_domination(
    x0,
    params: RateParams,
    lat: Lattice,
    t_grid,
    rng: np.random.Generator,
    count_cap: int = DEFAULT_COUNT_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled (X, V): V is the pure-birth majorant, nondecreasing per site."""
    x0 = np.asarray(x0, dtype=np.int64)
    if (x0 < 0).any():
        raise ValueError("negative initial count")
    eng = _PureBirthEngine(x0, params, lat, rng, count_cap)
    frames = eng.run(t_grid)
    return frames[:, 0], frames[:, 1]
