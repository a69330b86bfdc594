"""Brute-force ground truth for small particle systems.

Builds the exact generator of the particle system restricted to a finite box
{0..cap}^sites and solves transients by uniformization.  Transitions that
would leave the box (branchings and jumps into a full site) are blocked: the
chain simply cannot make that move, so it remains a conservative Markov
chain and its transient laws are genuine probability distributions.  The
rate of blocked moves is tracked per state; its time integral is the
truncation-error budget to quote when comparing against the unbounded
process.

Also implements the instantaneous-covariance operator (carre du champ), the
exact covariance formula, and the walk-kernel covariance tables with their
closed-form sum bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .branco import RateParams
from .lattice import Lattice, transition_semigroup

__all__ = [
    "TruncatedChain",
    "KernelTables",
    "CovarianceCheck",
    "ExponentialBoundCheck",
    "build_truncated_chain",
    "transient_distribution",
    "evolve_function",
    "carre_du_champ",
    "covariance_formula_check",
    "covariance_kernels",
    "kernel_sum_bounds",
    "exponential_covariance_bound_check",
]

MAX_STATES = 10**6
UNIFORMIZATION_TAIL = 1e-12


@dataclass(frozen=True)
class TruncatedChain:
    """Exact generator of the particle system on the box {0..cap}^sites."""

    lat: Lattice
    params: RateParams
    cap: int
    states: np.ndarray  # (n_states, n_sites) counts, site-major mixed radix
    generator: np.ndarray  # (n_states, n_states), rows sum to 0
    blocked: np.ndarray  # (n_states,) total rate of moves suppressed by the box

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def index_of(self, x) -> int:
        x = np.asarray(x, dtype=np.int64)
        if ((x < 0) | (x > self.cap)).any():
            raise ValueError("state outside the truncation box")
        idx = 0
        for v in x:
            idx = idx * (self.cap + 1) + int(v)
        return idx

    def delta(self, x) -> np.ndarray:
        """Point mass at the state with counts x."""
        mu = np.zeros(self.n_states)
        mu[self.index_of(x)] = 1.0
        return mu

    def evaluate(self, f) -> np.ndarray:
        """Vector of f over the enumerated states (f takes a counts vector)."""
        return np.array([float(f(s)) for s in self.states])

    def gamma(self, fvec: np.ndarray, gvec: np.ndarray) -> np.ndarray:
        """Carre du champ of the chain: (G(fg) - (Gf)g - f(Gg)) / 2, per state."""
        g_mat = self.generator
        return 0.5 * (g_mat @ (fvec * gvec) - (g_mat @ fvec) * gvec - fvec * (g_mat @ gvec))


def build_truncated_chain(lat: Lattice, params: RateParams, cap: int) -> TruncatedChain:
    """Enumerate the box and assemble the dense generator."""
    n_sites = lat.n_sites
    n_states = (cap + 1) ** n_sites
    if n_states > MAX_STATES:
        raise ValueError(f"state space of size {n_states} exceeds {MAX_STATES}")
    radix = cap + 1
    states = np.zeros((n_states, n_sites), dtype=np.int64)
    for s in range(n_states):
        rem = s
        for site in range(n_sites - 1, -1, -1):
            states[s, site] = rem % radix
            rem //= radix
    # index step when the count at a site changes by +-1 (site-major order)
    stride = np.array([radix ** (n_sites - 1 - i) for i in range(n_sites)], dtype=np.int64)

    gen = np.zeros((n_states, n_states))
    blocked = np.zeros(n_states)
    a, b, c, d = params.a, params.b, params.c, params.d
    for s in range(n_states):
        x = states[s]
        diag = 0.0
        for i in range(n_sites):
            xi = int(x[i])
            if xi == 0:
                continue
            pair = xi * (xi - 1)
            down = c * pair + d * xi
            if down > 0:
                gen[s, s - stride[i]] += down
                diag += down
            if xi >= 2 and a > 0:
                rate = a * pair
                gen[s, s - 2 * stride[i]] += rate
                diag += rate
            if b > 0:
                rate = b * xi
                if xi + 1 <= cap:
                    gen[s, s + stride[i]] += rate
                    diag += rate
                else:
                    blocked[s] += rate
            for j, q in lat.out_edges(i):
                rate = q * xi
                if x[j] + 1 <= cap:
                    gen[s, s - stride[i] + stride[j]] += rate
                    diag += rate
                else:
                    blocked[s] += rate
        gen[s, s] -= diag
    return TruncatedChain(lat=lat, params=params, cap=cap, states=states, generator=gen, blocked=blocked)


def _uniformized_apply(gen: np.ndarray, vec: np.ndarray, t: float, side: str) -> np.ndarray:
    """vec @ exp(t gen) (side='dist') or exp(t gen) @ vec (side='func')."""
    if t < 0:
        raise ValueError("t must be >= 0")
    lam = float(np.max(-np.diag(gen))) if gen.size else 0.0
    if t == 0.0 or lam * t == 0.0:
        return vec.copy()
    n_chunks = max(1, int(math.ceil(lam * t / 256.0)))
    tau = t / n_chunks
    tail = UNIFORMIZATION_TAIL / n_chunks
    sub = np.eye(gen.shape[0]) + gen / lam
    lam_tau = lam * tau
    out = vec.copy()
    for _ in range(n_chunks):
        weight = math.exp(-lam_tau)
        term = out
        acc = weight * term
        cum = weight
        k = 0
        while cum < 1.0 - tail:
            k += 1
            weight *= lam_tau / k
            term = term @ sub if side == "dist" else sub @ term
            acc = acc + weight * term
            cum += weight
        out = acc
    return out


def transient_distribution(chain: TruncatedChain, mu0: np.ndarray, t: float) -> np.ndarray:
    """Distribution at time t from the initial distribution mu0.

    Uniformization with series tail below 1e-12; the result sums to 1 to
    within that tail because the truncated chain is conservative.
    """
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (chain.n_states,):
        raise ValueError("mu0 must be a distribution over the chain's states")
    return _uniformized_apply(chain.generator, mu0, t, side="dist")


def evolve_function(chain: TruncatedChain, fvec: np.ndarray, t: float) -> np.ndarray:
    """Semigroup action on a function of the state: x -> E_x[f(X_t)]."""
    fvec = np.asarray(fvec, dtype=float)
    return _uniformized_apply(chain.generator, fvec, t, side="func")


def carre_du_champ(f, g, x, params: RateParams, lat: Lattice, cap: int | None = None) -> float:
    """Instantaneous covariance operator Gamma(f, g)(x), by the five-channel sum.

    2 Gamma(f, g)(x) sums rate * (f(x') - f(x)) * (g(x') - g(x)) over all
    transitions x -> x'.  With ``cap`` set, moves leaving the box {0..cap}
    are skipped, which makes the value agree with the truncated chain's
    matrix form ``TruncatedChain.gamma`` exactly.
    """
    x = np.asarray(x, dtype=np.int64)
    a, b, c, d = params.a, params.b, params.c, params.d
    fx = float(f(x))
    gx = float(g(x))
    total = 0.0

    def add(rate: float, x_new: np.ndarray) -> None:
        nonlocal total
        if rate > 0:
            total += rate * (float(f(x_new)) - fx) * (float(g(x_new)) - gx)

    for i in range(lat.n_sites):
        xi = int(x[i])
        if xi == 0:
            continue
        pair = xi * (xi - 1)
        for j, q in lat.out_edges(i):
            if cap is None or x[j] + 1 <= cap:
                x_new = x.copy()
                x_new[i] -= 1
                x_new[j] += 1
                add(q * xi, x_new)
        if pair > 0:
            x_new = x.copy()
            x_new[i] -= 2
            add(a * pair, x_new)
        if cap is None or xi + 1 <= cap:
            x_new = x.copy()
            x_new[i] += 1
            add(b * xi, x_new)
        x_new = x.copy()
        x_new[i] -= 1
        add(c * pair + d * xi, x_new)
    return 0.5 * total


def _simpson_weights(n_panels: int, length: float) -> np.ndarray:
    if n_panels < 2 or n_panels % 2:
        raise ValueError("Simpson rule needs an even number of panels >= 2")
    w = np.ones(n_panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (length / n_panels / 3.0)


@dataclass(frozen=True)
class CovarianceCheck:
    lhs: float
    rhs: float
    deviation: float
    suppression_mass: float


def covariance_formula_check(
    f,
    g,
    mu0: np.ndarray,
    t: float,
    params: RateParams,
    lat: Lattice,
    cap: int,
    n_quad: int = 256,
    suppression_tol: float = 1e-6,
    chain: TruncatedChain | None = None,
) -> CovarianceCheck:
    """Verify Cov_{mu S_t}(f, g) = Cov_mu(S_t f, S_t g) + 2 int_0^t mu S_{t-s} Gamma(S_s f, S_s g) ds.

    All semigroup actions are exact (uniformization); the time integral uses
    composite Simpson with ``n_quad`` panels.  The integrated blocked-move
    flux is monitored and must stay below ``suppression_tol`` for the check
    to be meaningful as a statement about the unbounded process.
    """
    if chain is None:
        chain = build_truncated_chain(lat, params, cap)
    mu0 = np.asarray(mu0, dtype=float)
    fvec = chain.evaluate(f)
    gvec = chain.evaluate(g)
    if n_quad % 2:
        n_quad += 1
    nodes = np.linspace(0.0, t, n_quad + 1)
    weights = _simpson_weights(n_quad, t) if t > 0 else np.zeros(n_quad + 1)

    # distributions mu S_s and evolved functions S_s f, S_s g at every node
    dists = np.empty((n_quad + 1, chain.n_states))
    fs = np.empty_like(dists)
    gs = np.empty_like(dists)
    dists[0], fs[0], gs[0] = mu0, fvec, gvec
    for k in range(1, n_quad + 1):
        dt = nodes[k] - nodes[k - 1]
        dists[k] = _uniformized_apply(chain.generator, dists[k - 1], dt, "dist")
        fs[k] = _uniformized_apply(chain.generator, fs[k - 1], dt, "func")
        gs[k] = _uniformized_apply(chain.generator, gs[k - 1], dt, "func")

    suppression = float(weights @ (dists @ chain.blocked)) if t > 0 else 0.0
    if suppression > suppression_tol:
        raise ValueError(
            f"integrated blocked-move flux {suppression:.3e} exceeds {suppression_tol:.1e}; "
            "raise the cap for this horizon"
        )

    dist_t = dists[-1]
    lhs = float(dist_t @ (fvec * gvec) - (dist_t @ fvec) * (dist_t @ gvec))
    stf, stg = fs[-1], gs[-1]
    rhs = float(mu0 @ (stf * stg) - (mu0 @ stf) * (mu0 @ stg))
    if t > 0:
        integrand = np.array(
            [dists[n_quad - k] @ chain.gamma(fs[k], gs[k]) for k in range(n_quad + 1)]
        )
        rhs += 2.0 * float(weights @ integrand)
    return CovarianceCheck(lhs=lhs, rhs=rhs, deviation=abs(lhs - rhs), suppression_mass=suppression)


@dataclass(frozen=True)
class KernelTables:
    """Covariance kernel tables at one time; indices are (i; k, l) / (i, j; k, l)."""

    A: np.ndarray  # (n, n, n)
    B: np.ndarray  # (n, n, n)
    C: np.ndarray  # (n, n, n)
    K: np.ndarray  # (n, n, n)
    L: np.ndarray  # (n, n, n, n)
    t: float
    n_quad: int


class _WalkCache:
    """Memoized P~_u = e^{(b-d)u} P_u evaluations."""

    def __init__(self, lat: Lattice, growth: float):
        self.lat = lat
        self.growth = growth
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, u: float) -> np.ndarray:
        got = self._cache.get(u)
        if got is None:
            got = math.exp(self.growth * u) * transition_semigroup(self.lat, u)
            self._cache[u] = got
        return got


def _abc_tables(lat: Lattice, params: RateParams, ptil: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    q = lat.rates
    a_tab = (
        np.einsum("ij,ik,il->ikl", q, ptil, ptil)
        + np.einsum("ij,ik,jl->ikl", q, ptil, ptil)
        + np.einsum("ij,jk,il->ikl", q, ptil, ptil)
        + np.einsum("ij,jk,jl->ikl", q, ptil, ptil)
    )
    b_tab = np.einsum("ik,il->ikl", ptil, ptil)
    c_tab = a_tab + (params.b + params.d) * b_tab
    return a_tab, b_tab, c_tab


def covariance_kernels(lat: Lattice, params: RateParams, t: float, n_quad: int = 64) -> KernelTables:
    """Covariance kernel tables K_t and L_t (with the A/B/C building blocks at t).

    With P~_u = e^{(b-d)u} P_u and C_u built from the walk kernel:

      K_t(i;k,l) = int_0^t ds [P~_{t-s} C_s](i;k,l)
                 + (2a+c) int_0^t ds sum_m [int_0^{t-s} du P~_u C_u(.;m,m)](i,m)
                   P~_s(m,k) P~_s(m,l)
      L_t(i,j;k,l) = (2a+c) int_0^t ds sum_m P~_{t-s}(i,m) P~_{t-s}(j,m)
                     P~_s(m,k) P~_s(m,l)

    Time integrals use composite Simpson with ``n_quad`` panels (outer and
    inner alike).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if n_quad % 2:
        n_quad += 1
    n = lat.n_sites
    ptil = _WalkCache(lat, params.b - params.d)
    a_now, b_now, c_now = _abc_tables(lat, params, ptil(t))
    if t == 0:
        zero_k = np.zeros((n, n, n))
        zero_l = np.zeros((n, n, n, n))
        return KernelTables(A=a_now, B=b_now, C=c_now, K=zero_k, L=zero_l, t=t, n_quad=n_quad)

    nodes = np.linspace(0.0, t, n_quad + 1)
    weights = _simpson_weights(n_quad, t)
    two_a_c = 2.0 * params.a + params.c

    k_tab = np.zeros((n, n, n))
    l_tab = np.zeros((n, n, n, n))
    for s_idx, s in enumerate(nodes):
        w = weights[s_idx]
        p_rem = ptil(t - s)  # P~_{t-s}
        p_s = ptil(s)
        _, _, c_s = _abc_tables(lat, params, p_s)
        k_tab += w * np.einsum("ij,jkl->ikl", p_rem, c_s)

        # inner integral D_{t-s}(i,m) = int_0^{t-s} du [P~_u C_u(.;m,m)](i,m)
        span = t - s
        if span > 0:
            in_nodes = np.linspace(0.0, span, n_quad + 1)
            in_weights = _simpson_weights(n_quad, span)
            d_mat = np.zeros((n, n))
            for u_idx, u in enumerate(in_nodes):
                p_u = ptil(u)
                _, _, c_u = _abc_tables(lat, params, p_u)
                diag_c = np.einsum("jmm->jm", c_u)
                d_mat += in_weights[u_idx] * (p_u @ diag_c)
            k_tab += w * two_a_c * np.einsum("im,mk,ml->ikl", d_mat, p_s, p_s)

        l_tab += w * two_a_c * np.einsum("im,jm,mk,ml->ijkl", p_rem, p_rem, p_s, p_s)

    return KernelTables(A=a_now, B=b_now, C=c_now, K=k_tab, L=l_tab, t=t, n_quad=n_quad)


def kernel_sum_bounds(lat: Lattice, params: RateParams, t: float, n_quad: int = 512) -> tuple[float, float]:
    """Closed-form caps on sum_{i,k} K_t(i;k,l) and sum_{i,j,k} L_t(i,j;k,l).

    Follow from column sums of P~_u being e^{(b-d)u} on kernels with the
    counting measure invariant; evaluated by Simpson quadrature.
    """
    growth = params.b - params.d
    two_a_c = 2.0 * params.a + params.c
    q_norm = float(lat.exit_rates.max())
    c_total = 4.0 * q_norm + params.b + params.d
    if t == 0:
        return 0.0, 0.0
    if n_quad % 2:
        n_quad += 1
    nodes = np.linspace(0.0, t, n_quad + 1)
    weights = _simpson_weights(n_quad, t)

    k_bound = float(weights @ np.array([c_total * math.exp(growth * (t - s)) * math.exp(2 * growth * s) for s in nodes]))
    inner = []
    for s in nodes:
        span = t - s
        if span <= 0:
            inner.append(0.0)
            continue
        in_nodes = np.linspace(0.0, span, n_quad + 1)
        in_weights = _simpson_weights(n_quad, span)
        inner.append(float(in_weights @ np.exp(3.0 * growth * in_nodes)))
    k_bound += two_a_c * c_total * float(
        weights @ (np.array(inner) * np.exp(2.0 * growth * nodes))
    )
    l_bound = two_a_c * float(
        weights @ (np.exp(2.0 * growth * (t - nodes)) * np.exp(2.0 * growth * nodes))
    )
    return k_bound, l_bound


@dataclass(frozen=True)
class ExponentialBoundCheck:
    lhs: float
    bound: float
    slack: float
    truncation_budget: float


def exponential_covariance_bound_check(
    x0,
    mu,
    t: float,
    params: RateParams,
    lat: Lattice,
    cap: int,
    n_quad: int = 64,
) -> ExponentialBoundCheck:
    """Check |E[e^{-<mu, X_t>}] - prod_k E[e^{-mu_k X_t(k)}]| against the kernel bound.

    The left side is computed exactly on the truncated chain started from the
    deterministic state x0; the bound is the K/L double sum

      1/2 sum_{k != l} [sum_i x0(i) K_t(i;k,l)
                        + sum_{i,j} x0(i) x0(j) L_t(i,j;k,l)] mu(k) mu(l).
    """
    x0 = np.asarray(x0, dtype=np.int64)
    mu = np.asarray(mu, dtype=float)
    if (mu < 0).any():
        raise ValueError("mu must be >= 0")
    chain = build_truncated_chain(lat, params, cap)
    dist = transient_distribution(chain, chain.delta(x0), t)
    joint = float(dist @ np.exp(-(chain.states @ mu)))
    product = 1.0
    for k in range(lat.n_sites):
        product *= float(dist @ np.exp(-mu[k] * chain.states[:, k]))
    lhs = joint - product

    tables = covariance_kernels(lat, params, t, n_quad)
    off = 1.0 - np.eye(lat.n_sites)
    mukl = np.einsum("k,l,kl->kl", mu, mu, off)
    bound = 0.5 * float(np.einsum("i,ikl,kl->", x0, tables.K, mukl))
    bound += 0.5 * float(np.einsum("i,j,ijkl,kl->", x0, x0, tables.L, mukl))

    # blocked-flux budget for reading the truncated lhs as the true process
    n_nodes = 33
    nodes = np.linspace(0.0, t, n_nodes)
    w = _simpson_weights(n_nodes - 1, t) if t > 0 else np.zeros(n_nodes)
    d_run = chain.delta(x0)
    flux = 0.0
    for idx in range(n_nodes):
        if idx:
            d_run = transient_distribution(chain, d_run, nodes[idx] - nodes[idx - 1])
        flux += w[idx] * float(d_run @ chain.blocked)
    return ExponentialBoundCheck(lhs=lhs, bound=bound, slack=bound - abs(lhs), truncation_budget=flux)
