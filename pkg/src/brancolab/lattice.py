"""Finite site sets with jump kernels, kernel validation, and the walk semigroup.

A lattice is a finite set of sites together with nonnegative jump rates
q(i, j) between distinct sites.  Every simulator and oracle in this package
assumes the kernel has passed :func:`validate_kernel`: bounded exit rates,
weak irreducibility (connectivity of the symmetrized support graph), and
invariance of the counting measure (column sums equal row sums).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Lattice",
    "ValidationReport",
    "LatticeError",
    "torus_1d",
    "torus_2d",
    "complete_graph",
    "custom_lattice",
    "lattice_from_edge_lines",
    "build_lattice",
    "validate_kernel",
    "transition_semigroup",
]

FLOW_TOL = 1e-12
SEMIGROUP_TAIL = 1e-12


class LatticeError(ValueError):
    """Raised for malformed lattice specifications."""


@dataclass(frozen=True)
class Lattice:
    """Immutable finite site set with jump rates q(i, j), q(i, i) = 0."""

    n_sites: int
    rates: np.ndarray  # dense (n, n), zero diagonal
    shape_tag: str

    def __post_init__(self):
        q = np.asarray(self.rates, dtype=float)
        if self.n_sites < 1:
            raise LatticeError("empty site set")
        if q.shape != (self.n_sites, self.n_sites):
            raise LatticeError(f"rate matrix shape {q.shape} != ({self.n_sites}, {self.n_sites})")
        if (q < 0).any():
            raise LatticeError("negative jump rate")
        q = q.copy()
        np.fill_diagonal(q, 0.0)
        q.setflags(write=False)
        object.__setattr__(self, "rates", q)

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    @property
    def in_rates(self) -> np.ndarray:
        return self.rates.sum(axis=0)

    def out_edges(self, i: int) -> list[tuple[int, float]]:
        row = self.rates[i]
        return [(j, row[j]) for j in np.nonzero(row)[0]]

    def transpose(self) -> "Lattice":
        """Lattice with the reversed kernel q(i, j) -> q(j, i)."""
        return Lattice(self.n_sites, self.rates.T.copy(), self.shape_tag + "^T")

    def generator_matrix(self) -> np.ndarray:
        """Walk generator Q = rates - diag(exit rates)."""
        g = self.rates.copy()
        g[np.diag_indices(self.n_sites)] = -self.exit_rates
        return g


@dataclass(frozen=True)
class ValidationReport:
    max_exit_rate: float
    irreducible: bool
    counting_measure_invariant: bool
    max_flow_imbalance: float

    @property
    def passed(self) -> bool:
        return self.irreducible and self.counting_measure_invariant


def torus_1d(n: int) -> Lattice:
    """Ring of n sites, nearest-neighbor rate 1 per directed edge.

    Neighbor pairs are deduplicated, so torus_1d(2) has q(0,1) = q(1,0) = 1.
    """
    if n < 1:
        raise LatticeError("torus_1d needs n >= 1")
    q = np.zeros((n, n))
    for i in range(n):
        for j in {(i - 1) % n, (i + 1) % n}:
            if j != i:
                q[i, j] = 1.0
    return Lattice(n, q, f"torus_1d({n})")


def torus_2d(rows: int, cols: int) -> Lattice:
    """rows x cols torus, nearest-neighbor rate 1 per directed edge (deduplicated)."""
    if rows < 1 or cols < 1:
        raise LatticeError("torus_2d needs rows, cols >= 1")
    n = rows * cols
    q = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            nbrs = {
                ((r - 1) % rows) * cols + c,
                ((r + 1) % rows) * cols + c,
                r * cols + (c - 1) % cols,
                r * cols + (c + 1) % cols,
            }
            for j in nbrs:
                if j != i:
                    q[i, j] = 1.0
    return Lattice(n, q, f"torus_2d({rows}x{cols})")


def complete_graph(n: int) -> Lattice:
    """Complete graph on n sites with rate 1/(n-1) per directed pair.

    The normalization makes the total exit rate 1 at every site.
    """
    if n < 1:
        raise LatticeError("complete graph needs n >= 1")
    q = np.zeros((n, n))
    if n > 1:
        q[:] = 1.0 / (n - 1)
        np.fill_diagonal(q, 0.0)
    return Lattice(n, q, f"complete({n})")


def custom_lattice(n_sites: int, edges: list[tuple[int, int, float]]) -> Lattice:
    """Lattice from an explicit directed edge list [(i, j, rate), ...]."""
    if n_sites < 1:
        raise LatticeError("empty site set")
    q = np.zeros((n_sites, n_sites))
    for i, j, rate in edges:
        if rate < 0:
            raise LatticeError(f"negative rate on edge ({i}, {j})")
        if not (0 <= i < n_sites and 0 <= j < n_sites):
            raise LatticeError(f"edge ({i}, {j}) outside site range")
        if i != j:
            q[i, j] += rate
    return Lattice(n_sites, q, "custom")


def lattice_from_edge_lines(lines) -> Lattice:
    """Parse a plain-text edge list, one 'i j rate' triple per line.

    Blank lines and lines starting with '#' are skipped.  The site set is
    0..max index seen.
    """
    edges = []
    max_site = -1
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LatticeError(f"bad edge line: {line!r}")
        i, j, rate = int(parts[0]), int(parts[1]), float(parts[2])
        max_site = max(max_site, i, j)
        edges.append((i, j, rate))
    if max_site < 0:
        raise LatticeError("empty site set")
    return custom_lattice(max_site + 1, edges)


def build_lattice(spec: str) -> Lattice:
    """Build a lattice from a compact spec string.

    Formats: ``torus1d:n``, ``torus2d:rows:cols``, ``complete:n``,
    ``custom:path/to/edge_list.txt``.
    """
    parts = spec.split(":")
    kind = parts[0].lower().replace("_", "")
    try:
        if kind == "torus1d":
            return torus_1d(int(parts[1]))
        if kind == "torus2d":
            return torus_2d(int(parts[1]), int(parts[2]))
        if kind == "complete":
            return complete_graph(int(parts[1]))
        if kind == "custom":
            path = ":".join(parts[1:])
            with open(path) as fh:
                return lattice_from_edge_lines(fh)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, LatticeError):
            raise
        raise LatticeError(f"bad lattice spec {spec!r}: {exc}") from exc
    raise LatticeError(f"unknown lattice kind {parts[0]!r}")


def _symmetrized_connected(lat: Lattice) -> bool:
    n = lat.n_sites
    support = (lat.rates > 0) | (lat.rates.T > 0)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(support[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def validate_kernel(lat: Lattice) -> ValidationReport:
    """Check the standing kernel assumptions and report exact diagnostics.

    Reports the maximal exit rate, connectivity of the symmetrized support
    graph, and whether every site's inflow rate equals its outflow rate
    (within ``FLOW_TOL``); the report passes iff the last two hold.
    """
    exit_rates = lat.exit_rates
    in_rates = lat.in_rates
    imbalance = float(np.abs(in_rates - exit_rates).max()) if lat.n_sites else 0.0
    return ValidationReport(
        max_exit_rate=float(exit_rates.max()),
        irreducible=_symmetrized_connected(lat),
        counting_measure_invariant=imbalance <= FLOW_TOL,
        max_flow_imbalance=imbalance,
    )


def uniformized_expm(generator: np.ndarray, t: float, tail: float = SEMIGROUP_TAIL) -> np.ndarray:
    """exp(t * generator) for a conservative rate matrix, by uniformization.

    The Poisson series is truncated when its remaining mass drops below
    ``tail``; times with a large uniformization rate are split into chunks
    so the leading Poisson weight never underflows.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    n = generator.shape[0]
    lam = float(np.max(-np.diag(generator))) if n else 0.0
    if t == 0 or lam * t == 0:
        return np.eye(n)
    n_chunks = max(1, int(np.ceil(lam * t / 256.0)))
    tau = t / n_chunks
    chunk_tail = tail / n_chunks
    sub = np.eye(n) + generator / lam  # substochastic jump matrix
    lam_tau = lam * tau
    weight = np.exp(-lam_tau)
    acc = weight * np.eye(n)
    power = np.eye(n)
    cum = weight
    k = 0
    while cum < 1.0 - chunk_tail:
        k += 1
        weight *= lam_tau / k
        power = power @ sub
        acc += weight * power
        cum += weight
    result = acc
    for _ in range(n_chunks - 1):
        result = result @ acc
    return result


def transition_semigroup(lat: Lattice, t: float) -> np.ndarray:
    """Random-walk transition probabilities P_t(i, j) on the lattice.

    Computed by uniformization of the walk generator; the series tail is
    below ``SEMIGROUP_TAIL``.  Rows sum to 1, and for kernels with the
    counting measure invariant, columns do as well.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    return uniformized_expm(lat.generator_matrix(), t)
