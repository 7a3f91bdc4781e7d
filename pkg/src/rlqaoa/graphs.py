"""Graph families, canonical text serialization and brute-force Max-Cut."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numba
import numpy as np

MAX_BRUTE_FORCE_N = 24

_MASK64 = (1 << 64) - 1


class CapacityError(ValueError):
    """Raised when a graph or state exceeds the enumeration/simulation bound."""


class GraphParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class SplitMix64:
    """splitmix64 generator; uniform draws use the top 53 bits of each output."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_range(self, lo: float, hi: float, size: int) -> np.ndarray:
        return np.array([lo + (hi - lo) * self.uniform() for _ in range(size)])


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted simple graph.

    ``edges`` is stored as a sorted tuple of ``(i, j)`` pairs with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"graph needs at least 2 vertices, got {self.n}")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            e = (min(i, j), max(i, j))
            if e in norm:
                raise ValueError(f"duplicate edge {e}")
            norm.add(e)
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    def relabel(self, perm) -> Graph:
        """Return the graph with vertex ``v`` renamed to ``perm[v]``."""
        perm = list(perm)
        return Graph(self.n, tuple((perm[i], perm[j]) for i, j in self.edges), self.label)


@dataclass(frozen=True)
class CutResult:
    value: int
    assignment: tuple[int, ...]


def cut_size(g: Graph, assignment) -> int:
    return sum(1 for i, j in g.edges if assignment[i] != assignment[j])


def complete_graph(m: int) -> Graph:
    return Graph(m, tuple(combinations(range(m), 2)), label=f"complete-m{m}")


def gen_erdos_renyi(n: int, e_p: float, seed: int) -> Graph:
    """G(n, e_p) with one splitmix64 draw per vertex pair in lexicographic order."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 <= e_p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {e_p}")
    rng = SplitMix64(seed)
    edges = [(i, j) for i, j in combinations(range(n), 2) if rng.uniform() < e_p]
    return Graph(n, tuple(edges), label=f"erdos_renyi-n{n}-ep{e_p:g}-s{seed}")


def gen_ladder(n_l: int) -> Graph:
    """Ladder of length ``n_l``: rails ``0..n_l-1`` and ``n_l..2n_l-1``, rungs ``i -- i+n_l``."""
    if n_l < 2:
        raise ValueError(f"ladder length must be >= 2, got {n_l}")
    edges = []
    for i in range(n_l - 1):
        edges.append((i, i + 1))
        edges.append((n_l + i, n_l + i + 1))
    edges.extend((i, i + n_l) for i in range(n_l))
    return Graph(2 * n_l, tuple(edges), label=f"ladder-nL{n_l}")


def gen_barbell(n_b: int) -> Graph:
    """Two copies of K_{n_b} joined by the bridge ``(n_b-1, n_b)``."""
    if n_b < 3:
        raise ValueError(f"clique size must be >= 3, got {n_b}")
    edges = list(combinations(range(n_b), 2))
    edges += [(n_b + i, n_b + j) for i, j in combinations(range(n_b), 2)]
    edges.append((n_b - 1, n_b))
    return Graph(2 * n_b, tuple(edges), label=f"barbell-nB{n_b}")


def gen_caveman(n_c: int, n_k: int) -> Graph:
    """Connected caveman graph.

    Start from ``n_c`` disjoint cliques ``K_{n_k}``; in each clique with first
    vertex ``s`` drop the edge ``(s, s+1)`` and link ``s`` to the last vertex of
    the previous clique around the cycle.
    """
    if n_c < 2 or n_k < 3:
        raise ValueError(f"caveman needs n_C >= 2 and n_k >= 3, got ({n_c}, {n_k})")
    n = n_c * n_k
    edges = set()
    for c in range(n_c):
        s = c * n_k
        edges.update((s + i, s + j) for i, j in combinations(range(n_k), 2))
    for s in range(0, n, n_k):
        edges.discard((s, s + 1))
        t = (s - 1) % n
        edges.add((min(s, t), max(s, t)))
    return Graph(n, tuple(edges), label=f"caveman-nC{n_c}-nk{n_k}")


@numba.njit(cache=True)
def _best_cut(n, us, vs, start, stop):
    # vertex i <-> bit (n-1-i), so increasing z is lexicographic order of the assignment
    best = -1
    best_z = 0
    for z in range(start, stop):
        c = 0
        for e in range(us.shape[0]):
            c += ((z >> (n - 1 - us[e])) ^ (z >> (n - 1 - vs[e]))) & 1
        if c > best:
            best = c
            best_z = z
    return best, best_z


def brute_force_maxcut(g: Graph) -> CutResult:
    """Exact Max-Cut by enumeration with vertex 0 fixed to side 0.

    Ties are broken toward the lexicographically smallest assignment.
    """
    if g.n > MAX_BRUTE_FORCE_N:
        raise CapacityError(f"brute force limited to n <= {MAX_BRUTE_FORCE_N}, got {g.n}")
    ea = g.edge_array()
    # z < 2**(n-1) keeps the bit of vertex 0 at zero
    value, z = _best_cut(g.n, ea[:, 0].copy(), ea[:, 1].copy(), 0, 1 << (g.n - 1))
    assignment = tuple((z >> (g.n - 1 - i)) & 1 for i in range(g.n))
    return CutResult(int(value), assignment)


def serialize_graph(g: Graph) -> str:
    lines = [f"{g.n} {g.m}"]
    lines.extend(f"{i} {j}" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def parse_graph(text: str, label: str = "") -> Graph:
    lines = text.splitlines()
    if not lines:
        raise GraphParseError(1, "empty input")

    def ints(lineno, line):
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(lineno, f"expected two integers, got {line!r}")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(lineno, f"expected two integers, got {line!r}") from None

    n, m = ints(1, lines[0])
    if n < 2 or m < 0:
        raise GraphParseError(1, f"invalid header {lines[0]!r}")
    body = lines[1:]
    if len(body) < m:
        raise GraphParseError(len(lines) + 1, f"expected {m} edge lines, found {len(body)}")
    if len(body) > m:
        raise GraphParseError(m + 2, f"unexpected line after {m} edges")
    edges = []
    prev = None
    for k, line in enumerate(body, start=2):
        i, j = ints(k, line)
        if not (0 <= i < j < n):
            raise GraphParseError(k, f"edge must satisfy 0 <= i < j < n, got ({i}, {j})")
        if prev is not None and (i, j) <= prev:
            raise GraphParseError(k, "edges must be strictly ascending")
        prev = (i, j)
        edges.append((i, j))
    return Graph(n, tuple(edges), label=label)


def save_graph(g: Graph, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(serialize_graph(g))


def load_graph(path) -> Graph:
    with open(path, encoding="ascii") as fh:
        return parse_graph(fh.read(), label=str(path))
