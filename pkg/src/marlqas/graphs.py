"""Simple graphs, canonical labeling and the 3-regular instance corpus."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ValueError(f"edge ({u}, {v}) out of range")
            norm.add((min(u, v), max(u, v)))
        if len(norm) != len(self.edges):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, edges) -> Graph:
        return cls(n, frozenset((int(u), int(v)) for u, v in edges))

    def degrees(self) -> list[int]:
        deg = [0] * self.n_vertices
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbors(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n_vertices)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def is_connected(self) -> bool:
        if self.n_vertices == 0:
            return True
        adj = self.neighbors()
        seen, stack = {0}, [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n_vertices

    def cut(self, bits: int) -> int:
        """Number of edges crossing the bipartition encoded by ``bits``."""
        return sum(((bits >> u) ^ (bits >> v)) & 1 for u, v in self.edges)

    def to_edgelist(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in sorted(self.edges))

    @classmethod
    def from_edgelist(cls, text: str, n_vertices: int | None = None) -> Graph:
        edges = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                u, v = line.split()
                edges.append((int(u), int(v)))
        if n_vertices is None:
            n_vertices = 1 + max((max(e) for e in edges), default=-1)
        return cls.from_edges(n_vertices, edges)


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, combinations(range(n), 2))


# -- canonical labeling ------------------------------------------------------
# Works on edge multisets so the corpus generator can pass through cubic
# multigraphs; parallel edges count with multiplicity during refinement.

Edges = tuple[tuple[int, int], ...]


def _refine(adj: list[list[int]], cells: list[list[int]]) -> list[list[int]]:
    """Coarsest equitable refinement; split cells are ordered by signature."""
    while True:
        cell_of = {}
        for i, cell in enumerate(cells):
            for v in cell:
                cell_of[v] = i
        new: list[list[int]] = []
        for cell in cells:
            if len(cell) == 1:
                new.append(cell)
                continue
            groups: dict[tuple, list[int]] = {}
            for v in cell:
                sig = [0] * len(cells)
                for w in adj[v]:
                    sig[cell_of[w]] += 1
                groups.setdefault(tuple(sig), []).append(v)
            new.extend(groups[s] for s in sorted(groups))
        if len(new) == len(cells):
            return new
        cells = new


def _canonical_edges(n: int, edges: Edges) -> Edges:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    best: list = [None]

    def search(cells: list[list[int]]):
        cells = _refine(adj, cells)
        for i, cell in enumerate(cells):
            if len(cell) > 1:
                break
        else:
            pos = {cell[0]: k for k, cell in enumerate(cells)}
            cert = tuple(sorted((min(pos[u], pos[v]), max(pos[u], pos[v])) for u, v in edges))
            if best[0] is None or cert < best[0]:
                best[0] = cert
            return
        for v in cell:
            rest = [w for w in cell if w != v]
            search(cells[:i] + [[v], rest] + cells[i + 1:])

    by_deg: dict[int, list[int]] = {}
    for v in range(n):
        by_deg.setdefault(len(adj[v]), []).append(v)
    search([by_deg[d] for d in sorted(by_deg)])
    return best[0] or ()


def canonical_form(g: Graph) -> Edges:
    """Lexicographically smallest relabeled edge list over the search tree.

    Individualization-refinement: only labelings compatible with the
    equitable partitions are visited, and all of them are, so the minimum is
    an isomorphism invariant.
    """
    return _canonical_edges(g.n_vertices, tuple(sorted(g.edges)))


def are_isomorphic(a: Graph, b: Graph) -> bool:
    return a.n_vertices == b.n_vertices and canonical_form(a) == canonical_form(b)


# -- cubic corpus --------------------------------------------------------------


def _insertions(n: int, edges: Edges):
    """Subdivide two edge slots (possibly the same edge twice) and join the new vertices."""
    a, b = n, n + 1
    for i in range(len(edges)):
        for j in range(i, len(edges)):
            rest = list(edges[:i] + edges[i + 1:j] + edges[j + 1:]) if i != j else list(edges[:i] + edges[i + 1:])
            (u1, v1), (u2, v2) = edges[i], edges[j]
            if i == j:
                rest += [(u1, a), (a, b), (a, b), (b, v1)]
            else:
                rest += [(u1, a), (v1, a), (u2, b), (v2, b), (a, b)]
            yield tuple(sorted((min(u, v), max(u, v)) for u, v in rest))


def _defect(edges: Edges) -> int:
    """Loops plus surplus parallel edges; one insertion removes at most two."""
    return len(edges) - len(set(edges)) + sum(1 for u, v in edges if u == v)


def _cubic_multigraphs(n: int, budget: int) -> set[Edges]:
    """Connected cubic multigraphs on n vertices with defect at most ``budget``."""
    if n == 2:
        theta = ((0, 1),) * 3
        dumbbell = ((0, 0), (0, 1), (1, 1))
        return {g for g in (theta, dumbbell) if _defect(g) <= budget}
    found: set[Edges] = set()
    for parent in _cubic_multigraphs(n - 2, budget + 2):
        for child in _insertions(n - 2, parent):
            if _defect(child) <= budget:
                found.add(_canonical_edges(n, child))
    return found


_CUBIC_CACHE: dict[int, list[Graph]] = {}


def enumerate_cubic_graphs(n: int) -> list[Graph]:
    """One representative per isomorphism class of connected simple cubic graphs.

    Every connected cubic multigraph arises from the 2-vertex theta or
    dumbbell graph by repeatedly subdividing two edges (loops included) and
    joining the new vertices. The corpus is grown through multigraphs,
    pruned by how many parallel edges and loops can still be removed, and
    deduplicated by canonical form. Graphs come back in canonical labeling,
    sorted by canonical form.
    """
    if n % 2 or not 4 <= n <= 12:
        raise ValueError(f"cubic corpus needs even n in [4, 12], got {n}")
    if n not in _CUBIC_CACHE:
        simple = sorted(_cubic_multigraphs(n, 0))
        _CUBIC_CACHE[n] = [Graph.from_edges(n, e) for e in simple]
    return list(_CUBIC_CACHE[n])


@dataclass(frozen=True)
class InstanceSplit:
    train: list[Graph]
    test: list[Graph]
    seed: int


def split_instances(graphs: list[Graph], M: int, K: int, seed: int) -> InstanceSplit:
    if M < 0 or K < 0 or M + K > len(graphs):
        raise ValueError(f"cannot split {len(graphs)} graphs into {M} train + {K} test")
    order = np.random.default_rng(seed).permutation(len(graphs))
    train = [graphs[i] for i in order[:M]]
    test = [graphs[i] for i in order[M:M + K]]
    return InstanceSplit(train, test, seed)


def save_corpus(graphs: list[Graph], directory: Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, g in enumerate(graphs):
        path = directory / f"cubic_n{g.n_vertices}_{k:03d}.edges"
        path.write_text(g.to_edgelist())
        paths.append(path)
    return paths
