"""Undirected graphs, the neighbourhood/region algebra and the greedy independent set."""
import json
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, Iterator, Mapping, Optional, Tuple

import networkx as nx
import numpy as np

from .core import RegionError, as_generator

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Region:
    """An ordered set of vertex ids, stored ascending so equality is canonical."""

    members: Tuple[int, ...] = ()

    def __post_init__(self):
        members = tuple(sorted({int(v) for v in self.members}))
        if members and members[0] < 0:
            raise RegionError(f"Region members must be non-negative, got {members[0]}")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, *vertices) -> "Region":
        if len(vertices) == 1 and not isinstance(vertices[0], (int, np.integer)):
            return cls(tuple(vertices[0]))
        return cls(tuple(vertices))

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, vertex) -> bool:
        return int(vertex) in self._set

    def __or__(self, other: "Region") -> "Region":
        return Region(self.members + tuple(other))

    def __sub__(self, other: "Region") -> "Region":
        other_set = set(other)
        return Region(tuple(v for v in self.members if v not in other_set))

    def __and__(self, other: "Region") -> "Region":
        other_set = set(other)
        return Region(tuple(v for v in self.members if v in other_set))

    def __le__(self, other: "Region") -> bool:
        return self._set <= set(other)

    def issubset(self, other: Iterable[int]) -> bool:
        return self._set <= set(other)

    def isdisjoint(self, other: Iterable[int]) -> bool:
        return self._set.isdisjoint(other)

    @property
    def _set(self) -> FrozenSet[int]:
        return frozenset(self.members)

    def index(self) -> np.ndarray:
        return np.asarray(self.members, dtype=np.int64)

    def __repr__(self) -> str:
        return f"Region({list(self.members)})"


@dataclass(frozen=True)
class PairwiseGraph:
    """Vertices ``0..n-1`` and an undirected edge family without self-loops."""

    n: int
    edges: Tuple[Edge, ...] = ()
    _adjacency: Tuple[FrozenSet[int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"Vertex count must be non-negative, got {self.n}")
        normalized = set()
        for edge in self.edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise ValueError(f"Self-loop on vertex {i} is not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"Edge ({i}, {j}) has an endpoint outside 0..{self.n - 1}")
            key = (min(i, j), max(i, j))
            if key in normalized:
                raise ValueError(f"Duplicate edge {key}")
            normalized.add(key)
        edges = tuple(sorted(normalized))
        adjacency = [set() for _ in range(self.n)]
        for i, j in edges:
            adjacency[i].add(j)
            adjacency[j].add(i)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_adjacency", tuple(frozenset(a) for a in adjacency))

    def neighbors(self, i: int) -> FrozenSet[int]:
        return self._adjacency[i]

    def degree(self, i: int) -> int:
        return len(self._adjacency[i])

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._adjacency[i]

    @cached_property
    def _edge_positions(self) -> Dict[Edge, int]:
        return {edge: pos for pos, edge in enumerate(self.edges)}

    def edge_index(self, i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        try:
            return self._edge_positions[key]
        except KeyError:
            raise RegionError(f"{{{i}, {j}}} is not an edge of the graph")

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Edges as an int array of shape (|E|, 2)."""
        return np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    def region(self, vertices: Iterable[int]) -> Region:
        """Build a region and check that every member is a vertex of this graph."""
        region = Region(tuple(vertices))
        if region.members and region.members[-1] >= self.n:
            raise RegionError(f"Vertex {region.members[-1]} is outside 0..{self.n - 1}")
        return region

    @property
    def vertices(self) -> Region:
        return Region(tuple(range(self.n)))

    def is_independent(self, region: Iterable[int]) -> bool:
        members = list(region)
        return not any(self.has_edge(i, j) for i, j in combinations(members, 2))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(edge) for edge in self.edges]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PairwiseGraph":
        try:
            n = int(data["n"])
            edges = [(int(e[0]), int(e[1])) for e in data.get("edges", [])]
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise ValueError(f"Malformed graph document: {e!r}")
        return cls(n, tuple(edges))


def grid_graph(rows: int, cols: int) -> PairwiseGraph:
    """Square lattice with row-major labels; vertex ``r*cols + c`` sits at (r, c)."""
    if rows < 1 or cols < 1:
        raise ValueError(f"Grid dimensions must be positive, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return PairwiseGraph(rows * cols, tuple(edges))


def random_graph(n: int, p: float, rng=None) -> PairwiseGraph:
    """Erdos-Renyi G(n, p): each unordered pair is an edge independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Connection probability must lie in [0, 1], got {p}")
    if n < 1:
        raise ValueError(f"Vertex count must be positive, got {n}")
    seed = int(as_generator(rng).integers(2 ** 32))
    g = nx.gnp_random_graph(n, p, seed=seed)
    return PairwiseGraph(n, tuple(g.edges()))


def complete_graph(n: int) -> PairwiseGraph:
    return PairwiseGraph(n, tuple(combinations(range(n), 2)))


def path_graph(n: int) -> PairwiseGraph:
    return PairwiseGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def edgeless_graph(n: int) -> PairwiseGraph:
    return PairwiseGraph(n, ())


def graph_from_spec(spec: str, seed: Optional[int] = None) -> PairwiseGraph:
    """Build a graph from a short spec.

    Accepted forms: ``grid:4x5``, ``random:20:0.2``, ``complete:20``,
    ``path:5``, ``edgeless:20`` or a path to a graph or model JSON file.
    """
    kind, _, rest = spec.partition(":")
    try:
        if kind == "grid":
            rows, cols = rest.lower().split("x")
            return grid_graph(int(rows), int(cols))
        if kind == "random":
            n, p = rest.split(":")
            return random_graph(int(n), float(p), seed)
        if kind == "complete":
            return complete_graph(int(rest))
        if kind == "path":
            return path_graph(int(rest))
        if kind == "edgeless":
            return edgeless_graph(int(rest))
    except ValueError as e:
        raise ValueError(f"Malformed graph spec {spec!r}: {e}")
    if os.path.exists(spec):
        with open(spec, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"Invalid JSON in {spec}: {e}")
        if not isinstance(data, Mapping):
            raise ValueError(f"Graph file {spec} must hold a JSON object")
        return PairwiseGraph.from_dict(data)
    raise ValueError(
        f"Unknown graph spec {spec!r}. Use grid:RxC, random:N:P, complete:N, path:N, "
        f"edgeless:N or a JSON file."
    )


def boundary(g: PairwiseGraph, a: Region) -> Region:
    """Vertices outside ``a`` adjacent to at least one member of ``a``."""
    inside = set(a)
    touched = set()
    for i in a:
        touched.update(g.neighbors(i))
    return Region(tuple(touched - inside))


def closed_region_k(g: PairwiseGraph, t: Region, k: int) -> Region:
    """Union of the neighbourhood shells N_0(t) .. N_k(t)."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    region = t
    for _ in range(k):
        shell = boundary(g, region)
        if not shell:
            break
        region = region | shell
    return region


def neighborhood_k(g: PairwiseGraph, t: Region, k: int) -> Region:
    """The k-th shell around ``t``: vertices at graph distance exactly k from ``t``."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k == 0:
        return t
    return boundary(g, closed_region_k(g, t, k - 1))


def greedy_independent_set(
    g: PairwiseGraph,
    candidates: Region,
    tie_weight: Optional[Mapping[int, float]] = None,
) -> Region:
    """Greedy minimum-degree independent set inside the subgraph induced by ``candidates``.

    Repeatedly picks a vertex of minimum degree in the shrinking candidate
    subgraph and deletes it together with its neighbours, until no candidate
    remains. Ties at a nonzero minimum degree go to the largest ``tie_weight``;
    any tie left goes to the smallest vertex id.
    """
    tie_weight = tie_weight or {}
    remaining = {v: set(g.neighbors(v)) & set(candidates) for v in candidates}
    chosen = []
    while remaining:
        degrees = {v: len(nbrs) for v, nbrs in remaining.items()}
        low = min(degrees.values())
        ties = [v for v, d in degrees.items() if d == low]
        if low > 0:
            pick = min(ties, key=lambda v: (-tie_weight.get(v, 0.0), v))
        else:
            pick = min(ties)
        chosen.append(pick)
        removed = remaining[pick] | {pick}
        remaining = {v: nbrs - removed for v, nbrs in remaining.items() if v not in removed}
    return Region(tuple(chosen))
