"""Region adjacency graph and its normalized Laplacian."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .panels import NATIONAL, REGIONS


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class RegionGraph:
    vertices: tuple
    edges: tuple  # sorted (u, v) pairs, u < v by vertex order
    adjacency: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray

    def index(self, vertex):
        return self.vertices.index(vertex)

    def reorder(self, order):
        """Same graph with vertices permuted to ``order``."""
        pairs = [(u, v) for u, v in self.edges]
        return _assemble(tuple(order), pairs)


def _assemble(vertices, pairs):
    n = len(vertices)
    idx = {v: i for i, v in enumerate(vertices)}
    a = np.zeros((n, n))
    for u, v in pairs:
        a[idx[u], idx[v]] = a[idx[v], idx[u]] = 1.0
    deg = a.sum(axis=1)
    if (deg == 0).any():
        raise GraphError("isolated vertex; normalized Laplacian undefined")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(n) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    lap = 0.5 * (lap + lap.T)
    edges = tuple(sorted((min(u, v, key=idx.get), max(u, v, key=idx.get)) for u, v in pairs))
    for arr in (a, deg, lap):
        arr.setflags(write=False)
    return RegionGraph(vertices, edges, a, deg, lap)


def build_region_graph(edge_list, vertices=REGIONS, national=NATIONAL) -> RegionGraph:
    """Graph over ``vertices`` from border edges among the non-national vertices.

    The national vertex is joined to every other vertex. Self-loops, unknown
    vertices and repeated edges (in either direction) are rejected.
    """
    vertices = tuple(vertices)
    if national not in vertices:
        raise GraphError(f"national vertex {national!r} missing")
    seen = set()
    pairs = []
    for u, v in edge_list:
        for x in (u, v):
            if x not in vertices:
                raise GraphError(f"unknown vertex {x!r}")
        if u == v:
            raise GraphError(f"self-loop on {u!r}")
        key = frozenset((u, v))
        if key in seen:
            raise GraphError(f"duplicate edge {u} {v}")
        if national in key:
            raise GraphError(f"edge {u} {v}: national edges are added automatically")
        seen.add(key)
        pairs.append((u, v))
    pairs += [(national, v) for v in vertices if v != national]
    return _assemble(vertices, pairs)


def parse_edge_list(text):
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected 'u v', got {line!r}")
        edges.append((parts[0], parts[1]))
    return edges


def load_edge_list(path=None):
    """Edge list from ``path``, or the bundled HHS border list."""
    if path is None:
        text = resources.files("episteer.data").joinpath("hhs_edges.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_edge_list(text)


def write_edge_list(graph: RegionGraph, path, national=NATIONAL):
    lines = [f"{u} {v}" for u, v in graph.edges if national not in (u, v)]
    Path(path).write_text("\n".join(lines) + "\n")


def default_graph() -> RegionGraph:
    return build_region_graph(load_edge_list())
