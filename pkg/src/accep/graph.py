"""Incidence matrix and fundamental cycle basis of the AC network."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from accep.netmodel import NetworkCase


def build_incidence(case: NetworkCase) -> sp.csc_matrix:
    """Bus x AC-branch incidence, +1 at the from-bus and -1 at the to-bus."""
    idx = case.bus_index()
    L = len(case.ac_branches)
    rows = np.empty(2 * L, dtype=int)
    cols = np.repeat(np.arange(L), 2)
    vals = np.tile([1.0, -1.0], L)
    for j, br in enumerate(case.ac_branches):
        rows[2 * j] = idx[br.from_bus]
        rows[2 * j + 1] = idx[br.to_bus]
    return sp.csc_matrix((vals, (rows, cols)), shape=(len(case.buses), L))


@dataclass(frozen=True)
class CycleBasis:
    cycles: tuple[tuple[int, ...], ...]  # branch indices per cycle
    matrix: sp.csc_matrix  # branches x cycles, entries in {-1, 0, +1}

    def __len__(self) -> int:
        return len(self.cycles)


def build_cycle_basis(case: NetworkCase) -> CycleBasis:
    """Fundamental cycles of a BFS spanning forest.

    The forest is grown from the lowest bus index of each component,
    visiting incident branches in branch order, so the basis is
    reproducible.  Each chord closes one cycle, oriented along the chord.
    """
    idx = case.bus_index()
    n = len(case.buses)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    ends = []
    for j, br in enumerate(case.ac_branches):
        f, t = idx[br.from_bus], idx[br.to_bus]
        ends.append((f, t))
        adj[f].append((j, t))
        adj[t].append((j, f))

    parent = [-1] * n
    parent_branch = [-1] * n
    depth = [-1] * n
    in_tree = np.zeros(len(ends), dtype=bool)
    for root in range(n):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for j, v in sorted(adj[u]):
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    parent[v] = u
                    parent_branch[v] = j
                    in_tree[j] = True
                    queue.append(v)

    rows, cols, vals = [], [], []
    cycles = []
    for j, (f, t) in enumerate(ends):
        if in_tree[j]:
            continue
        c = len(cycles)
        # walk chord f->t, then tree path t -> ... -> f
        entries = {j: 1.0}
        a, b = t, f
        up_a, up_b = [], []
        while a != b:
            if depth[a] >= depth[b]:
                up_a.append(a)
                a = parent[a]
            else:
                up_b.append(b)
                b = parent[b]
        # from t up to the meeting point: traverse child -> parent
        for node in up_a:
            k = parent_branch[node]
            entries[k] = 1.0 if ends[k][0] == node else -1.0
        # from the meeting point down to f: traverse parent -> child
        for node in up_b:
            k = parent_branch[node]
            entries[k] = 1.0 if ends[k][1] == node else -1.0
        for k, v in sorted(entries.items()):
            rows.append(k)
            cols.append(c)
            vals.append(v)
        cycles.append(tuple(sorted(entries)))
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(len(ends), len(cycles)))
    return CycleBasis(tuple(cycles), mat)
