"""Level-set percolation diagnostics on the torus.

The uniqueness criterion asks whether {x : q^T(x) <= alpha} percolates
from below; on a finite torus the surrogate is a wrap-around (spanning)
cluster.  Components are tracked with a union-find whose merge records
carry unwrapped displacement vectors, so a cluster spans exactly when
some union closes a loop with nonzero winding.
"""

from dataclasses import dataclass

import numpy as np

from pamlab.environments import EnvTrace
from pamlab.lattice import FieldSnapshot, neighbor_table


@dataclass(frozen=True)
class ComponentReport:
    """Connected components of one level set {x : q(x) <= alpha}."""

    alpha: float
    sizes: tuple
    largest_fraction: float
    spanning: bool
    n_components: int


class _WindingUnionFind:
    """Union-find over torus sites with per-node displacement to parent.

    Displacements live in unwrapped Z^d coordinates; a merge of two sites
    already in one component whose relative displacement disagrees with
    the edge vector has closed a loop around the torus.
    """

    def __init__(self, n: int, d: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.offset = np.zeros((n, d), dtype=np.int64)
        self.spanning = np.zeros(n, dtype=bool)
        self.active = np.zeros(n, dtype=bool)

    def find(self, i: int):
        """Root of i and displacement of i relative to the root."""
        path = []
        while self.parent[i] != i:
            path.append(i)
            i = self.parent[i]
        root = i
        # path compression, re-accumulating offsets from the top down
        for node in reversed(path):
            self.offset[node] += self.offset[self.parent[node]]
            self.parent[node] = root
        return root, None

    def union(self, a: int, b: int, delta):
        """Join the components of a and b along an edge a -> b with
        unwrapped displacement ``delta``."""
        ra, _ = self.find(a)
        rb, _ = self.find(b)
        off_a = self.offset[a]
        off_b = self.offset[b]
        if ra == rb:
            if not np.array_equal(off_a + delta, off_b):
                self.spanning[ra] = True
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
            off_a, off_b = off_b, off_a
            delta = -np.asarray(delta)
        # attach rb under ra: offset of rb must satisfy off_b' = off_a + delta
        self.parent[rb] = ra
        self.offset[rb] = off_a + delta - off_b
        self.size[ra] += self.size[rb]
        self.spanning[ra] |= self.spanning[rb]


def _edge_deltas(d: int) -> np.ndarray:
    """Unwrapped displacement per neighbor-table column (axis-major, +1/-1)."""
    deltas = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        deltas[2 * axis, axis] = 1
        deltas[2 * axis + 1, axis] = -1
    return deltas


def _activate(uf: _WindingUnionFind, site: int, table: np.ndarray, deltas: np.ndarray):
    uf.active[site] = True
    for col in range(table.shape[1]):
        nb = int(table[site, col])
        if uf.active[nb]:
            uf.union(site, nb, deltas[col])


def _report(uf: _WindingUnionFind, alpha: float, n_total: int) -> ComponentReport:
    active_sites = np.flatnonzero(uf.active)
    roots = {}
    spanning = False
    for s in active_sites:
        r, _ = uf.find(int(s))
        roots[r] = roots.get(r, 0) + 1
        if uf.spanning[r]:
            spanning = True
    sizes = tuple(sorted(roots.values(), reverse=True))
    largest = sizes[0] / n_total if sizes else 0.0
    return ComponentReport(
        alpha=float(alpha),
        sizes=sizes,
        largest_fraction=float(largest),
        spanning=spanning,
        n_components=len(sizes),
    )


def level_set_components(snapshot: FieldSnapshot, alpha: float) -> ComponentReport:
    """Components of {x : snapshot(x) <= alpha} under torus adjacency."""
    lattice = snapshot.lattice
    table = neighbor_table(lattice)
    deltas = _edge_deltas(lattice.d)
    uf = _WindingUnionFind(lattice.n_sites, lattice.d)
    for site in np.flatnonzero(snapshot.values <= alpha):
        _activate(uf, int(site), table, deltas)
    return _report(uf, alpha, lattice.n_sites)


def percolation_sweep(snapshot: FieldSnapshot, alpha_grid):
    """One incremental pass over a sorted alpha grid.

    Sites are activated in value order, so the whole profile costs a
    single near-linear union-find sweep.  Returns (reports, alpha_star)
    where alpha_star is the exact site value at which a spanning cluster
    first appears (None if it never does).
    """
    alpha_grid = sorted(float(a) for a in alpha_grid)
    lattice = snapshot.lattice
    table = neighbor_table(lattice)
    deltas = _edge_deltas(lattice.d)
    uf = _WindingUnionFind(lattice.n_sites, lattice.d)
    order = np.argsort(snapshot.values, kind="stable")
    values = snapshot.values[order]
    alpha_star = None
    reports = []
    pos = 0
    for alpha in alpha_grid:
        while pos < len(order) and values[pos] <= alpha:
            site = int(order[pos])
            _activate(uf, site, table, deltas)
            if alpha_star is None and uf.spanning[uf.find(site)[0]]:
                alpha_star = float(values[pos])
            pos += 1
        reports.append(_report(uf, alpha, lattice.n_sites))
    return reports, alpha_star


def percolation_profile(trace: EnvTrace, T: float, alpha_grid):
    """Level-set profile of q^T(x) = sup_{0<=t<=T} xi(x,t).

    Returns (reports, alpha_star); alpha_star is the finite-size proxy
    for the percolation-from-below threshold.
    """
    if not 0.0 < T <= trace.horizon:
        raise ValueError(f"T={T} outside (0, {trace.horizon}]")
    return percolation_sweep(trace.sup_field(T), alpha_grid)
