"""Finite d-dimensional torus geometry and the discrete Laplacian.

The torus stands in for Z^d: every site has exactly 2d neighbors under
periodic wrap, and the Laplacian is the nearest-neighbor difference sum
Lap(f)(x) = sum_{|y-x|=1} [f(y) - f(x)].
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class LatticeTorus:
    """Periodic lattice with ``L`` sites per axis in ``d`` dimensions.

    ``L >= 3`` is required so that the 2d neighbors of a site are distinct
    (L = 2 would create double edges).
    """

    d: int
    L: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.L < 3:
            raise ValueError(f"side must be >= 3 to avoid double edges, got {self.L}")

    @property
    def n_sites(self) -> int:
        return self.L ** self.d

    def wrap(self, coords):
        """Canonical (wrapped) coordinates."""
        return tuple(int(c) % self.L for c in coords)

    def site_index(self, coords) -> int:
        """Row-major flat index of a site given by coordinates."""
        idx = 0
        for c in coords:
            idx = idx * self.L + (int(c) % self.L)
        return idx

    def site_coords(self, index: int):
        """Inverse of :meth:`site_index`."""
        coords = []
        for _ in range(self.d):
            coords.append(index % self.L)
            index //= self.L
        return tuple(reversed(coords))

    def torus_distance(self, x, y) -> int:
        """l1 distance on the torus between coordinate tuples."""
        total = 0
        for a, b in zip(x, y):
            diff = abs((int(a) - int(b)) % self.L)
            total += min(diff, self.L - diff)
        return total


@lru_cache(maxsize=32)
def _neighbor_table_cached(d: int, L: int) -> np.ndarray:
    lattice = LatticeTorus(d, L)
    n = lattice.n_sites
    table = np.empty((n, 2 * d), dtype=np.int64)
    for i in range(n):
        coords = lattice.site_coords(i)
        col = 0
        for axis in range(d):
            for delta in (+1, -1):
                nb = list(coords)
                nb[axis] = (nb[axis] + delta) % L
                table[i, col] = lattice.site_index(nb)
                col += 1
    return table


def neighbor_table(lattice: LatticeTorus) -> np.ndarray:
    """(n_sites, 2d) array of flat neighbor indices; cached per geometry."""
    return _neighbor_table_cached(lattice.d, lattice.L)


def neighbors(lattice: LatticeTorus, x):
    """The 2d distinct neighbors of site ``x`` (coordinate tuple)."""
    x = lattice.wrap(x)
    out = []
    for axis in range(lattice.d):
        for delta in (+1, -1):
            nb = list(x)
            nb[axis] = (nb[axis] + delta) % lattice.L
            out.append(tuple(nb))
    return out


@dataclass(frozen=True)
class FieldSnapshot:
    """A real value per site, flat row-major layout."""

    lattice: LatticeTorus
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.lattice.n_sites,):
            raise ValueError(
                f"expected {self.lattice.n_sites} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def value_at(self, coords) -> float:
        return float(self.values[self.lattice.site_index(coords)])


def laplacian_apply(snapshot: FieldSnapshot) -> FieldSnapshot:
    """Discrete Laplacian: out(x) = sum over neighbors y of [f(y) - f(x)]."""
    lattice = snapshot.lattice
    table = neighbor_table(lattice)
    out = snapshot.values[table].sum(axis=1) - 2 * lattice.d * snapshot.values
    return FieldSnapshot(lattice, out)


def laplacian_values(lattice: LatticeTorus, values: np.ndarray) -> np.ndarray:
    """Laplacian on a raw value array (no snapshot wrapping)."""
    table = neighbor_table(lattice)
    return values[table].sum(axis=1) - 2 * lattice.d * values
