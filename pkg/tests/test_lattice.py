import numpy as np
import pytest
from hypothesis import given, strategies as st

from pamlab.lattice import (
    FieldSnapshot, LatticeTorus, laplacian_apply, laplacian_values,
    neighbor_table, neighbors,
)


def test_rejects_degenerate_geometry():
    with pytest.raises(ValueError):
        LatticeTorus(0, 8)
    with pytest.raises(ValueError):
        LatticeTorus(1, 2)


@given(st.integers(1, 3), st.integers(3, 8), st.integers(0, 10_000))
def test_index_coords_round_trip(d, L, raw):
    lat = LatticeTorus(d, L)
    idx = raw % lat.n_sites
    assert lat.site_index(lat.site_coords(idx)) == idx


def test_wrap_is_canonical():
    lat = LatticeTorus(2, 5)
    assert lat.wrap((-1, 7)) == (4, 2)
    assert lat.site_index((-1, 7)) == lat.site_index((4, 2))


def test_neighbors_distinct_and_at_distance_one():
    for d, L in [(1, 3), (2, 4), (3, 3)]:
        lat = LatticeTorus(d, L)
        nbs = neighbors(lat, (0,) * d)
        assert len(nbs) == 2 * d
        assert len(set(nbs)) == 2 * d
        for nb in nbs:
            assert lat.torus_distance((0,) * d, nb) == 1


def test_neighbor_table_matches_neighbors():
    lat = LatticeTorus(2, 4)
    table = neighbor_table(lat)
    for i in range(lat.n_sites):
        from_table = sorted(int(v) for v in table[i])
        from_coords = sorted(lat.site_index(c) for c in neighbors(lat, lat.site_coords(i)))
        assert from_table == from_coords


def test_torus_distance_wraps():
    lat = LatticeTorus(1, 8)
    assert lat.torus_distance((0,), (7,)) == 1
    assert lat.torus_distance((1,), (5,)) == 4


def test_laplacian_of_constant_is_zero():
    lat = LatticeTorus(2, 5)
    snap = FieldSnapshot(lat, np.full(lat.n_sites, 3.7))
    assert np.allclose(laplacian_apply(snap).values, 0.0)


@given(st.integers(1, 2), st.integers(3, 6), st.integers(0, 2**32 - 1))
def test_laplacian_total_mass_is_zero(d, L, seed):
    lat = LatticeTorus(d, L)
    vals = np.random.default_rng(seed).normal(size=lat.n_sites)
    assert abs(laplacian_values(lat, vals).sum()) < 1e-9 * max(1.0, np.abs(vals).sum())


def test_laplacian_matches_direct_neighbor_sum():
    lat = LatticeTorus(2, 4)
    vals = np.random.default_rng(3).normal(size=lat.n_sites)
    out = laplacian_values(lat, vals)
    for i in range(lat.n_sites):
        direct = sum(
            vals[lat.site_index(nb)] - vals[i]
            for nb in neighbors(lat, lat.site_coords(i))
        )
        assert out[i] == pytest.approx(direct, abs=1e-12)


def test_snapshot_validates_shape_and_finiteness():
    lat = LatticeTorus(1, 4)
    with pytest.raises(ValueError):
        FieldSnapshot(lat, np.zeros(3))
    with pytest.raises(ValueError):
        FieldSnapshot(lat, np.array([0.0, np.inf, 0.0, 0.0]))
