import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acfrelay.mapgen import base_clustering, cartesian_product, rotate_map
from acfrelay.metrics import (
    FULL,
    SIMPLE,
    GridSpec,
    MapGeometry,
    choose_map,
    choose_maps,
    cluster_min_distance,
    decision_metric,
    effective_min_distance,
    map_distances,
    quantize_plane,
)
from oracles import QPSK, exhaustive_dmin, naive_cluster_distance, naive_simple_choice

coord = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def random_z(n, seed=7):
    rng = np.random.default_rng(seed)
    return rng.uniform(-2, 2, n) + 1j * rng.uniform(-2, 2, n)


def test_dmin_at_j_is_zero(sset2):
    assert effective_min_distance(sset2, 1j) == pytest.approx(0.0, abs=1e-12)


def test_dmin_at_two(sset2):
    assert effective_min_distance(sset2, 2) == pytest.approx(4.0)
    assert exhaustive_dmin(QPSK, 2) == pytest.approx(4.0)


@settings(max_examples=30, deadline=None)
@given(coord, coord)
def test_dmin_matches_exhaustive_scan(sset2, re, im):
    z = complex(re, im)
    assert effective_min_distance(sset2, z) == pytest.approx(exhaustive_dmin(QPSK, z), rel=1e-9, abs=1e-12)


def test_dmin_vectorized(sset2, fades2):
    z = np.concatenate([fades2.values, random_z(20)])
    out = effective_min_distance(sset2, z)
    assert out.shape == z.shape
    assert np.allclose(out[:12], 0.0, atol=1e-12)
    assert (out[12:] > 0).all()


@pytest.mark.parametrize("kind", ["cart_lib", "direct_lib"])
def test_cluster_distance_matches_naive(request, sset2, kind):
    lib = request.getfixturevalue(kind)
    zs = list(random_z(6)) + list(lib.fades.values[::3])
    for sq in lib.squares:
        fast = cluster_min_distance(sq, sset2, np.array(zs))
        slow = [naive_cluster_distance(sq.cells, QPSK, z) for z in zs]
        assert np.allclose(fast, slow, rtol=1e-9, atol=1e-12)


def test_base_map_distance_matches_naive(base_lib, sset2):
    z = random_z(5, seed=3)
    for sq in base_lib.squares:
        assert np.allclose(cluster_min_distance(sq, sset2, z), [naive_cluster_distance(sq.cells, QPSK, x) for x in z])


def test_cartesian_j_map(sset2, fades2):
    sq_j = cartesian_product(base_clustering(sset2, 1j, fades2))
    sq_1j = cartesian_product(base_clustering(sset2, 1 + 1j, fades2))
    assert cluster_min_distance(sq_j, sset2, 1j) > 0
    assert cluster_min_distance(sq_1j, sset2, 1j) == pytest.approx(0.0, abs=1e-12)


def test_rotated_geometry_matches_direct(cart_lib, sset2):
    z = random_z(10, seed=11)
    for sq in cart_lib.squares[::4]:
        geo = MapGeometry(sq, sset2)
        for k in range(1, 4):
            rot = geo.rotated(k, sset2)
            direct = MapGeometry(rotate_map(sq, k, sset2), sset2)
            assert np.array_equal(np.sort(rot.single), np.sort(direct.single))
            assert np.allclose(cluster_min_distance(None, sset2, z, geo=rot),
                               cluster_min_distance(None, sset2, z, geo=direct))


def test_residual_pairs_are_dominated(cart_lib, direct_lib, sset2):
    # every two-use-difference pair is dominated by a one-use pair for these maps
    for sq in cart_lib.squares + direct_lib.squares:
        assert MapGeometry(sq, sset2).residual.shape[0] == 0


def test_decision_metric(sset2):
    assert decision_metric(sset2, 1j, 0, 1, 1, 3) == pytest.approx(0.0, abs=1e-12)
    assert decision_metric(sset2, 2, 0, 0, 1, 0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        decision_metric(sset2, 1j, 2, 3, 2, 3)


@pytest.mark.parametrize("kind", ["cart_lib", "direct_lib"])
def test_simple_choice_matches_oracle(request, kind):
    lib = request.getfixturevalue(kind)
    z = 1.2 + 0.1j
    h, m = naive_simple_choice(QPSK, z)
    out = choose_map(lib, z, SIMPLE)
    assert out.chosen_fade.value == pytest.approx(h)
    assert out.metric_value == pytest.approx(m)
    full = choose_map(lib, z, FULL)
    d = map_distances(lib, [z])[0]
    assert d[full.index] == pytest.approx(d.max())
    assert d[out.index] == pytest.approx(d.max())
    assert full.index == out.index


@pytest.mark.parametrize("method", [FULL, SIMPLE])
def test_choice_at_j(cart_lib, method):
    out = choose_map(cart_lib, 1j, method)
    assert out.chosen_fade.value == 1j
    d = map_distances(cart_lib, [1j])[0]
    assert d[out.index] > 0


@pytest.mark.parametrize("method", [FULL, SIMPLE])
def test_choice_near_one(cart_lib, direct_lib, method):
    for lib in (cart_lib, direct_lib):
        assert choose_map(lib, 1 + 1e-3j, method).chosen_fade.value == 1


def test_tie_break_rules(cart_lib):
    z = np.array([1j, 1 + 1e-3j])
    i_fade, v_fade, t_fade = choose_maps(cart_lib, z, FULL, "fade")
    i_near, v_near, t_near = choose_maps(cart_lib, z, FULL, "nearest")
    i_lab, _, _ = choose_maps(cart_lib, z, FULL, "labels")
    assert t_fade.all() and t_near.all()
    assert np.allclose(v_fade, v_near)
    assert all(cart_lib.squares[i].label_count == 16 for i in i_lab)
    with pytest.raises(ValueError):
        choose_maps(cart_lib, z, FULL, "coin")
    with pytest.raises(ValueError):
        choose_maps(cart_lib, z, "other")


def test_grid_spec():
    g = GridSpec.parse("-2,2,-2,2,0.02")
    assert g.re.size == g.im.size == 201
    assert g.re[0] == -2 and g.re[-1] == 2
    for bad in ("1,2,3", "2,-2,-2,2,0.1", "-2,2,-2,2,0", "a,b,c,d,e"):
        with pytest.raises(ValueError):
            GridSpec.parse(bad)


def test_quantize_conjugation_symmetry(direct_lib):
    g = GridSpec(-2, 2, -2, 2, 0.05)
    conj = np.array([direct_lib.fades.index(np.conj(v)) for v in direct_lib.fades.values])
    for method in (FULL, SIMPLE):
        r = quantize_plane(direct_lib, g, method)
        flipped = r.index[::-1, :]
        ok = ~r.tie
        assert np.array_equal(conj[r.index][ok], flipped[ok])


def test_quantize_threads_agree(cart_lib):
    g = GridSpec(-1, 1, -1, 1, 0.02)
    a = quantize_plane(cart_lib, g, FULL, threads=1)
    b = quantize_plane(cart_lib, g, FULL, threads=3)
    assert np.array_equal(a.index, b.index) and np.array_equal(a.tie, b.tie)
    assert a.points().shape == a.index.shape
