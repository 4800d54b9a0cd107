import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acfrelay.constellation import collision_classes
from acfrelay.direct import (
    EMPTY,
    algorithm1,
    complete,
    direct_map,
    enumerate_constraints,
    seed_array,
)
from acfrelay.mapgen import NotSingularError
from oracles import QPSK, is_latin, naive_cluster_distance

NON_UNIT = [0.5 + 0.5j, -0.5 + 0.5j, -0.5 - 0.5j, 0.5 - 0.5j, 1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]

# single-use constraints listed for the two worked examples
SINGLE_USE = {
    -0.5 + 0.5j: [{(0, 0), (1, 3)}, {(1, 1), (3, 2)}, {(0, 1), (2, 2)}, {(2, 0), (3, 3)}],
    -1 + 1j: [{(0, 0), (3, 2)}, {(0, 1), (3, 3)}, {(1, 1), (2, 0)}, {(1, 3), (2, 2)}],
}


@pytest.mark.parametrize("h", list(SINGLE_USE))
def test_single_use_classes_match_examples(sset2, h):
    colliding = [set(c) for c in collision_classes(sset2, h) if len(c) > 1]
    assert sorted(map(sorted, colliding)) == sorted(map(sorted, SINGLE_USE[h]))


@pytest.mark.parametrize("h", NON_UNIT)
def test_eighty_constraints(sset2, fades2, h):
    cs = enumerate_constraints(sset2, h, fades2)
    assert len(cs) == 80
    assert cs.sizes() == {4: 16, 2: 64}


def test_first_size_four_constraint(sset2, fades2):
    cs = enumerate_constraints(sset2, -0.5 + 0.5j, fades2)
    hit = [c for c in cs.constraints if ((0, 0), (1, 3)) in c.members]
    assert len(hit) == 1
    assert set(hit[0].members) == {((0, 0), (1, 3)), ((1, 3), (0, 0)), ((0, 0), (0, 0)), ((1, 3), (1, 3))}


@pytest.mark.parametrize("h", NON_UNIT)
def test_members_collide_in_both_uses(sset2, fades2, h):
    p = np.array(QPSK)
    for c in enumerate_constraints(sset2, h, fades2).constraints:
        vals = {(round(complex(p[a1] + h * p[b1]).real, 9), round(complex(p[a1] + h * p[b1]).imag, 9),
                 round(complex(p[a2] + h * p[b2]).real, 9), round(complex(p[a2] + h * p[b2]).imag, 9))
                for (a1, b1), (a2, b2) in c.members}
        assert len(vals) == 1


def test_unit_circle_constraints_and_fallback(sset2, fades2):
    cs = enumerate_constraints(sset2, 1j, fades2)
    assert len(cs) == 65
    res = direct_map(sset2, 1j, fades2)
    assert res.method == "cartesian"
    assert res.square.label_count == 16


def test_non_singular(sset2, fades2):
    with pytest.raises(NotSingularError):
        enumerate_constraints(sset2, 0.2 + 0.7j, fades2)


@pytest.mark.parametrize("h,bound", [(-0.5 + 0.5j, 17), (-1 + 1j, 18)])
def test_seed_label_bound(sset2, fades2, h, bound):
    seed = seed_array(enumerate_constraints(sset2, h, fades2))
    assert seed.label_count <= bound
    assert seed.label_count <= seed.first_fit_count


@pytest.mark.parametrize("h", NON_UNIT)
def test_seed_is_partial_latin(sset2, fades2, h):
    cs = enumerate_constraints(sset2, h, fades2)
    seed = seed_array(cs)
    g = seed.cells
    for line in list(g) + list(g.T):
        filled = line[line != EMPTY]
        assert len(set(filled.tolist())) == filled.size
    for c in cs.constraints:
        assert len({int(g[r, col]) for r, col in c.cells(4)}) == 1


@pytest.mark.parametrize("h", NON_UNIT)
def test_direct_map(sset2, fades2, h):
    res = direct_map(sset2, h, fades2)
    seed = seed_array(res.constraints)
    sq = res.square
    assert res.method == "direct"
    assert res.within_budget
    assert sq.label_count <= 20
    assert is_latin(sq.cells)
    filled = seed.cells != EMPTY
    assert np.array_equal(sq.cells[filled], seed.cells[filled])
    assert naive_cluster_distance(sq.cells, QPSK, h) > 1e-6


def test_direct_map_deterministic(sset2, fades2):
    a = direct_map(sset2, -1 + 1j, fades2).square
    b = direct_map(sset2, -1 + 1j, fades2).square
    assert a == b


def test_algorithm1_row_major_smallest_label():
    g = algorithm1(np.full((3, 3), EMPTY))
    assert g.tolist() == [[0, 1, 2], [1, 0, 3], [2, 3, 0]]


@st.composite
def partial_latin(draw):
    n = draw(st.integers(2, 7))
    rows = draw(st.permutations(range(n)))
    cols = draw(st.permutations(range(n)))
    full = np.array([[(rows[i] + cols[j]) % n for j in range(n)] for i in range(n)])
    mask = np.array(draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))).reshape(n, n)
    return np.where(mask, full, EMPTY)


@settings(max_examples=60, deadline=None)
@given(partial_latin())
def test_algorithm1_extends_any_partial(p):
    g = algorithm1(p)
    assert is_latin(g)
    assert np.array_equal(g[p != EMPTY], p[p != EMPTY])
    assert (g >= 0).all()


def test_backtracking_recovers_budget():
    p = np.array([[-1, -1, -1, -1], [3, -1, -1, -1], [-1, -1, -1, 0], [-1, 1, 2, -1]])
    assert algorithm1(p).max() + 1 == 6
    res = complete(p, budget=4)
    assert res.greedy_count == 6
    assert res.within_budget
    assert res.square.label_count == 4
    assert is_latin(res.square.cells)


def test_infeasible_budget_reports_greedy():
    p = np.array([[0, 1], [EMPTY, EMPTY]])
    res = complete(p, budget=1)
    assert not res.within_budget
    assert res.square.label_count == 2


def test_constraint_set_json(sset2, fades2):
    cs = enumerate_constraints(sset2, 1 + 1j, fades2)
    d = json.loads(json.dumps(cs.to_dict()))
    assert d["format_version"] == 1
    assert len(d["constraints"]) == 80
    assert d["constraints"][0]["kind"] == "pair-product"
