"""Direct clustering: singularity-removal constraints, seeding and Latin completion."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from .constellation import SignalSet, collision_classes
from .fadestates import FadeLike, FadeState, SingularFadeSet, as_complex, enumerate_singular_fades
from .latin import LatinSquare, element_to_cell
from .mapgen import NotSingularError, base_clustering, cartesian_product

EMPTY = -1
DEFAULT_BUDGET = 20
NODE_CAP = 1_000_000

Quad = tuple[tuple[int, int], tuple[int, int]]


@dataclass(frozen=True)
class Constraint:
    """Quadruples that must share one cluster."""

    members: tuple[Quad, ...]
    kind: str  # "pair-product" or "pair-singleton"

    def cells(self, M: int) -> list[tuple[int, int]]:
        return [element_to_cell(q, M) for q in self.members]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "members": [[list(p) for p in q] for q in self.members]}


@dataclass(frozen=True)
class ConstraintSet:
    fade: FadeState
    M: int
    constraints: tuple[Constraint, ...]

    def __len__(self) -> int:
        return len(self.constraints)

    def sizes(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.constraints:
            out[len(c.members)] = out.get(len(c.members), 0) + 1
        return out

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "fade": self.fade.to_dict(),
            "constraints": [c.to_dict() for c in self.constraints],
        }


def enumerate_constraints(sset: SignalSet, h: FadeLike,
                          fades: SingularFadeSet | None = None) -> ConstraintSet:
    """Products of single-use collision classes that a map must keep together.

    With l_i the colliding classes (size >= 2) and m_k the singletons at h,
    the constraints are l_i x l_j, then l_i x m_k, then m_k x l_i.
    """
    fades = fades or enumerate_singular_fades(sset)
    idx = fades.index(h)
    if idx is None:
        raise NotSingularError(f"{as_complex(h)} is not a singular fade state")
    fade = fades.states[idx]
    cls = collision_classes(sset, fade.value)
    ls = [c for c in cls if len(c) > 1]
    ms = [c[0] for c in cls if len(c) == 1]
    out = []
    for li, lj in itertools.product(ls, ls):
        out.append(Constraint(tuple((p, q) for p in li for q in lj), "pair-product"))
    for li, m in itertools.product(ls, ms):
        out.append(Constraint(tuple((p, m) for p in li), "pair-singleton"))
    for li, m in itertools.product(ls, ms):
        out.append(Constraint(tuple((m, p) for p in li), "pair-singleton"))
    return ConstraintSet(fade, sset.M, tuple(out))


@dataclass(frozen=True)
class SeedResult:
    cells: np.ndarray  # EMPTY where unconstrained
    label_count: int
    first_fit_count: int


def _conflict_graph(cell_lists: list[list[tuple[int, int]]]) -> list[set[int]]:
    rows = [{r for r, _ in cl} for cl in cell_lists]
    cols = [{c for _, c in cl} for cl in cell_lists]
    n = len(cell_lists)
    adj: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rows[i] & rows[j] or cols[i] & cols[j]:
                adj[i].add(j)
                adj[j].add(i)
    return adj


def _first_fit(adj: list[set[int]]) -> list[int]:
    col: list[int] = []
    for i in range(len(adj)):
        forb = {col[j] for j in adj[i] if j < i}
        l = 0
        while l in forb:
            l += 1
        col.append(l)
    return col


# greedy colouring strategies tried when refining the seed, in preference order
SEED_STRATEGIES = (
    ("connected_sequential_bfs", True),
    ("largest_first", True),
    ("smallest_last", True),
    ("independent_set", False),
    ("saturation_largest_first", False),
)


def seed_array(cs: ConstraintSet, refine: bool = True) -> SeedResult:
    """Place every constraint in a partial order-M**2 array under a shared label.

    Labels come from first-fit over the constraints in enumeration order.
    With ``refine``, a portfolio of greedy graph colourings of the
    constraint conflict graph is also run and the colouring with the fewest
    labels wins (earlier candidates win ties).
    """
    n = cs.M * cs.M
    cells = np.full((n, n), EMPTY, dtype=np.int64)
    if not cs.constraints:
        return SeedResult(cells, 0, 0)
    cell_lists = [c.cells(cs.M) for c in cs.constraints]
    flat = [rc for cl in cell_lists for rc in cl]
    if len(set(flat)) != len(flat):
        raise ValueError("two constraints claim the same cell")
    adj = _conflict_graph(cell_lists)
    colours = _first_fit(adj)
    ff = max(colours) + 1
    if refine:
        G = nx.Graph()
        G.add_nodes_from(range(len(adj)))
        G.add_edges_from((i, j) for i in range(len(adj)) for j in adj[i] if i < j)
        for strategy, interchange in SEED_STRATEGIES:
            got = nx.greedy_color(G, strategy=strategy, interchange=interchange)
            cand = [got[i] for i in range(len(adj))]
            if max(cand) < max(colours):
                colours = cand
        colours = _relabel(colours)
    for cl, l in zip(cell_lists, colours):
        for r, c in cl:
            cells[r, c] = l
    return SeedResult(cells, max(colours) + 1, ff)


def _relabel(colours: list[int]) -> list[int]:
    # number colours by first use in constraint order
    ids: dict[int, int] = {}
    return [ids.setdefault(c, len(ids)) for c in colours]


def algorithm1(partial: np.ndarray) -> np.ndarray:
    """Fill empty cells row by row with the smallest label absent from their row and column."""
    g = np.array(partial, dtype=np.int64)
    n = g.shape[0]
    for i in range(n):
        for j in range(n):
            if g[i, j] == EMPTY:
                taken = set(g[i].tolist()) | set(g[:, j].tolist())
                l = 0
                while l in taken:
                    l += 1
                g[i, j] = l
    return g


def _complete_within(partial: np.ndarray, t: int, cap: int) -> Optional[np.ndarray]:
    """Most-constrained-cell-first backtracking using labels below ``t``."""
    g = np.array(partial, dtype=np.int64)
    n = g.shape[0]
    full = (1 << t) - 1
    rows = [0] * n
    cols = [0] * n
    for i in range(n):
        for j in range(n):
            if g[i, j] != EMPTY:
                if g[i, j] >= t:
                    return None
                rows[i] |= 1 << int(g[i, j])
                cols[j] |= 1 << int(g[i, j])
    empty = [(i, j) for i in range(n) for j in range(n) if g[i, j] == EMPTY]
    nodes = 0

    def rec() -> Optional[bool]:
        nonlocal nodes
        nodes += 1
        if nodes > cap:
            return None
        best, best_opts, best_cnt = None, 0, t + 1
        for i, j in empty:
            if g[i, j] == EMPTY:
                opts = full & ~(rows[i] | cols[j])
                cnt = bin(opts).count("1")
                if cnt == 0:
                    return False
                if cnt < best_cnt:
                    best, best_opts, best_cnt = (i, j), opts, cnt
        if best is None:
            return True
        i, j = best
        opts = best_opts
        while opts:
            bit = opts & -opts
            opts ^= bit
            g[i, j] = bit.bit_length() - 1
            rows[i] |= bit
            cols[j] |= bit
            r = rec()
            if r:
                return True
            g[i, j] = EMPTY
            rows[i] ^= bit
            cols[j] ^= bit
            if r is None:
                return None
        return False

    return g if rec() else None


@dataclass(frozen=True)
class CompletionResult:
    square: LatinSquare
    within_budget: bool
    greedy_count: int


def complete(partial: np.ndarray, budget: int = DEFAULT_BUDGET, node_cap: int = NODE_CAP) -> CompletionResult:
    """Complete a conflict-free partial array into a Latin square.

    Runs the greedy fill first; if that needs more than ``budget`` labels,
    a bounded backtracking search looks for a completion within budget.
    When the search fails the greedy square is returned with
    ``within_budget`` False.
    """
    g = algorithm1(partial)
    greedy = int(g.max()) + 1
    if greedy <= budget:
        return CompletionResult(LatinSquare(g), True, greedy)
    bt = _complete_within(partial, budget, node_cap)
    if bt is None:
        return CompletionResult(LatinSquare(g), False, greedy)
    return CompletionResult(LatinSquare(bt), True, greedy)


@dataclass(frozen=True)
class DirectResult:
    square: LatinSquare
    constraints: ConstraintSet
    seed_labels: int
    within_budget: bool
    method: str  # "direct" or "cartesian"


def direct_map(sset: SignalSet, h: FadeLike, fades: SingularFadeSet | None = None,
               budget: int = DEFAULT_BUDGET, node_cap: int = NODE_CAP) -> DirectResult:
    """Relay map for ``h`` built from its singularity-removal constraints.

    On the unit circle the Cartesian map is already minimal and is returned
    unchanged.
    """
    fades = fades or enumerate_singular_fades(sset)
    cs = enumerate_constraints(sset, h, fades)
    if abs(cs.fade.gamma - 1.0) < 1e-9:
        sq = cartesian_product(base_clustering(sset, cs.fade, fades))
        return DirectResult(sq, cs, sq.label_count, True, "cartesian")
    seed = seed_array(cs)
    res = complete(seed.cells, budget, node_cap)
    return DirectResult(res.square, cs, seed.label_count, res.within_budget, "direct")
