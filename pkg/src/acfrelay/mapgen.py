"""Relay map synthesis: base clusterings, Cartesian lifting, rotation, transpose, libraries."""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .constellation import SignalSet, collision_classes
from .fadestates import (
    FadeLike,
    FadeState,
    SingularFadeSet,
    as_complex,
    enumerate_singular_fades,
)
from .latin import LatinSquare, MapRecord, _uses

log = logging.getLogger(__name__)

# DFS node budget per label count when searching base clusterings
BASE_NODE_CAP = 2_000_000


class NotSingularError(ValueError):
    """The fade state is not a member of the singular set."""


@dataclass(frozen=True)
class BaseClustering:
    """A single-use clustering that removes one singular fade state.

    Attributes:
        fade: the fade state removed.
        square: order-M Latin square, rows x_A, columns x_B.
        classes: collision classes at ``fade``.
        exhaustive: True when the label count was proven minimal.
    """

    fade: FadeState
    square: LatinSquare
    classes: tuple[tuple[tuple[int, int], ...], ...]
    exhaustive: bool = True

    @property
    def clusters(self) -> list[frozenset]:
        M = self.square.order
        out: list[set] = [set() for _ in range(self.square.label_count)]
        for a in range(M):
            for b in range(M):
                out[int(self.square.cells[a, b])].add((a, b))
        return [frozenset(s) for s in out]


def _search_labels(M: int, classes, t: int, cap: int) -> tuple[Optional[np.ndarray], bool]:
    """Depth-first Latin completion respecting forced classes, at most ``t`` labels.

    Cells are visited column by column (x_B outer, x_A inner); labels are
    tried in ascending order and a new label is only opened once all lower
    ones are in use. Returns (cells or None, finished) where ``finished`` is
    False if the node cap cut the search short.
    """
    cls_of = {}
    for ci, cl in enumerate(classes):
        for p in cl:
            cls_of[p] = ci
    order = [cls_of[(a, b)] for b in range(M) for a in range(M)]
    seen: set[int] = set()
    cls_order = []
    for ci in order:
        if ci not in seen:
            seen.add(ci)
            cls_order.append(ci)
    members = [classes[ci] for ci in cls_order]
    rowm = [0] * M
    colm = [0] * M
    lab = [-1] * len(members)
    nodes = 0
    aborted = False

    def rec(i: int, used: int) -> bool:
        nonlocal nodes, aborted
        if i == len(members):
            return True
        nodes += 1
        if nodes > cap:
            aborted = True
            return False
        mem = members[i]
        for l in range(min(used + 1, t)):
            bit = 1 << l
            if any(rowm[a] & bit or colm[b] & bit for a, b in mem):
                continue
            for a, b in mem:
                rowm[a] |= bit
                colm[b] |= bit
            lab[i] = l
            if rec(i + 1, max(used, l + 1)):
                return True
            for a, b in mem:
                rowm[a] ^= bit
                colm[b] ^= bit
            if aborted:
                return False
        return False

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10 * M * M))
    try:
        found = rec(0, 0)
    finally:
        sys.setrecursionlimit(old)
    if not found:
        return None, not aborted
    cells = np.empty((M, M), dtype=np.int64)
    for l, mem in zip(lab, members):
        for a, b in mem:
            cells[a, b] = l
    return cells, True


def base_clustering(sset: SignalSet, h: FadeLike, fades: SingularFadeSet | None = None,
                    node_cap: int = BASE_NODE_CAP) -> BaseClustering:
    """Smallest Latin clustering of S x S that keeps every collision class at ``h`` together."""
    fades = fades or enumerate_singular_fades(sset)
    idx = fades.index(h)
    if idx is None:
        raise NotSingularError(f"{as_complex(h)} is not a singular fade state")
    fade = fades.states[idx]
    classes = [tuple(c) for c in collision_classes(sset, fade.value)]
    M = sset.M
    exhaustive = True
    for t in range(M, M * M + 1):
        cells, finished = _search_labels(M, classes, t, node_cap)
        if cells is not None:
            return BaseClustering(fade, LatinSquare(cells), tuple(classes), exhaustive)
        if not finished:
            log.warning("base search at %s hit node cap with %d labels", fade, t)
            exhaustive = False
    raise RuntimeError("no Latin completion found")  # unreachable: M*M labels always fit


def cartesian_product(base: BaseClustering | LatinSquare) -> LatinSquare:
    """Lift an order-M clustering to two channel uses.

    The quadruple ((a1, b1), (a2, b2)) gets label ``B[a1, b1] * m + B[a2, b2]``
    with m the base label count.
    """
    B = (base.square if isinstance(base, BaseClustering) else base).cells
    m = int(B.max()) + 1
    M = B.shape[0]
    L = B[:, None, :, None] * m + B[None, :, None, :]
    return LatinSquare(L.reshape(M * M, M * M))


def rotate_map(sq: LatinSquare, k: int, sset: SignalSet) -> LatinSquare:
    """Map removing h * exp(2j*pi*k/M), given ``sq`` removing h.

    Each column digit x_B is replaced by the symbol k steps further around
    the circle, which is a left cyclic shift by k in phase order applied to
    every sub-square and to the block square.
    """
    M = sset.M
    uses = _uses(sq.order, M)
    rho = sset.rotation(k)
    perm = np.zeros(1, dtype=np.int64)
    for _ in range(uses):
        perm = (perm[:, None] * M + rho[None, :]).ravel()
    return LatinSquare(sq.cells[:, perm])


def transpose_map(sq: LatinSquare) -> LatinSquare:
    """Map removing 1/h, given ``sq`` removing h (the users swap roles)."""
    return sq.transpose()


def xor_map(sset: SignalSet, uses: int = 2) -> LatinSquare:
    """Fixed bitwise-XOR network code: label digits are a_i XOR b_i."""
    M = sset.M
    n = M**uses
    r, c = np.indices((n, n))
    return LatinSquare(np.bitwise_xor(r, c))


@dataclass
class MapLibrary:
    """One relay map per singular fade state, aligned with ``fades.states``."""

    sset: SignalSet
    fades: SingularFadeSet
    records: list[MapRecord]
    method: str
    _geometry: dict = field(default_factory=dict, repr=False)

    @property
    def squares(self) -> list[LatinSquare]:
        return [r.square for r in self.records]

    @property
    def uses(self) -> int:
        return _uses(self.records[0].square.order, self.sset.M)

    def get(self, h: FadeLike) -> LatinSquare:
        i = self.fades.index(h)
        if i is None:
            raise KeyError(h)
        return self.records[i].square

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[tuple[FadeState, MapRecord]]:
        return iter(zip(self.fades.states, self.records))


def _base_squares(sset: SignalSet, fades: SingularFadeSet) -> dict[FadeState, LatinSquare]:
    # one search per rotation orbit; the other members come from rotate_map
    out = {}
    for orbit in fades.orbits(sset.M):
        sq = base_clustering(sset, orbit[0], fades).square
        for k, f in enumerate(orbit):
            out[f] = rotate_map(sq, k, sset)
    return out


def build_base_library(sset: SignalSet) -> MapLibrary:
    """Order-M maps for the two-stage scheme."""
    fades = enumerate_singular_fades(sset)
    sq = _base_squares(sset, fades)
    recs = [MapRecord(sq[f], f, "base", sset.lam, sset.labeling) for f in fades.states]
    return MapLibrary(sset, fades, recs, "base")


def build_library(sset: SignalSet, method: str = "cartesian") -> MapLibrary:
    """Order-M**2 maps for every singular fade state.

    ``cartesian`` lifts the base clustering of each fade. ``direct`` (4-PSK
    only) builds non-unit-circle maps from singularity-removal constraints
    and keeps the Cartesian map on the unit circle.
    """
    fades = enumerate_singular_fades(sset)
    base = _base_squares(sset, fades)
    if method == "cartesian":
        recs = [MapRecord(cartesian_product(base[f]), f, "cartesian", sset.lam, sset.labeling)
                for f in fades.states]
        return MapLibrary(sset, fades, recs, method)
    if method == "direct":
        from .direct import direct_map

        if sset.lam != 2:
            raise ValueError("direct clustering is implemented for 4-PSK only")
        recs = []
        for f in fades.states:
            if abs(f.gamma - 1.0) < 1e-9:
                recs.append(MapRecord(cartesian_product(base[f]), f, "cartesian", sset.lam, sset.labeling))
            else:
                res = direct_map(sset, f, fades)
                recs.append(MapRecord(res.square, f, "direct", sset.lam, sset.labeling,
                                      extra={"within_budget": res.within_budget}))
        return MapLibrary(sset, fades, recs, method)
    raise ValueError(f"unknown method {method!r}")
