"""Distance functionals of the relay constellation and the fade-plane quantizer.

Every distance here depends on a pair of transmit tuples only through the
per-use differences (Δa, Δb) of the user points, so pairs are reduced to
"combos": indices into (D ∪ {0}) x (D ∪ {0}) with D the difference set.
The squared single-use distance of a combo at fade z is ``|Δa + z Δb|²``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constellation import SignalSet, complex_key, difference_set
from .fadestates import FadeLike, FadeState, as_complex
from .latin import LatinSquare, _uses
from .mapgen import MapLibrary, rotate_map

TIE_TOL = 1e-9
FULL = "full"
SIMPLE = "simple"
_CHUNK = 4096


class ComboSpace:
    """Indexing of single-use difference combos for one signal set."""

    def __init__(self, sset: SignalSet):
        self.sset = sset
        diffs = [0j] + sorted(difference_set(sset), key=lambda d: (d.real, d.imag))
        self.diffs = np.array(diffs)
        self.K = len(diffs)
        lookup = {complex_key(d): i for i, d in enumerate(diffs)}
        pts = sset.points
        M = sset.M
        # didx[x, x'] = index of point[x] - point[x']
        self.didx = np.array([[lookup[complex_key(pts[x] - pts[y])] for y in range(M)] for x in range(M)])
        ii, jj = np.divmod(np.arange(self.K * self.K), self.K)
        self.da = self.diffs[ii]
        self.db = self.diffs[jj]
        self.zero = 0  # combo (0, 0)
        self.nondegenerate = (ii != 0) & (jj != 0)

    def g(self, z: np.ndarray) -> np.ndarray:
        """Squared single-use distances, shape (len(z), K*K)."""
        z = np.asarray(z, dtype=complex).reshape(-1, 1)
        return np.abs(self.da[None, :] + z * self.db[None, :]) ** 2

    def combo(self, a, a2, b, b2):
        return self.didx[a, a2] * self.K + self.didx[b, b2]


_SPACES: dict[SignalSet, ComboSpace] = {}


def combo_space(sset: SignalSet) -> ComboSpace:
    sp = _SPACES.get(sset)
    if sp is None:
        sp = _SPACES[sset] = ComboSpace(sset)
    return sp


def effective_min_distance(sset: SignalSet, z) -> np.ndarray | float:
    """Minimum squared distance between distinct transmit tuples at fade ``z``.

    Equal to the smallest nonzero single-use combo distance, since a pair of
    tuples that differs in one use only already attains it.
    """
    sp = combo_space(sset)
    scalar = np.ndim(z) == 0
    zz = np.atleast_1d(np.asarray(as_complex(z) if scalar else z, dtype=complex))
    out = sp.g(zz)[:, 1:].min(axis=1)
    return float(out[0]) if scalar else out


class MapGeometry:
    """Combos separating different clusters of one map, reduced for fast evaluation.

    ``single`` lists combos of pairs that differ in exactly one use and sit in
    different clusters. ``residual`` lists (c1, c2) combos of pairs differing
    in both uses that are not already dominated by a ``single`` entry.
    """

    def __init__(self, square: LatinSquare, sset: SignalSet):
        sp = combo_space(sset)
        M, K = sset.M, sp.K
        self.uses = _uses(square.order, M)
        if self.uses not in (1, 2):
            raise ValueError("only one- and two-use maps are supported")
        n = square.order
        lab = square.cells.ravel()
        r, c = np.divmod(np.arange(n * n), n)
        if self.uses == 1:
            mask = np.zeros(K * K, dtype=bool)
            for s in range(0, n * n, _CHUNK):
                sl = slice(s, s + _CHUNK)
                diff = lab[sl, None] != lab[None, :]
                cb = sp.combo(r[sl, None], r[None, :], c[sl, None], c[None, :])
                mask[cb[diff]] = True
            self.single = np.flatnonzero(mask)
            self.residual = np.zeros((0, 2), dtype=np.int64)
            return
        a1, a2 = np.divmod(r, M)
        b1, b2 = np.divmod(c, M)
        present = np.zeros(K**4, dtype=bool)
        for s in range(0, n * n, _CHUNK):
            sl = slice(s, s + _CHUNK)
            diff = lab[sl, None] != lab[None, :]
            c1 = sp.combo(a1[sl, None], a1[None, :], b1[sl, None], b1[None, :])
            c2 = sp.combo(a2[sl, None], a2[None, :], b2[sl, None], b2[None, :])
            present[(c1 * (K * K) + c2)[diff]] = True
        P = present.reshape(K * K, K * K)
        s1 = P[:, 0]
        s2 = P[0, :]
        self.single = np.flatnonzero(s1 | s2)
        rc1, rc2 = np.nonzero(P)
        # a pair already covered by a single-use entry can never be the minimum
        keep = (rc1 != 0) & (rc2 != 0) & ~s1[rc1] & ~s2[rc2]
        rc1, rc2 = rc1[keep], rc2[keep]
        self.residual = np.stack([rc1, rc2], axis=1)

    @classmethod
    def _from_parts(cls, uses: int, single: np.ndarray, residual: np.ndarray) -> "MapGeometry":
        geo = cls.__new__(cls)
        geo.uses, geo.single, geo.residual = uses, single, residual
        return geo

    def rotated(self, k: int, sset: SignalSet) -> "MapGeometry":
        """Geometry of ``rotate_map(square, k)`` without rescanning pairs.

        Rotating the columns multiplies every B point by exp(2j*pi*k/M), so a
        combo (Δa, Δb) of the rotated map is (Δa, Δb * exp(-2j*pi*k/M)) of
        the original.
        """
        sp = combo_space(sset)
        K = sp.K
        w = np.exp(-2j * np.pi * k / sset.M)
        lookup = {complex_key(d): i for i, d in enumerate(sp.diffs)}
        # original Δb index -> rotated Δb index
        jmap = np.array([lookup[complex_key(d * w)] for d in sp.diffs])

        def conv(c):
            i, j = np.divmod(c, K)
            return i * K + jmap[j]

        return MapGeometry._from_parts(self.uses, np.sort(conv(self.single)), conv(self.residual))

    def distance(self, g: np.ndarray) -> np.ndarray:
        """Squared cluster distance for precomputed ``g`` rows (one per fade value)."""
        out = g[:, self.single].min(axis=1) if self.single.size else np.full(g.shape[0], np.inf)
        if self.residual.size:
            res = (g[:, self.residual[:, 0]] + g[:, self.residual[:, 1]]).min(axis=1)
            out = np.minimum(out, res)
        return out


def geometry(square: LatinSquare, sset: SignalSet) -> MapGeometry:
    return MapGeometry(square, sset)


def library_geometry(library: MapLibrary) -> list[MapGeometry]:
    """Geometry of every library map, cached on the library.

    Maps that are rotations of the first map of their fade orbit reuse its
    geometry through :meth:`MapGeometry.rotated`.
    """
    geo = library._geometry.get("maps")
    if geo is not None:
        return geo
    sset = library.sset
    out: list[Optional[MapGeometry]] = [None] * len(library)
    for orbit in library.fades.orbits(sset.M):
        first = library.fades.index(orbit[0])
        seed_sq = library.squares[first]
        seed = MapGeometry(seed_sq, sset)
        for k, f in enumerate(orbit):
            i = library.fades.index(f)
            sq = library.squares[i]
            if k == 0:
                out[i] = seed
            elif sq == rotate_map(seed_sq, k, sset):
                out[i] = seed.rotated(k, sset)
            else:
                out[i] = MapGeometry(sq, sset)
    geo = library._geometry["maps"] = out
    return geo


def map_distances(library: MapLibrary, z) -> np.ndarray:
    """Squared cluster distance of every library map at every ``z``, shape (len(z), len(library))."""
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    geo = library_geometry(library)
    sp = combo_space(library.sset)
    out = np.empty((zz.size, len(geo)))
    for s in range(0, zz.size, _CHUNK):
        g = sp.g(zz[s:s + _CHUNK])
        out[s:s + _CHUNK] = np.stack([gm.distance(g) for gm in geo], axis=1)
    return out


def cluster_min_distance(square: LatinSquare, sset: SignalSet, z, geo: MapGeometry | None = None):
    """Minimum squared distance between transmit tuples in different clusters at ``z``."""
    geo = geo or MapGeometry(square, sset)
    scalar = np.ndim(z) == 0 or isinstance(z, FadeState)
    zz = np.atleast_1d(np.asarray(as_complex(z) if scalar else z, dtype=complex))
    out = np.empty(zz.size)
    sp = combo_space(sset)
    for s in range(0, zz.size, _CHUNK):
        out[s:s + _CHUNK] = geo.distance(sp.g(zz[s:s + _CHUNK]))
    return float(out[0]) if scalar else out


def decision_metric(sset: SignalSet, z: FadeLike, xa: int, xb: int, xa2: int, xb2: int) -> float:
    """``|(x_A - x'_A) + z (x_B - x'_B)|`` for symbol pairs (xa, xb) != (xa2, xb2)."""
    if (xa, xb) == (xa2, xb2):
        raise ValueError("pairs must differ")
    p = sset.points
    return abs((p[xa] - p[xa2]) + as_complex(z) * (p[xb] - p[xb2]))


@dataclass(frozen=True)
class DecisionOutcome:
    chosen_fade: FadeState
    index: int
    metric_value: float
    method: str
    tie: bool


TIE_BREAKS = ("nearest", "fade", "labels")


def _preference(library: MapLibrary, tie_break: str) -> np.ndarray:
    """Fade indices in tie-winning order."""
    fv = library.fades.values
    if tie_break in ("fade", "nearest"):
        return np.lexsort((fv.imag, fv.real))
    if tie_break == "labels":
        t = np.array([sq.label_count for sq in library.squares])
        return np.lexsort((fv.imag, fv.real, t))
    raise ValueError(f"unknown tie break {tie_break!r}")


def choose_maps(library: MapLibrary, z: Sequence[complex] | np.ndarray, method: str = FULL,
                tie_break: str = "nearest"):
    """Vectorized map choice.

    Returns (index, metric, tie) arrays. ``metric`` is the winning squared
    cluster distance for the full method and the minimum decision metric
    for the simple one. ``tie`` flags cells where the winner is not unique.

    Tied candidates are resolved by ``tie_break``: "nearest" prefers the
    map whose own fade has the smallest decision metric at ``z`` (then
    smallest (re, im)), "fade" takes the smallest (re, im) fade and
    "labels" the fewest labels first.
    """
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    pref = _preference(library, tie_break)
    if method == FULL:
        return _choose_full(library, zz, pref, tie_break == "nearest")
    if method == SIMPLE:
        return _choose_simple(library, zz, pref)
    raise ValueError(f"unknown method {method!r}")


def _combo_fades(library: MapLibrary):
    """Nondegenerate combo indices, the fade each induces, and the degenerate ones."""
    key = "combo_fades"
    if key not in library._geometry:
        sp = combo_space(library.sset)
        nd = np.flatnonzero(sp.nondegenerate)
        deg = np.flatnonzero(~sp.nondegenerate)[1:]
        h = -sp.da[nd] / sp.db[nd]
        hidx = np.array([library.fades.index(complex(x)) for x in h])
        if (hidx == None).any():  # noqa: E711
            raise RuntimeError("combo ratio outside the singular set")
        library._geometry[key] = (nd, hidx.astype(np.int64), deg)
    return library._geometry[key]


def _per_fade_metric(library: MapLibrary, z: np.ndarray):
    """Smallest decision metric per fade, shape (len(z), |H|), and the degenerate minimum."""
    sp = combo_space(library.sset)
    nd, hidx, deg = _combo_fades(library)
    g = np.sqrt(sp.g(z))
    gn = g[:, nd]
    per = np.full((z.size, len(library.fades)), np.inf)
    np.minimum.at(per.T, hidx, gn.T)
    return per, g[:, deg].min(axis=1)


def _choose_full(library: MapLibrary, zz: np.ndarray, pref: np.ndarray, nearest: bool):
    idx = np.empty(zz.size, dtype=np.int64)
    val = np.empty(zz.size)
    tie = np.empty(zz.size, dtype=bool)
    for s in range(0, zz.size, _CHUNK):
        zc = zz[s:s + _CHUNK]
        d = map_distances(library, zc)[:, pref]
        best = d.max(axis=1)
        close = d >= best[:, None] - TIE_TOL
        pick = close
        if nearest:
            per = _per_fade_metric(library, zc)[0][:, pref]
            score = np.where(close, per, np.inf)
            pick = close & (score <= score.min(axis=1)[:, None] + TIE_TOL)
        idx[s:s + _CHUNK] = pref[np.argmax(pick, axis=1)]
        val[s:s + _CHUNK] = best
        tie[s:s + _CHUNK] = close.sum(axis=1) > 1
    return idx, val, tie


def _choose_simple(library: MapLibrary, zz: np.ndarray, pref: np.ndarray):
    idx = np.empty(zz.size, dtype=np.int64)
    val = np.empty(zz.size)
    tie = np.empty(zz.size, dtype=bool)
    for s in range(0, zz.size, _CHUNK):
        per, gd = _per_fade_metric(library, zz[s:s + _CHUNK])
        best_nd = per.min(axis=1)
        m = np.minimum(best_nd, gd)
        close = per <= m[:, None] + TIE_TOL
        # when only degenerate combos reach the minimum, fall back to the best fades
        cand = np.where(close.any(axis=1)[:, None], close, per <= best_nd[:, None] + TIE_TOL)
        idx[s:s + _CHUNK] = pref[np.argmax(cand[:, pref], axis=1)]
        val[s:s + _CHUNK] = m
        tie[s:s + _CHUNK] = (close.sum(axis=1) != 1) | (gd <= m + TIE_TOL)
    return idx, val, tie


def choose_map(library: MapLibrary, z: FadeLike, method: str = FULL, tie_break: str = "nearest") -> DecisionOutcome:
    """Pick the library map best suited to fade ``z``.

    Full method: the map with the largest cluster distance at ``z``. Simple
    method: the fade -Δa/Δb of the nondegenerate combo closest to collision.
    Ties are resolved as in :func:`choose_maps`.
    """
    i, v, t = choose_maps(library, [as_complex(z)], method, tie_break)
    k = int(i[0])
    return DecisionOutcome(library.fades.states[k], k, float(v[0]), method, bool(t[0]))


@dataclass(frozen=True)
class GridSpec:
    re0: float = -2.0
    re1: float = 2.0
    im0: float = -2.0
    im1: float = 2.0
    step: float = 0.02

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        vals = (self.re0, self.re1, self.im0, self.im1, self.step)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("grid bounds must be finite")
        if self.re1 < self.re0 or self.im1 < self.im0:
            raise ValueError("grid bounds are reversed")

    @property
    def re(self) -> np.ndarray:
        n = int(round((self.re1 - self.re0) / self.step)) + 1
        return self.re0 + self.step * np.arange(n)

    @property
    def im(self) -> np.ndarray:
        n = int(round((self.im1 - self.im0) / self.step)) + 1
        return self.im0 + self.step * np.arange(n)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 5:
            raise ValueError("grid needs re0,re1,im0,im1,step")
        return cls(*parts)


@dataclass(frozen=True)
class RegionMap:
    """Chosen fade index per grid cell; arrays are indexed [im, re]."""

    grid: GridSpec
    index: np.ndarray
    tie: np.ndarray
    method: str

    def points(self) -> np.ndarray:
        re, im = np.meshgrid(self.grid.re, self.grid.im)
        return re + 1j * im


def quantize_plane(library: MapLibrary, grid: GridSpec = GridSpec(), method: str = FULL,
                   threads: int = 1, tie_break: str = "nearest") -> RegionMap:
    re, im = np.meshgrid(grid.re, grid.im)
    z = (re + 1j * im).ravel()
    if threads > 1 and z.size > _CHUNK:
        from concurrent.futures import ThreadPoolExecutor

        library_geometry(library)  # build once before fanning out
        parts = np.array_split(z, threads)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(lambda p: choose_maps(library, p, method, tie_break), parts))
        idx = np.concatenate([r[0] for r in res])
        tie = np.concatenate([r[2] for r in res])
    else:
        idx, _, tie = choose_maps(library, z, method, tie_break)
    return RegionMap(grid, idx.reshape(re.shape), tie.reshape(re.shape), method)
