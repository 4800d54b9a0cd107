"""PSK signal sets, symbol labeling and difference sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Absolute tolerance used for every complex equality test in the package.
TOL = 1e-9


def gray(k: int) -> int:
    """Reflected binary Gray code of ``k``."""
    return k ^ (k >> 1)


def gray_inverse(g: int) -> int:
    """Inverse of :func:`gray`."""
    k = 0
    while g:
        k ^= g
        g >>= 1
    return k


def complex_key(z: complex, tol: float = TOL) -> tuple[int, int]:
    """Hashable key for a complex value, quantized at ``tol``."""
    return (int(round(z.real / tol)), int(round(z.imag / tol)))


def dedupe(values: Iterable[complex], tol: float = TOL) -> list[complex]:
    """Drop values that coincide (per component, within ``tol``) with an earlier one."""
    seen: dict[tuple[int, int], complex] = {}
    for v in values:
        k = complex_key(v, tol)
        if k not in seen:
            seen[k] = complex(v)
    return list(seen.values())


def _snap(x: np.ndarray) -> np.ndarray:
    # cos/sin of multiples of pi/2 leave ~1e-16 residue; pin those to integers
    r = np.round(x)
    return np.where(np.abs(x - r) < 1e-12, r, x)


@dataclass(frozen=True)
class SignalSet:
    """A 2**lam PSK constellation with a fixed symbol-to-point labeling.

    Points are stored unnormalized. For ``lam == 2`` they are exactly
    ``{1+1j, -1+1j, 1-1j, -1-1j}`` (energy 2).

    Attributes:
        lam: bits per symbol.
        points: complex point of every symbol, indexed by symbol value.
        labeling: name of the symbol-to-point rule.
    """

    lam: int
    points: tuple[complex, ...]
    labeling: str = "gray"
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=complex)
        arr.setflags(write=False)
        object.__setattr__(self, "_array", arr)

    @property
    def M(self) -> int:
        return 1 << self.lam

    @property
    def array(self) -> np.ndarray:
        """Read-only numpy view of the points."""
        return self._array

    @property
    def energy(self) -> float:
        """Average symbol energy of the unnormalized points."""
        return float(np.mean(np.abs(self._array) ** 2))

    def normalized(self) -> np.ndarray:
        """Points scaled to unit average energy."""
        return self._array / np.sqrt(self.energy)

    def phase_index(self, s: int) -> int:
        """Position of symbol ``s`` around the circle, counter-clockwise from the anchor."""
        return gray_inverse(s)

    def symbol_at_phase(self, p: int) -> int:
        """Symbol sitting at circle position ``p`` (taken mod M)."""
        return gray(p % self.M)

    def rotation(self, k: int) -> np.ndarray:
        """Symbol permutation that multiplies every point by exp(2j*pi*k/M)."""
        return np.array([self.symbol_at_phase(self.phase_index(s) + k) for s in range(self.M)])

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "labeling": self.labeling}


def make_signal_set(lam: int) -> SignalSet:
    """Build the Gray-labeled 2**lam PSK set anchored at 1+1j.

    The symbol at circle position p is gray(p), so neighbours differ in one bit.
    """
    if not isinstance(lam, (int, np.integer)) or lam < 2:
        raise ValueError(f"lambda must be an integer >= 2, got {lam!r}")
    M = 1 << lam
    ang = 2 * np.pi * np.array([gray_inverse(k) for k in range(M)]) / M
    rot = _snap(np.cos(ang)) + 1j * _snap(np.sin(ang))
    pts = (1 + 1j) * rot
    pts = _snap(pts.real) + 1j * _snap(pts.imag)
    return SignalSet(lam=int(lam), points=tuple(complex(p) for p in pts))


def point(sset: SignalSet, s: int) -> complex:
    """Constellation point of symbol ``s``."""
    if not 0 <= s < sset.M:
        raise ValueError(f"symbol {s} out of range for M={sset.M}")
    return sset.points[s]


def difference_set(sset: SignalSet) -> list[complex]:
    """Distinct nonzero differences x - x' over the point set."""
    pts = sset.points
    diffs = (a - b for a in pts for b in pts)
    return [d for d in dedupe(diffs) if abs(d) > TOL]


def pair_index(sset: SignalSet, first: int, second: int) -> int:
    """Row/column index of a symbol pair (use-1 symbol is the major digit)."""
    return first * sset.M + second


def split_pair(sset: SignalSet, index: int) -> tuple[int, int]:
    return divmod(index, sset.M)


def collision_classes(sset: SignalSet, h: complex) -> list[list[tuple[int, int]]]:
    """Group pairs (a, b) of S x S by the value x_a + h x_b.

    Classes are listed in order of their first member, pairs within a class
    in (a, b) lexicographic order.
    """
    groups: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for a in range(sset.M):
        for b in range(sset.M):
            v = sset.points[a] + h * sset.points[b]
            groups.setdefault(complex_key(v), []).append((a, b))
    return list(groups.values())


def symbols_from_bits(bits: Sequence[int] | np.ndarray, lam: int) -> np.ndarray:
    """Pack a bit array (MSB first) into symbols of ``lam`` bits."""
    b = np.asarray(bits, dtype=np.int64).reshape(-1, lam)
    weights = 1 << np.arange(lam - 1, -1, -1)
    return b @ weights
