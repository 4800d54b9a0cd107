"""Singular fade states: enumeration and circle classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .constellation import TOL, SignalSet, complex_key, dedupe, difference_set

NON_SINGULAR = "non-singular"


@dataclass(frozen=True, order=True)
class FadeState:
    """A fade ratio z = H_B / H_A stored as its real and imaginary parts."""

    re: float
    im: float

    @classmethod
    def from_complex(cls, z: complex) -> "FadeState":
        return cls(float(z.real), float(z.imag))

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    @property
    def gamma(self) -> float:
        return abs(self.value)

    @property
    def theta(self) -> float:
        # atan2 gives (-pi, pi]; -0.0 imag would flip the sign, so clear it
        return math.atan2(self.im + 0.0, self.re)

    def key(self) -> tuple[int, int]:
        return complex_key(self.value)

    def to_dict(self) -> dict:
        return {"re": self.re, "im": self.im}

    def __str__(self) -> str:
        return f"{self.re:g}{self.im:+g}j"


FadeLike = Union[FadeState, complex, float, int]


def as_complex(h: FadeLike) -> complex:
    return h.value if isinstance(h, FadeState) else complex(h)


@dataclass(frozen=True)
class SingularFadeSet:
    """The finite set of singular fade states of a signal set.

    States are sorted by radius, then by angle in [0, 2*pi).
    """

    states: tuple[FadeState, ...]
    lam: int

    @property
    def circles(self) -> dict[float, list[FadeState]]:
        out: dict[float, list[FadeState]] = {}
        for s in self.states:
            r = self.radius_of(s)
            out.setdefault(r, []).append(s)
        return out

    def radius_of(self, s: FadeState) -> float:
        # representative radius shared by every member of a circle
        g = s.gamma
        for r in self.radii:
            if abs(r - g) < 1e-7:
                return r
        raise KeyError(s)

    @property
    def radii(self) -> list[float]:
        out: list[float] = []
        for s in self.states:
            if not out or abs(out[-1] - s.gamma) > 1e-7:
                out.append(s.gamma)
        return out

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.states])

    def index(self, h: FadeLike) -> int | None:
        """Position of ``h`` in ``states`` or None when it is not a member."""
        z = as_complex(h)
        for i, s in enumerate(self.states):
            if abs(s.re - z.real) <= TOL and abs(s.im - z.imag) <= TOL:
                return i
        return None

    def __contains__(self, h: FadeLike) -> bool:
        return self.index(h) is not None

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def orbits(self, M: int) -> list[list[FadeState]]:
        """Split the set into orbits under rotation by 2*pi/M.

        Each orbit starts at its member with angle in (0, 2*pi/M] and lists
        the rotations k = 0..M-1 in order.
        """
        step = np.exp(2j * np.pi / M)
        done: set[int] = set()
        out = []
        for i, s in enumerate(self.states):
            if i in done:
                continue
            ang = math.atan2(s.im, s.re) % (2 * math.pi)
            # rotate back to the fundamental sector (0, 2pi/M]
            k = math.ceil(ang / (2 * math.pi / M) - 1e-9) - 1
            z0 = s.value * step ** (-k)
            orbit = []
            for j in range(M):
                idx = self.index(z0 * step**j)
                if idx is None:
                    raise ValueError("fade set is not closed under rotation")
                orbit.append(self.states[idx])
                done.add(idx)
            out.append(orbit)
        return out


def _angle(z: complex) -> float:
    return math.atan2(z.imag, z.real) % (2 * math.pi)


def enumerate_singular_fades(sset: SignalSet) -> SingularFadeSet:
    """All distinct finite nonzero ratios of two nonzero point differences."""
    diffs = difference_set(sset)
    ratios = dedupe(u / v for u in diffs for v in diffs)
    # snap to the tolerance grid so values are reproducible across platforms
    ratios = [complex(round(z.real, 12) + 0.0, round(z.imag, 12) + 0.0) for z in ratios]
    ratios.sort(key=lambda z: (round(abs(z), 9), round(_angle(z), 9)))
    return SingularFadeSet(states=tuple(FadeState.from_complex(z) for z in ratios), lam=sset.lam)


def classify(h: FadeLike, fades: SingularFadeSet) -> Union[float, str]:
    """Radius of the singular circle holding ``h``, or ``"non-singular"``."""
    idx = fades.index(h)
    if idx is None:
        return NON_SINGULAR
    return fades.radius_of(fades.states[idx])
