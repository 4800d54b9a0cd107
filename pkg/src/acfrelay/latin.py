"""Latin squares as relay maps: validation, clusters, blocks, decoding and map files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .fadestates import FadeState

FORMAT_VERSION = 1
METHODS = ("cartesian", "direct", "rotate", "transpose", "base", "xor")


class MapFormatError(ValueError):
    """A map file or cell array is malformed."""


class PartitionError(ValueError):
    """A cluster partition does not induce a Latin square."""

    def __init__(self, msg: str, pair: tuple | None = None):
        super().__init__(msg)
        self.pair = pair


@dataclass(frozen=True)
class Violation:
    axis: str  # "row" or "col"
    row: int
    col: int
    label: int

    def to_dict(self) -> dict:
        return {"axis": self.axis, "row": self.row, "col": self.col, "label": self.label}


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violation: Optional[Violation] = None

    def __bool__(self) -> bool:
        return self.ok


class LatinSquare:
    """An order-n array of cluster labels.

    Rows are indexed by the pair of symbols user A sent over the channel
    uses (first use is the major digit), columns likewise for user B.
    Labels must be exactly ``0..t-1`` with each present at least once; the
    Latin property itself is checked by :meth:`validate`.
    """

    def __init__(self, cells: Sequence[Sequence[int]] | np.ndarray):
        try:
            arr = np.array(cells, dtype=np.int64)
        except (TypeError, ValueError) as e:
            raise MapFormatError(f"cells are not an integer array: {e}") from e
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise MapFormatError(f"cells must be a non-empty square array, got shape {arr.shape}")
        if arr.min() < 0:
            raise MapFormatError("labels must be nonnegative")
        present = np.unique(arr)
        if present.size != present[-1] + 1:
            raise MapFormatError("labels must be contiguous from 0")
        arr.setflags(write=False)
        self._cells = arr

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def order(self) -> int:
        return self._cells.shape[0]

    @property
    def label_count(self) -> int:
        return int(self._cells.max()) + 1

    def __eq__(self, other) -> bool:
        return isinstance(other, LatinSquare) and np.array_equal(self._cells, other._cells)

    def __hash__(self) -> int:
        return hash(self._cells.tobytes())

    def __repr__(self) -> str:
        return f"LatinSquare(order={self.order}, label_count={self.label_count})"

    def validate(self) -> ValidationReport:
        """Check that no label repeats within a row or a column.

        The report carries the first offending cell in row-major order.
        """
        c = self._cells
        n = self.order
        first: Optional[Violation] = None
        for axis, arr in (("row", c), ("col", c.T)):
            srt = np.sort(arr, axis=1)
            dup = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
            if dup.size == 0:
                continue
            i = int(dup[0])
            line = arr[i]
            seen: dict[int, int] = {}
            for j in range(n):
                lab = int(line[j])
                if lab in seen:
                    v = Violation(axis, i, j, lab) if axis == "row" else Violation(axis, j, i, lab)
                    if first is None or (v.row, v.col) < (first.row, first.col):
                        first = v
                    break
                seen[lab] = j
        return ValidationReport(first is None, first)

    def canonical(self) -> "LatinSquare":
        """Relabel by first occurrence in a row-major scan."""
        _, first_idx, inv = np.unique(self._cells.ravel(), return_index=True, return_inverse=True)
        rank = np.argsort(np.argsort(first_idx))
        return LatinSquare(rank[inv].reshape(self._cells.shape))

    def transpose(self) -> "LatinSquare":
        return LatinSquare(self._cells.T)

    @cached_property
    def _row_inverse(self) -> np.ndarray:
        inv = np.full((self.order, self.label_count), -1, dtype=np.int64)
        r, c = np.indices(self._cells.shape)
        inv[r.ravel(), self._cells.ravel()] = c.ravel()
        return inv

    @cached_property
    def _col_inverse(self) -> np.ndarray:
        inv = np.full((self.order, self.label_count), -1, dtype=np.int64)
        r, c = np.indices(self._cells.shape)
        inv[c.ravel(), self._cells.ravel()] = r.ravel()
        return inv

    def row_lookup(self) -> np.ndarray:
        """Table ``t[row, label]`` giving the column, or -1 if the label is absent."""
        return self._row_inverse

    def col_lookup(self) -> np.ndarray:
        """Table ``t[col, label]`` giving the row, or -1 if the label is absent."""
        return self._col_inverse


def decode_row(sq: LatinSquare, row: int, label: int) -> Optional[int]:
    """Column carrying ``label`` in ``row``; None when the label is absent."""
    if not 0 <= label < sq.label_count:
        return None
    c = int(sq.row_lookup()[row, label])
    return None if c < 0 else c


def decode_col(sq: LatinSquare, col: int, label: int) -> Optional[int]:
    """Row carrying ``label`` in ``col``; None when the label is absent."""
    if not 0 <= label < sq.label_count:
        return None
    r = int(sq.col_lookup()[col, label])
    return None if r < 0 else r


# --- clusters ---------------------------------------------------------------

def _uses(order: int, M: int) -> int:
    u, n = 0, 1
    while n < order:
        n *= M
        u += 1
    if n != order:
        raise ValueError(f"order {order} is not a power of M={M}")
    return u


def _digits(x: int, M: int, uses: int) -> tuple[int, ...]:
    out = []
    for _ in range(uses):
        x, d = divmod(x, M)
        out.append(d)
    return tuple(reversed(out))


def _undigits(ds: Sequence[int], M: int) -> int:
    x = 0
    for d in ds:
        x = x * M + d
    return x


def cell_to_element(row: int, col: int, M: int, uses: int):
    """Transmit tuple of a cell: ``(a, b)`` for one use, ``((a1, b1), (a2, b2), ...)`` otherwise."""
    a, b = _digits(row, M, uses), _digits(col, M, uses)
    if uses == 1:
        return (a[0], b[0])
    return tuple(zip(a, b))


def element_to_cell(elem, M: int) -> tuple[int, int]:
    if isinstance(elem[0], (int, np.integer)):
        return int(elem[0]), int(elem[1])
    a = [p[0] for p in elem]
    b = [p[1] for p in elem]
    return _undigits(a, M), _undigits(b, M)


def partition_from_square(sq: LatinSquare, M: int) -> list[frozenset]:
    """Clusters of the square, indexed by label."""
    uses = _uses(sq.order, M)
    out: list[set] = [set() for _ in range(sq.label_count)]
    for r in range(sq.order):
        for c in range(sq.order):
            out[int(sq.cells[r, c])].add(cell_to_element(r, c, M, uses))
    return [frozenset(s) for s in out]


def square_from_partition(clusters: Sequence, M: int, uses: int) -> LatinSquare:
    """Inverse of :func:`partition_from_square`, labels canonicalized.

    Raises PartitionError if the clusters overlap, miss a cell, or put two
    members of one cluster in the same row or column.
    """
    n = M**uses
    cells = np.full((n, n), -1, dtype=np.int64)
    owner: dict[tuple[int, int], Any] = {}
    for lab, cl in enumerate(clusters):
        rows: dict[int, Any] = {}
        cols: dict[int, Any] = {}
        for e in sorted(cl):
            r, c = element_to_cell(e, M)
            if cells[r, c] >= 0:
                raise PartitionError("element in two clusters", (owner[(r, c)], e))
            if r in rows:
                raise PartitionError("cluster repeats a row", (rows[r], e))
            if c in cols:
                raise PartitionError("cluster repeats a column", (cols[c], e))
            rows[r] = e
            cols[c] = e
            cells[r, c] = lab
            owner[(r, c)] = e
    if (cells < 0).any():
        r, c = np.argwhere(cells < 0)[0]
        raise PartitionError(f"cell ({r}, {c}) not covered")
    return LatinSquare(cells).canonical()


def same_partition(a: LatinSquare, b: LatinSquare) -> bool:
    """Label-agnostic equality."""
    return a.order == b.order and a.canonical() == b.canonical()


# --- blocks -----------------------------------------------------------------

@dataclass(frozen=True)
class BlockView:
    """Sub-squares ``sub[i, j]`` of order M and the array of their identities.

    ``block_square[i, j]`` numbers distinct sub-square contents by first
    occurrence in a row-major scan.
    """

    sub_squares: np.ndarray  # shape (M, M, M, M)
    block_square: np.ndarray  # shape (M, M)

    def reassemble(self) -> LatinSquare:
        M = self.sub_squares.shape[0]
        m = self.sub_squares.shape[2]
        return LatinSquare(self.sub_squares.transpose(0, 2, 1, 3).reshape(M * m, M * m))


def blocks(sq: LatinSquare, M: int) -> BlockView:
    n = sq.order
    if n % M:
        raise ValueError(f"order {n} not divisible by {M}")
    m = n // M
    sub = sq.cells.reshape(M, m, M, m).transpose(0, 2, 1, 3).copy()
    ids: dict[bytes, int] = {}
    bs = np.empty((M, M), dtype=np.int64)
    for i in range(M):
        for j in range(M):
            bs[i, j] = ids.setdefault(sub[i, j].tobytes(), len(ids))
    return BlockView(sub, bs)


# --- map files --------------------------------------------------------------

@dataclass
class MapRecord:
    """A square plus the metadata stored alongside it in a map file."""

    square: LatinSquare
    fade: Optional[FadeState] = None
    method: str = "cartesian"
    lam: int = 2
    labeling: str = "gray"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        meta: dict[str, Any] = {
            "fade": None if self.fade is None else self.fade.to_dict(),
            "method": self.method,
            "signal_set": {"lambda": self.lam, "labeling": self.labeling},
        }
        meta.update(self.extra)
        return {
            "format_version": FORMAT_VERSION,
            "order": self.square.order,
            "label_count": self.square.label_count,
            "cells": self.square.cells.tolist(),
            "meta": meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MapRecord":
        version = d.get("format_version", FORMAT_VERSION)
        if not isinstance(version, int) or version > FORMAT_VERSION:
            raise MapFormatError(f"unsupported format_version {version!r}")
        try:
            cells = d["cells"]
            order = int(d["order"])
            t = int(d["label_count"])
            meta = d.get("meta", {})
            ss = meta.get("signal_set", {})
            fade = meta.get("fade")
            extra = {k: v for k, v in meta.items() if k not in ("fade", "method", "signal_set")}
            rec = cls(
                square=LatinSquare(cells),
                fade=None if fade is None else FadeState(float(fade["re"]), float(fade["im"])),
                method=str(meta.get("method", "cartesian")),
                lam=int(ss.get("lambda", 2)),
                labeling=str(ss.get("labeling", "gray")),
                extra=extra,
            )
        except MapFormatError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise MapFormatError(f"malformed map: {e}") from e
        if rec.square.order != order:
            raise MapFormatError(f"order field {order} does not match cells ({rec.square.order})")
        if rec.square.label_count != t:
            raise MapFormatError(f"label_count field {t} does not match cells ({rec.square.label_count})")
        return rec


def dumps_map(rec: MapRecord) -> str:
    return json.dumps(rec.to_dict(), separators=(",", ":")) + "\n"


def save_map(path: str | Path, rec: MapRecord) -> None:
    Path(path).write_text(dumps_map(rec), newline="\n")


def load_map(path: str | Path) -> MapRecord:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise MapFormatError(f"not JSON: {e}") from e
    if not isinstance(d, dict):
        raise MapFormatError("map file must hold a JSON object")
    return MapRecord.from_dict(d)
