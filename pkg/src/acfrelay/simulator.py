"""Monte-Carlo simulation of two-way relaying with adaptive network-coding maps.

Each frame carries ``frame_length`` bits per user over one Rayleigh block.
ACF exchanges use two multiple-access channel uses and one broadcast use;
the two-stage baseline uses one of each.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constellation import SignalSet, make_signal_set, symbols_from_bits
from .latin import FORMAT_VERSION, LatinSquare
from .mapgen import MapLibrary, build_base_library, build_library, xor_map
from .metrics import FULL, SIMPLE, TIE_BREAKS, choose_maps

SCHEMES = ("acf-cp", "acf-dc", "two-stage", "fixed-xor")
BATCH = 1000
Z95 = 1.959963984540054


@dataclass(frozen=True)
class ChannelSample:
    """Block fading gains and noise variance.

    Gains may be arrays; they must broadcast against symbol arrays with the
    trailing channel-use axis removed.
    """

    h_a: np.ndarray | complex
    h_b: np.ndarray | complex
    hp_a: np.ndarray | complex
    hp_b: np.ndarray | complex
    sigma2: float

    @property
    def z(self):
        return np.asarray(self.h_b) / np.asarray(self.h_a)


def rayleigh(rng: np.random.Generator, size=None) -> np.ndarray:
    """CN(0, 1) gains."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)


def draw_channel(rng: np.random.Generator, sigma2: float) -> ChannelSample:
    h = rayleigh(rng, 4)
    return ChannelSample(h[0], h[1], h[2], h[3], sigma2)


def sigma2_from_snr(snr_db: float) -> float:
    """Noise variance for unit symbol energy; infinite SNR gives a noiseless link."""
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


def ma_phase(sset: SignalSet, sample: ChannelSample, a: np.ndarray, b: np.ndarray,
             noise: Optional[np.ndarray] = None, rng: Optional[np.random.Generator] = None):
    """Relay observations ``H_A x_A + H_B x_B + Z`` for symbol arrays ``a`` and ``b``.

    ``a`` and ``b`` hold one symbol per channel use (last axis indexes the
    use). Points are normalized to unit energy. ``noise`` is standard CN(0,1)
    and is scaled by the sample's sigma; it is drawn from ``rng`` if absent.
    """
    p = sset.normalized()
    a = np.asarray(a)
    b = np.asarray(b)
    if noise is None:
        noise = rayleigh(rng if rng is not None else np.random.default_rng(), a.shape)
    h_a = np.asarray(sample.h_a)[..., None] if np.ndim(sample.h_a) else sample.h_a
    h_b = np.asarray(sample.h_b)[..., None] if np.ndim(sample.h_b) else sample.h_b
    return h_a * p[a] + h_b * p[b] + math.sqrt(sample.sigma2) * noise


def relay_ml_estimate(sset: SignalSet, sample: ChannelSample, y: np.ndarray):
    """Joint ML estimate of both users' symbols from relay observations.

    The joint metric over all channel uses is a sum of per-use terms with
    disjoint variables, so each use is minimized on its own. Ties go to the
    lowest (a, b) index.
    """
    p = sset.normalized()
    M = sset.M
    xa, xb = np.divmod(np.arange(M * M), M)
    y = np.asarray(y)
    h_a = np.asarray(sample.h_a)
    h_b = np.asarray(sample.h_b)
    # candidate sums per frame: shape (..., 1, M*M)
    cand = h_a[..., None, None] * p[xa] + h_b[..., None, None] * p[xb] if h_a.ndim else h_a * p[xa] + h_b * p[xb]
    d = np.abs(y[..., None] - cand) ** 2
    k = np.argmin(d, axis=-1)
    return xa[k], xb[k]


def bc_labels(t: np.ndarray | int, labels: np.ndarray, hp: np.ndarray | complex, sigma2: float,
              noise: np.ndarray) -> np.ndarray:
    """Send ``labels`` as points of a unit-energy t-PSK and ML-detect them.

    ``t`` and ``hp`` must broadcast against ``labels``. For equal-energy PSK
    with known gain, ML detection is the nearest phase of ``y * conj(h)``.
    """
    tt = np.asarray(t)
    hh = np.asarray(hp)
    s = np.exp(2j * np.pi * labels / tt)
    y = hh * s + math.sqrt(sigma2) * noise
    ang = np.angle(y * np.conj(hh))
    return np.mod(np.rint(ang * tt / (2 * np.pi)), tt).astype(np.int64)


def bc_phase(square: LatinSquare, row_a: np.ndarray, col_b: np.ndarray, label: np.ndarray,
             sample: ChannelSample, noise_a: np.ndarray, noise_b: np.ndarray):
    """Broadcast ``label`` and decode at both users.

    A knows its row and recovers B's column; B knows its column and recovers
    A's row. Returns (column at A, row at B) with -1 where the detected
    label is absent from the user's line.
    """
    t = square.label_count
    la = bc_labels(t, np.asarray(label), sample.hp_a, sample.sigma2, noise_a)
    lb = bc_labels(t, np.asarray(label), sample.hp_b, sample.sigma2, noise_b)
    return square.row_lookup()[row_a, la], square.col_lookup()[col_b, lb]


@dataclass(frozen=True)
class SimConfig:
    scheme: str
    snr_db: tuple[float, ...]
    frames: int = 1000
    frame_length: Optional[int] = None
    seed: int = 0
    lam: int = 2
    choice: str = FULL
    tie_break: str = "labels"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.snr_db:
            raise ValueError("empty SNR list")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.lam < 2:
            raise ValueError("lambda must be >= 2")
        if self.choice not in (FULL, SIMPLE):
            raise ValueError(f"unknown choice method {self.choice!r}")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie break {self.tie_break!r}")
        if self.scheme == "acf-dc" and self.lam != 2:
            raise ValueError("direct clustering maps exist for lambda = 2 only")
        if self.length % (2 * self.lam):
            raise ValueError(f"frame length {self.length} not divisible by {2 * self.lam}")

    @property
    def length(self) -> int:
        if self.frame_length is not None:
            return self.frame_length
        # largest multiple of 2*lambda not above 256
        return 256 - 256 % (2 * self.lam)

    @property
    def uses_per_exchange(self) -> int:
        return 2 if self.scheme == "two-stage" else 3

    @property
    def exchanges(self) -> int:
        per_user = self.lam if self.scheme == "two-stage" else 2 * self.lam
        return self.length // per_user

    @property
    def ceiling(self) -> float:
        return 2 * self.length / (self.exchanges * self.uses_per_exchange)


@dataclass
class SimResult:
    config: SimConfig
    snr_db: np.ndarray
    throughput: np.ndarray
    fer: np.ndarray
    relay_ser: np.ndarray
    ci_halfwidth: np.ndarray
    channel_uses_per_frame: int
    bits_per_frame: int
    metadata: dict = field(default_factory=dict)

    def rows(self):
        for i in range(self.snr_db.size):
            yield (self.snr_db[i], self.throughput[i], self.fer[i], self.relay_ser[i], self.ci_halfwidth[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr_db", "throughput", "fer", "relay_ser", "ci_halfwidth"])
        for row in self.rows():
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        d = {
            "format_version": FORMAT_VERSION,
            "config": {**asdict(self.config), "snr_db": [_fmt(x) for x in self.config.snr_db],
                       "frame_length": self.config.length},
            "channel_uses_per_frame": self.channel_uses_per_frame,
            "bits_per_frame": self.bits_per_frame,
            "ceiling": self.config.ceiling,
            "metadata": self.metadata,
            "points": [dict(zip(["snr_db", "throughput", "fer", "relay_ser", "ci_halfwidth"],
                                [_fmt(x) for x in row])) for row in self.rows()],
        }
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


class _Engine:
    """Stacked map tables for vectorized relay and user processing."""

    def __init__(self, sset: SignalSet, library: Optional[MapLibrary], squares: Sequence[LatinSquare],
                 choice: str, tie_break: str):
        self.sset = sset
        self.library = library
        self.choice = choice
        self.tie_break = tie_break
        self.cells = np.stack([s.cells for s in squares])
        self.t = np.array([s.label_count for s in squares])
        tmax = int(self.t.max())
        n = self.cells.shape[1]
        self.row_inv = np.full((len(squares), n, tmax), -1, dtype=np.int64)
        self.col_inv = np.full((len(squares), n, tmax), -1, dtype=np.int64)
        for k, s in enumerate(squares):
            self.row_inv[k, :, : s.label_count] = s.row_lookup()
            self.col_inv[k, :, : s.label_count] = s.col_lookup()

    def pick(self, z: np.ndarray) -> np.ndarray:
        if self.library is None:
            return np.zeros(z.shape, dtype=np.int64)
        idx, _, _ = choose_maps(self.library, z, self.choice, self.tie_break)
        return idx


@functools.lru_cache(maxsize=None)
def default_library(lam: int, scheme: str) -> MapLibrary:
    """Shared per-process library for a scheme; its geometry cache fills on first use."""
    sset = make_signal_set(lam)
    if scheme == "two-stage":
        return build_base_library(sset)
    if scheme in ("acf-cp", "acf-dc"):
        return build_library(sset, "cartesian" if scheme == "acf-cp" else "direct")
    raise ValueError(f"scheme {scheme!r} has no map library")


def _engine_for(cfg: SimConfig, library: Optional[MapLibrary]) -> _Engine:
    sset = make_signal_set(cfg.lam)
    if cfg.scheme == "fixed-xor":
        return _Engine(sset, None, [xor_map(sset, 2)], cfg.choice, cfg.tie_break)
    if library is None:
        library = default_library(cfg.lam, cfg.scheme)
    expect = 1 if cfg.scheme == "two-stage" else 2
    if library.uses != expect or library.sset != sset:
        raise ValueError("library does not match the configured scheme")
    return _Engine(sset, library, library.squares, cfg.choice, cfg.tie_break)


def _frame_draws(cfg: SimConfig, frames: range):
    """Per-frame random draws, each frame from its own counter-derived stream."""
    L = cfg.length
    n = cfg.exchanges
    ma_uses = 1 if cfg.scheme == "two-stage" else 2
    bits = np.empty((len(frames), 2, L), dtype=np.int64)
    gains = np.empty((len(frames), 4), dtype=complex)
    ma_noise = np.empty((len(frames), n, ma_uses), dtype=complex)
    bc_noise = np.empty((len(frames), 2, n), dtype=complex)
    for i, f in enumerate(frames):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, f]))
        bits[i] = rng.integers(0, 2, size=(2, L))
        gains[i] = rayleigh(rng, 4)
        ma_noise[i] = rayleigh(rng, (n, ma_uses))
        bc_noise[i] = rayleigh(rng, (2, n))
    return bits, gains, ma_noise, bc_noise


def _run_batch(cfg: SimConfig, eng: _Engine, frames: range, sigma2s: Sequence[float]):
    """Tallies for one batch of frames at every SNR point."""
    bits, gains, ma_noise, bc_noise = _frame_draws(cfg, frames)
    sset = eng.sset
    M = sset.M
    F = len(frames)
    n = cfg.exchanges
    ma_uses = ma_noise.shape[2]
    sa = symbols_from_bits(bits[:, 0].reshape(-1), cfg.lam).reshape(F, n, ma_uses)
    sb = symbols_from_bits(bits[:, 1].reshape(-1), cfg.lam).reshape(F, n, ma_uses)
    weights = M ** np.arange(ma_uses - 1, -1, -1)
    row = sa @ weights  # A's transmit tuple index per exchange
    col = sb @ weights
    h_a, h_b, hp_a, hp_b = (gains[:, k] for k in range(4))
    idx = eng.pick(h_b / h_a)
    true_label = eng.cells[idx[:, None], row, col]
    t = eng.t[idx]
    out = []
    for s2 in sigma2s:
        sample = ChannelSample(h_a[:, None], h_b[:, None], hp_a[:, None], hp_b[:, None], s2)
        y = ma_phase(sset, sample, sa, sb, ma_noise)
        ea, eb = relay_ml_estimate(sset, sample, y)
        label = eng.cells[idx[:, None], ea @ weights, eb @ weights]
        la = bc_labels(t[:, None], label, hp_a[:, None], s2, bc_noise[:, 0])
        lb = bc_labels(t[:, None], label, hp_b[:, None], s2, bc_noise[:, 1])
        col_at_a = eng.row_inv[idx[:, None], row, la]
        row_at_b = eng.col_inv[idx[:, None], col, lb]
        ok_a = (col_at_a == col).all(axis=1)
        ok_b = (row_at_b == row).all(axis=1)
        delivered = cfg.length * (ok_a.astype(np.int64) + ok_b)
        out.append((
            int(delivered.sum()),
            int(np.sum(delivered**2)),
            int((~ok_a).sum() + (~ok_b).sum()),
            int((label != true_label).sum()),
        ))
    return out


def run_simulation(config: SimConfig, library: Optional[MapLibrary] = None, threads: int = 1) -> SimResult:
    """Simulate every SNR point of ``config``.

    Frames are processed in fixed batches so results do not depend on
    ``threads``. All SNR points reuse the same per-frame draws.
    """
    eng = _engine_for(config, library)
    if eng.library is not None:
        choose_maps(eng.library, np.array([1.0 + 0.5j]), config.choice, config.tie_break)  # warm caches before threading
    sigma2s = [sigma2_from_snr(s) for s in config.snr_db]
    batches = [range(s, min(s + BATCH, config.frames)) for s in range(0, config.frames, BATCH)]
    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda b: _run_batch(config, eng, b, sigma2s), batches))
    else:
        parts = [_run_batch(config, eng, b, sigma2s) for b in batches]
    F = config.frames
    uses = config.exchanges * config.uses_per_exchange
    n_snr = len(sigma2s)
    # integer tallies keep the merge exact and order independent
    bits = [0] * n_snr
    sq = [0] * n_snr
    err = [0] * n_snr
    rerr = [0] * n_snr
    for part in parts:
        for k, (b, s, e, r) in enumerate(part):
            bits[k] += b
            sq[k] += s
            err[k] += e
            rerr[k] += r
    thr = np.array([b / (F * uses) for b in bits])
    if F > 1:
        # sample variance of per-frame delivered bits, exact in integers
        var = np.array([(F * s - b * b) / (F * (F - 1)) for b, s in zip(bits, sq)]) / uses**2
        ci = Z95 * np.sqrt(var / F)
    else:
        ci = np.full(n_snr, np.inf)
    err = np.array(err, dtype=float)
    rerr = np.array(rerr, dtype=float)
    return SimResult(
        config=config,
        snr_db=np.array(config.snr_db, dtype=float),
        throughput=thr,
        fer=err / (2 * F),
        relay_ser=rerr / (F * config.exchanges),
        ci_halfwidth=ci,
        channel_uses_per_frame=uses,
        bits_per_frame=2 * config.length,
        metadata={
            "bc_signal_set": "t-PSK, unit energy, t = map label count",
            "map_signaling": "genie",
            "map_choice": config.choice if config.scheme != "fixed-xor" else "fixed",
            "tie_break": config.tie_break,
            "relay_ser": "fraction of exchanges whose relay label differs from the noiseless label",
            "rng": "SeedSequence([seed, frame]) per frame, shared across SNR points",
        },
    )
