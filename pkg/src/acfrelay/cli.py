"""Command-line entry point."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .constellation import make_signal_set
from .direct import direct_map
from .fadestates import FadeState, classify, enumerate_singular_fades
from .latin import FORMAT_VERSION, MapFormatError, MapRecord, dumps_map, load_map
from .mapgen import (
    NotSingularError,
    base_clustering,
    build_library,
    cartesian_product,
    rotate_map,
    transpose_map,
)
from .metrics import TIE_BREAKS, GridSpec, cluster_min_distance, effective_min_distance, quantize_plane
from .simulator import SCHEMES, SimConfig, run_simulation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MALFORMED = 3
EXIT_VERIFY = 4
EXIT_IO = 5
EXIT_INFEASIBLE = 6

REMOVAL_TOL = 1e-6
SINGULAR_TOL = 1e-9


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.extra = extra


def _emit_error(err: CliError) -> None:
    line = {"error": err.kind, "exit": err.code, "message": str(err), **err.extra}
    print(json.dumps(line, sort_keys=True), file=sys.stderr)


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise CliError(EXIT_IO, "io", f"cannot write {path}: {e.strerror}") from e


def _parse_complex(text: str) -> complex:
    try:
        re_, im_ = (float(x) for x in text.split(","))
    except ValueError as e:
        raise CliError(EXIT_INFEASIBLE, "bad-fade", f"expected re,im but got {text!r}") from e
    return complex(re_, im_)


def parse_snr(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive) or a comma list; ``inf`` means noiseless."""
    if ":" in text:
        a, s, b = (float(x) for x in text.split(":"))
        if s <= 0 or b < a:
            raise ValueError("bad SNR range")
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        return tuple(float(a + s * i) for i in range(n))
    return tuple(float(x) for x in text.split(","))


def _seed(arg: Optional[int]) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("PNC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as e:
        raise CliError(EXIT_INFEASIBLE, "bad-seed", f"PNC_SEED must be an integer, got {env!r}") from e


def _signal_set(lam: int):
    try:
        return make_signal_set(lam)
    except ValueError as e:
        raise CliError(EXIT_INFEASIBLE, "bad-lambda", str(e)) from e


# --- subcommands --------------------------------------------------------------

def cmd_fades(args) -> int:
    sset = _signal_set(args.lam)
    fades = enumerate_singular_fades(sset)
    states = [
        {"re": f.re, "im": f.im, "gamma": f.gamma, "theta": f.theta, "circle": classify(f, fades)}
        for f in fades.states
    ]
    _write(args.out, json.dumps({"format_version": FORMAT_VERSION, "lambda": args.lam, "states": states},
                                indent=2) + "\n")
    return EXIT_OK


def _gen_record(sset, fades, h: complex, method: str, emit_constraints: Optional[str]) -> MapRecord:
    idx = fades.index(h)
    if idx is None:
        raise CliError(EXIT_INFEASIBLE, "non-singular", f"{h} is not a singular fade state")
    fade = fades.states[idx]
    if method == "cartesian":
        sq = cartesian_product(base_clustering(sset, fade, fades))
        return MapRecord(sq, fade, "cartesian", sset.lam, sset.labeling)
    if method == "direct":
        if sset.lam != 2:
            raise CliError(EXIT_INFEASIBLE, "infeasible", "direct clustering needs --lambda 2")
        res = direct_map(sset, fade, fades)
        if emit_constraints:
            _write(emit_constraints, json.dumps(res.constraints.to_dict()) + "\n")
        return MapRecord(res.square, fade, res.method, sset.lam, sset.labeling,
                         extra={"within_budget": res.within_budget})
    if method.startswith("rotate:"):
        try:
            k = int(method.split(":", 1)[1])
        except ValueError as e:
            raise CliError(EXIT_INFEASIBLE, "bad-method", f"bad rotation {method!r}") from e
        sq = rotate_map(cartesian_product(base_clustering(sset, fade, fades)), k, sset)
        target = FadeState.from_complex(fade.value * np.exp(2j * np.pi * k / sset.M))
        t_idx = fades.index(target)
        return MapRecord(sq, fades.states[t_idx] if t_idx is not None else target, "rotate",
                         sset.lam, sset.labeling, extra={"source_fade": fade.to_dict(), "k": k})
    if method == "transpose":
        sq = transpose_map(cartesian_product(base_clustering(sset, fade, fades)))
        target = FadeState.from_complex(1 / fade.value)
        t_idx = fades.index(target)
        return MapRecord(sq, fades.states[t_idx] if t_idx is not None else target, "transpose",
                         sset.lam, sset.labeling, extra={"source_fade": fade.to_dict()})
    raise CliError(EXIT_INFEASIBLE, "bad-method", f"unknown method {method!r}")


def cmd_latin_gen(args) -> int:
    sset = _signal_set(args.lam)
    fades = enumerate_singular_fades(sset)
    rec = _gen_record(sset, fades, _parse_complex(args.fade), args.method, args.emit_constraints)
    _write(args.out, dumps_map(rec))
    return EXIT_OK


def cmd_latin_lib(args) -> int:
    sset = _signal_set(args.lam)
    if args.method not in ("cartesian", "direct"):
        raise CliError(EXIT_INFEASIBLE, "bad-method", "library method must be cartesian or direct")
    if args.method == "direct" and args.lam != 2:
        raise CliError(EXIT_INFEASIBLE, "infeasible", "direct clustering needs --lambda 2")
    lib = build_library(sset, args.method)
    out = Path(args.out)
    index = []
    for i, (fade, rec) in enumerate(lib):
        name = f"map_{i:03d}.json"
        _write(str(out / name), dumps_map(rec))
        index.append({"index": i, "file": name, "fade": fade.to_dict(), "method": rec.method,
                      "label_count": rec.square.label_count})
    _write(str(out / "index.json"), json.dumps({"format_version": FORMAT_VERSION, "lambda": args.lam,
                                                "method": args.method, "maps": index}, indent=2) + "\n")
    return EXIT_OK


def verify_record(rec: MapRecord) -> dict:
    """Latin validation plus the removal check at the recorded fade."""
    report: dict = {"order": rec.square.order, "label_count": rec.square.label_count}
    v = rec.square.validate()
    report["latin"] = v.ok
    if not v.ok:
        report["violation"] = v.violation.to_dict()
    if rec.fade is not None and v.ok:
        try:
            sset = make_signal_set(rec.lam)
            z = rec.fade.value
            d_map = cluster_min_distance(rec.square, sset, z)
            d_raw = effective_min_distance(sset, z)
        except ValueError as e:
            raise CliError(EXIT_MALFORMED, "malformed", f"map does not fit its signal set: {e}") from e
        report["cluster_min_distance"] = d_map
        report["effective_min_distance"] = d_raw
        report["removes_fade"] = bool(d_map > REMOVAL_TOL)
        report["fade_is_singular"] = bool(d_raw < SINGULAR_TOL)
    report["ok"] = bool(v.ok and report.get("removes_fade", True))
    return report


def cmd_verify(args) -> int:
    try:
        rec = load_map(args.mapfile)
    except FileNotFoundError as e:
        raise CliError(EXIT_IO, "io", f"cannot read {args.mapfile}") from e
    except OSError as e:
        raise CliError(EXIT_IO, "io", f"cannot read {args.mapfile}: {e.strerror}") from e
    except MapFormatError as e:
        raise CliError(EXIT_MALFORMED, "malformed", str(e)) from e
    report = verify_record(rec)
    print(json.dumps(report, sort_keys=True))
    if not report["ok"]:
        extra = {"violation": report["violation"]} if "violation" in report else {}
        raise CliError(EXIT_VERIFY, "verify-failed", "map failed verification", **extra)
    return EXIT_OK


def cmd_quantize(args) -> int:
    try:
        grid = GridSpec.parse(args.grid)
    except ValueError as e:
        raise CliError(EXIT_INFEASIBLE, "bad-grid", str(e)) from e
    sset = _signal_set(args.lam)
    if args.library == "direct" and args.lam != 2:
        raise CliError(EXIT_INFEASIBLE, "infeasible", "direct clustering needs --lambda 2")
    lib = build_library(sset, args.library)
    region = quantize_plane(lib, grid, args.method, threads=args.threads, tie_break=args.tie_break)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im", "chosen_index", "tie_flag"])
    re_vals, im_vals = grid.re, grid.im
    for i, im in enumerate(im_vals):
        for j, re in enumerate(re_vals):
            w.writerow([repr(float(re)), repr(float(im)), int(region.index[i, j]), int(region.tie[i, j])])
    _write(args.out, buf.getvalue())
    legend = {
        "format_version": FORMAT_VERSION,
        "lambda": args.lam,
        "library": args.library,
        "method": args.method,
        "tie_break": args.tie_break,
        "fades": [{"index": i, **f.to_dict(), "label_count": sq.label_count}
                  for i, (f, sq) in enumerate(zip(lib.fades.states, lib.squares))],
    }
    legend_path = args.legend or (None if args.out in (None, "-") else str(Path(args.out).with_suffix(".legend.json")))
    if legend_path:
        _write(legend_path, json.dumps(legend, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        snr = parse_snr(args.snr)
        cfg = SimConfig(scheme=args.scheme, snr_db=snr, frames=args.frames, frame_length=args.frame_length,
                        seed=_seed(args.seed), lam=args.lam, choice=args.choice, tie_break=args.tie_break)
    except ValueError as e:
        raise CliError(EXIT_INFEASIBLE, "bad-config", str(e)) from e
    res = run_simulation(cfg, threads=args.threads)
    _write(args.out, res.to_csv())
    if args.meta:
        _write(args.meta, res.to_json())
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acfrelay", description="Network-coding maps for two-way PSK relaying.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fades", help="list singular fade states")
    f.add_argument("--lambda", dest="lam", type=int, default=2)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fades)

    lat = sub.add_parser("latin", help="generate relay maps")
    lsub = lat.add_subparsers(dest="latin_command", required=True)
    g = lsub.add_parser("gen", help="one map for one fade state")
    g.add_argument("--fade", required=True, help="re,im of the fade the method starts from")
    g.add_argument("--method", default="cartesian", help="cartesian | direct | rotate:k | transpose")
    g.add_argument("--lambda", dest="lam", type=int, default=2)
    g.add_argument("--out")
    g.add_argument("--emit-constraints", help="write the constraint set (direct only)")
    g.set_defaults(func=cmd_latin_gen)
    lb = lsub.add_parser("lib", help="maps for every singular fade state")
    lb.add_argument("--method", default="cartesian")
    lb.add_argument("--lambda", dest="lam", type=int, default=2)
    lb.add_argument("--out", required=True, help="output directory")
    lb.set_defaults(func=cmd_latin_lib)

    v = sub.add_parser("verify", help="validate a map file and check it removes its fade")
    v.add_argument("mapfile")
    v.set_defaults(func=cmd_verify)

    q = sub.add_parser("quantize", help="choose a map over a grid of fade values")
    q.add_argument("--grid", default="-2,2,-2,2,0.02", help="re0,re1,im0,im1,step")
    q.add_argument("--method", choices=("full", "simple"), default="full")
    q.add_argument("--library", choices=("cartesian", "direct"), default="cartesian")
    q.add_argument("--lambda", dest="lam", type=int, default=2)
    q.add_argument("--tie-break", choices=TIE_BREAKS, default="nearest")
    q.add_argument("--out")
    q.add_argument("--legend")
    q.add_argument("--threads", type=int, default=1)
    q.set_defaults(func=cmd_quantize)

    s = sub.add_parser("simulate", help="Monte-Carlo throughput curve")
    s.add_argument("--scheme", choices=SCHEMES, required=True)
    s.add_argument("--snr", default="0:5:60", help="start:step:stop or comma list (dB); inf is noiseless")
    s.add_argument("--frames", type=int, default=1000)
    s.add_argument("--frame-length", type=int)
    s.add_argument("--seed", type=int, help="defaults to $PNC_SEED, then 0")
    s.add_argument("--lambda", dest="lam", type=int, default=2)
    s.add_argument("--choice", choices=("full", "simple"), default="full")
    s.add_argument("--tie-break", choices=TIE_BREAKS, default="labels")
    s.add_argument("--out")
    s.add_argument("--meta", help="also write a JSON summary here")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_simulate)
    return p


_VALUE_FLAGS = ("--fade", "--grid", "--snr")


def _join_negative(argv: Sequence[str]) -> list[str]:
    # argparse reads "-0.5,0.5" as an option; glue such values to their flag
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-"):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_join_negative(argv))
    if getattr(args, "threads", 1) < 1:
        _emit_error(CliError(EXIT_INFEASIBLE, "bad-threads", "--threads must be >= 1"))
        return EXIT_INFEASIBLE
    try:
        return args.func(args)
    except CliError as e:
        _emit_error(e)
        return e.code
    except NotSingularError as e:
        _emit_error(CliError(EXIT_INFEASIBLE, "non-singular", str(e)))
        return EXIT_INFEASIBLE


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Alias of :func:`main` for programmatic use."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
