"""Command-line front end for the compile / evaluate / optimize loop.

Every command reads files, computes, and writes files; nothing is
interactive.  Reports are JSON with a fixed shape: the `payload` field
holds only results, so two runs with the same inputs and seed produce
byte-identical payloads no matter how many threads did the work or how
long it took.  Timing, thread count, and the command echo live next to
the payload, not inside it.

Exit codes: 0 success, 2 input or flag validation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from .algebra import load_model
from .compiler import (PenaltyModulus, compile_game_sentence,
                       compile_tm_sentence, demo_game_constructor, load_tm,
                       read_sentence, sentence_metadata, write_sentence)
from .errors import RoundingError, SyncGamesError
from .games import classical_sync_value, load_game
from .optimizer import OptimizerConfig, maximize_sentence, seesaw_game_value
from .pvm import estimate_modulus, round_to_order_m_unitary, unitary_order_defect
from .scalars import format_rational

REPORT_FORMAT = "syncgames-report/1"
WITNESS_FORMAT = "syncgames-witness/1"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

# commands whose natural output is a table; everything else is JSON only
_TABLE_COMMANDS = {"stability", "modulus"}


class CliError(SyncGamesError):
    """Flag combination or file problem caught at the front door."""


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _default_out(in_path: str, suffix: str) -> str:
    stem = in_path
    for known in (".game", ".json", ".sent", ".tm"):
        if stem.endswith(known):
            stem = stem[: -len(known)]
            break
    return stem + suffix


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        vals = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated integers, got {text!r}")
    if not vals:
        raise CliError(f"{flag} is empty")
    return vals


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated numbers, got {text!r}")
    if not vals:
        raise CliError(f"{flag} is empty")
    return vals


def _penalty_from_args(args) -> PenaltyModulus:
    if getattr(args, "penalty", None):
        if args.penalty_c is not None:
            raise CliError("give either --penalty or --penalty-c, not both")
        return PenaltyModulus.parse(args.penalty)
    slope = Fraction(args.penalty_c) if args.penalty_c is not None else None
    if slope is None:
        return PenaltyModulus.linear()
    if slope < 0:
        raise CliError(f"--penalty-c must be nonnegative, got {slope}")
    if slope == 0:
        print("warning: penalty disabled; the sentence value may exceed "
              "the supremum over measurement tuples", file=sys.stderr)
    return PenaltyModulus.linear(slope)


def _optimizer_config(args, pvm_shape=None) -> OptimizerConfig:
    return OptimizerConfig(
        restarts=args.restarts, max_iters=args.max_iters,
        tol=args.tol, seed=args.seed, threads=args.threads,
        pvm_shape=pvm_shape)


def _check_format(args) -> str:
    fmt = args.format
    if args.cmd in _TABLE_COMMANDS:
        return fmt or "csv"
    if fmt == "csv":
        raise CliError(f"csv output is not available for '{args.cmd}'")
    return fmt or "json"


def _emit(args, argv, t0, inputs: dict, payload: dict,
          csv_text: str | None = None) -> None:
    """Write the report (or table) and print where it went."""
    fmt = _check_format(args)
    report = {
        "format": REPORT_FORMAT,
        "command": list(argv),
        "inputs": inputs,
        "seed": args.seed,
        "threads": args.threads,
        "version": __version__,
        "payload": payload,
        "wall_clock": round(time.perf_counter() - t0, 6),
    }
    text = (csv_text if fmt == "csv"
            else json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.out:
        _atomic_write(args.out, text)
        print(f"wrote {args.out}")
    elif args.format is not None:
        # explicit machine format without a file goes to stdout
        sys.stdout.write(text)


def _csv_table(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(
            f"{v:.12g}" if isinstance(v, float) else str(v) for v in row))
        buf.write("\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_compile(args, argv, t0) -> int:
    game = load_game(args.game)
    penalty = _penalty_from_args(args)
    sentence = compile_game_sentence(game, penalty)
    meta = sentence_metadata(sentence, game=game, penalty=penalty)
    out = args.out or _default_out(args.game, ".sent")
    tmp = out + ".tmp"
    write_sentence(tmp, sentence, meta)
    os.replace(tmp, out)
    print(f"wrote {out}")
    print(f"lipschitz bound: {meta['lipschitz-bound']}")
    print(f"restricted: {meta['restricted']}")
    return EXIT_OK


def cmd_eval(args, argv, t0) -> int:
    sentence, meta = read_sentence(args.sentence)
    algebra = load_model(args.model)
    hint = None
    if "pvm-shape" in meta:
        n_s, _, m_s = meta["pvm-shape"].partition("x")
        hint = (int(n_s), int(m_s))
    cert = maximize_sentence(sentence, algebra, _optimizer_config(args, hint))
    payload = {
        "value": cert.value,
        "bound_kind": "lower",
        "best_restart": cert.best_restart,
        "restart_values": list(cert.restart_values),
        "sentence_meta": meta,
    }
    print(f"value (lower bound): {cert.value:.10f}")
    _emit(args, argv, t0,
          {args.sentence: _sha256(args.sentence), args.model: _sha256(args.model)},
          payload)
    return EXIT_OK


def cmd_value(args, argv, t0) -> int:
    game = load_game(args.game)
    algebra = load_model(args.model)
    cfg = _optimizer_config(args)

    classical = None
    try:
        cls_value, cls_assignment = classical_sync_value(
            game, cap=args.cap, threads=args.threads)
        classical = (cls_value, cls_assignment)
        print(f"classical value: {format_rational(cls_value)} "
              f"= {float(cls_value):.10f}")
    except SyncGamesError as exc:
        print(f"classical value skipped: {exc}")

    cert = seesaw_game_value(game, algebra, cfg)
    print(f"seesaw lower bound: {cert.value:.10f} "
          f"(best restart {cert.best_restart})")

    witness_path = args.witness_out
    if witness_path is None and args.out:
        witness_path = _default_out(args.out, ".witness.json")
    if witness_path:
        blob = {
            "format": WITNESS_FORMAT,
            "algebra": algebra.to_json(),
            "n": game.n,
            "m": game.m,
            "value": cert.value,
            "elements": [e.to_lists() for e in cert.witness],
        }
        _atomic_write(witness_path,
                      json.dumps(blob, indent=2, sort_keys=True) + "\n")
        print(f"witness: {witness_path}")

    payload = {
        "seesaw": cert.value,
        "bound_kind": "lower",
        "best_restart": cert.best_restart,
        "restart_values": list(cert.restart_values),
        "witness": witness_path,
        "classical": format_rational(classical[0]) if classical else None,
        "classical_float": float(classical[0]) if classical else None,
        "assignment": list(classical[1]) if classical else None,
    }
    _emit(args, argv, t0,
          {args.game: _sha256(args.game), args.model: _sha256(args.model)},
          payload)
    return EXIT_OK


def cmd_classical(args, argv, t0) -> int:
    game = load_game(args.game)
    value, assignment = classical_sync_value(game, cap=args.cap,
                                             threads=args.threads)
    print(f"classical value: {format_rational(value)} = {float(value):.10f}")
    print(f"assignment: {','.join(str(a) for a in assignment)}")
    payload = {
        "value": format_rational(value),
        "value_float": float(value),
        "assignment": list(assignment),
        "assignments_searched": game.m ** game.n,
    }
    _emit(args, argv, t0, {args.game: _sha256(args.game)}, payload)
    return EXIT_OK


def _stability_trial(m: int, d: int, rng) -> tuple[float, float] | None:
    """One perturbed order-m unitary, rounded back; (eps, distance)."""
    from .algebra import make_algebra
    basis = np.linalg.qr(rng.standard_normal((d, d))
                         + 1j * rng.standard_normal((d, d)))[0]
    roots = np.exp(2j * math.pi * rng.integers(0, m, size=d) / m)
    exact = (basis * roots) @ basis.conj().T
    noise = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    noise /= np.linalg.norm(noise, 2)
    delta = float(rng.uniform(0.0, 0.9)) * 2.0 ** (-m) / (m + 2)
    algebra = make_algebra([(d, 1)])
    v = algebra.element([exact + delta * noise])
    eps = unitary_order_defect(v, m)
    if eps <= 0.0 or eps >= 2.0 ** (-m):
        return None
    _, dist = round_to_order_m_unitary(v, m)
    return eps, dist


def cmd_stability(args, argv, t0) -> int:
    m = args.m
    if m < 1:
        raise CliError(f"--m must be at least 1, got {m}")
    dims = _parse_int_list(args.dims, "--dims")
    if args.trials < 1:
        raise CliError("--trials must be at least 1")
    bound = 2.0 ** (m + 2)
    rows = []
    for i in range(args.trials):
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(i,)))
        d = dims[i % len(dims)]
        got = _stability_trial(m, d, rng)
        if got is None:
            continue
        eps, dist = got
        rows.append([i, m, d, eps, dist, dist / eps])
    max_ratio = max((r[5] for r in rows), default=0.0)
    print(f"{len(rows)}/{args.trials} trials rounded; "
          f"max distance/eps = {max_ratio:.6g}, bound 2^{m + 2} = {bound:g}")
    payload = {
        "m": m,
        "dims": dims,
        "trials": args.trials,
        "completed": len(rows),
        "max_ratio": max_ratio,
        "bound": bound,
        "within_bound": max_ratio <= bound,
        "rows": [[r[0], r[1], r[2], float(f"{r[3]:.12g}"),
                  float(f"{r[4]:.12g}"), float(f"{r[5]:.12g}")] for r in rows],
    }
    csv_text = _csv_table(["trial", "m", "dim", "epsilon", "distance", "ratio"],
                          rows)
    _emit(args, argv, t0, {}, payload, csv_text)
    return EXIT_OK


def cmd_modulus(args, argv, t0) -> int:
    dims = _parse_int_list(args.dims, "--dims")
    eps_grid = _parse_float_list(args.eps_grid, "--eps-grid")
    if args.trials < 1:
        raise CliError("--trials must be at least 1")
    table = estimate_modulus(args.n, args.m, dims, eps_grid,
                             args.trials, args.seed)
    print(f"modulus table over {table.trials} trials, max dim {table.max_dim}:")
    for eps, delta in table.entries:
        print(f"  eps {eps:<10.6g} delta_hat {delta:.6g}")
    payload = {
        "n": args.n,
        "m": args.m,
        "trials": table.trials,
        "max_dim": table.max_dim,
        "entries": [[float(f"{e:.12g}"), float(f"{d:.12g}")]
                    for e, d in table.entries],
    }
    csv_text = _csv_table(
        ["epsilon", "delta_hat", "trials", "max_dim", "seed"],
        [[e, d, table.trials, table.max_dim, table.seed]
         for e, d in table.entries])
    _emit(args, argv, t0, {}, payload, csv_text)
    return EXIT_OK


def cmd_tm(args, argv, t0) -> int:
    if args.ctor != "demo":
        raise CliError(f"unknown game constructor {args.ctor!r}; only the "
                       "non-normative 'demo' constructor ships with this package")
    tm = load_tm(args.tm)
    penalty = _penalty_from_args(args)
    sentence = compile_tm_sentence(tm, demo_game_constructor, penalty)
    game = demo_game_constructor(tm)
    meta = sentence_metadata(sentence, game=game, penalty=penalty,
                             extra={"constructor": "demo (non-normative: every "
                                    "machine maps to the same benchmark game)"})
    out = args.out or _default_out(args.tm, ".sent")
    tmp = out + ".tmp"
    write_sentence(tmp, sentence, meta)
    os.replace(tmp, out)
    print(f"wrote {out}")
    print(f"restricted: {meta['restricted']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="root RNG seed (default 0)")
    common.add_argument("--threads", type=int, default=1,
                        help="parallelism width (default 1)")
    common.add_argument("--precision", type=int, default=64,
                        help="float precision in bits; only 64 is supported")
    common.add_argument("--out", default=None, help="output file path")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="machine output format (csv only for tables)")

    opt = argparse.ArgumentParser(add_help=False)
    opt.add_argument("--restarts", type=int, default=32)
    opt.add_argument("--max-iters", type=int, default=500)
    opt.add_argument("--tol", type=float, default=1e-8)

    pen = argparse.ArgumentParser(add_help=False)
    pen.add_argument("--penalty-c", default=None,
                     help="slope of the linear penalty (rational, default 100)")
    pen.add_argument("--penalty", default=None,
                     help="piecewise-linear penalty, e.g. 'pl[0:0,1/4:5]+100'")

    parser = argparse.ArgumentParser(
        prog="syncgames",
        description="synchronous games as sentences over tracial algebras")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("compile", parents=[common, pen],
                       help="game file -> penalized sentence file")
    p.add_argument("game")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("eval", parents=[common, opt],
                       help="maximize a sentence over a model")
    p.add_argument("sentence")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("value", parents=[common, opt],
                       help="classical and see-saw values of a game")
    p.add_argument("game")
    p.add_argument("--model", required=True)
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--witness-out", default=None)
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("classical", parents=[common],
                       help="exact classical value by exhaustive search")
    p.add_argument("game")
    p.add_argument("--cap", type=int, default=10_000_000)
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("stability", parents=[common],
                       help="randomized order-m unitary rounding experiment")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--dims", default="2,4,8")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("modulus", parents=[common],
                       help="empirical defect-vs-distance table")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--dims", default="2,3")
    p.add_argument("--eps-grid", default="0.01,0.02,0.05,0.1,0.2,0.5")
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_modulus)

    p = sub.add_parser("tm", parents=[common, pen],
                       help="Turing machine file -> sentence file")
    p.add_argument("tm")
    p.add_argument("--ctor", default="demo")
    p.set_defaults(func=cmd_tm)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return EXIT_INVALID if code else EXIT_OK
    if args.precision != 64:
        print("error: only 64-bit float precision is supported", file=sys.stderr)
        return EXIT_INVALID
    t0 = time.perf_counter()
    try:
        _check_format(args)  # reject bad format combos before any work
        return args.func(args, list(argv), t0)
    except RoundingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SyncGamesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
