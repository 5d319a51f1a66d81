"""Command line front end.

Every subcommand prints exactly one JSON object on stdout on success
and writes its artifacts under the output directory (``--out``, else
the ``SMOA_OUT`` environment variable, else the working directory).
Progress notes go to stderr and are silenced by ``--quiet``. All file
writes are atomic (temp file plus rename).

Exit codes: 0 success, 1 usage, 2 validation (shapes, divisibility,
malformed or stale artifacts), 3 file I/O, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .adapters import (
    AdapterInit,
    init_lora,
    init_smoa,
    load_adapter,
    lora_update,
    save_adapter,
    smoa_update,
    update,
)
from .capacity import (
    achieved_rank,
    load_witness,
    lora_gap,
    make_witness,
    rank_ceiling,
    save_witness,
    smoa_exact_fit,
)
from .diagnostics import ActivationSample, full_report, save_report
from .errors import (
    ConfigurationError,
    DimensionError,
    FormatError,
    NumericalError,
    RangeError,
)
from .fileutil import atomic_write_text, sha256_file
from .gen import diagonal_matrix, gaussian_matrix, low_rank_plus_noise, spiked_matrix
from .matio import load_matrix, save_matrix
from .preprocess import build_plan, load_plan, save_plan
from .spectrum import default_tolerance, singular_values
from .trainer import FitConfig, FitProblem, fit, save_trace

__all__ = ["main"]

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _note(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _out_dir(args) -> Path:
    target = args.out or os.environ.get("SMOA_OUT") or "."
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_values(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --values list {text!r}") from exc


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_report_artifact(args, name: str, payload: dict, csv_header: list[str], csv_rows: list[list]) -> str:
    out = _out_dir(args)
    if args.format == "csv":
        path = out / f"{name}.csv"
        _write_table(path, csv_header, csv_rows)
    else:
        path = out / f"{name}.json"
        atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return str(path)


def cmd_gen(args) -> dict:
    kind = args.kind
    if kind == "gaussian":
        matrix = gaussian_matrix(args.rows, args.cols, args.seed, args.scale)
    elif kind == "diagonal":
        if args.values is None:
            raise ConfigurationError("kind=diagonal needs --values")
        matrix = diagonal_matrix(args.rows, args.cols, _parse_values(args.values))
    elif kind == "spiked":
        matrix = spiked_matrix(args.rows, args.cols, args.spikes, args.strength, args.seed)
    else:  # low-rank-plus-noise
        matrix = low_rank_plus_noise(args.rows, args.cols, args.rank, args.noise, args.seed)
    path = _out_dir(args) / args.name
    save_matrix(matrix, path)
    _note(args, f"wrote {path}")
    return {
        "path": str(path),
        "rows": matrix.rows,
        "cols": matrix.cols,
        "kind": kind,
        "seed": args.seed,
        "hash": sha256_file(path),
    }


def cmd_plan(args) -> dict:
    w0 = load_matrix(args.w0)
    plan = build_plan(w0, args.k)
    source_hash = sha256_file(args.w0)
    path = _out_dir(args) / args.name
    save_plan(plan, path, source_hash=source_hash)
    _note(args, f"wrote {path}")
    return {
        "path": str(path),
        "k": plan.k,
        "d_out": plan.d_out,
        "d_in": plan.d_in,
        "block_rows": plan.block_shape[0],
        "block_cols": plan.block_shape[1],
        "source_hash": source_hash,
    }


def cmd_adapter(args) -> dict:
    plan = load_plan(args.plan)
    init = AdapterInit(scheme=args.init, seed=args.seed, scale=args.scale)
    if args.kind == "smoa":
        adapter = init_smoa(plan, args.r, init)
        k, rho = plan.k, adapter.rho
    else:
        adapter = init_lora(plan.d_out, plan.d_in, args.r, init)
        k, rho = None, None
    path = _out_dir(args) / args.name
    written = save_adapter(
        adapter,
        path,
        init=init,
        plan_path=args.plan,
        plan_hash=sha256_file(args.plan),
    )
    _note(args, f"wrote {len(written)} files under {path.parent}")
    return {
        "path": str(path),
        "kind": args.kind,
        "r": args.r,
        "k": k,
        "rho": rho,
        "params": adapter.trainable_parameters,
        "plan_hash": sha256_file(args.plan),
    }


def cmd_update(args) -> dict:
    adapter = load_adapter(args.adapter)
    delta = update(adapter)
    path = _out_dir(args) / args.name
    save_matrix(delta, path)
    _note(args, f"wrote {path}")
    return {
        "path": str(path),
        "rows": delta.rows,
        "cols": delta.cols,
        "achieved_rank": achieved_rank(delta, args.epsilon),
        "hash": sha256_file(path),
    }


def cmd_rank(args) -> dict:
    if (args.matrix is None) == (args.adapter is None):
        raise ConfigurationError("pass exactly one of --matrix or --adapter")
    if args.matrix is not None:
        matrix = load_matrix(args.matrix)
        source = str(args.matrix)
    else:
        matrix = update(load_adapter(args.adapter))
        source = str(args.adapter)
    values = singular_values(matrix)
    epsilon = args.epsilon
    if epsilon is None:
        epsilon = default_tolerance(matrix.shape, values[0])
    if epsilon < 0:
        raise RangeError(f"epsilon must be nonnegative, got {epsilon}")
    rank = int(np.count_nonzero(values > epsilon))
    payload = {
        "source": source,
        "rows": matrix.rows,
        "cols": matrix.cols,
        "rank": rank,
        "epsilon": epsilon,
    }
    payload["report_path"] = _write_report_artifact(
        args, "rank",
        payload,
        ["rank", "epsilon", "rows", "cols"],
        [[rank, float(epsilon), matrix.rows, matrix.cols]],
    )
    return payload


def cmd_ceiling(args) -> dict:
    plan = load_plan(args.plan)
    report = rank_ceiling(plan, args.r, args.epsilon)
    per_block = [
        {"block": g + 1, "s_k": b.s_k, "anchor_rank": b.anchor_rank, "block_ceiling": b.block_ceiling}
        for g, b in enumerate(report.per_block)
    ]
    payload = {
        "per_block": per_block,
        "total_ceiling": report.total_ceiling,
        "lora_ceiling": report.lora_ceiling,
        "separated": report.separated,
        "epsilon": report.epsilon,
    }
    payload["report_path"] = _write_report_artifact(
        args, "ceiling",
        payload,
        ["block", "s_k", "anchor_rank", "block_ceiling"],
        [[b["block"], b["s_k"], b["anchor_rank"], b["block_ceiling"]] for b in per_block],
    )
    return payload


def cmd_witness(args) -> dict:
    plan = load_plan(args.plan)
    witness = make_witness(plan, args.rho, args.seed)
    directory = _out_dir(args) / args.dir
    manifest = save_witness(witness, directory)
    _note(args, f"wrote witness bundle under {directory}")
    return {
        "dir": str(directory),
        "manifest": str(manifest),
        "rho": witness.rho,
        "seed": witness.seed,
        "reordered_target_rank": witness.reordered_target_rank,
    }


def cmd_gap(args) -> dict:
    witness = load_witness(args.witness)
    value = lora_gap(witness, args.r)
    payload = {
        "witness": str(args.witness),
        "r": args.r,
        "gap": value,
        "reordered_target_rank": witness.reordered_target_rank,
    }
    payload["report_path"] = _write_report_artifact(
        args, "gap", payload, ["r", "gap"], [[args.r, float(value)]]
    )
    return payload


def cmd_fit(args) -> dict:
    target = load_matrix(args.target)
    plan = load_plan(args.plan) if args.plan is not None else None
    problem = FitProblem(target=target, kind=args.kind, r=args.r, plan=plan)
    init = AdapterInit(scheme=args.init, seed=args.seed, scale=args.scale)
    config = FitConfig(
        step_size=args.step_size,
        max_steps=args.max_steps,
        grad_tol=args.grad_tol,
    )
    trace = fit(problem, init, config)
    out = _out_dir(args)
    trace_path = out / f"{args.prefix}.trace.csv"
    summary_path = out / f"{args.prefix}.summary.json"
    adapter_path = out / f"{args.prefix}.adapter.json"
    save_trace(trace, trace_path, summary_path)
    save_adapter(
        trace.adapter,
        adapter_path,
        init=init,
        plan_path=args.plan,
        plan_hash=sha256_file(args.plan) if args.plan is not None else None,
    )
    _note(args, f"fit finished after {trace.step_count} steps")
    return {
        "kind": args.kind,
        "r": args.r,
        "final_loss": trace.final_loss,
        "relative_loss": trace.relative_loss,
        "floor": trace.floor,
        "converged": trace.converged,
        "steps": trace.step_count,
        "trace_path": str(trace_path),
        "summary_path": str(summary_path),
        "adapter_path": str(adapter_path),
    }


def cmd_diagnose(args) -> dict:
    matrix = load_matrix(args.matrix)
    activations = None
    if args.activations is not None:
        activations = ActivationSample(load_matrix(args.activations))
    report = full_report(
        matrix,
        activations,
        epsilon=args.epsilon,
        noise_scale=args.noise_scale,
        seed=args.seed,
    )
    out = _out_dir(args)
    json_path = out / "report.json"
    hist_path = out / "nu_histogram.csv"
    overlaps_path = out / "overlaps.csv"
    save_report(report, json_path, hist_path, overlaps_path, bins=args.bins)
    _note(args, f"wrote {json_path}, {hist_path}, {overlaps_path}")
    return {
        "rows": report.rows,
        "cols": report.cols,
        "numerical_rank": report.numerical_rank,
        "outlier_count": report.outlier_count,
        "bulk_edge": report.bulk_edge,
        "noise_scale": report.noise_scale,
        "report_path": str(json_path),
        "histogram_path": str(hist_path),
        "overlaps_path": str(overlaps_path),
    }


def _sweep_seeds(master: int, cell: int, trial: int) -> list[int]:
    state = np.random.SeedSequence([master, cell, trial]).generate_state(4)
    return [int(x) for x in state]


def cmd_sweep(args) -> dict:
    with open(args.spec, "r", encoding="utf-8") as handle:
        try:
            spec = json.load(handle)
        except json.JSONDecodeError as exc:
            raise FormatError(f"sweep spec is not valid JSON: {exc}") from exc
    try:
        dims = [int(d) for d in spec["dims"]]
        ks = [int(k) for k in spec["ks"]]
        rs = [int(r) for r in spec["rs"]]
        trials = int(spec["trials"])
        master = int(spec["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"sweep spec needs dims/ks/rs/trials/seed: {exc}") from exc
    if trials < 1:
        raise ConfigurationError(f"trials must be positive, got {trials}")
    for d in dims:
        for k in ks:
            if d % k:
                raise ConfigurationError(f"k={k} must divide d={d}")
            for r in rs:
                if r % k:
                    raise ConfigurationError(f"k={k} must divide r={r}")
    rows: list[list] = []
    cell = 0
    for d in dims:
        for k in ks:
            for r in rs:
                for trial in range(trials):
                    s_w0, s_witness, s_lora, s_smoa = _sweep_seeds(master, cell, trial)
                    w0 = gaussian_matrix(d, d, s_w0)
                    plan = build_plan(w0, k)
                    witness = make_witness(plan, r // k, s_witness)
                    ceiling = rank_ceiling(plan, r, args.epsilon)
                    lora = init_lora(d, d, r, AdapterInit("gaussian", s_lora))
                    smoa = init_smoa(plan, r, AdapterInit("gaussian", s_smoa))
                    exact = smoa_exact_fit(witness)
                    smoa_residual = (smoa_update(exact) - witness.target).norm() ** 2
                    rows.append([
                        "lora", d, k, r, trial,
                        lora.trainable_parameters,
                        achieved_rank(lora_update(lora), args.epsilon),
                        r,
                        float(lora_gap(witness, r)),
                    ])
                    rows.append([
                        "smoa", d, k, r, trial,
                        smoa.trainable_parameters,
                        achieved_rank(smoa_update(smoa), args.epsilon),
                        ceiling.total_ceiling,
                        float(smoa_residual),
                    ])
                cell += 1
                _note(args, f"cell d={d} k={k} r={r} done")
    path = _out_dir(args) / args.name
    _write_table(
        path,
        ["method", "d", "k", "r", "trial", "params", "achieved_rank", "ceiling", "gap"],
        rows,
    )
    return {
        "path": str(path),
        "rows": len(rows),
        "cells": cell,
        "trials": trials,
        "seed": master,
    }


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="output directory (default: $SMOA_OUT or .)")
    parser.add_argument("--format", choices=["json", "csv"], default="json",
                        help="format for small report artifacts")
    parser.add_argument("--quiet", action="store_true", help="suppress stderr notes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smoa", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen", help="generate a seeded test matrix")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--kind", choices=["gaussian", "diagonal", "spiked", "low-rank-plus-noise"],
                   required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0, help="gaussian entry scale")
    p.add_argument("--values", help="diagonal values, comma separated")
    p.add_argument("--spikes", type=int, default=0)
    p.add_argument("--strength", type=float, default=10.0,
                   help="spike size in bulk-edge units")
    p.add_argument("--rank", type=int, default=1, help="signal rank")
    p.add_argument("--noise", type=float, default=1.0, help="noise level")
    p.add_argument("--name", default="matrix.mat")
    _add_common(p)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("plan", help="build a block plan from a weight matrix")
    p.add_argument("--w0", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--name", default="plan.json")
    _add_common(p)
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("adapter", help="initialize an adapter over a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--kind", choices=["smoa", "lora"], default="smoa")
    p.add_argument("--init", choices=["zero-update", "gaussian"], default="zero-update")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--name", default="adapter.json")
    _add_common(p)
    p.set_defaults(handler=cmd_adapter)

    p = sub.add_parser("update", help="materialize an adapter's weight update")
    p.add_argument("--adapter", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--name", default="update.mat")
    _add_common(p)
    p.set_defaults(handler=cmd_update)

    p = sub.add_parser("rank", help="numerical rank of a matrix or adapter update")
    p.add_argument("--matrix")
    p.add_argument("--adapter")
    p.add_argument("--epsilon", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("ceiling", help="rank ceiling of a plan at budget r")
    p.add_argument("--plan", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ceiling)

    p = sub.add_parser("witness", help="build a separation witness bundle")
    p.add_argument("--plan", required=True)
    p.add_argument("--rho", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dir", default="witness")
    _add_common(p)
    p.set_defaults(handler=cmd_witness)

    p = sub.add_parser("gap", help="best rank-r approximation gap of a witness")
    p.add_argument("--witness", required=True, help="witness bundle directory")
    p.add_argument("--r", type=int, required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_gap)

    p = sub.add_parser("fit", help="gradient-descent fit of a target")
    p.add_argument("--target", required=True)
    p.add_argument("--kind", choices=["lora", "smoa"], required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--plan")
    p.add_argument("--init", choices=["zero-update", "gaussian", "spectral"],
                   default="zero-update")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--step-size", type=float, default=1e-2)
    p.add_argument("--max-steps", type=int, default=50000)
    p.add_argument("--grad-tol", type=float, default=1e-9)
    p.add_argument("--prefix", default="fit")
    _add_common(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("diagnose", help="spectral diagnostics report")
    p.add_argument("--matrix", required=True)
    p.add_argument("--activations")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--noise-scale", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, default=50)
    _add_common(p)
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("sweep", help="grid comparison of both adapter families")
    p.add_argument("--spec", required=True, help="JSON with dims/ks/rs/trials/seed")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--name", default="sweep.csv")
    _add_common(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        payload = args.handler(args)
    except (ConfigurationError, DimensionError, RangeError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(payload, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
