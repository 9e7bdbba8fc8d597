"""Command-line entry point: ``hypermeta <command> ...``.

Every command exits 0 on success. Failures print one line,
``error: <ErrorType>: <message>``, to stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .config import RunConfig, load_config
from .data import load_cohort, load_subject, normalize, synth_generate, write_cohort
from .experiment import (
    GRADCHECK_LEARNER,
    SWEEP_AXES,
    gradcheck,
    gradcheck_fixture,
    preflight,
    sweep,
    sweep_table,
)
from .meta import JsonlLog, meta_test, meta_train

GRADCHECK_TOL = 1e-4


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _cohort(data, run: RunConfig):
    recs = load_cohort(data, run.synth.n_classes)
    return [normalize(r) for r in recs]


def cmd_synth(args) -> int:
    run = _config(args.spec)
    recs = synth_generate(run.synth, args.seed)
    write_cohort(recs, args.out)
    print(json.dumps({"out": str(args.out), "subjects": [r.subject_id for r in recs]}))
    return 0


def cmd_train(args) -> int:
    run = _config(args.config)
    cohort = _cohort(args.data, run)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    with JsonlLog(log_path) as sink:
        theta, records = meta_train(cohort, run.meta, run.learner, log_sink=sink)
    checkpoint.save(theta, args.out)
    last = records[-1] if records else {}
    print(json.dumps({"checkpoint": str(args.out), "log": str(log_path), "iterations": len(records),
                      "final": last}))
    return 0


def cmd_test(args) -> int:
    run = _config(args.config)
    theta = checkpoint.load(args.ckpt)
    subject = normalize(load_subject(args.subject, run.synth.n_classes))
    report = meta_test(theta, subject, run.meta, run.learner)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
        Path(args.report).with_suffix(".confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    print(text)
    return 0


def cmd_gradcheck(args) -> int:
    run = _config(args.config)
    lcfg = GRADCHECK_LEARNER.__class__(
        **{**GRADCHECK_LEARNER.__dict__, "recon_lambda": run.learner.recon_lambda,
           "l2_gamma": run.learner.l2_gamma}
    )
    start = time.perf_counter()
    params, batch = gradcheck_fixture(seed=run.meta.seed, lcfg=lcfg)
    errors = gradcheck(params, batch, lcfg, lambda_mix=run.meta.lambda_mix)
    elapsed = time.perf_counter() - start
    worst = max(errors.values())
    for group, err in errors.items():
        print(f"{group:<14} max_rel_err={err:.3e}")
    print(f"overall        max_rel_err={worst:.3e} tol={GRADCHECK_TOL:.0e} "
          f"{'PASS' if worst <= GRADCHECK_TOL else 'FAIL'} ({elapsed:.2f}s)")
    return 0 if worst <= GRADCHECK_TOL else 1


def cmd_sweep(args) -> int:
    run = _config(args.config)
    if args.data:
        cohort = _cohort(args.data, run)
    else:
        cohort = [normalize(r) for r in synth_generate(run.synth, run.meta.seed)]
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"--values must be comma-separated integers, got {args.values!r}") from None
    rows = sweep(cohort, run, args.axis, values)
    text = json.dumps(sweep_table(args.axis, rows), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if all(r.status == "ok" for r in rows) else 1


def cmd_preflight(args) -> int:
    run = _config(args.config)
    rows = preflight(load_cohort(args.data, run.synth.n_classes), run)
    print(json.dumps({"n_way": run.meta.n_way, "k_shot": run.meta.k_shot, "subjects": rows}, indent=2))
    return 0 if all(r["feasible"] for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypermeta", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic cohort")
    s.add_argument("--spec", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("train", help="meta-train on a cohort directory")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--log", help="training log path (default <out>.log.jsonl)")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("test", help="fine-tune and evaluate on one subject")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--subject", required=True)
    s.add_argument("--config")
    s.add_argument("--report", help="also write the report and a confusion CSV here")
    s.set_defaults(fn=cmd_test)

    s = sub.add_parser("gradcheck", help="finite-difference check of the task loss")
    s.add_argument("--config")
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("sweep", help="sensitivity sweep over adapt_steps or k_shot")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True)
    s.add_argument("--config")
    s.add_argument("--data", help="cohort directory (default: synthesise from config)")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("preflight", help="check per-class pair counts for task sampling")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.set_defaults(fn=cmd_preflight)
    return p


def main(argv=None) -> int:
    ad.set_deterministic(os.environ.get("STH_DETERMINISTIC", "") == "1")
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with np.errstate(all="ignore"):
            return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - one-line error contract
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
