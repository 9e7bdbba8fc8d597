"""Sensitivity of held-out accuracy to adaptation steps and support size.

Runs the adapt_steps and k_shot sweeps back to back and prints one table
per axis. Each cell is a full leave-one-subject-out cycle, so the default
config takes a while; pass --config configs/tiny.conf for a smoke run.
"""

import argparse
import json

from hypermeta import autodiff as ad
from hypermeta.config import load_config
from hypermeta.data import normalize, synth_generate
from hypermeta.experiment import sweep, sweep_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/synthetic_loso.conf")
    ap.add_argument("--steps", default="1,3,5,7")
    ap.add_argument("--shots", default="1,3,5,7")
    ap.add_argument("--out")
    args = ap.parse_args()
    ad.set_deterministic(True)
    run = load_config(args.config)
    cohort = [normalize(r) for r in synth_generate(run.synth, run.meta.seed)]
    tables = {}
    for axis, values in (("adapt_steps", args.steps), ("k_shot", args.shots)):
        rows = sweep(cohort, run, axis, [int(v) for v in values.split(",")])
        tables[axis] = sweep_table(axis, rows)
        print(f"{axis:>11}  accuracy  macro_f1  control")
        for r in rows:
            if r.status != "ok":
                print(f"{r.value:>11}  {r.status}")
                continue
            print(f"{r.value:>11}  {r.mean_accuracy:8.3f}  {r.mean_macro_f1:8.3f}  {r.mean_control_accuracy:7.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(tables, fh, indent=2)


if __name__ == "__main__":
    main()
