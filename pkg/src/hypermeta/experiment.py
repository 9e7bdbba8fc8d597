"""Leave-one-subject-out runs, sensitivity sweeps, the gradient-check
fixture and class-count preflight.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet
from .config import RunConfig
from .data import PairBatch, SubjectRecording, pair_batch
from .learner import PARAM_GROUPS, LearnerConfig, init_params, task_loss
from .meta import meta_test, meta_train
from .metrics import MetricsReport

log = logging.getLogger(__name__)

SWEEP_AXES = ("adapt_steps", "k_shot")


@dataclass
class FoldResult:
    subject_id: str
    report: MetricsReport

    @property
    def adapted_acc(self) -> float:
        return self.report.accuracy

    @property
    def control_acc(self) -> float:
        return self.report.control.accuracy


def loso(cohort: Sequence[SubjectRecording], run: RunConfig, subjects: Sequence[int] | None = None) -> list[FoldResult]:
    """Meta-train on all but one subject, meta-test on the held-out one."""
    folds = range(len(cohort)) if subjects is None else subjects
    out = []
    for s in folds:
        train = [r for i, r in enumerate(cohort) if i != s]
        theta, _ = meta_train(train, run.meta, run.learner)
        report = meta_test(theta, cohort[s], run.meta, run.learner, seed=run.meta.seed + 1000 + s)
        log.info("fold %s adapted %.3f control %.3f", cohort[s].subject_id,
                 report.accuracy, report.control.accuracy)
        out.append(FoldResult(cohort[s].subject_id, report))
    return out


@dataclass
class SweepRow:
    value: int
    mean_accuracy: float | None
    mean_macro_f1: float | None
    mean_control_accuracy: float | None
    status: str = "ok"
    folds: list[dict] = field(default_factory=list)


def sweep(cohort: Sequence[SubjectRecording], run: RunConfig, axis: str, values: Sequence[int]) -> list[SweepRow]:
    """One full LOSO cycle per value of ``axis``; failed cells are marked, not fatal."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    rows = []
    for v in values:
        try:
            cell = run.replace(**{axis: int(v)})
            folds = loso(cohort, cell)
        except Exception as exc:  # noqa: BLE001 - reported in the row
            log.warning("sweep cell %s=%s failed: %s", axis, v, exc)
            rows.append(SweepRow(int(v), None, None, None, status=f"failed: {exc}"))
            continue
        rows.append(SweepRow(
            int(v),
            float(np.mean([f.report.accuracy for f in folds])),
            float(np.mean([f.report.macro_f1 for f in folds])),
            float(np.mean([f.report.control.accuracy for f in folds])),
            folds=[{"subject_id": f.subject_id, "accuracy": f.report.accuracy,
                    "macro_f1": f.report.macro_f1, "control_accuracy": f.control_acc} for f in folds],
        ))
    return rows


def sweep_table(axis: str, rows: Sequence[SweepRow]) -> dict:
    return {"axis": axis, "rows": [dataclasses.asdict(r) for r in rows]}


# --------------------------------------------------------------------------
# gradient check fixture


GRADCHECK_DIMS = dict(n_channels=3, n_features=4, n_classes=3)
GRADCHECK_LEARNER = LearnerConfig(d_proj=4, d_attn=2, n_heads=2, dropout=0.0)


def gradcheck_fixture(seed: int = 0, n_channels: int = 3, n_features: int = 4, n_classes: int = 3,
                      lcfg: LearnerConfig = GRADCHECK_LEARNER, batch: int = 4) -> tuple[ParamSet, PairBatch]:
    """Random parameters and pairs, with coefficients kept away from the ReLU/L1 kinks."""
    rng = np.random.default_rng(seed)
    params = init_params(n_channels, n_features, n_classes, lcfg, seed=seed)
    updates = {}
    for name in ("p_spa", "p_tem"):
        shape = params[name].shape
        mag = rng.uniform(0.1, 1.0, size=shape)
        updates[name] = np.where(rng.random(shape) < 0.5, -mag, mag)
    for name in ("mlp_b1", "mlp_b2", "cls_b"):
        updates[name] = 0.1 * rng.normal(size=params[name].shape)
    params = params.replace(**updates)
    X = rng.normal(size=(batch, 2, n_channels, n_features))
    y = rng.integers(n_classes, size=batch)
    return params, PairBatch(X, y, [("fixture", t) for t in range(1, batch + 1)])


def gradcheck(params: ParamSet, batch: PairBatch, lcfg: LearnerConfig, lambda_mix: float = 0.3,
              h: float = 1e-5) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients, per group."""
    def f(p):
        return task_loss(batch, p, lambda_mix, lcfg)

    with _deterministic():
        _, tape = ad.eval_with_tape(f, params)
        analytic = ad.gradient(tape)
        numeric = ad.finite_difference_gradient(f, params, h)
    return {
        group: max(ad.relative_error(analytic[n], numeric[n]) for n in names)
        for group, names in PARAM_GROUPS.items()
    }


class _deterministic:
    def __enter__(self):
        self.prev = ad.is_deterministic()
        ad.set_deterministic(True)

    def __exit__(self, *exc):
        ad.set_deterministic(self.prev)


# --------------------------------------------------------------------------
# preflight


def preflight(cohort: Sequence[SubjectRecording], run: RunConfig) -> list[dict]:
    """Per-subject pair counts per class and whether task sampling is feasible."""
    need = 2 * run.meta.k_shot
    rows = []
    for rec in cohort:
        counts = np.bincount(pair_batch(rec).labels, minlength=rec.n_classes)
        enough = int(np.sum(counts >= need))
        if run.meta.n_way > rec.n_classes:
            ok = False
        elif run.meta.n_way == rec.n_classes:
            ok = bool(np.all(counts >= need))
        else:
            ok = enough >= run.meta.n_way
        rows.append({
            "subject_id": rec.subject_id,
            "class_counts": [int(c) for c in counts],
            "required_per_class": need,
            "feasible": ok,
        })
    return rows
