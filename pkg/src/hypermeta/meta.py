"""Episodic N-way K-shot tasks, inner adaptation, the meta objective and
the meta-training loop, plus fine-tuning and evaluation on a held-out
subject.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DivergenceError, GradSet, NonFiniteError, ParamSet
from .data import PairBatch, SubjectRecording, pair_batch
from .learner import LearnerConfig, init_params, predict, task_loss, task_loss_parts
from .metrics import MetricsReport, config_digest

log = logging.getLogger(__name__)


class InsufficientClassError(ValueError):
    def __init__(self, subject_id: str, label: int, have: int, need: int):
        self.subject_id = subject_id
        self.label = label
        super().__init__(
            f"subject {subject_id}: class {label} has {have} pairs, needs {need}"
        )


@dataclass(frozen=True)
class MetaConfig:
    eta_inner: float = 0.001
    beta: float = 0.0005
    meta_batch: int = 3
    adapt_steps: int = 3
    lambda_mix: float = 0.3
    weight_decay: float = 0.01
    n_way: int = 5
    k_shot: int = 5
    meta_iterations: int = 300
    mode: str = "first_order"
    seed: int = 0

    def __post_init__(self):
        if self.eta_inner <= 0 or self.beta < 0:
            raise ValueError("eta_inner must be > 0 and beta >= 0")
        if self.meta_batch < 1 or self.adapt_steps < 1 or self.k_shot < 1 or self.n_way < 1:
            raise ValueError("meta_batch, adapt_steps, k_shot and n_way must be >= 1")
        if self.meta_iterations < 0:
            raise ValueError("meta_iterations must be >= 0")
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ValueError("lambda_mix must lie in [0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.mode not in ("first_order", "second_order"):
            raise ValueError(f"mode must be first_order or second_order, got {self.mode!r}")


@dataclass(frozen=True, eq=False)
class EpisodicTask:
    subject_id: str
    support: PairBatch
    query: PairBatch
    classes: tuple[int, ...]


# --------------------------------------------------------------------------
# task construction


def _class_index(labels: np.ndarray, n_classes: int) -> list[np.ndarray]:
    return [np.flatnonzero(labels == c) for c in range(n_classes)]


def _choose_classes(subject_id, by_class, n_way, need, rng) -> list[int]:
    C = len(by_class)
    if n_way > C:
        raise ValueError(f"n_way={n_way} exceeds class count {C}")
    if n_way == C:
        for c, idx in enumerate(by_class):
            if idx.size < need:
                raise InsufficientClassError(subject_id, c, idx.size, need)
        return list(range(C))
    ok = [c for c, idx in enumerate(by_class) if idx.size >= need]
    if len(ok) < n_way:
        short = next(c for c, idx in enumerate(by_class) if idx.size < need)
        raise InsufficientClassError(subject_id, short, by_class[short].size, need)
    return sorted(int(c) for c in rng.choice(ok, size=n_way, replace=False))


def sample_task(subject_id: str, pairs: PairBatch, n_classes: int, cfg: MetaConfig,
                rng: np.random.Generator, by_class=None) -> EpisodicTask:
    """Draw disjoint class-balanced support and query sets from one subject."""
    by_class = by_class if by_class is not None else _class_index(pairs.labels, n_classes)
    k = cfg.k_shot
    classes = _choose_classes(subject_id, by_class, cfg.n_way, 2 * k, rng)
    spt, qry = [], []
    for c in classes:
        picked = rng.choice(by_class[c], size=2 * k, replace=False)
        spt.append(picked[:k])
        qry.append(picked[k:])
    return EpisodicTask(subject_id, pairs.subset(np.concatenate(spt)),
                        pairs.subset(np.concatenate(qry)), tuple(classes))


class TaskSampler:
    """Pair windows and per-class indices for a cohort, computed once."""

    def __init__(self, cohort: Sequence[SubjectRecording]):
        if not cohort:
            raise ValueError("empty cohort")
        self.subjects = list(cohort)
        self.n_classes = max(r.n_classes for r in cohort)
        self.pairs = [pair_batch(r) for r in cohort]
        self.by_class = [_class_index(p.labels, self.n_classes) for p in self.pairs]

    def __len__(self) -> int:
        return len(self.subjects)

    def task(self, i: int, cfg: MetaConfig, rng) -> EpisodicTask:
        return sample_task(self.subjects[i].subject_id, self.pairs[i], self.n_classes, cfg, rng,
                           self.by_class[i])

    def check(self, cfg: MetaConfig) -> None:
        rng = np.random.default_rng(0)
        for i, rec in enumerate(self.subjects):
            _choose_classes(rec.subject_id, self.by_class[i], cfg.n_way, 2 * cfg.k_shot, rng)


def build_tasks(cohort: Sequence[SubjectRecording], cfg: MetaConfig, rng_seed: int) -> list[EpisodicTask]:
    """One episodic task per subject."""
    sampler = TaskSampler(cohort)
    rng = np.random.default_rng(rng_seed)
    return [sampler.task(i, cfg, rng) for i in range(len(sampler))]


# --------------------------------------------------------------------------
# adaptation and meta objective


def inner_adapt(theta0: ParamSet, support: PairBatch, cfg: MetaConfig, lcfg: LearnerConfig,
                rng: np.random.Generator | None = None, steps: int | None = None) -> ParamSet:
    """Plain gradient steps on the full support batch; ``theta0`` is untouched."""
    steps = cfg.adapt_steps if steps is None else steps
    theta = theta0
    for step in range(steps):
        try:
            loss, tape = ad.eval_with_tape(
                lambda p: task_loss(support, p, cfg.lambda_mix, lcfg, train=rng is not None, rng=rng),
                theta,
            )
            g = ad.gradient(tape)
            theta = theta.axpy(-cfg.eta_inner, g)
        except NonFiniteError as exc:
            raise DivergenceError("non-finite value during inner adaptation", step) from exc
    return theta


def meta_objective(theta0: ParamSet, tasks: Sequence[EpisodicTask], cfg: MetaConfig,
                   lcfg: LearnerConfig) -> float:
    """Sum over tasks of the query loss after adapting on the support set."""
    if not tasks:
        raise ValueError("meta_objective needs at least one task")
    total = 0.0
    with ad.no_grad():
        for task in tasks:
            adapted = inner_adapt(theta0, task.support, cfg, lcfg)
            total += task_loss(task.query, adapted, cfg.lambda_mix, lcfg).item()
    return total


@dataclass
class MetaGradient:
    meta_loss: float
    grad: GradSet
    query_acc: float


def meta_gradient(theta0: ParamSet, tasks: Sequence[EpisodicTask], cfg: MetaConfig,
                  lcfg: LearnerConfig, rng: np.random.Generator | None = None) -> MetaGradient:
    """Gradient of the meta objective, reduced sequentially over tasks."""
    total, correct, count = 0.0, 0, 0
    acc_grad = None
    train = rng is not None
    for task in tasks:
        seen = {}

        def support_loss(p, task=task):
            return task_loss(task.support, p, cfg.lambda_mix, lcfg, train=train, rng=rng)

        def query_loss(p, task=task):
            loss, logits = task_loss_parts(task.query, p, cfg.lambda_mix, lcfg, train=train, rng=rng)
            seen["logits"] = logits.data
            return loss

        q, g = ad.gradient_through_adaptation(
            theta0, support_loss, query_loss, cfg.adapt_steps, cfg.eta_inner, cfg.mode
        )
        total += q
        correct += int(np.sum(predict(seen["logits"]) == task.query.labels))
        count += len(task.query)
        acc_grad = g if acc_grad is None else acc_grad.axpy(1.0, g)
    return MetaGradient(total, acc_grad, correct / max(count, 1))


def apply_meta_update(theta0: ParamSet, grad: GradSet, cfg: MetaConfig) -> ParamSet:
    with np.errstate(all="ignore"):
        out = {k: v - cfg.beta * (grad[k] + cfg.weight_decay * v) for k, v in theta0.items()}
    for k, v in out.items():
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"meta update produced non-finite {k}")
    return ParamSet(out)


def meta_step(theta0: ParamSet, tasks: Sequence[EpisodicTask], cfg: MetaConfig,
              lcfg: LearnerConfig, rng: np.random.Generator | None = None) -> ParamSet:
    """One outer update with decoupled weight decay."""
    mg = meta_gradient(theta0, tasks, cfg, lcfg, rng)
    return apply_meta_update(theta0, mg.grad, cfg)


def meta_train(
    cohort: Sequence[SubjectRecording],
    cfg: MetaConfig,
    lcfg: LearnerConfig,
    init: ParamSet | None = None,
    log_sink: Callable[[dict], None] | None = None,
) -> tuple[ParamSet, list[dict]]:
    """Sample ``meta_batch`` subjects per iteration and apply ``meta_step``.

    Returns the meta-parameters and one record per iteration.
    """
    sampler = TaskSampler(cohort)
    sampler.check(cfg)
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        rec = cohort[0]
        init = init_params(rec.N, rec.d, sampler.n_classes, lcfg, seed=cfg.seed)
    theta = init
    records: list[dict] = []
    S = len(sampler)
    for it in range(1, cfg.meta_iterations + 1):
        chosen = rng.choice(S, size=cfg.meta_batch, replace=cfg.meta_batch > S)
        tasks = [sampler.task(int(i), cfg, rng) for i in chosen]
        mg = meta_gradient(theta, tasks, cfg, lcfg, rng)
        rec = {"iteration": it, "meta_loss": mg.meta_loss, "query_acc": mg.query_acc}
        records.append(rec)
        if log_sink is not None:
            log_sink(rec)
        theta = apply_meta_update(theta, mg.grad, cfg)
        if it % 50 == 0:
            log.info("iteration %d meta_loss %.4f query_acc %.3f", it, mg.meta_loss, mg.query_acc)
    return theta, records


class JsonlLog:
    """Line-delimited training log that flushes every record."""

    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8")

    def __call__(self, rec: dict) -> None:
        self.fh.write(json.dumps(rec) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --------------------------------------------------------------------------
# meta-test


def evaluate(params: ParamSet, batch: PairBatch, n_classes: int, lcfg: LearnerConfig,
             **metadata) -> MetricsReport:
    from .learner import forward

    with ad.no_grad():
        logits, _ = forward(params, batch.features, lcfg)
    return MetricsReport.from_predictions(predict(logits), batch.labels, n_classes, **metadata)


def meta_test(theta0: ParamSet, subject: SubjectRecording, cfg: MetaConfig, lcfg: LearnerConfig,
              seed: int | None = None, adapt_steps: int | None = None) -> MetricsReport:
    """Fine-tune on K labelled pairs per present class, evaluate on the rest.

    The returned report carries the unadapted evaluation in ``.control``.
    ``adapt_steps=0`` is allowed here and makes both reports equal.
    """
    seed = cfg.seed if seed is None else seed
    steps = cfg.adapt_steps if adapt_steps is None else adapt_steps
    if steps < 0:
        raise ValueError("adapt_steps must be >= 0")
    rng = np.random.default_rng(seed)
    pairs = pair_batch(subject)
    C = subject.n_classes
    by_class = _class_index(pairs.labels, C)
    support_idx = []
    for c, idx in enumerate(by_class):
        if idx.size == 0:
            continue
        if idx.size < cfg.k_shot:
            raise InsufficientClassError(subject.subject_id, c, idx.size, cfg.k_shot)
        support_idx.append(rng.choice(idx, size=cfg.k_shot, replace=False))
    support_idx = np.sort(np.concatenate(support_idx))
    rest = np.setdiff1d(np.arange(len(pairs)), support_idx)
    if rest.size == 0:
        raise InsufficientClassError(subject.subject_id, -1, len(pairs), len(pairs) + 1)
    support, evalset = pairs.subset(support_idx), pairs.subset(rest)
    train_rng = None if ad.is_deterministic() else rng
    adapted = inner_adapt(theta0, support, cfg, lcfg, rng=train_rng, steps=steps) if steps else theta0
    meta = {
        "subject_id": subject.subject_id,
        "seed": seed,
        "adapt_steps": steps,
        "config_digest": config_digest(cfg, lcfg),
    }
    report = evaluate(adapted, evalset, C, lcfg, **meta)
    report.control = evaluate(theta0, evalset, C, lcfg, **{**meta, "adapt_steps": 0})
    return report
