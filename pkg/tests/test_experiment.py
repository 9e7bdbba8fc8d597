import numpy as np
import pytest

from hypermeta.data import SubjectRecording
from hypermeta.experiment import GRADCHECK_LEARNER, gradcheck, gradcheck_fixture, loso, preflight, sweep, sweep_table
from hypermeta.meta import meta_test, meta_train


def test_single_value_sweep_equals_standalone_run(tiny_cohort, tiny_run):
    row = sweep(tiny_cohort, tiny_run, "adapt_steps", [3])[0]
    cell = tiny_run.replace(adapt_steps=3)
    accs = []
    for s in range(len(tiny_cohort)):
        theta, _ = meta_train([r for i, r in enumerate(tiny_cohort) if i != s], cell.meta, cell.learner)
        accs.append(meta_test(theta, tiny_cohort[s], cell.meta, cell.learner, seed=cell.meta.seed + 1000 + s).accuracy)
    assert row.status == "ok" and row.value == 3
    assert row.mean_accuracy == float(np.mean(accs))
    assert [f["accuracy"] for f in row.folds] == accs


def test_k_shot_sweep_is_reproducible(tiny_cohort, tiny_run):
    a = sweep_table("k_shot", sweep(tiny_cohort, tiny_run, "k_shot", [1, 2]))
    b = sweep_table("k_shot", sweep(tiny_cohort, tiny_run, "k_shot", [1, 2]))
    assert a == b and len(a["rows"]) == 2


def test_failed_cell_is_marked_and_sweep_continues(tiny_cohort, tiny_run):
    rows = sweep(tiny_cohort, tiny_run, "k_shot", [10_000, 1])
    assert rows[0].status.startswith("failed") and rows[0].mean_accuracy is None
    assert rows[1].status == "ok"
    with pytest.raises(ValueError):
        sweep(tiny_cohort, tiny_run, "beta", [1])


def test_loso_subset(tiny_cohort, tiny_run):
    folds = loso(tiny_cohort, tiny_run, subjects=[1])
    assert [f.subject_id for f in folds] == [tiny_cohort[1].subject_id]
    assert 0 <= folds[0].adapted_acc <= 1 and 0 <= folds[0].control_acc <= 1


def test_preflight_flags_short_classes(tiny_run):
    rng = np.random.default_rng(0)
    ok = SubjectRecording("ok", rng.normal(size=(41, 3, 2)), [0] + [0, 1, 2] * 13 + [0], 3)
    short = SubjectRecording("short", rng.normal(size=(41, 3, 2)), [0] * 38 + [1, 1, 2], 3)
    rows = preflight([ok, short], tiny_run)
    assert [r["feasible"] for r in rows] == [True, False]
    assert rows[1]["class_counts"] == [37, 2, 1] and rows[1]["required_per_class"] == 6


def test_gradcheck_fixture_passes_for_several_seeds():
    for seed in range(3):
        params, batch = gradcheck_fixture(seed=seed)
        assert max(gradcheck(params, batch, GRADCHECK_LEARNER).values()) <= 1e-4
