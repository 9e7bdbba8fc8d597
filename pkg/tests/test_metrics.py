import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypermeta.learner import LearnerConfig
from hypermeta.meta import MetaConfig
from hypermeta.metrics import MetricsReport, accuracy, config_digest, confusion, per_class_f1


def test_confusion_examples():
    cm = confusion([0, 1, 2], [0, 1, 2], 3)
    np.testing.assert_array_equal(cm, np.eye(3, dtype=int))
    assert accuracy(cm) == 1.0
    np.testing.assert_array_equal(confusion([0, 0], [0, 1], 2), [[1, 0], [1, 0]])


def test_confusion_errors():
    with pytest.raises(ValueError, match="length"):
        confusion([0, 1], [0], 2)
    with pytest.raises(ValueError, match="outside"):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(ValueError, match="outside"):
        confusion([0, 1], [-1, 1], 2)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_accuracy_from_confusion_matches_direct_count(pairs):
    preds, labels = (np.array(x) for x in zip(*pairs))
    cm = confusion(preds, labels, 5)
    direct = sum(int(p == y) for p, y in pairs) / len(pairs)
    assert abs(accuracy(cm) - direct) <= 1e-12
    assert cm.sum() == len(pairs) and np.all(cm >= 0)
    f1 = per_class_f1(cm)
    assert np.all((0 <= f1) & (f1 <= 1))


def test_f1_examples():
    np.testing.assert_array_equal(per_class_f1(np.eye(3)), [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(per_class_f1([[1, 1], [1, 1]]), [0.5, 0.5])
    np.testing.assert_array_equal(per_class_f1([[2, 0, 0], [0, 0, 0], [1, 0, 3]]), [0.8, 0.0, 6 / 7])


def test_report_round_trip_and_csv():
    rep = MetricsReport.from_predictions([0, 1, 1, 2], [0, 1, 2, 2], 3, subject_id="s", seed=4)
    rep.control = MetricsReport.from_predictions([0, 0, 0, 0], [0, 1, 2, 2], 3)
    data = json.loads(rep.to_json())
    assert data["accuracy"] == 0.75 and data["n_eval"] == 4
    assert data["metadata"] == {"subject_id": "s", "seed": 4}
    assert data["control"]["accuracy"] == 0.25
    assert abs(np.trace(data["confusion"]) / data["n_eval"] - data["accuracy"]) <= 1e-12
    assert data["macro_f1"] == pytest.approx(np.mean(data["f1"]), abs=1e-15)
    assert rep.confusion_csv().splitlines() == ["true\\pred,0,1,2", "0,1,0,0", "1,0,1,0", "2,0,1,1"]


def test_config_digest_tracks_every_field():
    base = config_digest(MetaConfig(), LearnerConfig())
    assert base == config_digest(MetaConfig(), LearnerConfig())
    assert len(base) == 16
    assert config_digest(MetaConfig(seed=1), LearnerConfig()) != base
    assert config_digest(MetaConfig(), LearnerConfig(dropout=0.1)) != base
    assert config_digest(MetaConfig(mode="second_order"), LearnerConfig()) != base
