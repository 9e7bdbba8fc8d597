"""Reference accuracies for the synthetic generator.

For every subject of a generated cohort this prints three nearest-mean
classifiers on single time steps:

* ``oracle``: the subject's true class means (the Bayes rule under the
  generator's isotropic noise, ignoring the Markov prior),
* ``population``: class means pooled over the other subjects, i.e. what a
  model without per-subject adaptation can at best exploit,
* ``k_shot``: means estimated from K labelled steps of the subject itself.

A meta-learner should land between ``population`` and ``k_shot``; the gap
between the two is the room adaptation has to help.
"""

import argparse

import numpy as np

from hypermeta.config import load_config
from hypermeta.data import normalize, synth_generate_with_truth


def nearest_mean(X, means):
    return ((X[:, None, :] - means[None]) ** 2).sum(-1).argmin(1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/synthetic_loso.conf")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    run = load_config(args.config)
    spec, K = run.synth, run.meta.k_shot
    raw, truth = synth_generate_with_truth(spec, args.seed)
    recs = [normalize(r) for r in raw]
    rng = np.random.default_rng(1)
    C, S = spec.n_classes, spec.n_subjects
    flat = [r.features.reshape(r.T, -1) for r in recs]
    rows = []
    for s in range(S):
        y = recs[s].labels
        oracle = np.mean(nearest_mean(raw[s].features.reshape(raw[s].T, -1),
                                      truth.subject_means[s].reshape(C, -1)) == y)
        pooled = np.stack([
            np.concatenate([flat[o][recs[o].labels == c] for o in range(S) if o != s]).mean(0) for c in range(C)
        ])
        population = np.mean(nearest_mean(flat[s], pooled) == y)
        idx = [rng.choice(np.flatnonzero(y == c), K, replace=False) for c in range(C)]
        shot_means = np.stack([flat[s][i].mean(0) for i in idx])
        rest = np.setdiff1d(np.arange(len(y)), np.concatenate(idx))
        k_shot = np.mean(nearest_mean(flat[s][rest], shot_means) == y[rest])
        rows.append((oracle, population, k_shot))
        print(f"{recs[s].subject_id}  oracle {oracle:.3f}  population {population:.3f}  {K}-shot {k_shot:.3f}")
    m = np.mean(rows, axis=0)
    print(f"mean      oracle {m[0]:.3f}  population {m[1]:.3f}  {K}-shot {m[2]:.3f}")


if __name__ == "__main__":
    main()
