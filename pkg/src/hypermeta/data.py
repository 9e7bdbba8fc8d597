"""Subject recordings: CSV I/O, per-subject z-scoring, adjacent-pair windows,
and a synthetic cohort generator with planted class-dependent channel coupling.

On disk a subject is a directory holding ``features.csv`` (header
``t,channel,f0,...,f{d-1}``, one row per (t, channel) in sorted order) and
``labels.csv`` (header ``t,label``). A cohort is a directory of subject
directories, read in lexicographic order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# stage persistence of the synthetic hypnogram
SELF_TRANSITION = 0.7


class DataFormatError(ValueError):
    """A subject file is malformed. Carries the file and 1-based line."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class MissingFileError(DataFormatError, FileNotFoundError):
    pass


class HeaderError(DataFormatError):
    pass


class ShapeMismatchError(DataFormatError):
    pass


class LabelRangeError(DataFormatError):
    pass


class NonNumericError(DataFormatError):
    pass


class TooShortError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SubjectRecording:
    subject_id: str
    features: np.ndarray  # (T, N, d)
    labels: np.ndarray  # (T,)
    n_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 3:
            raise ValueError(f"features must be T x N x d, got shape {feats.shape}")
        T, N, d = feats.shape
        if T < 2 or N < 2 or d < 1:
            raise ValueError(f"need T>=2, N>=2, d>=1; got T={T}, N={N}, d={d}")
        if labels.shape != (T,):
            raise ValueError(f"labels length {labels.shape} != T={T}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def N(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True, eq=False)
class PairSample:
    features: np.ndarray  # (2, N, d): slices t-1 and t
    label: int
    origin: tuple[str, int]


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Stacked pair windows; the array form used by the learner."""

    features: np.ndarray  # (B, 2, N, d)
    labels: np.ndarray  # (B,)
    origins: list[tuple[str, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> PairBatch:
        idx = np.asarray(idx, dtype=np.intp)
        return PairBatch(self.features[idx], self.labels[idx], [self.origins[i] for i in idx])

    def samples(self) -> list[PairSample]:
        return [
            PairSample(self.features[i], int(self.labels[i]), self.origins[i])
            for i in range(len(self))
        ]


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 8
    n_steps: int = 2000
    n_channels: int = 6
    n_features: int = 8
    n_classes: int = 5
    coupling_strength: float = 2.0
    noise_sigma: float = 0.5
    subject_shift_sigma: float = 0.5

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.n_steps < 2 or self.n_channels < 2 or self.n_features < 1:
            raise ValueError("need n_steps>=2, n_channels>=2, n_features>=1")
        if self.n_classes < 1 or self.n_classes > self.n_steps:
            raise ValueError("need 1 <= n_classes <= n_steps")
        if self.coupling_strength < 0 or self.subject_shift_sigma < 0:
            raise ValueError("coupling_strength and subject_shift_sigma must be >= 0")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be > 0")


# --------------------------------------------------------------------------
# CSV I/O


def _fmt(x: float) -> str:
    return repr(float(x))


def write_subject(rec: SubjectRecording, path) -> Path:
    """Write ``rec`` as ``<path>/features.csv`` and ``<path>/labels.csv``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    T, N, d = rec.features.shape
    buf = io.StringIO()
    buf.write(",".join(["t", "channel"] + [f"f{k}" for k in range(d)]) + "\n")
    for t in range(T):
        for c in range(N):
            buf.write(f"{t},{c}," + ",".join(_fmt(v) for v in rec.features[t, c]) + "\n")
    (path / "features.csv").write_bytes(buf.getvalue().encode("utf-8"))
    lines = ["t,label"] + [f"{t},{int(y)}" for t, y in enumerate(rec.labels)]
    (path / "labels.csv").write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def _read_rows(path: Path) -> list[list[str]]:
    if not path.is_file():
        raise MissingFileError(path, None, "file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _parse_int(path, line, cell) -> int:
    try:
        return int(cell)
    except ValueError:
        raise NonNumericError(path, line, f"expected integer, got {cell!r}") from None


def _parse_float(path, line, cell) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise NonNumericError(path, line, f"expected number, got {cell!r}") from None
    if not np.isfinite(v):
        raise NonNumericError(path, line, f"non-finite value {cell!r}")
    return v


def load_subject(path, n_classes: int | None = None) -> SubjectRecording:
    """Read a subject directory; shapes come from the headers and row counts.

    Without ``n_classes`` the class count is inferred as ``max(label) + 1``.
    """
    path = Path(path)
    fpath, lpath = path / "features.csv", path / "labels.csv"
    frows = _read_rows(fpath)
    lrows = _read_rows(lpath)

    if not frows or frows[0][:2] != ["t", "channel"] or len(frows[0]) < 3:
        raise HeaderError(fpath, 1, "header must be t,channel,f0,...")
    d = len(frows[0]) - 2
    if frows[0][2:] != [f"f{k}" for k in range(d)]:
        raise HeaderError(fpath, 1, "feature columns must be f0..f{d-1}")
    if not lrows or lrows[0] != ["t", "label"]:
        raise HeaderError(lpath, 1, "header must be t,label")

    labels = []
    for i, row in enumerate(lrows[1:]):
        line = i + 2
        if len(row) != 2:
            raise ShapeMismatchError(lpath, line, f"expected 2 columns, got {len(row)}")
        t = _parse_int(lpath, line, row[0])
        if t != i:
            raise ShapeMismatchError(lpath, line, f"expected t={i}, got {t}")
        labels.append(_parse_int(lpath, line, row[1]))
    T = len(labels)
    if T < 2:
        raise ShapeMismatchError(lpath, None, f"need at least 2 time steps, got {T}")
    if n_classes is None:
        n_classes = max(labels) + 1
    for i, y in enumerate(labels):
        if not 0 <= y < n_classes:
            raise LabelRangeError(lpath, i + 2, f"label {y} outside [0, {n_classes})")

    body = frows[1:]
    if len(body) % T:
        raise ShapeMismatchError(fpath, None, f"{len(body)} rows is not a multiple of T={T}")
    N = len(body) // T
    feats = np.empty((T, N, d))
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != d + 2:
            raise ShapeMismatchError(fpath, line, f"expected {d + 2} columns, got {len(row)}")
        t = _parse_int(fpath, line, row[0])
        c = _parse_int(fpath, line, row[1])
        if (t, c) != divmod(i, N):
            raise ShapeMismatchError(fpath, line, f"expected (t, channel)={divmod(i, N)}, got {(t, c)}")
        feats[t, c] = [_parse_float(fpath, line, v) for v in row[2:]]
    return SubjectRecording(path.name, feats, np.array(labels), n_classes)


def load_cohort(root, n_classes: int | None = None) -> list[SubjectRecording]:
    root = Path(root)
    if not root.is_dir():
        raise MissingFileError(root, None, "cohort directory not found")
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise MissingFileError(root, None, "cohort has no subject directories")
    recs = [load_subject(p, n_classes) for p in dirs]
    if n_classes is None:
        c = max(r.n_classes for r in recs)
        recs = [SubjectRecording(r.subject_id, r.features, r.labels, c) for r in recs]
    return recs


def write_cohort(recs, root) -> Path:
    root = Path(root)
    for rec in recs:
        write_subject(rec, root / rec.subject_id)
    return root


# --------------------------------------------------------------------------
# transforms


def normalize(rec: SubjectRecording) -> SubjectRecording:
    """Z-score each (channel, feature) coordinate over time (population std)."""
    x = rec.features
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    flat = sd == 0
    out = (x - mu) / np.where(flat, 1.0, sd)
    out = np.where(flat[None], x, out)
    return SubjectRecording(rec.subject_id, out, rec.labels, rec.n_classes)


def make_pairs(rec: SubjectRecording) -> list[PairSample]:
    """The T-1 windows (t-1, t) labelled with y_t, for t = 1..T-1."""
    return pair_batch(rec).samples()


def pair_batch(rec: SubjectRecording) -> PairBatch:
    if rec.T < 2:
        raise TooShortError(f"{rec.subject_id}: need T >= 2 for pairs")
    x = rec.features
    feats = np.stack([x[:-1], x[1:]], axis=1)
    return PairBatch(feats, np.array(rec.labels[1:]), [(rec.subject_id, t) for t in range(1, rec.T)])


# --------------------------------------------------------------------------
# synthetic cohort


def transition_matrix(n_classes: int, stay: float = SELF_TRANSITION) -> np.ndarray:
    if n_classes == 1:
        return np.ones((1, 1))
    P = np.full((n_classes, n_classes), (1.0 - stay) / (n_classes - 1))
    np.fill_diagonal(P, stay)
    return P


def class_pair_sets(n_channels: int, n_classes: int, rng: np.random.Generator) -> list[list[tuple[int, int]]]:
    """Assign each class a distinct set of coupled channel pairs."""
    pairs = [(i, j) for i in range(n_channels) for j in range(i + 1, n_channels)]
    order = rng.permutation(len(pairs))
    per = max(1, len(pairs) // max(n_classes, 1))
    per = min(per, 2)
    sets = []
    for c in range(n_classes):
        chosen = [pairs[order[(c * per + k) % len(pairs)]] for k in range(per)]
        sets.append(chosen)
    return sets


@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Generator internals, exposed for Bayes-rate oracles."""

    class_means: np.ndarray  # (C, N, d), shared by all subjects
    subject_means: np.ndarray  # (S, C, N, d), after subject shifts
    pair_sets: list
    transition: np.ndarray


def synth_generate(spec: SynthSpec, seed: int) -> list[SubjectRecording]:
    return synth_generate_with_truth(spec, seed)[0]


def synth_generate_with_truth(spec: SynthSpec, seed: int) -> tuple[list[SubjectRecording], SynthTruth]:
    """Sticky Markov hypnogram plus class-dependent channel-pair activation.

    Class ``c`` adds ``coupling_strength * u_c`` to both channels of each of
    its channel pairs, with ``u_c`` a random unit direction in feature
    space. Each subject sees a mixture of the class patterns, weighted by
    ``I + subject_shift_sigma * G`` with ``G`` standard normal (C x C), plus
    a subject-wide baseline of scale ``subject_shift_sigma``. So a class's
    signature leaks into other classes differently per subject. Observation
    noise is i.i.d. Gaussian with ``noise_sigma``.
    """
    rng = np.random.default_rng(seed)
    S, T, N, d, C = spec.n_subjects, spec.n_steps, spec.n_channels, spec.n_features, spec.n_classes
    pair_sets = class_pair_sets(N, C, rng)
    dirs = rng.normal(size=(C, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = np.zeros((C, N, d))
    for c, pairs in enumerate(pair_sets):
        for i, j in pairs:
            means[c, i] += spec.coupling_strength * dirs[c]
            means[c, j] += spec.coupling_strength * dirs[c]
    P = transition_matrix(C)
    recs, subject_means = [], []
    width = len(str(S - 1))
    for s in range(S):
        mix = np.eye(C) + spec.subject_shift_sigma * rng.normal(size=(C, C))
        baseline = spec.subject_shift_sigma * rng.normal(size=(N, d))
        mu = np.einsum("ck,knd->cnd", mix, means) + baseline
        subject_means.append(mu)
        labels = np.empty(T, dtype=np.int64)
        labels[0] = rng.integers(C)
        u = rng.random(T)
        cum = np.cumsum(P, axis=1)
        for t in range(1, T):
            labels[t] = min(int(np.searchsorted(cum[labels[t - 1]], u[t], side="right")), C - 1)
        feats = mu[labels] + spec.noise_sigma * rng.normal(size=(T, N, d))
        recs.append(SubjectRecording(f"subject{s:0{width}d}", feats, labels, C))
    truth = SynthTruth(means, np.stack(subject_means), pair_sets, P)
    return recs, truth
