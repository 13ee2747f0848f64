"""Local objectives, synthetic datasets, and per-node sample partitions.

f(x) = (1/n) sum_i f_i(x), with f_i the mean loss over node i's J local
samples.  A sample is a (feature, target) pair; quadratic targets carry no
feature vector.  All model parameters live in a single flat float64 vector
so the same engine drives every objective.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

OBJECTIVE_KINDS = ("quadratic", "logistic", "mlp2")

Sample = tuple[np.ndarray | None, np.ndarray | float]


class ProblemError(ValueError):
    """Invalid objective or dataset construction."""


class Objective:
    """Interface: per-sample loss/grad plus vectorized batch versions."""

    name: str
    dim: int

    def loss(self, x: np.ndarray, sample: Sample) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray, sample: Sample) -> np.ndarray:
        raise NotImplementedError

    def batch_loss(self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray) -> float:
        raise NotImplementedError

    def batch_grad(
        self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray
    ) -> np.ndarray:
        raise NotImplementedError


class Quadratic(Objective):
    """f(x; b) = 0.5 ||x - b||^2, smoothness exactly 1."""

    name = "quadratic"

    def __init__(self, dim: int):
        self.dim = dim

    def loss(self, x: np.ndarray, sample: Sample) -> float:
        diff = x - sample[1]
        return 0.5 * float(diff @ diff)

    def grad(self, x: np.ndarray, sample: Sample) -> np.ndarray:
        return x - sample[1]

    def batch_loss(self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray) -> float:
        diff = x[None, :] - targets
        return 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))

    def batch_grad(
        self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray
    ) -> np.ndarray:
        return x - targets.mean(axis=0)


class Logistic(Objective):
    """Binary logistic loss with labels in {-1, +1} plus L2 regularization."""

    name = "logistic"

    def __init__(self, dim: int, reg: float = 0.0):
        if reg < 0.0:
            raise ProblemError(f"regularization must be non-negative, got {reg}")
        self.dim = dim
        self.reg = reg

    def loss(self, x: np.ndarray, sample: Sample) -> float:
        feat, y = sample
        margin = float(y) * float(x @ feat)
        return float(np.logaddexp(0.0, -margin)) + 0.5 * self.reg * float(x @ x)

    def grad(self, x: np.ndarray, sample: Sample) -> np.ndarray:
        feat, y = sample
        margin = float(y) * float(x @ feat)
        # sigmoid(-margin), computed in log space for stability
        s = math.exp(-np.logaddexp(0.0, margin))
        return -float(y) * s * feat + self.reg * x

    def batch_loss(self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray) -> float:
        margins = targets * (features @ x)
        return float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * self.reg * float(x @ x)

    def batch_grad(
        self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray
    ) -> np.ndarray:
        margins = targets * (features @ x)
        s = np.exp(-np.logaddexp(0.0, margins))
        return -((targets * s)[:, None] * features).mean(axis=0) + self.reg * x


class TwoLayerTanh(Objective):
    """Squared error of a tanh network: in_dim -> hidden (tanh) -> out_dim.

    Parameters are flattened as [W1, b1, W2, b2]; the total count is the
    model dimension the rest of the pipeline sees.
    """

    name = "mlp2"

    def __init__(self, in_dim: int, hidden: int = 8, out_dim: int = 1):
        if in_dim < 1 or hidden < 1 or out_dim < 1:
            raise ProblemError("layer sizes must be positive")
        self.in_dim = in_dim
        self.hidden = hidden
        self.out_dim = out_dim
        self.dim = hidden * in_dim + hidden + out_dim * hidden + out_dim

    def _unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        p, h, o = self.in_dim, self.hidden, self.out_dim
        i = 0
        W1 = x[i : i + h * p].reshape(h, p); i += h * p
        b1 = x[i : i + h]; i += h
        W2 = x[i : i + o * h].reshape(o, h); i += o * h
        b2 = x[i : i + o]
        return W1, b1, W2, b2

    def loss(self, x: np.ndarray, sample: Sample) -> float:
        inp, tgt = sample
        W1, b1, W2, b2 = self._unpack(x)
        a1 = np.tanh(W1 @ inp + b1)
        out = W2 @ a1 + b2
        diff = out - tgt
        return 0.5 * float(diff @ diff)

    def grad(self, x: np.ndarray, sample: Sample) -> np.ndarray:
        inp, tgt = sample
        W1, b1, W2, b2 = self._unpack(x)
        pre1 = W1 @ inp + b1
        a1 = np.tanh(pre1)
        out = W2 @ a1 + b2
        d_out = out - tgt
        d_a1 = W2.T @ d_out
        d_pre1 = d_a1 * (1.0 - a1 * a1)
        g = np.concatenate([
            np.outer(d_pre1, inp).ravel(),
            d_pre1,
            np.outer(d_out, a1).ravel(),
            d_out,
        ])
        return g

    def batch_loss(self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray) -> float:
        W1, b1, W2, b2 = self._unpack(x)
        a1 = np.tanh(features @ W1.T + b1)
        out = a1 @ W2.T + b2
        diff = out - targets
        return 0.5 * float(np.mean(np.sum(diff * diff, axis=1)))

    def batch_grad(
        self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray
    ) -> np.ndarray:
        W1, b1, W2, b2 = self._unpack(x)
        N = features.shape[0]
        pre1 = features @ W1.T + b1
        a1 = np.tanh(pre1)
        out = a1 @ W2.T + b2
        d_out = (out - targets) / N
        d_a1 = d_out @ W2
        d_pre1 = d_a1 * (1.0 - a1 * a1)
        return np.concatenate([
            (d_pre1.T @ features).ravel(),
            d_pre1.sum(axis=0),
            (d_out.T @ a1).ravel(),
            d_out.sum(axis=0),
        ])


class ZeroObjective(Objective):
    """Constant zero loss; drives pure gossip runs where only mixing acts."""

    name = "zero"

    def __init__(self, dim: int):
        self.dim = dim

    def loss(self, x: np.ndarray, sample: Sample) -> float:
        return 0.0

    def grad(self, x: np.ndarray, sample: Sample) -> np.ndarray:
        return np.zeros(self.dim)

    def batch_loss(self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray) -> float:
        return 0.0

    def batch_grad(
        self, x: np.ndarray, features: np.ndarray | None, targets: np.ndarray
    ) -> np.ndarray:
        return np.zeros(self.dim)


@dataclass(frozen=True)
class LocalDataset:
    """One node's J samples."""

    node_id: int
    features: np.ndarray | None
    targets: np.ndarray

    @property
    def J(self) -> int:
        return self.targets.shape[0]

    def sample(self, idx: int) -> Sample:
        feat = None if self.features is None else self.features[idx]
        tgt = self.targets[idx]
        return (feat, tgt)


@dataclass
class Problem:
    """Objective plus per-node data and omniscient evaluation helpers."""

    objective: Objective
    locals: list[LocalDataset]
    smoothness: float
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    optimum: np.ndarray | None = None
    kind: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.locals)

    @property
    def J(self) -> int:
        return self.locals[0].J

    def global_loss(self, x: np.ndarray) -> float:
        return float(
            np.mean([self.objective.batch_loss(x, ds.features, ds.targets) for ds in self.locals])
        )

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.objective.dim)
        for ds in self.locals:
            acc += self.objective.batch_grad(x, ds.features, ds.targets)
        return acc / self.n

    def test_accuracy(self, x: np.ndarray) -> float | None:
        if self.test_features is None:
            return None
        scores = self.test_features @ x
        predicted = np.where(scores >= 0.0, 1.0, -1.0)
        return float(np.mean(predicted == self.test_labels))


def sample_index(J: int, rng: np.random.Generator) -> int:
    """Uniform local sample index in 0..J-1."""
    if J < 1:
        raise ProblemError(f"J must be >= 1, got {J}")
    return int(rng.integers(J))


def partition(
    features: np.ndarray | None, targets: np.ndarray, n: int, seed: int
) -> list[LocalDataset]:
    """One seeded shuffle, then contiguous blocks of J = floor(size/n) each.

    The size % n leftover samples are dropped (and logged) so every node
    holds exactly J samples, as the noise calibration assumes.
    """
    size = targets.shape[0]
    if n < 1:
        raise ProblemError(f"need at least one node, got n={n}")
    J = size // n
    if J < 1:
        raise ProblemError(f"cannot split {size} samples across {n} nodes")
    dropped = size - n * J
    if dropped:
        log.info("partition: dropping %d of %d samples to give each node J=%d", dropped, size, J)
    order = np.random.Generator(np.random.PCG64(seed)).permutation(size)
    out = []
    for i in range(n):
        idx = order[i * J : (i + 1) * J]
        out.append(
            LocalDataset(
                node_id=i,
                features=None if features is None else features[idx].copy(),
                targets=targets[idx].copy(),
            )
        )
    return out


def load_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Feature/label table: header row, comma-separated, label in last column.

    {0, 1} labels are mapped to {-1, +1}.
    """
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ProblemError(f"{path}: empty file")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ProblemError(f"{path}:{lineno}: non-numeric value ({exc})") from None
    if not rows:
        raise ProblemError(f"{path}: no data rows")
    data = np.array(rows)
    if data.shape[1] < 2:
        raise ProblemError(f"{path}: need at least one feature column plus the label")
    features, labels = data[:, :-1], data[:, -1]
    if set(np.unique(labels)) <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0
    return features, labels


def _estimate_smoothness_mlp(obj: TwoLayerTanh, locals_: list[LocalDataset], seed: int) -> float:
    """Empirical Lipschitz constant of the full gradient from random probe pairs."""
    rng = np.random.Generator(np.random.PCG64(seed))
    feats = np.concatenate([ds.features for ds in locals_])
    tgts = np.concatenate([ds.targets for ds in locals_])
    best = 0.0
    for _ in range(100):
        x1 = 0.5 * rng.standard_normal(obj.dim)
        x2 = x1 + 0.1 * rng.standard_normal(obj.dim)
        g1 = obj.batch_grad(x1, feats, tgts)
        g2 = obj.batch_grad(x2, feats, tgts)
        denom = float(np.linalg.norm(x1 - x2))
        if denom > 0.0:
            best = max(best, float(np.linalg.norm(g1 - g2)) / denom)
    return best


def make_problem(
    kind: str,
    d: int,
    n: int,
    J: int,
    reg: float = 0.0,
    synth_seed: int = 0,
    spread: float = 0.5,
    margin: float = 2.5,
    hidden: int = 8,
    csv_file: str | None = None,
) -> Problem:
    """Build objective + per-node synthetic data (or CSV data for logistic).

    For quadratic, `d` is the target dimension and `spread` the target
    standard deviation around 0; the closed-form optimum (grand mean of
    the kept targets) is attached.  For logistic, features are Gaussian
    blobs at +/- margin * u for a random unit u, linearly separable up to
    overlap; a held-out test set accompanies them.  For mlp2, `d` is the
    network input width and targets come from a noisy random teacher.
    """
    if kind not in OBJECTIVE_KINDS:
        raise ProblemError(f"unknown objective kind {kind!r}, expected one of {OBJECTIVE_KINDS}")
    if d < 1 or n < 1 or J < 1:
        raise ProblemError("d, n, J must all be positive")
    rng = np.random.Generator(np.random.PCG64(synth_seed))
    size = n * J

    if kind == "quadratic":
        targets = spread * rng.standard_normal((size, d))
        locals_ = partition(None, targets, n, synth_seed)
        kept = np.concatenate([ds.targets for ds in locals_])
        return Problem(
            objective=Quadratic(d),
            locals=locals_,
            smoothness=1.0,
            optimum=kept.mean(axis=0),
            kind=kind,
            meta={"spread": spread},
        )

    if kind == "logistic":
        if csv_file is not None:
            features, labels = load_csv(csv_file)
            if features.shape[1] != d:
                raise ProblemError(
                    f"{csv_file}: {features.shape[1]} feature columns, config says d={d}"
                )
            test_features = test_labels = None
        else:
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
            labels = np.where(rng.random(size) < 0.5, -1.0, 1.0)
            features = rng.standard_normal((size, d)) + margin * labels[:, None] * direction
            test_rng = np.random.Generator(np.random.PCG64(synth_seed + 1))
            test_labels = np.where(test_rng.random(2000) < 0.5, -1.0, 1.0)
            test_features = (
                test_rng.standard_normal((2000, d)) + margin * test_labels[:, None] * direction
            )
        locals_ = partition(features, labels, n, synth_seed)
        kept_feats = np.concatenate([ds.features for ds in locals_])
        L = 0.25 * float(np.max(np.sum(kept_feats * kept_feats, axis=1))) + reg
        return Problem(
            objective=Logistic(d, reg),
            locals=locals_,
            smoothness=L,
            test_features=test_features,
            test_labels=test_labels,
            kind=kind,
            meta={"margin": margin, "reg": reg},
        )

    # mlp2: noisy random teacher of the same architecture
    obj = TwoLayerTanh(in_dim=d, hidden=hidden, out_dim=1)
    teacher = 0.8 * rng.standard_normal(obj.dim)
    inputs = rng.standard_normal((size, d))
    clean = np.tanh(inputs @ obj._unpack(teacher)[0].T + obj._unpack(teacher)[1])
    targets = clean @ obj._unpack(teacher)[2].T + obj._unpack(teacher)[3]
    targets = targets + 0.05 * rng.standard_normal(targets.shape)
    locals_ = partition(inputs, targets, n, synth_seed)
    L = _estimate_smoothness_mlp(obj, locals_, synth_seed + 2)
    log.info("mlp2 empirical smoothness estimate: %.4g", L)
    return Problem(
        objective=obj,
        locals=locals_,
        smoothness=L,
        kind=kind,
        meta={"hidden": hidden, "teacher_scale": 0.8},
    )


def finite_difference_grad(
    obj: Objective, x: np.ndarray, sample: Sample, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient, the reference analytic grads are checked against."""
    g = np.empty_like(x)
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (obj.loss(x + e, sample) - obj.loss(x - e, sample)) / (2.0 * h)
    return g
