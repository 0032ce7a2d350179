"""Linear output layer: least-squares training, cross-validation and the
differential Pd-Au crossbar that realises the trained weights."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .devices import G_MAX_DEFAULT, G_MIN_DEFAULT, NonVolatileCell, read_cell
from .errors import StratificationError

__all__ = [
    "LinearModel",
    "Crossbar",
    "CVReport",
    "one_hot",
    "train_linear",
    "fit_readout",
    "predict",
    "accuracy",
    "stratified_folds",
    "kfold_cv",
    "quantize_to_crossbar",
    "crossbar_mvm",
    "crossbar_predict",
]


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (features, classes)
    bias: np.ndarray  # (classes,)

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.asarray(self.bias, dtype=float).reshape(-1)
        if w.shape[1] != b.shape[0]:
            raise ValueError(f"weights {w.shape} and bias {b.shape} disagree on class count")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X @ self.weights + self.bias

    def to_csv(self, path):
        """W rows followed by a final bias row."""
        with open(path, "w") as fh:
            for row in np.vstack([self.weights, self.bias]):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "LinearModel":
        m = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(m[:-1], m[-1])


def one_hot(labels, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    y = np.zeros((labels.size, n_classes))
    y[np.arange(labels.size), labels] = 1.0
    return y


def train_linear(X, Y, ridge: float = 0.0) -> LinearModel:
    """Least-squares fit of ``Y ≈ X W + b``.

    The bias is fitted by centring and never penalised.  ``ridge`` is relative:
    the penalty added to the centred Gram matrix is
    ``ridge * trace(XcᵀXc) / n_features``.  With ``ridge=0`` this is the plain
    MSE minimiser (minimum-norm pseudo-inverse solution if X is rank deficient).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("X and Y must be 2-D")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} samples, Y has {Y.shape[0]}")
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("X and Y must be finite")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    u, s, vt = np.linalg.svd(Xc, full_matrices=False)
    if ridge > 0:
        lam = ridge * np.sum(s**2) / X.shape[1]
        d = s / (s**2 + lam)
    else:
        cutoff = s.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
        d = np.zeros_like(s)
        d[s > cutoff] = 1.0 / s[s > cutoff]
    W = vt.T @ (d[:, None] * (u.T @ Yc))
    b = y_mean - x_mean @ W
    return LinearModel(W, b)


def fit_readout(X, labels, n_classes: int, ridge: float = 0.0, standardize: bool = True) -> LinearModel:
    """Train on one-hot targets, optionally on z-scored features.

    Standardisation is folded back into the returned weights and bias, so the
    model applies to raw features (and hence maps onto a crossbar directly).
    """
    X = np.asarray(X, dtype=float)
    Y = one_hot(labels, n_classes)
    if not standardize:
        return train_linear(X, Y, ridge)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    scale = np.where(sd > 1e-12 * max(np.abs(X).max(initial=0.0), 1e-300), sd, np.inf)
    Z = (X - mu) / scale
    m = train_linear(Z, Y, ridge)
    W = m.weights / scale[:, None]
    b = m.bias - mu @ W
    return LinearModel(W, b)


def predict(m: LinearModel, X) -> np.ndarray:
    """Arg-max class per row; ties go to the lowest class index."""
    return np.argmax(m.scores(X), axis=1)


def accuracy(pred, labels) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def stratified_folds(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels, dtype=int)
    if k < 2:
        raise ValueError("k must be >= 2")
    if labels.size < k:
        raise ValueError(f"need at least k={k} samples, got {labels.size}")
    classes, counts = np.unique(labels, return_counts=True)
    short = classes[counts < k]
    if short.size:
        raise StratificationError(
            f"classes {short.tolist()} have fewer than k={k} samples; "
            "some training fold would miss them"
        )
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=int)
    offset = 0
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return folds


@dataclass
class CVReport:
    fold_accuracies: list
    seed: int
    k: int
    fold_sizes: list = field(default_factory=list)
    quantized_accuracies: list | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def quantized_mean(self) -> float | None:
        if self.quantized_accuracies is None:
            return None
        return float(np.mean(self.quantized_accuracies))

    def to_dict(self) -> dict:
        d = {
            "k": self.k,
            "seed": self.seed,
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "fold_sizes": [int(n) for n in self.fold_sizes],
            "mean_accuracy": self.mean,
        }
        if self.quantized_accuracies is not None:
            d["quantized_fold_accuracies"] = [float(a) for a in self.quantized_accuracies]
            d["quantized_mean_accuracy"] = self.quantized_mean
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def kfold_cv(
    X,
    labels,
    k: int = 5,
    seed: int = 0,
    *,
    ridge: float = 1e-3,
    standardize: bool = True,
    levels: int | None = None,
) -> CVReport:
    """Stratified k-fold accuracy of the linear readout.

    With ``levels`` set, each fold's model is also quantised onto a crossbar
    with that many conductance levels and scored through it.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if X.shape[0] != labels.size:
        raise ValueError("feature rows and labels disagree")
    n_classes = int(labels.max()) + 1
    folds = stratified_folds(labels, k, seed)
    accs, qaccs, sizes = [], [], []
    for f in range(k):
        test = folds == f
        train = ~test
        if np.unique(labels[train]).size != np.unique(labels).size:
            raise StratificationError(f"fold {f} training split misses a class")
        m = fit_readout(X[train], labels[train], n_classes, ridge, standardize)
        accs.append(accuracy(predict(m, X[test]), labels[test]))
        sizes.append(int(test.sum()))
        if levels is not None:
            cb = quantize_to_crossbar(m, levels)
            qaccs.append(accuracy(crossbar_predict(cb, m.bias, X[test]), labels[test]))
    return CVReport(accs, seed, k, sizes, qaccs if levels is not None else None)


# --- crossbar --------------------------------------------------------------


@dataclass(frozen=True)
class Crossbar:
    """Differential pairs: realised weight ``scale * (G+ - G-)``.

    ``g_pos`` / ``g_neg`` are banks of :class:`NonVolatileCell` with shape
    ``(features, classes)``; ``scale`` is weight units per µS.
    """

    g_pos: NonVolatileCell
    g_neg: NonVolatileCell
    scale: float
    levels: int | None = 16

    @property
    def shape(self) -> tuple:
        return np.shape(self.g_pos.conductance)

    def realized_weights(self) -> np.ndarray:
        return self.scale * (np.asarray(self.g_pos.conductance) - np.asarray(self.g_neg.conductance))

    def to_csv(self, path):
        gp = np.asarray(self.g_pos.conductance)
        gn = np.asarray(self.g_neg.conductance)
        with open(path, "w") as fh:
            fh.write(f"# scale={float(self.scale)!r} levels={self.levels}\n")
            fh.write("row,col,g_pos_uS,g_neg_uS\n")
            for (i, j), v in np.ndenumerate(gp):
                fh.write(f"{i},{j},{float(v)!r},{float(gn[i, j])!r}\n")


def quantize_to_crossbar(
    m: LinearModel | np.ndarray,
    levels: int | None = 16,
    g_range: tuple[float, float] = (G_MIN_DEFAULT, G_MAX_DEFAULT),
    cell: NonVolatileCell | None = None,
) -> Crossbar:
    """Map weights linearly onto ``levels`` evenly spaced conductances.

    The scale is set by ``max|W|`` so the largest weight lands on ``g_max``.
    A positive weight is carried by ``G+`` with ``G-`` parked at ``g_min``
    and vice versa.  ``levels=None`` keeps conductances continuous.
    """
    W = m.weights if isinstance(m, LinearModel) else np.atleast_2d(np.asarray(m, dtype=float))
    if levels is not None and levels < 2:
        raise ValueError("levels must be >= 2")
    g_min, g_max = g_range
    template = cell or NonVolatileCell(g_min, g_min=g_min, g_max=g_max)
    span = g_max - g_min
    wmax = np.max(np.abs(W), initial=0.0)
    if wmax == 0:
        scale = 1.0
        mag = np.zeros_like(W)
    else:
        scale = wmax / span
        mag = np.abs(W) / scale
        if levels is not None:
            step = span / (levels - 1)
            mag = np.minimum(np.rint(mag / step), levels - 1) * step
    g_active = np.minimum(g_min + mag, g_max)
    g_pos = np.where(W > 0, g_active, g_min)
    g_neg = np.where(W < 0, g_active, g_min)
    return Crossbar(template.with_conductance(g_pos), template.with_conductance(g_neg), float(scale), levels)


def crossbar_mvm(cb: Crossbar, v) -> np.ndarray:
    """Column currents (µA) for row voltages ``v`` (V).

    Each row drives ``+v`` onto its ``G+`` cell and ``-v`` onto its ``G-``
    cell; column currents sum.  ``v`` may be ``(rows,)`` or ``(batch, rows)``.
    """
    v = np.asarray(v, dtype=float)
    rows = cb.shape[0]
    if v.shape[-1] != rows:
        raise ValueError(f"crossbar has {rows} rows, got {v.shape[-1]} inputs")
    vv = v[..., :, None]
    i_pos = read_cell(cb.g_pos, np.broadcast_to(vv, v.shape[:-1] + cb.shape))
    i_neg = read_cell(cb.g_neg, np.broadcast_to(-vv, v.shape[:-1] + cb.shape))
    return np.sum(i_pos + i_neg, axis=-2)


def crossbar_predict(cb: Crossbar, bias, X, v_full_scale: float | None = None) -> np.ndarray:
    """Classify raw feature rows through the crossbar.

    Features are scaled into the linear read window by one common factor,
    column currents are scaled back to weight units, and the bias is added
    digitally.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    v_lin = cb.g_pos.v_lin if v_full_scale is None else v_full_scale
    xmax = np.max(np.abs(X), initial=0.0)
    gain = v_lin * (1 - 1e-12) / xmax if xmax > 0 else 1.0
    y = crossbar_mvm(cb, X * gain) * cb.scale / gain
    return np.argmax(y + np.asarray(bias), axis=1)
