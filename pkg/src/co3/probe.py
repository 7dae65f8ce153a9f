"""Linear-probe evaluation of a frozen encoder on labelled synthetic voxels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_features, check_fitted, check_labels
from .losses import log_softmax, softmax
from .model import Co3Model, voxel_inputs
from .nn import Layer
from .synth import CLASS_NAMES, ScenePair
from .voxel import VoxelParams, voxelize

N_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class ProbeConfig:
    train_fraction: float = 0.5
    per_class: int = 200  # voxels sampled per class and scene split, class-balanced
    l2: float = 1e-4
    max_iter: int = 2000
    seed: int = 0  # balanced-subset draw


def labelled_voxels(pair: ScenePair, params: VoxelParams) -> tuple[np.ndarray, np.ndarray]:
    """Encoder inputs of the vehicle view's voxels and the majority point class of each."""
    grid = voxelize(pair.veh_cloud, params)
    labels = pair.labels_of(pair.veh_cloud)
    inside = grid.point_to_voxel >= 0
    votes = np.zeros((len(grid), N_CLASSES), dtype=np.int64)
    np.add.at(votes, (grid.point_to_voxel[inside], labels[inside]), 1)
    return voxel_inputs(grid), np.argmax(votes, axis=1)


class LinearProbe(ClassifierMixin, BaseEstimator):
    """Softmax regression on standardised features, fitted to convergence with L-BFGS.

    Minimises mean cross-entropy + 0.5 * l2 * ||W||^2 (bias unpenalised).
    A converged fit makes probe accuracy a property of the features rather
    than of how well-conditioned they happen to be for a fixed step budget.
    """

    def __init__(self, n_classes: int = N_CLASSES, l2: float = 1e-4, max_iter: int = 2000, tol: float = 1e-8):
        self.n_classes = n_classes
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def _objective(self, theta, Xs, onehot):
        k, d = onehot.shape[1], Xs.shape[1]
        W, b = theta[: k * d].reshape(k, d), theta[k * d :]
        lp = log_softmax(Xs @ W.T + b, axis=1)
        n = len(Xs)
        loss = -np.sum(onehot * lp) / n + 0.5 * self.l2 * np.sum(W * W)
        g = (np.exp(lp) - onehot) / n
        grad = np.concatenate([(g.T @ Xs + self.l2 * W).ravel(), g.sum(axis=0)])
        return loss, grad

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearProbe":
        X = check_features(X)
        y = check_labels(y, len(X), self.n_classes)
        missing = set(range(self.n_classes)) - set(np.unique(y).tolist())
        if missing:
            raise ValueError(f"classes absent from the training split: {sorted(missing)}")
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0) + 1e-8
        Xs = (X - self.mean_) / self.scale_
        onehot = np.eye(self.n_classes)[y]
        k, d = self.n_classes, X.shape[1]
        res = minimize(
            self._objective,
            np.zeros(k * d + k),
            args=(Xs, onehot),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": self.max_iter, "gtol": self.tol, "ftol": 0.0},
        )
        self.n_iter_ = int(res.nit)
        self.layer_ = Layer(res.x[: k * d].reshape(k, d).copy(), res.x[k * d :].copy())
        self.classes_ = np.arange(self.n_classes)
        self.n_features_in_ = d
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        check_fitted(self, "layer_")
        Xs = (check_features(X, self.n_features_in_) - self.mean_) / self.scale_
        return Xs @ self.layer_.weight.T + self.layer_.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def log_loss(self, X: np.ndarray, y: np.ndarray) -> float:
        lp = log_softmax(self.decision_function(X), axis=1)
        return float(-lp[np.arange(len(y)), y].mean())

    def score(self, X: np.ndarray, y: np.ndarray, sample_weight=None) -> float:
        return float(super().score(X, y, sample_weight))


def balanced_subset(y: np.ndarray, per_class: int, rng: np.random.Generator) -> np.ndarray:
    rows = []
    for c in range(N_CLASSES):
        idx = np.flatnonzero(y == c)
        if len(idx):
            rows.append(rng.choice(idx, size=min(per_class, len(idx)), replace=False))
    return np.sort(np.concatenate(rows)) if rows else np.zeros(0, dtype=np.int64)


def probe_dataset(scenes: list[ScenePair], params: VoxelParams, cfg: ProbeConfig):
    """Class-balanced (inputs, labels) for the train and held-out scene splits."""
    n_train = max(1, int(round(cfg.train_fraction * len(scenes))))
    if n_train >= len(scenes):
        raise ValueError("need at least one held-out scene")
    rng = np.random.default_rng(cfg.seed)
    splits = []
    for group in (scenes[:n_train], scenes[n_train:]):
        xs, ys = zip(*(labelled_voxels(p, params) for p in group))
        x, y = np.vstack(xs), np.concatenate(ys)
        keep = balanced_subset(y, cfg.per_class * len(group), rng)
        splits.append((x[keep], y[keep]))
    return splits


def eval_probe(
    model: Co3Model,
    scenes: list[ScenePair],
    params: VoxelParams = VoxelParams(),
    cfg: ProbeConfig = ProbeConfig(),
    features=None,
) -> float:
    """Held-out accuracy of a linear probe on frozen encoder features.

    ``features`` optionally replaces the encoder (a callable from
    (inputs, labels) to feature rows), which lets tests inject oracle
    features.
    """
    (x_tr, y_tr), (x_te, y_te) = probe_dataset(scenes, params, cfg)
    if features is None:
        f_tr, f_te = model.encode(x_tr), model.encode(x_te)
    else:
        f_tr, f_te = features(x_tr, y_tr), features(x_te, y_te)
    probe = LinearProbe(N_CLASSES, cfg.l2, cfg.max_iter).fit(f_tr, y_tr)
    return probe.score(f_te, y_te)
