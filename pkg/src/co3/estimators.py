"""scikit-learn style wrappers: shape-context featurizer and the pretrained encoder."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_features, check_fitted, check_points
from .config import RunConfig
from .probe import LinearProbe
from .shape_context import CountTree, ScConfig, finalize_distribution, raw_histograms
from .training import pretrain, prepare_scene

__all__ = ["ShapeContextTransformer", "Co3Pretrainer", "LinearProbe"]


class ShapeContextTransformer(TransformerMixin, BaseEstimator):
    """Shape-context rows of query points against the neighbour cloud seen in ``fit``.

    ``fit(X)`` indexes the neighbours; ``transform(Q)`` returns raw bin
    counts, or finalized distributions when ``finalize`` is set.
    ``fit_transform(X)`` is the self-neighbourhood used for training targets.
    """

    def __init__(self, r1=0.5, r2=4.0, nbins_xy=4, nbins_zy=4, sf_csp=4.0, finalize=True):
        self.r1 = r1
        self.r2 = r2
        self.nbins_xy = nbins_xy
        self.nbins_zy = nbins_zy
        self.sf_csp = sf_csp
        self.finalize = finalize

    def _config(self) -> ScConfig:
        return ScConfig(self.r1, self.r2, self.nbins_xy, self.nbins_zy)

    def fit(self, X, y=None):
        X = check_points(X)
        self.config_ = self._config()
        self.neighbors_ = X[:, :3]
        self.tree_ = CountTree(self.neighbors_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_fitted(self, "tree_")
        q = check_points(X)[:, :3]
        raw = raw_histograms(q, self.neighbors_, self.config_, tree=self.tree_)
        if not self.finalize:
            return raw.histograms
        return finalize_distribution(raw, self.sf_csp).histograms


class Co3Pretrainer(TransformerMixin, BaseEstimator):
    """Pretrain the encoder on scene pairs; ``transform`` maps voxel input rows to features.

    ``fit`` accepts a list of ``ScenePair`` (or None to synthesize
    ``config.n_scenes`` scenes from the seed). Keyword parameters override
    the matching ``RunConfig`` fields.
    """

    def __init__(self, config=None, steps=None, seed=None, ablation=None, learning_rate=None):
        self.config = config
        self.steps = steps
        self.seed = seed
        self.ablation = ablation
        self.learning_rate = learning_rate

    def resolved_config(self) -> RunConfig:
        cfg = self.config if self.config is not None else RunConfig()
        overrides = {
            k: v
            for k, v in dict(
                steps=self.steps, seed=self.seed, ablation=self.ablation, learning_rate=self.learning_rate
            ).items()
            if v is not None
        }
        return cfg.with_overrides(**overrides)

    def fit(self, X=None, y=None):
        cfg = self.resolved_config()
        scenes = None if X is None else [prepare_scene(p, cfg) for p in X]
        if scenes is not None and not scenes:
            raise ValueError("need at least one scene pair")
        self.model_, self.metrics_ = pretrain(cfg, scenes)
        self.n_features_in_ = self.model_.encoder.in_dim
        return self

    def transform(self, X):
        check_fitted(self, "model_")
        return self.model_.encode(check_features(X, self.n_features_in_))

    def cosine_gap(self) -> float:
        check_fitted(self, "metrics_")
        last = self.metrics_.records[-1]
        return last.pos_cos - last.neg_cos
