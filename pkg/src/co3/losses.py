"""Cooperative contrastive loss, contextual shape prediction loss and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENOMINATOR_MODES = ("anchor-negatives", "diagonal-literal")


@dataclass(frozen=True)
class Co2Config:
    """``denominator_mode``: "anchor-negatives" sums exp(z_veh^n . z_fus^i / tau) over i
    (standard InfoNCE); "diagonal-literal" sums exp(z_veh^i . z_fus^i / tau), the
    positives only."""

    tau: float = 0.07
    denominator_mode: str = "anchor-negatives"
    symmetric: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ValueError(f"denominator_mode must be one of {DENOMINATOR_MODES}")


@dataclass(frozen=True)
class CspConfig:
    n_bin: int = 32
    n2: int = 2048
    w_csp: float = 10.0

    def __post_init__(self):
        if self.n_bin < 2:
            raise ValueError("n_bin must be at least 2")
        if self.w_csp < 0:
            raise ValueError("w_csp must be non-negative")


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return x - np.expand_dims(logsumexp(x, axis=axis), axis)


def _infonce(anchor: np.ndarray, other: np.ndarray, tau: float):
    logits = anchor @ other.T / tau
    n = len(anchor)
    loss = float(np.mean(logsumexp(logits, axis=1) - np.diag(logits)))
    d_logits = softmax(logits, axis=1)
    d_logits[np.diag_indices(n)] -= 1.0
    d_logits /= n * tau
    return loss, d_logits @ other, d_logits.T @ anchor


def _diagonal_literal(z_veh: np.ndarray, z_fusion: np.ndarray, tau: float):
    diag = np.sum(z_veh * z_fusion, axis=1) / tau
    n = len(diag)
    loss = float(logsumexp(diag) - np.mean(diag))
    g = (softmax(diag) - 1.0 / n) / tau
    return loss, g[:, None] * z_fusion, g[:, None] * z_veh


def co2_loss(z_veh: np.ndarray, z_fusion: np.ndarray, cfg: Co2Config = Co2Config()):
    """Contrastive loss over paired unit rows; returns (loss, dL/dz_veh, dL/dz_fusion).

    Row n of each side is the positive pair; every other fusion row is a
    negative for vehicle anchor n.
    """
    z_veh = np.asarray(z_veh, dtype=np.float64)
    z_fusion = np.asarray(z_fusion, dtype=np.float64)
    if z_veh.shape != z_fusion.shape or z_veh.ndim != 2:
        raise ValueError(f"paired embeddings must share a 2-D shape, got {z_veh.shape} and {z_fusion.shape}")
    if len(z_veh) < 2:
        raise ValueError("contrastive loss needs at least 2 pairs (no negatives otherwise)")
    if cfg.denominator_mode == "diagonal-literal":
        return _diagonal_literal(z_veh, z_fusion, cfg.tau)
    loss, g_veh, g_fus = _infonce(z_veh, z_fusion, cfg.tau)
    if cfg.symmetric:
        loss_b, g_fus_b, g_veh_b = _infonce(z_fusion, z_veh, cfg.tau)
        return 0.5 * (loss + loss_b), 0.5 * (g_veh + g_veh_b), 0.5 * (g_fus + g_fus_b)
    return loss, g_veh, g_fus


def pair_cosines(z_veh: np.ndarray, z_fusion: np.ndarray) -> tuple[float, float]:
    """Mean cosine of positive pairs and of all off-diagonal (negative) pairs."""
    sim = z_veh @ z_fusion.T
    n = len(sim)
    pos = float(np.trace(sim) / n)
    neg = float((sim.sum() - np.trace(sim)) / (n * (n - 1))) if n > 1 else 0.0
    return pos, neg


def _kl_rows(log_p: np.ndarray, q: np.ndarray):
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 0):
        raise ValueError("target distributions must be strictly positive")
    if log_p.shape != q.shape:
        raise ValueError(f"prediction {log_p.shape} and target {q.shape} shapes differ")
    p = np.exp(log_p)
    log_ratio = log_p - np.log(q)
    kl = np.sum(p * log_ratio, axis=1)
    return p, log_ratio, kl


def csp_loss_from_logits(logits: np.ndarray, q: np.ndarray):
    """Mean KL(softmax(logits) || q) over rows; returns (loss, dL/dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    p, log_ratio, kl = _kl_rows(log_softmax(logits, axis=1), q)
    n = len(kl)
    if n == 0:
        return 0.0, np.zeros_like(logits)
    # d KL / d logit_j = p_j * (log(p_j/q_j) - KL)
    grad = p * (log_ratio - kl[:, None]) / n
    return float(kl.mean()), grad


def csp_loss(p: np.ndarray, q: np.ndarray, cfg: CspConfig = CspConfig()):
    """Mean KL(p || q) for softmax outputs ``p``; returns (loss, dL/d logits of p).

    Rows of ``p`` are taken as softmax outputs, so log(p) serves as their
    logits up to a per-row constant that the gradient ignores.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != cfg.n_bin:
        raise ValueError(f"expected (*, {cfg.n_bin}) predictions, got {p.shape}")
    if np.any(p <= 0):
        raise ValueError("predicted distributions must be strictly positive")
    return csp_loss_from_logits(np.log(p), q)
