"""Attention-weighted knowledge distillation from the source to the target model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx


@dataclass
class KdConfig:
    alpha: float = 1.0  # imitation weight
    beta: float = 1.0  # hint weight; only the ablation harness moves it
    clamp_phi: bool = True
    eta_floor: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("KD weights must be non-negative")
        if self.eta_floor <= 0:
            raise ValueError("eta_floor must be positive")


def _sq_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    if d.ndim <= 1:
        return d * d
    return (d * d).reshape(d.shape[0], -1).sum(axis=1)


def compute_eta(source_preds, truths, eta_floor=1e-8):
    """Range of the source's squared errors over the whole overlap set, floored at ``eta_floor``."""
    errs = _sq_err(source_preds, truths)
    if errs.size < 2:
        raise ValueError("need at least two overlap observations")
    return max(float(errs.max() - errs.min()), eta_floor)


def attention_weight(source_preds, truths, eta, clamp=True):
    if eta <= 0:
        raise ValueError("eta must be positive")
    phi = 1.0 - _sq_err(source_preds, truths) / eta
    return np.clip(phi, 0.0, 1.0) if clamp else phi


def kd_terms(yhat_s, yhat_t, psi_s, psi_t, y, eta, cfg: KdConfig, in_overlap=None):
    """``(imitation, hint, phi)`` with imitation/hint already averaged over the batch.

    Source-side quantities enter as constants so only target-side parameters
    receive gradient.
    """
    if in_overlap is not None and not np.all(in_overlap):
        raise ValueError("KD batch contains observations outside the overlap period")
    yhat_s = nx.stop_gradient(yhat_s)
    psi_s = nx.stop_gradient(psi_s)
    yhat_t, psi_t = nx.as_tensor(yhat_t), nx.as_tensor(psi_t)
    phi = attention_weight(yhat_s.value, y, eta, cfg.clamp_phi)
    n = len(phi)
    if n == 0:
        raise ValueError("empty KD batch")
    weights = (phi / n)
    imitation = nx.sum_all(nx.mul(nx.sum_rows(nx.square(nx.sub(yhat_s, yhat_t))), weights))
    hint = nx.sum_all(nx.mul(nx.sum_rows(nx.square(nx.sub(psi_s, psi_t))), weights))
    return imitation, hint, phi


def kd_loss(yhat_s, yhat_t, psi_s, psi_t, y, eta, cfg: KdConfig | None = None, in_overlap=None):
    cfg = cfg or KdConfig()
    imitation, hint, _ = kd_terms(yhat_s, yhat_t, psi_s, psi_t, y, eta, cfg, in_overlap)
    return nx.add(nx.scale(imitation, cfg.alpha), nx.scale(hint, cfg.beta))
