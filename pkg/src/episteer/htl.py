"""Joint latent space: projections s and t, shared head f2(tanh(f1(.))), denoisers s' and t'."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .numerics import Linear, Module


class HtlHeads(Module):
    def __init__(self, m_s, m_t, m_j=16, m_a=8, k=1, noise_std=0.1, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        if noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        self.s = Linear(m_s, m_j, rng)
        self.t = Linear(m_t, m_j, rng)
        self.f1 = Linear(m_j, m_a, rng)
        self.f2 = Linear(m_a, k, rng)
        self.s_prime = Linear(m_j, m_s, rng)
        self.t_prime = Linear(m_j, m_t, rng)
        self.noise_std = noise_std

    def source_side(self):
        return self.s.parameters() + self.s_prime.parameters()

    def target_side(self):
        return self.t.parameters() + self.t_prime.parameters() + self.f1.parameters() + self.f2.parameters()


def _check_dim(x, n, what):
    x = nx.as_tensor(x)
    if x.value.shape[-1] != n:
        raise ValueError(f"{what} expects dimension {n}, got {x.value.shape[-1]}")
    return x


def _batched(fn, x):
    x = nx.as_tensor(x)
    if x.value.ndim == 1:
        return nx.reshape(fn(nx.reshape(x, (1, -1))), (-1,))
    return fn(x)


def project_source(heads: HtlHeads, raw):
    raw = _check_dim(raw, heads.s.n_in, "s")
    return _batched(heads.s, raw)


def project_target(heads: HtlHeads, h):
    h = _check_dim(h, heads.t.n_in, "t")
    return _batched(heads.t, h)


def shared_head(heads: HtlHeads, psi):
    psi = _check_dim(psi, heads.f1.n_in, "f1")
    return _batched(lambda z: heads.f2(nx.tanh(heads.f1(z))), psi)


def denoise_loss(heads: HtlHeads, x, which, rng=None):
    """MSE between ``x`` and its reconstruction from a corrupted copy pushed through the joint space.

    ``which`` is ``"s"`` (s then s') or ``"t"`` (t then t'). The clean input is
    the regression target and carries no gradient of its own.
    """
    if which not in ("s", "t"):
        raise ValueError("which must be 's' or 't'")
    x = nx.as_tensor(x)
    if x.value.ndim == 1:
        x = nx.reshape(x, (1, -1))
    proj, back = (heads.s, heads.s_prime) if which == "s" else (heads.t, heads.t_prime)
    _check_dim(x, proj.n_in, which)
    noisy = x
    if heads.noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
        noisy = nx.add(x, rng.normal(0.0, heads.noise_std, x.value.shape))
    recon = back(proj(noisy))
    return nx.mean_all(nx.square(nx.sub(recon, nx.stop_gradient(x))))
