"""Exogenous target model: region-embedding autoencoder, per-region GRU, Laplacian penalty."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .numerics import GruWeights, Linear, Module


class RegionEmbedder(Module):
    """Linear encoder one-hot -> R^h_r, leaky-ReLU decoder back to one-hot."""

    def __init__(self, n_regions, h_r, rng=None):
        self.encoder = Linear(n_regions, h_r, rng)
        self.decoder = Linear(h_r, n_regions, rng)

    @property
    def n_regions(self):
        return self.encoder.n_in

    def set_identity(self):
        self.encoder.set_identity()
        self.decoder.set_identity()


def _check_one_hot(E):
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or not np.isin(E, (0.0, 1.0)).all() or not (E.sum(axis=1) == 1).all():
        raise ValueError("region encodings must be one-hot rows")
    return E


def region_embed(embedder: RegionEmbedder, E=None):
    """``(R, recon_loss)``: embeddings for each one-hot row and the reconstruction MSE."""
    E = np.eye(embedder.n_regions) if E is None else _check_one_hot(E)
    R = embedder.encoder(E)
    recon = nx.leaky_relu(embedder.decoder(R))
    return R, nx.mean_all(nx.square(nx.sub(recon, E)))


class CaemModel(Module):
    """GRU (or a one-layer feedforward stand-in) over ``[x_week, r_region]`` steps.

    The hidden size equals the region-embedding size ``h_r``.
    """

    def __init__(self, n_signals, n_regions, h_r=8, W=4, rng=None, encoder="gru", use_region_embedding=True):
        rng = rng if rng is not None else np.random.default_rng(0)
        if encoder not in ("gru", "ff"):
            raise ValueError(f"unknown encoder {encoder!r}")
        self.n_signals = n_signals
        self.h_r = h_r
        self.W = W
        self.encoder = encoder
        self.use_region_embedding = use_region_embedding
        self.embedder = RegionEmbedder(n_regions, h_r, rng)
        step_in = n_signals + (h_r if use_region_embedding else 0)
        if encoder == "gru":
            self.gru = GruWeights.init(step_in, h_r, rng, prefix="caem.gru")
        else:
            self.ff = Linear(W * n_signals + (h_r if use_region_embedding else 0), h_r, rng)


def caem_encode(model: CaemModel, X, region_idx):
    """Final hidden states H (batch, h_r) for windows ``X`` (batch, W, l).

    Returns ``(H, recon_loss)``; the region embedding is recomputed from the
    one-hot matrix so that its reconstruction loss shares the graph.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError("windows must be an array (batch, W, signals)")
    if X.shape[2] != model.n_signals:
        raise ValueError(f"windows carry {X.shape[2]} signals, model expects {model.n_signals}")
    region_idx = np.asarray(region_idx, dtype=int)
    if region_idx.shape != (X.shape[0],):
        raise ValueError("one region index per window")
    R, recon = region_embed(model.embedder)
    r = nx.take_rows(R, region_idx) if model.use_region_embedding else None
    if model.encoder == "ff":
        if X.shape[1] != model.W:
            raise ValueError(f"feedforward encoder expects W={model.W}, got {X.shape[1]}")
        flat = X.reshape(X.shape[0], -1)
        inp = nx.concat([flat, r], axis=1) if r is not None else flat
        return nx.tanh(model.ff(inp)), recon
    h = nx.Tensor(np.zeros((X.shape[0], model.h_r)))
    for w in range(X.shape[1]):
        x = nx.concat([X[:, w, :], r], axis=1) if r is not None else X[:, w, :]
        h = nx.gru_cell(x, h, model.gru)
    return h, recon


def laplacian_penalty(H, L):
    """trace(H^T L H) for a stacked (|V|, h_r) hidden-state matrix."""
    H = nx.as_tensor(H)
    L = np.asarray(L, dtype=float)
    if H.value.ndim != 2 or L.shape != (H.value.shape[0], H.value.shape[0]):
        raise ValueError(f"Laplacian {L.shape} does not fit hidden states {H.value.shape}")
    return nx.sum_all(nx.mul(H, nx.matmul(L, H)))


def grouped_laplacian_penalty(H, L, groups):
    """Mean over cuts of trace(H_g^T L H_g).

    ``groups`` is a list of row-index arrays, each listing one row per vertex
    in the Laplacian's vertex order.
    """
    if not groups:
        return nx.Tensor(0.0)
    n = L.shape[0]
    for g in groups:
        if len(g) != n:
            raise ValueError("each cut needs one hidden state per region")
    rows = np.concatenate(groups)
    Hg = nx.take_rows(H, rows)
    big = np.kron(np.eye(len(groups)), L)
    return nx.scale(nx.sum_all(nx.mul(Hg, nx.matmul(big, Hg))), 1.0 / len(groups))
