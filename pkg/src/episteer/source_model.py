"""Historical-season forecaster used as the transfer source.

A season autoencoder learns an embedding of each full historical season, a GRU
encodes the observed prefix of a season, and an embedding mapper regresses
the season embedding from that prefix encoding. The decoder maps
``concat(prefix encoding, mapped embedding)`` to the next ``k`` weeks. Once
the decoder is detached the concatenation is the raw source representation
handed to the joint space.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .data.epiweek import EpiWeek
from .data.panels import WiliPanel
from .numerics import GruWeights, Linear, Module


@dataclass
class SourceConfig:
    k: int = 1
    season_length: int = 33
    d_pe: int = 16
    d_se: int = 16
    decoder_hidden: int = 16
    lr: float = 5e-3
    epochs: int = 300
    finetune_epochs: int = 20
    finetune_lr_factor: float = 0.5
    seed: int = 0


class SourceModel(Module):
    def __init__(self, cfg: SourceConfig | None = None, rng=None):
        cfg = cfg or SourceConfig()
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.season_encoder = Linear(cfg.season_length, cfg.d_se, rng)
        self.season_decoder = Linear(cfg.d_se, cfg.season_length, rng)
        self.partial_encoder = GruWeights.init(2, cfg.d_pe, rng, prefix="partial_encoder")
        self.embedding_mapper = Linear(cfg.d_pe, cfg.d_se, rng)
        self.decoder = [Linear(cfg.d_pe + cfg.d_se, cfg.decoder_hidden, rng), Linear(cfg.decoder_hidden, cfg.k, rng)]
        self.decoder_attached = True
        self.pretrained = False
        self.trained_through = None

    @property
    def raw_dim(self):
        return self.cfg.d_pe + self.cfg.d_se

    def detach_decoder(self):
        self.decoder_attached = False

    def attach_decoder(self):
        self.decoder_attached = True

    def embed_season(self, curves):
        return nx.tanh(self.season_encoder(curves))

    def decode(self, raw):
        return self.decoder[1](nx.tanh(self.decoder[0](raw)))

    def step_inputs(self, curves, n_steps):
        """Per-step GRU inputs ``[wili, week_of_season / season_length]``."""
        curves = np.asarray(curves, dtype=float)
        frac = np.arange(n_steps) / self.cfg.season_length
        return [np.column_stack([curves[:, i], np.full(curves.shape[0], frac[i])]) for i in range(n_steps)]

    def encode(self, curves, ends):
        """Raw representation for prefixes ``curves[b, :ends[b] + 1]``.

        ``curves`` is (n_seq, T); ``ends`` pairs a sequence row with an end index,
        given as two arrays ``(seq_idx, end_idx)``. Returns a Tensor (n, M_S).
        """
        pe, mapped = self.encode_parts(curves, ends)
        return nx.concat([pe, mapped], axis=1)

    def encode_parts(self, curves, ends):
        seq_idx, end_idx = (np.asarray(a, dtype=int) for a in ends)
        curves = np.asarray(curves, dtype=float)
        n_seq = curves.shape[0]
        n_steps = int(end_idx.max()) + 1
        h = nx.Tensor(np.zeros((n_seq, self.cfg.d_pe)))
        states = nx.gru_sequence(self.step_inputs(curves, n_steps), h, self.partial_encoder)
        stacked = nx.concat(states, axis=0)
        pe = nx.take_rows(stacked, end_idx * n_seq + seq_idx)
        return pe, self.embedding_mapper(pe)


def source_forward(model: SourceModel, partial_current):
    """``(y_hat, raw)`` for one prefix of the current season (week-of-season 0 onward).

    ``y_hat`` is None while the decoder is detached.
    """
    prefix = np.asarray(partial_current, dtype=float).reshape(-1)
    if prefix.size == 0:
        raise ValueError("source_forward needs at least one observed week")
    raw = model.encode(prefix[None, :], (np.array([0]), np.array([prefix.size - 1])))
    y_hat = model.decode(raw).value[0] if model.decoder_attached else None
    return y_hat, raw.value[0]


@dataclass
class SeasonData:
    """Season-aligned curves for source training.

    ``curves[s]`` is one (season, region) sequence truncated or padded to a
    common length; ``n_obs[s]`` is the number of observed weeks;
    ``full[s]`` marks sequences covering the whole season.
    """

    curves: np.ndarray
    n_obs: np.ndarray
    full: np.ndarray
    seasons: list
    regions: list


def season_data(panel: WiliPanel, season_length, as_of: EpiWeek | None = None, include_current=True):
    curves, n_obs, full, seasons, regions = [], [], [], [], []
    for year in panel.seasons():
        if year == panel.current_season and not include_current:
            continue
        weeks, values = panel.season(year)
        keep = [i for i, w in enumerate(weeks) if w.week_of_season() < season_length and (as_of is None or w <= as_of)]
        if not keep:
            continue
        offs = [weeks[i].week_of_season() for i in keep]
        if offs != list(range(len(offs))):
            raise ValueError(f"season {year} is not contiguous from its first week")
        block = np.zeros((season_length, len(panel.regions)))
        block[: len(keep)] = values[keep]
        for j, region in enumerate(panel.regions):
            curves.append(block[:, j])
            n_obs.append(len(keep))
            full.append(len(keep) == season_length and year != panel.current_season)
            seasons.append(year)
            regions.append(region)
    return SeasonData(np.array(curves), np.array(n_obs), np.array(full), seasons, regions)


def _prefix_targets(data: SeasonData, k):
    seq, end = [], []
    for s, n in enumerate(data.n_obs):
        for e in range(0, n - k):
            seq.append(s)
            end.append(e)
    seq, end = np.array(seq, dtype=int), np.array(end, dtype=int)
    if seq.size == 0:
        return seq, end, np.zeros((0, k))
    targets = np.stack([data.curves[seq, end + 1 + h] for h in range(k)], axis=1)
    return seq, end, targets


def source_loss(model: SourceModel, data: SeasonData):
    """Next-k MSE + season reconstruction + mapper regression onto the season embedding."""
    k = model.cfg.k
    seq, end, targets = _prefix_targets(data, k)
    if seq.size == 0:
        raise ValueError("no prefixes with k observed follow-up weeks")
    pe, mapped = model.encode_parts(data.curves, (seq, end))
    pred = model.decode(nx.concat([pe, mapped], axis=1))
    loss = nx.mean_all(nx.square(nx.sub(pred, targets)))
    full = np.where(data.full)[0]
    if full.size:
        curves = data.curves[full]
        emb = model.embed_season(curves)
        recon = model.season_decoder(emb)
        loss = nx.add(loss, nx.mean_all(nx.square(nx.sub(recon, curves))))
        row = {s: i for i, s in enumerate(full)}
        sel = np.array([i for i, s in enumerate(seq) if s in row], dtype=int)
        if sel.size:
            target_emb = nx.take_rows(nx.stop_gradient(emb), [row[s] for s in seq[sel]])
            guess = nx.take_rows(mapped, sel)
            loss = nx.add(loss, nx.mean_all(nx.square(nx.sub(guess, target_emb))))
    return loss


def _fit(model: SourceModel, data: SeasonData, epochs, lr):
    trace = []
    if epochs <= 0 or lr == 0:
        if epochs > 0:
            trace = [float(source_loss(model, data).value)] * epochs
        return trace
    opt = nx.Adam(model.parameters(), lr=lr)
    for _ in range(epochs):
        opt.zero_grad()
        loss = source_loss(model, data)
        nx.backward(loss)
        opt.step()
        trace.append(float(loss.value))
    return trace


def pretrain_source(model: SourceModel, panel: WiliPanel, epochs=None, lr=None):
    """Fit on the historical seasons of ``panel``; returns the per-epoch loss trace."""
    hist = season_data(panel, model.cfg.season_length, include_current=False)
    if len(set(hist.seasons)) < 2:
        raise ValueError("pretraining needs at least two historical seasons")
    trace = _fit(model, hist, model.cfg.epochs if epochs is None else epochs,
                 model.cfg.lr if lr is None else lr)
    if trace and not np.isfinite(trace[-1]):
        raise FloatingPointError("source pretraining diverged")
    model.trained_through = None
    model.pretrained = True
    return trace


def incremental_retrain(model: SourceModel, panel: WiliPanel, as_of: EpiWeek, epochs=None, lr=None):
    """Warm-start fine-tune of the same model once week ``as_of`` is observed.

    Uses historical seasons plus the current-season prefixes whose targets are
    dated on or before ``as_of``. Nothing happens when no new current-season
    target has appeared since the last call.
    """
    if not panel.has_week(as_of):
        raise ValueError(f"wILI for {as_of} is not available")
    epochs = model.cfg.finetune_epochs if epochs is None else epochs
    lr = model.cfg.lr * model.cfg.finetune_lr_factor if lr is None else lr
    panel = panel.until(as_of)
    cur_weeks, _ = panel.season(panel.current_season)
    new = [w for w in cur_weeks
           if w.week_of_season() >= model.cfg.k and w.week_of_season() < model.cfg.season_length
           and (model.trained_through is None or w > model.trained_through)]
    if not new or epochs <= 0:
        model.trained_through = as_of
        return []
    data = season_data(panel, model.cfg.season_length, as_of=as_of)
    trace = _fit(model, data, epochs, lr)
    model.trained_through = as_of
    return trace


def current_prefixes(panel: WiliPanel, season_length):
    """Current-season curves (regions, season_length) zero-padded after the last observed week."""
    data = season_data(panel, season_length)
    rows = [i for i, y in enumerate(data.seasons) if y == panel.current_season]
    return data.curves[rows], int(data.n_obs[rows[0]]) if rows else 0


def source_state(model: SourceModel):
    return model.state_dict(), {
        "config": asdict(model.cfg),
        "decoder_attached": model.decoder_attached,
        "pretrained": model.pretrained,
        "trained_through": None if model.trained_through is None else str(model.trained_through),
    }


def save_source(model: SourceModel, path):
    state, meta = source_state(model)
    nx.save_tensors(path, state, meta)


def load_source(path) -> SourceModel:
    state, meta = nx.load_tensors(path)
    model = SourceModel(SourceConfig(**meta["config"]))
    model.load_state_dict(state)
    model.decoder_attached = bool(meta.get("decoder_attached", True))
    model.pretrained = bool(meta.get("pretrained", False))
    tt = meta.get("trained_through")
    model.trained_through = EpiWeek.parse(tt) if tt else None
    return model
