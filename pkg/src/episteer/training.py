"""Joint training of the transfer architecture and the real-time weekly protocol."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import numerics as nx
from .caem import CaemModel, caem_encode, grouped_laplacian_penalty
from .data.epiweek import EpiWeek, week_range
from .data.graph import RegionGraph, build_region_graph
from .data.panels import ExogenousPanel, WiliPanel
from .data.windows import forecast_inputs, make_training_windows
from .htl import HtlHeads, denoise_loss, project_source, project_target, shared_head
from .kd import KdConfig, compute_eta, kd_terms
from .numerics import Linear
from .source_model import SourceConfig, SourceModel, current_prefixes, incremental_retrain

log = logging.getLogger(__name__)

MODELS = ("cali_net", "standalone_caem", "source_only")


@dataclass
class TrainConfig:
    # windows
    W: int = 4
    k: int = 1
    # architecture
    h_r: int = 8
    m_j: int = 16
    m_a: int = 8
    noise_std: float = 0.1
    model: str = "cali_net"
    encoder: str = "gru"
    use_region_embedding: bool = True
    drop_buckets: tuple = ()
    # objective weights
    lambda_re: float = 1.0
    lambda_lap: float = 0.1
    lambda_dn: float = 0.1
    lambda_src: float = 1.0
    alpha: float = 0.1
    beta: float = 1.0
    clamp_phi: bool = True
    eta_floor: float = 1e-8
    kd_enabled: bool = True
    kd_source: str = "decoder"
    # optimisation
    lr: float = 1e-2
    lr_b: float = 1e-4  # phase B (s, s') learning rate
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    initial_epochs: int = 300
    weekly_epochs: int = 100
    phase_a_steps: int = 1
    phase_b_steps: int = 1
    # source model
    d_pe: int = 16
    d_se: int = 16
    season_length: int = 33
    source_epochs: int = 300
    source_finetune_epochs: int = 20
    source_lr: float = 5e-3
    # evaluation periods (inclusive epiweeks)
    t1_start: str = "202009"
    t1_end: str = "202011"
    t2_start: str = "202012"
    t2_end: str = "202015"
    seed: int = 0
    audit_grads: bool = False

    def __post_init__(self):
        self.drop_buckets = tuple(self.drop_buckets)
        self.validate()

    def validate(self):
        weights = ("lambda_re", "lambda_lap", "lambda_dn", "lambda_src", "alpha", "beta", "noise_std", "lr", "lr_b")
        for name in weights:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.W < 1 or self.k < 1:
            raise ValueError("W and k must be at least 1")
        if self.phase_a_steps < 1 or self.phase_b_steps < 0:
            raise ValueError("phase A needs at least one step per cycle")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.encoder not in ("gru", "ff"):
            raise ValueError("encoder must be 'gru' or 'ff'")
        if self.kd_source not in ("decoder", "joint"):
            raise ValueError("kd_source must be 'decoder' or 'joint'")
        for name in ("t1_start", "t1_end", "t2_start", "t2_end"):
            EpiWeek.parse(getattr(self, name))
        if not (self.period_weeks("T1")[-1] < self.period_weeks("T2")[0]):
            raise ValueError("T1 must end before T2 starts")

    def kd(self):
        return KdConfig(self.alpha, self.beta, self.clamp_phi, self.eta_floor)

    def source_config(self):
        return SourceConfig(k=self.k, season_length=self.season_length, d_pe=self.d_pe, d_se=self.d_se,
                            lr=self.source_lr, epochs=self.source_epochs,
                            finetune_epochs=self.source_finetune_epochs, seed=self.seed)

    def period_weeks(self, period):
        if period == "T1":
            return week_range(EpiWeek.parse(self.t1_start), EpiWeek.parse(self.t1_end))
        if period == "T2":
            return week_range(EpiWeek.parse(self.t2_start), EpiWeek.parse(self.t2_end))
        if period == "T":
            return self.period_weeks("T1") + self.period_weeks("T2")
        raise ValueError(f"unknown period {period!r}")

    def to_dict(self):
        d = asdict(self)
        d["drop_buckets"] = list(self.drop_buckets)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


class ModelBundle(nx.Module):
    """Frozen source model plus every trainable piece of the joint architecture."""

    def __init__(self, source, caem, heads, head, graph, cfg, signals):
        self.source = source
        self.caem = caem
        self.heads = heads
        self.head = head  # linear h -> k head of the standalone exogenous model
        self.graph = graph
        self.cfg = cfg
        self.signals = tuple(signals)
        self.norm_mean = None
        self.norm_std = None
        self.norm_as_of = None
        # fixed output scale: heads predict standardized wILI
        self.y_mean = 0.0
        self.y_std = 1.0
        self.rng = np.random.default_rng(cfg.seed + 1)
        self.opt_a = None
        self.opt_b = None

    def named_parameters(self, prefix=""):
        parts = [("source", self.source), ("caem", self.caem), ("heads", self.heads), ("head", self.head)]
        for name, part in parts:
            if part is not None:
                yield from part.named_parameters(prefix=f"{prefix}{name}.")

    def target_parameters(self):
        params = self.caem.parameters()
        if self.heads is not None:
            params += self.heads.target_side()
        if self.head is not None:
            params += self.head.parameters()
        return params

    def source_side_parameters(self):
        return self.heads.source_side() if self.heads is not None else []

    def fit_normalizer(self, exo: ExogenousPanel, as_of):
        self.norm_mean, self.norm_std = exo.zscore_stats(as_of)
        self.norm_as_of = as_of

    def fit_target_scale(self, wili: WiliPanel, as_of):
        v = wili.until(as_of).values
        self.y_mean = float(v.mean())
        self.y_std = float(v.std()) if v.std() > 1e-8 else 1.0

    def output(self, z):
        """Head output in wILI units."""
        return nx.add(nx.scale(z, self.y_std), np.full(z.shape[-1], self.y_mean))

    def head_predict(self, psi):
        return self.output(shared_head(self.heads, psi))

    def normalize(self, X):
        return (np.asarray(X, dtype=float) - self.norm_mean) / self.norm_std

    def optimizers(self):
        cfg = self.cfg
        if self.opt_a is None:
            self.opt_a = nx.Adam(self.target_parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            self.opt_b = nx.Adam(self.source_side_parameters(), cfg.lr_b, cfg.beta1, cfg.beta2, cfg.eps)
        return self.opt_a, self.opt_b

    def source_outputs(self, batch):
        """``(raw, y_hat)`` of the frozen source for each window's prefix."""
        if batch.source_raw is not None:
            return nx.Tensor(batch.source_raw), nx.Tensor(batch.source_pred)
        raw = self.source.encode(batch.prefix_curves, (batch.region_idx, batch.prefix_end))
        return raw, self.source.decode(raw)


def build_cali_net(source: SourceModel, exo: ExogenousPanel, graph: RegionGraph, cfg: TrainConfig) -> ModelBundle:
    """Detach the source decoder, freeze the source and initialise the trainable parts."""
    if not getattr(source, "pretrained", False):
        raise ValueError("source model must be pretrained before building the joint model")
    if tuple(graph.vertices) != tuple(exo.regions):
        graph = graph.reorder(exo.regions)
    rng = np.random.default_rng(cfg.seed)
    source.detach_decoder()
    source.freeze()
    use_re = cfg.use_region_embedding
    caem = CaemModel(exo.n_signals, len(exo.regions), cfg.h_r, cfg.W, rng, cfg.encoder, use_re)
    heads = head = None
    if cfg.model == "cali_net":
        heads = HtlHeads(source.raw_dim, cfg.h_r, cfg.m_j, cfg.m_a, cfg.k, cfg.noise_std, rng)
    elif cfg.model == "standalone_caem":
        head = Linear(cfg.h_r, cfg.k, rng)
    else:
        raise ValueError(f"{cfg.model} has no trainable joint model")
    return ModelBundle(source, caem, heads, head, graph, cfg, exo.signals)


def parameter_count(cfg: TrainConfig, n_signals, n_regions):
    """Closed-form parameter count of a cali_net bundle (source included)."""
    L, dpe, dse, dh, k = cfg.season_length, cfg.d_pe, cfg.d_se, SourceConfig.decoder_hidden, cfg.k
    source = (L * dse + dse) + (dse * L + L) + 3 * (dpe * 2 + dpe * dpe + dpe) + (dpe * dse + dse)
    source += (dpe + dse) * dh + dh + dh * k + k
    h, V = cfg.h_r, n_regions
    step_in = n_signals + (h if cfg.use_region_embedding else 0)
    caem = (V * h + h) + (h * V + V) + 3 * (h * step_in + h * h + h)
    ms, mj, ma = dpe + dse, cfg.m_j, cfg.m_a
    heads = (ms * mj + mj) + (h * mj + mj) + (mj * ma + ma) + (ma * k + k) + (mj * ms + ms) + (mj * h + h)
    return source + caem + heads


@dataclass
class Batch:
    X: np.ndarray  # (B, W, l), normalized
    region_idx: np.ndarray
    y: np.ndarray  # (B, k)
    in_overlap: np.ndarray
    groups: list  # row indices of complete all-region cuts
    prefix_curves: np.ndarray  # (regions, season_length) current season, padded
    prefix_end: np.ndarray  # week-of-season index of each window's last input week
    target_weeks: list
    input_weeks: list
    source_raw: np.ndarray | None = None
    source_pred: np.ndarray | None = None


def make_batch(windows, bundle: ModelBundle, wili: WiliPanel, regions, cache_source=True) -> Batch:
    """Stack windows; source features use only the current season as observed in ``wili``."""
    if not windows:
        raise ValueError("no training windows")
    ridx = {r: i for i, r in enumerate(regions)}
    X = bundle.normalize(np.stack([w.inputs for w in windows]))
    region_idx = np.array([ridx[w.region] for w in windows])
    y = np.stack([w.targets for w in windows])
    overlap = np.array([w.in_overlap for w in windows])
    by_week = {}
    for i, w in enumerate(windows):
        by_week.setdefault(w.first_target_week, {})[w.region] = i
    groups = [np.array([g[r] for r in regions]) for _, g in sorted(by_week.items()) if len(g) == len(regions)]
    curves, _ = current_prefixes(wili, bundle.source.cfg.season_length)
    prefix_end = np.array([(w.first_target_week - 1).week_of_season() for w in windows])
    batch = Batch(X, region_idx, y, overlap, groups, curves, prefix_end,
                  [w.target_weeks for w in windows], [w.input_weeks for w in windows])
    if cache_source:
        raw, pred = bundle.source_outputs(batch)
        batch.source_raw, batch.source_pred = raw.value, pred.value
    return batch


def _mse(pred, y):
    return nx.mean_all(nx.square(nx.sub(pred, y)))


def kd_reference(bundle, batch, overlap_idx, psi_s=None):
    """Source predictions that set the attention weights, per ``kd_source``."""
    raw, pred = bundle.source_outputs(batch)
    if bundle.cfg.kd_source == "decoder":
        return pred.value[overlap_idx]
    if psi_s is None:
        psi_s = project_source(bundle.heads, raw)
    return bundle.head_predict(psi_s).value[overlap_idx]


def refresh_eta(bundle, batch):
    ov = np.where(batch.in_overlap)[0]
    if not bundle.cfg.kd_enabled or ov.size < 2:
        return None
    return compute_eta(kd_reference(bundle, batch, ov), batch.y[ov], bundle.cfg.eta_floor)


def forward_terms(batch: Batch, bundle: ModelBundle, eta=None, rng=None):
    """Every loss term as a Tensor (already weighted), plus diagnostics.

    Returns ``(terms, info)``; the total objective is the sum of ``terms``.
    """
    cfg = bundle.cfg
    rng = rng if rng is not None else bundle.rng
    terms = {}
    info = {"kd_windows": 0, "kd_contrib": np.zeros(len(batch.y))}
    H, recon = caem_encode(bundle.caem, batch.X, batch.region_idx)
    if cfg.model == "standalone_caem":
        yhat_t = bundle.output(bundle.head(H))
    else:
        psi_t = project_target(bundle.heads, H)
        yhat_t = bundle.head_predict(psi_t)
    info["yhat_t"] = yhat_t.value
    terms["mse"] = _mse(yhat_t, batch.y)
    terms["recon"] = nx.scale(recon, cfg.lambda_re)
    terms["lap"] = nx.scale(grouped_laplacian_penalty(H, bundle.graph.laplacian, batch.groups), cfg.lambda_lap)
    if cfg.model != "cali_net":
        return terms, info
    heads = bundle.heads
    raw, _ = bundle.source_outputs(batch)
    psi_s = project_source(heads, raw)
    yhat_sj = bundle.head_predict(psi_s)
    ov = np.where(batch.in_overlap)[0]
    terms["src"] = nx.scale(_mse(nx.take_rows(yhat_sj, ov), batch.y[ov]), cfg.lambda_src) if ov.size else nx.Tensor(0.0)
    dn_s = denoise_loss(heads, raw, "s", rng)
    dn_t = denoise_loss(heads, H, "t", rng)
    terms["dn_s"] = nx.scale(dn_s, cfg.lambda_dn)
    terms["dn_t"] = nx.scale(dn_t, cfg.lambda_dn)
    if cfg.kd_enabled and ov.size >= 2:
        ref = kd_reference(bundle, batch, ov, psi_s)
        if eta is None:
            eta = compute_eta(ref, batch.y[ov], cfg.eta_floor)
        imitation, hint, phi = kd_terms(
            ref,
            nx.take_rows(yhat_t, ov),
            nx.take_rows(psi_s, ov),
            nx.take_rows(psi_t, ov),
            batch.y[ov],
            eta,
            cfg.kd(),
            batch.in_overlap[ov],
        )
        terms["kd"] = nx.add(nx.scale(imitation, cfg.alpha), nx.scale(hint, cfg.beta))
        d_im = ((ref - yhat_t.value[ov]) ** 2).sum(axis=1)
        d_hint = ((psi_s.value[ov] - psi_t.value[ov]) ** 2).sum(axis=1)
        info["kd_contrib"][ov] = phi * (cfg.alpha * d_im + cfg.beta * d_hint) / ov.size
        info["kd_windows"] = int(ov.size)
        info["eta"] = eta
    return terms, info


def total_loss(batch: Batch, bundle: ModelBundle, eta=None, rng=None):
    terms, _ = forward_terms(batch, bundle, eta, rng)
    out = None
    for t in terms.values():
        out = t if out is None else nx.add(out, t)
    return out


def _phase_b_loss(batch, bundle, rng):
    cfg = bundle.cfg
    raw, _ = bundle.source_outputs(batch)
    heads = bundle.heads
    ov = np.where(batch.in_overlap)[0]
    loss = nx.scale(denoise_loss(heads, raw, "s", rng), cfg.lambda_dn)
    if ov.size:
        pred = bundle.head_predict(project_source(heads, raw))
        loss = nx.add(loss, nx.scale(_mse(nx.take_rows(pred, ov), batch.y[ov]), cfg.lambda_src))
    return loss


def _max_abs_grad(params):
    return max((float(np.abs(p.grad).max()) for p in params if p.grad.size), default=0.0)


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)  # (step, phase, term, value)
    step: int = 0

    def log(self, phase, term, value):
        self.rows.append((self.step, phase, term, float(value)))

    def series(self, term, phase=None):
        return [v for _, p, t, v in self.rows if t == term and (phase is None or p == phase)]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,phase,term,value\n")
            for step, phase, term, value in self.rows:
                fh.write(f"{step},{phase},{term},{value!r}\n")


def alternating_train(bundle: ModelBundle, batch: Batch, epochs, trace: TrainTrace | None = None):
    """Alternate phase A (target side, full objective) and phase B (s and s' only, no KD).

    The source model stays frozen throughout.
    """
    cfg = bundle.cfg
    trace = trace if trace is not None else TrainTrace()
    opt_a, opt_b = bundle.optimizers()
    source_params = bundle.source.parameters()
    if any(p.trainable for p in source_params):
        raise RuntimeError("source model must be frozen during joint training")
    side = bundle.source_side_parameters()
    eta = refresh_eta(bundle, batch) if cfg.kd_source == "decoder" else None
    for _ in range(epochs):
        if cfg.kd_source == "joint":
            eta = refresh_eta(bundle, batch)
        for _ in range(cfg.phase_a_steps):
            bundle.zero_grad()
            terms, info = forward_terms(batch, bundle, eta)
            total = None
            for t in terms.values():
                total = t if total is None else nx.add(total, t)
            if cfg.audit_grads and "kd" in terms:
                nx.backward(terms["kd"])
                trace.log("A", "kd_grad_source_side", _max_abs_grad(source_params + side))
                bundle.zero_grad()
            nx.backward(total)
            if cfg.audit_grads:
                trace.log("A", "grad_source_model", _max_abs_grad(source_params))
            opt_a.step()
            for name, t in terms.items():
                trace.log("A", name, t.value)
            trace.log("A", "total", total.value)
            trace.log("A", "windows", len(batch.y))
            trace.log("A", "kd_windows", info["kd_windows"])
            trace.log("A", "kd_nonoverlap", info["kd_contrib"][~batch.in_overlap].sum())
            if not np.isfinite(total.value):
                raise FloatingPointError("joint training diverged")
            trace.step += 1
        if bundle.heads is None:
            continue
        for _ in range(cfg.phase_b_steps):
            bundle.zero_grad()
            loss = _phase_b_loss(batch, bundle, bundle.rng)
            nx.backward(loss)
            opt_b.step()
            trace.log("B", "phase_b", loss.value)
            trace.step += 1
    return trace


def predict(bundle: ModelBundle, X, region_idx, prefix_curves, prefix_end):
    """k-ahead predictions (B, k) from normalized windows."""
    H, _ = caem_encode(bundle.caem, X, region_idx)
    if bundle.cfg.model == "standalone_caem":
        return bundle.output(bundle.head(H)).value
    return bundle.head_predict(project_target(bundle.heads, H)).value


@dataclass
class AuditRecord:
    as_of: EpiWeek
    wili_last: EpiWeek
    exo_last: EpiWeek
    normalizer_last: EpiWeek | None
    window_input_last: EpiWeek | None
    window_target_last: EpiWeek | None
    forecast_input_last: EpiWeek
    source_prefix_last: EpiWeek

    def references(self):
        """Every week the forecast for ``as_of`` depended on."""
        return [getattr(self, f.name) for f in fields(self)
                if f.name != "as_of" and getattr(self, f.name) is not None]

    def clean(self):
        return all(w <= self.as_of for w in self.references())


@dataclass
class Forecast:
    region: str
    as_of: EpiWeek
    horizon: int
    target_week: EpiWeek
    prediction: float


@dataclass
class ProtocolResult:
    forecasts: list
    audit: list
    trace: TrainTrace
    states: dict  # as_of -> {"initial": state, "final": state} when kept
    bundle: ModelBundle | None
    source: SourceModel


def protocol_weeks(cfg: TrainConfig):
    """as_of weeks whose forecasts land in T for some horizon."""
    weeks = cfg.period_weeks("T")
    return week_range(weeks[0] - cfg.k, weeks[-1] - 1)


def _target_state(bundle):
    return {k: v for k, v in bundle.state_dict().items() if not k.startswith("source.")}


def weekly_protocol(source: SourceModel, wili: WiliPanel, exo: ExogenousPanel, graph: RegionGraph,
                    cfg: TrainConfig, weeks=None, keep_states=False, on_week=None) -> ProtocolResult:
    """Real-time loop: each week sees only data dated on or before it.

    ``source`` is copied, so the caller's pretrained model is left as is.
    ``on_week(as_of, bundle)`` runs after each week; ``bundle`` is None for
    the source-only model.
    """
    source = copy.deepcopy(source)
    if cfg.drop_buckets:
        exo = exo.drop_buckets(cfg.drop_buckets)
    weeks = list(weeks) if weeks is not None else protocol_weeks(cfg)
    regions = tuple(exo.regions)
    if tuple(wili.regions) != regions:
        raise ValueError("wILI and exogenous panels list different regions")
    bundle = None
    forecasts, audit, states = [], [], {}
    trace = TrainTrace()
    L = cfg.season_length
    for as_of in weeks:
        if not wili.has_week(as_of):
            raise ValueError(f"no wILI data for {as_of}")
        wili_t = wili.until(as_of)
        exo_t = exo.until(as_of)
        source.unfreeze()
        incremental_retrain(source, wili_t, as_of)
        source.freeze()
        curves, n_obs = current_prefixes(wili_t, L)
        end = as_of.week_of_season()
        if end >= n_obs or end >= L:
            raise ValueError(f"{as_of} lies outside the observed current season")
        win_in = win_tgt = None
        if cfg.model == "source_only":
            raw = source.encode(curves, (np.arange(len(regions)), np.full(len(regions), end)))
            preds = source.decode(raw).value
            forecast_last = as_of
        else:
            if bundle is None:
                bundle = build_cali_net(source, exo_t, graph, cfg)
                epochs = cfg.initial_epochs
            else:
                bundle.source = source
                epochs = cfg.weekly_epochs
            if keep_states:
                states[as_of] = {"initial": _target_state(bundle)}
            bundle.fit_normalizer(exo_t, as_of)
            bundle.fit_target_scale(wili_t, as_of)
            windows = make_training_windows(exo_t, wili_t, cfg.W, cfg.k, as_of)
            win_in = max(w.input_weeks[-1] for w in windows)
            win_tgt = max(w.target_week for w in windows)
            batch = make_batch(windows, bundle, wili_t, regions)
            alternating_train(bundle, batch, epochs, trace)
            in_weeks, X = forecast_inputs(exo_t, cfg.W, as_of)
            forecast_last = in_weeks[-1]
            preds = predict(bundle, bundle.normalize(X), np.arange(len(regions)), curves,
                            np.full(len(regions), end))
            if keep_states:
                states[as_of]["final"] = _target_state(bundle)
        for j, region in enumerate(regions):
            for h in range(cfg.k):
                forecasts.append(Forecast(region, as_of, h + 1, as_of + (h + 1), float(preds[j, h])))
        audit.append(AuditRecord(
            as_of=as_of,
            wili_last=wili_t.last_week,
            exo_last=exo_t.weeks[-1],
            normalizer_last=None if bundle is None else bundle.norm_as_of,
            window_input_last=win_in,
            window_target_last=win_tgt,
            forecast_input_last=forecast_last,
            source_prefix_last=wili_t.season(wili_t.current_season)[0][end],
        ))
        if on_week is not None:
            on_week(as_of, bundle)
        log.info("as_of %s: %d forecasts", as_of, len(regions) * cfg.k)
    return ProtocolResult(forecasts, audit, trace, states, bundle, source)


def save_bundle(bundle: ModelBundle, path):
    tensors = bundle.state_dict()
    if bundle.norm_mean is not None:
        tensors["norm.mean"] = bundle.norm_mean
        tensors["norm.std"] = bundle.norm_std
    tensors["target.scale"] = np.array([bundle.y_mean, bundle.y_std])
    meta = {
        "config": bundle.cfg.to_dict(),
        "signals": [list(s) for s in bundle.signals],
        "vertices": list(bundle.graph.vertices),
        "edges": [list(e) for e in bundle.graph.edges],
        "source_config": asdict(bundle.source.cfg),
        "decoder_attached": bundle.source.decoder_attached,
        "norm_as_of": None if bundle.norm_as_of is None else str(bundle.norm_as_of),
    }
    nx.save_tensors(path, tensors, meta)


def load_bundle(path) -> ModelBundle:
    tensors, meta = nx.load_tensors(path)
    cfg = TrainConfig.from_dict(meta["config"])
    source = SourceModel(SourceConfig(**meta["source_config"]))
    source.pretrained = True
    national = meta["vertices"][0]
    edges = [tuple(e) for e in meta["edges"] if national not in e]
    graph = build_region_graph(edges, meta["vertices"], national)
    signals = [tuple(s) for s in meta["signals"]]
    exo_stub = ExogenousPanel(tuple(signals), tuple(meta["vertices"]), (), np.zeros((0, len(meta["vertices"]), len(signals))),
                              EpiWeek(2000, 1))
    bundle = build_cali_net(source, exo_stub, graph, cfg)
    norm = {k: tensors.pop(k) for k in ("norm.mean", "norm.std") if k in tensors}
    bundle.y_mean, bundle.y_std = (float(v) for v in tensors.pop("target.scale"))
    bundle.load_state_dict(tensors)
    if norm:
        bundle.norm_mean, bundle.norm_std = norm["norm.mean"], norm["norm.std"]
        bundle.norm_as_of = EpiWeek.parse(meta["norm_as_of"]) if meta.get("norm_as_of") else None
    source.decoder_attached = bool(meta.get("decoder_attached", False))
    return bundle
