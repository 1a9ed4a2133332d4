"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary.
The protocol runs are shared through module fixtures; the whole file takes a
few minutes on one core.
"""

import copy
import time

import numpy as np
import pytest

from conftest import record
from episteer import numerics as nx
from episteer.caem import CaemModel, caem_encode, laplacian_penalty, region_embed
from episteer.data import build_region_graph, default_graph, make_training_windows, synth_generate
from episteer.data.synth import SynthConfig
from episteer.eval import (
    ForecastReport,
    ablation_run,
    leakage_violations,
    ratio_cell,
    ratio_heatmap,
    rmse,
)
from episteer.htl import HtlHeads, denoise_loss, project_source, project_target, shared_head
from episteer.kd import KdConfig, attention_weight, compute_eta, kd_loss, kd_terms
from episteer.source_model import SourceConfig, SourceModel, pretrain_source
from episteer.training import TrainConfig, alternating_train, build_cali_net, make_batch, weekly_protocol
from gradcheck import numeric_grad, rel_err

pytestmark = pytest.mark.acceptance


# ---- shared protocol runs ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def runs(season, _pretrained):
    """Full weekly protocol on the default season for the three models criteria 5-9 compare."""
    source = _pretrained[0]
    out = {}
    for variant in ("cali_net", "standalone_caem", "source_only", "no_kd"):
        cfg = TrainConfig(seed=0, audit_grads=variant == "cali_net")
        t0 = time.perf_counter()
        report, result = ablation_run(variant, source, season.wili, season.exo, season.graph, cfg)
        out[variant] = (report, result, time.perf_counter() - t0)
    return out


# ---- 1: gradient suite --------------------------------------------------------------------------


def _fd_worst(build, params):
    for p in params:
        p.zero_grad()
    nx.backward(build())
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        worst = max(worst, rel_err(analytic, numeric_grad(lambda: float(build().value), p)))
    return worst


def _instance(seed):
    rng = np.random.default_rng(seed)
    V, l, h, W = 4, 3, 3, 2
    caem = CaemModel(l, V, h_r=h, W=W, rng=rng)
    heads = HtlHeads(5, h, m_j=4, m_a=3, k=1, noise_std=0.0, rng=rng)
    X = rng.normal(size=(V, W, l))
    idx = np.arange(V)
    graph = build_region_graph([("hhs1", "hhs2")], vertices=("nat", "hhs1", "hhs2", "hhs3"))
    raw = rng.normal(size=(V, 5))
    y = rng.normal(size=(V, 1))
    return caem, heads, X, idx, graph.laplacian, raw, y


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    worst = {}

    def track(name, value):
        worst[name] = max(worst.get(name, 0.0), value)

    for seed in range(20):
        caem, heads, X, idx, L, raw, y = _instance(seed)

        def pred():
            H, _ = caem_encode(caem, X, idx)
            return H, shared_head(heads, project_target(heads, H))

        track("mse", _fd_worst(lambda: nx.mean_all(nx.square(nx.sub(pred()[1], y))),
                               caem.gru.parameters() + heads.target_side()))
        track("recon", _fd_worst(lambda: region_embed(caem.embedder)[1], caem.embedder.parameters()))
        track("laplacian", _fd_worst(lambda: laplacian_penalty(pred()[0], L),
                                     caem.gru.parameters() + caem.embedder.encoder.parameters()))
        psi_s = project_source(heads, raw).value
        y_s = y + np.random.default_rng(seed).normal(0, 0.5, y.shape)
        eta = compute_eta(y_s, y)

        def kd_part(which):
            def build():
                H, yt = pred()
                im, hint, _ = kd_terms(y_s, yt, psi_s, project_target(heads, H), y, eta, KdConfig())
                return im if which == 0 else hint
            return build

        track("kd_imitation", _fd_worst(kd_part(0), caem.gru.parameters() + heads.target_side()))
        track("kd_hint", _fd_worst(kd_part(1), caem.gru.parameters() + [heads.t.weight, heads.t.bias]))
        # the clean input is a regression target, so the embedding enters as data here
        H = pred()[0].value
        track("denoise", _fd_worst(lambda: nx.add(denoise_loss(heads, raw, "s"), denoise_loss(heads, H, "t")),
                                   heads.parameters()))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    record(1, ok, f"20 instances x 6 terms, worst rel err {max(worst.values()):.1e}, {elapsed:.1f}s")
    assert ok, {k: float(v) for k, v in worst.items()}


# ---- 2: formula oracles ---------------------------------------------------------------------------


def test_criterion_2_formula_oracles():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 20))
        p, t = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
        errs = [float((p[i, 0] - t[i, 0]) ** 2) for i in range(n)]
        eta = compute_eta(p, t)
        worst = max(worst, abs(eta - max(max(errs) - min(errs), 1e-8)))
        phi = attention_weight(p, t, eta)
        worst = max(worst, max(abs(phi[i] - min(1.0, max(0.0, 1 - errs[i] / eta))) for i in range(n)))
        yt, ps, pt = rng.normal(size=(n, 1)), rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        alpha = float(rng.uniform(0, 2))
        loop = sum(min(1.0, max(0.0, 1 - errs[i] / eta)) * (alpha * (p[i, 0] - yt[i, 0]) ** 2
                                                            + sum((ps[i, j] - pt[i, j]) ** 2 for j in range(3)))
                   for i in range(n)) / n
        worst = max(worst, abs(kd_loss(p, yt, ps, pt, t, eta, KdConfig(alpha=alpha)).value - loop))
        H = rng.normal(size=(11, 4))
        g = default_graph()
        edge_sum = sum(np.sum((H[g.index(u)] / np.sqrt(g.degree[g.index(u)])
                               - H[g.index(v)] / np.sqrt(g.degree[g.index(v)])) ** 2) for u, v in g.edges)
        worst = max(worst, abs(laplacian_penalty(H, g.laplacian).value - edge_sum))
        a, b = rng.normal(size=n), rng.normal(size=n)
        worst = max(worst, abs(rmse(a, b) - (sum((a[i] - b[i]) ** 2 for i in range(n)) / n) ** 0.5))
        A, B = rng.uniform(0, 2, (3, 4)), rng.uniform(0, 2, (3, 4))
        hm = ratio_heatmap(A, B)
        worst = max(worst, max(abs(hm[i, j] - max(-1.0, min(1.0, 1 - A[i, j] / B[i, j])))
                               for i in range(3) for j in range(4)))
    ok = worst <= 1e-12
    record(2, ok, f"100 cases x 6 formulas, worst abs diff {worst:.1e}")
    assert ok


# ---- 3: unidirectionality ----------------------------------------------------------------------


def test_criterion_3_unidirectionality(runs):
    trace = runs["cali_net"][1].trace
    kd_side = trace.series("kd_grad_source_side")
    frozen = trace.series("grad_source_model")
    steps = len(trace.series("total", "A"))
    ok = len(kd_side) == len(frozen) == steps > 0 and max(kd_side) == 0.0 and max(frozen) == 0.0
    record(3, ok, f"{steps} phase-A steps, max |grad| source {max(frozen)}, s/s' under KD {max(kd_side)}")
    assert ok


# ---- 4: Laplacian invariants ---------------------------------------------------------------------


def test_criterion_4_laplacian_invariants():
    g = default_graph()
    rng = np.random.default_rng(0)
    lowest = min(laplacian_penalty(rng.normal(0, rng.uniform(0.1, 10), (11, 5)), g.laplacian).value
                 for _ in range(1000))
    c = rng.normal(size=5)
    null = laplacian_penalty(np.sqrt(g.degree)[:, None] * c, g.laplacian).value
    nat_degree = g.degree[g.index("nat")]
    ok = lowest >= -1e-12 and abs(null) <= 1e-12 and nat_degree == 10
    record(4, ok, f"min over 1000 H {lowest:.3g}, sqrt-degree penalty {null:.1e}, national degree {nat_degree:g}")
    assert ok


# ---- 5 and 6: transfer ------------------------------------------------------------------------------


def test_criterion_5_positive_transfer(runs):
    cali, src = runs["cali_net"][0], runs["source_only"][0]
    a, b = cali.rmse_table("T1"), src.rmse_table("T1")
    wins = sum(a[r] < b[r] for r in a)
    gain = 1 - cali.aggregate("T1") / src.aggregate("T1")
    took = runs["cali_net"][2] + runs["source_only"][2]
    ok = wins >= 9 and gain >= 0.2 and took < 600
    record(5, ok, f"T1: lower in {wins}/11 regions, aggregate {cali.aggregate('T1'):.3f} vs "
                  f"{src.aggregate('T1'):.3f} ({gain:+.0%}), {took:.0f}s")
    assert ok


def test_criterion_6_negative_transfer(runs):
    cali, caem, src = (runs[v][0] for v in ("cali_net", "standalone_caem", "source_only"))
    a, b = cali.rmse_table("T2"), src.rmse_table("T2")
    ties = sum(a[r] <= 1.01 * b[r] for r in a)
    ok = cali.aggregate("T2") <= caem.aggregate("T2") and ties >= 6
    record(6, ok, f"T2: aggregate {cali.aggregate('T2'):.3f} vs standalone {caem.aggregate('T2'):.3f}; "
                  f"beats or ties source-only in {ties}/11")
    assert ok


# ---- 7: data ablation ---------------------------------------------------------------------------------


def test_criterion_7_data_ablation(season, _pretrained):
    lines, ok = [], True
    for seed in range(3):
        if seed == 0:
            s, source = season, _pretrained[0]
        else:
            s = synth_generate(seed)
            source = SourceModel(SourceConfig(seed=seed))
            pretrain_source(source, s.wili)
        cfg = TrainConfig(seed=seed)
        agg = {v: ablation_run(v, source, s.wili, s.exo, s.graph, cfg)[0].aggregate("T")
               for v in ("drop_DS1", "drop_DS3", "drop_DS4")}
        ok &= agg["drop_DS1"] > max(agg["drop_DS3"], agg["drop_DS4"])
        lines.append(f"seed {seed}: " + "/".join(f"{agg[v]:.3f}" for v in agg))
    record(7, ok, "T RMSE drop_DS1/DS3/DS4 " + "; ".join(lines))
    assert ok


# ---- 8: KD ablation harness ------------------------------------------------------------------------


def test_criterion_8_kd_ablation(runs, tmp_path):
    cali, no_kd = runs["cali_net"][0], runs["no_kd"][0]
    rows, weeks, a = cali.weekly_rmse()
    rows_b, weeks_b, b = no_kd.weekly_rmse()
    assert rows == rows_b and weeks == weeks_b
    hm = ratio_heatmap(a, b)
    trace = runs["cali_net"][1].trace
    nonoverlap = trace.series("kd_nonoverlap")
    windows = np.array(trace.series("windows"))
    kd_windows = np.array(trace.series("kd_windows"))
    pre_contamination = int((windows - kd_windows).min())
    ok = (hm.shape == (11, len(weeks)) and (hm >= -1).all() and (hm <= 1).all()
          and max(nonoverlap) == 0.0 and pre_contamination > 0)
    record(8, ok, f"heatmap {hm.shape[0]}x{hm.shape[1]} in [{hm.min():.2f}, {hm.max():.2f}]; "
                  f"KD contribution of >= {pre_contamination} pre-contamination windows/step: {max(nonoverlap)}")
    assert ok


# ---- 9: real-time discipline -------------------------------------------------------------------------


def test_criterion_9_leakage_audit(runs):
    audits = [rec for _, result, _ in runs.values() for rec in result.audit]
    bad = leakage_violations(audits)
    ok = not bad and len(audits) > 0
    record(9, ok, f"{len(audits)} weekly audit records, {len(bad)} violations")
    assert ok


# ---- 10: overfit sanity ----------------------------------------------------------------------------------


def test_criterion_10_overfit():
    regions = ("nat", "hhs1")
    s = synth_generate(0, SynthConfig(regions=regions, coverage_start="201940", uptrend_magnitude=0.0))
    graph = build_region_graph([], vertices=regions)
    as_of = s.exo.weeks[29]
    source = SourceModel(SourceConfig(seed=0))
    pretrain_source(source, s.wili)
    cfg = TrainConfig(seed=0)
    exo = s.exo.until(as_of)
    bundle = build_cali_net(source, exo, graph, cfg)
    bundle.fit_normalizer(exo, as_of)
    bundle.fit_target_scale(s.wili, as_of)
    windows = make_training_windows(exo, s.wili.until(as_of), cfg.W, cfg.k, as_of)
    batch = make_batch(windows, bundle, s.wili.until(as_of), regions)
    mse = alternating_train(bundle, batch, 2000).series("mse", "A")
    first = next((i for i, v in enumerate(mse) if v < 1e-3), None)
    ok = first is not None
    record(10, ok, f"2 regions x {len(exo.weeks[:30])} weeks: train MSE {mse[0]:.3f} -> {mse[-1]:.1e}, "
                   f"below 1e-3 at step {first}")
    assert ok


# ---- 11: performance envelope -----------------------------------------------------------------------------


def test_criterion_11_runtime(runs):
    took = runs["cali_net"][2]
    ok = took < 300
    record(11, ok, f"full cali_net weekly protocol (incl. gradient audit) in {took:.1f}s")
    assert ok
