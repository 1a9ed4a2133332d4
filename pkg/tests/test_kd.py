import numpy as np
import pytest

from episteer import numerics as nx
from episteer.caem import CaemModel, caem_encode
from episteer.htl import HtlHeads, project_source, project_target, shared_head
from episteer.kd import KdConfig, attention_weight, compute_eta, kd_loss, kd_terms
from gradcheck import check_grads


def test_eta_direct_formula():
    assert compute_eta([0.0, 2.0], [0.0, 0.0]) == 4.0


def test_eta_degenerate_range_uses_floor():
    assert compute_eta([1.0, 2.0, 3.0], [0.0, 1.0, 2.0], eta_floor=1e-6) == 1e-6


def test_eta_needs_two_observations():
    with pytest.raises(ValueError):
        compute_eta([1.0], [0.0])


def test_eta_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n, k = rng.integers(2, 30), rng.integers(1, 3)
        p, y = rng.normal(size=(n, k)), rng.normal(size=(n, k))
        errs = [sum((p[i, j] - y[i, j]) ** 2 for j in range(k)) for i in range(n)]
        assert compute_eta(p, y) == pytest.approx(max(errs) - min(errs), abs=1e-12)


def test_attention_endpoints():
    assert attention_weight([2.0], [2.0], 1.0)[0] == 1.0
    assert attention_weight([2.0], [0.0], 4.0)[0] == 0.0
    assert attention_weight([2.0], [0.0], 2.0)[0] == 0.0
    assert attention_weight([2.0], [0.0], 2.0, clamp=False)[0] == -1.0
    with pytest.raises(ValueError):
        attention_weight([1.0], [0.0], 0.0)


def test_kd_zero_when_mimicking():
    rng = np.random.default_rng(0)
    y_s, psi = rng.normal(size=(5, 1)), rng.normal(size=(5, 3))
    assert kd_loss(y_s, y_s, psi, psi, rng.normal(size=(5, 1)), 2.0).value == 0.0


def test_kd_single_term():
    loss = kd_loss(np.array([[3.0]]), np.array([[1.0]]), np.zeros((1, 2)), np.zeros((1, 2)),
                   np.array([[3.0]]), 1.0, KdConfig(alpha=1.0))
    assert loss.value == 4.0


def loop_oracle(y_s, y_t, psi_s, psi_t, y, eta, alpha, beta, clamp):
    n = len(y_s)
    total = 0.0
    for i in range(n):
        e = sum((y_s[i, j] - y[i, j]) ** 2 for j in range(y.shape[1]))
        phi = 1 - e / eta
        if clamp:
            phi = min(1.0, max(0.0, phi))
        im = sum((y_s[i, j] - y_t[i, j]) ** 2 for j in range(y.shape[1]))
        hint = sum((psi_s[i, j] - psi_t[i, j]) ** 2 for j in range(psi_s.shape[1]))
        total += phi * (alpha * im + beta * hint)
    return total / n


def test_kd_matches_loop_oracle():
    rng = np.random.default_rng(1)
    for case in range(100):
        n, k, m = rng.integers(1, 12), rng.integers(1, 3), rng.integers(1, 6)
        args = [rng.normal(size=(n, k)), rng.normal(size=(n, k)), rng.normal(size=(n, m)),
                rng.normal(size=(n, m)), rng.normal(size=(n, k))]
        eta = rng.uniform(0.1, 5)
        cfg = KdConfig(alpha=rng.uniform(0, 2), beta=rng.uniform(0, 2), clamp_phi=bool(case % 2))
        got = kd_loss(*args, eta, cfg).value
        assert got == pytest.approx(loop_oracle(*args, eta, cfg.alpha, cfg.beta, cfg.clamp_phi), abs=1e-12)


def test_kd_rejects_non_overlap_samples():
    z = np.zeros((2, 1))
    with pytest.raises(ValueError):
        kd_loss(z, z, z, z, z, 1.0, in_overlap=np.array([True, False]))
    kd_loss(z, z, z, z, z, 1.0, in_overlap=np.array([True, True]))


def test_duplicated_batch_leaves_loss_unchanged():
    rng = np.random.default_rng(2)
    args = [rng.normal(size=(6, 1)), rng.normal(size=(6, 1)), rng.normal(size=(6, 4)),
            rng.normal(size=(6, 4)), rng.normal(size=(6, 1))]
    doubled = [np.concatenate([a, a]) for a in args]
    assert kd_loss(*doubled, 3.0).value == pytest.approx(kd_loss(*args, 3.0).value, rel=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        KdConfig(alpha=-1.0)
    with pytest.raises(ValueError):
        KdConfig(eta_floor=0.0)


@pytest.mark.parametrize("which", ["imitation", "hint"])
def test_kd_term_gradients(which):
    rng = np.random.default_rng(3)
    y_s, psi_s, y = rng.normal(size=(5, 1)), rng.normal(size=(5, 3)), rng.normal(size=(5, 1))
    y_t = nx.Parameter(rng.normal(size=(5, 1)))
    psi_t = nx.Parameter(rng.normal(size=(5, 3)))
    pick = 0 if which == "imitation" else 1
    check_grads(lambda: kd_terms(y_s, y_t, psi_s, psi_t, y, 4.0, KdConfig())[pick], [y_t, psi_t])


def test_kd_gradient_reaches_only_target_side():
    rng = np.random.default_rng(4)
    heads = HtlHeads(6, 4, m_j=5, m_a=3, rng=rng)
    caem = CaemModel(3, 11, h_r=4, W=2, rng=rng)
    raw = nx.Parameter(rng.normal(size=(11, 6)))  # stands in for the source model output
    H, _ = caem_encode(caem, rng.normal(size=(11, 2, 3)), np.arange(11))
    psi_s, psi_t = project_source(heads, raw), project_target(heads, H)
    y_s, y_t = shared_head(heads, psi_s), shared_head(heads, psi_t)
    y = y_s.value + rng.normal(0, 0.3, y_s.value.shape)
    for p in heads.parameters() + caem.parameters() + [raw]:
        p.zero_grad()
    nx.backward(kd_loss(y_s, y_t, psi_s, psi_t, y, 1.0))
    for p in heads.source_side() + [raw]:
        assert not p.grad.any()
    for layer in (heads.t, heads.f1, heads.f2):
        assert layer.weight.grad.any()
    assert any(p.grad.any() for p in caem.parameters())
