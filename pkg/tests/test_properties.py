"""Property-based checks of the model's invariants."""

from datetime import date, timedelta

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from episteer.caem import laplacian_penalty
from episteer.data import EpiWeek, build_region_graph, default_graph, week_range
from episteer.eval import ratio_heatmap, rmse
from episteer.kd import KdConfig, attention_weight, compute_eta, kd_loss

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
GRAPH = default_graph()


def matrix(rows, cols, elements=finite):
    return arrays(np.float64, (rows, cols), elements=elements)


# ---- Laplacian ---------------------------------------------------------------------------------------


@given(matrix(11, 3))
def test_laplacian_penalty_is_non_negative(H):
    assert laplacian_penalty(H, GRAPH.laplacian).value >= -1e-9 * max(1.0, float(np.sum(H * H)))


@given(st.lists(finite, min_size=3, max_size=3))
def test_sqrt_degree_embeddings_cost_nothing(c):
    H = np.sqrt(GRAPH.degree)[:, None] * np.array(c)
    assert abs(laplacian_penalty(H, GRAPH.laplacian).value) <= 1e-9 * max(1.0, float(np.sum(H * H)))


@given(st.sets(st.tuples(st.integers(1, 10), st.integers(1, 10)).filter(lambda e: e[0] < e[1]), max_size=20))
def test_national_node_touches_every_region(pairs):
    vertices = ("nat",) + tuple(f"hhs{i}" for i in range(1, 11))
    g = build_region_graph([(f"hhs{a}", f"hhs{b}") for a, b in pairs], vertices=vertices)
    assert g.degree[g.index("nat")] == 10
    assert np.allclose(g.laplacian, g.laplacian.T)
    assert np.linalg.eigvalsh(g.laplacian).min() > -1e-10


# ---- attention ---------------------------------------------------------------------------------------


@given(arrays(np.float64, st.integers(2, 30), elements=finite), arrays(np.float64, 30, elements=finite))
def test_phi_stays_in_unit_interval(p, t):
    t = t[: len(p)]
    phi = attention_weight(p, t, compute_eta(p, t))
    assert ((phi >= 0) & (phi <= 1)).all()


@given(arrays(np.float64, st.integers(2, 30), elements=finite), st.floats(1e-3, 1e3))
def test_phi_decreases_with_source_error(err, eta):
    t = np.zeros_like(err)
    order = np.argsort(np.abs(err))
    phi = attention_weight(err[order], t, eta, clamp=False)
    assert (np.diff(phi) <= 1e-12).all()


@given(matrix(6, 1), matrix(6, 1), matrix(6, 2), matrix(6, 2), matrix(6, 1))
def test_kd_loss_invariant_to_duplicating_the_batch(ys, yt, ps, pt, y):
    eta = compute_eta(ys, y)
    once = kd_loss(ys, yt, ps, pt, y, eta, KdConfig()).value
    twice = kd_loss(*(np.vstack([a, a]) for a in (ys, yt, ps, pt)), np.vstack([y, y]), eta, KdConfig()).value
    assert np.isclose(once, twice, rtol=1e-10, atol=1e-9)
    assert once >= 0


# ---- metrics -----------------------------------------------------------------------------------------


@given(arrays(np.float64, st.integers(1, 40), elements=finite), arrays(np.float64, 40, elements=finite))
def test_rmse_symmetric_and_bounded(a, b):
    b = b[: len(a)]
    assert rmse(a, b) == rmse(b, a)
    assert 0 <= rmse(a, b) <= np.max(np.abs(a - b)) + 1e-9


@given(matrix(4, 5, st.floats(0, 1e3)), matrix(4, 5, st.floats(0, 1e3)))
def test_heatmap_cells_bounded(a, b):
    hm = ratio_heatmap(a, b)
    assert hm.shape == a.shape
    assert ((hm >= -1) & (hm <= 1)).all()
    assert (hm[a == b] == 0).all()


# ---- epiweeks ----------------------------------------------------------------------------------------

dates = st.dates(date(1990, 1, 1), date(2040, 12, 31))


@given(dates, st.integers(-600, 600))
def test_epiweek_arithmetic_round_trips(d, n):
    w = EpiWeek.from_date(d)
    assert (w + n) - w == n
    assert (w + n) - n == w
    assert EpiWeek.parse(str(w)) == w


@given(dates, dates)
def test_epiweek_order_follows_dates(d1, d2):
    w1, w2 = EpiWeek.from_date(d1), EpiWeek.from_date(d2)
    if d1 <= d2:
        assert w1 <= w2
    assert (w1 == w2) == (abs((w1.start_date() - w2.start_date()).days) == 0)


@settings(max_examples=30)
@given(dates, st.integers(0, 120))
def test_week_range_is_contiguous(d, n):
    start = EpiWeek.from_date(d)
    weeks = week_range(start, start + n)
    assert len(weeks) == n + 1
    assert all(b.start_date() - a.start_date() == timedelta(weeks=1) for a, b in zip(weeks, weeks[1:]))
