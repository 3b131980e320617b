import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from _oracles import dense_cov, dense_gls, dense_krige, dense_loglik
from spatialsl.core import SeverityCategory
from spatialsl.errors import RankDeficientDesign, SingularConditioning
from spatialsl.spatial import (
    GPParams,
    covariance,
    covariance_matrix,
    fit_fisher_scoring,
    local_krige,
    maxmin_order,
    nn_conditioning,
    predict_category,
    profile_loglik,
    score_and_information,
    vecchia_config,
    vecchia_loglik,
)
from spatialsl.synth import SynthSpec, simulate_gp


def _instance(n, seed, q=2, sigma2=2.0, tau2=0.5, phi=0.2):
    r = np.random.default_rng(seed)
    coords = r.uniform(size=(n, 2))
    W = np.column_stack([np.ones(n), r.normal(size=(n, q - 1))])
    beta = r.normal(size=q)
    D = cdist(coords, coords)
    L = np.linalg.cholesky(sigma2 * np.exp(-D / phi) + tau2 * np.eye(n))
    y = W @ beta + L @ r.normal(size=n)
    return y, W, coords, GPParams(beta, sigma2, tau2, phi)


# covariance

def test_covariance_examples():
    p = GPParams([0.0], 2.0, 0.5, 0.3)
    assert covariance(0.0, p) == 2.5
    assert covariance(0.3, p) == pytest.approx(2.0 / math.e, rel=1e-15)
    assert covariance(1e6, p) == 0.0
    # two distinct sites at the same location share no nugget
    assert covariance(0.0, p, same_site=False) == 2.0


def test_covariance_matrix_matches_oracle():
    c = np.random.default_rng(0).uniform(size=(12, 2))
    np.testing.assert_allclose(covariance_matrix(c, GPParams([0.0], 1.5, 0.2, 0.4)),
                               dense_cov(c, 1.5, 0.2, 0.4), rtol=1e-14, atol=0)


@pytest.mark.parametrize("kw", [dict(sigma2=-1.0), dict(sigma2=0.0, tau2=0.0), dict(phi=0.0),
                                dict(phi=np.inf)])
def test_params_invariants(kw):
    base = dict(beta=[0.0], sigma2=1.0, tau2=1.0, phi=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        GPParams(**base)


# ordering and conditioning

def test_order_single_site():
    cfg = vecchia_config(np.array([[0.3, 0.4]]), k=15)
    assert cfg.order.tolist() == [0]
    assert np.all(cfg.neighbors[0] == -1)


def test_order_collinear_hand_trace():
    coords = np.array([[0.0, 0], [1, 0], [2, 0], [3, 0]])
    order = maxmin_order(coords)
    # centroid 1.5: sites 1 and 2 tie, the lower index starts
    assert order[0] == 1
    assert order[1] == 3
    assert sorted(order.tolist()) == [0, 1, 2, 3]


def test_order_first_nearest_centroid():
    c = np.random.default_rng(1).uniform(size=(200, 2))
    first = maxmin_order(c)[0]
    assert first == np.argmin(np.linalg.norm(c - c.mean(0), axis=1))


@settings(max_examples=25)
@given(st.integers(2, 120), st.integers(0, 2**32))
def test_maxmin_property(n, seed):
    c = np.random.default_rng(seed).uniform(size=(n, 2))
    order = maxmin_order(c)
    assert sorted(order.tolist()) == list(range(n))
    # brute-force: each appended site maximises its distance to the ordered set
    for j in range(1, min(n, 30)):
        done = c[order[:j]]
        d = np.min(np.linalg.norm(c[:, None] - done[None], axis=2), axis=1)
        d[order[:j]] = -1
        assert d[order[j]] == pytest.approx(d.max(), rel=1e-12)


@settings(max_examples=25)
@given(st.integers(1, 150), st.integers(0, 30), st.integers(0, 2**32))
def test_conditioning_sets_brute_force(n, k, seed):
    c = np.random.default_rng(seed).uniform(size=(n, 2))
    cfg = vecchia_config(c, k)
    cfg.validate()
    for j in range(n):
        nb = cfg.neighbors[j][cfg.neighbors[j] >= 0]
        assert nb.size == min(k, j)
        earlier = cfg.order[:j]
        d = np.linalg.norm(c[earlier] - c[cfg.order[j]], axis=1)
        want = np.sort(d)[:nb.size]
        got = np.linalg.norm(c[nb] - c[cfg.order[j]], axis=1)
        np.testing.assert_allclose(got, want, rtol=1e-12)


def test_saturated_conditioning():
    c = np.random.default_rng(2).uniform(size=(20, 2))
    cfg = vecchia_config(c, k=19)
    for j in range(20):
        assert set(cfg.neighbors[j][cfg.neighbors[j] >= 0].tolist()) == set(cfg.order[:j].tolist())


# log-likelihood

def test_loglik_single_site():
    p = GPParams([1.5], 2.0, 0.5, 0.1)
    y, W, c = np.array([0.7]), np.ones((1, 1)), np.zeros((1, 2))
    want = -0.5 * math.log(2 * math.pi * 2.5) - 0.5 * (0.7 - 1.5) ** 2 / 2.5
    assert vecchia_loglik(p, y, W, c, vecchia_config(c, 15)) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("k", [1, 15])
def test_loglik_two_sites_closed_form(k):
    p = GPParams([0.2], 1.3, 0.4, 0.5)
    c = np.array([[0.0, 0.0], [0.3, 0.4]])
    y, W = np.array([0.9, -0.4]), np.ones((2, 1))
    v = 1.3 + 0.4
    cov = 1.3 * math.exp(-0.5 / 0.5)
    det = v * v - cov * cov
    r = y - 0.2
    quad = (v * r[0] ** 2 - 2 * cov * r[0] * r[1] + v * r[1] ** 2) / det
    want = -math.log(2 * math.pi) - 0.5 * math.log(det) - 0.5 * quad
    assert vecchia_loglik(p, y, W, c, vecchia_config(c, k)) == pytest.approx(want, rel=1e-13)


def test_loglik_dense_n50():
    y, W, c, p = _instance(50, 3)
    got = vecchia_loglik(p, y, W, c, vecchia_config(c, 49))
    want = dense_loglik(y, W, p.beta, c, p.sigma2, p.tau2, p.phi)
    assert abs(got - want) / abs(want) < 1e-8


@settings(max_examples=12)
@given(st.integers(2, 200), st.integers(0, 2**32))
def test_exact_when_saturated(n, seed):
    y, W, c, p = _instance(n, seed)
    got = vecchia_loglik(p, y, W, c, vecchia_config(c, n - 1))
    want = dense_loglik(y, W, p.beta, c, p.sigma2, p.tau2, p.phi)
    assert abs(got - want) / abs(want) < 1e-8


def test_accuracy_improves_with_k():
    err5, err15 = [], []
    for s in range(20):
        y, W, c, p = _instance(150, 100 + s, tau2=0.1, phi=0.3)
        exact = dense_loglik(y, W, p.beta, c, p.sigma2, p.tau2, p.phi)
        err5.append(abs(vecchia_loglik(p, y, W, c, vecchia_config(c, 5)) - exact))
        err15.append(abs(vecchia_loglik(p, y, W, c, vecchia_config(c, 15)) - exact))
    assert np.median(err15) <= np.median(err5)


def test_threads_bit_identical():
    y, W, c, p = _instance(5000, 4)
    cfg = vecchia_config(c, 10)
    a = vecchia_loglik(p, y, W, c, cfg, threads=1)
    b = vecchia_loglik(p, y, W, c, cfg, threads=4)
    assert a == b
    g1, i1 = score_and_information(p, y, W, c, cfg, threads=1)
    g4, i4 = score_and_information(p, y, W, c, cfg, threads=4)
    np.testing.assert_array_equal(g1, g4)
    np.testing.assert_array_equal(i1, i4)


def test_singular_conditioning_without_jitter():
    c = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    p = GPParams([0.0], 1.0, 0.0, 0.5)
    y, W = np.array([1.0, 1.0, 0.0]), np.ones((3, 1))
    with pytest.raises(SingularConditioning):
        vecchia_loglik(p, y, W, c, vecchia_config(c, 2), allow_jitter=False)
    assert np.isfinite(vecchia_loglik(p, y, W, c, vecchia_config(c, 2), allow_jitter=True))


def test_gls_matches_dense():
    y, W, c, p = _instance(120, 5, q=3)
    _, beta, _ = profile_loglik(p.sigma2, p.tau2, p.phi, y, W, c, vecchia_config(c, 119))
    np.testing.assert_allclose(beta, dense_gls(y, W, c, p.sigma2, p.tau2, p.phi), atol=1e-8)


def test_score_matches_finite_differences():
    y, W, c, p = _instance(80, 6)
    cfg = vecchia_config(c, 10)
    g, info = score_and_information(p, y, W, c, cfg)
    theta = np.log([p.sigma2, p.tau2, p.phi])

    def ll(t):
        e = np.exp(t)
        return vecchia_loglik(GPParams(p.beta, *e), y, W, c, cfg)

    h = 1e-5
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        fd = (ll(theta + d) - ll(theta - d)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)
    np.testing.assert_allclose(info, info.T)
    assert np.all(np.linalg.eigvalsh(info) > 0)


def test_information_matches_score_variance():
    # the expected information is the covariance of the score under the model
    r = np.random.default_rng(7)
    c = r.uniform(size=(40, 2))
    p = GPParams([0.0], 1.0, 0.3, 0.25)
    cfg = vecchia_config(c, 39)
    W = np.ones((40, 1))
    L = np.linalg.cholesky(dense_cov(c, 1.0, 0.3, 0.25))
    G = np.array([score_and_information(p, L @ r.normal(size=40), W, c, cfg)[0]
                  for _ in range(1500)])
    info = score_and_information(p, np.zeros(40), W, c, cfg)[1]
    np.testing.assert_allclose(np.cov(G, rowvar=False), info, rtol=0.15, atol=0.05 * info.max())


# Fisher scoring

def test_fit_recovers_beta_n2000():
    ds = simulate_gp(SynthSpec(n=2000, beta=(1.0, 2.0, -1.0), sigma2=1.0, tau2=0.25, phi=0.1,
                               seed=11))
    W = np.column_stack([np.ones(ds.n), ds.X])
    fit = fit_fisher_scoring(ds.y, W, ds.coords)
    assert fit.converged
    assert np.all(np.abs(fit.params.beta - [1.0, 2.0, -1.0]) < 3 * fit.stderr_beta)
    assert np.all(fit.stderr_beta > 0)


def test_fit_loglik_nondecreasing():
    y, W, c, _ = _instance(150, 8)
    fit = fit_fisher_scoring(y, W, c)
    lls = [t["loglik"] for t in fit.trace]
    assert all(b >= a for a, b in zip(lls, lls[1:]))
    assert fit.converged and lls[-1] == fit.loglik


def test_fit_beats_its_start():
    y, W, c, p = _instance(150, 9)
    cfg = vecchia_config(c, 15)
    fit = fit_fisher_scoring(y, W, c, config=cfg)
    truth_ll, _, _ = profile_loglik(p.sigma2, p.tau2, p.phi, y, W, c, cfg)
    assert fit.loglik >= truth_ll - 1e-9


def test_white_noise_sigma2_small():
    hits = 0
    for s in range(10):
        ds = simulate_gp(SynthSpec(n=1000, beta=(0.0, 1.0), sigma2=0.0, tau2=1.0, phi=0.1,
                                   seed=200 + s))
        W = np.column_stack([np.ones(ds.n), ds.X])
        fit = fit_fisher_scoring(ds.y, W, ds.coords)
        hits += fit.params.sigma2 < 0.05 * np.var(ds.y)
    assert hits >= 9


def test_duplicate_site_no_crash():
    r = np.random.default_rng(10)
    c = r.uniform(size=(60, 2))
    c = np.vstack([c, c[:1]])
    y = r.normal(size=60)
    y = np.append(y, y[0])
    W = np.ones((61, 1))
    fit = fit_fisher_scoring(y, W, c, init={"tau2": 1e-12})
    assert np.isfinite(fit.loglik)


def test_fixed_sigma2_zero_is_ols():
    y, W, c, _ = _instance(100, 12, q=3)
    fit = fit_fisher_scoring(y, W, c, fixed={"sigma2": 0.0})
    beta, *_ = np.linalg.lstsq(W, y, rcond=None)
    rss = float(np.sum((y - W @ beta) ** 2))
    np.testing.assert_allclose(fit.params.beta, beta, atol=1e-8)
    assert fit.params.tau2 == pytest.approx(rss / 100, rel=1e-6)
    assert fit.free == ("tau2",)


def test_rank_deficient():
    y, W, c, _ = _instance(30, 13)
    with pytest.raises(RankDeficientDesign):
        fit_fisher_scoring(y, np.column_stack([W, W[:, 1]]), c)
    with pytest.raises(RankDeficientDesign):
        fit_fisher_scoring(y[:2], W[:2], c[:2])


def test_fit_report_fields():
    y, W, c, _ = _instance(80, 14)
    rep = fit_fisher_scoring(y, W, c).report(names=["z1"])
    assert [d["name"] for d in rep["coefficients"]] == ["intercept", "z1"]
    assert {"sigma2", "tau2", "phi", "loglik", "iterations", "converged", "trace"} <= set(rep)


# kriging

def test_krige_matches_dense():
    y, W, c, p = _instance(100, 15)
    r = np.random.default_rng(16)
    cs = r.uniform(size=(25, 2))
    Ws = np.column_stack([np.ones(25), r.normal(size=25)])
    mean, var = local_krige(p, (W, y, c), (Ws, cs), k_pred=100)
    m0, v0 = dense_krige(W, y, c, Ws, cs, p.beta, p.sigma2, p.tau2, p.phi)
    np.testing.assert_allclose(mean, m0, atol=1e-8)
    np.testing.assert_allclose(var, v0, atol=1e-8)


def test_krige_local_matches_dense_on_neighbours():
    y, W, c, p = _instance(200, 17)
    cs = np.array([[0.5, 0.5]])
    Ws = np.array([[1.0, 0.3]])
    mean, var = local_krige(p, (W, y, c), (Ws, cs), k_pred=20)
    nb = np.argsort(np.linalg.norm(c - cs, axis=1))[:20]
    m0, v0 = dense_krige(W[nb], y[nb], c[nb], Ws, cs, p.beta, p.sigma2, p.tau2, p.phi)
    np.testing.assert_allclose(mean, m0, atol=1e-8)
    np.testing.assert_allclose(var, v0, atol=1e-8)


def test_krige_interpolates_without_nugget():
    y, W, c, p = _instance(50, 18)
    p0 = p.with_(tau2=0.0)
    mean, var = local_krige(p0, (W, y, c), (W[:5], c[:5]), k_pred=10)
    np.testing.assert_allclose(mean, y[:5], atol=1e-8)
    np.testing.assert_allclose(var, 0.0, atol=1e-8)


def test_krige_nugget_in_variance():
    y, W, c, p = _instance(50, 19)
    _, var = local_krige(p, (W, y, c), (W[:5], c[:5]), k_pred=10)
    assert np.all(var >= p.tau2 - 1e-12)


def test_krige_short_range_limit():
    y, W, c, p = _instance(60, 20)
    cs = np.random.default_rng(21).uniform(size=(10, 2)) + 2.0
    Ws = np.column_stack([np.ones(10), np.arange(10.0)])
    mean, var = local_krige(p.with_(phi=1e-6), (W, y, c), (Ws, cs), k_pred=15)
    np.testing.assert_allclose(mean, Ws @ p.beta, atol=1e-12)
    np.testing.assert_allclose(var, p.total_variance, atol=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**32), st.floats(-3, 3), st.floats(-3, 3))
def test_krige_linear_in_y(seed, a, b):
    y, W, c, p = _instance(40, seed % 1000)
    y2 = np.random.default_rng(seed).normal(size=40)
    cs = np.random.default_rng(seed + 1).uniform(size=(6, 2))
    Ws = np.column_stack([np.ones(6), np.zeros(6)])
    p0 = p.with_(beta=np.zeros(2))
    m1, v1 = local_krige(p0, (W, y, c), (Ws, cs), k_pred=12)
    m2, v2 = local_krige(p0, (W, y2, c), (Ws, cs), k_pred=12)
    m3, v3 = local_krige(p0, (W, a * y + b * y2, c), (Ws, cs), k_pred=12)
    np.testing.assert_allclose(m3, a * m1 + b * m2, atol=1e-9)
    np.testing.assert_array_equal(v1, v2)
    np.testing.assert_array_equal(v1, v3)


def test_krige_empty_and_threads():
    y, W, c, p = _instance(80, 22)
    m, v = local_krige(p, (W, y, c), (np.empty((0, 2)), np.empty((0, 2))))
    assert m.shape == v.shape == (0,)
    cs = np.random.default_rng(23).uniform(size=(3000, 2))
    Ws = np.column_stack([np.ones(3000), np.zeros(3000)])
    a = local_krige(p, (W, y, c), (Ws, cs), k_pred=30, threads=1)
    b = local_krige(p, (W, y, c), (Ws, cs), k_pred=30, threads=3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_predict_category_examples():
    assert predict_category(0.0) is SeverityCategory.Unburned
    assert predict_category(700.0) is SeverityCategory.High
    assert predict_category(-300.0) is SeverityCategory.HighEnhancedGrowth
    assert predict_category(np.array([0.0, 700.0])).tolist() == [2, 6]
