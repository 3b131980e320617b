import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spatialsl.errors import ConfigError, DegenerateDesign, NotFitted
from spatialsl.learners import (
    DEFAULT_LEARNERS,
    REGISTRY,
    DecisionTree,
    ElasticNet,
    GradientBoosting,
    KNeighbors,
    Lasso,
    LearnerSpec,
    MLP,
    Ridge,
    RegularizedBoosting,
    default_library,
    load_learners,
    mlp_spec,
    save_learners,
)
from spatialsl.learners.trees import Bagging, ExtraTrees, RandomForest

# small ensembles keep the suite quick; defaults are checked separately
FAST = {"bagging": {"n_estimators": 5}, "random_forest": {"n_estimators": 10},
        "extra_trees": {"n_estimators": 10}, "gradient_boosting": {"n_estimators": 20},
        "regularized_boosting": {"n_estimators": 20}, "mlp": {"epochs": 20}}


def _data(n=120, p=4, seed=0):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, p))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2 - 0.5 * X[:, 2] + 0.1 * r.normal(size=n)
    return X, y


def test_library_has_eleven_learners():
    lib = default_library()
    assert len(lib) == 11
    assert [s.name for s in lib] == list(DEFAULT_LEARNERS)
    assert len(set(DEFAULT_LEARNERS)) == 11


def test_documented_defaults():
    assert Ridge().params["alpha"] == 1.0
    assert ElasticNet().params == {"alpha": 1.0, "l1_ratio": 0.5, "max_iter": 10000, "tol": 1e-10}
    assert Lasso().params["alpha"] == 1.0
    assert KNeighbors().params["k"] == 5
    assert DecisionTree().params["max_depth"] == -1
    assert DecisionTree().params["min_samples_split"] == 2
    gb = GradientBoosting().params
    assert (gb["n_estimators"], gb["learning_rate"], gb["max_depth"]) == (100, 0.1, 3)
    rb = RegularizedBoosting().params
    assert (rb["reg_lambda"], rb["gamma"]) == (1.0, 0.0)
    assert Bagging().params["n_estimators"] == 10
    assert RandomForest().params["n_estimators"] == 100
    assert RandomForest()._max_features(27) == 9
    et = ExtraTrees().params
    assert et["n_estimators"] == 100 and et["extra"] and not et["bootstrap"]
    assert MLP().params["widths"] == (64, 64, 64, 64)


def test_mlp_spec():
    spec = mlp_spec()
    assert spec.epochs == 200
    assert spec.batch == 115
    assert spec.hidden_layers == 4 == len(spec.widths)
    assert spec.learning_rate == 0.01
    assert spec.activation == "relu" and spec.optimizer == "adam"


def test_unknown_hyperparameter():
    with pytest.raises(ValueError):
        Ridge(lam=3)
    with pytest.raises(ConfigError):
        LearnerSpec("svm")


@pytest.mark.parametrize("kind", DEFAULT_LEARNERS)
def test_constant_response_predicts_constant(kind):
    X, _ = _data(n=40)
    y = np.full(40, 123.25)
    model = REGISTRY[kind](**FAST.get(kind, {})).fit(X, y, seed=1)
    pred = model.predict(np.random.default_rng(3).normal(size=(7, X.shape[1])))
    np.testing.assert_array_equal(pred, 123.25)


@pytest.mark.parametrize("kind", DEFAULT_LEARNERS)
def test_fit_is_deterministic(kind):
    X, y = _data(n=80)
    a = REGISTRY[kind](**FAST.get(kind, {})).fit(X, y, seed=5).predict(X[:10])
    b = REGISTRY[kind](**FAST.get(kind, {})).fit(X, y, seed=5).predict(X[:10])
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))


@pytest.mark.parametrize("kind", DEFAULT_LEARNERS)
def test_predict_before_fit(kind):
    with pytest.raises(NotFitted):
        REGISTRY[kind]().predict(np.zeros((2, 3)))


def test_bad_inputs():
    with pytest.raises(DegenerateDesign):
        Ridge().fit(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(DegenerateDesign):
        Ridge().fit(np.array([[0.0], [np.nan]]), np.zeros(2))
    m = Ridge().fit(*_data(n=20, p=3))
    with pytest.raises(DegenerateDesign):
        m.predict(np.zeros((3, 5)))
    assert m.predict(np.zeros((0, 3))).shape == (0,)


# linear learners

def test_ridge_zero_penalty_is_ols():
    X, y = _data(n=60, p=5)
    m = Ridge(alpha=0.0).fit(X, y)
    A = np.column_stack([np.ones(60), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose(m.coef_original_, beta[1:], rtol=0, atol=1e-8)
    assert m.intercept_original_ == pytest.approx(beta[0], abs=1e-8)


def test_ridge_matches_closed_form():
    X, y = _data(n=50, p=3, seed=2)
    m = Ridge(alpha=2.5).fit(X, y)
    Z = (X - X.mean(0)) / X.std(0)
    b = np.linalg.solve(Z.T @ Z + 2.5 * np.eye(3), Z.T @ (y - y.mean()))
    np.testing.assert_allclose(m.coef_, b, atol=1e-10)


@pytest.mark.parametrize("cls", [Ridge, ElasticNet, Lasso])
def test_huge_penalty_predicts_mean(cls):
    X, y = _data(n=50)
    pred = cls(alpha=1e12).fit(X, y).predict(X)
    np.testing.assert_allclose(pred, y.mean(), atol=1e-6)


def _enet_objective(Z, y, b0, b, alpha, l1):
    r = y - b0 - Z @ b
    return (r @ r) / (2 * len(y)) + alpha * l1 * np.abs(b).sum() + alpha * (1 - l1) / 2 * (b @ b)


@pytest.mark.parametrize("alpha,l1", [(0.1, 0.5), (0.05, 1.0), (0.3, 0.2)])
def test_elastic_net_is_a_minimum(alpha, l1):
    X, y = _data(n=90, p=6, seed=4)
    m = ElasticNet(alpha=alpha, l1_ratio=l1).fit(X, y)
    Z = (X - m.x_mean_) / m.x_scale_
    f0 = _enet_objective(Z, y, m.intercept_, m.coef_, alpha, l1)
    r = np.random.default_rng(0)
    for _ in range(200):
        b = m.coef_ + r.normal(scale=1e-3, size=6)
        assert _enet_objective(Z, y, m.intercept_, b, alpha, l1) >= f0 - 1e-14


def test_elastic_net_against_sklearn():
    linear_model = pytest.importorskip("sklearn.linear_model")
    X, y = _data(n=100, p=5, seed=6)
    Z = (X - X.mean(0)) / X.std(0)
    for alpha, l1 in [(0.1, 0.5), (0.02, 1.0)]:
        ref = linear_model.ElasticNet(alpha=alpha, l1_ratio=l1, tol=1e-12, max_iter=100000).fit(Z, y)
        ours = ElasticNet(alpha=alpha, l1_ratio=l1).fit(X, y)
        np.testing.assert_allclose(ours.coef_, ref.coef_, atol=1e-7)


def test_lasso_zeroes_noise_columns():
    r = np.random.default_rng(1)
    X = r.normal(size=(300, 6))
    y = 3 * X[:, 0] + 0.01 * r.normal(size=300)
    coef = Lasso(alpha=0.5).fit(X, y).coef_
    assert coef[0] > 0 and np.all(coef[1:] == 0)


# nearest neighbours

def test_knn_one_memorises():
    X, y = _data(n=50)
    np.testing.assert_array_equal(KNeighbors(k=1).fit(X, y).predict(X), y)


def test_knn_against_bruteforce():
    X, y = _data(n=70, p=3)
    T = np.random.default_rng(9).normal(size=(15, 3))
    m = KNeighbors(k=5).fit(X, y)
    Z = (X - X.mean(0)) / X.std(0)
    Tz = (T - X.mean(0)) / X.std(0)
    expect = [y[np.argsort(((Z - t) ** 2).sum(1))[:5]].mean() for t in Tz]
    np.testing.assert_allclose(m.predict(T), expect, rtol=0, atol=1e-12)


def test_knn_against_sklearn():
    neighbors = pytest.importorskip("sklearn.neighbors")
    X, y = _data(n=80, p=4, seed=3)
    Z = (X - X.mean(0)) / X.std(0)
    ref = neighbors.KNeighborsRegressor(5).fit(Z, y).predict(Z[:20])
    np.testing.assert_allclose(KNeighbors(k=5).fit(X, y).predict(X[:20]), ref, atol=1e-12)


# trees

def test_tree_memorises_distinct_rows():
    X, y = _data(n=60)
    np.testing.assert_allclose(DecisionTree().fit(X, y).predict(X), y, atol=1e-12)


def test_tree_stump_hand_split():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([1.0, 1.0, 5.0, 5.0])
    m = DecisionTree(max_depth=1).fit(X, y)
    np.testing.assert_array_equal(m.predict(np.array([[0.4], [2.6]])), [1.0, 5.0])
    assert m.trees_[0].threshold[0] == pytest.approx(1.5)


def test_tree_monotone_transform_invariance():
    X, y = _data(n=40, p=3, seed=8)
    Xt = X.copy()
    Xt[:, 0] = np.exp(Xt[:, 0])
    for depth in (1, 2, 3):
        a = DecisionTree(max_depth=depth).fit(X, y).predict(X)
        b = DecisionTree(max_depth=depth).fit(Xt, y).predict(Xt)
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("cls", [Bagging, RandomForest, ExtraTrees])
@given(seed=st.integers(0, 2**31 - 1))
def test_averaging_ensembles_stay_in_range(cls, seed):
    X, y = _data(n=40, seed=seed % 50)
    m = cls(n_estimators=5).fit(X, y, seed=seed)
    pred = m.predict(np.random.default_rng(seed).normal(scale=3, size=(30, X.shape[1])))
    assert np.all(pred >= y.min() - 1e-12) and np.all(pred <= y.max() + 1e-12)


@given(st.permutations(list(range(30))))
def test_row_order_invariance(perm):
    X, y = _data(n=30, seed=11)
    perm = np.array(perm)
    T = np.random.default_rng(1).normal(size=(10, X.shape[1]))
    for cls in (KNeighbors, DecisionTree):
        a = cls().fit(X, y).predict(T)
        b = cls().fit(X[perm], y[perm]).predict(T)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_boosting_reduces_training_error():
    X, y = _data(n=150)
    errs = [np.mean((GradientBoosting(n_estimators=k).fit(X, y).predict(X) - y) ** 2)
            for k in (5, 20, 80)]
    assert errs[0] > errs[1] > errs[2]


def test_second_order_without_penalty_equals_gradient_boosting():
    X, y = _data(n=100)
    a = GradientBoosting(n_estimators=15).fit(X, y).predict(X)
    b = RegularizedBoosting(n_estimators=15, reg_lambda=0.0, min_child_weight=0.0).fit(X, y).predict(X)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_regularisation_shrinks_leaves():
    X, y = _data(n=100)
    a = RegularizedBoosting(n_estimators=1, learning_rate=1.0, reg_lambda=0.0).fit(X, y)
    b = RegularizedBoosting(n_estimators=1, learning_rate=1.0, reg_lambda=50.0).fit(X, y)
    assert np.ptp(b.predict(X)) < np.ptp(a.predict(X))


def test_gamma_prunes_splits():
    X, y = _data(n=100)
    m = RegularizedBoosting(n_estimators=3, gamma=1e9).fit(X, y)
    assert all(t.n_leaves == 1 for t in m.trees_)


def test_feature_importances_sum_to_one():
    X, y = _data(n=100)
    for cls in (DecisionTree, RandomForest, GradientBoosting):
        kw = {"n_estimators": 10} if cls is not DecisionTree else {}
        imp = cls(**kw).fit(X, y).feature_importances()
        assert imp.sum() == pytest.approx(1.0, abs=1e-12) and np.all(imp >= 0)


# neural network

def test_mlp_learns_a_smooth_function():
    X, y = _data(n=400, p=3)
    m = MLP(epochs=60).fit(X, y, seed=0)
    mse = np.mean((m.predict(X) - y) ** 2)
    assert mse < 0.5 * np.var(y)
    assert len(m.loss_curve_) == 60 and m.loss_curve_[-1] < m.loss_curve_[0]


# artifacts

def test_save_load_learners(tmp_path):
    X, y = _data(n=50)
    fitted = {"ridge": Ridge().fit(X, y), "tree": DecisionTree(max_depth=3).fit(X, y)}
    save_learners(fitted, tmp_path / "l.pkl")
    back = load_learners(tmp_path / "l.pkl")
    for k in fitted:
        np.testing.assert_array_equal(back[k].predict(X), fitted[k].predict(X))
    (tmp_path / "bad.pkl").write_bytes(b"\x80\x04N.")
    with pytest.raises(ConfigError):
        load_learners(tmp_path / "bad.pkl")
