from __future__ import annotations

import numpy as np
import pytest

from datalens.data import concat_splits
from datalens.errors import ConfigError, ConvergenceError, DimensionError, SolverError
from datalens.model import ArchitectureSpec, features, per_sample_losses
from datalens.scoring import (
    InfluenceConfig,
    RepresenterConfig,
    classwise_influence_scores,
    compute_scores,
    influence_scores,
    loss_scores,
    random_scores,
    read_scores,
    refit_last_layer,
    representer_fit,
    representer_scores,
    write_scores,
)

from oracles import auc, dense_influence, logistic_model, random_model, rel_l2, softmax


def feature_dataset(F, y, Fv, yv, k=2):
    """Samples are the feature vectors themselves: a logistic model's Phi is the identity."""
    return concat_splits([("train", F[:, None, :], y), ("validation", Fv[:, None, :], yv)], k)


def logistic_problem(n=20, d=3, k=2, seed=0, nv=15):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((k, d))
    F, Fv = rng.standard_normal((n, d)), rng.standard_normal((nv, d))
    y = np.argmax(F @ w.T + 0.7 * rng.standard_normal((n, k)), axis=1)
    yv = np.argmax(Fv @ w.T + 0.7 * rng.standard_normal((nv, k)), axis=1)
    return F, y, Fv, yv, logistic_model(d, k, seed)


def _wb(model):
    W = model.params.segment("out.weight").reshape(model.spec.num_classes, -1)
    return W, model.params.segment("out.bias")


# influence ----------------------------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3])
def test_influence_matches_dense_oracle(k):
    F, y, Fv, yv, model = logistic_problem(20, 3, k)
    ds = feature_dataset(F, y, Fv, yv, k)
    cfg = InfluenceConfig(damping=0.01, cg_tol=1e-12)
    sv = influence_scores(model, ds, cfg)
    W, b = _wb(model)
    ref = dense_influence(F, y, W, b, k, Fv, yv, 0.01)
    assert rel_l2(sv.values, ref) <= 1e-5
    assert np.max(np.abs(sv.values - ref) / (np.abs(ref) + 1e-6 * np.abs(ref).max())) <= 1e-5
    assert sv.meta["n_reference"] == len(yv) and sv.meta["all_converged"]
    assert sv.direction_semantics == "low = harmful, high = helpful"


def test_influence_full_scope_on_logistic_equals_dense_oracle():
    F, y, Fv, yv, model = logistic_problem(25, 3, 2, seed=4)
    ds = feature_dataset(F, y, Fv, yv)
    full = influence_scores(model, ds, InfluenceConfig(damping=0.1, scope="full", cg_tol=1e-12))
    W, b = _wb(model)
    assert rel_l2(full.values, dense_influence(F, y, W, b, 2, Fv, yv, 0.1)) <= 1e-6


def test_influence_test_and_self_references():
    F, y, Fv, yv, model = logistic_problem(20, 3, 2, seed=2)
    ds = concat_splits([("train", F[:, None, :], y), ("test", Fv[:, None, :], yv)], 2)
    W, b = _wb(model)
    sv = influence_scores(model, ds, InfluenceConfig(reference="test", cg_tol=1e-12))
    assert rel_l2(sv.values, dense_influence(F, y, W, b, 2, Fv, yv, 0.01)) <= 1e-5
    own = influence_scores(model, ds, InfluenceConfig(reference="train_self", cg_tol=1e-12))
    ref = np.array([dense_influence(F, y, W, b, 2, F[i:i + 1], y[i:i + 1], 0.01)[i]
                    for i in range(len(y))])
    assert rel_l2(own.values, ref) <= 1e-5
    assert np.all(own.values <= 0)  # -g^T (H + dI)^-1 g is never positive
    with pytest.raises(DimensionError):
        influence_scores(model, ds, InfluenceConfig(reference="validation"))


def test_duplicated_samples_score_equally():
    F, y, Fv, yv, model = logistic_problem(20, 3, 2, seed=5)
    F = np.vstack([F, F[:3]])
    y = np.concatenate([y, y[:3]])
    ds = feature_dataset(F, y, Fv, yv)
    for sv in (influence_scores(model, ds), classwise_influence_scores(model, ds),
               loss_scores(model, ds), representer_scores(model, ds)):
        np.testing.assert_allclose(sv.values[20:], sv.values[:3], rtol=1e-9, atol=1e-15,
                                   err_msg=sv.method)


def test_sign_coherence_under_label_flip():
    trials = agree = 0
    for seed in range(40):
        F, y, Fv, yv, model = logistic_problem(20, 3, 2, seed=100 + seed)
        i = seed % 20
        base = influence_scores(model, feature_dataset(F, y, Fv, yv)).values[i]
        y2 = y.copy()
        y2[i] = 1 - y2[i]
        flipped = influence_scores(model, feature_dataset(F, y2, Fv, yv)).values[i]
        trials += 1
        agree += np.sign(base) == -np.sign(flipped)
    assert agree / trials >= 0.9


def test_singular_hessian_without_damping_errors():
    F, y, Fv, yv, model = logistic_problem(20, 3, 2)
    F = np.hstack([F, F[:, :1]])  # duplicated feature column: singular Hessian
    Fv = np.hstack([Fv, Fv[:, :1]])
    model = logistic_model(4, 2, 0)
    with pytest.raises(SolverError):
        influence_scores(model, feature_dataset(F, y, Fv, yv), InfluenceConfig(damping=0.0))


def test_influence_config_validation():
    with pytest.raises(ConfigError):
        InfluenceConfig(scope="full", damping=0.0)
    with pytest.raises(ConfigError):
        InfluenceConfig(solver="newton")
    with pytest.raises(ConfigError):
        InfluenceConfig(reference="holdout")


# classwise ------------------------------------------------------------------------------------

def test_classwise_single_class_equals_global():
    F, _, Fv, _, model = logistic_problem(20, 3, 2, seed=6)
    ds = feature_dataset(F, np.zeros(20, int), Fv, np.zeros(len(Fv), int))
    g = influence_scores(model, ds, InfluenceConfig(cg_tol=1e-12))
    c = classwise_influence_scores(model, ds, InfluenceConfig(cg_tol=1e-12))
    np.testing.assert_allclose(c.values, g.values, rtol=1e-10, atol=1e-14)
    assert c.classwise and not g.classwise


def test_classwise_matches_explicit_oracle_and_differs_from_global():
    rng = np.random.default_rng(7)
    # two symmetric blobs with a few points close to the boundary
    F = np.vstack([rng.normal(1.5, 0.6, (10, 2)), rng.normal(-1.5, 0.6, (10, 2)),
                   rng.normal(0, 0.2, (4, 2))])
    y = np.array([0] * 10 + [1] * 10 + [0, 1, 0, 1])
    Fv = np.vstack([rng.normal(1.5, 0.6, (8, 2)), rng.normal(-1.5, 0.6, (8, 2))])
    yv = np.array([0] * 8 + [1] * 8)
    model = logistic_model(2, 2, 7)
    ds = feature_dataset(F, y, Fv, yv)
    cfg = InfluenceConfig(cg_tol=1e-12)
    cw = classwise_influence_scores(model, ds, cfg).values
    W, b = _wb(model)
    ref = np.empty(len(y))
    for c in (0, 1):
        m = y == c
        ref[m] = dense_influence(F, y, W, b, 2, Fv[yv == c], yv[yv == c], 0.01)[m]
    assert rel_l2(cw, ref) <= 1e-5
    glob = influence_scores(model, ds, cfg).values
    near = slice(20, 24)
    assert not np.allclose(cw[near], glob[near], rtol=1e-3)


def test_classwise_missing_reference_class_warns():
    F, y, Fv, yv, model = logistic_problem(20, 3, 2, seed=8)
    yv = np.zeros_like(yv)
    with pytest.warns(RuntimeWarning, match="class 1"):
        sv = classwise_influence_scores(model, feature_dataset(F, y, Fv, yv))
    assert np.all(sv.values[y == 1] == 0) and sv.meta["missing_classes"] == [1]


# representer ----------------------------------------------------------------------------------

def test_representer_decomposition_identity(small_run):
    ds, model, _ = small_run
    fit = representer_fit(model, ds)
    assert fit.grad_norm <= 1e-6
    Xt, _ = ds.split_arrays("test")
    probes = features(model, Xt[:100])
    lhs, rhs = fit.logits(probes), fit.decompose(probes)
    per_probe = np.linalg.norm(lhs - rhs, axis=1) / np.linalg.norm(lhs, axis=1)
    assert per_probe.max() <= 1e-3


def test_representer_alpha_matches_stationarity_formula():
    F, y, _, _, _ = logistic_problem(30, 4, 3, seed=9)
    fit = refit_last_layer(F, y, 3, RepresenterConfig(l2=0.05, tol=1e-10))
    P = softmax(F @ fit.weights.T)
    np.testing.assert_allclose(fit.alpha, -(P - np.eye(3)[y]) / (2 * 0.05 * 30), rtol=1e-12)
    np.testing.assert_allclose(fit.weights, fit.alpha.T @ F, rtol=1e-8, atol=1e-10)


def test_representer_large_l2_bound():
    F, y, Fv, yv, model = logistic_problem(40, 3, 2, seed=10)
    lam, n, k = 1e3, 40, 2
    fit = refit_last_layer(F, y, k, RepresenterConfig(l2=lam))
    assert np.abs(fit.weights).max() <= 1e-3
    assert np.abs(fit.alpha).max() <= (1 - 1 / k) / (2 * lam * n) * (1 + 1e-3)


def test_representer_scores_are_own_label_alpha():
    F, y, Fv, yv, model = logistic_problem(30, 3, 3, seed=11)
    ds = feature_dataset(F, y, Fv, yv, 3)
    fit = representer_fit(model, ds)
    sv = representer_scores(model, ds)
    np.testing.assert_array_equal(sv.values, fit.alpha[np.arange(30), y])
    assert np.all(sv.values >= 0)  # own-label residual is never positive
    assert sv.direction_semantics == "low = inhibitory, high = excitatory"


def test_representer_refit_failure_carries_gradient_norm():
    F, y, _, _, _ = logistic_problem(30, 3, 2)
    with pytest.raises(ConvergenceError) as e:
        refit_last_layer(F, y, 2, RepresenterConfig(l2=1e-4, tol=1e-14, max_steps=1))
    assert e.value.residual is not None and e.value.residual > 0
    with pytest.raises(ConfigError):
        RepresenterConfig(l2=0.0)


# loss / random ----------------------------------------------------------------------------------

def test_loss_scores_delegate_to_per_sample_losses(small_run):
    ds, model, _ = small_run
    np.testing.assert_array_equal(loss_scores(model, ds).values,
                                  per_sample_losses(model, ds).values)


def test_loss_separates_flips_on_desk_run(desk0):
    ds, model, _ = desk0
    assert auc(loss_scores(model, ds).values, ds.train_flip_mask()) >= 0.95


def test_untrained_model_loss_is_uninformative(small_run):
    ds, _, _ = small_run
    untrained = random_model(ArchitectureSpec.default(3, 50, 2), 0)
    assert abs(auc(loss_scores(untrained, ds).values, ds.train_flip_mask()) - 0.5) <= 0.1


def test_random_scores():
    a, b = random_scores(50, 3), random_scores(50, 3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, random_scores(50, 4).values)
    one = random_scores(1, 0)
    assert len(one) == 1 and 0.0 <= one.values[0] < 1.0


def test_random_detection_concentrates_near_ratio():
    n, flips = 4500, 450
    mask = np.zeros(n, bool)
    mask[np.random.default_rng(0).choice(n, flips, replace=False)] = True
    for r in (0.1, 0.25):
        m = int(np.ceil(r * n))
        # hypergeometric spread of the detected fraction
        sd = np.sqrt(r * (1 - r) * (n - m) / (n - 1) / flips)
        rates = []
        for seed in range(10):
            order = np.argsort(-random_scores(n, seed).values, kind="stable")
            rates.append(mask[order[:m]].sum() / flips)
        assert np.all(np.abs(np.array(rates) - r) <= 4 * sd)
        assert abs(np.mean(rates) - r) <= 0.03


# persistence / dispatch -------------------------------------------------------------------------

def test_score_file_round_trip(tmp_path):
    sv = random_scores(17, 2)
    path = write_scores(sv, tmp_path / "random.csv")
    back = read_scores(path)
    assert back.values.tobytes() == sv.values.tobytes()
    assert (back.method, back.direction_semantics, back.classwise) == ("random", sv.direction_semantics, False)
    assert path.read_text().splitlines()[0] == "sample_index,score,method,classwise,direction_semantics"


def test_score_vector_rejects_non_finite():
    from datalens.scoring import ScoreVector

    with pytest.raises(DimensionError):
        ScoreVector("x", np.array([0.0, np.inf]), "")


def test_compute_scores_dispatch(small_run):
    ds, model, _ = small_run
    assert compute_scores("random", model, ds, seed=1).method == "random"
    with pytest.raises(KeyError):
        compute_scores("tracin", model, ds)


def test_lissa_scores_close_to_cg():
    F, y, Fv, yv, model = logistic_problem(200, 10, 2, seed=12)
    ds = feature_dataset(F, y, Fv, yv)
    cg = influence_scores(model, ds, InfluenceConfig(cg_tol=1e-12)).values
    li = influence_scores(model, ds, InfluenceConfig(solver="lissa", lissa_depth=3000,
                                                     lissa_repeats=5, seed=1)).values
    assert rel_l2(li, cg) <= 0.05
