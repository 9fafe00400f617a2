import numpy as np
import pytest

from incidentml.chains import (
    Candidate,
    ChainModel,
    SearchSpace,
    chain_from_json,
    chain_to_json,
    cv_select,
    fit_br,
    fit_cc,
    fit_mct,
    fit_mor,
    fit_mrt,
    fit_rc,
    predict_labels,
    predict_regression,
    predict_scores,
    select_best,
)
from incidentml.errors import InvalidInputError
from incidentml.trees import ForestModel, Hyperparams, TreeNode


def quick_space(**kw):
    defaults = dict(
        theta_grid=(Hyperparams(tree_count=3, max_depth=3, min_samples_leaf=1,
                                feature_fraction=1.0, criterion="gini"),),
        threshold_grid=(0.5,),
        n_folds=2,
    )
    defaults.update(kw)
    return SearchSpace(**defaults)


def const_forest(score, n_features):
    leaf = TreeNode(n_samples=4, impurity=0.0, value=np.array([float(score)]))
    return ForestModel([leaf], Hyperparams(tree_count=1), "classification", n_features, 1, 0)


def manual_br(scores, thresholds):
    d = 2
    return ChainModel(
        kind="br", task="classification", base_family="forest", n_features=d,
        label_names=tuple(f"l{j}" for j in range(len(scores))),
        params=Hyperparams(tree_count=1),
        order=None, thresholds=np.array(thresholds, dtype=float),
        learners=[const_forest(s, d) for s in scores],
        cv_table=[], selection_metric="weighted_f1", seed=0,
    )


def test_br_threshold_indicator():
    model = manual_br([0.7], [0.5])
    assert predict_labels(model, np.zeros((3, 2))).tolist() == [[1], [1], [1]]


def test_br_threshold_is_inclusive():
    model = manual_br([0.5], [0.5])
    assert predict_labels(model, np.zeros((2, 2))).tolist() == [[1], [1]]


def test_br_zero_scores_all_negative():
    model = manual_br([0.0, 0.0], [0.1, 0.1])
    assert predict_labels(model, np.zeros((2, 2))).tolist() == [[0, 0], [0, 0]]


def test_threshold_extremes_force_labels():
    model = manual_br([0.4, 0.4], [0.0, 1.01])
    out = predict_labels(model, np.zeros((3, 2)))
    assert out[:, 0].tolist() == [1, 1, 1]
    assert out[:, 1].tolist() == [0, 0, 0]


def clean_dataset(seed=0, m=60, q=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, 3))
    Y = np.column_stack([(X[:, j % 3] > 0) for j in range(q)]).astype(int)
    return X, Y


def test_singleton_grid_selected_and_refit():
    X, Y = clean_dataset()
    model = fit_br(X, Y, quick_space(), seed=1)
    assert len(model.cv_table) == 1
    assert model.thresholds.tolist() == [0.5, 0.5]
    assert len(model.learners) == 2
    preds = predict_labels(model, X)
    assert preds.shape == (60, 2)


def test_constant_zero_label_predicts_zero():
    X, Y = clean_dataset()
    Y = Y.copy()
    Y[:, 1] = 0
    model = fit_br(X, Y, quick_space(threshold_grid=(0.25,)), seed=1)
    assert predict_labels(model, X)[:, 1].sum() == 0


def test_cc_equals_br_bit_exact_single_label():
    X, Y = clean_dataset(q=1)
    space = quick_space(threshold_grid=(0.3, 0.5, 0.7))
    br = fit_br(X, Y, space, seed=5)
    cc = fit_cc(X, Y, space, seed=5)
    assert np.array_equal(predict_labels(br, X), predict_labels(cc, X))
    assert np.array_equal(predict_scores(br, X), predict_scores(cc, X))
    assert br.thresholds.tolist() == cc.thresholds.tolist()
    assert [r.mean_loss for r in br.cv_table] == [r.mean_loss for r in cc.cv_table]


def test_cc_enumerates_all_orders():
    X, Y = clean_dataset(m=30, q=3)
    model = fit_cc(X, Y, quick_space(), seed=2)
    orders = {r.order for r in model.cv_table}
    assert len(orders) == 6  # 3! permutations


def test_cc_order_capping_is_seeded():
    X, Y = clean_dataset(m=30, q=3)
    space = quick_space(max_orders=2)
    a = fit_cc(X, Y, space, seed=3)
    b = fit_cc(X, Y, space, seed=3)
    assert {r.order for r in a.cv_table} == {r.order for r in b.cv_table}
    assert len({r.order for r in a.cv_table}) == 2


def test_cc_hand_built_chain_trace():
    # learner 1: stump on x0; learner 2: stump on the augmented bit (col 2).
    l1 = ForestModel(
        [TreeNode(n_samples=10, impurity=0.0, value=np.array([0.5]), feature=0,
                  threshold=0.0,
                  left=TreeNode(n_samples=5, impurity=0.0, value=np.array([0.1])),
                  right=TreeNode(n_samples=5, impurity=0.0, value=np.array([0.9])))],
        Hyperparams(tree_count=1), "classification", 2, 1, 0,
    )
    l2 = ForestModel(
        [TreeNode(n_samples=10, impurity=0.0, value=np.array([0.5]), feature=2,
                  threshold=0.5,
                  left=TreeNode(n_samples=5, impurity=0.0, value=np.array([0.05])),
                  right=TreeNode(n_samples=5, impurity=0.0, value=np.array([0.95])))],
        Hyperparams(tree_count=1), "classification", 3, 1, 0,
    )
    model = ChainModel(
        kind="cc", task="classification", base_family="forest", n_features=2,
        label_names=("a", "b"), params=Hyperparams(tree_count=1),
        order=(0, 1), thresholds=np.array([0.5, 0.5]),
        learners=[l1, l2], cv_table=[], selection_metric="weighted_f1", seed=0,
    )
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    # row 0: x0 > 0 -> score .9 -> bit 1 -> l2 sees bit=1 -> score .95 -> 1
    # row 1: x0 <= 0 -> score .1 -> bit 0 -> l2 sees bit=0 -> score .05 -> 0
    assert predict_labels(model, X).tolist() == [[1, 1], [0, 0]]


def test_cc_learner_ignoring_bit_matches_br():
    # Chain learner 2 splits only on x1 and never the augmentation column, so
    # its chained output equals applying the same stump independently.
    stump_x1 = lambda width: ForestModel(
        [TreeNode(n_samples=10, impurity=0.0, value=np.array([0.5]), feature=1,
                  threshold=0.0,
                  left=TreeNode(n_samples=5, impurity=0.0, value=np.array([0.0])),
                  right=TreeNode(n_samples=5, impurity=0.0, value=np.array([1.0])))],
        Hyperparams(tree_count=1), "classification", width, 1, 0,
    )
    l1 = const_forest(0.9, 2)
    cc = ChainModel(
        kind="cc", task="classification", base_family="forest", n_features=2,
        label_names=("a", "b"), params=Hyperparams(tree_count=1),
        order=(0, 1), thresholds=np.array([0.5, 0.5]),
        learners=[l1, stump_x1(3)], cv_table=[], selection_metric="weighted_f1", seed=0,
    )
    br = ChainModel(
        kind="br", task="classification", base_family="forest", n_features=2,
        label_names=("a", "b"), params=Hyperparams(tree_count=1),
        order=None, thresholds=np.array([0.5, 0.5]),
        learners=[const_forest(0.9, 2), stump_x1(2)], cv_table=[],
        selection_metric="weighted_f1", seed=0,
    )
    X = np.random.default_rng(0).normal(size=(10, 2))
    assert np.array_equal(predict_labels(cc, X)[:, 1], predict_labels(br, X)[:, 1])


def test_cc_row_permutation_equivariance():
    X, Y = clean_dataset(m=40, q=2)
    model = fit_cc(X, Y, quick_space(), seed=4)
    perm = np.random.default_rng(1).permutation(40)
    assert np.array_equal(predict_labels(model, X)[perm], predict_labels(model, X[perm]))


def test_predict_is_pure():
    X, Y = clean_dataset(m=40, q=2)
    model = fit_cc(X, Y, quick_space(), seed=4)
    assert np.array_equal(predict_labels(model, X), predict_labels(model, X))


def test_mct_duplicated_labels_identical_columns():
    X, Y1 = clean_dataset(m=50, q=1)
    Y = np.column_stack([Y1[:, 0]] * 3)
    model = fit_mct(X, Y, quick_space(threshold_grid=(0.3, 0.5)), seed=6)
    out = predict_labels(model, X)
    assert np.array_equal(out[:, 0], out[:, 1])
    assert np.array_equal(out[:, 0], out[:, 2])
    assert model.thresholds[0] == model.thresholds[1] == model.thresholds[2]


def test_product_mode_with_per_label_grids():
    X, Y = clean_dataset(m=40, q=2)
    space = quick_space(
        threshold_grid=(0.5,),
        per_label_threshold_grids=((0.3, 0.5), (0.4, 0.5, 0.6)),
        threshold_mode="product",
    )
    model = fit_br(X, Y, space, seed=2)
    assert len(model.cv_table) == 6  # 2 x 3 product
    assert model.thresholds[0] in (0.3, 0.5)
    assert model.thresholds[1] in (0.4, 0.5, 0.6)


def test_mct_tracks_br_on_independent_labels():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(600, 4))
    Y = np.column_stack([(X[:, 0] > 0), (X[:, 1] > 0)]).astype(int)
    space = quick_space(
        theta_grid=(Hyperparams(tree_count=10, max_depth=5, min_samples_leaf=5,
                                criterion="gini"),),
    )
    tr, te = np.arange(480), np.arange(480, 600)
    br = fit_br(X[tr], Y[tr], space, seed=3)
    mct = fit_mct(X[tr], Y[tr], space, seed=3)
    from incidentml.metrics import classification_report

    wf_br = classification_report(Y[te], predict_labels(br, X[te])).weighted_f1
    wf_mct = classification_report(Y[te], predict_labels(mct, X[te])).weighted_f1
    assert abs(wf_br - wf_mct) <= 0.03


def test_selected_config_attains_cv_minimum():
    X, Y = clean_dataset(m=50, q=2)
    space = quick_space(threshold_grid=(0.2, 0.5, 0.8))
    model = fit_br(X, Y, space, seed=7)
    eligible = [r for r in model.cv_table if not r.disqualified]
    best_mean = min(r.mean_loss for r in eligible)
    assert any(
        r.thresholds == tuple(model.thresholds) and r.mean_loss == best_mean
        for r in eligible
    )


def test_cv_select_argmin_and_mean():
    cands = [Candidate(0, None, 0, (0.5,)), Candidate(0, None, 1, (0.5,))]
    losses = {0: [0.3, 0.3], 1: [0.1, 0.2, 0.3]}
    best, table = cv_select(cands, lambda c: losses[c.theta_index])
    assert best.theta_index == 1
    assert best.mean_loss == pytest.approx(0.2)


def test_cv_select_tie_breaks_by_documented_order():
    cands = [
        Candidate(1, (1, 0), 0, (0.5, 0.5)),
        Candidate(0, (0, 1), 1, (0.5, 0.5)),
        Candidate(0, (0, 1), 0, (0.7, 0.5)),
        Candidate(0, (0, 1), 0, (0.5, 0.5)),
    ]
    best, _ = cv_select(cands, lambda c: [0.25])
    assert best.order_index == 0
    assert best.theta_index == 0
    assert best.thresholds == (0.5, 0.5)


def test_cv_select_disqualifies_nan():
    cands = [Candidate(0, None, 0, (0.5,)), Candidate(0, None, 1, (0.5,))]
    with pytest.warns(UserWarning):
        best, table = cv_select(
            cands, lambda c: [float("nan"), 0.0] if c.theta_index == 0 else [0.9, 0.9]
        )
    assert best.theta_index == 1
    assert table[0].disqualified


def test_rc_equals_mor_single_output():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 3))
    Z = np.maximum(0, np.round(X[:, [0]] * 2 + 1)).astype(int)
    space = quick_space()
    mor = fit_mor(X, Z, space, seed=9)
    rc = fit_rc(X, Z, space, seed=9)
    assert np.array_equal(predict_regression(mor, X), predict_regression(rc, X))


def test_constant_targets_zero_amse():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 2))
    Z = np.full((30, 2), 3)
    model = fit_mor(X, Z, quick_space(), seed=10)
    pred = predict_regression(model, X)
    assert pred == pytest.approx(np.full((30, 2), 3.0), abs=1e-12)


def test_regression_clamp():
    leaf = TreeNode(n_samples=4, impurity=0.0, value=np.array([-0.2]))
    learner = ForestModel([leaf], Hyperparams(tree_count=1), "regression", 2, 1, 0)
    model = ChainModel(
        kind="mor", task="regression", base_family="forest", n_features=2,
        label_names=("z0",), params=Hyperparams(tree_count=1), order=None,
        thresholds=None, learners=[learner], cv_table=[],
        selection_metric="armse", seed=0, clamp_nonnegative=True,
    )
    X = np.zeros((2, 2))
    assert predict_regression(model, X).tolist() == [[0.0], [0.0]]
    assert predict_regression(model, X, clamp=False).tolist() == [[-0.2], [-0.2]]


def test_mrt_duplicated_outputs_identical_columns():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(40, 3))
    z = np.maximum(0, np.round(2 * X[:, 0] + 3)).astype(int)
    Z = np.column_stack([z, z])
    model = fit_mrt(X, Z, quick_space(), seed=11)
    pred = predict_regression(model, X)
    assert np.array_equal(pred[:, 0], pred[:, 1])


def test_predict_rejects_width_mismatch():
    X, Y = clean_dataset()
    model = fit_br(X, Y, quick_space(), seed=12)
    with pytest.raises(InvalidInputError):
        predict_labels(model, X[:, :2])


def test_disqualified_record_serializes_to_strict_json():
    import json

    from incidentml.chains import CvRecord, chain_from_json, chain_to_json

    model = manual_br([0.5], [0.5])
    model.cv_table = [
        CvRecord(0, None, 0, (0.5,), (float("nan"), 0.1), float("nan"), True)
    ]
    text = json.dumps(chain_to_json(model), allow_nan=False)  # raises on NaN
    back = chain_from_json(json.loads(text))
    assert back.cv_table[0].disqualified
    assert np.isnan(back.cv_table[0].mean_loss)


def test_chain_json_roundtrip():
    X, Y = clean_dataset(m=40, q=2)
    model = fit_cc(X, Y, quick_space(), seed=13)
    restored = chain_from_json(chain_to_json(model))
    assert np.array_equal(predict_labels(model, X), predict_labels(restored, X))
    assert restored.order == model.order


def test_empty_theta_grid_rejected():
    with pytest.raises(InvalidInputError):
        SearchSpace(theta_grid=())


def test_select_best_requires_eligible_record():
    with pytest.raises(InvalidInputError):
        select_best([])
