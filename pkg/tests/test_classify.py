import numpy as np
import pytest

from symspace import linalg
from symspace.classify import (
    ClassifierModel,
    LabeledDataset,
    brier_score,
    class_log_likelihoods,
    evaluate,
    fit,
    predict_posteriors,
    read_dataset_csv,
    report_from_posteriors,
    split,
    write_dataset_csv,
)
from symspace.distributions import LogGaussian, make_rng
from symspace.exceptions import DataFormatError, SymspaceError
from symspace.manifolds import Euclidean, PositiveDefinite

PD2 = PositiveDefinite(2)


def two_class_lg(shift, per_class, seed):
    rng = make_rng(seed)
    a = LogGaussian(PD2, np.zeros(3), np.eye(3)).sample(per_class, rng)
    b = LogGaussian(PD2, np.array([shift, 0.0, 0.0]), np.eye(3)).sample(per_class, rng)
    return LabeledDataset(PD2, np.concatenate([a, b]), np.repeat([1, 2], per_class))


def separated_dataset(per_class, seed):
    rng = make_rng(seed)
    centres = [np.zeros(3), linalg.sym_vec(np.diag([10.0, 10.0]))]
    pts = [LogGaussian(PD2, c, 1e-4 * np.eye(3)).sample(per_class, rng) for c in centres]
    return LabeledDataset(PD2, np.concatenate(pts), np.repeat([1, 2], per_class))


class TestDataset:
    def test_validation(self):
        with pytest.raises(SymspaceError):
            LabeledDataset(PD2, np.zeros((0, 2, 2)), np.zeros(0))
        with pytest.raises(SymspaceError):
            LabeledDataset(PD2, np.stack([np.eye(2)] * 2), [1])
        with pytest.raises(SymspaceError):
            LabeledDataset(PD2, np.stack([np.eye(2)] * 2), [0, 1])
        with pytest.raises(SymspaceError):
            LabeledDataset(PD2, np.stack([np.eye(2), -np.eye(2)]), [1, 1])

    def test_csv_roundtrip(self):
        data = two_class_lg(2.0, 10, 1)
        back = read_dataset_csv(write_dataset_csv(data.points, data.labels))
        assert np.array_equal(back.points, data.points)
        assert np.array_equal(back.labels, data.labels)

    def test_csv_errors(self):
        with pytest.raises(DataFormatError):
            read_dataset_csv("")
        with pytest.raises(DataFormatError):
            read_dataset_csv("1,x,1,0,0,1\n")
        with pytest.raises(SymspaceError):
            read_dataset_csv("1,2,1,0,0\n")


class TestFit:
    @pytest.mark.parametrize("kind", ["GNB", "GKC", "LGNB", "LGKC"])
    def test_one_class(self, kind):
        data = LabeledDataset(PD2, LogGaussian(PD2, np.zeros(3), np.eye(3)).sample(20, make_rng(2)), np.ones(20))
        model = fit(kind, data, h=0.5)
        np.testing.assert_array_equal(predict_posteriors(model, data.points), 1.0)

    @pytest.mark.parametrize("kind", ["GNB", "GKC", "LGNB", "LGKC"])
    def test_separated_oracle(self, kind):
        train, test = split(separated_dataset(50, 3), 0.5, seed=0)
        assert evaluate(fit(kind, train, seed=0), test).accuracy == 1.0

    def test_lgnb_reduces_to_gnb_on_euclidean(self):
        rng = make_rng(4)
        e = Euclidean(3)
        data = LabeledDataset(e, np.concatenate([rng.normal(size=(30, 3)), rng.normal(size=(30, 3)) + 1]),
                              np.repeat([1, 2], 30))
        a, b = fit("LGNB", data), fit("GNB", data)
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(predict_posteriors(a, data.points), predict_posteriors(b, data.points))

    def test_mle_variance(self):
        data = two_class_lg(1.0, 25, 5)
        model = fit("LGNB", data)
        z = PD2.log(data.points[data.labels == 2])
        np.testing.assert_allclose(model.variances[1], z.var(axis=0), rtol=1e-14)
        np.testing.assert_allclose(model.priors, [0.5, 0.5])

    def test_constant_feature_floor(self):
        pts = np.stack([np.diag([1.0 + 0.1 * i, 1.0]) for i in range(6)])
        model = fit("GNB", LabeledDataset(PD2, pts, [1, 1, 1, 2, 2, 2]))
        assert np.all(model.variances > 0)
        assert np.all(np.isfinite(predict_posteriors(model, pts)))

    def test_nb_needs_two_points(self):
        data = LabeledDataset(PD2, np.stack([np.eye(2), 2 * np.eye(2), 3 * np.eye(2)]), [1, 1, 2])
        with pytest.raises(SymspaceError):
            fit("GNB", data)

    def test_missing_class(self):
        with pytest.raises(SymspaceError):
            fit("GNB", LabeledDataset(PD2, np.stack([np.eye(2)] * 4), [1, 1, 3, 3]))

    def test_unknown_kind(self):
        with pytest.raises(SymspaceError):
            fit("SVM", two_class_lg(1.0, 5, 0))

    @pytest.mark.parametrize("kind", ["GNB", "LGKC"])
    def test_serialization(self, kind):
        data = two_class_lg(2.0, 20, 6)
        model = fit(kind, data, h=0.7)
        back = ClassifierModel.from_dict(model.to_dict())
        assert np.array_equal(predict_posteriors(back, data.points), predict_posteriors(model, data.points))

    def test_deterministic(self):
        data = two_class_lg(2.0, 40, 7)
        a, b = fit("LGKC", data, seed=3), fit("LGKC", data, seed=3)
        assert a.bandwidth == b.bandwidth


class TestPosteriors:
    @pytest.mark.parametrize("kind", ["GNB", "GKC", "LGNB", "LGKC"])
    def test_rows_sum_to_one(self, kind):
        data = two_class_lg(2.0, 30, 8)
        query = LogGaussian(PD2, np.zeros(3), 4 * np.eye(3)).sample(50, make_rng(9))
        post = predict_posteriors(fit(kind, data, h=0.5), query)
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["LGNB", "LGKC"])
    def test_volume_factor_cancels(self, kind):
        data = two_class_lg(2.0, 30, 10)
        model = fit(kind, data, h=0.5)
        query = LogGaussian(PD2, np.zeros(3), 4 * np.eye(3)).sample(50, make_rng(11))
        a = predict_posteriors(model, query)
        b = predict_posteriors(model, query, include_volume=True)
        assert np.max(np.abs(a - b)) <= 1e-12
        la = class_log_likelihoods(model, query)
        lb = class_log_likelihoods(model, query, include_volume=True)
        np.testing.assert_allclose(lb - la, PD2.log_volume_factor(query)[:, None] * np.ones((1, 2)), rtol=1e-12)

    def test_equal_likelihoods_give_uniform(self):
        data = LabeledDataset(PD2, np.stack([np.eye(2), 2 * np.eye(2)] * 2), [1, 1, 2, 2])
        np.testing.assert_allclose(predict_posteriors(fit("GNB", data), np.eye(2)), [0.5, 0.5], atol=1e-15)

    def test_lg_beats_euclidean_on_lg_data(self):
        gnb, lgnb = [], []
        for seed in range(20):
            train, test = split(two_class_lg(3.0, 400, seed), 0.5, seed)
            gnb.append(evaluate(fit("GNB", train), test).accuracy)
            lgnb.append(evaluate(fit("LGNB", train), test).accuracy)
        assert np.mean(lgnb) >= np.mean(gnb)


class TestEvaluation:
    def test_perfect(self):
        report = report_from_posteriors(np.eye(3), np.array([1, 2, 3]))
        assert report.brier == 0.0 and report.accuracy == 1.0
        np.testing.assert_array_equal(report.confusion, np.eye(3))

    @pytest.mark.parametrize("n_classes", [2, 3, 5])
    def test_uniform(self, n_classes):
        labels = np.arange(1, n_classes + 1)
        post = np.full((n_classes, n_classes), 1.0 / n_classes)
        assert brier_score(post, labels) == pytest.approx(1 - 1 / n_classes, abs=1e-15)

    def test_uniform_two_classes_exact(self):
        assert brier_score(np.full((4, 2), 0.5), np.array([1, 2, 2, 1])) == 0.5

    def test_ties_pick_smallest_index(self):
        report = report_from_posteriors(np.full((2, 2), 0.5), np.array([1, 2]))
        np.testing.assert_array_equal(report.confusion, [[1, 0], [1, 0]])
        assert report.accuracy == 0.5

    def test_range(self):
        rng = make_rng(12)
        post = rng.dirichlet(np.ones(4), size=100)
        assert 0.0 <= brier_score(post, rng.integers(1, 5, 100)) <= 2.0

    def test_frequencies_minimize_brier(self):
        rng = make_rng(13)
        labels = rng.choice([1, 2, 3], size=500, p=[0.5, 0.3, 0.2])
        freq = np.bincount(labels - 1, minlength=3) / labels.size
        best = brier_score(np.tile(freq, (500, 1)), labels)
        for _ in range(50):
            other = rng.dirichlet(np.ones(3))
            assert brier_score(np.tile(other, (500, 1)), labels) >= best

    def test_label_out_of_range(self):
        with pytest.raises(SymspaceError):
            brier_score(np.full((1, 2), 0.5), np.array([3]))
        model = fit("GNB", two_class_lg(1.0, 5, 14))
        with pytest.raises(SymspaceError):
            evaluate(model, LabeledDataset(PD2, np.eye(2)[None], [3]))


class TestSplit:
    def test_sizes(self):
        data = two_class_lg(1.0, 160, 15)
        train, test = split(data, 0.5, seed=0)
        assert np.array_equal(np.bincount(train.labels), [0, 80, 80])
        assert np.array_equal(np.bincount(test.labels), [0, 80, 80])

    def test_union_and_determinism(self):
        data = two_class_lg(1.0, 21, 16)
        train, test = split(data, 0.3, seed=4)
        again, _ = split(data, 0.3, seed=4)
        assert np.array_equal(train.points, again.points)
        merged = np.concatenate([train.points, test.points]).reshape(len(data), -1)
        assert sorted(map(tuple, merged)) == sorted(map(tuple, data.points.reshape(len(data), -1)))

    def test_empty_class(self):
        data = LabeledDataset(PD2, np.stack([np.eye(2)] * 3), [1, 1, 2])
        with pytest.raises(SymspaceError):
            split(data, 0.5, seed=0)
        with pytest.raises(SymspaceError):
            split(data, 1.0, seed=0)
