import math

import numpy as np
import pytest

from symspace import verify
from symspace.distributions import make_rng
from symspace.exceptions import SymspaceError
from symspace.manifolds import PositiveDefinite, manifold_from_string
from symspace.plotting import plot_simulation
from symspace.simulation import (
    INVWISHART_SCALE,
    METHODS,
    default_sweep,
    generate,
    replicate_scores,
    simulate,
)


class TestGenerators:
    def test_sweeps(self):
        assert default_sweep("wishart") == [float(v) for v in range(2, 11)]
        np.testing.assert_allclose(default_sweep("lg"), np.exp(np.arange(-3, 4)))
        with pytest.raises(SymspaceError):
            default_sweep("gamma")

    @pytest.mark.parametrize("family", ["wishart", "invwishart", "lg"])
    def test_points_are_pd(self, family):
        pts = generate(family, 3.0, 50, make_rng(1))
        assert pts.shape == (50, 2, 2)
        PositiveDefinite(2).validate(pts)

    def test_invwishart_mean(self):
        pts = generate("invwishart", 8.0, 50_000, make_rng(2))
        np.testing.assert_allclose(pts.mean(axis=0), INVWISHART_SCALE / (8 - 3), rtol=0.05)

    def test_lg_variance(self):
        pts = generate("lg", math.e, 50_000, make_rng(3))
        np.testing.assert_allclose(np.var(PositiveDefinite(2).log(pts), axis=0), math.e, rtol=0.03)


class TestReplicates:
    def test_methods_and_determinism(self):
        a = replicate_scores("lg", 1.0, 60, seed=4)
        assert set(a) == set(METHODS)
        assert a == replicate_scores("lg", 1.0, 60, seed=4)
        assert all(np.isfinite(v) for v in a.values())

    def test_measures_differ_by_a_shared_shift(self):
        leb = replicate_scores("wishart", 4.0, 60, seed=5, measure="lebesgue")
        riem = replicate_scores("wishart", 4.0, 60, seed=5, measure="riemannian")
        shifts = [leb[m] - riem[m] for m in METHODS]
        np.testing.assert_allclose(shifts, shifts[0], rtol=1e-9)

    def test_validation(self):
        with pytest.raises(SymspaceError):
            replicate_scores("lg", 1.0, 10, seed=0)
        with pytest.raises(SymspaceError):
            replicate_scores("lg", 1.0, 60, seed=0, measure="counting")


class TestSimulate:
    def test_report_shape_and_csv(self):
        report = simulate("lg", [0.5, 2.0], n=40, replicates=2, seed=6)
        assert report.scores.shape == (2, 2, 4)
        lines = report.to_csv().splitlines()
        assert lines[0] == "family,value,method,mean,std,replicates,n"
        assert len(lines) == 1 + 2 * 4
        np.testing.assert_allclose(report.std, report.scores.std(axis=1, ddof=1))
        assert report.to_dict()["config"]["measure"] == "lebesgue"

    def test_replicate_seeds(self):
        report = simulate("wishart", [3.0], n=40, replicates=2, seed=10)
        single = replicate_scores("wishart", 3.0, 40, seed=11)
        np.testing.assert_array_equal(report.scores[0, 1], [single[m] for m in METHODS])

    def test_thread_independence(self, monkeypatch):
        monkeypatch.setenv("SYMSPACE_THREADS", "1")
        a = simulate("invwishart", [4.0, 6.0], n=40, replicates=2, seed=7).to_csv()
        monkeypatch.setenv("SYMSPACE_THREADS", "4")
        b = simulate("invwishart", [4.0, 6.0], n=40, replicates=2, seed=7).to_csv()
        assert a == b

    def test_single_replicate_std_is_zero(self):
        assert np.all(simulate("lg", [1.0], n=40, replicates=1).std == 0.0)

    def test_invalid(self):
        with pytest.raises(SymspaceError):
            simulate("gamma", [1.0], n=40, replicates=1)
        with pytest.raises(SymspaceError):
            simulate("lg", [1.0], n=40, replicates=0)

    def test_plot(self, tmp_path):
        report = simulate("lg", [0.5, 1.0], n=40, replicates=2)
        path = tmp_path / "fig.png"
        plot_simulation(report, str(path))
        first = path.read_bytes()
        assert first[:4] == b"\x89PNG"
        plot_simulation(report, str(path))
        assert path.read_bytes() == first


class TestVerify:
    @pytest.mark.parametrize("spec", ["pd:2", "pd:3", "poincare:2", "poincare:3", "siegel:1", "siegel:2",
                                      "euclidean:2"])
    def test_all_pass(self, spec):
        checks = verify.run(manifold_from_string(spec), cases=20, seed=1)
        assert all(c.passed for c in checks), [c.to_dict() for c in checks]

    def test_extra_checks(self):
        names = [c.name for c in verify.run(manifold_from_string("poincare:2"), cases=5)]
        assert "normalization" in names
        names = [c.name for c in verify.run(manifold_from_string("siegel:1"), cases=5)]
        assert "siegel_poincare" in names

    def test_check_fails_on_nan(self):
        assert not verify.Check("x", float("nan"), 1.0).passed
        assert verify.Check("x", 0.5, 1.0).to_dict()["passed"] is True
