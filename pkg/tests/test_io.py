import json

import numpy as np
import pytest

from symspace import io as symio
from symspace.distributions import LogGaussian, make_rng
from symspace.exceptions import DataFormatError
from symspace.manifolds import manifold_from_string


class TestPoints:
    @pytest.mark.parametrize("spec", ["pd:2", "pd:3", "poincare:3", "siegel:1", "siegel:2", "euclidean:2"])
    def test_roundtrip(self, spec):
        m = manifold_from_string(spec)
        pts = LogGaussian(m, np.zeros(m.dim), 0.3 * np.eye(m.dim)).sample(7, make_rng(1))
        labels = np.arange(1, 8)
        back, back_labels = symio.read_points_csv(m, symio.write_points_csv(m, pts, labels))
        assert np.array_equal(back, pts)
        assert np.array_equal(back_labels, labels)

    def test_default_label_and_header(self):
        m = manifold_from_string("pd:2")
        text = symio.write_points_csv(m, np.eye(2)[None])
        assert text.splitlines()[0] == "label,m,x11,x12,x21,x22"
        assert text.splitlines()[1] == "1,2,1.0,0.0,0.0,1.0"
        assert symio.header(manifold_from_string("siegel:1")) == ["label", "m", "re11", "im11"]
        assert symio.header(manifold_from_string("poincare:2")) == ["label", "d", "x1", "x2"]

    def test_comments_and_blank_lines(self):
        m = manifold_from_string("euclidean:1")
        pts, labels = symio.read_points_csv(m, "# symspace sample {}\nlabel,d,x1\n\n2,1,0.5\n")
        np.testing.assert_array_equal(pts, [[0.5]])
        np.testing.assert_array_equal(labels, [2])

    def test_empty(self):
        pts, labels = symio.read_points_csv(manifold_from_string("pd:2"), "label,m,x11,x12,x21,x22\n")
        assert pts.shape == (0, 2, 2) and labels.size == 0

    @pytest.mark.parametrize("text", [
        "1,3,1,0,0,1\n", "1,2,1,0,0\n", "1,2,1,0,0,x\n", "a,2,1,0,0,1\n", "1,2,1,0,0,nan\n", "1,2,-1,0,0,1\n",
    ])
    def test_malformed(self, text):
        with pytest.raises(DataFormatError):
            symio.read_points_csv(manifold_from_string("pd:2"), text)

    def test_outside_ball(self):
        with pytest.raises(DataFormatError):
            symio.read_points_csv(manifold_from_string("poincare:2"), "1,2,0.9,0.9\n")


class TestParams:
    def test_roundtrip(self):
        lg = LogGaussian(manifold_from_string("pd:2"), np.array([0.1, 0.0, -0.2]), np.eye(3))
        back = symio.read_params(json.dumps(lg.to_dict()))
        assert np.array_equal(back.mean, lg.mean) and np.array_equal(back.cov, lg.cov)

    @pytest.mark.parametrize("text", ["{", "[1, 2]", '{"manifold": "pd:2", "mu": [0, 0, 0], "sigma": [[1]]}'])
    def test_invalid(self, text):
        with pytest.raises(DataFormatError):
            symio.read_params(text)


class TestDumps:
    def test_canonical(self):
        assert symio.dumps({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'

    def test_float_repr_roundtrips(self):
        x = float(np.exp(1.0) / 3)
        assert json.loads(symio.dumps({"x": x}))["x"] == x
