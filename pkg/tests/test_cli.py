import json
import subprocess
import sys

import numpy as np
import pytest

from symspace import io as symio
from symspace.classify import write_dataset_csv
from symspace.cli import main
from symspace.descriptors import write_pgm
from symspace.distributions import LogGaussian, make_rng
from symspace.manifolds import PositiveDefinite, manifold_from_string

PD2 = PositiveDefinite(2)


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    out = {}

    def put(name, text, binary=False):
        path = root / name
        (path.write_bytes if binary else path.write_text)(text)
        out[name] = str(path)

    lg = LogGaussian(PD2, np.zeros(3), 0.5 * np.eye(3))
    put("params.json", json.dumps(lg.to_dict()))
    put("params2.json", json.dumps(LogGaussian(PD2, np.array([0.5, 0.0, 0.0]), 0.5 * np.eye(3)).to_dict()))
    ball = manifold_from_string("poincare:2")
    put("ball1.json", json.dumps(LogGaussian(ball, np.zeros(2), 0.5 * np.eye(2)).to_dict()))
    put("ball2.json", json.dumps(LogGaussian(ball, np.array([0.4, 0.0]), 0.5 * np.eye(2)).to_dict()))
    put("points.csv", symio.write_points_csv(PD2, lg.sample(60, make_rng(1))))
    put("points2.csv", symio.write_points_csv(PD2, lg.sample(60, make_rng(2))))
    rng = make_rng(3)
    far = LogGaussian(PD2, np.array([8.0, 8.0, 0.0]), 0.01 * np.eye(3)).sample(30, rng)
    near = LogGaussian(PD2, np.zeros(3), 0.01 * np.eye(3)).sample(30, rng)
    put("data.csv", write_dataset_csv(np.concatenate([near, far]), np.repeat([1, 2], 30)))
    img = np.random.default_rng(4).integers(0, 256, size=(36, 36)) / 255.0
    put("img.pgm", write_pgm(img), binary=True)
    return out


def commands(f):
    return {
        "sample": ["sample", "--params", f["params.json"], "--n", "20"],
        "density": ["density", "--params", f["params.json"], "--in", f["points.csv"]],
        "kde": ["kde", "--manifold", "pd:2", "--in", f["points.csv"]],
        "em": ["em", "--manifold", "pd:2", "--in", f["points.csv"], "--k-max", "2"],
        "classify": ["classify", "--in", f["data.csv"], "--repeats", "2"],
        "metric": ["metric", "--which", "hellinger", "--params", f["params.json"], "--params2", f["params2.json"],
                   "--n", "500"],
        "wasserstein": ["metric", "--which", "wasserstein", "--manifold", "pd:2", "--in", f["points.csv"],
                        "--in2", f["points2.csv"]],
        "lp": ["metric", "--which", "lp", "--params", f["ball1.json"], "--params2", f["ball2.json"]],
        "descriptor": ["descriptor", "--in", f["img.pgm"], "--grid", "8"],
        "verify": ["verify", "--manifold", "poincare:2", "--cases", "10"],
        "simulate": ["simulate", "--family", "lg", "--sweep", "1", "--n", "40", "--replicates", "2"],
    }


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestDeterminism:
    @pytest.mark.parametrize("name", ["sample", "density", "kde", "em", "classify", "metric", "wasserstein", "lp",
                                      "descriptor", "verify", "simulate"])
    def test_byte_identical_across_runs_and_threads(self, name, files, capsys, monkeypatch):
        argv = commands(files)[name] + ["--seed", "7"]
        outputs = []
        for threads in ("1", "4", "1"):
            monkeypatch.setenv("SYMSPACE_THREADS", threads)
            code, out, _ = run(argv, capsys)
            assert code == 0
            outputs.append(out)
        assert outputs[0] and outputs[0] == outputs[1] == outputs[2]

    def test_out_file_matches_stdout(self, files, capsys, tmp_path):
        argv = commands(files)["sample"]
        _, out, _ = run(argv, capsys)
        target = tmp_path / "s.csv"
        assert main(argv + ["--out", str(target)]) == 0
        assert target.read_text() == out


class TestCommands:
    def test_sample(self, files, capsys):
        code, out, _ = run(commands(files)["sample"], capsys)
        lines = out.splitlines()
        assert lines[0].startswith("# symspace sample {")
        pts, labels = symio.read_points_csv(PD2, out)
        assert pts.shape == (20, 2, 2) and np.all(labels == 1)

    def test_sample_zero(self, files, capsys):
        code, out, _ = run(["sample", "--params", files["params.json"], "--n", "0"], capsys)
        assert code == 0
        assert len(symio.read_points_csv(PD2, out)[0]) == 0

    def test_sample_seed_matters(self, files, capsys):
        _, a, _ = run(commands(files)["sample"] + ["--seed", "1"], capsys)
        _, b, _ = run(commands(files)["sample"] + ["--seed", "2"], capsys)
        assert a.splitlines()[2] != b.splitlines()[2]

    def test_density_matches_library(self, files, capsys):
        _, out, _ = run(commands(files)["density"] + ["--format", "json"], capsys)
        values = np.array(json.loads(out)["log_density"])
        lg = symio.read_params(open(files["params.json"]).read())
        pts, _ = symio.read_points_csv(PD2, open(files["points.csv"]).read())
        np.testing.assert_array_equal(values, lg.log_pdf(pts))

    def test_kde_roundtrip(self, files, capsys, tmp_path):
        model_path = tmp_path / "kde.json"
        assert main(commands(files)["kde"] + ["--out", str(model_path)]) == 0
        capsys.readouterr()
        payload = json.loads(model_path.read_text())
        assert payload["cv"]["selected"] == payload["model"]["h"]
        _, out, _ = run(["density", "--model", str(model_path), "--in", files["points2.csv"], "--format", "json"],
                        capsys)
        from symspace.estimators import kde_fit
        pts, _ = symio.read_points_csv(PD2, open(files["points.csv"]).read())
        query, _ = symio.read_points_csv(PD2, open(files["points2.csv"]).read())
        expected = kde_fit(PD2, pts, payload["model"]["h"]).log_pdf(query)
        np.testing.assert_array_equal(json.loads(out)["log_density"], expected)

    def test_kde_fixed_h(self, files, capsys):
        _, out, _ = run(commands(files)["kde"] + ["--h", "0.4"], capsys)
        payload = json.loads(out)
        assert payload["cv"] is None and payload["model"]["h"] == 0.4

    def test_em_fixed_k(self, files, capsys):
        _, out, _ = run(["em", "--manifold", "pd:2", "--in", files["points.csv"], "--K", "1"], capsys)
        payload = json.loads(out)
        assert payload["selection"] is None
        assert len(payload["model"]["weights"]) == 1

    def test_classify_separated(self, files, capsys):
        _, out, _ = run(commands(files)["classify"], capsys)
        results = json.loads(out)["results"]
        assert set(results) == {"GNB", "GKC", "LGNB", "LGKC"}
        for res in results.values():
            assert res["mean_accuracy"] == 1.0
            assert len(res["runs"]) == 2

    def test_classify_with_test_file(self, files, capsys):
        _, out, _ = run(["classify", "--in", files["data.csv"], "--test", files["data.csv"], "--kind", "LGNB"],
                        capsys)
        assert json.loads(out)["results"]["LGNB"]["mean_accuracy"] == 1.0

    def test_hellinger_self(self, files, capsys):
        _, out, _ = run(["metric", "--which", "hellinger", "--params", files["params.json"], "--params2",
                         files["params.json"]], capsys)
        payload = json.loads(out)
        assert abs(payload["value"]) <= 3 * payload["stderr"] + 1e-15
        assert {"value", "stderr", "n", "seed", "config"} == set(payload)

    def test_kl(self, files, capsys):
        _, out, _ = run(["metric", "--which", "kl", "--params", files["params.json"], "--params2",
                         files["params2.json"], "--n", "20000"], capsys)
        payload = json.loads(out)
        assert abs(payload["value"] - 0.25) <= 3 * payload["stderr"]

    def test_descriptor_rows(self, files, capsys):
        _, out, _ = run(commands(files)["descriptor"] + ["--label", "3"], capsys)
        pts, labels = symio.read_points_csv(PositiveDefinite(5), out)
        assert pts.shape == (1, 5, 5) and labels.tolist() == [3]
        _, rows, _ = run(commands(files)["descriptor"] + ["--no-header"], capsys)
        assert len(rows.splitlines()) == 1 and rows.startswith("1,5,")

    def test_verify(self, files, capsys):
        code, out, _ = run(commands(files)["verify"], capsys)
        payload = json.loads(out)
        assert code == 0 and payload["passed"]

    def test_simulate_csv_and_figure(self, files, capsys, tmp_path):
        fig = tmp_path / "sim.png"
        code, out, _ = run(commands(files)["simulate"] + ["--figure", str(fig)], capsys)
        assert code == 0
        rows = [line for line in out.splitlines() if not line.startswith("#")]
        assert rows[0] == "family,value,method,mean,std,replicates,n"
        assert len(rows) == 5
        assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestExitCodes:
    def test_usage_errors(self, files, capsys):
        assert run([], capsys)[0] == 1
        assert run(["sample"], capsys)[0] == 1
        assert run(["kde", "--manifold", "sphere:2", "--in", files["points.csv"]], capsys)[0] == 1
        assert run(["density", "--in", files["points.csv"]], capsys)[0] == 1
        assert run(["metric", "--which", "kl", "--params", files["params.json"]], capsys)[0] == 1
        assert run(["sample", "--params", files["params.json"], "--n", "-1"], capsys)[0] == 1

    def test_data_errors(self, files, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("label,m,x11,x12,x21,x22\n1,2,1,0,0,-1\n")
        code, _, err = run(["kde", "--manifold", "pd:2", "--in", str(bad)], capsys)
        assert code == 2 and "error" in err
        assert run(["kde", "--manifold", "pd:2", "--in", str(tmp_path / "missing.csv")], capsys)[0] == 2
        assert run(["sample", "--params", files["points.csv"]], capsys)[0] == 2
        assert run(["sample", "--params", files["params.json"], "--manifold", "pd:3"], capsys)[0] == 2

    def test_verify_failure(self, capsys, monkeypatch):
        import symspace.verify as verify_mod
        from symspace.verify import Check
        monkeypatch.setattr(verify_mod, "run", lambda *a, **k: [Check("forced", 1.0, 0.1)])
        code, out, _ = run(["verify", "--manifold", "pd:2"], capsys)
        assert code == 3 and json.loads(out)["passed"] is False

    def test_console_entry_point(self, files):
        result = subprocess.run([sys.executable, "-m", "symspace.cli", "verify", "--manifold", "siegel:1",
                                 "--cases", "5"], capture_output=True, text=True, check=False)
        assert result.returncode == 0
        assert json.loads(result.stdout)["passed"] is True
