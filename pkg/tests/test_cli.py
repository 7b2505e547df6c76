import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from funclag.cli import main
from funclag.jsonio import decode_reals
from funclag.specs import guaranteed_auc

MODEL = str(Path(__file__).resolve().parent.parent / "models" / "synthetic_two_layer.json")


def write_spec(tmp_path, name="spec.json", **overrides):
    spec = {
        "type": "robust_ood",
        "input": [0.5] * 6,
        "epsilon": 0.04,
        "p_max": 0.999,
    }
    spec.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(spec))
    return str(path)


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


class TestVerify:
    def test_trivially_true_spec_exits_zero(self, tmp_path):
        # p_max close to 1 sits above the interval bound: verified at step 0
        spec = write_spec(tmp_path)
        out = tmp_path / "cert.json"
        result = run_cli(
            ["verify", "--model", MODEL, "--spec", spec, "--steps", "10", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        doc = decode_reals(json.loads(out.read_text()))
        assert doc["verified"] is True
        assert doc["bound"] <= 0.0
        assert len(doc["certificates"]) == 3

    def test_false_spec_exits_one(self, tmp_path):
        # the sampled confidence already exceeds this threshold
        spec = write_spec(tmp_path, p_max=0.05)
        out = tmp_path / "cert.json"
        result = run_cli(
            ["verify", "--model", MODEL, "--spec", spec, "--steps", "20",
             "--certify-every", "10", "--out", str(out)]
        )
        assert result.exit_code == 1
        doc = decode_reals(json.loads(out.read_text()))
        assert doc["verified"] is False
        for cert in doc["certificates"]:
            attack = cert["metadata"]["attack_value"]
            bound = cert["metadata"]["objective_bound"]
            assert bound >= attack - 4.0 * max(cert["metadata"]["attack_stderr"], 1e-9)

    def test_missing_model_exits_two(self, tmp_path):
        spec = write_spec(tmp_path)
        result = CliRunner().invoke(
            main,
            ["verify", "--model", str(tmp_path / "nope.json"), "--spec", spec,
             "--out", str(tmp_path / "cert.json")],
        )
        assert result.exit_code == 2

    def test_dist_robust_requires_linexp(self, tmp_path):
        spec = write_spec(tmp_path, type="dist_robust_ood", sigma=0.1)
        result = CliRunner().invoke(
            main,
            ["verify", "--model", MODEL, "--spec", spec, "--family", "linear",
             "--out", str(tmp_path / "cert.json")],
        )
        assert result.exit_code == 2

    def test_certificate_round_trip_bit_exact(self, tmp_path):
        spec = write_spec(tmp_path, p_max=0.2)
        out = tmp_path / "cert.json"
        run_cli(
            ["verify", "--model", MODEL, "--spec", spec, "--steps", "12",
             "--certify-every", "6", "--out", str(out)]
        )
        doc = decode_reals(json.loads(out.read_text()))
        from funclag.dual import Certificate

        for entry in doc["certificates"]:
            cert = Certificate.from_jsonable(entry)
            rebuilt = cert.to_jsonable()
            assert rebuilt["bound"] == entry["bound"]
            assert rebuilt["multipliers"] == entry["multipliers"]

    def test_determinism_across_runs_and_threads(self, tmp_path):
        spec = write_spec(tmp_path, p_max=0.2)
        contents = []
        for run, threads in ((0, 1), (1, 1), (2, 1), (3, 4)):
            out = tmp_path / f"cert_{run}.json"
            run_cli(
                ["verify", "--model", MODEL, "--spec", spec, "--steps", "15",
                 "--certify-every", "5", "--seed", "7", "--threads", str(threads),
                 "--out", str(out)]
            )
            contents.append(out.read_bytes())
        assert all(c == contents[0] for c in contents[1:])


class TestBounds:
    def test_identity_model_keeps_box(self, tmp_path):
        model = {
            "input_dim": 2,
            "layers": [
                {
                    "activation": "identity",
                    "weights": {"kind": "deterministic", "values": [[1.0, 0.0], [0.0, 1.0]]},
                    "bias": {"kind": "deterministic", "values": [0.0, 0.0]},
                }
            ],
        }
        model_path = tmp_path / "identity.json"
        model_path.write_text(json.dumps(model))
        spec = write_spec(tmp_path, input=[0.5, 0.5])
        out = tmp_path / "bounds.json"
        result = run_cli(
            ["bounds", "--model", str(model_path), "--spec", spec, "--out", str(out)]
        )
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["layers"][1] == doc["layers"][0]

    def test_negative_box_relu_collapses(self, tmp_path):
        model = {
            "input_dim": 1,
            "layers": [
                {
                    "activation": "identity",
                    "weights": {"kind": "deterministic", "values": [[1.0]]},
                    "bias": {"kind": "deterministic", "values": [-5.0]},
                },
                {
                    "activation": "relu",
                    "weights": {"kind": "deterministic", "values": [[1.0]]},
                    "bias": {"kind": "deterministic", "values": [0.0]},
                },
            ],
        }
        model_path = tmp_path / "neg.json"
        model_path.write_text(json.dumps(model))
        spec = write_spec(tmp_path, input=[0.5])
        out = tmp_path / "bounds.json"
        run_cli(["bounds", "--model", str(model_path), "--spec", spec, "--out", str(out)])
        doc = json.loads(out.read_text())
        assert doc["layers"][2] == [[0.0, 0.0]]

    def test_sampled_activations_inside_dumped_boxes(self, tmp_path):
        spec = write_spec(tmp_path)
        out = tmp_path / "bounds.json"
        run_cli(["bounds", "--model", MODEL, "--spec", spec, "--out", str(out)])
        doc = json.loads(out.read_text())
        from funclag import forward_sample, load_model

        net = load_model(MODEL)
        rng = np.random.default_rng(0)
        lo0 = np.array([p[0] for p in doc["layers"][0]])
        hi0 = np.array([p[1] for p in doc["layers"][0]])
        final_lo = np.array([p[0] for p in doc["layers"][-1]])
        final_hi = np.array([p[1] for p in doc["layers"][-1]])
        for trial in range(2000):
            x = lo0 + rng.random(6) * (hi0 - lo0)
            out_vec = forward_sample(net, x, seed=trial)
            assert np.all(out_vec >= final_lo - 1e-12)
            assert np.all(out_vec <= final_hi + 1e-12)


class TestAuc:
    def make_cert_dir(self, tmp_path, per_sample_bounds, attacks=None):
        directory = tmp_path / "certs"
        directory.mkdir()
        for i, bounds in enumerate(per_sample_bounds):
            certs = []
            for j, bound in enumerate(bounds):
                metadata = {"objective_bound": float.hex(float(bound)), "threshold": float.hex(0.5)}
                if attacks is not None:
                    metadata["attack_value"] = float.hex(float(attacks[i][j]))
                    metadata["attack_stderr"] = float.hex(0.0)
                certs.append(
                    {"bound": float.hex(float(bound - 0.5)), "verified": bound <= 0.5,
                     "trace": [], "multipliers": [], "metadata": metadata, "fingerprint": {}}
                )
            (directory / f"sample_{i}.json").write_text(
                json.dumps({"verified": False, "bound": float.hex(0.0), "certificates": certs})
            )
        return str(directory)

    def test_single_id_above_all_bounds(self, tmp_path):
        certs = self.make_cert_dir(tmp_path, [[0.2, 0.3]], attacks=[[0.1, 0.2]])
        id_path = tmp_path / "ids.json"
        id_path.write_text(json.dumps([0.9]))
        out = tmp_path / "auc.json"
        result = run_cli(["auc", "--id-scores", str(id_path), "--certs", certs, "--out", str(out)])
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["gauc"] == 1.0
        assert doc["aauc"] == 1.0

    def test_empty_directory_errors(self, tmp_path):
        (tmp_path / "empty").mkdir()
        result = CliRunner().invoke(
            main,
            ["auc", "--id-scores", str(tmp_path / "missing.json"),
             "--certs", str(tmp_path / "empty"), "--out", str(tmp_path / "auc.json")],
        )
        assert result.exit_code == 2

    def test_matches_brute_force(self, tmp_path):
        rng = np.random.default_rng(3)
        n = 50
        per_sample = [[float(b) for b in rng.random(3)] for _ in range(n)]
        certs = self.make_cert_dir(tmp_path, per_sample)
        ids = rng.random(40)
        id_path = tmp_path / "ids.json"
        id_path.write_text(json.dumps(ids.tolist()))
        out = tmp_path / "auc.json"
        run_cli(["auc", "--id-scores", str(id_path), "--certs", certs, "--out", str(out)])
        doc = json.loads(out.read_text())
        scores = np.array([max(b) for b in per_sample])
        assert doc["gauc"] == pytest.approx(guaranteed_auc(scores, ids), abs=1e-12)
