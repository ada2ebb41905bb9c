import json

import jsonschema
import pytest

from shieldsim.cli import main
from shieldsim.report import canonical_json, load_schema


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture(scope="module")
def schema():
    return load_schema()


class TestExitCodes:
    def test_demo_honest(self, capsys, schema):
        code, rep = run(capsys, "demo", "--tokens", "16", "--dim", "32", "--heads", "2", "--seed", "1", "--verify", "on")
        assert code == 0 and rep["max_abs_err"] <= 1e-6
        jsonschema.validate(rep, schema)

    @pytest.mark.parametrize("adv, stage", [("matmul-single", "proj-q"), ("matmul-scale", "proj-q"),
                                            ("softmax-a", "softmax"), ("softmax-swap", "softmax")])
    def test_demo_adversary(self, capsys, schema, adv, stage):
        code, rep = run(capsys, "demo", "--seed", "1", "--adversary", adv)
        assert code == 2
        assert rep["verification"]["failing_stage"] == stage
        jsonschema.validate(rep, schema)

    def test_demo_targeted(self, capsys):
        code, rep = run(capsys, "demo", "--seed", "2", "--adversary", "matmul-single", "--target", "attn-value")
        assert code == 2 and rep["verification"]["failing_stage"] == "attn-value"

    def test_demo_unverified_tamper_exits_zero(self, capsys):
        code, rep = run(capsys, "demo", "--seed", "2", "--verify", "off", "--adversary", "matmul-single",
                        "--target", "proj-out")
        assert code == 0 and rep["max_abs_err"] > 0

    def test_unverified_attention_tamper_can_break_budget(self, capsys):
        # Garbage from a tampered blinded product overflows the next range check.
        assert main(["demo", "--seed", "2", "--verify", "off", "--adversary", "matmul-single",
                     "--target", "attn-matmul"]) in (0, 65)

    @pytest.mark.parametrize("argv", [["demo", "--tokens", "0"], ["demo", "--verify", "maybe"], ["bogus"],
                                      ["bench", "--sizes", "64"], ["attack", "--protocol", "softmax", "--attack", "single"],
                                      ["demo", "--target", "proj-q"], []])
    def test_usage_errors(self, capsys, argv):
        assert main(argv) == 64

    def test_range_error(self, capsys):
        assert main(["demo", "--l-frac", "11"]) == 65
        assert "range budget" in capsys.readouterr().err


class TestReports:
    def test_bench(self, capsys, schema, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        code, rep = run(capsys, "bench", "--sizes", "16,32,64", "--csv", str(csv_path))
        assert code == 0
        jsonschema.validate(rep, schema)
        assert all(rep["shape_checks"].values())
        rows = rep["sweep"]
        assert rows[1]["oam_worker_mults"] == 8 * rows[0]["oam_worker_mults"]
        assert rows[1]["oam_trusted_online_mults"] == 4 * rows[0]["oam_trusted_online_mults"]
        assert csv_path.read_text().startswith("size,")

    def test_attack(self, capsys, schema):
        code, rep = run(capsys, "attack", "--protocol", "matmul", "--attack", "single", "--trials", "50")
        assert code == 0 and rep["detection"]["detections"] == 50
        jsonschema.validate(rep, schema)

    def test_seclevel(self, capsys, schema):
        code, rep = run(capsys, "seclevel", "--m", "128", "--d", "256")
        assert abs(rep["seclevel"]["security_level_oam_bits"] - 13471) <= 1
        jsonschema.validate(rep, schema)
        code, rep = run(capsys, "seclevel", "--n", "1", "--d", "0")
        assert rep["seclevel"]["security_level_softmax_bits"] == 0

    def test_verify_compare(self, capsys, schema):
        code, rep = run(capsys, "verify-compare", "--size", "64")
        assert rep["comparison"]["vecmat_ratio"] == [2, 3]
        assert rep["comparison"]["mult_ratio"] == pytest.approx(2 / 3)
        jsonschema.validate(rep, schema)

    def test_canonical_round_trip(self, capsys):
        main(["attack", "--protocol", "softmax", "--attack", "a", "--trials", "20"])
        text = capsys.readouterr().out
        assert canonical_json(json.loads(text)) == text

    def test_deterministic_under_seed(self, capsys):
        argv = ["attack", "--protocol", "softmax", "--attack", "c", "--trials", "30", "--seed", "4"]
        _, a = run(capsys, *argv)
        _, b = run(capsys, *argv, "--jobs", "2")
        assert a["detection"] == b["detection"]

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "r.json"
        main(["seclevel", "--out", str(path)])
        assert path.read_text() == capsys.readouterr().out


class TestDefaults:
    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("SHIELDSIM_SEED", "17")
        _, rep = run(capsys, "seclevel")
        assert rep["seed"] == 17
        _, rep = run(capsys, "seclevel", "--seed", "3")
        assert rep["seed"] == 3

    def test_bad_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("SHIELDSIM_SEED", "x")
        assert main(["seclevel"]) == 64

    def test_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 9, "seclevel": {"m": 2, "d": 2}}))
        _, rep = run(capsys, "seclevel", "--config", str(cfg))
        assert rep["seed"] == 9 and rep["config"]["m"] == 2
        _, rep = run(capsys, "seclevel", "--config", str(cfg), "--m", "3")
        assert rep["config"]["m"] == 3

    def test_missing_config(self, capsys, tmp_path):
        assert main(["seclevel", "--config", str(tmp_path / "none.json")]) == 64
