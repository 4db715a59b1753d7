import json

import pytest

from sepfx.cli import main
from sepfx.data import restrict_to_two_arm, save_four_arm, save_two_arm
from sepfx.simulation import SimConfig, generate_dataset


@pytest.fixture(scope="module")
def four_arm_csv(tmp_path_factory):
    ds = generate_dataset(SimConfig(n=600, a_y_model=1, reps=1, master_seed=11), 0)
    path = tmp_path_factory.mktemp("cli") / "four.csv"
    save_four_arm(ds, path)
    return str(path)


@pytest.fixture(scope="module")
def two_arm_csv(tmp_path_factory):
    ds = generate_dataset(SimConfig(n=600, a_y_model=1, reps=1, master_seed=11), 0)
    path = tmp_path_factory.mktemp("cli") / "two.csv"
    save_two_arm(restrict_to_two_arm(ds), path)
    return str(path)


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_truth_command(capsys):
    code, payload = run_json(capsys, ["truth", "--model", "2", "--deterministic"])
    assert code == 0
    assert payload["command"] == "truth"
    assert payload["result"]["sde_two"] == 2.0
    assert "generated_at" not in payload


def test_truth_includes_timestamp_by_default(capsys):
    code, payload = run_json(capsys, ["truth"])
    assert code == 0
    assert "generated_at" in payload


def test_estimate_four_arm(capsys, four_arm_csv):
    code, payload = run_json(capsys, [
        "estimate", "--data", four_arm_csv, "--design", "four-arm",
        "--estimand", "sde:aM=1", "--estimand", "sie:aY=0",
        "--seed", "3", "--deterministic",
    ])
    assert code == 0
    ests = payload["result"]["estimates"]
    assert [(e["estimand"], e["fixed_level"]) for e in ests] == [("sde", 1), ("sie", 0)]
    assert all(e["design"] == "four-arm" for e in ests)
    assert payload["seed"] == 3
    assert payload["version"]


def test_estimate_two_arm_with_column_mapping(capsys, two_arm_csv):
    code, payload = run_json(capsys, [
        "estimate", "--data", two_arm_csv, "--design", "two-arm",
        "--col-a", "aY", "--deterministic",
    ])
    assert code == 0
    ests = payload["result"]["estimates"]
    # default estimands when none are given
    assert [(e["estimand"], e["fixed_level"]) for e in ests] == [("sde", 1), ("sie", 1)]
    assert all(e["strategy"] == "ensemble" for e in ests)


def test_estimate_writes_out_file(capsys, four_arm_csv, tmp_path):
    out = tmp_path / "est.json"
    code = main([
        "estimate", "--data", four_arm_csv, "--design", "four-arm",
        "--estimand", "sde:aM=1", "--deterministic", "--out", str(out),
    ])
    assert code == 0
    assert capsys.readouterr().out == ""
    payload = json.loads(out.read_text())
    assert payload["result"]["estimates"][0]["estimand"] == "sde"


def test_pretty_table(capsys, four_arm_csv):
    code = main([
        "estimate", "--data", four_arm_csv, "--design", "four-arm",
        "--estimand", "sde:aM=1", "--pretty",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "estimand" in out and "point" in out
    with pytest.raises(json.JSONDecodeError):
        json.loads(out)


def test_falsify_direct(capsys, four_arm_csv):
    code, payload = run_json(capsys, [
        "falsify", "direct", "--data", four_arm_csv, "--deterministic",
    ])
    assert code == 0
    tests = payload["result"]["tests"]
    assert [t["test"] for t in tests] == ["H0(i)", "H0(i)", "H0(ii)"]
    assert tests[0]["mediator"] == 0 and tests[1]["mediator"] == 1


def test_falsify_indirect_exit_zero_even_when_rejecting(capsys, tmp_path):
    cfg = SimConfig(n=1500, a_y_model=1, reps=1, master_seed=3, violation=0.8)
    path = tmp_path / "violated.csv"
    save_four_arm(generate_dataset(cfg, 0), path)
    code, payload = run_json(capsys, [
        "falsify", "indirect", "--data", str(path), "--deterministic",
    ])
    assert code == 0
    tests = payload["result"]["tests"]
    assert len(tests) == 4
    assert any(t["reject"] for t in tests)


def test_usage_error_exits_two(capsys, four_arm_csv):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--data", four_arm_csv, "--design", "four-arm",
              "--estimand", "bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--design", "four-arm"])  # missing --data
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--n", "10"])  # below the generator minimum
    assert exc.value.code == 2


def test_data_error_exits_one(capsys, four_arm_csv):
    assert main(["estimate", "--data", "/no/such/file.csv",
                 "--design", "four-arm"]) == 1
    assert "error:" in capsys.readouterr().err
    # four-arm file lacks the two-arm treatment column
    assert main(["estimate", "--data", four_arm_csv, "--design", "two-arm"]) == 1


def test_simulate_deterministic_reruns_are_identical(capsys, tmp_path):
    args = ["simulate", "--n", "400", "--reps", "3", "--seed", "21",
            "--estimators", "sde_four", "--deterministic"]
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    payload = json.loads(out_a.read_text())
    assert "runtime_seconds" not in payload["result"]
    assert payload["result"]["rows"][0]["estimator"] == "sde_four"


def test_version_flag(capsys):
    from sepfx import __version__

    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
