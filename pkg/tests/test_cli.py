"""Command-line interface: documented examples plus exit-code and determinism contracts."""

import json

import pytest

from echoed_walks import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_classify_example(capsys):
    code, out, _ = run(capsys, "classify", "--p", "0.8", "--echo", "const:2", "--spin", "const:1", "--format", "json")
    rep = json.loads(out)
    assert code == 0 and rep["regime"] == "supercritical" and rep["scaling_exponent"] == pytest.approx(1.6)


def test_walk_example(capsys):
    code, out, _ = run(capsys, "walk", "--p", "1", "--echo", "const:1", "--spin", "const:1", "-n", "5", "--seed", "1")
    rows = out.splitlines()[1:]
    assert code == 0 and [r.split(",")[2] for r in rows] == ["1", "2", "3", "4", "5"]


@pytest.mark.parametrize(
    "argv",
    [
        ["walk", "--p", "1.5"],
        ["walk", "--echo", "normal:0,1"],
        ["walk", "--spin", "const:0"],
        ["ensemble", "--checkpoints", "64,8"],
        ["ensemble", "--statistic", "bogus"],
        ["verify", "C99"],
        ["nosuch"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2


def test_error_names_field(capsys):
    _, _, err = run(capsys, "walk", "--p", "1.5")
    assert "p:" in err


def test_sidecar_roundtrip(tmp_path, capsys):
    out = tmp_path / "e.csv"
    code, _, _ = run(capsys, "ensemble", "--p", "0.8", "--echo", "const:2", "--checkpoints", "8,64",
                     "--reps", "500", "--seed", "3", "--statistic", "scaled", "--out", str(out))
    assert code == 0
    first = out.read_bytes()
    meta = json.loads((tmp_path / "e.csv.json").read_text())
    assert meta["seed"] == 3 and meta["config_hash"]
    cfg = cli.ExperimentConfig.from_dict({k: v for k, v in meta.items() if k not in ("config_hash", "version")})
    assert cfg.hash() == meta["config_hash"]
    code, _, _ = run(capsys, "ensemble", "--config", str(tmp_path / "e.csv.json"), "--out", str(out))
    assert code == 0 and out.read_bytes() == first


def test_config_json_roundtrip():
    cfg = cli.ExperimentConfig.from_dict({"command": "walk", "p": 0.5, "echo": "exp:1", "n": 7})
    again = cli.ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    with pytest.raises(cli.ConfigError, match="unknown"):
        cli.ExperimentConfig.from_dict({"command": "walk", "colour": 1})


def test_env_seed_fallback(capsys, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "42")
    _, a, _ = run(capsys, "walk", "--p", "0.5", "--echo", "exp:1", "-n", "20")
    _, b, _ = run(capsys, "walk", "--p", "0.5", "--echo", "exp:1", "-n", "20", "--seed", "42")
    _, c, _ = run(capsys, "walk", "--p", "0.5", "--echo", "exp:1", "-n", "20", "--seed", "43")
    assert a == b != c


def test_threads_do_not_change_output(capsys):
    argv = ["ensemble", "--p", "0.7", "--echo", "exp:1", "--checkpoints", "16,128", "--reps", "400", "--seed", "5"]
    _, a, _ = run(capsys, *argv, "--threads", "1")
    _, b, _ = run(capsys, *argv)
    assert a == b


@pytest.mark.parametrize(
    "argv",
    [
        ["tree", "--p", "0.5", "-n", "6"],
        ["tree", "--p", "0.5", "-n", "6", "--format", "json"],
        ["brw", "--echo", "const:2", "-t", "1.5"],
        ["fixpoint", "--echo", "bernoulli:0.5", "-n", "500", "--generations", "5"],
        ["urn-check", "--echo", "const:2", "-n", "8", "--reps", "2000"],
        ["ensemble", "--p", "0.5", "--echo", "const:1", "-n", "10", "--format", "json"],
    ],
)
def test_subcommands_run(capsys, argv):
    code, out, _ = run(capsys, *argv)
    assert code == 0 and out


def test_verify_deterministic_and_exit(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, out, _ = run(capsys, "verify", "C10", "--seed", "7", "--out", str(a))
    assert code == 0 and "PASS C10" in out
    run(capsys, "verify", "C10", "--seed", "7", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["passed"] and report["criteria"][0]["key"] == "C10"


def test_verify_failure_exits_1(capsys, monkeypatch):
    from echoed_walks import acceptance

    def failing(seed):
        r = acceptance.CriterionResult("C10", "forced")
        r.add("x", False)
        return r

    monkeypatch.setitem(acceptance.CRITERIA, "C10", failing)
    code, out, _ = run(capsys, "verify", "C10")
    assert code == 1 and "FAIL C10" in out
