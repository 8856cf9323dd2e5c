import json

import pytest

from plannersim import cli
from plannersim.simulator import WorldConfig, config_to_dict


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- optimize ----------------------------------------------------------------

def test_optimize_trivial(capsys):
    code, out, _ = run_cli(
        capsys, "optimize", "--n", "1000", "--gamma", "0", "--beta", "0"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc == {
        "n_audit": 1, "tau": 1, "delta_privacy": 0.0, "delta_interrupt": 0.0
    }


def test_optimize_infeasible_exit_2(capsys):
    code, out, _ = run_cli(
        capsys, "optimize", "--n", "40", "--gamma", "0.5", "--beta", "0.5",
        "--rounds", "10000", "--p-privacy", "1e-12", "--p-interrupt", "1e-12",
    )
    assert code == 2
    assert "error" in json.loads(out)


def test_optimize_degenerate_kappa_exit_1(capsys):
    code, _, _ = run_cli(capsys, "optimize", "--n", "100", "--kappa", "0")
    assert code == 1


def test_bad_flags_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["optimize", "--no-such-flag"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 1


# --- sweep -------------------------------------------------------------------

def test_sweep_custom_to_file(tmp_path, capsys):
    spec = tmp_path / "points.json"
    spec.write_text(json.dumps([
        {"n": 10, "gamma": 0.2, "kappa": 1.0, "beta": 0.0, "n_audit": 3,
         "tau": 2, "n_round": 1}
    ]))
    out_csv = tmp_path / "rows.csv"
    code, _, _ = run_cli(
        capsys, "sweep", "--custom", str(spec), "--out", str(out_csv)
    )
    assert code == 0
    lines = out_csv.read_text().strip().split("\n")
    assert lines[0].startswith("gamma,beta,kappa")
    assert len(lines) == 2


def test_sweep_empty_custom_stdout(tmp_path, capsys):
    spec = tmp_path / "empty.json"
    spec.write_text("[]")
    code, out, _ = run_cli(capsys, "sweep", "--custom", str(spec))
    assert code == 0
    assert out.strip() == "gamma,beta,kappa,n,n_round,n_audit,tau,delta_privacy,delta_interrupt"


def test_sweep_bad_spec_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", "--spec", "fig9"])
    assert exc.value.code == 1
    missing = tmp_path / "missing.json"
    code2, _, _ = run_cli(capsys, "sweep", "--custom", str(missing))
    assert code2 == 1


# --- simulate / check --------------------------------------------------------

@pytest.fixture()
def sim_artifacts(tmp_path, capsys):
    config = config_to_dict(
        WorldConfig(
            n=16, n_round=3, n_audit=5, tau=3, d=3, cohort_size=3, sigma=0.5,
            master_seed=0,
        )
    )
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    out_dir = tmp_path / "artifacts"
    code, out, _ = run_cli(
        capsys, "simulate", "--config", str(cfg_path), "--seed", "9",
        "--out", str(out_dir),
    )
    assert code == 0
    return out_dir, out


def test_simulate_writes_artifacts(sim_artifacts):
    out_dir, printed = sim_artifacts
    assert (out_dir / "events.jsonl").exists()
    assert (out_dir / "chain.json").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["rounds_completed"] == 3
    assert summary["attack_bypassed"] is False
    assert summary["linearizable"] is True
    assert summary["integrity"] is True
    assert "attack_bypassed=False" in printed


def test_simulate_bad_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 4, "bogus": true}')
    code, _, _ = run_cli(
        capsys, "simulate", "--config", str(bad), "--out", str(tmp_path / "o")
    )
    assert code == 1


def test_check_passes_on_simulated_log(sim_artifacts, capsys):
    out_dir, _ = sim_artifacts
    code, out, _ = run_cli(
        capsys, "check", "--events", str(out_dir / "events.jsonl"),
        "--chain", str(out_dir / "chain.json"),
    )
    assert code == 0
    assert "linearizable: pass" in out
    assert "integrity: pass" in out


def test_check_fails_on_forged_log(sim_artifacts, tmp_path, capsys):
    out_dir, _ = sim_artifacts
    lines = (out_dir / "events.jsonl").read_text().strip().split("\n")
    doc = json.loads(lines[1])
    assert doc["event"] == "respond"
    doc["output_digest"] = "00" * 32
    lines[1] = json.dumps(doc)
    forged = tmp_path / "forged.jsonl"
    forged.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(
        capsys, "check", "--events", str(forged),
        "--chain", str(out_dir / "chain.json"),
    )
    assert code == 3
    assert "integrity: fail" in out


def test_check_nonlinearizable_prints_no_witness(tmp_path, capsys):
    from plannersim.eventlog import make_list_history

    log = make_list_history([
        ("invoke", "B", "a2"),
        ("respond", "B", ["a1", "a2"]),
        ("invoke", "A", "a1"),
        ("respond", "A", ["a1"]),
    ])
    path = tmp_path / "hist.jsonl"
    path.write_text(log.to_jsonl() + "\n")
    code, out, _ = run_cli(capsys, "check", "--events", str(path))
    assert code == 3
    assert "linearizable: fail" in out and "witness=none" in out


def test_check_truncated_json_exit_1(tmp_path, capsys):
    path = tmp_path / "trunc.jsonl"
    path.write_text('{"pid": "p0", "ts": 0, "event"')
    code, _, _ = run_cli(capsys, "check", "--events", str(path))
    assert code == 1


# --- attack ------------------------------------------------------------------

def test_attack_fork_report(capsys):
    code, out, _ = run_cli(
        capsys, "attack", "--strategy", "fork", "--trials", "5", "--seed", "1"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["strategy"] == "fork"
    assert doc["divergent_digests"] == 0
    assert doc["runs_bypassed"] == 0


def test_attack_sybil_within_three_sigma(capsys):
    code, out, _ = run_cli(
        capsys, "attack", "--strategy", "sybil", "--trials", "20000",
        "--seed", "2", "--n", "100", "--gamma", "0.2",
        "--n-audit", "5", "--tau", "4",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["within_3_sigma"] is True
    assert doc["predicted_rate"] > 0


def test_attack_unknown_strategy_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["attack", "--strategy", "meteor"])
    assert exc.value.code == 1
