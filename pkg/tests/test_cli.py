import json
from pathlib import Path

from ffg.cli import main
from ffg.sim import RunWorld, build_report, config_to_dict, run
from ffg.scenarios import dynamic_attack_config

REPO_SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write_scenario(tmp_path, cfg, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config_to_dict(cfg), indent=2))
    return path


def test_run_honest_exits_zero(tmp_path, capsys):
    path = write_scenario(tmp_path, dynamic_attack_config(stitching=True))
    out = tmp_path / "report.json"
    code = main(["run", "--scenario", str(path), "--out", str(out),
                 "--format", "json"])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["schema_version"] == 1
    assert data["clients"]


def test_run_flags_designed_safety_violation(tmp_path):
    path = write_scenario(tmp_path, dynamic_attack_config(stitching=False))
    code = main(["run", "--scenario", str(path)])
    assert code == 2


def test_run_missing_file_exits_one(tmp_path):
    code = main(["run", "--scenario", str(tmp_path / "absent.json")])
    assert code == 1


def test_strict_flag_passes_clean_runs(tmp_path):
    path = write_scenario(tmp_path, dynamic_attack_config(stitching=True))
    assert main(["run", "--scenario", str(path), "--strict"]) == 0


def test_run_bad_json_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["run", "--scenario", str(bad)]) == 1


def test_run_seed_override_changes_digest(tmp_path, capsys):
    from ffg.sim import ScenarioConfig, ValidatorSpec
    from ffg.config import ProtocolConfig
    from ffg.leak import LeakConfig
    from fractions import Fraction
    cfg = ScenarioConfig(
        name="basic", seed=1,
        protocol=ProtocolConfig(spacing=5, delta=2,
                                leak=LeakConfig(rate=Fraction(1, 10**9))),
        validators=tuple(ValidatorSpec(i, 100) for i in range(4)),
        duration_epochs=4, observers=1,
        proposer_fork_rate=Fraction(1, 5))
    path = write_scenario(tmp_path, cfg)
    main(["run", "--scenario", str(path)])
    first = capsys.readouterr().out
    main(["run", "--scenario", str(path), "--seed", "99"])
    second = capsys.readouterr().out
    assert first != second


def test_check_valid_and_invalid(tmp_path, capsys):
    path = write_scenario(tmp_path, dynamic_attack_config(stitching=True))
    assert main(["check", "--scenario", str(path)]) == 0
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"validators": []}))
    assert main(["check", "--scenario", str(broken)]) == 1


def test_corpus_matches_committed_digests(capsys):
    assert REPO_SCENARIOS.is_dir()
    code = main(["corpus", "--dir", str(REPO_SCENARIOS)])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "FAIL" not in out


def test_corpus_detects_drift(tmp_path, capsys):
    src = json.loads((REPO_SCENARIOS / "digests.json").read_text())
    name = "all_honest.json"
    (tmp_path / name).write_text((REPO_SCENARIOS / name).read_text())
    (tmp_path / "digests.json").write_text(
        json.dumps({name: "0" * 64}))
    assert main(["corpus", "--dir", str(tmp_path)]) == 2


def test_corpus_env_var(monkeypatch, capsys):
    monkeypatch.setenv("FFG_CORPUS_DIR", str(REPO_SCENARIOS))
    assert main(["corpus"]) == 0


def test_corpus_missing_dir(tmp_path):
    assert main(["corpus", "--dir", str(tmp_path / "void")]) == 1


# -- audit ----------------------------------------------------------------------

def dual_finalized_report():
    """Equal-height conflicting finalizations with full equivocation."""
    from test_slashing import dual_finalize_equal_height, make_world
    from ffg.sim import ScenarioConfig, ValidatorSpec, sweep_invariants
    from ffg.config import ProtocolConfig
    from ffg.leak import LeakConfig
    from fractions import Fraction
    w = make_world([100, 100, 100])
    l1, r1 = dual_finalize_equal_height(w)
    cfg = ScenarioConfig(
        name="forced_equivocation", seed=42,
        protocol=w.proto,
        validators=tuple(ValidatorSpec(i, 100) for i in range(3)),
        duration_epochs=4, observers=0)
    world = RunWorld(cfg, w.tree, w.cache, w.pool, w.keyring, {})
    report = build_report(world, sweep_invariants(world))
    return report, l1, r1


def test_audit_equivocation_bound_holds(tmp_path, capsys):
    report, l1, r1 = dual_finalized_report()
    path = tmp_path / "report.json"
    path.write_text(report.to_json())
    code = main(["audit", "--report", str(path), l1.hex(), r1.hex()])
    out = capsys.readouterr().out
    assert code == 0
    assert "violator 0" in out and "violator 2" in out


def test_audit_non_conflicting_exits_one(tmp_path, capsys):
    report, l1, r1 = dual_finalized_report()
    path = tmp_path / "report.json"
    path.write_text(report.to_json())
    root = "00" * 32
    assert main(["audit", "--report", str(path), root, l1.hex()]) == 1


def test_audit_dynamic_attack_empty_violators(tmp_path, capsys):
    cfg = dynamic_attack_config(stitching=False)
    report = run(cfg)
    path = tmp_path / "report.json"
    path.write_text(report.to_json())
    a, b = report.extra["conflicting_pair"]
    code = main(["audit", "--report", str(path), a, b])
    out = capsys.readouterr().out
    assert code == 2
    assert "no violators found" in out
