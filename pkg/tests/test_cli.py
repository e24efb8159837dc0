import json

import pytest

from fairfed import workload
from fairfed.cli import main
from fairfed.model import result_from_dict


@pytest.fixture
def swf(tmp_path):
    path = tmp_path / "log.swf"
    path.write_text(workload.synthetic_swf(days=2, seed=3, jobs_per_day=60,
                                           n_users=10))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_writes_result_and_summary(capsys, swf, tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "simulate", "--log", swf, "--scenario", "1",
                          "--algorithm", "simpl_direct", "--seed", 42,
                          "--window", 40000, "--orgs", 3, "--out", out)
    assert code == 0
    result = result_from_dict(json.loads(out.read_text()))
    assert "total wait" in stdout
    for org, wait in result.wait_per_org.items():
        assert f"{org}={wait}" in stdout


def test_simulate_rerun_is_byte_identical(capsys, swf, tmp_path):
    args = ["simulate", "--log", swf, "--scenario", "2", "--algorithm",
            "rel_direct", "--unitize", "--total-cores", 10, "--window", 40000,
            "--trace"]
    run(capsys, *args, "--out", tmp_path / "a.json")
    run(capsys, *args, "--out", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.trace").read_bytes() == (tmp_path / "b.trace").read_bytes()
    assert " submit " in (tmp_path / "a.trace").read_text()


def test_unknown_algorithm_is_usage_error(capsys, swf):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--log", str(swf), "--algorithm", "lottery"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "simpl_direct" in err and "round_robin" in err


def test_missing_log_is_runtime_error(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--log", tmp_path / "nope.swf",
                       "--algorithm", "fairshare")
    assert code == 1
    assert "nope.swf" in err


def test_simulate_from_exported_case(capsys, swf, tmp_path):
    case = tmp_path / "case.json"
    run(capsys, "simulate", "--log", swf, "--algorithm", "fairshare",
        "--window", 40000, "--export", case, "--out", tmp_path / "a.json")
    code, _, _ = run(capsys, "simulate", "--setup", case, "--algorithm",
                     "fairshare", "--out", tmp_path / "b.json")
    assert code == 0
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def write_table(path, rows, players):
    path.write_text(json.dumps({"organizations": players, "coalitions": [
        {"members": m, "value": v} for m, v in rows]}))
    return path


def test_shapley_two_orgs(capsys, tmp_path):
    table = write_table(tmp_path / "t.json",
                        [(["1"], 1), (["2"], 3), (["1", "2"], 6)], ["1", "2"])
    code, out, _ = run(capsys, "shapley", "--table", table,
                       "--out", tmp_path / "rep.json")
    assert code == 0
    assert "phi[1] = 2" in out and "phi[2] = 4" in out
    assert "v(N) = 6 ok" in out
    report = json.loads((tmp_path / "rep.json").read_text())
    assert report["metadata"]["shapley"] == {"1": "2", "2": "4"}


def test_shapley_reports_missing_coalition(capsys, tmp_path):
    rows = [(["1"], 1), (["2"], 1), (["3"], 1), (["1", "2"], 1),
            (["2", "3"], 1), (["1", "2", "3"], 1)]
    table = write_table(tmp_path / "t.json", rows, ["1", "2", "3"])
    code, _, err = run(capsys, "shapley", "--table", table)
    assert code == 1
    assert "missing coalition {1,3}" in err


def test_shapley_grand_coalition_only(capsys, tmp_path):
    table = write_table(tmp_path / "t.json", [(["1", "2"], 6)], ["1", "2"])
    code, _, err = run(capsys, "shapley", "--table", table)
    assert code == 1
    assert "missing coalition {1}" in err


def test_shapley_from_log(capsys, swf, tmp_path):
    code, out, _ = run(capsys, "shapley", "--log", swf, "--orgs", 3,
                       "--window", 40000, "--algorithm", "orig_direct",
                       "--out", tmp_path / "rep.json")
    assert code == 0
    assert " ok" in out and "unfairness (l2)" in out
    report = json.loads((tmp_path / "rep.json").read_text())
    assert set(report["algorithms"]["orig_direct"]["wait_vector"]) == \
        {"org0", "org1", "org2"}


def test_tournament_outputs_are_deterministic(capsys, swf, tmp_path):
    args = ["tournament", "--log", swf, "--samples", 2, "--window", 30000,
            "--orgs", 3, "--scenario", "S1,S2", "--algorithms",
            "fairshare,round_robin"]
    code, out, _ = run(capsys, *args, "--out", tmp_path / "a")
    assert code == 0
    assert out.splitlines()[0] == "algorithm,S1,S2"
    run(capsys, *args, "--out", tmp_path / "b")
    for name in ("scores.csv", "table.csv", "detail.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()
    detail = (tmp_path / "a" / "detail.csv").read_text().splitlines()
    assert len(detail) == 1 + 2 * 2 * 2


def test_tournament_config_file(capsys, swf, tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"logs": [str(swf)], "samples": 1,
                                  "window": 30000, "n_orgs": 3,
                                  "scenarios": ["S1"],
                                  "out": str(tmp_path / "o")}))
    code, _, _ = run(capsys, "tournament", "--config", config)
    assert code == 0
    saved = json.loads((tmp_path / "o" / "config.json").read_text())
    assert saved["samples"] == 1


def test_tournament_all_samples_failing(capsys, swf, tmp_path):
    code, _, err = run(capsys, "tournament", "--log", swf, "--samples", 1,
                       "--window", 10 ** 8, "--scenario", "S1",
                       "--out", tmp_path / "o")
    assert code == 1
    assert "every sample failed" in err


def test_tournament_without_logs(capsys, tmp_path):
    code, _, err = run(capsys, "tournament", "--out", tmp_path)
    assert code == 1
    assert "no logs" in err


def test_synth_log(capsys, tmp_path):
    out = tmp_path / "s.swf"
    assert run(capsys, "synth-log", "--days", 1, "--out", out)[0] == 0
    assert workload.load_swf(out).entries
