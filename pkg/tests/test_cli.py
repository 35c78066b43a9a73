import json
import re

import pytest

from dqindex import checks
from dqindex.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from dqindex.scenario import SUITES, bundled


def scenario(tmp_path, name="flat_plane", **changes):
    raw = json.loads(bundled(name).read_text())
    for key, value in changes.items():
        head, _, tail = key.partition("__")
        if tail:
            raw[head][tail] = value
        else:
            raw[head] = value
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(raw))
    return path


def verify(capsys, *argv):
    code = main(["verify", *map(str, argv)])
    out, err = capsys.readouterr()
    return code, out, err


def test_list_suites(capsys):
    assert main(["list-suites"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split(":")[0] for ln in lines] == list(SUITES)
    assert "bq_mc_residual" in lines[SUITES.index("index")]


def test_explain(capsys):
    assert main(["explain", "bq_mc_residual"]) == EXIT_OK
    assert "Maurer-Cartan" in capsys.readouterr().out
    assert main(["explain", "hodge"]) == EXIT_OK
    assert "chi(a)" in capsys.readouterr().out
    assert main(["explain", "no_such_check"]) == EXIT_USAGE
    assert "unknown check" in capsys.readouterr().err


def test_every_check_has_an_explanation():
    for cid in checks.ANCHORS:
        assert checks.explain(cid).startswith(cid)


def test_empty_suite_list_echoes_environment(tmp_path, capsys):
    code, out, _ = verify(capsys, scenario(tmp_path, suites=[]))
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["suites"] == []
    assert report["environment"]["cutoffs"]["Y_max"] == 4
    assert report["environment"]["seed"] == 7


def test_selected_suites_pass_and_write_report(tmp_path, capsys):
    out_path = tmp_path / "report.json"
    code, out, _ = verify(capsys, "flat_plane", "--suite", "weyl", "--suite", "poisson",
                          "--out", out_path)
    assert code == EXIT_OK
    assert out.strip().endswith("PASS")
    report = json.loads(out_path.read_text())
    assert [s["name"] for s in report["suites"]] == ["poisson", "weyl"]
    for s in report["suites"]:
        ids = [c["id"] for c in s["checks"]]
        assert ids == sorted(ids)
        for c in s["checks"]:
            assert set(c) == {"id", "paper_anchor", "status", "residual", "millis"}
            assert c["status"] == "pass" and c["residual"] == "0" and c["millis"] is None


def test_reports_are_deterministic_and_exact(tmp_path, capsys):
    args = ("flat_plane", "--suite", "weyl", "--suite", "star", "--suite", "dgla")
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    verify(capsys, *args, "--out", a)
    verify(capsys, *args, "--out", b)
    verify(capsys, *args, "--jobs", "3", "--out", c)
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    # rationals only: no decimal points or exponents in numeric fields
    assert not re.search(r"\d\.\d|\de[-+]?\d", a.read_text())
    verify(capsys, *args, "--seed", "99", "--out", b)
    assert json.loads(b.read_text())["environment"]["seed"] == 99


def test_timings_are_opt_in(tmp_path, capsys):
    out_path = tmp_path / "t.json"
    verify(capsys, "curved_plane", "--suite", "weyl", "--timings", "--out", out_path)
    for c in json.loads(out_path.read_text())["suites"][0]["checks"]:
        assert isinstance(c["millis"], int)


def test_failing_residual_exits_one(tmp_path, capsys):
    path = scenario(tmp_path, poisson__hp_dim=5)
    code, out, _ = verify(capsys, path, "--suite", "poisson", "--out", tmp_path / "r.json")
    assert code == EXIT_FAIL
    assert "FAIL hp_dim" in out and out.strip().endswith("FAIL")


def test_malformed_expression_names_the_token(tmp_path, capsys):
    path = scenario(tmp_path, inputs={"q1": [["1+*x1", "0"], ["0", "0"]]}, idempotents=["q1"])
    code, _, err = verify(capsys, path)
    assert code == EXIT_USAGE
    assert "line 1, column 3" in err and "'*'" in err


def test_broken_json_reports_position(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"model": {"kind": "plane",,}')
    code, _, err = verify(capsys, path)
    assert code == EXIT_USAGE
    assert "line 1, column 28" in err


@pytest.mark.parametrize("changes, needle", [
    ({"model__T_max": 0}, "T_max"),
    ({"idempotents": ["missing"]}, "missing"),
    ({"suites": ["weyl", "astrology"]}, "astrology"),
    ({"inputs": {"q1": [["x1", "0"], ["0", "0"]]}, "idempotents": ["q1"]}, "idempotent"),
])
def test_precondition_violations_are_named(tmp_path, capsys, changes, needle):
    code, _, err = verify(capsys, scenario(tmp_path, **changes))
    assert code == EXIT_USAGE
    assert needle in err


def test_unknown_scenario(capsys):
    code, _, err = verify(capsys, "nosuch")
    assert code == EXIT_USAGE and "nosuch" in err


def test_unknown_suite_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["verify", "flat_plane", "--suite", "astrology"])
    assert e.value.code == EXIT_USAGE
