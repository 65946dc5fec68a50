import json

import pytest
import sympy

from qsym import cli
from qsym.dsl import parse

HEAT = """vars t x; dep u;
eq heat: d(u,t) = d(u,x,2);
op G: t*dx - (1/2)*x*u*du;
op Pt: dt;
op Px: dx;
op Q2: u^2*du;
"""


def run(src, **kw):
    return cli.run(parse(src), **kw)


def test_check_lie_passes_with_zero_residual():
    code, (res,) = run(HEAT + "check-lie heat G;")
    assert code == 0 and res.status == "pass"
    assert res.lines == ["G: residual = 0"]
    assert res.record()["residuals"] == ["0"]


def test_failed_check_gives_nonzero_exit():
    code, (res,) = run(HEAT + "check-lie heat Q2;")
    assert code == 1 and res.status == "fail" and not res.ok


def test_expected_failure_counts_as_met():
    code, (res,) = run(HEAT + 'case q2 expect fail "not a symmetry": check-lie heat Q2;')
    assert code == 0 and res.ok and res.id == "q2"


def test_derive_prints_three_determining_equations():
    src = HEAT + "unknown g1(t,x); unknown g2(t,x); unknown g3(t,x);\nop T: dt + g1*dx + (g2*u + g3)*du;\nderive qcond heat T;"
    code, (res,) = run(src)
    assert code == 0
    assert res.lines[0].startswith("3 determining equations")
    assert sum(line.endswith("= 0") for line in res.lines) == 3
    assert sorted(res.forms) == ["eq0", "eq1", "eq2"]


def test_bracket_and_closure():
    code, results = run(HEAT + "bracket Px G;\nclosure heat Pt Px;")
    assert code == 0
    u = sympy.Symbol("u")
    assert results[0].forms == {"dt": 0, "dx": 0, "du": -u / 2}
    assert results[1].lines == ["[Pt, Px] = 0"]


def test_engine_errors_are_reported_with_the_directive_id():
    code, results = run(HEAT + "check-lie heat G;\ncheck-lie heat Nope;")
    assert code == 1
    assert results[1].id == "002:check-lie" and results[1].status == "error"
    assert "error in 002:check-lie" in results[1].lines[0]
    assert "Nope" in results[1].lines[0]


def test_reduction_directive():
    src = """vars t x; dep u;
eq scaled: t*d(u, t) + x*d(u, x) = 1;
op S: t*dt + x*dx;
ansatz ratio: u = phi(w) where w = x/t solve x;
reduce scaled ratio by S;
"""
    code, (res,) = run(src)
    assert code == 0
    assert "reduced equation is inconsistent" in res.lines


def test_joint_directive():
    src = """vars t x; dep u; param C;
eq drift: d(u, t) = -d(u, x, 2) + u - t*(d(u, x) - u);
op T: dt;
joint drift T candidate C*exp(x);
"""
    code, (res,) = run(src)
    assert code == 0 and res.status == "pass"


def test_summary_records():
    code, results = run(HEAT + "check-lie heat G;\ncheck-lie heat Q2;")
    s = cli.summary(results, 0, None, code)
    assert s["format"] == "qsym-summary/1" and s["exit_code"] == 1
    first, second = s["records"]
    assert first == {
        "id": "001:check-lie",
        "directive": "check-lie heat G;",
        "status": "pass",
        "expected": "pass",
        "ok": True,
        "residuals": ["0"],
        "forms": {},
    }
    assert second["status"] == "fail" and second["residuals"][0] != "0"


def test_parallel_run_orders_by_id():
    src = HEAT + "check-lie heat G;\ncheck-lie heat Pt Px;\nbracket Px G;"
    code, seq = run(src)
    code_p, par = run(src, parallel=True)
    assert code == code_p == 0
    assert [r.text() for r in seq] == [r.text() for r in par]


def test_main_writes_report_and_summary(tmp_path, capsys):
    script = tmp_path / "heat.qs"
    script.write_text(HEAT + "check-lie heat G;\n")
    out = tmp_path / "summary.json"
    assert cli.main([str(script), "--emit-summary", str(out)]) == 0
    assert "[PASS] 001:check-lie: check-lie heat G;" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert data["records"][0]["ok"] is True and data["seed"] == 0


def test_main_reports_parse_errors(tmp_path, capsys):
    script = tmp_path / "bad.qs"
    script.write_text(HEAT + "check-lie heat G")
    assert cli.main([str(script)]) == 2
    assert f"{script}:7:" in capsys.readouterr().err


def test_main_print_flag(tmp_path, capsys):
    script = tmp_path / "heat.qs"
    script.write_text(HEAT + "check-lie heat G;")
    assert cli.main([str(script), "--print"]) == 0
    printed = capsys.readouterr().out
    assert parse(printed) == parse(HEAT + "check-lie heat G;")


def test_main_without_input_is_a_usage_error(capsys):
    assert cli.main([]) == 2


@pytest.mark.parametrize("seed", [0, 3])
def test_property_directive_uses_the_seed(seed):
    code, (res,) = run("property thm5 3;", seed=seed)
    assert code == 0
    assert f"seed {seed}" in res.lines[0]
