import json

import numpy as np
import pytest

from tangent_forge.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, bundled_scenarios, load_scenario, main, run

BUNDLED = ("flat_plane", "flat_with_psi", "sphere", "quartic_finsler", "kahler_flat", "gencomplex_suite")


def records(text):
    return [json.loads(ln) for ln in text.strip().splitlines()]


def scenario_file(tmp_path, **overrides):
    spec = json.loads(bundled_scenarios()["flat_plane"].read_text())
    spec.update(overrides)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(spec, indent=2))
    return path


def test_bundled_scenarios_present():
    assert set(BUNDLED) <= set(bundled_scenarios())


def test_flat_plane_verify(capsys):
    assert main(["verify", "flat_plane", "--samples", "10"]) == EXIT_OK
    recs = records(capsys.readouterr().out)
    suites = [r for r in recs if r["kind"] == "suite"]
    assert suites and all(r["verdict"] in ("pass", "skip") for r in suites)
    assert all("seed" in r and "tolerance" in r for r in suites)
    assert recs[-1]["kind"] == "summary" and recs[-1]["suites"]["fail"] == 0


def test_sphere_eval_ricci(capsys):
    assert main(["eval", "sphere"]) == EXIT_OK
    recs = {r.get("tensor"): r for r in records(capsys.readouterr().out)}
    ric = np.array(recs["ricci_dmc"]["components"])
    assert recs["ricci_dmc"]["point"] == [1.0, 0.5, 0.3, 0.4]
    assert np.allclose(ric[:2, :2], np.diag([1.0, np.sin(1.0) ** 2]), atol=1e-7)
    assert np.max(np.abs(ric[2:])) <= 1e-8 and np.max(np.abs(ric[:, 2:])) <= 1e-8


def test_malformed_expression(tmp_path, capsys):
    path = scenario_file(tmp_path, sigma=[["1+*x1", "0"], ["0", "1"]])
    assert main(["verify", str(path)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "line" in err and "column" in err


def test_unknown_field(tmp_path, capsys):
    assert main(["verify", str(scenario_file(tmp_path, colour="blue"))]) == EXIT_INPUT
    assert "colour" in capsys.readouterr().err


def test_broken_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"dimension": 2,\n "sigma": [}')
    assert main(["eval", str(path)]) == EXIT_INPUT
    assert "line 2" in capsys.readouterr().err


def test_request_outside_chart(tmp_path, capsys):
    path = scenario_file(tmp_path, requests=[{"tensor": "G", "point": [9.0, 0.0, 0.0, 0.0]}])
    assert main(["eval", str(path)]) == EXIT_INPUT


def test_unknown_tensor_id(tmp_path, capsys):
    path = scenario_file(tmp_path, requests=[{"tensor": "weyl", "point": [0.0, 0.0, 0.0, 0.0]}])
    assert main(["eval", str(path)]) == EXIT_INPUT
    assert "weyl" in capsys.readouterr().err


def test_degenerate_sigma(tmp_path, capsys):
    path = scenario_file(tmp_path, sigma=[["1", "0"], ["0", "0"]])
    assert main(["verify", str(path)]) == EXIT_INPUT


def test_failing_suite_exits_one(tmp_path, capsys):
    # a wrong reference metric makes the Christoffel comparison fail
    path = scenario_file(tmp_path, base_metric_for_gamma=[["1", "0"], ["0", "exp(x1)"]])
    assert main(["verify", str(path), "--samples", "3"]) == EXIT_FAIL
    summary = records(capsys.readouterr().out)[-1]
    assert "connection-vs-base-christoffel" in summary["failing"]


def test_determinism(tmp_path):
    hashes = []
    for k in range(2):
        out = tmp_path / f"run{k}.jsonl"
        assert main(["verify", "sphere", "--samples", "5", "--seed", "9", "--out", str(out)]) == EXIT_OK
        hashes.append(json.loads((tmp_path / f"run{k}.jsonl.summary.json").read_text())["payload_hash"])
        assert out.read_text().count("\n") > 5
    assert hashes[0] == hashes[1]
    assert (tmp_path / "run0.jsonl").read_bytes() == (tmp_path / "run1.jsonl").read_bytes()


def test_seed_changes_payload(tmp_path, capsys):
    main(["verify", "flat_with_psi", "--samples", "3", "--seed", "1"])
    a = records(capsys.readouterr().out)[-1]["payload_hash"]
    main(["verify", "flat_with_psi", "--samples", "3", "--seed", "2"])
    b = records(capsys.readouterr().out)[-1]["payload_hash"]
    assert a != b


def test_report_aggregates_prior_output(tmp_path, capsys):
    out = tmp_path / "prior.jsonl"
    assert main(["verify", "flat_plane", "--samples", "4", "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(out)]) == EXIT_OK
    summary = records(capsys.readouterr().out)[-1]
    prior = json.loads((tmp_path / "prior.jsonl.summary.json").read_text())
    assert summary["suites"] == prior["suites"]
    assert summary["source"] == str(out)


def test_report_on_scenario_runs_everything(capsys):
    assert main(["report", "kahler_flat", "--samples", "2"]) == EXIT_OK
    kinds = {r["kind"] for r in records(capsys.readouterr().out)}
    assert {"header", "tensor", "suite", "summary"} <= kinds


def test_strict_profile_tightens_tolerances(capsys):
    main(["verify", "flat_plane", "--samples", "2", "--tolerance-profile", "strict"])
    strict = {r["identity"]: r["tolerance"] for r in records(capsys.readouterr().out) if r["kind"] == "suite"}
    main(["verify", "flat_plane", "--samples", "2"])
    default = {r["identity"]: r["tolerance"] for r in records(capsys.readouterr().out) if r["kind"] == "suite"}
    assert all(np.isclose(strict[k], 0.1 * default[k]) for k in default)


def test_load_scenario_overrides():
    sc = load_scenario(bundled_scenarios()["sphere"], seed=4, samples=6)
    assert sc.seed == 4 and len(sc.points) == 6
    assert all(sc.setting.chart.contains(p) for p in sc.points)


def test_bad_command():
    with pytest.raises(SystemExit):
        main(["plot", "sphere"])


def test_run_streams_to_given_sink(tmp_path):
    import io

    buf = io.StringIO()
    assert run("eval", bundled_scenarios()["flat_plane"], stream=buf) == EXIT_OK
    assert records(buf.getvalue())[0]["kind"] == "header"
