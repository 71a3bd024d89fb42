import json

import pytest

from feasbound.cli import build_parser, main, resolve_config

C3 = ["--case", "builtin:case3"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


def test_missing_case_file(tmp_path, capsys):
    code, err = run(["trace", "--case", str(tmp_path / "nope.json"), "--out", str(tmp_path)], capsys)
    assert code == 2 and err["error"] == "ParseError"


def test_bad_binding_is_usage_error(tmp_path, capsys):
    code, err = run(["trace", *C3, "--plane", "2:X,3:P", "--out", str(tmp_path)], capsys)
    assert code == 2


def test_empty_seed_set_exit_code(tmp_path, capsys):
    code, err = run(["point", *C3, "--fix", "3:Q=50", "--restarts", "2", "--out", str(tmp_path)], capsys)
    assert code == 3 and err["error"] == "EmptySeedSet"


def test_single_restart_point(tmp_path, capsys):
    code, summary = run(["point", *C3, "--fix", "3:Q=0.02", "--restarts", "1", "--out", str(tmp_path)], capsys)
    assert code == 0 and summary["seeds"] == 1
    seeds = json.loads((tmp_path / "seeds.json").read_text())["seeds"]
    assert seeds[0]["origin"] == "TenrFromFlat" and seeds[0]["sigma_min"] < 1e-8


def test_trace_outputs_byte_identical(tmp_path, capsys):
    argv = ["trace", *C3, "--fix", "3:Q=0.02", "--restarts", "4"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    capsys.readouterr()
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs and csvs == sorted(p.name for p in b.glob("*.csv"))
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    run_json = json.loads((a / "run.json").read_text())
    assert run_json["curves"][0]["termination"] == "ClosedLoop"
    assert (a / "curves.svg").exists()


def test_scan_coarse_warning(tmp_path, capsys):
    code, summary = run(["scan", *C3, "--fix", "3:Q=0", "--box=-1,1,-1,1", "--step", "0.9",
                         "--out", str(tmp_path)], capsys)
    assert code == 0 and "coarse" in summary["warning"]
    assert (tmp_path / "scan.csv").read_text().startswith("lambda1,lambda2,class\n")


def test_scan_needs_box(tmp_path, capsys):
    code, err = run(["scan", *C3, "--out", str(tmp_path)], capsys)
    assert code == 2 and "--box" in err["message"]


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"case": "builtin:case3", "eps": 1e-6, "restarts": 5}))
    ns = build_parser().parse_args(["trace", "--config", str(cfg), "--restarts", "7"])
    rc = resolve_config(ns)
    assert (rc.eps, rc.restarts, rc.radius_max) == (1e-6, 7, 0.2)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"case": "builtin:case3", "colour": "red"}))
    code, err = run(["trace", "--config", str(cfg)], capsys)
    assert code == 2 and "colour" in err["message"]


@pytest.mark.parametrize("argv", [["trace"], ["sweep", *C3]])
def test_required_options(argv, tmp_path, capsys):
    code, _ = run(argv + ["--out", str(tmp_path)], capsys)
    assert code == 2


def test_sweep_writes_labeled_curves(tmp_path, capsys):
    code, summary = run(["sweep", *C3, "--sweep-param", "3:Q", "--values", "0,0.05", "--restarts", "4",
                         "--out", str(tmp_path)], capsys)
    assert code == 0 and not summary["failures"]
    assert {c["label"]["value"] for c in summary["curves"]} == {0.0, 0.05}
    assert (tmp_path / "sweep.svg").exists()
