import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from twoweight.cli import main
from twoweight.generate import BundleError, GeneratorConfig, InstanceBundle, generate, parse_bundle
from twoweight.lattice import CapacityError


def test_generate_deterministic_bytes():
    cfg = GeneratorConfig(2, 2, "atomic-with-zeros", "general", 0.4, 17)
    assert generate(cfg).dumps() == generate(cfg).dumps()
    assert generate(cfg).dumps() != generate(cfg.replace(seed=18)).dumps()


def test_uniform_law_support():
    for seed in range(20):
        b = generate(GeneratorConfig(2, 3, "uniform", seed=seed))
        assert np.all((b.mu.mass > 0) & (b.mu.mass <= 1)) and np.all((b.nu.mass > 0) & (b.nu.mass <= 1))


def test_log_uniform_and_atomic_laws():
    b = generate(GeneratorConfig(2, 3, "log-uniform", seed=1))
    assert np.all((b.mu.mass >= 1e-3) & (b.mu.mass <= 1e3))
    zeros = sum(np.sum(generate(GeneratorConfig(1, 3, "atomic-with-zeros", seed=s)).mu.mass == 0) for s in range(10))
    assert zeros > 0


def test_config_validation():
    with pytest.raises(ValueError, match="haar"):
        GeneratorConfig(2, 2, operator_kind="haar")
    with pytest.raises(ValueError, match="weight-law"):
        GeneratorConfig(weight_law="gaussian")
    with pytest.raises(CapacityError):
        GeneratorConfig(2, 6)


def test_generator_never_zero_operator():
    for seed in range(30):
        b = generate(GeneratorConfig(1, 1, "uniform", "haar", 0.0, seed))
        assert b.operator.lam


@pytest.mark.parametrize("kind", ["positive", "haar", "general"])
def test_bundle_roundtrip(kind):
    b = generate(GeneratorConfig(1, 3, "atomic-with-zeros", kind, 0.5, 9, 3.0, 1.5))
    back = InstanceBundle.loads(b.dumps())
    assert back == b and back.dumps() == b.dumps()


def _bundle_dict():
    return json.loads(generate(GeneratorConfig(1, 2, seed=0)).dumps())


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["mu"].__setitem__(2, -1.0), "mu\\[2\\]: leaf 2"),
    (lambda d: d["nu"].pop(), "nu: expected 4"),
    (lambda d: d.pop("v"), "^v:"),
    (lambda d: d.__setitem__("depth", "2"), "depth"),
    (lambda d: d.__setitem__("p", 1.0), "p/q"),
    (lambda d: d["operator"].__setitem__("kind", "band"), "operator.kind"),
    (lambda d: d["operator"]["lambda"][0].__setitem__("value", -3.0), "operator"),
])
def test_bundle_validation_names_field(mutate, field):
    d = _bundle_dict()
    mutate(d)
    with pytest.raises(BundleError, match=field):
        parse_bundle(d)


def test_cli_gen_and_verify_core(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["gen", "--seed", "5", "--count", "3", "--depth", "2", "--weight-law", "atomic-with-zeros",
                 "--operator-kind", "general", "--out", str(out)]) == 0
    assert len(list(out.glob("*.json"))) == 3
    rep = tmp_path / "rep"
    assert main(["verify", str(out), "--suite", "core", "--out", str(rep)]) == 0
    data = json.loads((rep / "verify_core.json").read_text())
    assert data["v"] == 1 and data["hard_failures"] == 0
    rows = list(csv.DictReader((rep / "verify_core.csv").open()))
    assert len(rows) == len(data["checks"]) > 0


def test_cli_gen_stdout_matches_file(tmp_path, capsys):
    assert main(["gen", "--seed", "4"]) == 0
    text = capsys.readouterr().out
    f = tmp_path / "x.json"
    assert main(["gen", "--seed", "4", "--out", str(f)]) == 0
    assert f.read_text() == text


def test_cli_gen_usage_errors(capsys):
    assert main(["gen", "--n", "2", "--operator-kind", "haar"]) == 2
    assert "haar" in capsys.readouterr().err


def test_cli_verify_rejects_corrupt(tmp_path, capsys):
    d = _bundle_dict()
    d["mu"][1] = -0.5
    f = tmp_path / "bad.json"
    f.write_text(json.dumps(d))
    assert main(["verify", str(f), "--out", str(tmp_path / "r")]) == 2
    err = capsys.readouterr().err
    assert "bad.json" in err and "leaf 1" in err


def test_cli_verify_stopping_and_thm43(tmp_path):
    b = tmp_path / "h"
    main(["gen", "--count", "2", "--operator-kind", "haar", "--weight-law", "uniform", "--out", str(b)])
    assert main(["verify", str(b), "--suite", "stopping", "--out", str(tmp_path / "r")]) == 0
    assert main(["verify", str(b), "--suite", "thm43", "--out", str(tmp_path / "r")]) == 0


def test_cli_verify_hard_failure_exit(tmp_path):
    # a general operator with declared r = 0 that is not localized fails thm43
    d = _bundle_dict()
    d["operator"] = {"kind": "general", "matrix": np.random.default_rng(0).standard_normal((4, 4)).tolist(), "r": 0}
    f = tmp_path / "g.json"
    f.write_text(json.dumps(d))
    assert main(["verify", str(f), "--suite", "thm43", "--out", str(tmp_path / "r")]) == 1


def test_cli_thm31_p2_fifty_seeds(tmp_path):
    b = tmp_path / "p"
    main(["gen", "--count", "50", "--depth", "2", "--out", str(b)])
    assert main(["verify", str(b), "--suite", "thm31", "--out", str(tmp_path / "r")]) == 0
    data = json.loads((tmp_path / "r" / "verify_thm31.json").read_text())
    collapse = [c for c in data["checks"] if c["name"] == "l2_collapse"]
    assert len(collapse) == 50 and all(c["passed"] for c in collapse)


def test_cli_norm_and_constants(tmp_path, capsys):
    f = tmp_path / "i.json"
    main(["gen", "--seed", "2", "--depth", "2", "--out", str(f)])
    assert main(["norm", str(f), "--p", "3", "--q", "3", "--out", str(tmp_path / "n.json")]) == 0
    est = json.loads((tmp_path / "n.json").read_text())
    assert est["v"] == 1 and est["method"] == "ascent" and len(est["witness"]) == 4
    assert main(["norm", str(f), "--method", "svd"]) == 0
    svd = json.loads(capsys.readouterr().out)
    assert svd["method"] == "svd"
    assert main(["norm", str(f), "--method", "bruteforce", "--grid", "20"]) == 0
    capsys.readouterr()
    assert main(["constants", str(f), "--budget", "16:100"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["v"] == 1 and rep["square_direct"] >= rep["sawyer_direct"] - 1e-9


def test_cli_search(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["search", "--budget", "x"])
    assert exc.value.code == 2
    assert main(["search"]) == 2
    assert main(["search", "--p", "4", "--depth", "3", "--evaluations", "6", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "gap_trace_p4.csv").open()))
    best = [float(r["best_ratio"]) for r in rows]
    assert len(rows) == 3 and best == sorted(best)
    assert json.loads((tmp_path / "gap_trace_p4.json").read_text())["v"] == 1


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "twoweight.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("gen", "verify", "norm", "constants", "search"):
        assert cmd in r.stdout
