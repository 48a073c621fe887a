import csv
import json

import numpy as np
import pytest

from hierdot.cli import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    RunConfig,
    load_config,
    main,
    resolve_hyperpriors,
)
from hierdot.errors import ValidationError
from hierdot.hypermodels import Exponential, Fixed, InverseGamma, StandardGamma

TINY = """
[mesh]
simulation_edge = 6.0
inversion_edge = 6.5

[layout]
sources = 4
detectors = 4

[noise]
seed = 3

[solver]
max_outer = 2
max_inner = 5
"""


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.ini"
    cfg.write_text(TINY)
    assert main(["simulate", "--config", str(cfg), "--out", str(root / "sim")]) == EXIT_OK
    return root, cfg


def parse(text, overrides=None, tmp_path=None):
    path = tmp_path / "c.ini"
    path.write_text(text)
    return RunConfig.from_parser(load_config(path, overrides))


def test_simulate_outputs(tiny):
    root, _ = tiny
    sim = root / "sim"
    manifest = json.loads((sim / "manifest.json").read_text())
    assert manifest["measurements"] == 32
    assert manifest["config"]["layout"]["sources"] == "4"
    assert np.isfinite(manifest["snr_db"])
    for name in ("data.csv", "truth.csv", "simulation_mesh.txt", "truth_mua.pgm", "truth_mus.pgm.txt"):
        assert (sim / name).is_file()
    with open(sim / "data.csv") as fh:
        assert len(list(csv.reader(fh))) == 17


def test_simulate_deterministic(tiny, tmp_path):
    root, cfg = tiny
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "again")]) == EXIT_OK
    assert (tmp_path / "again" / "data.csv").read_bytes() == (root / "sim" / "data.csv").read_bytes()
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "other"), "--seed", "4"]) == EXIT_OK
    assert (tmp_path / "other" / "data.csv").read_bytes() != (root / "sim" / "data.csv").read_bytes()


def test_desk_default_measurement_count(tmp_path):
    cfg = parse("[mesh]\nsimulation_edge = 6\n", tmp_path=tmp_path)
    assert cfg.n_src * cfg.n_det * 2 == 512


def test_reconstruct_and_report(tiny, capsys):
    root, cfg = tiny
    data = str(root / "sim" / "data.csv")
    runs = []
    for kind in ("fixed", "standard-gamma"):
        out = root / f"rec_{kind}"
        rc = main(
            ["reconstruct", "--config", str(cfg), "--out", str(out), "--data", data]
            + ["--hyperprior", kind, "--max-outer", "3"]
        )
        assert rc == EXIT_OK
        runs.append(str(out))
    fixed = json.loads((root / "rec_fixed" / "manifest.json").read_text())
    assert fixed["outer_iterations"] == 1 and fixed["converged"]
    sg = json.loads((root / "rec_standard-gamma" / "manifest.json").read_text())
    assert sg["outer_iterations"] == 3
    assert sg["hyperprior"]["vartheta_mus"] == pytest.approx(6.4e-2, rel=0.05)
    log = (root / "rec_standard-gamma" / "iterations.csv").read_text().splitlines()
    assert log[0] == "outer_iter,inner_iters,F,rel_change,wall_seconds" and len(log) == 4
    F = [float(r.split(",")[2]) for r in log[1:]]
    assert F[2] <= F[1] <= F[0]
    assert len(list((root / "rec_standard-gamma" / "iterates").glob("iter_*.csv"))) == 4

    rc = main(["report", "--config", str(cfg), "--out", str(root / "rep")] + runs)
    assert rc == EXIT_OK
    with open(root / "rep" / "relative_errors.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "hyperprior", "low_re_mua", "low_re_mus", "intermediate_re_mua",
        "intermediate_re_mus", "high_re_mua", "high_re_mus",
    ]
    table = {r[0]: r[1:] for r in rows[1:]}
    assert all(table["fixed"])  # the baseline fills every level
    assert table["standard-gamma"][0] == "" and table["standard-gamma"][2] != ""
    report = json.loads((root / "rep" / "report.json").read_text())
    assert "config" in report
    assert (root / "rep" / "convergence_rec_standard-gamma.csv").is_file()
    status = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert all(s["status"] == "ok" for s in status)


def test_report_identical_inputs_zero(tiny, tmp_path):
    root, cfg = tiny
    # a "reconstruction" that is the truth itself, on the simulation mesh
    run = tmp_path / "self"
    run.mkdir()
    sim = root / "sim"
    (run / "reconstruction.csv").write_bytes((sim / "truth.csv").read_bytes())
    (run / "mesh.txt").write_bytes((sim / "simulation_mesh.txt").read_bytes())
    (run / "iterates").mkdir()
    manifest = {
        "command": "reconstruct",
        "config": json.loads((sim / "manifest.json").read_text())["config"],
        "hyperprior": {"kind": "fixed", "level": "intermediate"},
        "files": {
            "mesh": "mesh.txt",
            "reconstruction": "reconstruction.csv",
            "truth": str(sim / "truth.csv"),
            "truth_mesh": str(sim / "simulation_mesh.txt"),
            "iterates": "iterates",
        },
    }
    (run / "manifest.json").write_text(json.dumps(manifest))
    assert main(["report", "--config", str(cfg), "--out", str(tmp_path / "rep"), str(run)]) == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "rep" / "relative_errors.csv")))
    assert rows[1] == ["fixed"] + ["0.0000"] * 6


def test_report_lists_missing_files(tmp_path, capsys):
    run = tmp_path / "run"
    run.mkdir()
    (run / "manifest.json").write_text(
        json.dumps({"command": "reconstruct", "files": {"mesh": "m.txt", "reconstruction": "r.csv"}})
    )
    assert main(["report", "--out", str(tmp_path / "rep"), str(run)]) == EXIT_VALIDATION
    err = json.loads(capsys.readouterr().err)
    assert err["kind"] == "validation"
    assert "m.txt" in err["message"] and "r.csv" in err["message"] and "truth" in err["message"]


def test_layout_mismatch_rejected(tiny, tmp_path, capsys):
    root, cfg = tiny
    other = tmp_path / "o.ini"
    other.write_text(TINY.replace("detectors = 4", "detectors = 5"))
    rc = main(["reconstruct", "--config", str(other), "--out", str(tmp_path / "r"), "--data", str(root / "sim" / "data.csv")])
    assert rc == EXIT_VALIDATION
    assert "4x4" in capsys.readouterr().err


def test_missing_data_file(tmp_path):
    assert main(["reconstruct", "--out", str(tmp_path / "r"), "--data", str(tmp_path / "nope.csv")]) == EXIT_VALIDATION


def test_numerical_failure_exit_code(tiny, tmp_path, monkeypatch):
    from hierdot import cli
    from hierdot.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("normal equations not positive definite")

    monkeypatch.setattr(cli, "ias_run", boom)
    root, cfg = tiny
    rc = main(["reconstruct", "--config", str(cfg), "--out", str(tmp_path / "r"), "--data", str(root / "sim" / "data.csv")])
    assert rc == EXIT_NUMERICAL


# ---------------------------------------------------------------- config


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ValidationError, match="unknown config section"):
        parse("[meshes]\nradius = 3\n", tmp_path=tmp_path)


@pytest.mark.parametrize(
    "text,match",
    [
        ("[mesh]\nradius = -1\n", "radius"),
        ("[layout]\nsources = two\n", "integer"),
        ("[prior]\nkind = smooth\n", "prior"),
        ("[hyperprior]\nkind = student\n", "hyperprior"),
        ("[hyperprior]\nlevel = huge\n", "level"),
        ("[output]\nclip_low = 90\nclip_high = 10\n", "clip"),
        ("[phantom]\ninclusion1 = disk 0 0 3\n", "inclusion1"),
        ("[phantom]\npreset = star\n", "preset"),
    ],
)
def test_config_validation(tmp_path, text, match):
    with pytest.raises(ValidationError, match=match):
        parse(text, tmp_path=tmp_path)


def test_inclusion_lines_parsed(tmp_path):
    cfg = parse(
        "[phantom]\ninclusion1 = disk -5 0 4 0.005 0.5\ninclusion2 = polygon 8 2 3 0 -0.2\n",
        tmp_path=tmp_path,
    )
    a, b = cfg.phantom.inclusions
    assert a.center == (-5.0, 0.0) and a.d_mus == 0.5
    assert b.shape == "polygon" and b.d_mus == -0.2


def test_flag_overrides(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[hyperprior]\nkind = exponential\n")
    cp = load_config(path, {("hyperprior", "kind"): "inverse-gamma", ("noise", "seed"): 9})
    cfg = RunConfig.from_parser(cp)
    assert cfg.hyperprior == "inverse-gamma" and cfg.seed == 9


def test_resolve_standard_gamma_levels(tmp_path):
    for level, expected in (("low", 5.8e-3), ("intermediate", 6.4e-2), ("high", 6.4)):
        cfg = parse(f"[hyperprior]\nkind = standard-gamma\nlevel = {level}\n", tmp_path=tmp_path)
        (a, s), info = resolve_hyperpriors(cfg)
        assert isinstance(s, StandardGamma) and s.eta == 1e-4
        assert s.vartheta == pytest.approx(expected, rel=0.05)
        assert a.vartheta == pytest.approx(expected * 1e-4, rel=0.05)


def test_resolve_difference_and_explicit(tmp_path):
    cfg = parse("[prior]\nkind = difference\n[hyperprior]\nkind = standard-gamma\n", tmp_path=tmp_path)
    (_, s), _ = resolve_hyperpriors(cfg)
    assert s.vartheta == pytest.approx(1.6, rel=0.05)
    cfg = parse("[hyperprior]\nkind = inverse-gamma\nvartheta_mus = 0.4\nvartheta_mua = 4e-5\n", tmp_path=tmp_path)
    (a, s), info = resolve_hyperpriors(cfg)
    assert isinstance(s, InverseGamma) and (a.vartheta, s.vartheta) == (4e-5, 0.4)


def test_resolve_exponential_and_fixed(tmp_path):
    cfg = parse("[hyperprior]\nkind = exponential\nlevel = intermediate\n", tmp_path=tmp_path)
    (a, s), _ = resolve_hyperpriors(cfg)
    assert isinstance(s, Exponential) and (a.gamma, s.gamma) == (2.5e-7, 2.5e-3)
    (a, s), _ = resolve_hyperpriors(parse("", tmp_path=tmp_path))
    assert isinstance(a, Fixed) and isinstance(s, Fixed)


def test_exponential_cdf_selection_error(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text("[hyperprior]\nkind = exponential\nbound_mus = 1.0\n")
    with pytest.raises(ValidationError, match="CDF selection not applicable"):
        resolve_hyperpriors(RunConfig.from_parser(load_config(path)))
