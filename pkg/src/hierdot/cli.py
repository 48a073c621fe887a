"""
Batch front-end: ``simulate``, ``reconstruct`` and ``report``.

Runs are configured by an INI-style file (see README for the grammar);
every key has a default so an empty file is a valid desk-scale run.
Command-line flags override the corresponding keys.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .forward import (
    SPEED_OF_LIGHT,
    DOTForward,
    MeasurementSet,
    OpticalField,
    PhysicsConstants,
    add_noise,
    read_measurements,
    write_measurements,
)
from .hypermodels import (
    DifferencePrior,
    Exponential,
    Fixed,
    InverseGamma,
    StandardGamma,
    UncorrelatedPrior,
    select_scale_from_cdf,
)
from .mesh import (
    boundary_patches,
    build_difference_structure,
    build_disk_mesh,
    load_mesh,
    save_mesh,
)
from .phantoms import (
    Inclusion,
    Phantom,
    difference_phantom,
    export_image,
    positive_phantom,
    rasterize,
    read_field,
    relative_error,
    two_inclusion_phantom,
    write_field,
)
from .solver import (
    SolverConfig,
    convergence_report,
    ias_run,
    write_convergence_csv,
    write_iteration_log,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

DEFAULTS = {
    "mesh": {
        "radius": "25",
        "simulation_edge": "1.9",
        "inversion_edge": "2.0",
    },
    "layout": {
        "sources": "16",
        "detectors": "16",
        "patch_width": "2.0",
        "detector_offset": "0.5",
        "strength": "1.0",
        "frequency_hz": "100e6",
    },
    "physics": {
        "refractive_index": "1.4",
        "alpha": "1.0",
    },
    "phantom": {
        "preset": "two-inclusion",
        "background_mua": "0.01",
        "background_mus": "1.0",
    },
    "noise": {
        "level": "0.004",
        "seed": "0",
    },
    "prior": {
        "kind": "uncorrelated",
        "mean_mua": "0.01",
        "mean_mus": "1.0",
    },
    "hyperprior": {
        "kind": "fixed",
        "level": "intermediate",
        "quantile": "0.95",
        "eta": "1e-4",
        "beta": "1.5",
    },
    "solver": {
        "eps_outer": "1e-5",
        "outer_patience": "3",
        "gn_tol": "1e-12",
        "max_outer": "100",
        "max_inner": "50",
        "max_halvings": "25",
        "floor_mua": "1e-5",
        "floor_mus": "1e-2",
    },
    "output": {
        "directory": "run",
        "image_size": "256",
        "clip_low": "1",
        "clip_high": "99",
    },
}

LEVELS = ("low", "intermediate", "high")

# scattering magnitude bounds per level for CDF selection
BOUND_PRESETS = {
    ("standard-gamma", "uncorrelated"): (0.3, 1.0, 10.0),
    ("standard-gamma", "difference"): (1.0, 5.0, 10.0),
    ("inverse-gamma", "uncorrelated"): (0.3, 1.0, 5.0),
    ("inverse-gamma", "difference"): (0.25, 1.0, 4.0),
}

# (scattering, absorption) rates per level; not CDF-derived
GAMMA_PRESETS = {
    "uncorrelated": ((1e-10, 1e-14), (2.5e-3, 2.5e-7), (0.25, 2.5e-3)),
    "difference": ((9e-4, 9e-8), (3.6e-3, 3.6e-7), (0.14, 1.4e-3)),
}

FIXED_STD = {"uncorrelated": (0.0025, 0.25), "difference": (0.001, 0.1)}

PRESET_PHANTOMS = {
    "two-inclusion": two_inclusion_phantom,
    "difference": difference_phantom,
    "positive": positive_phantom,
}


def _float(cp, section, key):
    raw = cp.get(section, key)
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"[{section}] {key} = {raw!r} is not a number") from None


def _int(cp, section, key):
    raw = cp.get(section, key)
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"[{section}] {key} = {raw!r} is not an integer") from None


def _opt_float(cp, section, key, default=None):
    return _float(cp, section, key) if cp.has_option(section, key) else default


def _positive(value, section, key):
    if not value > 0:
        raise ValidationError(f"[{section}] {key} must be positive, got {value}")
    return value


def load_config(path=None, overrides=None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_dict(DEFAULTS)
    if path is not None:
        if not os.path.isfile(path):
            raise ValidationError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ValidationError(f"cannot parse {path}: {exc}") from exc
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ValidationError(f"unknown config section [{section}]")
    for (section, key), value in (overrides or {}).items():
        cp.set(section, key, str(value))
    return cp


def config_echo(cp) -> dict:
    return {s: dict(cp.items(s)) for s in cp.sections()}


@dataclass
class RunConfig:
    """Validated, typed view of a configuration file."""

    raw: configparser.ConfigParser
    radius: float
    simulation_edge: float
    inversion_edge: float
    n_src: int
    n_det: int
    patch_width: float
    detector_offset: float
    strength: float
    omega: float
    phys: PhysicsConstants
    phantom: Phantom
    noise_level: float
    seed: int
    prior_kind: str
    means: tuple
    prior_std: tuple
    gauge_std: tuple
    hyperprior: str
    level: str
    solver: SolverConfig
    out: Path
    image_size: int
    clip: tuple

    @classmethod
    def from_parser(cls, cp) -> "RunConfig":
        radius = _positive(_float(cp, "mesh", "radius"), "mesh", "radius")
        sim_h = _positive(_float(cp, "mesh", "simulation_edge"), "mesh", "simulation_edge")
        inv_h = _positive(_float(cp, "mesh", "inversion_edge"), "mesh", "inversion_edge")

        n_src = _int(cp, "layout", "sources")
        n_det = _int(cp, "layout", "detectors")
        if n_src < 1 or n_det < 1:
            raise ValidationError("[layout] sources and detectors must be at least 1")
        width = _positive(_float(cp, "layout", "patch_width"), "layout", "patch_width")
        offset = _float(cp, "layout", "detector_offset")
        strength = _positive(_float(cp, "layout", "strength"), "layout", "strength")
        freq = _float(cp, "layout", "frequency_hz")
        if freq < 0:
            raise ValidationError(f"[layout] frequency_hz must be nonnegative, got {freq}")

        n_refr = _positive(_float(cp, "physics", "refractive_index"), "physics", "refractive_index")
        phys = PhysicsConstants(
            c=SPEED_OF_LIGHT / n_refr,
            alpha=_positive(_float(cp, "physics", "alpha"), "physics", "alpha"),
        )

        phantom = _parse_phantom(cp)

        level_noise = _positive(_float(cp, "noise", "level"), "noise", "level")
        seed = _int(cp, "noise", "seed")

        kind = cp.get("prior", "kind")
        if kind not in ("uncorrelated", "difference"):
            raise ValidationError(f"[prior] kind must be uncorrelated or difference, got {kind!r}")
        means = (
            _positive(_float(cp, "prior", "mean_mua"), "prior", "mean_mua"),
            _positive(_float(cp, "prior", "mean_mus"), "prior", "mean_mus"),
        )
        std = tuple(
            _positive(v, "prior", k)
            for v, k in (
                (_opt_float(cp, "prior", "std_mua", FIXED_STD[kind][0]), "std_mua"),
                (_opt_float(cp, "prior", "std_mus", FIXED_STD[kind][1]), "std_mus"),
            )
        )
        gauge = (
            _opt_float(cp, "prior", "gauge_std_mua", 10 * means[0]),
            _opt_float(cp, "prior", "gauge_std_mus", 10 * means[1]),
        )

        hyper = cp.get("hyperprior", "kind")
        if hyper not in ("fixed", "exponential", "standard-gamma", "inverse-gamma"):
            raise ValidationError(f"[hyperprior] kind {hyper!r} is not recognised")
        level = cp.get("hyperprior", "level")
        if level not in LEVELS:
            raise ValidationError(f"[hyperprior] level must be one of {LEVELS}, got {level!r}")

        sigma = _opt_float(cp, "solver", "constraint_sigma")
        solver = SolverConfig(
            eps_outer=_float(cp, "solver", "eps_outer"),
            outer_patience=_int(cp, "solver", "outer_patience"),
            gn_tol=_float(cp, "solver", "gn_tol"),
            max_outer=_int(cp, "solver", "max_outer"),
            max_inner=_int(cp, "solver", "max_inner"),
            max_halvings=_int(cp, "solver", "max_halvings"),
            constraint_sigma=sigma,
            floors=(_float(cp, "solver", "floor_mua"), _float(cp, "solver", "floor_mus")),
        )

        size = _int(cp, "output", "image_size")
        if size < 8:
            raise ValidationError(f"[output] image_size must be at least 8, got {size}")
        clip = (_float(cp, "output", "clip_low"), _float(cp, "output", "clip_high"))
        if not 0 <= clip[0] <= clip[1] <= 100:
            raise ValidationError(f"[output] clip percentiles out of order: {clip}")

        return cls(
            raw=cp,
            radius=radius,
            simulation_edge=sim_h,
            inversion_edge=inv_h,
            n_src=n_src,
            n_det=n_det,
            patch_width=width,
            detector_offset=offset,
            strength=strength,
            omega=2 * np.pi * freq,
            phys=phys,
            phantom=phantom,
            noise_level=level_noise,
            seed=seed,
            prior_kind=kind,
            means=means,
            prior_std=std,
            gauge_std=gauge,
            hyperprior=hyper,
            level=level,
            solver=solver,
            out=Path(cp.get("output", "directory")),
            image_size=size,
            clip=clip,
        )

    def layout(self, mesh):
        offset = 2 * np.pi * self.detector_offset / self.n_det
        return boundary_patches(
            mesh, self.n_src, self.n_det, self.patch_width, self.strength, self.omega, offset
        )


def _parse_phantom(cp) -> Phantom:
    bg = (
        _positive(_float(cp, "phantom", "background_mua"), "phantom", "background_mua"),
        _positive(_float(cp, "phantom", "background_mus"), "phantom", "background_mus"),
    )
    keys = sorted(
        (k for k in cp.options("phantom") if k.startswith("inclusion")),
        key=lambda k: (len(k), k),
    )
    if keys:
        incs = []
        for k in keys:
            parts = cp.get("phantom", k).split()
            if len(parts) != 6:
                raise ValidationError(
                    f"[phantom] {k} needs 'shape cx cy size d_mua d_mus', got {cp.get('phantom', k)!r}"
                )
            try:
                nums = [float(v) for v in parts[1:]]
            except ValueError:
                raise ValidationError(f"[phantom] {k} has non-numeric fields") from None
            incs.append(Inclusion((nums[0], nums[1]), nums[2], nums[3], nums[4], shape=parts[0]))
        return Phantom(bg, tuple(incs))
    preset = cp.get("phantom", "preset")
    if preset == "none":
        return Phantom(bg, ())
    if preset not in PRESET_PHANTOMS:
        raise ValidationError(
            f"[phantom] preset must be one of {sorted(PRESET_PHANTOMS) + ['none']}, got {preset!r}"
        )
    return PRESET_PHANTOMS[preset](bg)


def resolve_hyperpriors(cfg: RunConfig):
    """Per-class hyperprior specs (absorption, scattering) and a summary dict.

    Explicit ``gamma_*`` / ``vartheta_*`` keys win. Otherwise gamma/inverse
    gamma scales come from CDF selection at the magnitude bounds
    ``bound_mus`` (default: level preset) and ``bound_mua`` (default
    ``bound_mus / 100``).
    """
    cp = cfg.raw
    kind = cfg.hyperprior
    info = {"kind": kind, "level": cfg.level}
    if kind == "fixed":
        return (Fixed(), Fixed()), info
    li = LEVELS.index(cfg.level)
    if kind == "exponential":
        if cp.has_option("hyperprior", "bound_mus") or cp.has_option("hyperprior", "bound_mua"):
            raise ValidationError(
                "CDF selection not applicable to the exponential hyperprior; set gamma_mus/gamma_mua"
            )
        preset_s, preset_a = GAMMA_PRESETS[cfg.prior_kind][li]
        g_s = _opt_float(cp, "hyperprior", "gamma_mus", preset_s)
        g_a = _opt_float(cp, "hyperprior", "gamma_mua", preset_a)
        info.update(gamma_mua=g_a, gamma_mus=g_s)
        return (Exponential(g_a), Exponential(g_s)), info

    q = _float(cp, "hyperprior", "quantile")
    beta = _positive(_float(cp, "hyperprior", "beta"), "hyperprior", "beta")
    eta = _positive(_float(cp, "hyperprior", "eta"), "hyperprior", "eta")
    scales = []
    for cls_name in ("mua", "mus"):
        explicit = _opt_float(cp, "hyperprior", f"vartheta_{cls_name}")
        if explicit is not None:
            scales.append(_positive(explicit, "hyperprior", f"vartheta_{cls_name}"))
            info[f"vartheta_{cls_name}"] = explicit
            continue
        bound_s = _opt_float(cp, "hyperprior", "bound_mus")
        if bound_s is None:
            bound_s = BOUND_PRESETS[(kind, cfg.prior_kind)][li]
        bound = bound_s
        if cls_name == "mua":
            bound = _opt_float(cp, "hyperprior", "bound_mua", bound_s / 100)
        scale = select_scale_from_cdf(bound, q, kind, shape=beta)
        scales.append(scale)
        info[f"bound_{cls_name}"] = bound
        info[f"vartheta_{cls_name}"] = scale
    info["quantile"] = q
    if kind == "standard-gamma":
        info["eta"] = eta
        return (StandardGamma(eta, scales[0]), StandardGamma(eta, scales[1])), info
    info["beta"] = beta
    return (InverseGamma(beta, scales[0]), InverseGamma(beta, scales[1])), info


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _export_pair(field: OpticalField, mesh, out: Path, stem: str, cfg: RunConfig):
    for name, values in (("mua", field.mua), ("mus", field.mus)):
        export_image(values, mesh, out / f"{stem}_{name}.pgm", cfg.clip, cfg.image_size)


def cmd_simulate(cfg: RunConfig) -> dict:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_disk_mesh(cfg.radius, cfg.simulation_edge)
    layout = cfg.layout(mesh)
    truth = rasterize(cfg.phantom, mesh)
    forward = DOTForward(mesh, layout, cfg.phys)
    clean = MeasurementSet(forward.evaluate(truth.stacked), layout.n_src, layout.n_det)
    data = add_noise(clean, cfg.noise_level, cfg.seed)
    write_measurements(data, out / "data.csv")
    save_mesh(mesh, out / "simulation_mesh.txt")
    write_field(out / "truth.csv", mesh, truth)
    _export_pair(truth, mesh, out, "truth", cfg)
    manifest = {
        "command": "simulate",
        "config": config_echo(cfg.raw),
        "nodes": mesh.n,
        "elements": mesh.n_elements,
        "measurements": data.m,
        "snr_db": data.snr_db,
        "files": {
            "data": "data.csv",
            "mesh": "simulation_mesh.txt",
            "truth": "truth.csv",
        },
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _build_prior(cfg: RunConfig, mesh):
    var = tuple(s**2 for s in cfg.prior_std)
    if cfg.prior_kind == "uncorrelated":
        return UncorrelatedPrior.optical(mesh.n, *cfg.means, theta0=var)
    structure = build_difference_structure(mesh)
    gauge = tuple(s**2 for s in cfg.gauge_std)
    return DifferencePrior.optical(structure, *cfg.means, theta0=var, gauge_variances=gauge)


def cmd_reconstruct(cfg: RunConfig, data_path=None) -> dict:
    out = cfg.out
    data_path = Path(data_path) if data_path is not None else out / "data.csv"
    if not data_path.is_file():
        raise ValidationError(f"data file not found: {data_path}")
    data = read_measurements(data_path)
    if (data.n_src, data.n_det) != (cfg.n_src, cfg.n_det):
        raise ValidationError(
            f"{data_path} has {data.n_src}x{data.n_det} source/detector pairs, "
            f"config expects {cfg.n_src}x{cfg.n_det}"
        )
    if data.ce_diag is None:
        raise ValidationError(f"{data_path} carries no noise variances")
    specs, hyper_info = resolve_hyperpriors(cfg)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_disk_mesh(cfg.radius, cfg.inversion_edge)
    forward = DOTForward(mesh, cfg.layout(mesh), cfg.phys)
    prior = _build_prior(cfg, mesh)
    state = ias_run(data, forward, prior, specs, cfg.solver)
    iter_dir = out / "iterates"
    iter_dir.mkdir(exist_ok=True)
    for old in iter_dir.glob("iter_*.csv"):
        old.unlink()
    for t, x in enumerate(state.x_history):
        write_field(iter_dir / f"iter_{t:03d}.csv", mesh, OpticalField.from_stacked(x))
    result = OpticalField.from_stacked(state.x)
    save_mesh(mesh, out / "inversion_mesh.txt")
    write_field(out / "reconstruction.csv", mesh, result)
    write_iteration_log(state, out / "iterations.csv")
    _export_pair(result, mesh, out, "reconstruction", cfg)

    truth_files = {}
    sim_dir = data_path.parent
    if (sim_dir / "truth.csv").is_file() and (sim_dir / "simulation_mesh.txt").is_file():
        truth_files = {
            "truth": os.path.relpath(sim_dir / "truth.csv", out),
            "truth_mesh": os.path.relpath(sim_dir / "simulation_mesh.txt", out),
        }
    manifest = {
        "command": "reconstruct",
        "config": config_echo(cfg.raw),
        "prior": cfg.prior_kind,
        "hyperprior": hyper_info,
        "outer_iterations": state.t,
        "converged": state.converged,
        "stop_reason": state.reason,
        "final_objective": state.F_history[-1],
        "mua_range": [float(result.mua.min()), float(result.mua.max())],
        "mus_range": [float(result.mus.min()), float(result.mus.max())],
        "files": {
            "data": os.path.relpath(data_path, out),
            "mesh": "inversion_mesh.txt",
            "reconstruction": "reconstruction.csv",
            "iterations": "iterations.csv",
            "iterates": "iterates",
            **truth_files,
        },
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _load_run(run: Path):
    manifest_path = run / "manifest.json"
    if not manifest_path.is_file():
        raise ValidationError(f"missing files in {run}: manifest.json")
    manifest = _read_json(manifest_path)
    if manifest.get("command") != "reconstruct":
        raise ValidationError(f"{run} is not a reconstruction run")
    files = manifest["files"]
    needed = ["mesh", "reconstruction", "truth", "truth_mesh"]
    missing = [k for k in needed if k not in files or not (run / files[k]).is_file()]
    if missing:
        raise ValidationError(
            f"missing files in {run}: "
            + ", ".join(files.get(k, k) for k in missing)
        )
    return manifest


def cmd_report(runs, out: Path, reference=None, echo=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    table = {}
    summary = []
    for run in map(Path, runs):
        manifest = _load_run(run)
        files = manifest["files"]
        mesh = load_mesh(run / files["mesh"])
        rec = read_field(run / files["reconstruction"])
        true_mesh = load_mesh(run / files["truth_mesh"])
        truth = read_field(run / files["truth"])
        re = relative_error(truth, true_mesh, rec, mesh)
        kind = manifest["hyperprior"]["kind"]
        level = manifest["hyperprior"]["level"]
        row = table.setdefault(kind, {})
        for lv in LEVELS if kind == "fixed" else (level,):
            row[lv] = re
        entry = {"run": str(run), "kind": kind, "level": level, "re_mua": re[0], "re_mus": re[1]}

        iterates = sorted((run / files["iterates"]).glob("iter_*.csv"))
        # without an external reference the final iterate serves as x_MAP
        if len(iterates) >= (3 if reference is not None else 4):
            xs = [read_field(p).stacked for p in iterates]
            if reference is None:
                xs, ref = xs[:-1], xs[-1]
            else:
                ref = read_field(reference).stacked
            pairs, rate = convergence_report(xs, ref)
            name = f"convergence_{run.name}.csv"
            write_convergence_csv(pairs, rate, out / name)
            entry["convergence"] = name
            entry["rate"] = rate
        cfg = RunConfig.from_parser(load_config(overrides=_flatten(manifest["config"])))
        _export_pair(rec, mesh, out, run.name, cfg)
        summary.append(entry)

    with open(out / "relative_errors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["hyperprior"] + [f"{lv}_re_{c}" for lv in LEVELS for c in ("mua", "mus")]
        )
        for kind, row in table.items():
            cells = []
            for lv in LEVELS:
                cells += [f"{v:.4f}" for v in row[lv]] if lv in row else ["", ""]
            w.writerow([kind] + cells)
    report = {
        "command": "report",
        "config": echo or {},
        "runs": summary,
        "table": "relative_errors.csv",
    }
    _write_json(out / "report.json", report)
    return report


def _flatten(echo: dict) -> dict:
    return {(s, k): v for s, items in echo.items() for k, v in items.items()}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="noise seed ([noise] seed)")
    common.add_argument("--out", help="output directory ([output] directory)")
    common.add_argument("--max-outer", type=int, help="outer iteration cap ([solver] max_outer)")
    common.add_argument(
        "--hyperprior",
        choices=["fixed", "exponential", "standard-gamma", "inverse-gamma"],
        help="[hyperprior] kind",
    )
    common.add_argument("--level", choices=LEVELS, help="[hyperprior] level")
    common.add_argument("--prior", choices=["uncorrelated", "difference"], help="[prior] kind")

    parser = argparse.ArgumentParser(
        prog="hierdot", description="Hierarchical-prior reconstruction for diffuse optical tomography"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate noisy data from a phantom")
    rec = sub.add_parser("reconstruct", parents=[common], help="compute a MAP estimate")
    rec.add_argument("--data", help="measurement CSV (default: <out>/data.csv)")
    rep = sub.add_parser("report", parents=[common], help="tabulate errors and convergence")
    rep.add_argument("runs", nargs="+", help="reconstruction run directories")
    rep.add_argument("--reference", help="nodal field used as the convergence reference")
    return parser


def _overrides(args) -> dict:
    mapping = {
        "seed": ("noise", "seed"),
        "out": ("output", "directory"),
        "max_outer": ("solver", "max_outer"),
        "hyperprior": ("hyperprior", "kind"),
        "level": ("hyperprior", "level"),
        "prior": ("prior", "kind"),
    }
    return {
        key: getattr(args, attr)
        for attr, key in mapping.items()
        if getattr(args, attr, None) is not None
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = load_config(args.config, _overrides(args))
        cfg = RunConfig.from_parser(cp)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, args.data)
        else:
            cmd_report(args.runs, cfg.out, args.reference, config_echo(cp))
    except ValidationError as exc:
        _fail("validation", exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        _fail("numerical", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        _fail("validation", exc)
        return EXIT_VALIDATION
    print(json.dumps({"status": "ok", "command": args.command, "out": str(cfg.out)}))
    return EXIT_OK


def _fail(kind, exc):
    print(json.dumps({"status": "error", "kind": kind, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
