"""``hemiparam`` command line: parameterize, decompose, reconstruct, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import METHODS, ConfigError, RunConfig, dump_config, parse_config, validate
from .harmonics import HarmonicCoeffs, decompose, reconstruct, sample_uniform_hemispheroid
from .mesh import TriMesh, load_mesh, save_mesh
from .metrics import a_rmse, angle_distortion, area_distortion, write_histogram_csv, write_json
from .projection import to_eta_phi
from .registration import RigidTransform, Spheroid, register, size_hemispheroid

logger = logging.getLogger("hemiparam")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


class Run:
    """Tracks written artifacts and stage timings for one invocation."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []
        self.timings: dict[str, float] = {}

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def wrote(self, path: Path) -> Path:
        self.written.append(path)
        return path

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t

    def mark_partial(self) -> None:
        for p in self.written:
            if p.exists():
                p.replace(p.with_name(p.name + ".partial"))


def versions() -> dict:
    return {"hemiparam": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def artifact_stem(cfg: RunConfig) -> str:
    return f"{Path(cfg.input).stem}_{cfg.method}_n{cfg.n_max}"


# ------------------------------------------------------------ pipeline pieces


def parameterize(mesh: TriMesh, s: Spheroid, cfg: RunConfig) -> np.ndarray:
    """Hemispheroid positions of the registered mesh vertices for ``cfg.method``."""
    if cfg.method == "tutte":
        from .tutte import hemispheroidal_tutte

        return hemispheroidal_tutte(mesh, s).hemi
    if cfg.method == "conformal":
        from .conformal import hemispheroidal_conformal

        return hemispheroidal_conformal(mesh, s).hemi
    if cfg.method == "area":
        from .area import hemispheroidal_area_preserving

        return hemispheroidal_area_preserving(mesh, s).hemi
    from .balanced import hemispheroidal_balanced

    return hemispheroidal_balanced(mesh, s, cfg.weights()).hemi


def _prepare(cfg: RunConfig, run: Run):
    with run.stage("load"):
        mesh = load_mesh(cfg.input, weld=cfg.weld)
    with run.stage("register"):
        registered, transform = register(mesh)
        s = Spheroid(1.0, cfg.c) if cfg.c is not None else size_hemispheroid(registered)
    return mesh, registered, transform, s


def _distortion_payload(mesh: TriMesh, image) -> tuple[dict, dict]:
    reports = {"angle_deg": angle_distortion(mesh, image), "area_log": area_distortion(mesh, image)}
    return {k: r.summary() for k, r in reports.items()}, reports


def _param_info(cfg, s, transform, registered_name, param_name) -> dict:
    return {
        "method": cfg.method,
        "weights": None if cfg.method != "balanced" else [cfg.alpha, cfg.beta, cfg.gamma],
        "spheroid": s.to_dict(),
        "eps_eta": cfg.eps_eta,
        "registration": transform.to_dict(),
        "registered_mesh": registered_name,
        "param_mesh": param_name,
    }


def _reconstruction(coeffs: HarmonicCoeffs, registered: TriMesh, coords, cfg: RunConfig) -> TriMesh:
    """Reconstruction in the registered frame, at the mapped vertices or on a uniform sample."""
    if cfg.samples:
        (eta, phi), template = sample_uniform_hemispheroid(coeffs.spheroid, cfg.samples)
        return template.with_vertices(reconstruct(coeffs, eta, phi))
    return registered.with_vertices(reconstruct(coeffs, *coords))


def cmd_run(cfg: RunConfig, run: Run) -> dict:
    mesh, registered, transform, s = _prepare(cfg, run)
    stem = artifact_stem(cfg)
    save_mesh(registered, run.wrote(run.path(f"{stem}_registered.obj")))
    with run.stage("parameterize"):
        hemi = parameterize(registered, s, cfg)
    param = registered.with_vertices(hemi)
    save_mesh(param, run.wrote(run.path(f"{stem}_param.obj")))
    with run.stage("decompose"):
        coeffs = decompose(hemi, registered, s, cfg.n_max, cfg.eps_eta, transform)
    coeffs.save(run.wrote(run.path(f"{stem}_coeffs.json")))
    with run.stage("reconstruct"):
        coords = to_eta_phi(hemi, s, cfg.eps_eta)
        recon = _reconstruction(coeffs, registered, coords, cfg)
        recon_original = recon.with_vertices(transform.inverse().apply(recon.vertices))
    save_mesh(recon_original, run.wrote(run.path(f"{stem}_recon.obj")))
    with run.stage("metrics"):
        summary, reports = _distortion_payload(registered, hemi)
        metrics = {
            "method": cfg.method,
            "spheroid": s.to_dict(),
            "n_max": cfg.n_max,
            "fit_residual_rms": coeffs.residual_rms,
            "a_rmse": a_rmse(mesh, recon_original, normalize=not cfg.absolute_distance),
            "a_rmse_normalized": not cfg.absolute_distance,
            "distortion": summary,
        }
    write_json(run.wrote(run.path(f"{stem}_metrics.json")), metrics)
    write_histogram_csv(run.wrote(run.path(f"{stem}_metrics.csv")), reports)
    return {"spheroid": s.to_dict(), "registration": transform.to_dict(), "a_rmse": metrics["a_rmse"]}


def cmd_param(cfg: RunConfig, run: Run) -> dict:
    _, registered, transform, s = _prepare(cfg, run)
    stem = f"{Path(cfg.input).stem}_{cfg.method}"
    reg_path = run.wrote(run.path(f"{stem}_registered.obj"))
    save_mesh(registered, reg_path)
    with run.stage("parameterize"):
        hemi = parameterize(registered, s, cfg)
    par_path = run.wrote(run.path(f"{stem}_param.obj"))
    save_mesh(registered.with_vertices(hemi), par_path)
    info = _param_info(cfg, s, transform, reg_path.name, par_path.name)
    with run.stage("metrics"):
        info["distortion"], reports = _distortion_payload(registered, hemi)
    write_json(run.wrote(run.path(f"{stem}_param.json")), info)
    write_histogram_csv(run.wrote(run.path(f"{stem}_distortion.csv")), reports)
    return {"spheroid": s.to_dict()}


def _load_param_info(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        info = json.load(fh)
    registered = load_mesh(path.parent / info["registered_mesh"])
    param = load_mesh(path.parent / info["param_mesh"])
    if param.n_faces != registered.n_faces or not np.array_equal(param.faces, registered.faces):
        raise ValueError("parameterized and registered meshes have different connectivity")
    sp = info["spheroid"]
    return info, registered, param, Spheroid(sp["a"], sp["c"]), RigidTransform.from_dict(info["registration"])


def cmd_decompose(args, cfg: RunConfig, run: Run) -> dict:
    with run.stage("load"):
        info, registered, param, s, transform = _load_param_info(args.param)
    with run.stage("decompose"):
        coeffs = decompose(param.vertices, registered, s, cfg.n_max, info.get("eps_eta", cfg.eps_eta), transform)
    out = run.wrote(Path(args.output) if args.output else run.path(f"{Path(args.param).stem}_n{cfg.n_max}_coeffs.json"))
    coeffs.save(out)
    return {"coefficients": str(out), "fit_residual_rms": coeffs.residual_rms}


def cmd_reconstruct(args, cfg: RunConfig, run: Run) -> dict:
    with run.stage("load"):
        coeffs = HarmonicCoeffs.load(args.coeffs)
    n_upto = coeffs.n_max if args.n_upto is None else args.n_upto
    with run.stage("reconstruct"):
        if args.param:
            info, registered, param, s, _ = _load_param_info(args.param)
            coords = to_eta_phi(param.vertices, coeffs.spheroid, coeffs.eps_eta)
            mesh = registered.with_vertices(reconstruct(coeffs, *coords, n_upto=n_upto))
        else:
            count = cfg.samples or 10000
            (eta, phi), template = sample_uniform_hemispheroid(coeffs.spheroid, count)
            mesh = template.with_vertices(reconstruct(coeffs, eta, phi, n_upto=n_upto))
        if not args.registered_frame:
            mesh = mesh.with_vertices(coeffs.registration.inverse().apply(mesh.vertices))
    out = run.wrote(Path(args.output) if args.output else run.path(f"{Path(args.coeffs).stem}_recon_n{n_upto}.obj"))
    save_mesh(mesh, out)
    return {"mesh": str(out), "n_upto": n_upto}


def cmd_metrics(args, cfg: RunConfig, run: Run) -> dict:
    with run.stage("load"):
        ref = load_mesh(args.reference, weld=cfg.weld)
        other = load_mesh(args.mesh, weld=cfg.weld)
    with run.stage("metrics"):
        payload = {"a_rmse": a_rmse(ref, other, normalize=not cfg.absolute_distance), "a_rmse_normalized": not cfg.absolute_distance}
        reports = {}
        if args.distortion:
            if not np.array_equal(ref.faces, other.faces):
                raise ValueError("distortion metrics need meshes with identical connectivity")
            payload["distortion"], reports = _distortion_payload(ref, other.vertices)
    stem = args.stem or f"{Path(args.reference).stem}_vs_{Path(args.mesh).stem}"
    write_json(run.wrote(run.path(f"{stem}_metrics.json")), payload)
    if reports:
        write_histogram_csv(run.wrote(run.path(f"{stem}_metrics.csv")), reports)
    return payload


def cmd_optimize_c(cfg: RunConfig, run: Run) -> dict:
    from .optimize import optimize_radius_c, write_curve_csv

    _, registered, _, _ = _prepare(cfg, run)
    with run.stage("optimize"):
        c_star, curve = optimize_radius_c(
            registered, (cfg.c_min, cfg.c_max), cfg.n_max_probe, eps_eta=cfg.eps_eta, with_armse=cfg.with_armse, jobs=cfg.jobs
        )
    stem = Path(cfg.input).stem
    write_curve_csv(run.wrote(run.path(f"{stem}_radius_curve.csv")), curve)
    result = {"c_star": c_star, "n_max_probe": cfg.n_max_probe, "samples": len(curve)}
    write_json(run.wrote(run.path(f"{stem}_radius.json")), result)
    return result


def cmd_optimize_weights(cfg: RunConfig, run: Run) -> dict:
    from .optimize import optimize_weights

    _, registered, _, s = _prepare(cfg, run)
    with run.stage("optimize"):
        w, err, n = optimize_weights(registered, s, cfg.n_max_probe, eps_eta=cfg.eps_eta)
    result = {"alpha": w.alpha, "beta": w.beta, "gamma": w.gamma, "a_rmse": err, "evaluations": n, "spheroid": s.to_dict()}
    write_json(run.wrote(run.path(f"{Path(cfg.input).stem}_weights.json")), result)
    return result


# ------------------------------------------------------------ argument parsing


def _common(p: argparse.ArgumentParser, pipeline: bool = True) -> None:
    p.add_argument("--config", help="TOML file with run settings; flags override it")
    p.add_argument("--output", dest="output_dir", help="output directory (default: out)")
    p.add_argument("--jobs", type=int, help="worker cap for parallel searches")
    p.add_argument("--weld", action="store_true", default=None, help="merge duplicate vertices on load")
    p.add_argument("--absolute-distance", action="store_true", default=None, help="report A-RMSE without normalization")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if pipeline:
        p.add_argument("--input", help="input mesh (.obj, .ply, .off)")
        p.add_argument("--method", help=f"one of: {', '.join(METHODS)} (default: area)")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--c-value", type=float, help="polar semiaxis c (default: sized from the mesh)")
        p.add_argument("--eps-eta", type=float, help="clamp keeping the polar angle off the rim (default: pi/160)")
        p.add_argument("--n-max", type=int, help="maximum harmonic degree (default: 20)")
        p.add_argument("--samples", type=int, help="reconstruct on this many uniform points (default: mapped vertices)")
        p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hemiparam", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hemiparam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="register, parameterize, decompose, reconstruct, evaluate"))
    _common(sub.add_parser("param", help="register and parameterize onto the hemispheroid"))

    p = sub.add_parser("decompose", help="harmonic coefficients from a parameterization")
    _common(p)
    p.add_argument("--param", required=True, help="parameterization JSON written by 'param'")
    p.add_argument("--coeffs-out", dest="coeffs_output", help="coefficient file path")

    p = sub.add_parser("reconstruct", help="evaluate a coefficient file")
    _common(p)
    p.add_argument("--coeffs", required=True)
    p.add_argument("--n-upto", type=int)
    p.add_argument("--param", help="reconstruct at the vertices of this parameterization (else on a uniform sample)")
    p.add_argument("--registered-frame", action="store_true", help="skip mapping back to the original pose")
    p.add_argument("--mesh-out", dest="mesh_output", help="output mesh path")

    p = sub.add_parser("metrics", help="A-RMSE and distortion between two meshes")
    _common(p, pipeline=False)
    p.add_argument("--reference", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--distortion", action="store_true", help="also report angle/area distortion (same connectivity)")
    p.add_argument("--stem")

    p = sub.add_parser("optimize-c", help="scan the polar semiaxis for the most orthogonal basis")
    _common(p)
    p.add_argument("--n-max-probe", type=int)
    p.add_argument("--c-min", type=float)
    p.add_argument("--c-max", type=float)
    p.add_argument("--with-armse", action="store_true", default=None)

    p = sub.add_parser("optimize-weights", help="balance weights minimizing reconstruction error")
    _common(p)
    p.add_argument("--n-max-probe", type=int)
    return parser


FLAG_TO_FIELD = {
    "input": "input",
    "method": "method",
    "alpha": "alpha",
    "beta": "beta",
    "gamma": "gamma",
    "c_value": "c",
    "eps_eta": "eps_eta",
    "n_max": "n_max",
    "samples": "samples",
    "output_dir": "output",
    "seed": "seed",
    "weld": "weld",
    "absolute_distance": "absolute_distance",
    "jobs": "jobs",
    "n_max_probe": "n_max_probe",
    "c_min": "c_min",
    "c_max": "c_max",
    "with_armse": "with_armse",
}


def config_from_args(args) -> RunConfig:
    overrides = {field: getattr(args, flag) for flag, field in FLAG_TO_FIELD.items() if hasattr(args, flag)}
    need_input = args.command in ("run", "param", "optimize-c", "optimize-weights")
    return validate(parse_config(args.config, overrides), need_input=need_input)


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    _configure_logging(args.verbose)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"hemiparam: configuration error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.command == "decompose":
        args.output = args.coeffs_output
    elif args.command == "reconstruct":
        args.output = args.mesh_output

    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = Run(out_dir)
    handlers = {
        "run": lambda: cmd_run(cfg, run),
        "param": lambda: cmd_param(cfg, run),
        "decompose": lambda: cmd_decompose(args, cfg, run),
        "reconstruct": lambda: cmd_reconstruct(args, cfg, run),
        "metrics": lambda: cmd_metrics(args, cfg, run),
        "optimize-c": lambda: cmd_optimize_c(cfg, run),
        "optimize-weights": lambda: cmd_optimize_weights(cfg, run),
    }
    t0 = time.perf_counter()
    try:
        result = handlers[args.command]()
    except StageError as exc:
        run.mark_partial()
        print(f"hemiparam: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # anything outside a labelled stage
        run.mark_partial()
        print(f"hemiparam: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    run.timings["total"] = time.perf_counter() - t0

    manifest = {
        "command": args.command,
        "config": cfg.to_dict(),
        "config_toml": dump_config(cfg),
        "versions": versions(),
        "timings_s": run.timings,
        "artifacts": [p.name for p in run.written],
        "result": result,
        "cwd": os.getcwd(),
    }
    if args.command == "run":
        name = f"{artifact_stem(cfg)}_manifest.json"
    else:
        name = f"{Path(cfg.input).stem if cfg.input else 'hemiparam'}_{args.command}_manifest.json"
    write_json(run.path(name), manifest)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
