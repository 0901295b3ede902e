"""Command-line front end: ``anderson-lab VERB --config PATH [overrides]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .eigen import certify
from .errors import (
    AndersonLabError,
    DegenerateLimit,
    EmptyDomain,
    InfeasibleSpec,
    InsufficientSamples,
    ResolutionTooCoarse,
)
from .experiments import (
    ExperimentConfig,
    clt_diagnostics,
    concentration_profile,
    eigenfunction_convergence,
    energy_decomposition,
    exact_oracle,
    mean_convergence,
    run_campaign,
)
from .geometry import ShapeSpec, discretize, path_lattice
from .operator import assemble
from .potential import PotentialSpec, ProfileFn, sample
from .reference import homogenized_spectrum

log = logging.getLogger("anderson_lab")

VERBS = ("discretize", "solve", "reference", "campaign", "oracle", "report")
EXIT_OK, EXIT_USAGE, EXIT_DIAGNOSTICS, EXIT_CONFIG = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anderson-lab", description="Lattice Anderson Hamiltonian laboratory.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--eps", type=float, action="append", help="lattice scale; repeat for a ladder")
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _finite(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump(obj, path: Path | None = None) -> str:
    text = json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _load_config(args) -> dict:
    if args.config is None:
        if args.verb == "report":
            return {}
        raise UsageError(f"{args.verb} needs --config")
    if not args.config.is_file():
        raise UsageError(f"config file {args.config} not found")
    try:
        cfg = json.loads(args.config.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.realizations is not None:
        cfg["realizations"] = args.realizations
    if args.eps:
        cfg["eps"] = args.eps if args.verb == "campaign" else args.eps[0]
    if args.threads is not None:
        cfg["threads"] = args.threads
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out if args.out is not None else Path(cfg.get("out") or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scalar_eps(cfg) -> float:
    eps = cfg["eps"]
    return float(eps[0] if isinstance(eps, list) else eps)


def _lattice(cfg):
    if "path_sites" in cfg:
        return path_lattice(int(cfg["path_sites"]), _scalar_eps(cfg))
    return discretize(ShapeSpec.from_dict(cfg["shape"]), _scalar_eps(cfg))


def write_manifest(out: Path, verb: str, cfg: dict) -> dict:
    import matplotlib
    import scipy

    blob = json.dumps(cfg, sort_keys=True).encode()
    manifest = {
        "verb": verb,
        "config": cfg,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": cfg.get("seed"),
        "versions": {
            "anderson_lab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
        },
    }
    _dump(manifest, out / "manifest.json")
    return manifest


# -- verbs -------------------------------------------------------------------


def cmd_discretize(cfg, out: Path) -> int:
    lat = _lattice(cfg)
    lat.to_csv(out / "sites.csv")
    summary = {"eps": lat.eps, "dim": lat.dim, "n_sites": lat.n, "first": lat.sites[0].tolist(), "last": lat.sites[-1].tolist()}
    _dump(summary, out / "lattice.json")
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def cmd_solve(cfg, out: Path) -> int:
    lat = _lattice(cfg)
    spec = PotentialSpec.from_dict(cfg["potential"])
    seed = int(cfg.get("seed", 0))
    k = int(cfg.get("k", 1))
    field = sample(spec, lat, seed)
    res, cert = certify(assemble(lat, field), min(k, lat.n))
    result = {
        "eps": lat.eps,
        "n_sites": lat.n,
        "seed": seed,
        "potential_hash": spec.hash(),
        **res.to_dict(),
        "eigenvalues": [float(v) for v in res.eigenvalues[:k]],
        "residuals": [float(v) for v in res.residuals[:k]],
        "gap": {"k": cert.k, "below": cert.gap_below, "above": cert.gap_above, "simple": cert.simple},
    }
    _dump(result, out / "solve.json")
    sys.stdout.write(_dump(result))
    return EXIT_OK


def cmd_reference(cfg, out: Path) -> int:
    shape = ShapeSpec.from_dict(cfg["shape"])
    U = ProfileFn.from_dict(cfg["U"] if "U" in cfg else cfg["potential"]["U"])
    spec = homogenized_spectrum(shape, U, int(cfg.get("k", 1)), float(cfg["eps_ref"]), levels=int(cfg.get("levels", 3)))
    spec.save(out / "reference")
    result = {
        "eigenvalues": spec.eigenvalues.tolist(),
        "simple": [bool(s) for s in spec.simple],
        "level_eps": spec.level_eps,
        "level_eigenvalues": spec.level_eigenvalues.tolist(),
    }
    sys.stdout.write(_dump(result))
    return EXIT_OK


def cmd_oracle(cfg, out: Path) -> int:
    lat = _lattice(cfg)
    report = exact_oracle(PotentialSpec.from_dict(cfg["potential"]), lat, int(cfg.get("k", 1)))
    (out / "oracle.json").write_text(report.to_json() + "\n")
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_campaign(cfg, out: Path) -> int:
    config = ExperimentConfig.from_dict(cfg)
    ladder = run_campaign(config)
    for r, st in enumerate(ladder):
        st.write_samples_csv(out / f"samples_rung{r}.csv")
    summary = {"config": config.to_dict(runtime=False), "rungs": [st.to_dict() for st in ladder]}
    diagnostics, concentration = [], []
    for st in ladder:
        try:
            diagnostics.append(clt_diagnostics(st))
        except InsufficientSamples as exc:
            diagnostics.append({"eps": st.eps, "skipped": str(exc), "passed": True})
        try:
            prof = concentration_profile(st)
            concentration.append({"eps": st.eps, "c_hat": prof.c_hat, "c_lsq": prof.c_lsq, "t_star": prof.t_star,
                                  "max_deviation": prof.max_deviation})
        except InsufficientSamples as exc:
            concentration.append({"eps": st.eps, "skipped": str(exc)})
    summary["diagnostics"] = diagnostics
    summary["concentration"] = concentration
    summary["energy"] = {str(k): energy_decomposition(ladder, k) for k in config.indices}
    summary["eigenfunctions"] = {str(k): eigenfunction_convergence(ladder, k) for k in config.indices}
    summary["mean_convergence"] = {str(k): mean_convergence(ladder, k) for k in config.indices}
    _dump(summary, out / "summary.json")
    render_report(out)
    passed = all(d["passed"] for d in diagnostics)
    log.info("campaign finished: diagnostics %s", "passed" if passed else "FAILED")
    return EXIT_OK if passed else EXIT_DIAGNOSTICS


def _read_samples(path: Path, indices) -> tuple[np.ndarray, np.ndarray]:
    lam, kin = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = int(row["realization"])
            lam.setdefault(key, {})[int(row["k"])] = float(row["lambda"])
            kin.setdefault(key, {})[int(row["k"])] = float(row["T"])
    ids = sorted(lam)
    return (np.array([[lam[i][k] for k in indices] for i in ids]), np.array([[kin[i][k] for k in indices] for i in ids]))


def render_report(out: Path) -> list:
    """Render SVG figures from a campaign directory containing ``summary.json`` and sample CSVs."""
    from .plotting import fluctuation_histogram, variance_ladder

    summary = json.loads((out / "summary.json").read_text())
    indices = summary["config"]["indices"]
    eps, lam_var, kin_var, written = [], [], [], []
    for r, rung in enumerate(summary["rungs"]):
        lam, kin = _read_samples(out / f"samples_rung{r}.csv", indices)
        e, d = rung["eps"], rung["dim"]
        scaled = (lam - lam.mean(axis=0)) * e ** (-d / 2)
        written.append(fluctuation_histogram(scaled, indices, e, out / f"histogram_rung{r}.svg", rung["predicted_cov"]))
        eps.append(e)
        lam_var.append(lam.var(axis=0, ddof=1))
        kin_var.append(kin[:, 0].var(ddof=1))
    if summary["rungs"]:
        dim = summary["rungs"][0]["dim"]
        written.append(variance_ladder(eps, np.array(lam_var), indices, dim, out / "variance_ladder.svg", np.array(kin_var)))
    return written


def cmd_report(cfg, out: Path) -> int:
    if not (out / "summary.json").exists():
        raise UsageError(f"{out} does not contain a campaign summary.json")
    for p in render_report(out):
        sys.stdout.write(f"{p}\n")
    return EXIT_OK


COMMANDS = {
    "discretize": cmd_discretize,
    "solve": cmd_solve,
    "reference": cmd_reference,
    "campaign": cmd_campaign,
    "oracle": cmd_oracle,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        out = _out_dir(args, cfg)
        if args.verb != "report":
            log.info("resolved config: %s", json.dumps(cfg, sort_keys=True))
            write_manifest(out, args.verb, cfg)
        return COMMANDS[args.verb](cfg, out)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (InfeasibleSpec, DegenerateLimit, EmptyDomain, ResolutionTooCoarse) as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_CONFIG
    except (KeyError, ValueError, TypeError) as exc:
        sys.stderr.write(f"invalid configuration: {exc!r}\n")
        return EXIT_USAGE
    except AndersonLabError as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
