"""Config-driven runner: ``annealed-langevin run <config.json> [--mode ...] [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 runtime failure (or failed verification), 2 invalid config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bounds import (gaussian_compact_structure, law_hessian_band, lsi_proposition_bounds, reports_to_csv,
                     safe_profile, score_sup_bound, wellposedness_report)
from .bounds.poincare import METHODS, best_conditional_poincare
from .bounds.report import Assumption, BoundReport
from .diagnostics import StudyTemplate, bias_scaling_study
from .errors import ConfigError, DomainError, NoApplicableBoundError
from .interpolation import InterpolationLaw, SnisConfig, conditional_log_density, quadrature_log_density
from .measures import radial_grid, verify_profile
from .oracle import finite_difference, poincare_of_log_density
from .sampler import SdeRun, run_annealed, write_snapshot_csv, write_terminal_csv
from .schedule import QuadraticPiecewise

MODES = ("bounds", "sample", "verify", "study", "oracle")
_SECTION = {"bounds": "bounds", "sample": "sampler", "verify": "verify", "study": "study", "oracle": "oracle"}

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["seed", "law"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "output_dir": {"type": "string"},
        "modes": {"type": "array", "items": {"enum": list(MODES)}, "uniqueItems": True},
        "law": {
            "type": "object",
            "required": ["target", "base", "schedule"],
            "additionalProperties": False,
            "properties": {
                "target": {"type": "object", "required": ["family"]},
                "base": {"type": "object", "required": ["family"]},
                "schedule": {"type": "object", "required": ["family"]},
            },
        },
        "sampler": {
            "type": "object",
            "required": ["steps", "chains"],
            "additionalProperties": False,
            "properties": {
                "steps": _POS_INT,
                "chains": _POS_INT,
                "eps_end": {"type": ["number", "null"], "minimum": 0},
                "snapshot_steps": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "snis_samples": _POS_INT,
                "snis_representation": {"enum": ["target", "base", "mixture", "auto"]},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_grid": {"oneOf": [{"type": "integer", "minimum": 2},
                                     {"type": "array", "items": _NUM, "minItems": 1}]},
                "methods": {"type": "array", "items": {"enum": list(METHODS)}},
                "params": {"type": "object"},
            },
        },
        "study": {
            "type": "object",
            "required": ["kappas"],
            "additionalProperties": False,
            "properties": {
                "kappas": {"type": "array", "items": _NUM},
                "chains": _POS_INT,
                "step": {"type": "number", "exclusiveMinimum": 0},
                "eps_end": {"type": ["number", "null"], "minimum": 0},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "points": _POS_INT,
                "radial_points": _POS_INT,
                "r_max": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t": {"type": "array", "items": _NUM, "minItems": 1},
                "x": {"type": "array", "items": _NUM, "minItems": 1},
                "grid": _POS_INT,
            },
        },
    },
}


def _fmt(v) -> str:
    return "%.17g" % v


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def load_config(path, modes=None) -> dict:
    """Read and validate a config. Raises ConfigError with the offending field path."""
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found", "<file>") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "<file>") from None
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message, _json_path(exc)) from None
    modes = modes or cfg.get("modes") or [m for m in MODES if _SECTION[m] in cfg]
    if "study" in modes:
        for i, k in enumerate(cfg.get("study", {}).get("kappas", [])):
            if not 0.0 < k < 0.5:
                raise ConfigError("kappa must lie in (0, 1/2) for study mode", f"study/kappas/{i}")
        if "kappa" in cfg and not 0.0 < cfg["kappa"] < 0.5:
            raise ConfigError("kappa must lie in (0, 1/2) for study mode", "kappa")
        if "study" not in cfg:
            raise ConfigError("study mode needs a 'study' section", "study")
    if "sample" in modes and ("sampler" not in cfg or "kappa" not in cfg):
        raise ConfigError("sample mode needs 'kappa' and a 'sampler' section", "sampler")
    try:
        law = InterpolationLaw.from_json(cfg["law"])
    except DomainError as exc:
        raise ConfigError(str(exc), "law") from None
    cfg["_law"] = law
    cfg["_modes"] = list(modes)
    return cfg


# --------------------------------------------------------------------------
# modes


def _t_grid(cfg, T):
    spec = cfg.get("bounds", {}).get("t_grid", 11)
    if isinstance(spec, int):
        return [float(t) for t in np.linspace(0.0, T, spec)]
    for t in spec:
        if not 0.0 <= t <= T:
            raise ConfigError(f"t={t} outside [0, {T}]", "bounds/t_grid")
    return [float(t) for t in spec]


def _band_report(law, lam) -> BoundReport:
    band = law_hessian_band(law, lam)
    ok = math.isfinite(band.lipschitz_estimate)
    return BoundReport("hessian_band.lipschitz", band.lipschitz_estimate,
                       {"lower": band.lower, "upper": band.upper}, (0.0, 1.0) if ok else None,
                       assumptions=[Assumption("finite_band", ok, band.width)],
                       trace={k: list(v) for k, v in band.branches.items()})


def mode_bounds(cfg, out: Path) -> list:
    law = cfg["_law"]
    section = cfg.get("bounds", {})
    methods = section.get("methods", list(METHODS))
    params = section.get("params", {})
    prof_W, prof_U = safe_profile(law.base), safe_profile(law.target)
    rows, full = [], []
    for t in _t_grid(cfg, law.schedule.T):
        lam = law.lam(t)
        try:
            rows.append((t, score_sup_bound(prof_W, prof_U, lam)))
        except NoApplicableBoundError:
            pass
        rows.append((t, _band_report(law, lam)))
        if 0.0 < lam < 1.0 and prof_W is not None and prof_U is not None:
            _, reports = best_conditional_poincare(prof_W, prof_U, lam, params, methods)
            rows.extend((t, r) for r in reports)
    if "kappa" in cfg:
        kappa = cfg["kappa"]
        rows.append((None, wellposedness_report(law, kappa)))
        structure = gaussian_compact_structure(law)
        if structure is not None and isinstance(law.schedule, QuadraticPiecewise) and 0 < kappa < 0.5:
            sigma2, tau2, R, mirrored = structure
            if not mirrored and tau2 >= R * R:
                rows.append((None, lsi_proposition_bounds("convolved", kappa=kappa, sigma2=sigma2, tau2=tau2,
                                                          R=R, T=law.schedule.T, d=law.dim)))
    for t, r in rows:
        d = r.to_dict()
        d["t"] = t
        full.append(d)
    (out / "bounds.csv").write_text(reports_to_csv(rows))
    (out / "bounds.json").write_text(json.dumps(full, indent=1, sort_keys=True) + "\n")
    return ["bounds.csv", "bounds.json"]


def _sde_run(cfg, seed) -> SdeRun:
    s = cfg["sampler"]
    snis = SnisConfig(n=s.get("snis_samples", 20000), seed=seed,
                      representation=s.get("snis_representation", "target"))
    return SdeRun(cfg["_law"], cfg["kappa"], s["steps"], s["chains"], seed, s.get("eps_end"),
                  tuple(s.get("snapshot_steps", ())), snis)


def mode_sample(cfg, out: Path) -> list:
    batch = run_annealed(_sde_run(cfg, cfg["seed"]))
    write_terminal_csv(batch, out / "terminal.csv")
    files = ["terminal.csv"]
    if batch.snapshots:
        write_snapshot_csv(batch, out / "snapshots.csv")
        files.append("snapshots.csv")
    return files


def mode_study(cfg, out: Path) -> list:
    s = cfg["study"]
    template = StudyTemplate(chains=s.get("chains", 100_000), seed=cfg["seed"], step=s.get("step", 0.05),
                             eps_end=s.get("eps_end"))
    res = bias_scaling_study(cfg["_law"], s["kappas"], template)
    (out / "study.csv").write_text(res.to_csv())
    summary = {"slope": res.slope, "intercept": res.intercept, "residuals": [float(r) for r in res.residuals],
               "kl_label": res.kl_label,
               "rows": [{"kappa": r.kappa, "steps": r.steps, "fine_bias": r.fine_bias, "floor": r.floor,
                         "kl_stderr": r.kl_stderr, "error": r.error} for r in res.rows]}
    (out / "study.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=str) + "\n")
    return ["study.csv", "study.json"]


def _fd_hessian(law, lam, x):
    """Finite-difference Hessian of ln p at one point, with a conservative error estimate.

    Uses the closed-form log-density when available and 1D quadrature otherwise.
    """
    cf = law.closed_form(lam)
    if cf is not None:
        f = lambda y: float(cf.log_density(np.asarray(y, float)))  # noqa: E731
    elif law.dim == 1:
        f = lambda y: quadrature_log_density(law, lam, float(np.asarray(y).reshape(-1)[0]))  # noqa: E731
    else:
        return None, None
    fd = finite_difference(f, x, order=2)
    H = np.atleast_2d(fd.value)
    # the returned estimate is a difference of two step sizes; widen it and add a relative floor
    err = 10.0 * float(np.max(np.abs(fd.error))) + 1e-7 * max(1.0, float(np.max(np.abs(H))))
    return H, err


def mode_verify(cfg, out: Path):
    law = cfg["_law"]
    section = cfg.get("verify", {})
    rows, failures = [], 0
    for side, p in (("target", law.target), ("base", law.base)):
        prof = safe_profile(p)
        if prof is None or not p.smooth:
            continue
        grid = radial_grid(p.dim, section.get("radial_points", 1000), section.get("r_max", 10.0))
        rep = verify_profile(p, prof, grid)
        for c in rep.checks:
            failures += not c.passed
            rows.append(("profile." + side + "." + c.name, "", "", float(c.observed), float(c.declared), "",
                         int(c.passed)))
    rng = np.random.default_rng([cfg["seed"], 7])
    T = law.schedule.T
    for _ in range(section.get("points", 20)):
        t = float(rng.uniform(0.0, T))
        lam = law.lam(t)
        x = rng.normal(size=law.dim)
        if not 0.0 < lam < 1.0:
            continue
        H, err = _fd_hessian(law, lam, x)
        if H is None:
            continue
        eig = np.linalg.eigvalsh(0.5 * (H + H.T))
        band = law_hessian_band(law, lam)
        ok = band.lower - err <= eig[0] and eig[-1] <= band.upper + err
        failures += not ok
        rows.append(("hessian_band", t, ";".join(_fmt(v) for v in x), float(eig[0]), float(band.lower),
                     float(band.upper), int(ok)))
        rows.append(("hessian_band.max_eig", t, ";".join(_fmt(v) for v in x), float(eig[-1]), float(band.lower),
                     float(band.upper), int(ok)))
    (out / "verify.csv").write_text(_csv(["check", "t", "x", "observed", "bound_lo_or_declared", "bound_hi",
                                          "passed"], rows))
    return ["verify.csv"], failures


def mode_oracle(cfg, out: Path) -> list:
    law = cfg["_law"]
    if law.dim != 1:
        raise DomainError("oracle mode needs a one-dimensional law")
    section = cfg.get("oracle", {})
    T = law.schedule.T
    ts = section.get("t", [0.25 * T, 0.5 * T, 0.75 * T])
    xs = section.get("x", [-1.0, 0.0, 1.0])
    prof_W, prof_U = safe_profile(law.base), safe_profile(law.target)
    rows = []
    for t in ts:
        lam = law.lam(t)
        if not 0.0 < lam < 1.0:
            continue
        best = None
        if prof_W is not None and prof_U is not None:
            best, _ = best_conditional_poincare(prof_W, prof_U, lam)
        for x in xs:
            logq = conditional_log_density(law, lam, np.array([x]))
            est = poincare_of_log_density(logq, -5.0 + math.sqrt(lam) * x, 5.0 + math.sqrt(lam) * x,
                                          section.get("grid", 2000))
            rows.append((float(t), float(lam), float(x), float(est.value), float(est.refined),
                         float(best.value) if best else math.inf, best.theorem if best else ""))
    (out / "oracle.csv").write_text(_csv(["t", "lambda", "x", "C_P", "C_P_refined", "best_bound", "best_method"],
                                         rows))
    return ["oracle.csv"]


# --------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_config(path, modes=None, out=None, seed=None) -> int:
    """Run the requested modes of a config; returns the process exit code."""
    try:
        cfg = load_config(path, modes)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        cfg["seed"] = seed
    out = Path(out or cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    files, failures = [], 0
    handlers = {"bounds": mode_bounds, "sample": mode_sample, "study": mode_study, "oracle": mode_oracle}
    for mode in cfg["_modes"]:
        try:
            if mode == "verify":
                emitted, failed = mode_verify(cfg, out)
                failures += failed
            else:
                emitted = handlers[mode](cfg, out)
        except Exception as exc:  # report with module context, exit 1
            print(f"{mode}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        files.extend(emitted)
    manifest = {
        "version": __version__,
        "config_sha256": _sha256(Path(path)),
        "seed": cfg["seed"],
        "modes": cfg["_modes"],
        "files": {name: _sha256(out / name) for name in files},
        "verification_failures": failures,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    if failures:
        print(f"verify: {failures} check(s) failed; see verify.csv", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="annealed-langevin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--mode", choices=MODES, action="append",
                     help="mode to run (repeatable); default: every section present in the config")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="override the config seed")
    args = parser.parse_args(argv)
    return run_config(args.config, args.mode, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
