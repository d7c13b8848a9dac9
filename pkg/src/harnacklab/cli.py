"""Command-line front end.

Exit codes: 0 all gates pass, 2 gate violation, 3 numerical abort,
4 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .certify import certify_speed
from .config import KINDS, ExperimentConfig, build_config, env_pairs, parse_pairs, parse_shape, parse_until
from .errors import (
    HarnackLabError,
    NoEpsilonFound,
    NonPositiveKappa,
    NoStrictLevel,
    ParseError,
    RangeError,
)
from .flow import FlowAborted, TranslatorSolution, run, solve_translator
from .geometry import GraphProfile, ellipsoid_profile, sphere_profile
from .harnack import (
    ancient_sweep,
    harnack_report,
    harnack_tolerance,
    identity_convergence,
    identity_residuals,
    scalar_harnack,
    translator_equality,
)
from .snapshots import SNAPSHOT_GLOB, load_trajectory, read_snapshot, save_trajectory, write_snapshot

log = logging.getLogger("harnacklab")

EXIT_OK, EXIT_GATE, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4
MANIFEST = "manifest.json"
# certification failures are gate outcomes, not numerical breakdowns
_GATE_ERRORS = (NonPositiveKappa, NoEpsilonFound, NoStrictLevel)
# equality-case thresholds
SOLITON_TOL = 1e-6
EQUALITY_TOL = 5e-3
XI_TOL = 1e-4
RATIO_BAND = (3.0, 5.0)


class ConfigError(Exception):
    """Command-line usage error."""


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    finished: str = None
    files: list = field(default_factory=list)
    exit_code: int = EXIT_OK
    error: str = None
    summary: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _now():
    return datetime.now(timezone.utc).isoformat()


def _json(obj):
    """JSON text with non-finite floats written as strings."""
    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, (np.floating, float)):
            x = float(x)
            return x if math.isfinite(x) else repr(x)
        if isinstance(x, np.integer):
            return int(x)
        if isinstance(x, np.bool_):
            return bool(x)
        if isinstance(x, np.ndarray):
            return clean(x.tolist())
        return x
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _out_paths(out: str, default_name: str):
    """Split ``--out`` into a directory and a primary file name.

    A path with a file suffix names the primary output file; anything else
    is a directory.
    """
    p = Path(out)
    if p.suffix:
        return p.parent, p.name
    return p, default_name


def _require(cfg, *keys):
    for key in keys:
        if getattr(cfg, key) is None:
            raise ConfigError(f"{cfg.kind} needs --{key}")


# ---------------------------------------------------------------- pipelines

def _certify(cfg, out_dir, name):
    _require(cfg, "speed")
    speed = cfg.speed_function()
    cert = certify_speed(speed, cfg.rho, cfg.N, cfg.seed, cfg.k, threads=cfg.threads)
    path = out_dir / name
    path.write_text(cert.to_json(indent=2) + "\n", encoding="utf-8")
    v = cert.validation or {}
    validation = min(v.get("exact_min", 0.0), v.get("random_min", 0.0))
    ok = math.isfinite(cert.C) and cert.kappa > 0 and cert.epsilon > 0 and validation >= -1e-9
    summary = {"C": cert.C, "kappa": cert.kappa, "epsilon": cert.epsilon,
               "m_star": cert.m_star, "m_IC": cert.m_IC, "validation_min": validation}
    return [path], summary, ok


def _initial_profile(cfg, speed):
    kind, vals = parse_shape(cfg.shape)
    if kind == "sphere":
        return sphere_profile(speed.n, vals[0], cfg.M)
    return ellipsoid_profile(speed.n, vals[0], vals[1], cfg.M)


def _flow(cfg, out_dir, name):
    _require(cfg, "speed", "until")
    speed = cfg.speed_function()
    P = _initial_profile(cfg, speed)
    key, val = parse_until(cfg.until)
    kw = {"t_end": val} if key == "t" else {"r_min": val}
    status, error = "ok", None
    try:
        traj = run(P, speed, safety=cfg.safety, record_interval=cfg.record,
                   markers=cfg.markers, **kw)
    except FlowAborted as exc:
        traj, status, error = exc.trajectory, "aborted", exc
    files = save_trajectory(traj, out_dir / name)
    summary = {"snapshots": traj.K, "t_final": float(traj.times[-1]), "status": status,
               "h_min": float(traj.h[-1].min()), "h_max": float(traj.h[-1].max())}
    if error is not None:
        summary["files"] = [str(f) for f in files]
        raise _Partial(error, files, summary)
    return files, summary, True


class _Partial(Exception):
    def __init__(self, error, files, summary):
        super().__init__(str(error))
        self.error, self.files, self.summary = error, files, summary


def _translator(cfg, out_dir, name):
    _require(cfg, "speed")
    speed = cfg.speed_function()
    sol = solve_translator(speed, cfg.rmax, nodes=cfg.nodes)
    path = write_snapshot(out_dir / name, sol.profile, speed.key)
    res = sol.soliton_residual(speed)
    summary = {"soliton_residual": res, "vertex_curvature": sol.vertex_curvature,
               "r_max": sol.r_max, "nodes": cfg.nodes}
    return [path], summary, res <= SOLITON_TOL


def _locate_traj(cfg):
    _require(cfg, "traj")
    p = Path(cfg.traj)
    if p.is_dir():
        if any(p.glob(SNAPSHOT_GLOB)):
            return "flow", p
        graphs = [f for f in sorted(p.glob("*.txt")) if _is_graph(f)]
        if len(graphs) == 1:
            return "graph", graphs[0]
        raise ConfigError(f"{p} holds no trajectory or a unique translator profile")
    if p.is_file():
        return ("graph", p) if _is_graph(p) else ("flow-file", p)
    raise ConfigError(f"--traj {p} does not exist")


def _is_graph(path):
    try:
        with open(path, encoding="utf-8") as fh:
            head = [next(fh, "") for _ in range(2)]
    except OSError:
        return False
    return head[0].startswith("harnacklab-snapshot") and head[1].strip() == "kind graph"


def _harnack_report(cfg, out_dir, name):
    kind, path = _locate_traj(cfg)
    if kind == "flow-file":
        raise ConfigError("harnack-report needs a trajectory directory or a translator profile")
    if kind == "graph":
        prof, key = read_snapshot(path)
        speed = _speed_for(cfg, key)
        sol = TranslatorSolution.from_profile(speed, prof.r, prof.f, prof.fp)
        rep, gtraj = translator_equality(sol, speed, trajectory=True)
        sweep = ancient_sweep(scalar_harnack(gtraj, 1.0))
        gates = {"soliton": rep.soliton_residual <= SOLITON_TOL,
                 "equality": rep.equality_residual <= EQUALITY_TOL,
                 "xi_constancy": rep.xi_constancy <= XI_TOL}
        report = {"kind": "translator", "speed": speed.key, **rep.to_dict(),
                  "ancient_sweep": sweep, "gates": gates, "passed": all(gates.values())}
        rows = _p_rows(scalar_harnack(gtraj, cfg.T0 if cfg.T0 > 0 else 1.0), gtraj.marker_r)
    else:
        traj = load_trajectory(path)
        _speed_for(cfg, traj.speed.key)
        rep = harnack_report(traj, cfg.T0, cfg.tol_c1, cfg.tol_c2)
        report = {"kind": "flow", **asdict(rep)}
        samples = scalar_harnack(traj, cfg.T0)
        rows = _p_rows(samples, traj.marker_theta[1:-1])
    report_path = out_dir / name
    report_path.write_text(_json(report), encoding="utf-8")
    csv_path = report_path.with_suffix(".csv")
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "position", "P"))
        w.writerows(rows)
    return [report_path, csv_path], {"passed": report["passed"]}, bool(report["passed"])


def _p_rows(samples, positions):
    pos = np.asarray(positions)
    P = samples.P
    rows = []
    for j, t in enumerate(samples.t):
        x = pos[j] if pos.ndim == 2 else pos
        for m in range(P.shape[1]):
            rows.append((repr(float(t)), repr(float(x[m])), repr(float(P[j, m]))))
    return rows


def _speed_for(cfg, key):
    if cfg.speed is not None and cfg.speed_function().key != key:
        raise ConfigError(f"--speed {cfg.speed} disagrees with stored speed {key}")
    from .speeds import parse_speed
    return parse_speed(key)


def _identity_check(cfg, out_dir, name):
    if cfg.traj is not None:
        kind, path = _locate_traj(cfg)
        if kind != "flow":
            raise ConfigError("identity-check needs a trajectory directory")
        traj = load_trajectory(path)
        res = identity_residuals(traj)
        tau = float(np.max(np.diff(traj.times)))
        tol = harnack_tolerance(traj.M, tau, 1.0, cfg.tol_c1, cfg.tol_c2)
        worst = max(res.scalar, res.first_variation, res.simons)
        report = {"speed": traj.speed.key, "M": traj.M, **res.to_dict(), "tolerance": tol,
                  "passed": worst <= tol}
    else:
        _require(cfg, "speed")
        speed = cfg.speed_function()
        kind, vals = parse_shape(cfg.shape)
        a, c = (1.0, 1.25) if kind == "sphere" else vals
        conv = identity_convergence(speed, grids=(cfg.M, 2 * cfg.M), a=a, c=c)
        ok = all(RATIO_BAND[0] <= r <= RATIO_BAND[1] for v in conv["ratios"].values() for r in v)
        report = {"speed": speed.key, "ellipsoid": [a, c], **conv, "passed": ok}
    path = out_dir / name
    path.write_text(_json(report), encoding="utf-8")
    return [path], {"passed": report["passed"]}, bool(report["passed"])


_PIPELINES = {
    "certify-speed": (_certify, "certificate.json"),
    "flow": (_flow, "trajectory"),
    "translator": (_translator, "translator.txt"),
    "harnack-report": (_harnack_report, "report.json"),
    "identity-check": (_identity_check, "identity.json"),
}


def _file_entries(base: Path, files):
    entries = []
    for f in files:
        f = Path(f)
        for p in sorted(f.rglob("*")) if f.is_dir() else [f]:
            if p.is_file():
                entries.append({"path": os.path.relpath(p, base), "sha256": sha256(p)})
    return entries


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Dispatch one experiment and write its manifest last, atomically."""
    if cfg.kind not in _PIPELINES:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    func, default = _PIPELINES[cfg.kind]
    out_dir, name = _out_paths(cfg.out, default)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfg.to_dict(), __version__, _now())
    files = []
    try:
        files, summary, ok = func(cfg, out_dir, name)
        man.summary = summary
        man.exit_code = EXIT_OK if ok else EXIT_GATE
    except _Partial as exc:
        files, man.summary = exc.files, exc.summary
        man.exit_code, man.error = EXIT_NUMERIC, f"{type(exc.error).__name__}: {exc.error}"
    except _GATE_ERRORS as exc:
        man.exit_code, man.error = EXIT_GATE, f"{type(exc).__name__}: {exc}"
    except (ParseError, RangeError, ConfigError) as exc:
        man.exit_code, man.error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    except (HarnackLabError, ArithmeticError, np.linalg.LinAlgError) as exc:
        man.exit_code, man.error = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    man.files = _file_entries(out_dir, files)
    man.finished = _now()
    atomic_write(out_dir / MANIFEST, man.to_json() + "\n")
    return man


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="key=value config file")
    g.add_argument("--out", help="output directory or primary output file")
    g.add_argument("--seed", help="unsigned 64-bit seed")
    g.add_argument("--threads", help="worker threads")
    g.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="harnacklab", description="Curvature-flow Harnack experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)

    s = sub.add_parser("certify-speed", parents=[common], help="certify a speed on a cone slice")
    s.add_argument("--speed")
    s.add_argument("--rho")
    s.add_argument("--N", dest="N")
    s.add_argument("--k")

    s = sub.add_parser("flow", parents=[common], help="evolve a closed surface of revolution")
    s.add_argument("--speed")
    s.add_argument("--shape", help="sphere:r or ellipsoid:a,c")
    s.add_argument("--grid", dest="M")
    s.add_argument("--safety")
    s.add_argument("--until", help="t=T or rmin=r")
    s.add_argument("--markers")
    s.add_argument("--record", help="snapshot interval (default: every step)")

    s = sub.add_parser("translator", parents=[common], help="solve for a translating bowl")
    s.add_argument("--speed")
    s.add_argument("--rmax")
    s.add_argument("--nodes")

    s = sub.add_parser("harnack-report", parents=[common], help="Harnack checks on stored output")
    s.add_argument("--traj")
    s.add_argument("--t0", dest="T0")
    s.add_argument("--speed")
    s.add_argument("--tol-c1", dest="tol_c1")
    s.add_argument("--tol-c2", dest="tol_c2")

    s = sub.add_parser("identity-check", parents=[common], help="evolution identity residuals")
    s.add_argument("--speed")
    s.add_argument("--traj")
    s.add_argument("--shape")
    s.add_argument("--grid", dest="M")
    s.add_argument("--tol-c1", dest="tol_c1")
    s.add_argument("--tol-c2", dest="tol_c2")
    return p


_NOT_CONFIG = {"config", "verbose", "kind"}


def resolve_config(args, environ=None) -> ExperimentConfig:
    """Defaults, then config file, then environment, then flags."""
    cfg = ExperimentConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        pairs = parse_pairs(text)
        if "kind" in pairs and pairs["kind"][0] != args.kind:
            raise ConfigError(f"config kind {pairs['kind'][0]!r} does not match subcommand {args.kind!r}")
        cfg = build_config(pairs, cfg)
    cfg = build_config(env_pairs(environ), cfg)
    flags = {k: (v, None) for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    flags["kind"] = (args.kind, None)
    return build_config(flags, cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"harnacklab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (ParseError, RangeError, ConfigError) as exc:
        print(f"harnacklab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.kind not in KINDS:
        print(f"harnacklab: unknown kind {cfg.kind}", file=sys.stderr)
        return EXIT_CONFIG
    man = run_experiment(cfg)
    print(json.dumps({"kind": cfg.kind, "exit_code": man.exit_code, "error": man.error,
                      **{k: v for k, v in man.summary.items() if k != "files"}},
                     default=float, sort_keys=True))
    if man.error:
        log.warning(man.error)
    return man.exit_code


if __name__ == "__main__":
    sys.exit(main())
