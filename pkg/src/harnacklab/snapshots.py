"""Plain-text persistence for profiles and trajectories.

A snapshot file is a short header followed by one row per node::

    harnacklab-snapshot 1
    kind support
    n 2
    M 256
    t 0.0
    speed trace:n=2
    columns theta h
    0.0 1.0
    ...

Graph snapshots use ``kind graph`` and columns ``r f fp``.  Floats are
written with ``repr`` so a write/read cycle is bit-exact.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import ParseError
from .flow import FlowTrajectory
from .geometry import GraphProfile, SupportProfile, theta_grid
from .speeds import parse_speed

FORMAT_VERSION = 1
MAGIC = "harnacklab-snapshot"
SNAPSHOT_GLOB = "snapshot_*.txt"
MARKER_FILE = "markers.csv"
SERIES_FILE = "series.csv"
SERIES_COLUMNS = ("t", "r_min", "r_max", "G_min", "G_max", "dt")
_COLUMNS = {"support": ("theta", "h"), "graph": ("r", "f", "fp")}


def format_snapshot(profile, speed_key: str) -> str:
    """Serialize a ``SupportProfile`` or ``GraphProfile``."""
    if isinstance(profile, SupportProfile):
        kind, cols = "support", (profile.theta, profile.h)
    elif isinstance(profile, GraphProfile):
        kind, cols = "graph", (profile.r, profile.f, profile.fp)
    else:
        raise TypeError(f"cannot serialize {type(profile).__name__}")
    M = len(cols[0]) - 1
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"kind {kind}", f"n {profile.n}", f"M {M}",
             f"t {float(profile.t)!r}", f"speed {speed_key}", "columns " + " ".join(_COLUMNS[kind])]
    for row in zip(*cols):
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str):
    """Inverse of :func:`format_snapshot`; returns ``(profile, speed_key)``."""
    lines = text.splitlines()
    if len(lines) < 7:
        raise ParseError("snapshot header is truncated")
    head = {}
    expected = ("kind", "n", "M", "t", "speed", "columns")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise ParseError("line 1: not a snapshot file")
    if magic[1] != str(FORMAT_VERSION):
        raise ParseError(f"line 1: unsupported snapshot version {magic[1]}")
    for i, key in enumerate(expected, start=2):
        parts = lines[i - 1].split(" ", 1)
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(f"line {i}: expected '{key}'")
        head[key] = parts[1].strip()
    kind = head["kind"]
    if kind not in _COLUMNS:
        raise ParseError(f"line 2: unknown kind {kind!r}")
    if tuple(head["columns"].split()) != _COLUMNS[kind]:
        raise ParseError(f"line 7: columns must be {' '.join(_COLUMNS[kind])}")
    try:
        n, M, t = int(head["n"]), int(head["M"]), float(head["t"])
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}") from exc
    width = len(_COLUMNS[kind])
    rows = []
    for i, line in enumerate(lines[7:], start=8):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != width:
            raise ParseError(f"line {i}: expected {width} values")
        try:
            rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise ParseError(f"line {i}: {exc}") from exc
    if len(rows) != M + 1:
        raise ParseError(f"expected {M + 1} rows, found {len(rows)}")
    data = np.array(rows).T
    if kind == "support":
        if not np.allclose(data[0], theta_grid(M), rtol=0, atol=1e-12):
            raise ParseError("theta column does not match the uniform grid")
        return SupportProfile(n, data[1], t), head["speed"]
    return GraphProfile(n, data[0], data[1], data[2], None, t), head["speed"]


def write_snapshot(path, profile, speed_key: str) -> Path:
    path = Path(path)
    path.write_text(format_snapshot(profile, speed_key), encoding="utf-8")
    return path


def read_snapshot(path):
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))


def series_rows(traj: FlowTrajectory):
    """Per-snapshot ``(t, r_min, r_max, G_min, G_max, dt)``.

    ``r`` is the support function and ``dt`` the last accepted step before
    the snapshot (0 for the initial state).
    """
    log = traj.log if traj.log is not None else np.zeros((0, 3))
    rows = []
    for j in range(traj.K):
        t = float(traj.times[j])
        G = traj.curvature(j).G
        before = log[log[:, 0] <= t] if len(log) else log
        dt = float(before[-1, 1]) if j > 0 and len(before) else 0.0
        rows.append((t, float(traj.h[j].min()), float(traj.h[j].max()),
                     float(G.min()), float(G.max()), dt))
    return rows


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
    return Path(path)


def save_trajectory(traj: FlowTrajectory, directory) -> list:
    """Write snapshots, marker paths and the time series; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [write_snapshot(d / f"snapshot_{j:05d}.txt", traj.profile(j), traj.speed.key)
             for j in range(traj.K)]
    rows = []
    for j in range(traj.K):
        for m in range(traj.marker_theta.shape[1]):
            rows.append((j, float(traj.times[j]), m, float(traj.marker_theta[j, m]),
                         float(traj.marker_X[j, m, 0]), float(traj.marker_X[j, m, 1])))
    paths.append(_write_csv(d / MARKER_FILE, ("j", "t", "marker", "theta", "r", "z"), rows))
    paths.append(_write_csv(d / SERIES_FILE, SERIES_COLUMNS, series_rows(traj)))
    return paths


def load_trajectory(directory) -> FlowTrajectory:
    """Rebuild a :class:`FlowTrajectory` written by :func:`save_trajectory`."""
    d = Path(directory)
    files = sorted(d.glob(SNAPSHOT_GLOB))
    if not files:
        raise ParseError(f"no snapshot files in {d}")
    profiles, keys = zip(*(read_snapshot(f) for f in files))
    if len(set(keys)) != 1:
        raise ParseError("snapshots disagree on the speed key")
    if not all(isinstance(p, SupportProfile) for p in profiles):
        raise ParseError("trajectory snapshots must be support profiles")
    speed = parse_speed(keys[0])
    K = len(profiles)
    marker_theta = np.zeros((K, 0))
    marker_X = np.zeros((K, 0, 2))
    mfile = d / MARKER_FILE
    if mfile.exists():
        with mfile.open(encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if rows:
            m = 1 + max(int(r["marker"]) for r in rows)
            marker_theta = np.zeros((K, m))
            marker_X = np.zeros((K, m, 2))
            for r in rows:
                j, k = int(r["j"]), int(r["marker"])
                marker_theta[j, k] = float(r["theta"])
                marker_X[j, k] = (float(r["r"]), float(r["z"]))
    return FlowTrajectory(speed, profiles[0].n, np.array([p.t for p in profiles]),
                          np.array([p.h for p in profiles]), marker_theta, marker_X)
