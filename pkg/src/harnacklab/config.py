"""Experiment configuration: ``key=value`` text, environment overrides and validation."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields

from .errors import ParseError, RangeError
from .harnack import TOL_C1, TOL_C2
from .speeds import parse_speed

KINDS = ("certify-speed", "flow", "translator", "harnack-report", "identity-check")
ENV_PREFIX = "HARNACKLAB_"
M_RANGE = (32, 4096)


@dataclass
class ExperimentConfig:
    kind: str = None
    speed: str = None
    n: int = None
    k: int = None
    M: int = 256
    safety: float = 0.5
    rho: float = 0.2
    N: int = 10_000
    seed: int = 0
    shape: str = "sphere:1.0"
    until: str = None
    markers: int = 8
    record: float = None
    T0: float = 0.0
    rmax: float = 3.0
    nodes: int = 401
    traj: str = None
    tol_c1: float = TOL_C1
    tol_c2: float = TOL_C2
    out: str = "."
    threads: int = 1

    def to_dict(self):
        return asdict(self)

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items() if v is not None)

    def speed_function(self):
        return parse_speed(self.speed)

    def parsed_shape(self):
        return parse_shape(self.shape)

    def parsed_until(self):
        return parse_until(self.until)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _error(cls, line, msg):
    where = f"line {line}: " if line is not None else ""
    exc = cls(where + msg)
    exc.line = line
    return exc


def parse_shape(spec: str):
    """``sphere:r`` -> ``("sphere", (r,))``; ``ellipsoid:a,c`` -> ``("ellipsoid", (a, c))``."""
    kind, _, rest = str(spec).partition(":")
    try:
        vals = tuple(float(x) for x in rest.split(","))
    except ValueError:
        raise ParseError(f"bad shape {spec!r}") from None
    need = {"sphere": 1, "ellipsoid": 2}.get(kind)
    if need is None or len(vals) != need:
        raise ParseError(f"shape must be sphere:r or ellipsoid:a,c, got {spec!r}")
    if not all(v > 0 and math.isfinite(v) for v in vals):
        raise RangeError(f"shape dimensions must be positive in {spec!r}")
    return kind, vals


def parse_until(spec: str):
    """``t=T`` -> ``("t", T)``; ``rmin=r`` -> ``("rmin", r)``."""
    key, sep, val = str(spec).partition("=")
    if not sep or key not in ("t", "rmin"):
        raise ParseError(f"until must be t=T or rmin=r, got {spec!r}")
    try:
        v = float(val)
    except ValueError:
        raise ParseError(f"bad stopping value in {spec!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise RangeError(f"stopping value must be finite and nonnegative in {spec!r}")
    return key, v


def parse_pairs(text: str):
    """``{key: (raw value, line number)}`` from ``key=value`` lines."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise _error(ParseError, lineno, f"expected key=value, got {raw.strip()!r}")
        if key in pairs:
            raise _error(ParseError, lineno, f"duplicate key {key!r} (first on line {pairs[key][1]})")
        pairs[key] = (val, lineno)
    return pairs


def env_pairs(environ=None):
    """Overrides from ``HARNACKLAB_<KEY>`` variables.

    The suffix matches a field name exactly or, failing that, in lower case.
    """
    environ = os.environ if environ is None else environ
    pairs = {}
    for name, val in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):]
        if key not in _TYPES and key.lower() in _TYPES:
            key = key.lower()
        if key not in _TYPES:
            raise ParseError(f"environment variable {name} names no config key")
        pairs[key] = (val, None)
    return pairs


def build_config(pairs, base: ExperimentConfig = None) -> ExperimentConfig:
    """Apply ``pairs`` over ``base`` and validate the result."""
    values = (base or ExperimentConfig()).to_dict()
    lines = {}
    for key, (raw, line) in pairs.items():
        if key not in _TYPES:
            raise _error(ParseError, line, f"unknown key {key!r}")
        lines[key] = line
        if raw is None or raw == "":
            values[key] = None
            continue
        cast = _CASTS[_TYPES[key].split()[0]]
        try:
            values[key] = cast(raw) if cast is not int else int(str(raw), 10)
        except ValueError:
            raise _error(ParseError, line, f"{key}={raw!r} is not a valid {_TYPES[key]}") from None
    cfg = ExperimentConfig(**values)
    validate(cfg, lines)
    return cfg


def parse_config(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    """Parse and validate a ``key=value`` config with ``#`` comments.

    Raises
    ------
    ParseError
        Malformed line, unknown or duplicate key, unparsable value.
    RangeError
        A value outside its admissible range.
    """
    return build_config(parse_pairs(text), base)


def validate(cfg: ExperimentConfig, lines=None):
    lines = lines or {}

    def fail(cls, key, msg):
        raise _error(cls, lines.get(key), msg)

    if cfg.kind is not None and cfg.kind not in KINDS:
        fail(ParseError, "kind", f"kind must be one of {', '.join(KINDS)}")
    speed = None
    if cfg.speed is not None:
        try:
            speed = parse_speed(cfg.speed)
        except (ParseError, ValueError) as exc:
            fail(ParseError, "speed", str(exc))
        if cfg.n is not None and cfg.n != speed.n:
            fail(RangeError, "n", f"n={cfg.n} disagrees with speed dimension {speed.n}")
    if not M_RANGE[0] <= cfg.M <= M_RANGE[1]:
        fail(RangeError, "M", f"M={cfg.M} outside [{M_RANGE[0]}, {M_RANGE[1]}]")
    if not 0 < cfg.safety <= 1:
        fail(RangeError, "safety", f"safety={cfg.safety} outside (0, 1]")
    k = cfg.k if cfg.k is not None else getattr(speed, "k", None) or 1
    if cfg.k is not None and (cfg.k < 1 or (speed is not None and cfg.k > speed.n)):
        fail(RangeError, "k", f"k={cfg.k} outside 1..n")
    if not 0 < cfg.rho <= 1.0 / k:
        fail(RangeError, "rho", f"rho={cfg.rho} outside (0, 1/{k}]")
    if cfg.N < 1:
        fail(RangeError, "N", "N must be positive")
    if not 0 <= cfg.seed < 2 ** 64:
        fail(RangeError, "seed", "seed must be an unsigned 64-bit integer")
    for key, check in (("shape", parse_shape), ("until", parse_until)):
        val = getattr(cfg, key)
        if val is not None:
            try:
                check(val)
            except (ParseError, RangeError) as exc:
                fail(type(exc), key, str(exc))
    for key, lo in (("markers", 0), ("nodes", 5), ("threads", 1)):
        if getattr(cfg, key) < lo:
            fail(RangeError, key, f"{key} must be at least {lo}")
    for key in ("record", "rmax", "tol_c1", "tol_c2"):
        val = getattr(cfg, key)
        if val is not None and not (val > 0 and math.isfinite(val)):
            fail(RangeError, key, f"{key} must be positive and finite")
    if not (cfg.T0 >= 0 and math.isfinite(cfg.T0)):
        fail(RangeError, "T0", "T0 must be finite and nonnegative")
    return cfg
