"""Experiment configuration: a dotted ``key = value`` text format plus validation.

Example::

    preset = "free-2d-cone"
    grid.n = 1024
    state.k0 = [2.0, 0.0]
    cones = [{sector = [-30, 30], name = "c30"}]

Values are numbers, quoted strings, bare words, ``true``/``false``, arrays in
brackets and inline tables in braces.  ``#`` starts a comment.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cones import ConeRegion
from .errors import ConfigError
from .propagator import GaussianSpec, Potential

# parsing -------------------------------------------------------------------

_TOKEN = re.compile(r"""
    \s*(?:
      (?P<str>"(?:[^"\\]|\\.)*"|'[^']*')
    | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?![\w.]))
    | (?P<punct>[\[\]{},=])
    | (?P<word>[A-Za-z_][\w.\-]*)
    )""", re.VERBOSE)


def _tokens(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse value near {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


def _parse_value(tokens, i):
    kind, tok = tokens[i]
    if kind == "str":
        return json.loads(tok) if tok.startswith('"') else tok[1:-1], i + 1
    if kind == "num":
        v = float(tok)
        if re.fullmatch(r"[-+]?\d+", tok):
            v = int(tok)
        return v, i + 1
    if kind == "word":
        low = tok.lower()
        if low in ("true", "false"):
            return low == "true", i + 1
        if low in ("inf", "+inf"):
            return math.inf, i + 1
        return tok, i + 1
    if tok == "[":
        items = []
        i += 1
        while tokens[i][1] != "]":
            v, i = _parse_value(tokens, i)
            items.append(v)
            if tokens[i][1] == ",":
                i += 1
        return items, i + 1
    if tok == "{":
        table = {}
        i += 1
        while tokens[i][1] != "}":
            key = tokens[i][1]
            if tokens[i + 1][1] != "=":
                raise ValueError(f"expected '=' after {key!r} in inline table")
            v, i = _parse_value(tokens, i + 2)
            _assign(table, key, v)
            if tokens[i][1] == ",":
                i += 1
        return table, i + 1
    raise ValueError(f"unexpected token {tok!r}")


def parse_value(text: str):
    toks = _tokens(text)
    if not toks:
        raise ValueError("empty value")
    try:
        v, i = _parse_value(toks, 0)
    except IndexError:
        raise ValueError(f"unterminated value {text!r}") from None
    if i != len(toks):
        raise ValueError(f"trailing text in value {text!r}")
    return v


def _assign(table: dict, dotted: str, value):
    parts = dotted.split(".")
    for p in parts[:-1]:
        table = table.setdefault(p, {})
        if not isinstance(table, dict):
            raise ValueError(f"key {dotted!r} collides with a scalar")
    table[parts[-1]] = value


def _strip_comment(line: str) -> str:
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_text(text: str) -> dict:
    """Nested dict from dotted ``key = value`` lines."""
    table: dict = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        if not re.fullmatch(r"[A-Za-z_][\w\-]*(\.[A-Za-z_][\w\-]*)*", key):
            problems.append(f"line {lineno}: bad key {key!r}")
            continue
        try:
            _assign(table, key, parse_value(val))
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
    if problems:
        raise ConfigError(problems)
    return table


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# typed config ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Every setting of one experiment; build with :func:`from_dict`."""

    name: str
    dim: int
    n: int
    L: float
    x0: tuple
    k0: tuple
    sigma: float
    potential: dict = field(default_factory=lambda: {"kind": "zero"})
    t0: float = 1.0
    T: float = 10.0
    dt: float | None = None
    frame_stride: int = 1
    dt_sde: float | None = None
    N: int = 0
    seed: int = 0
    mode: str = "nelson"
    drift_convention: str = "half"
    compare_convention: str | None = None
    sample_stride: int = 1
    ensemble_format: str = "binary"
    cones: list = field(default_factory=list)
    R_ladder: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    check_times: int = 10
    h_times: list = field(default_factory=list)
    collar: str = "tube"
    h5_R: float = 5.0
    continuity: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    store_frames: bool = False
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    # derived ------------------------------------------------------------
    @property
    def frame_dt(self) -> float:
        return self.dt * self.frame_stride

    @property
    def n_frames(self) -> int:
        return int(round((self.T - self.t0) / self.frame_dt)) + 1

    def frame_time(self, k: int) -> float:
        return self.t0 + k * self.frame_dt

    @property
    def spec(self) -> GaussianSpec:
        return GaussianSpec(self.x0, self.k0, self.sigma)

    def make_potential(self) -> Potential:
        p = dict(self.potential)
        kind = p.pop("kind", "zero")
        center = p.pop("center", None)
        return Potential(kind, center=tuple(center) if center is not None else None, **p)

    def cone_regions(self) -> list[ConeRegion]:
        return [build_cone(c, self.dim) for c in self.cones]

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("raw")
        return json.loads(json.dumps(d, default=_json_default))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.echo(), sort_keys=True).encode()).hexdigest()


DEFAULT_TOLERANCES = {
    "norm": 1e-10,
    "oracle": 1e-8,
    "h2_identity": 1e-6,
    "energy": 1e-8,
    "parseval": 1e-10,
    "gauge": 1e-12,
    "sigma_band": 3.0,
    "allowance": 0.02,
    "fas_allowance": 0.03,
    "fas_agreement": 0.99,
    "lateral_max": 0.05,
    "ks_alpha": 0.01,
    "ks_fraction": 0.95,
    "out_state_l1": 0.01,
    "continuity": 5e-4,
    "continuity_gain": 3.0,
    "h2_exponent": -0.9,
    "h5_exponent": -1.5,
}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def build_cone(spec: dict, dim: int) -> ConeRegion:
    """Cone from ``{sector=[d1,d2]}``, ``{axis=[..], half_angle_deg=A}``, ``{half_line=+1}`` or ``{full=true}``."""
    name = str(spec.get("name", ""))
    if spec.get("full"):
        c = ConeRegion.full_space(dim)
        return dataclasses.replace(c, name=name or c.name)
    if "sector" in spec:
        d1, d2 = spec["sector"]
        return ConeRegion.sector(float(d1), float(d2), name=name)
    if "half_line" in spec:
        return ConeRegion.half_line(int(spec["half_line"]), name=name)
    if "axis" in spec:
        return ConeRegion.circular([float(v) for v in spec["axis"]], float(spec["half_angle_deg"]), name=name)
    raise ValueError(f"cannot build a cone from {spec!r}")


def _vec(v, dim, what):
    if isinstance(v, (int, float)):
        v = [v]
    v = tuple(float(a) for a in v)
    if len(v) != dim:
        raise ValueError(f"{what} has {len(v)} components, grid.dim is {dim}")
    return v


def from_dict(d: dict, presets: dict | None = None) -> ExperimentConfig:
    """Typed config from a parsed table; ``preset = "name"`` merges a preset underneath."""
    if presets is None:
        from .presets import PRESETS as presets
    problems = []
    if "preset" in d:
        base = presets.get(d["preset"])
        if base is None:
            raise ConfigError([f"unknown preset {d['preset']!r}; choose from {sorted(presets)}"])
        d = merge(base, {k: v for k, v in d.items() if k != "preset"})
    try:
        g, s, t = d.get("grid", {}), d.get("state", {}), d.get("times", {})
        e, a, o = d.get("ensemble", {}), d.get("analysis", {}), d.get("output", {})
        dim = int(g["dim"])
        cfg = ExperimentConfig(
            name=str(d.get("name", "experiment")),
            dim=dim, n=int(g["n"]), L=float(g["L"]),
            x0=_vec(s.get("x0", [0.0] * dim), dim, "state.x0"),
            k0=_vec(s["k0"], dim, "state.k0"),
            sigma=float(s.get("sigma", 1.0)),
            potential=dict(d.get("potential", {"kind": "zero"})),
            t0=float(t.get("t0", 1.0)), T=float(t["T"]),
            dt=None if t.get("dt") is None else float(t["dt"]),
            frame_stride=int(t.get("frame_stride", 1)),
            dt_sde=None if t.get("dt_sde") is None else float(t["dt_sde"]),
            N=int(e.get("N", 0)), seed=int(e.get("seed", 0)),
            mode=str(e.get("mode", "nelson")),
            drift_convention=str(e.get("drift_convention", "half")),
            compare_convention=e.get("compare_convention"),
            sample_stride=int(e.get("sample_stride", 1)),
            ensemble_format=str(e.get("format", "binary")),
            cones=list(d.get("cones", [])),
            R_ladder=[float(r) for r in a.get("R_ladder", [])],
            windows=list(a.get("windows", [])),
            check_times=int(a.get("check_times", 10)),
            h_times=[float(x) for x in a.get("h_times", [])],
            collar=str(a.get("collar", "tube")),
            h5_R=float(a.get("h5_R", 5.0)),
            continuity=dict(d.get("continuity", {})),
            tolerances=dict(d.get("tolerances", {})),
            checks=list(d.get("checks", [])),
            store_frames=bool(o.get("store_frames", False)),
            output_dir=o.get("dir"),
            raw=d,
        )
    except (KeyError, TypeError, ValueError) as exc:
        missing = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ConfigError([missing]) from None
    if cfg.dt is None:
        cfg.dt = 0.005 * (cfg.L / cfg.n) ** 2
    if cfg.dt_sde is None:
        cfg.dt_sde = cfg.frame_dt / 4
    for key in cfg.tolerances:
        if key not in DEFAULT_TOLERANCES:
            problems.append(f"unknown tolerance {key!r}")
    if problems:
        raise ConfigError(problems)
    return cfg


def load(path, presets: dict | None = None) -> ExperimentConfig:
    return from_dict(parse_text(Path(path).read_text()), presets)


# validation ----------------------------------------------------------------


def _multiple(a: float, b: float) -> bool:
    q = a / b
    return abs(q - round(q)) <= 1e-9 * max(1.0, q) and round(q) >= 1


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every violated rule with the offending numbers; empty when the config is runnable."""
    errs = []
    if cfg.dim not in (1, 2, 3):
        errs.append(f"grid.dim must be 1, 2 or 3, got {cfg.dim}")
        return errs
    if cfg.n < 2 or cfg.n & (cfg.n - 1):
        errs.append(f"grid.n must be a power of two, got {cfg.n}")
    if not cfg.L > 0:
        errs.append(f"grid.L must be positive, got {cfg.L}")
    if not cfg.sigma > 0:
        errs.append(f"state.sigma must be positive, got {cfg.sigma}")
    if cfg.collar not in ("tube", "angular"):
        errs.append(f"analysis.collar must be 'tube' or 'angular', got {cfg.collar!r}")
    if cfg.h5_R < 0:
        errs.append(f"analysis.h5_R must be non-negative, got {cfg.h5_R}")
    if errs:
        return errs
    spec = cfg.spec
    dx = cfg.L / cfg.n
    nyq = np.pi / dx
    if not spec.k_max < nyq:
        errs.append(f"aliasing: |k0| + 5/(2 sigma) = {spec.k_max:.6g} must be below the Nyquist "
                    f"wavenumber pi/dx = {nyq:.6g}")
    need = 2 * (np.linalg.norm(spec.x0) + spec.k_max * cfg.T + 5 * spec.sigma_x(cfg.T))
    if cfg.L < need * (1 - 1e-12):
        errs.append(f"box sizing: L = {cfg.L:g} < 2(|x0| + (|k0| + 5 sigma_k) T + 5 sigma_x(T)) = {need:.6g}")
    if not cfg.t0 > 0:
        errs.append(f"times.t0 must be positive, got {cfg.t0}")
    if not cfg.T > cfg.t0:
        errs.append(f"times.T = {cfg.T} must exceed t0 = {cfg.t0}")
    if not cfg.dt > 0:
        errs.append(f"times.dt must be positive, got {cfg.dt}")
    if cfg.frame_stride < 1:
        errs.append("times.frame_stride must be at least 1")
    if errs:
        return errs
    if not _multiple(cfg.T - cfg.t0, cfg.frame_dt):
        errs.append(f"T - t0 = {cfg.T - cfg.t0:g} is not a whole number of frame spacings {cfg.frame_dt:g}")
    try:
        cfg.make_potential()
    except (TypeError, ValueError) as exc:
        errs.append(f"potential: {exc}")
    try:
        cones = cfg.cone_regions()
        for c in cones:
            if c.dim != cfg.dim:
                errs.append(f"cone {c.label()} has dimension {c.dim}, grid.dim is {cfg.dim}")
    except (TypeError, ValueError, KeyError) as exc:
        errs.append(f"cones: {exc}")
    if cfg.N > 0:
        if cfg.mode not in ("nelson", "bohmian"):
            errs.append(f"ensemble.mode must be nelson or bohmian, got {cfg.mode!r}")
        for conv in (cfg.drift_convention, cfg.compare_convention):
            if conv is not None and conv not in ("half", "paper_literal"):
                errs.append(f"drift convention must be half or paper_literal, got {conv!r}")
        if cfg.ensemble_format not in ("binary", "csv"):
            errs.append(f"ensemble.format must be binary or csv, got {cfg.ensemble_format!r}")
        if not cfg.dt_sde > 0 or cfg.dt_sde > cfg.frame_dt * (1 + 1e-12):
            errs.append(f"dt_sde = {cfg.dt_sde:g} must be positive and at most the frame spacing {cfg.frame_dt:g}")
        elif not _multiple(cfg.frame_dt, cfg.dt_sde * cfg.sample_stride):
            errs.append(f"frame spacing {cfg.frame_dt:g} must be a multiple of dt_sde * sample_stride = "
                        f"{cfg.dt_sde * cfg.sample_stride:g}")
        if cfg.sample_stride < 1:
            errs.append("ensemble.sample_stride must be at least 1")
        if cfg.R_ladder:
            h = cfg.dt_sde * cfg.sample_stride
            noise = 0.0 if cfg.mode == "bohmian" else 5 * np.sqrt(cfg.dim * h)
            seg = 0.5 * dx * cfg.sample_stride + noise
            if seg > 0.5 * min(cfg.R_ladder):
                errs.append(f"segment length: capped drift plus 5-sigma noise per stored segment = {seg:.4g} "
                            f"exceeds 0.5 * min(R) = {0.5 * min(cfg.R_ladder):g}")
    if cfg.R_ladder:
        if any(R <= 0 for R in cfg.R_ladder):
            errs.append("R ladder entries must be positive")
        if max(cfg.R_ladder) >= 0.5 * cfg.L:
            errs.append(f"largest R = {max(cfg.R_ladder):g} must stay inside the box half-width {0.5 * cfg.L:g}")
    for w in cfg.windows:
        try:
            make_window(w, cfg)
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"window {w!r}: {exc}")
    return errs


def make_window(spec: dict, cfg: ExperimentConfig):
    from .estimators import WindowFunction

    kind = spec.get("kind", "standard")
    name = str(spec.get("name", kind))
    if kind == "constant":
        return WindowFunction.constant(cfg.t0)
    if kind == "standard":
        return WindowFunction.standard(cfg.t0, float(spec["flat_end"]), float(spec.get("end", cfg.T)), name)
    if kind == "taper":
        return WindowFunction(float(spec.get("start", cfg.t0)), float(spec["flat_start"]), float(spec["flat_end"]),
                              float(spec.get("end", cfg.T)), name)
    raise ValueError(f"unknown window kind {kind!r}")


def check(cfg: ExperimentConfig):
    errs = validate(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg
