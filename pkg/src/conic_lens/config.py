"""Experiment configuration: TOML parsing, validation and model construction.

A config has four blocks::

    [metric]        family, boundary, and family parameters
    [sweep]         explicit entries, a grid, or a seeded random sample
    [task]          name = trace | scatter | length | xray | curvature |
                    conjugate | variation | limits | perturb, plus options
    [output]        csv / summary / dense file names

Random sweeps use numpy's PCG64 bit generator seeded with ``sweep.seed``.
"""
from __future__ import annotations

import hashlib
import json
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .boundary import TrigPoly, make_boundary
from .geometry import (CollarBump, ConformalBump, ExactCone, PerturbedConic, TensorBump,
                       WarpedProduct)
from .profiles import RadialProfile

TASKS = ("trace", "scatter", "length", "xray", "curvature", "conjugate", "variation",
         "limits", "perturb")
FAMILIES = ("exact-cone", "warped-product", "perturbed-conic", "conformal-bump")


class ConfigError(ValueError):
    """Raised for configs that do not parse or validate (exit status 2)."""


def load(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(block, key, where):
    if key not in block:
        raise ConfigError(f"missing '{key}' in [{where}]")
    return block[key]


def _positive(value, name):
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not v > 0:
        raise ConfigError(f"{name} must be positive")
    return v


def build_boundary(spec):
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = _require(spec, "kind", "metric.boundary")
    kw = {}
    if kind == "circle" and "length" in spec:
        kw["length"] = _positive(spec["length"], "boundary length")
    elif kind == "sphere" and "radius" in spec:
        kw["radius"] = _positive(spec["radius"], "sphere radius")
    elif kind == "torus" and "lengths" in spec:
        kw["lengths"] = [_positive(v, "torus side") for v in spec["lengths"]]
    try:
        return make_boundary(kind, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def trig_terms(items):
    """[{amp, k, phase}] -> TrigPoly."""
    terms = []
    for it in items:
        terms.append((float(it.get("amp", 1.0)), np.atleast_1d(it.get("k", 0)), float(it.get("phase", 0.0))))
    return TrigPoly.make(terms)


def _tensor_terms(items, d):
    out = []
    for it in items:
        s = trig_terms(it.get("coef", [{"amp": 1.0, "k": [0] * d}]))
        t = it.get("tensor", "h0")
        out.append((s, t if t == "h0" else np.asarray(t, float)))
    return out


def build_model(spec):
    """Metric model from a [metric] block."""
    family = _require(spec, "family", "metric")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "warped-product":
        prof = spec.get("profile", {})
        a = _positive(prof.get("a", 1.0), "profile a")
        r0 = _positive(prof.get("r0", 1.0), "profile r0")
        r1 = _positive(prof.get("r1", 2.0), "profile r1")
        if r1 <= r0:
            raise ConfigError("profile needs r0 < r1")
        kind = spec.get("boundary", {"kind": "circle"})
        kind = kind if isinstance(kind, str) else kind.get("kind", "circle")
        if kind not in ("circle", "sphere"):
            raise ConfigError("warped products need a circle or sphere boundary")
        return WarpedProduct.build(kind, RadialProfile(a, r0, r1))
    boundary = build_boundary(_require(spec, "boundary", "metric"))
    if family == "exact-cone":
        return ExactCone(boundary)
    if family == "perturbed-conic":
        terms = []
        for t in _require(spec, "terms", "metric"):
            m = int(_require(t, "m", "metric.terms"))
            if m < 1:
                raise ConfigError("perturbation order m must be >= 1")
            terms.append((m, float(t.get("amp", 1.0)), _tensor_terms(t.get("field", [{}]), boundary.d)))
        return PerturbedConic(boundary, terms, cut=tuple(spec.get("cut", (0.5, 1.0))))
    base = build_model({**spec.get("base", {"family": "exact-cone"}),
                        "boundary": spec.get("boundary")})
    try:
        bump = build_bump(_require(spec, "bump", "metric"), boundary.d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ConformalBump(base, bump, float(spec.get("amp", 0.1)))


def build_bump(spec, d):
    y_c = np.atleast_1d(np.asarray(spec.get("y", [0.0] * d), float))
    if y_c.size != d:
        raise ConfigError("bump centre must have one entry per boundary coordinate")
    return CollarBump(float(spec.get("rho", 0.5)), y_c, float(spec.get("w_rho", 0.2)),
                      spec.get("w_y", 0.5))


def build_tensor_bump(spec, model):
    bump = build_bump(spec, model.d)
    C = spec.get("C", "g")
    return TensorBump(bump, C if C == "g" else np.asarray(C, float), reference=model)


def entries(sweep, d, boundary):
    """List of (y0, eta0) pairs from a [sweep] block."""
    if "entries" in sweep:
        out = [(np.atleast_1d(np.asarray(e["y"], float)), np.atleast_1d(np.asarray(e["eta"], float)))
               for e in sweep["entries"]]
    elif "grid" in sweep:
        gr = sweep["grid"]
        ys = np.asarray(gr.get("y", []), float)
        etas = np.asarray(gr.get("eta", []), float)
        if d == 1:
            out = [(np.array([y]), np.array([e])) for y in ys for e in etas]
        else:
            out = [(np.asarray(y, float), np.asarray(e, float)) for y in gr.get("y", []) for e in gr.get("eta", [])]
    elif "random" in sweep:
        rs = sweep["random"]
        count = int(rs.get("count", 0))
        seed = int(_require(sweep, "seed", "sweep"))
        lo, hi = rs.get("eta_range", [0.5, 4.0])
        rng = np.random.Generator(np.random.PCG64(seed))
        out = []
        for _ in range(count):
            if d == 1:
                y = rng.uniform(0, 2 * np.pi, size=1)
                direction = rng.normal(size=d)
            elif boundary.kind == "sphere":
                # keep the boundary geodesic 0.4 away from the chart poles
                while True:
                    y = np.array([rng.uniform(0.4, np.pi - 0.4), rng.uniform(0, 2 * np.pi)])
                    direction = rng.normal(size=d)
                    if abs(direction[1]) / boundary.norm(y, direction) >= np.sin(0.4):
                        break
            else:
                y = rng.uniform(0, 2 * np.pi, size=d)
                direction = rng.normal(size=d)
            eta = direction * rng.uniform(lo, hi) / boundary.norm(y, direction)
            out.append((y, eta))
    else:
        raise ConfigError("[sweep] needs 'entries', 'grid' or 'random'")
    if not out:
        raise ConfigError("sweep is empty")
    for y, e in out:
        if y.size != d or e.size != d:
            raise ConfigError(f"entry dimension mismatch: boundary has dimension {d}")
    return out


def validate(cfg):
    """Return (model, task name, entries) or raise ConfigError."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a table")
    model = build_model(_require(cfg, "metric", "root"))
    task = _require(cfg, "task", "root")
    name = _require(task, "name", "task")
    if name not in TASKS:
        raise ConfigError(f"unknown task {name!r}; expected one of {TASKS}")
    ents = [] if name == "curvature" else entries(_require(cfg, "sweep", "root"), model.d, model.boundary)
    return model, name, ents
