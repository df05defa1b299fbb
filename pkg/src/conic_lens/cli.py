"""Command line runner: ``conic-lens <task> --config FILE [--jobs N] [--out DIR]``.

Writes ``<out>/results.csv`` (one row per entry or sample), ``<out>/summary.json``
(assertions with pass/fail, fitted constants, config hash) and, for the trace
task, ``<out>/dense.csv``. Exit status: 0 ok, 2 config error, 3 numerical
failure or failed assertion.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError

log = logging.getLogger("conic_lens")

BASE_COLUMNS = ["index", "entry_y", "entry_eta", "exit_y", "exit_eta", "tau_plus", "L_g", "drift", "status"]


def fmt(v):
    """17 significant digits for floats, ';'-joined for vectors."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(fmt(x) for x in np.ravel(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    return v


# ---------------------------------------------------------------------------
# per-entry workers (module level so they pickle)


def _row_base(i, y0, eta0):
    return {"index": i, "entry_y": y0, "entry_eta": eta0, "exit_y": None, "exit_eta": None,
            "tau_plus": None, "L_g": None, "drift": None, "status": "ok"}


def _work(args):
    cfg, i, y0, eta0 = args
    from .dynamics import integrate_entry
    from .lens import renormalized_length, scattering_map

    model, name, _ = cfgmod.validate(cfg)
    task = cfg["task"]
    row = _row_base(i, y0, eta0)
    dense = []
    try:
        if name in ("trace", "scatter", "length", "xray"):
            tr = integrate_entry(model, y0, eta0)
            row.update(tau_plus=tr.tau_plus, drift=tr.drift, status=tr.status)
            y1, eta1 = scattering_map(model, y0, eta0, tr)
            row.update(exit_y=y1, exit_eta=eta1)
            if tr.status == "ok" and name in ("length", "scatter", "trace"):
                rec = renormalized_length(model, y0, eta0, task.get("method", "cut-extrapolation"), traj=tr)
                row["L_g"] = rec.length
                if name == "length":
                    alt = renormalized_length(model, y0, eta0, "tau-subtraction", traj=tr)
                    row["L_alt"] = alt.length
            if name == "scatter" and tr.status == "ok" and cfg["metric"]["family"] == "exact-cone":
                from .dynamics import cone_solution
                ref = cone_solution(model.boundary, y0, eta0, tr.tau_plus)
                d = model.d
                err = np.max(np.abs(np.concatenate([model.boundary.difference(y1, ref[1:1 + d]), eta1 - ref[2 + d:]])))
                e0 = model.boundary.norm(y0, eta0)
                row["cone_error"] = float(max(err, abs(tr.tau_plus - np.pi / e0)))
            if name == "xray" and tr.status == "ok":
                from .transform import xray
                row["xray"] = xray(model, _field(cfg, model), y0, eta0).value
            if name == "trace":
                n = int(cfg.get("output", {}).get("dense_points", 200))
                for tau in np.linspace(0.0, tr.tau_end, n):
                    dense.append([i, tau] + list(tr.state(tau)))
        elif name == "conjugate":
            from .jacobi import conjugate_scan
            tr = integrate_entry(model, y0, eta0)
            row.update(tau_plus=tr.tau_plus, drift=tr.drift, status=tr.status)
            if tr.status == "ok":
                times, _ = conjugate_scan(model, tr, rho_window=float(task.get("rho_window", 0.05)),
                                          rtol=float(task.get("rtol", 1e-9)), atol=float(task.get("atol", 1e-10)))
                row["conjugate_times"] = times
                row["n_conjugate"] = len(times)
        elif name == "variation":
            from .lens import lens_variation
            q = cfgmod.build_tensor_bump(_require_task(task, "bump"), model)
            res = lens_variation(model, q, y0, eta0)
            row.update(status=res.status, dL_ds=res.derivative, I2=res.i2,
                       dL_ds_raw=res.raw_derivative, endpoint_term=res.endpoint_term)
        elif name == "limits":
            from .lens import large_eta_scattering
            eps = np.asarray(task.get("eps", list(0.1 * 2.0 ** -np.arange(5))), float)
            res = large_eta_scattering(model, y0, eta0, eps)
            row.update(scattering_rate=res["rate"], gaps=res["gap"])
        elif name == "perturb":
            from .dynamics import DualJetDifference, linearized_difference
            from .lens import perturbative_identities
            other = cfgmod.build_model(_require_task(task, "metric_prime"))
            m = int(_require_task(task, "m"))
            res = linearized_difference(model, other, y0, eta0, m)
            quad = perturbative_identities(DualJetDifference(model, other, m), y0, eta0)
            row.update(e_fd=res["fd"], e_duhamel=res["duhamel"], relative_gap=res["relative_gap"], **quad)
    except ConfigError:
        raise
    except Exception as exc:  # numerical failure of one entry is recorded, not fatal
        log.warning("entry %d failed: %s", i, exc)
        row["status"] = "failed"
    return row, dense


def _require_task(task, key):
    if key not in task:
        raise ConfigError(f"missing '{key}' in [task]")
    return task[key]


def _field(cfg, model):
    from .tensors import CollarField

    spec = _require_task(cfg["task"], "field")
    m = int(spec.get("m", 0))
    k = float(spec.get("k", 2.0))
    terms = {}
    for t in spec.get("terms", []):
        idx = tuple(int(v) for v in t.get("index", [0] * m))
        if len(idx) != m:
            raise ConfigError("field term index length must equal m")
        terms[idx] = [(float(c.get("amp", 1.0)), np.atleast_1d(c.get("k", [0] * model.d)), float(c.get("phase", 0.0)))
                      for c in t.get("coef", [{}])]
    return CollarField(m, k, model.n, terms, width=float(spec.get("width", 1.0)))


# ---------------------------------------------------------------------------
# assertions per task


def _assertions(cfg, model, name, rows):
    out = []
    family = cfg["metric"]["family"]
    tol = cfg.get("output", {}).get("tolerances", {})
    ok_rows = [r for r in rows if r["status"] == "ok"]

    def add(label, anchor, passed, **extra):
        out.append({"name": label, "anchor": anchor, "pass": bool(passed), **extra})

    drift = max([r["drift"] for r in ok_rows if r.get("drift") is not None] + [0.0])
    if name in ("trace", "scatter", "length", "xray", "conjugate"):
        add("constraint_drift", "Eq. \"bbarS^*M\"", drift <= float(tol.get("drift", 1e-9)) * (1 + max(
            [r["tau_plus"] for r in ok_rows] + [0.0])), max_drift=drift)
    if name == "scatter" and family == "exact-cone":
        err = max([r.get("cone_error", 0.0) for r in ok_rows] + [0.0])
        add("exact_cone_scattering", "Definition \"nontrap\", exact-cone flow e^{(pi/|eta|)H0}",
            err < float(tol.get("cone", 1e-8)), max_error=err)
    if name == "length":
        gap = max([abs(r["L_g"] - r["L_alt"]) for r in ok_rows] + [0.0])
        add("length_methods_agree", "Prop \"rescaled geod length\"", gap <= float(tol.get("methods", 1e-6)),
            max_gap=gap)
        flat = family == "exact-cone" or (family == "warped-product"
                                          and float(cfg["metric"].get("profile", {}).get("a", 1.0)) == 1.0)
        if flat:
            worst = max([abs(r["L_g"]) for r in ok_rows] + [0.0])
            add("length_vanishes", "Prop \"rescaled geod length\" (cone and plane)",
                worst < float(tol.get("length", 1e-6)), max_abs=worst)
    if name == "variation" and ok_rows:
        ref = ok_rows[0]
        kappa = ref["dL_ds"] / ref["I2"] if ref["I2"] else float("nan")
        worst = 0.0
        for r in ok_rows[1:]:
            gap = abs(r["dL_ds"] - kappa * r["I2"])
            worst = max(worst, gap / max(1e-5, 1e-4 * abs(r["I2"])))
        add("lens_variation", "Prop \"impliesI2=0\", d/ds L = I_2(g')", worst <= 1.0, kappa=kappa,
            worst_relative_to_tolerance=worst)
    if name == "limits":
        rates = [r["scattering_rate"] for r in ok_rows]
        add("scattering_large_eta", "Lemma \"scatteringlarge\"", min(rates + [np.inf]) >= 0.9,
            min_rate=min(rates + [np.inf]))
    if name == "perturb":
        worst = max([r["relative_gap"] for r in ok_rows] + [0.0])
        add("duhamel_vs_fd", "Eq. \"ems\"", worst <= float(tol.get("perturb", 1e-4)), max_relative_gap=worst)
    if name == "conjugate":
        counts = [r.get("n_conjugate", 0) for r in ok_rows]
        add("conjugate_points", "Theorem \"injectivity of tensors\" hypothesis (no conjugate points)", True,
            with_conjugate=int(sum(c > 0 for c in counts)), scanned=len(counts))
    return out


def _curvature(cfg, model):
    from .geometry import curvature_decay_rates

    task = cfg["task"]
    rhos = np.geomspace(float(task.get("rho_min", 1e-3)), float(task.get("rho_max", 1e-1)),
                        int(task.get("n_rho", 10)))
    ys = [np.atleast_1d(y) for y in task.get("y", [[0.3] * model.d, [1.1] * model.d])]
    rep = curvature_decay_rates(model, rhos, ys)
    rows = []
    for i, r in enumerate(rhos):
        rows.append({"index": i, "rho": r, "K_VW": rep["values"]["K_VW"][i], "K_ZV": rep["values"]["K_ZV"][i],
                     "R_VWWZ": rep["values"]["R_VWWZ"][i], "status": "ok"})
    sphere = model.boundary.kind == "sphere" and getattr(model.boundary, "radius", 0) == 1.0
    target = {"K_VW": 3.0 if sphere else 2.0, "K_ZV": 4.0, "R_VWWZ": 3.0}
    asserts = []
    for key, want in target.items():
        slope = rep.get(key)
        if slope is None:
            continue
        asserts.append({"name": f"slope_{key}", "anchor": "Prop \"curvature decay\"", "pass": bool(slope >= want - 0.1),
                        "slope": slope, "required": want - 0.1})
    return rows, asserts, ["index", "rho", "K_VW", "K_ZV", "R_VWWZ", "status"]


def run(cfg, jobs=1, out=Path(".")):
    model, name, ents = cfgmod.validate(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"task": name, "config_hash": cfgmod.config_hash(cfg), "model": repr(model)}
    dense_rows = []
    if name == "curvature":
        rows, asserts, cols = _curvature(cfg, model)
    else:
        args = [(cfg, i, y, e) for i, (y, e) in enumerate(ents)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(_work, args))
        else:
            results = [_work(a) for a in args]
        rows = [r for r, _ in results]
        for _, d in results:
            dense_rows.extend(d)
        extra = sorted({k for r in rows for k in r} - set(BASE_COLUMNS))
        cols = BASE_COLUMNS + extra
        asserts = _assertions(cfg, model, name, rows)
    failed = [r["index"] for r in rows if r["status"] == "failed"]
    summary["rows"] = len(rows)
    summary["failed_entries"] = failed
    summary["trapped_entries"] = [r["index"] for r in rows if r["status"] == "trapped"]
    summary["assertions"] = asserts
    summary["partial"] = bool(failed)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in cols])
    if dense_rows:
        with open(out / "dense.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            d = model.d
            w.writerow(["index", "tau", "rho"] + [f"y{j}" for j in range(d)] + ["xi"] + [f"eta{j}" for j in range(d)])
            for r in dense_rows:
                w.writerow([fmt(v) for v in r])
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    ok = not failed and all(a["pass"] for a in asserts)
    return (0 if ok else 3), summary


def main(argv=None):
    parser = argparse.ArgumentParser(prog="conic-lens", description=__doc__.splitlines()[0])
    parser.add_argument("task", choices=cfgmod.TASKS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default=".")
    args = parser.parse_args(argv)
    level = os.environ.get("CONIC_LENS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        cfg.setdefault("task", {})
        if cfg["task"].get("name", args.task) != args.task:
            raise ConfigError(f"config task {cfg['task']['name']!r} does not match subcommand {args.task!r}")
        cfg["task"]["name"] = args.task
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        status, summary = run(cfg, jobs=args.jobs, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for a in summary["assertions"]:
        log.info("%s: %s", a["name"], "pass" if a["pass"] else "FAIL")
    if status:
        print("numerical failure or failed assertion; see summary.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
