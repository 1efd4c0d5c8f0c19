"""Report emission: CSV rows, a JSON mirror with the config echo, and plot-ready series."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .sde import write_ensemble_binary, write_ensemble_csv

COLUMNS = ["estimator", "cone", "R", "T", "value", "std_error", "oracle_value", "band", "pass", "tag", "note"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "pass" if v else "fail"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in report.rows:
            d = r.as_dict()
            d["pass"] = None if r.passed is None else bool(r.passed)
            w.writerow([_fmt(d[c]) for c in COLUMNS])


def report_dict(report) -> dict:
    return {
        "config": report.config,
        "config_sha256": report.config_hash,
        "passed": report.passed,
        "rows": [r.as_dict() for r in report.rows],
        "diagnostics": report.diagnostics,
    }


def write_report_json(report, path, *, include_timing: bool = False):
    d = report_dict(report)
    if not include_timing:
        d["diagnostics"] = {k: v for k, v in d["diagnostics"].items() if not k.startswith("wall")}
    Path(path).write_text(json.dumps(d, indent=1, default=float))


def write_series_csv(res, path):
    """Per-frame time series: norm, energy, cone masses and flux rates."""
    cols = {"t": res.times, "norm": res.norms, "energy": res.energies}
    for ci, m in res.masses.items():
        cols[f"mass_C{ci}"] = m
    for (ci, R), m in res.far_masses.items():
        cols[f"mass_C{ci}_R{R:g}"] = m
    for (ci, R), v in res.cap_rates.items():
        cols[f"cap_rate_C{ci}_R{R:g}"] = v
    for (ci, R), v in res.lat_rates.items():
        cols[f"lateral_rate_C{ci}_R{R:g}"] = v
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for i in range(res.times.size):
            w.writerow([repr(float(c[i])) for c in cols.values()])


def write_crossings_csv(res, path):
    """Per-path signed crossing totals for every cached (cone, R) ledger."""
    cache = getattr(res, "_ledger_cache", {})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cone", "R", "path_id", "N_cap", "N_lat", "N_total", "start_in_D", "end_in_D"])
        for (ci, R), led in sorted(cache.items()):
            ids = res.ensemble.path_ids
            for p in range(led.N_cap.size):
                w.writerow([ci, f"{R:g}", int(ids[p]), int(led.N_cap[p]), int(led.N_lat[p]), int(led.N_total[p]),
                            int(led.start_in[p]), int(led.end_in[p])])


def write_outputs(report, res, out, cfg):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv")
    write_report_json(report, out / "report.json")
    timing = {k: v for k, v in report.diagnostics.items() if k.startswith("wall")}
    (out / "timing.json").write_text(json.dumps(timing, indent=1, default=float))
    if res is not None:
        write_series_csv(res, out / "series.csv")
        if res.ensemble is not None:
            if cfg.ensemble_format == "csv":
                write_ensemble_csv(res.ensemble, out / "ensemble.csv")
            else:
                write_ensemble_binary(res.ensemble, out / "ensemble.bin")
            if getattr(res, "_ledger_cache", None):
                write_crossings_csv(res, out / "crossings.csv")


def format_rows(rows) -> str:
    """Fixed-width text table of report rows."""
    lines = []
    for r in rows:
        status = "info" if r.passed is None else ("PASS" if r.passed else "FAIL")
        where = " ".join(x for x in [r.cone, f"R={r.R:g}" if r.R is not None else ""] if x)
        oracle = "" if r.oracle_value is None else f" oracle={r.oracle_value:.6g}"
        se = "" if r.std_error is None else f" se={r.std_error:.3g}"
        lines.append(f"{status:4s}  {r.estimator:34s} {where:24s} value={r.value:.6g}{se}{oracle}  [{r.band}] {r.tag}")
    return "\n".join(lines)


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def rows_from_json(d: dict):
    from .harness import Row

    return [Row(**r) for r in d["rows"]]


def summary(report) -> str:
    n_fail = len(report.failures)
    n_checked = sum(r.passed is not None for r in report.rows)
    head = f"{n_checked - n_fail}/{n_checked} checks passed"
    return head + ("" if not n_fail else "; failing: " + ", ".join(sorted({r.estimator for r in report.failures})))
