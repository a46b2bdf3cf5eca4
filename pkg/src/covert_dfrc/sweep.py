"""Parameter sweeps over schemes and seeds, with CSV and manifest output."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .bcd import BcdOptions, SolveReport, run_bcd, run_fpa, run_gas, run_upper_bound
from .beamforming import COLLUDING, MODES, NONCOLLUDING
from .channel import Scenario, ScenarioConfig

PARAMETERS = {
    "pt_dbw": "transmit power (dBW)",
    "gamma_db": "radar SINR threshold (dB)",
    "epsilon": "covertness level",
    "num_antennas": "number of antennas",
    "num_wardens": "number of wardens",
}
SCHEMES = ("proposed-noncolluding", "proposed-colluding", "fpa", "gas", "upper-bound")
COLUMNS = (
    "scheme", "mode", "parameter", "value", "seed", "status", "rate", "min_radar_sinr",
    "dep", "dep_empirical", "iterations", "runtime",
)


@dataclass
class SweepSpec:
    """One experiment axis.

    ``fpa``, ``gas`` and ``upper-bound`` run once per entry of ``modes``; the
    upper bound is warm-started from the proposed solution in the same mode.
    """

    parameter: str
    values: list
    seeds: list
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    modes: list = field(default_factory=lambda: [NONCOLLUDING])

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; choose from {sorted(PARAMETERS)}")
        if len(self.values) == 0:
            raise ValueError("sweep grid is empty")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed is required")
        bad = sorted(set(self.schemes) - set(SCHEMES))
        if bad:
            raise ValueError(f"unknown schemes: {', '.join(bad)}")
        bad = sorted(set(self.modes) - set(MODES))
        if bad:
            raise ValueError(f"unknown modes: {', '.join(bad)}")


def apply_parameter(config: ScenarioConfig, name: str, value) -> ScenarioConfig:
    """Config with one swept parameter set (``gamma_db`` and ``epsilon`` apply to every warden)."""
    W = config.num_wardens
    if name == "pt_dbw":
        return config.replace(transmit_power=10 ** (float(value) / 10))
    if name == "gamma_db":
        return config.replace(radar_sinr=(10 ** (float(value) / 10),) * W)
    if name == "epsilon":
        return config.replace(covertness=(float(value),) * W, covertness_colluding=float(value))
    if name == "num_antennas":
        return config.replace(num_antennas=int(value))
    if name == "num_wardens":
        return config.with_wardens(int(value))
    raise ValueError(f"unknown sweep parameter {name!r}")


def _row(report: SolveReport, parameter: str, value, runtime: float) -> dict:
    m = report.metrics
    emp = [d.dep_empirical for d in report.detection]
    status = "ok" if report.feasible else ("infeasible" if report.reason.startswith("infeasible") else "check-failed")
    return {
        "scheme": report.scheme,
        "mode": report.mode,
        "parameter": parameter,
        "value": float(value),
        "seed": int(report.seed),
        "status": status,
        "rate": float(report.rate),
        "min_radar_sinr": m.min_radar_sinr if m is not None else float("nan"),
        "dep": m.min_dep if m is not None else float("nan"),
        "dep_empirical": float(np.min(emp)) if emp else float("nan"),
        "iterations": int(report.iterations),
        "runtime": runtime,
    }


def _failure_row(scheme, mode, parameter, value, seed, exc) -> dict:
    row = {c: float("nan") for c in COLUMNS}
    row.update(scheme=scheme, mode=mode, parameter=parameter, value=float(value), seed=int(seed),
               status=f"error:{type(exc).__name__}", iterations=0)
    return row


def run_point(base: ScenarioConfig, spec: SweepSpec, value, seed: int, opts: BcdOptions | None = None) -> list[dict]:
    """All requested schemes at one grid value and seed; failures become rows, never exceptions."""
    cfg = apply_parameter(base, spec.parameter, value).replace(seed=int(seed))
    scn = Scenario.from_config(cfg)
    rows = []
    proposed: dict[str, SolveReport] = {}

    def timed(scheme, mode, fn):
        start = time.perf_counter()
        try:
            report = fn()
        except Exception as exc:  # noqa: BLE001 - sweeps record failures and continue
            rows.append(_failure_row(scheme, mode, spec.parameter, value, seed, exc))
            return None
        rows.append(_row(report, spec.parameter, value, time.perf_counter() - start))
        return report

    for mode in MODES:
        scheme = f"proposed-{mode}"
        wanted = scheme in spec.schemes or ("upper-bound" in spec.schemes and mode in spec.modes)
        if wanted:
            rep = timed("proposed", mode, lambda m=mode: run_bcd(scn, m, opts))
            if rep is not None:
                proposed[mode] = rep
            if scheme not in spec.schemes:
                rows.pop()
    for mode in spec.modes:
        if "fpa" in spec.schemes:
            timed("fpa", mode, lambda m=mode: run_fpa(scn, m, opts))
        if "gas" in spec.schemes:
            timed("gas", mode, lambda m=mode: run_gas(scn, m, opts))
        if "upper-bound" in spec.schemes and mode in proposed:
            start = proposed[mode].state
            timed("upper-bound", mode, lambda m=mode, s=start: run_upper_bound(scn, m, opts, start=s))
    return rows


def _sort_key(row):
    return (row["scheme"], row["mode"], row["value"], row["seed"])


def sweep(
    spec: SweepSpec, base: ScenarioConfig | None = None, opts: BcdOptions | None = None, workers: int = 1
) -> list[dict]:
    """Run every (value, seed) point; rows are sorted by scheme, mode, value and seed."""
    base = base or ScenarioConfig()
    jobs = [(v, s) for v in spec.values for s in spec.seeds]
    rows: list[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_point, base, spec, v, s, opts) for v, s in jobs]
            for f in futures:
                rows.extend(f.result())
    else:
        for v, s in jobs:
            rows.extend(run_point(base, spec, v, s, opts))
    return sorted(rows, key=_sort_key)


def format_value(value) -> str:
    """Floats with 9 significant digits; everything else via ``str``."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def write_csv(rows: list[dict], path: str | Path, columns=COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c, "")) for c in columns])
    return path


def read_csv(path: str | Path) -> list[dict]:
    """Rows of a file written by :func:`write_csv`, numeric fields parsed back."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, text in row.items():
                try:
                    parsed[key] = int(text) if key in ("seed", "iterations") else float(text)
                except ValueError:
                    parsed[key] = text
            out.append(parsed)
    return out


def write_manifest(path: str | Path, config: ScenarioConfig, seed: int, extra: dict | None = None) -> Path:
    """YAML file echoing the resolved configuration and seed of a run."""
    from . import __version__

    doc = {"version": __version__, "seed": int(seed), "config": config.to_document()}
    if extra:
        doc.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(_plain(doc), sort_keys=False), encoding="utf-8")
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return _plain(asdict(obj))
    return obj


def median_rates(rows: list[dict], scheme: str, mode: str) -> dict:
    """Median rate per grid value over seeds (failed rows excluded)."""
    out: dict[float, list] = {}
    for row in rows:
        if row["scheme"] == scheme and row["mode"] == mode and row["status"] == "ok":
            out.setdefault(row["value"], []).append(row["rate"])
    return {v: float(np.median(r)) for v, r in sorted(out.items())}


__all__ = [
    "COLLUDING", "NONCOLLUDING", "PARAMETERS", "SCHEMES", "SweepSpec", "apply_parameter", "median_rates",
    "read_csv", "run_point", "sweep", "write_csv", "write_manifest",
]
