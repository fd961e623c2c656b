"""Ensemble orchestration: run all configured paths and diagnostics, reduce
to summary statistics, and support crash-safe resume and replay.

Workers parallelize over whole paths only; the counter-based noise keys make
results independent of scheduling. Each finished path is written atomically
to ``<output>/paths/path_XXXXXX.json``, so an interrupted ensemble resumes
by skipping completed paths and reproduces the uninterrupted result
bit-exactly (path records are deterministic functions of config and id).
Blown-up paths are recorded and excluded from statistics, never dropped
silently.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, initial_field
from .dissipation import DRLedger, dissipation_submartingale_test, lee_closure_residual
from .energy import EnergyLedger, Event, lei_scalar_check, supermartingale_test
from .errors import BlowUpError, ConfigurationError
from .persist import atomic_write_json, save_trajectory, write_csv
from .stepview import drive, iter_views, views_from_trajectory
from .vorticity import VorticityLedger, ladder_trend_table, vorticity_bounds_report

WORKER_ENV = "LSNS_WORKERS"


# ---------------------------------------------------------------------------
# per-path work


def _ledger_payload(led: EnergyLedger) -> dict:
    return {
        "times": list(led.times),
        "martingale": list(led.martingale),
        "compensator": list(led.compensator),
        "compensator_projected": list(led.compensator_projected),
        "compensator_unmollified": list(led.compensator_unmollified),
        "energy_functional": [led.energy_functional(i) for i in range(len(led.times))],
        "initial_energy": led._initial_energy,
        "qv_predicted": list(led.qv_predicted),
        "qv_realized": list(led.qv_realized),
        "state_l2": list(led.state_l2),
    }


def _vorticity_payload(led: VorticityLedger) -> dict:
    return {
        "times": list(led.times),
        "martingale": list(led.martingale),
        "sup_l1": max(led.l1),
        "grad_norm": led.grad_norm[-1],
        "min_holder_margin": min(led.holder_margin),
        "norm_chain_ok": all(led.norm_chain_ok),
        "epsilon": led.epsilon,
        "qv_predicted": list(led.qv_predicted),
        "qv_realized": list(led.qv_realized),
        "state_l2": list(led.state_l2),
    }


def run_one_path(cfg: ExperimentConfig, path_id: int) -> dict:
    """Integrate one path with every configured ledger; returns a JSON record."""
    params = cfg.run_params(path_id)
    noise = cfg.noise_model()
    u0 = initial_field(cfg)
    out = cfg.output_block()
    diag = cfg.diagnostics()
    phis = cfg.test_functions()
    consumers, tags = [], []
    for name, phi in phis.items():
        consumers.append(EnergyLedger(phi))
        tags.append(("energy", name))
    hf = cfg.h_function()
    if hf is not None:
        consumers.append(VorticityLedger(hf))
        tags.append(("vorticity", "default"))
    drc = cfg.dr_config()
    if drc is not None:
        phi_for_dr = next(iter(phis.values())) if phis else None
        if phi_for_dr is None:
            raise ConfigurationError("dissipation diagnostics need a test function")
        consumers.append(DRLedger(phi_for_dr, drc))
        tags.append(("dissipation", "default"))

    record = {"path_id": path_id, "blown_up": False}
    try:
        if out["save_snapshots"]:
            from .integrate import integrate

            traj = integrate(params, u0, noise)
            pdir = Path(out["directory"]) / f"trajectory_{path_id:06d}"
            save_trajectory(traj, pdir, run_config=cfg.raw)
            if consumers:
                drive(views_from_trajectory(traj), consumers)
        elif consumers:
            drive(iter_views(params, u0, noise), consumers)
        else:
            from .integrate import integrate

            traj = integrate(params, u0, noise)
            record["final_l2"] = float(np.sqrt(np.sum(np.abs(traj.states[-1].coeffs) ** 2)))
    except BlowUpError as err:
        return {"path_id": path_id, "blown_up": True, "blowup_step": err.step}

    for consumer, (kind, name) in zip(consumers, tags):
        if kind == "energy":
            record.setdefault("energy", {})[name] = _ledger_payload(consumer)
            if out["write_csv"]:
                csv_path = Path(out["directory"]) / "paths" / f"energy_{name}_{path_id:06d}.csv"
                csv_path.parent.mkdir(parents=True, exist_ok=True)
                write_csv(csv_path, consumer.CSV_COLUMNS, consumer.rows())
        elif kind == "vorticity":
            record["vorticity"] = _vorticity_payload(consumer)
            if out["write_csv"]:
                csv_path = Path(out["directory"]) / "paths" / f"vorticity_{path_id:06d}.csv"
                csv_path.parent.mkdir(parents=True, exist_ok=True)
                write_csv(csv_path, consumer.CSV_COLUMNS, consumer.rows())
        else:
            record["dissipation"] = {
                "times": list(consumer.times),
                "series": {str(k): list(v) for k, v in consumer.series.items()},
                "cauchy": consumer.cauchy_differences(),
                "state_l2": list(consumer.state_l2),
            }
    return record


def _worker(args):
    cfg_doc, path_id = args
    cfg = ExperimentConfig.parse(cfg_doc)
    return run_one_path(cfg, path_id)


# ---------------------------------------------------------------------------
# reduction


class _LedgerView:
    """Duck-typed ledger over a stored path record (for the test helpers)."""

    def __init__(self, payload: dict):
        self.times = payload["times"]
        self.martingale = payload["martingale"]
        self.compensator = payload["compensator"]
        self.state_l2 = payload["state_l2"]
        self._initial_energy = payload["initial_energy"]
        self._e = payload["energy_functional"]
        self.qv_predicted = payload["qv_predicted"]
        self.qv_realized = payload["qv_realized"]

    def energy_functional(self, idx):
        return self._e[idx]

    def supermartingale_process(self, idx):
        return self._e[idx] - self.compensator[idx]

    def index_at(self, t):
        times = np.asarray(self.times)
        idx = int(np.argmin(np.abs(times - t)))
        if abs(times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} not on the stored step grid")
        return idx


XI_FUNCTIONALS = {
    "one": lambda led: 1.0,
    "inv_sup_energy": lambda led: 1.0 / (1.0 + max(led.state_l2) ** 2),
}


def summarize(cfg: ExperimentConfig, records: list[dict], wall_clock: float) -> dict:
    """Reduce path records to the ensemble summary with named test outcomes."""
    good = [r for r in records if not r["blown_up"]]
    blown = [r for r in records if r["blown_up"]]
    diag = cfg.diagnostics()
    tests = {}

    def zscore(vals):
        vals = np.asarray(vals, dtype=float)
        if len(vals) < 2:
            return {"mean": float(np.mean(vals)) if len(vals) else 0.0,
                    "stderr": 0.0, "z": 0.0, "n": len(vals)}
        se = float(vals.std(ddof=1) / np.sqrt(len(vals)))
        mean = float(vals.mean())
        return {"mean": mean, "stderr": se,
                "z": mean / se if se > 0 else 0.0, "n": len(vals)}

    for name in cfg.test_functions():
        ledgers = [_LedgerView(r["energy"][name]) for r in good if "energy" in r]
        if not ledgers:
            continue
        block = {"criterion": "martingale_zero_mean_4sigma"}
        nt = zscore([led.martingale[-1] for led in ledgers])
        block["terminal_martingale"] = nt
        block["zero_mean_pass"] = abs(nt["z"]) <= 4.0
        dqv = zscore([led.qv_realized[-1] - led.qv_predicted[-1] for led in ledgers])
        block["qv_gap"] = dqv
        block["qv_consistency_pass"] = abs(dqv["z"]) <= 4.0

        st = diag.get("supermartingale")
        if st is not None and len(ledgers) >= 2:
            rep = supermartingale_test(ledgers, st["s"], st["t"], cfg.events())
            block["supermartingale"] = {
                "criterion": "supermartingale_3sigma_one_sided",
                "statistics": [
                    {"event": s.event, "mean": s.mean, "stderr": s.stderr,
                     "statistic": s.statistic, "n_active": s.n_active}
                    for s in rep.statistics
                ],
                "passed": rep.passed,
            }
        lei = diag.get("lei_xi")
        if lei is not None and len(ledgers) >= 2:
            outcomes = {}
            for xi_name in lei:
                if xi_name not in XI_FUNCTIONALS:
                    raise ConfigurationError(f"diagnostics.lei_xi: unknown functional {xi_name!r}")
                rep = lei_scalar_check(ledgers, XI_FUNCTIONALS[xi_name])
                outcomes[xi_name] = {"lhs": rep.lhs, "rhs": rep.rhs,
                                     "stderr": rep.stderr, "passed": rep.passed}
            block["lei"] = {"criterion": "lei_scalar_3sigma", "outcomes": outcomes}
        tests[f"energy:{name}"] = block

    vort = [r["vorticity"] for r in good if "vorticity" in r]
    if vort:
        nt = zscore([v["martingale"][-1] for v in vort])
        tests["vorticity"] = {
            "criterion": "vorticity_identity_zero_mean_4sigma",
            "terminal_martingale": nt,
            "zero_mean_pass": abs(nt["z"]) <= 4.0,
            "mean_sup_l1": float(np.mean([v["sup_l1"] for v in vort])),
            "mean_grad_norm": float(np.mean([v["grad_norm"] for v in vort])),
            "min_holder_margin": float(min(v["min_holder_margin"] for v in vort)),
            "holder_pass": min(v["min_holder_margin"] for v in vort) >= -1e-12,
            "norm_chain_pass": all(v["norm_chain_ok"] for v in vort),
        }

    dr = [r["dissipation"] for r in good if "dissipation" in r]
    if dr:
        cauchy = np.mean(np.asarray([d["cauchy"] for d in dr]), axis=0)
        tests["dissipation"] = {
            "criterion": "dr_cauchy_trend",
            "mean_cauchy_differences": [float(c) for c in cauchy],
            "nonincreasing": bool(all(b <= a * 1.5 for a, b in zip(cauchy, cauchy[1:]))),
        }

    def collect_passes(obj):
        found = []
        if isinstance(obj, dict):
            for k, v in obj.items():
                if isinstance(v, bool) and (k.endswith("_pass") or k in ("passed", "nonincreasing")):
                    found.append(v)
                else:
                    found.extend(collect_passes(v))
        elif isinstance(obj, list):
            for v in obj:
                found.extend(collect_passes(v))
        return found

    verdicts = collect_passes(tests)
    passed = all(verdicts) if verdicts else True

    return {
        "schema_version": cfg.raw["schema_version"],
        "config_digest": cfg.digest(),
        "code_version": __version__,
        "paths_requested": len(records),
        "paths_completed": len(good),
        "blowups": [{"path_id": r["path_id"], "step": r["blowup_step"]} for r in blown],
        "tests": tests,
        "all_passed": bool(passed),
        "wall_clock_seconds": wall_clock,
    }


# ---------------------------------------------------------------------------
# drivers


def run_experiment(cfg: ExperimentConfig, resume: bool = True) -> dict:
    """Run (or resume) the configured ensemble; returns the summary dict."""
    t0 = time.perf_counter()
    ens = cfg.ensemble_block()
    out = cfg.output_block()
    outdir = Path(out["directory"])
    (outdir / "paths").mkdir(parents=True, exist_ok=True)

    workers = int(os.environ.get(WORKER_ENV, ens["workers"]))
    todo, records = [], {}
    for pid in range(ens["paths"]):
        rpath = outdir / "paths" / f"path_{pid:06d}.json"
        if resume and rpath.exists():
            records[pid] = json.loads(rpath.read_text())
        else:
            todo.append(pid)

    def store(rec):
        pid = rec["path_id"]
        atomic_write_json(outdir / "paths" / f"path_{pid:06d}.json", rec)
        records[pid] = rec

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_worker, [(cfg.raw, pid) for pid in todo]):
                store(rec)
    else:
        for pid in todo:
            store(run_one_path(cfg, pid))

    ordered = [records[pid] for pid in range(ens["paths"])]
    summary = summarize(cfg, ordered, wall_clock=time.perf_counter() - t0)
    atomic_write_json(outdir / "summary.json", summary)
    return summary


def replay(manifest_path, diagnostics_spec: dict, output_dir=None) -> dict:
    """Recompute diagnostics from stored snapshots without re-integration."""
    from .persist import load_trajectory

    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    run_config = manifest.get("run_config")
    if run_config is None:
        raise ConfigurationError("manifest has no embedded run config to replay against")
    doc = json.loads(json.dumps(run_config))
    doc["diagnostics"] = diagnostics_spec
    cfg = ExperimentConfig.parse(doc)
    if manifest["params"]["stride"] != 1:
        raise ConfigurationError("replay diagnostics require a stride-1 trajectory")
    noise = cfg.noise_model()
    traj = load_trajectory(manifest_path.parent, noise)
    phis = cfg.test_functions()
    consumers, tags = [], []
    for name, phi in phis.items():
        consumers.append(EnergyLedger(phi))
        tags.append(("energy", name))
    hf = cfg.h_function()
    if hf is not None:
        consumers.append(VorticityLedger(hf))
        tags.append(("vorticity", "default"))
    drc = cfg.dr_config()
    if drc is not None:
        consumers.append(DRLedger(next(iter(phis.values())), drc))
        tags.append(("dissipation", "default"))
    drive(views_from_trajectory(traj), consumers)

    outdir = Path(output_dir) if output_dir else manifest_path.parent / "replay"
    outdir.mkdir(parents=True, exist_ok=True)
    written = {}
    pid = manifest["params"]["path_id"]
    for consumer, (kind, name) in zip(consumers, tags):
        if kind == "energy":
            path = outdir / f"energy_{name}_{pid:06d}.csv"
            write_csv(path, consumer.CSV_COLUMNS, consumer.rows())
        elif kind == "vorticity":
            path = outdir / f"vorticity_{pid:06d}.csv"
            write_csv(path, consumer.CSV_COLUMNS, consumer.rows())
        else:
            path = outdir / f"dissipation_{pid:06d}.json"
            atomic_write_json(path, {
                "times": list(consumer.times),
                "series": {str(k): list(v) for k, v in consumer.series.items()},
            })
        written[f"{kind}:{name}"] = str(path)
    return written


def report(output_dir) -> dict:
    """Aggregate per-path energy CSVs into plot-ready ensemble statistics."""
    import csv

    outdir = Path(output_dir)
    summary_path = outdir / "summary.json"
    if not summary_path.exists():
        raise ConfigurationError(f"{output_dir}: no summary.json (run the experiment first)")
    summary = json.loads(summary_path.read_text())
    groups: dict[str, list] = {}
    for path in sorted((outdir / "paths").glob("*.csv")):
        stem = path.stem.rsplit("_", 1)[0]
        with open(path) as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array([[float(v) if v not in ("True", "False")
                                           else float(v == "True") for v in r]
                                          for r in rows[1:]])
        groups.setdefault(stem, []).append((header, data))
    written = {}
    for stem, entries in groups.items():
        header = entries[0][0]
        stack = np.stack([d for _, d in entries])
        mean = stack.mean(axis=0)
        std = stack.std(axis=0, ddof=1) if len(entries) > 1 else np.zeros_like(mean)
        out_rows = []
        for i in range(mean.shape[0]):
            out_rows.append(list(mean[i]) + list(std[i]))
        cols = [f"mean_{h}" for h in header] + [f"std_{h}" for h in header]
        path = outdir / f"ensemble_{stem}.csv"
        write_csv(path, cols, out_rows)
        written[stem] = str(path)
    return {"summary": summary, "ensemble_csv": written}
