"""Experiment runners: seed sweeps and depth/energy sweeps."""
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .data import Dataset
from .errors import ParameterError
from .models import make_model

RESULT_FIELDS = ("model", "dataset", "seed", "mean_w2", "sd_w2", "epochs", "seconds", "status")
SUMMARY_FIELDS = ("model", "runs", "mean_w2", "sd_w2", "table")
DEPTHS = (1, 2, 4, 8)
ENERGY_MODELS = ("gcn", "gsnn_diag", "gsnn_orth", "gsnn_gen")


@dataclass
class RunRecord:
    model: str
    dataset: str
    seed: int
    mean_w2: float
    sd_w2: float
    epochs: int
    seconds: float
    ok: bool = True

    def row(self) -> dict:
        out = {k: getattr(self, k) for k in RESULT_FIELDS[:-1]}
        out["status"] = "ok" if self.ok else "failed"
        for k in ("mean_w2", "sd_w2", "seconds"):
            out[k] = _fmt(out[k])
        return out


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("GSL_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"GSL_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _run_one(job: tuple) -> RunRecord:
    name, ds, dataset_id, seed, params = job
    torch.set_num_threads(1)
    t = time.perf_counter()
    try:
        est = make_model(name, seed=seed, **params).fit(ds)
        res = est.evaluate(ds, "test")
        ok = bool(np.isfinite(res.mean)) and not est.aborted_
        return RunRecord(name, dataset_id, seed, res.mean, res.sd, est.n_epochs_, time.perf_counter() - t, ok)
    except (ArithmeticError, torch.linalg.LinAlgError):
        # numeric failures are reported in the row, not raised, so partial sweeps survive
        return RunRecord(name, dataset_id, seed, float("nan"), float("nan"), 0, time.perf_counter() - t, False)


def _map(jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        # map preserves submission order, so rows come out in (model, seed) order
        return list(pool.map(_run_one, jobs))


def sweep(ds: Dataset, models, seeds: int = 10, base_seed: int = 0, params: dict | None = None,
          dataset_id: str = "dataset", workers: int | None = None) -> list:
    """Train and test every model for seeds ``base_seed .. base_seed + seeds - 1``."""
    if seeds < 1:
        raise ParameterError("need at least one seed")
    params = dict(params or {})
    jobs = [(m, ds, dataset_id, base_seed + i, params) for m in models for i in range(seeds)]
    return _map(jobs, worker_count(workers))


def summarize(records: list) -> list:
    """Per-model mean and sd of the per-run test means, computed from the values as written."""
    out = []
    for model in dict.fromkeys(r.model for r in records):
        vals = np.array([float(_fmt(r.mean_w2)) for r in records if r.model == model and r.ok])
        if len(vals):
            mean, sd = float(vals.mean()), float(vals.std())
        else:
            mean = sd = float("nan")
        out.append({"model": model, "runs": len(vals), "mean_w2": repr(mean), "sd_w2": repr(sd),
                    "table": f"{_fmt(mean)} ± {_fmt(sd)}"})
    return out


def _write_csv(path: Path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def write_sweep(records: list, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", RESULT_FIELDS, [r.row() for r in records])
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, summarize(records))
    (out / "results.json").write_text(json.dumps([asdict(r) for r in records], indent=1))
    return {"results": out / "results.csv", "summary": out / "summary.csv"}


def _energy_job(job: tuple) -> dict:
    name, ds, depth, seed, params = job
    torch.set_num_threads(1)
    est = make_model(name, layers=depth, seed=seed, **params).fit(ds)
    res = est.evaluate(ds, "test")
    return {"model": name, "depth": depth, "seed": seed, "mean_w2": res.mean, "sd_w2": res.sd,
            "energies": est.layer_energies(ds) if hasattr(est, "layer_energies") else [],
            "ok": not est.aborted_}


def energy_sweep(ds: Dataset, models=ENERGY_MODELS, depths=DEPTHS, seeds: int = 1, base_seed: int = 0,
                 params: dict | None = None, workers: int | None = None) -> dict:
    """Train each model at each depth; collect test W2 and per-layer Dirichlet energies.

    Returns ``{"runs": [...], "w2": [...], "energy": [...]}``.  ``w2`` has one
    row per (model, depth) averaged over seeds.  ``energy`` lists, per model,
    the layer-wise energies of the deepest model and the final-layer energy
    of the model trained at each depth.
    """
    params = dict(params or {})
    params.pop("layers", None)
    jobs = [(m, ds, d, base_seed + i, params) for m in models for d in depths for i in range(seeds)]
    workers = worker_count(workers)
    if workers <= 1:
        runs = [_energy_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            runs = list(pool.map(_energy_job, jobs))
    w2, energy = [], []
    deepest = max(depths)
    for m in models:
        for d in depths:
            sel = [r for r in runs if r["model"] == m and r["depth"] == d]
            means = np.array([r["mean_w2"] for r in sel])
            w2.append({"model": m, "depth": d, "mean_w2": float(means.mean()), "sd_w2": float(means.std())})
            if all(r["energies"] for r in sel):
                final = np.mean([r["energies"][-1] for r in sel])
                energy.append({"model": m, "kind": "final_layer", "index": d, "energy": float(final)})
        sel = [r for r in runs if r["model"] == m and r["depth"] == deepest]
        if not all(r["energies"] for r in sel):
            continue
        per_layer = np.mean([r["energies"] for r in sel], axis=0)
        for layer, e in enumerate(per_layer, start=1):
            energy.append({"model": m, "kind": "layer_of_deepest", "index": layer, "energy": float(e)})
    return {"runs": runs, "w2": w2, "energy": energy}


def write_energy(result: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "depth_w2.csv", ("model", "depth", "mean_w2", "sd_w2"),
               [{**r, "mean_w2": _fmt(r["mean_w2"]), "sd_w2": _fmt(r["sd_w2"])} for r in result["w2"]])
    _write_csv(out / "energy.csv", ("model", "kind", "index", "energy"),
               [{**r, "energy": _fmt(r["energy"])} for r in result["energy"]])
    (out / "energy.json").write_text(json.dumps(result, indent=1, default=float))
    return {"w2": out / "depth_w2.csv", "energy": out / "energy.csv"}
