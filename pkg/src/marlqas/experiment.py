"""Experiment orchestration: training and baseline runs, reports, summaries and verification.

Layout under the output directory::

    <problem>-n<n>-m<m>/seed-<s>/   train_log.csv, eval_log.csv, trace.json,
                                    best_circuit.txt, params.json, report.json
    <problem>-n<n>-<qaoa|hea><d>/   circuits/*.txt, report.json
    summary/                        comparison.csv/json, steps.csv/json, *.png
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from .circuit import Circuit, cnot_count, param_count
from .config import ExperimentConfig
from .env import Problem, SystemLayout, evaluate_circuit
from .graphs import Graph, enumerate_cubic_graphs, split_instances
from .nn import save_params
from .problems import SchwingerParams, hea_circuit, maxcut_hamiltonian, qaoa_circuit, schwinger_hamiltonian
from .statevec import PauliHamiltonian
from .train import LOG_COLUMNS, TrainingResult, train
from .vqopt import EnergyFunction, approximation_ratio

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EVAL_COLUMNS = ("updates", "env_steps", "episodes", "eta", "steps", "n_2q", "satisfactory")


class ReportError(ValueError):
    pass


# -- instances -----------------------------------------------------------------


def build_instances(cfg: ExperimentConfig) -> dict[str, list[dict]]:
    """Serializable descriptions of the train and test instances."""
    if cfg.problem == "schwinger":
        s = cfg.schwinger
        inst = {"type": "schwinger", "n": cfg.n, "w": s.w, "m0": s.m0, "g_bar": s.g_bar,
                "eps0": s.eps0, "electric_sites": s.electric_sites}
        return {"train": [inst], "test": []}
    M, K = cfg.split_sizes
    try:
        split = split_instances(enumerate_cubic_graphs(cfg.n), M, K, cfg.instances.split_seed)
    except ValueError as exc:
        raise config_mod.ConfigError(str(exc)) from exc

    def describe(g: Graph) -> dict:
        return {"type": "maxcut", "n": g.n_vertices, "edges": [list(e) for e in sorted(g.edges)]}

    return {"train": [describe(g) for g in split.train], "test": [describe(g) for g in split.test]}


def instance_hamiltonian(inst: dict) -> PauliHamiltonian:
    if inst["type"] == "maxcut":
        return maxcut_hamiltonian(Graph.from_edges(inst["n"], inst["edges"]))
    if inst["type"] == "schwinger":
        p = SchwingerParams(inst["w"], inst["m0"], inst["g_bar"], inst["eps0"])
        return schwinger_hamiltonian(inst["n"], p, electric_sites=inst["electric_sites"])
    raise ReportError(f"unknown instance type {inst['type']!r}")


def build_problem(cfg: ExperimentConfig, instances: dict[str, list[dict]] | None = None) -> Problem:
    instances = instances or build_instances(cfg)
    return Problem(
        cfg.problem,
        [instance_hamiltonian(i) for i in instances["train"]],
        [instance_hamiltonian(i) for i in instances["test"]],
    )


# -- file helpers --------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def run_dir_name(cfg: ExperimentConfig) -> str:
    return f"{cfg.problem}-n{cfg.n}-m{cfg.n_agents}"


# -- training ------------------------------------------------------------------


@dataclass
class SeedOutcome:
    seed: int
    report_path: Path
    converged: bool


def _train_one(cfg: ExperimentConfig, seed: int, out: Path, deterministic: bool) -> SeedOutcome:
    instances = build_instances(cfg)
    problem = build_problem(cfg, instances)
    layout = SystemLayout(cfg.n, cfg.n_agents)
    env_cfg = cfg.env_config()
    run = out / run_dir_name(cfg) / f"seed-{seed}"
    run.mkdir(parents=True, exist_ok=True)
    try:
        res = train(problem, layout, env_cfg, cfg.trainer, seed, cfg.limits, deterministic=deterministic)
    except Exception as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            write_csv(run / "train_log.csv", LOG_COLUMNS, partial.rows)
            write_json(run / "diagnostics.json", {
                "error": str(exc), "totals": vars(partial.totals), "last_rows": partial.rows[-20:],
            })
        raise
    report = _training_report(cfg, seed, instances, res, run)
    write_json(run / "report.json", report)
    return SeedOutcome(seed, run / "report.json", res.converged is not None)


def _training_report(cfg: ExperimentConfig, seed: int, instances, res: TrainingResult, run: Path) -> dict:
    write_csv(run / "train_log.csv", LOG_COLUMNS, res.rows)
    write_csv(run / "eval_log.csv", EVAL_COLUMNS, res.evals)
    write_json(run / "trace.json", {"episodes": res.traces})
    save_params(run / "params.json", res.learner.params, seed=seed, updates=res.learner.updates)
    best = None
    if res.best is not None:
        (run / "best_circuit.txt").write_text(res.best.circuit.to_text())
        best = res.best.summary()
        best["circuit_file"] = "best_circuit.txt"
        best["eta_train"] = float(np.mean(res.best.train_etas))
        best["eta_test"] = float(np.mean(res.best.test_etas)) if res.best.test_etas else None
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "training",
        "method": "MARL-QAS" if cfg.n_agents > 1 else "DQN",
        "problem": cfg.problem,
        "n": cfg.n,
        "agents": cfg.n_agents,
        "seed": seed,
        "config": config_mod.to_dict(cfg.resolved()),
        "instances": instances,
        "milestones": {
            "first_found": vars(res.first_found) if res.first_found else None,
            "converged": vars(res.converged) if res.converged else None,
            "totals": vars(res.totals),
        },
        "best": best,
        "files": {"log": "train_log.csv", "evals": "eval_log.csv", "trace": "trace.json",
                  "checkpoint": "params.json"},
    }


def run_training(cfg: ExperimentConfig, out: Path, seeds: list[int] | None = None,
                 deterministic: bool = False, workers: int = 1) -> list[SeedOutcome]:
    """One full training per seed; seeds run in parallel processes unless deterministic."""
    seeds = seeds if seeds is not None else cfg.seed_list
    out = Path(out)
    if deterministic or workers <= 1 or len(seeds) == 1:
        return [_train_one(cfg, s, out, deterministic) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_train_one, cfg, s, out, False) for s in seeds]
        return [f.result() for f in futures]


# -- baselines -----------------------------------------------------------------


def baseline_circuit(cfg: ExperimentConfig, inst: dict, depth: int) -> Circuit:
    if cfg.baseline.kind == "qaoa":
        if inst["type"] != "maxcut":
            raise config_mod.ConfigError("the QAOA baseline needs a Max-Cut problem")
        return qaoa_circuit(Graph.from_edges(inst["n"], inst["edges"]), depth)
    return hea_circuit(inst["n"], depth)


def run_baseline(cfg: ExperimentConfig, out: Path) -> Path:
    if cfg.baseline.kind == "none":
        raise config_mod.ConfigError("baseline.kind is 'none'; set it to qaoa or hea")
    depth = cfg.baseline_depth()
    if depth < 1:
        raise config_mod.ConfigError("baseline depth must be >= 1")
    opt = cfg.baseline.qaoa_optimizer if cfg.baseline.kind == "qaoa" else cfg.baseline.hea_optimizer
    instances = build_instances(cfg)
    seed = cfg.seed_list[0]
    run = Path(out) / f"{cfg.problem}-n{cfg.n}-{cfg.baseline.kind}{depth}"
    (run / "circuits").mkdir(parents=True, exist_ok=True)
    results: dict[str, list[dict]] = {}
    metrics = set()
    for split in ("train", "test"):
        results[split] = []
        for i, inst in enumerate(instances[split]):
            c = baseline_circuit(cfg, inst, depth)
            ev = evaluate_circuit(c, [instance_hamiltonian(inst)], opt, (seed, "baseline", split, i))
            name = f"circuits/{split}_{i}.txt"
            (run / name).write_text(c.to_text())
            metrics.add((cnot_count(c), param_count(c)))
            results[split].append({"eta": ev.etas[0], "energy": ev.energies[0],
                                   "params": ev.params[0].tolist(), "circuit_file": name})
    n_2q, n_par = max(metrics)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "baseline",
        "method": cfg.baseline.kind.upper(),
        "problem": cfg.problem,
        "n": cfg.n,
        "depth": depth,
        "seed": seed,
        "config": config_mod.to_dict(cfg.resolved()),
        "instances": instances,
        "results": results,
        "n_2q": n_2q,
        "n_par": n_par,
        "eta_train": float(np.mean([r["eta"] for r in results["train"]])),
        "eta_test": float(np.mean([r["eta"] for r in results["test"]])) if results["test"] else None,
    }
    write_json(run / "report.json", report)
    return run / "report.json"


# -- reports -------------------------------------------------------------------


def load_report(path: Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ReportError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    if doc.get("kind") not in ("training", "baseline"):
        raise ReportError(f"{path}: unknown report kind {doc.get('kind')!r}")
    doc["_path"] = str(path)
    return doc


def find_reports(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.rglob("report.json")))
        else:
            out.append(p)
    return out


# -- summaries -----------------------------------------------------------------

COMPARISON_COLUMNS = ("problem", "n", "method", "agents", "depth", "M", "K", "runs", "satisfactory_runs",
                      "eta", "eta_train", "eta_test", "n_2q", "n_par", "best_seed")
STEP_COLUMNS = ("problem", "n", "agents", "seeds", "converged", "metric", "median", "q1", "q3",
                "values")
STEP_METRICS = ("updates", "env_steps", "episodes")


def _score(best: dict) -> tuple[float, int]:
    eta = best["eta_test"] if best.get("eta_test") is not None else best["eta_train"]
    return (eta, -best["n_2q"])


def comparison_rows(reports: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in reports:
        key = (r["problem"], r["n"], r["method"], r.get("agents"), r.get("depth"))
        groups.setdefault(key, []).append(r)
    rows = []
    for (problem, n, method, agents, depth), rs in sorted(groups.items(), key=lambda kv: _sort_key(kv[0])):
        inst = rs[0]["instances"]
        row = {"problem": problem, "n": n, "method": method, "agents": agents, "depth": depth,
               "M": len(inst["train"]), "K": len(inst["test"]), "runs": len(rs)}
        if rs[0]["kind"] == "baseline":
            b = rs[0]
            row.update(satisfactory_runs=None, eta=b["eta_test"] if b["eta_test"] is not None else b["eta_train"],
                       eta_train=b["eta_train"], eta_test=b["eta_test"], n_2q=b["n_2q"], n_par=b["n_par"],
                       best_seed=b["seed"])
        else:
            sat = [r for r in rs if r["best"] is not None]
            row["satisfactory_runs"] = len(sat)
            if sat:
                top = max(sat, key=lambda r: (_score(r["best"]), -r["seed"]))
                b = top["best"]
                row.update(eta=_score(b)[0], eta_train=b["eta_train"], eta_test=b["eta_test"],
                           n_2q=b["n_2q"], n_par=b["n_par"], best_seed=top["seed"])
        rows.append(row)
    return rows


def _sort_key(key):
    problem, n, method, agents, depth = key
    return (problem, n, method, agents or 0, depth or 0)


def quartiles(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(med), float(q1), float(q3)


def step_counts(report: dict) -> dict[str, int]:
    """Steps to the first satisfactory greedy circuit; unconverged runs count their totals."""
    m = report["milestones"]
    return m["converged"] or m["totals"]


def step_rows(reports: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in reports:
        if r["kind"] == "training":
            groups.setdefault((r["problem"], r["n"], r["agents"]), []).append(r)
    rows = []
    for (problem, n, agents), rs in sorted(groups.items()):
        rs = sorted(rs, key=lambda r: r["seed"])
        for metric in STEP_METRICS:
            vals = [step_counts(r)[metric] for r in rs]
            med, q1, q3 = quartiles(vals)
            rows.append({"problem": problem, "n": n, "agents": agents, "seeds": len(rs),
                         "converged": sum(r["milestones"]["converged"] is not None for r in rs),
                         "metric": metric, "median": med, "q1": q1, "q3": q3,
                         "values": " ".join(map(str, vals))})
    return rows


def speedup(rows: list[dict], problem: str, n: int, metric: str = "updates", multi: int | None = None):
    """Ratio of median steps, multi-agent over single-agent (None when either is missing)."""
    med = {r["agents"]: r["median"] for r in rows
           if r["problem"] == problem and r["n"] == n and r["metric"] == metric}
    if 1 not in med:
        return None
    others = [a for a in med if a > 1] if multi is None else [multi]
    if not others or others[0] not in med:
        return None
    base = med[1]
    return med[max(others)] / base if base > 0 else math.inf


def summarize(paths, out: Path, figures: bool = True) -> dict[str, Path]:
    files = find_reports(paths)
    if not files:
        raise ReportError("summarize needs at least one report")
    reports = [load_report(p) for p in files]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    comp = comparison_rows(reports)
    steps = step_rows(reports)
    written = {}
    write_csv(out / "comparison.csv", COMPARISON_COLUMNS, comp)
    write_json(out / "comparison.json", {"schema_version": SCHEMA_VERSION, "rows": comp})
    write_csv(out / "steps.csv", STEP_COLUMNS, steps)
    write_json(out / "steps.json", {"schema_version": SCHEMA_VERSION, "rows": steps})
    written.update(comparison=out / "comparison.csv", steps=out / "steps.csv")
    if figures:
        from . import plotting
        written.update(plotting.render_all(reports, comp, steps, out))
    return written


# -- verification --------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


def _eta_from_params(circuit: Circuit, inst: dict, params) -> float:
    h = instance_hamiltonian(inst)
    return approximation_ratio(EnergyFunction(circuit, h)(np.asarray(params, dtype=float)), h.bounds)


def _close(a, b, tol=1e-9) -> bool:
    return abs(a - b) <= tol


def verify_report(report: dict) -> list[Check]:
    """Re-derive every summarized number of one report from the files next to it."""
    base = Path(report["_path"]).parent
    checks: list[Check] = []
    if report["kind"] == "baseline":
        for split, results in report["results"].items():
            for i, r in enumerate(results):
                c = Circuit.from_text((base / r["circuit_file"]).read_text())
                checks.append(Check(f"{split}[{i}] n_2q/n_par",
                                    (cnot_count(c), param_count(c)) == (report["n_2q"], report["n_par"])))
                eta = _eta_from_params(c, report["instances"][split][i], r["params"])
                checks.append(Check(f"{split}[{i}] eta", _close(eta, r["eta"]), f"{eta} vs {r['eta']}"))
        return checks
    rows = read_csv(base / report["files"]["log"])
    totals = report["milestones"]["totals"]
    checks.append(Check("log length = env steps", len(rows) == totals["env_steps"]))
    if rows:
        checks.append(Check("log final update", int(rows[-1]["update"]) == totals["updates"]))
    evals = read_csv(base / report["files"]["evals"])
    first = next((e for e in evals if e["satisfactory"] == "1"), None)
    conv = report["milestones"]["converged"]
    expect = None if first is None else {k: int(first[k]) for k in STEP_METRICS}
    checks.append(Check("converged milestone", expect == conv, f"{expect} vs {conv}"))
    best = report["best"]
    if best is not None:
        c = Circuit.from_text((base / best["circuit_file"]).read_text())
        checks.append(Check("n_2q", cnot_count(c) == best["n_2q"]))
        checks.append(Check("n_par", param_count(c) == best["n_par"]))
        for split in ("train", "test"):
            etas = [_eta_from_params(c, inst, p)
                    for inst, p in zip(report["instances"][split], best[f"{split}_params"])]
            ok = len(etas) == len(best[f"{split}_etas"]) and all(
                _close(a, b) for a, b in zip(etas, best[f"{split}_etas"]))
            checks.append(Check(f"{split} etas", ok))
            if etas:
                ref = best[f"eta_{split}"]
                checks.append(Check(f"eta_{split} mean", _close(float(np.mean(etas)), ref)))
            if etas:
                thr = report["config"]["env"]["eta_threshold"]
                checks.append(Check(f"{split} threshold", all(e >= thr for e in etas)))
    return checks
