"""Figures for the summary: step counts per agent count, circuit metrics, greedy-evaluation curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import read_csv, step_counts  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_steps(reports: list[dict], out: Path) -> Path | None:
    """Box plot of gradient updates to the first satisfactory greedy circuit, per (problem, n, m)."""
    groups: dict[tuple, list[int]] = {}
    for r in reports:
        if r["kind"] == "training":
            groups.setdefault((r["problem"], r["n"], r["agents"]), []).append(step_counts(r)["updates"])
    if not groups:
        return None
    keys = sorted(groups)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.boxplot([groups[k] for k in keys], showmeans=False)
        ax.set_xticks(range(1, len(keys) + 1))
        ax.set_xticklabels([f"{p}\nn={n} m={m}" for p, n, m in keys], fontsize=7)
        ax.set_ylabel("gradient updates to threshold")
        ax.set_yscale("symlog", linthresh=10)
        return _save(fig, out / "steps.png")


def plot_comparison(rows: list[dict], out: Path) -> Path | None:
    """N_2q and N_par against n for every method that produced a circuit."""
    rows = [r for r in rows if r.get("n_2q") is not None]
    if not rows:
        return None
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
        series: dict[str, list[dict]] = {}
        for r in rows:
            label = r["method"] if r["method"] in ("QAOA", "HEA") else f"{r['method']} m={r['agents']}"
            series.setdefault(f"{r['problem']}: {label}", []).append(r)
        for label, rs in sorted(series.items()):
            rs = sorted(rs, key=lambda r: r["n"])
            ns = [r["n"] for r in rs]
            axes[0].plot(ns, [r["n_2q"] for r in rs], "o-", label=label)
            axes[1].plot(ns, [r["n_par"] for r in rs], "o-", label=label)
        axes[0].set_ylabel("CNOT count")
        axes[1].set_ylabel("parameters")
        for ax in axes:
            ax.set_xlabel("qubits n")
        axes[1].legend(fontsize=7, frameon=False)
        return _save(fig, out / "comparison.png")


def plot_curves(reports: list[dict], out: Path) -> Path | None:
    """Greedy-rollout eta against gradient updates, one line per seed."""
    runs = [r for r in reports if r["kind"] == "training"]
    if not runs:
        return None
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        colors = {}
        for r in sorted(runs, key=lambda r: (r["problem"], r["n"], r["agents"], r["seed"])):
            rows = read_csv(Path(r["_path"]).parent / r["files"]["evals"])
            if not rows:
                continue
            key = (r["problem"], r["n"], r["agents"])
            label = None
            if key not in colors:
                colors[key] = f"C{len(colors) % 10}"
                label = f"{key[0]} n={key[1]} m={key[2]}"
            ax.plot([int(e["updates"]) for e in rows], [float(e["eta"]) for e in rows],
                    color=colors[key], lw=0.8, alpha=0.8, label=label)
        thr = runs[0]["config"]["env"]["eta_threshold"]
        ax.axhline(thr, color="k", ls=":", lw=0.8)
        ax.set_xlabel("gradient updates")
        ax.set_ylabel("greedy eta")
        ax.set_xscale("symlog", linthresh=10)
        if colors:
            ax.legend(fontsize=7, frameon=False)
        return _save(fig, out / "curves.png")


def render_all(reports, comparison, steps, out: Path) -> dict[str, Path]:
    out = Path(out)
    made = {
        "steps_figure": plot_steps(reports, out),
        "comparison_figure": plot_comparison(comparison, out),
        "curves_figure": plot_curves(reports, out),
    }
    return {k: v for k, v in made.items() if v is not None}
