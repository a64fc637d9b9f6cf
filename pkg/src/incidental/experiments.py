"""Experiment drivers.

Each ``run_*`` function takes a flat parameter dict (see ``DEFAULTS``), runs its
cells, writes ``<out>/<experiment>/<cell-id>/{trace,summary}.csv`` and
``plot.svg`` when ``out`` is given, and returns an in-memory summary.
Every file starts with the fully resolved parameters as ``# key = value`` lines.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    classify_collisions,
    count_polysemantic,
    expected_polysemantic,
    predicted_l1,
    predicted_m_prime,
    relative_variance_bounds,
)
from .core import EPS_ZERO, ModelConfig, NoiseSpec, init_weights, make_rng, metrics_table, relative_variance
from .l1_model import loss_l1, run_l1, train_l1, train_l1_batch
from .noise_model import train_noisy, train_noisy_batch
from .svg import Chart, heatmap
from .trace import TrainingTrace, log_schedule, record_schedule, write_table

DEFAULTS = {
    "sparsify": dict(n=1, m=100_000, lam=1e-5, eta=0.1, init_scale=0.9, interference=False,
                     seed=0, t_max=5e5, per_decade=40),
    "collide": dict(n=64, ms=[64, 128, 256, 512, 1024], seeds=16, lam=0.03, eta=0.2, init_scale=0.9,
                    t_max=500.0, threshold=0.5, seed=0),
    "noise-sweep": dict(n=8, m=16, sigmas=[0.01, 0.03, 0.1, 0.15, 0.3, 1.0, 3.0],
                        variants=["bipolar", "uniform", "gaussian"], eta=0.03, steps=20_000,
                        seeds=4, lams=[1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3], l1_eta=0.1, init_scale=0.9,
                        seed=0, record_every=200),
    "instance": dict(n=8, m=16, noise="bipolar:0.15", eta=0.03, steps=30_000, init_scale=0.9,
                     seed=0, record_every=100, compromise_below=0.5),
    "split-neuron": dict(n=2, m=4, lam=0.03, eta=0.2, steps=2500, retrain_steps=2500, runs=32,
                         perturb_scale=1e-3, threshold=0.5, init_scale=0.9, seed=0),
}

# Above sigma ~ 0.4 a fixed eta diverges; the per-cell rate shrinks like 1/sigma^2.
NOISE_STABILITY = 0.005


def cell_eta(eta: float, sigma: float) -> float:
    return min(eta, NOISE_STABILITY / sigma**2) if sigma > 0 else eta


def _meta(experiment: str, params: dict) -> dict:
    meta = {"experiment": experiment, "version": __version__}
    meta.update({k: (",".join(map(str, v)) if isinstance(v, (list, tuple)) else v) for k, v in params.items()})
    return meta


def _cell_dir(out, experiment, cell):
    if out is None:
        return None
    d = Path(out) / experiment / cell
    d.mkdir(parents=True, exist_ok=True)
    return d


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# -- sparsify ---------------------------------------------------------------

def run_sparsify(params: dict, out=None, emit=("csv", "svg")) -> dict:
    p = {**DEFAULTS["sparsify"], **params}
    cfg = ModelConfig(n=p["n"], m=p["m"], lam=p["lam"], eta=p["eta"], init_scale=p["init_scale"],
                      interference=p["interference"], seed=p["seed"],
                      steps=int(round(p["t_max"] / p["eta"])))
    W0 = init_weights(cfg)
    x0 = np.abs(W0[0])
    order = np.sort(x0)[::-1]
    trace = TrainingTrace(meta=_meta("sparsify", p))
    rows = []

    def rec(step, W):
        t = cfg.eta * step
        trace.record(step, t, W, loss_l1(W, cfg.lam), EPS_ZERO)
        w = np.abs(W[0])
        live = w[w > 0]
        mp = live.size
        rv = relative_variance(live) if mp else math.nan
        lo, hi = relative_variance_bounds(order, mp) if mp else (math.nan, math.nan)
        pl = predicted_l1(t, cfg.m, cfg.lam) if cfg.lam > 0 else math.nan
        rows.append((step, t, float(w.sum()), int(mp), pl, pl**2, rv, lo, hi))

    final = run_l1(W0, cfg.lam, cfg.eta, cfg.steps, cfg.interference, on_record=rec,
                   schedule=log_schedule(cfg.steps, p["per_decade"]))
    header = ["step", "t", "l1", "m_prime", "predicted_l1", "predicted_m_prime",
              "relative_variance", "rv_low", "rv_high"]
    d = _cell_dir(out, "sparsify", f"m{cfg.m}_lam{cfg.lam:g}_seed{cfg.seed}")
    if d is not None:
        if "csv" in emit:
            trace.to_csv(d / "trace.csv")
            write_table(d / "summary.csv", header, rows, trace.meta)
        if "svg" in emit:
            arr = np.array([r[1:6] for r in rows], dtype=float)
            ch = Chart("l1 norm and nonzero count vs training time", "t", "value", logx=True, logy=True)
            ch.line(arr[:, 0], arr[:, 1], "|W|_1").line(arr[:, 0], arr[:, 2], "m'")
            if cfg.lam > 0:
                ch.line(arr[:, 0], arr[:, 3], "theory |W|_1", dashed=True)
                ch.line(arr[:, 0], arr[:, 4], "theory m'", dashed=True)
            ch.save(d / "plot.svg")
            arr2 = np.array([r[6:] for r in rows], dtype=float)
            rv = Chart("relative variance of nonzero weights", "t", "Var/E^2", logx=True)
            rv.line(arr[:, 0], arr2[:, 0], "empirical").line(arr[:, 0], arr2[:, 1], "low", dashed=True)
            rv.line(arr[:, 0], arr2[:, 2], "high", dashed=True).save(d / "relative_variance.svg")
        if "final-matrix" in emit:
            np.savetxt(d / "final_matrix.csv", final, delimiter=",", fmt="%.17g")
    return {"config": cfg, "trace": trace, "rows": rows, "header": header, "final": final, "initial": W0}


# -- collide ----------------------------------------------------------------

def _collide_cell(args):
    n, m, seed, p = args
    cfg = ModelConfig(n=n, m=m, lam=p["lam"], eta=p["eta"], init_scale=p["init_scale"], seed=seed,
                      steps=int(round(p["t_max"] / p["eta"])))
    W0 = init_weights(cfg)
    rep = classify_collisions(W0)
    W, trace = train_l1(cfg, W0=W0, record_at=log_schedule(cfg.steps, 8))
    count, poly = count_polysemantic(W, p["threshold"])
    return {"m": m, "seed": seed, "collisions": len(rep.collisions), "benign": rep.benign_count,
            "malign": rep.malign_count, "polysemantic": count, "final": W, "trace": trace}


def run_collide(params: dict, out=None, emit=("csv", "svg"), workers: int = 1) -> dict:
    p = {**DEFAULTS["collide"], **params}
    n = p["n"]
    seeds = _seed_list(p)
    cells = [(n, int(m), s, p) for m in p["ms"] for s in seeds]
    results = _map(_collide_cell, cells, workers)
    meta = _meta("collide", p)
    per_m = {}
    for r in results:
        per_m.setdefault(r["m"], []).append(r["polysemantic"])
        d = _cell_dir(out, "collide", f"n{n}_m{r['m']}_seed{r['seed']}")
        if d is not None:
            if "csv" in emit:
                r["trace"].meta.update(meta)
                r["trace"].to_csv(d / "trace.csv")
            if "final-matrix" in emit:
                np.savetxt(d / "final_matrix.csv", r["final"], delimiter=",", fmt="%.17g")
    ms = sorted(per_m)
    means = np.array([np.mean(per_m[m]) for m in ms])
    preds = np.array([expected_polysemantic(n, m) for m in ms])
    summary = {"n": n, "ms": ms, "mean": means, "predicted": preds, "runs": results}
    if out is not None:
        d = Path(out) / "collide"
        d.mkdir(parents=True, exist_ok=True)
        if "csv" in emit:
            write_table(d / "summary.csv", ["m", "seed", "collisions", "benign", "malign", "polysemantic", "predicted"],
                        [(r["m"], r["seed"], r["collisions"], r["benign"], r["malign"], r["polysemantic"],
                          expected_polysemantic(n, r["m"])) for r in results], meta)
            write_table(d / "means.csv", ["m", "mean_polysemantic", "predicted"], zip(ms, means, preds), meta)
        if "svg" in emit:
            ch = Chart(f"polysemantic neurons, n = {n}", "hidden neurons m", "count", logx=True, logy=True)
            ch.scatter([r["m"] for r in results], [max(r["polysemantic"], 0.5) for r in results], "runs (0 shown at 0.5)")
            ch.line(ms, means, "mean").line(ms, preds, "n(n-1)/4m", dashed=True)
            ch.save(d / "plot.svg")
    return summary


def _seed_list(p):
    s = p["seeds"]
    if isinstance(s, (list, tuple)):
        return [int(x) for x in s]
    return [p.get("seed", 0) + k for k in range(int(s))]


# -- noise sweep ------------------------------------------------------------

def _noise_cell(args):
    variant, sigma, p = args
    spec = NoiseSpec.matched(variant, sigma)
    eta = cell_eta(p["eta"], sigma)
    cfg = ModelConfig(n=p["n"], m=p["m"], eta=eta, init_scale=p["init_scale"], noise=spec, steps=p["steps"])
    sched = record_schedule(cfg.steps, p["record_every"])
    curve = []

    def rec(step, W, loss):
        mt = metrics_table(W)
        curve.append((step, eta * step, float(mt["l4p4"].mean()), float(mt["l2sq"].mean())))

    try:
        _, W = train_noisy_batch(cfg, _seed_list(p), on_record=rec, schedule=sched)
        diverged = False
    except FloatingPointError:
        W, diverged = None, True
    return {"variant": variant, "sigma": sigma, "eta": eta, "curve": curve, "diverged": diverged,
            "final_l4p4": curve[-1][2] if curve and not diverged else math.nan,
            "final_l2sq": curve[-1][3] if curve and not diverged else math.nan}


def _l1_cell(args):
    lam, p = args
    cfg = ModelConfig(n=p["n"], m=p["m"], lam=lam, eta=p["l1_eta"], init_scale=p["init_scale"], steps=p["steps"])
    _, W = train_l1_batch(cfg, _seed_list(p))
    mt = metrics_table(W)
    return {"lam": lam, "final_l4p4": float(mt["l4p4"].mean()), "final_l2sq": float(mt["l2sq"].mean())}


def run_noise_sweep(params: dict, out=None, emit=("csv", "svg"), workers: int = 1) -> dict:
    p = {**DEFAULTS["noise-sweep"], **params}
    cells = [(v, float(s), p) for v in p["variants"] for s in p["sigmas"]]
    results = _map(_noise_cell, cells, workers)
    l1_results = _map(_l1_cell, [(float(lam), p) for lam in p["lams"]], workers)
    ref = 3.0 / p["m"]
    meta = _meta("noise-sweep", p)
    if out is not None:
        root = Path(out) / "noise-sweep"
        for r in results:
            d = _cell_dir(out, "noise-sweep", f"{r['variant']}_sigma{r['sigma']:g}")
            if "csv" in emit:
                write_table(d / "summary.csv", ["step", "t", "mean_l4p4", "mean_l2sq"], r["curve"],
                            {**meta, "cell_eta": r["eta"], "diverged": r["diverged"]})
        if "csv" in emit:
            write_table(root / "summary.csv", ["variant", "sigma", "eta", "final_mean_l4p4", "final_mean_l2sq", "diverged"],
                        [(r["variant"], r["sigma"], r["eta"], r["final_l4p4"], r["final_l2sq"], str(r["diverged"]))
                         for r in results], meta)
            write_table(root / "l1_summary.csv", ["lam", "final_mean_l4p4", "final_mean_l2sq"],
                        [(r["lam"], r["final_l4p4"], r["final_l2sq"]) for r in l1_results], meta)
        if "svg" in emit:
            ch = Chart("mean |W_i|_4^4 during training", "t", "mean l4p4", logx=True, logy=True)
            for r in results:
                if r["curve"] and not r["diverged"]:
                    c = np.array(r["curve"])
                    ch.line(c[1:, 1], c[1:, 2], f"{r['variant']} {r['sigma']:g}")
            ch.save(root / "traces.svg")
            fin = Chart("final mean |W_i|_4^4 vs noise std", "sigma", "mean l4p4", logx=True, logy=True)
            for v in p["variants"]:
                rs = [r for r in results if r["variant"] == v]
                fin.line([r["sigma"] for r in rs], [r["final_l4p4"] for r in rs], v)
            fin.line(p["sigmas"], [ref] * len(p["sigmas"]), "3/m", dashed=True)
            fin.save(root / "plot.svg")
            lc = Chart("final mean |W_i|_4^4 vs l1 coefficient", "lambda", "mean l4p4", logx=True, logy=True)
            lc.line([r["lam"] for r in l1_results], [r["final_l4p4"] for r in l1_results], "l1 model")
            lc.line(p["lams"], [ref] * len(p["lams"]), "3/m", dashed=True)
            lc.save(root / "l1_plot.svg")
    return {"cells": results, "l1": l1_results, "reference": ref}


# -- single instance --------------------------------------------------------

def run_instance(params: dict, out=None, emit=("csv", "svg", "final-matrix")) -> dict:
    p = {**DEFAULTS["instance"], **params}
    spec = p["noise"] if isinstance(p["noise"], NoiseSpec) else NoiseSpec.parse(p["noise"])
    cfg = ModelConfig(n=p["n"], m=p["m"], eta=p["eta"], init_scale=p["init_scale"], noise=spec,
                      seed=p["seed"], steps=p["steps"], record_every=p["record_every"])
    W, trace = train_noisy(cfg)
    trace.meta = {**_meta("instance", p), **trace.meta}
    trace.final = W
    final_l4 = metrics_table(W)["l4p4"]
    compromise = np.flatnonzero(final_l4 < p["compromise_below"]).tolist()
    d = _cell_dir(out, "instance", f"{spec.kind}_sigma{spec.sigma:g}_seed{cfg.seed}")
    if d is not None:
        if "csv" in emit:
            trace.to_csv(d / "trace.csv")
            write_table(d / "summary.csv", ["row", "final_l4p4", "compromise"],
                        [(i, v, str(i in compromise)) for i, v in enumerate(final_l4)], trace.meta)
        if "final-matrix" in emit:
            np.savetxt(d / "final_matrix.csv", W, delimiter=",", fmt="%.17g")
        if "svg" in emit:
            ch = Chart("per-row |W_i|_4^4", "t", "l4p4", logx=True)
            for i in range(cfg.n):
                r = trace.row(i)
                ch.line(r["t"][1:], r["l4p4"][1:], f"row {i}")
            ch.save(d / "plot.svg")
            heatmap(W, "final weight matrix", d / "final_matrix.svg")
    return {"config": cfg, "final": W, "trace": trace, "final_l4p4": final_l4, "compromise_rows": compromise}


# -- neuron splitting ----------------------------------------------------------

def split_neuron(W: np.ndarray, k: int, perturb_scale: float, rng: np.random.Generator) -> np.ndarray:
    """Duplicate neuron ``k`` into a new last column, both copies scaled by ``1/sqrt(2)``.

    With tied weights the incoming and outgoing weights are the same numbers, and
    ``1/sqrt(2)`` is the scale that keeps every ``W_i . W_j`` (hence every output)
    unchanged. Each copy then gets independent ``N(0, perturb_scale^2)`` noise.
    """
    W = np.asarray(W, dtype=float)
    if not 0 <= k < W.shape[1]:
        raise IndexError(f"neuron {k} out of range for {W.shape[1]} neurons")
    if perturb_scale < 0:
        raise ValueError("perturb_scale must be >= 0")
    col = W[:, k] / math.sqrt(2.0)
    out = np.concatenate([W, col[:, None]], axis=1)
    out[:, k] = col
    if perturb_scale > 0:
        out[:, [k, -1]] += rng.normal(0.0, perturb_scale, size=(W.shape[0], 2))
    return out


def run_split_probe(params: dict, out=None, emit=("csv",)) -> dict:
    """Train the l1 model until ``runs`` seeds end with a polysemantic neuron, split it, retrain."""
    p = {**DEFAULTS["split-neuron"], **params}
    rows = []
    seed = p["seed"]
    while len(rows) < p["runs"]:
        cfg = ModelConfig(n=p["n"], m=p["m"], lam=p["lam"], eta=p["eta"], init_scale=p["init_scale"],
                          seed=seed, steps=p["steps"])
        seed += 1
        W, _ = train_l1(cfg, record_at=[])
        count, poly = count_polysemantic(W, p["threshold"])
        if count == 0:
            continue
        k, feats = min(poly.items())
        i, j = feats[:2]
        W2 = split_neuron(W, k, p["perturb_scale"], make_rng(cfg.seed, "perturb"))
        W3 = run_l1(W2, cfg.lam, cfg.eta, p["retrain_steps"])
        ki, kj = int(np.argmax(np.abs(W3[i]))), int(np.argmax(np.abs(W3[j])))
        rows.append((cfg.seed, k, i, j, ki, kj, ki != kj))
    frac = float(np.mean([r[-1] for r in rows]))
    if out is not None:
        d = _cell_dir(out, "split-neuron", f"n{p['n']}_m{p['m']}")
        if "csv" in emit:
            write_table(d / "summary.csv", ["seed", "neuron", "i", "j", "final_i", "final_j", "separated"],
                        [r[:-1] + (str(r[-1]),) for r in rows], _meta("split-neuron", p))
    return {"rows": rows, "separated_fraction": frac}
