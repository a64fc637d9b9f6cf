"""End-to-end verification suite.

Every check compares an implementation against an independent route (finite
differences, Monte Carlo, closed forms, or the analytic predictions) and
reports the measured value next to its bound. ``run_verify`` runs them all and
writes ``report.json``.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    affine_spacing_fit,
    classify_collisions,
    count_collisions,
    expected_collisions,
    expected_polysemantic,
    relative_variance_bounds,
    winners,
)
from .core import ModelConfig, NoiseSpec, init_weights, make_rng, relative_variance, sample_noise
from .experiments import DEFAULTS, run_collide, run_sparsify
from .l1_model import forces, loss_l1, run_l1
from .noise_model import analytic_cross_moment, analytic_fourth_moment, forward_noisy, grad_noisy, train_noisy_batch
from .trace import log_schedule


@dataclass
class CheckResult:
    name: str
    claim: str
    measured: object
    bound: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured {_short(self.measured)} (bound {self.bound})"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        return None if not math.isfinite(float(v)) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


# -- independent oracles --------------------------------------------------------

def fd_gradient(f, W: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``W``, entry by entry."""
    W = np.array(W, dtype=float)
    g = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        old = W[idx]
        W[idx] = old + h
        fp = f(W)
        W[idx] = old - h
        fm = f(W)
        W[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def loop_loss_l1(W, lam):
    """Scalar-loop l1 loss without the Gram shortcut."""
    n, m = W.shape
    total = 0.0
    for i in range(n):
        sq = sum(W[i, k] ** 2 for k in range(m))
        total += (1.0 - sq) ** 2 + lam * sum(abs(W[i, k]) for k in range(m))
        for j in range(n):
            if j != i:
                dot = sum(W[i, k] * W[j, k] for k in range(m))
                total += max(dot, 0.0) ** 2
    return total


def loop_noisy_loss(W, i, xi):
    """Scalar triple loop for ``|ReLU(W (W^T e_i + xi)) - e_i|^2``."""
    n, m = W.shape
    h = [W[i, k] + xi[k] for k in range(m)]
    total = 0.0
    for j in range(n):
        z = sum(W[j, k] * h[k] for k in range(m))
        y = max(z, 0.0)
        total += (y - (1.0 if j == i else 0.0)) ** 2
    return total


def mc_moments(spec: NoiseSpec, rows: np.ndarray, samples: int, rng, chunk: int = 100_000):
    """Monte-Carlo means and standard errors of ``(w.xi)^4`` and ``(w.xi)^2 |xi|^2`` per row."""
    rows = np.atleast_2d(rows)
    m = rows.shape[1]
    acc = np.zeros((4, rows.shape[0]))
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        xi = sample_noise(spec, m, rng, b)
        p = xi @ rows.T
        p2 = p * p
        q4 = p2 * p2
        cr = p2 * np.einsum("ij,ij->i", xi, xi)[:, None]
        acc += [q4.sum(0), (q4 * q4).sum(0), cr.sum(0), (cr * cr).sum(0)]
        done += b
    mean4, mean_cr = acc[0] / samples, acc[2] / samples
    se4 = np.sqrt(np.maximum(acc[1] / samples - mean4**2, 0) / samples)
    se_cr = np.sqrt(np.maximum(acc[3] / samples - mean_cr**2, 0) / samples)
    return mean4, se4, mean_cr, se_cr


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# -- checks ---------------------------------------------------------------------

def check_gradients(points: int = 100, seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_l1 = 0.0
    k = 0
    while k < points:
        n, m = rng.integers(2, 5), rng.integers(2, 6)
        W = rng.normal(0, 0.6, (n, m))
        lam = float(rng.uniform(0, 0.1))
        G = W @ W.T
        if np.abs(W).min() < 1e-4 or np.abs(G[~np.eye(n, dtype=bool)]).min() < 1e-4:
            continue
        k += 1
        # Forces drop the 4 on the quadratic terms: they are -grad of L(W, 4 lam) / 4.
        fd = -fd_gradient(lambda V: loss_l1(V, 4 * lam) / 4, W)
        an = np.stack([forces(W, i, lam).total for i in range(n)])
        if corrupt:
            an = an * 1.01
        worst_l1 = max(worst_l1, _rel(an, fd))
    worst_noise = 0.0
    k = 0
    while k < points:
        n, m = rng.integers(2, 5), rng.integers(2, 6)
        W = rng.normal(0, 0.6, (n, m))
        i = int(rng.integers(n))
        xi = rng.normal(0, 0.3, m)
        if np.abs(W @ (W[i] + xi)).min() < 1e-4:
            continue
        k += 1
        fd = fd_gradient(lambda V: forward_noisy(V, i, xi).loss, W)
        an = grad_noisy(W, i, xi)
        if corrupt:
            an = an * 1.01
        worst_noise = max(worst_noise, _rel(an, fd))
    return [
        CheckResult("gradient_l1_forces", "l1 forces are the negative loss gradient (4s dropped)",
                    worst_l1, "< 1e-6", worst_l1 < 1e-6, {"points": points}),
        CheckResult("gradient_noise_model", "noisy-loss gradient through both tied occurrences",
                    worst_noise, "< 1e-5", worst_noise < 1e-5, {"points": points}),
    ]


def check_moments(samples: int = 1_000_000, rows_per_m: int = 5, ms=(1, 2, 8, 64), seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    fails = []
    for spec in (NoiseSpec.bipolar(0.7), NoiseSpec.uniform(1.3), NoiseSpec.gaussian(0.9)):
        for m in ms:
            rows = rng.normal(0, 1, (rows_per_m, m))
            m4, se4, mc, sec = mc_moments(spec, rows, samples, rng)
            for r in range(rows_per_m):
                for name, est, se, exact in (("fourth", m4[r], se4[r], analytic_fourth_moment(rows[r], spec)),
                                             ("cross", mc[r], sec[r], analytic_cross_moment(rows[r], spec))):
                    # bipolar with m = 1 is deterministic; allow rounding there.
                    tol = 4 * se + 1e-9 * abs(exact)
                    z = abs(est - exact) / se if se > 0 else 0.0
                    worst = max(worst, z)
                    if abs(est - exact) > tol:
                        fails.append((spec.kind, m, r, name, est, exact, se))
    return CheckResult("moment_identities", "fourth and cross noise moments match Monte Carlo",
                       worst, "<= 4 standard errors", not fails, {"samples": samples, "failures": fails})


def simplex_rows(n: int, m: int, rng) -> np.ndarray:
    """``n`` unit rows in ``R^m`` with pairwise dot products ``-1/(n-1)``, randomly rotated."""
    E = np.eye(n) - 1.0 / n
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    out = np.zeros((n, m))
    out[:, :n] = E
    return out @ Q


def check_single_feature_gradient(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    regime_ok = True
    for n, m in ((2, 3), (4, 6), (6, 16)):
        W = simplex_rows(n, m, rng)
        for i in range(n):
            xi = rng.normal(0, 0.01, m)
            z = W @ (W[i] + xi)
            regime_ok &= bool((np.delete(z, i) < 0).all())
            G = grad_noisy(W, i, xi)
            expect = np.zeros_like(W)
            expect[i] = 2 * (W[i] @ xi) * (2 * W[i] + xi)
            worst = max(worst, float(np.abs(G - expect).max()))
    return CheckResult("gradient_special_case", "unit rows, negative cross products: grad_i = 2(W_i.xi)(2W_i + xi)",
                       worst, "< 1e-12 absolute", regime_ok and worst < 1e-12, {"other_rows_off": regime_ok})


def check_affine_spacing(ms=(1000, 10000), seed: int = 0) -> CheckResult:
    worst_res = 0.0
    rv_violation = 0.0
    recorded = 0
    for m in ms:
        lam = 0.1 / math.sqrt(m)
        cfg = ModelConfig(n=1, m=m, lam=lam, eta=0.1, interference=False, seed=seed,
                          steps=int(round(3 / lam / 0.1)))
        W0 = init_weights(cfg)

        def rec(step, W):
            nonlocal worst_res, rv_violation, recorded
            live = W[0][W[0] != 0]
            if live.size < 10:
                return
            recorded += 1
            fit = affine_spacing_fit(W0[0], W[0], 0.0)
            worst_res = max(worst_res, fit.max_residual / np.abs(live).max())
            lo, hi = relative_variance_bounds(W0[0], live.size)
            rv = relative_variance(live)
            rv_violation = max(rv_violation, (lo - rv) / max(lo, 1e-300), (rv - hi) / max(hi, 1e-300))

        run_l1(W0, cfg.lam, cfg.eta, cfg.steps, False, on_record=rec, schedule=log_schedule(cfg.steps, 30))
    ok = worst_res < 1e-3 and rv_violation <= 1e-9
    return CheckResult("affine_spacing", "surviving weights are one affine image of their initial values",
                       worst_res, "relative residual < 1e-3, relative variance inside brackets", ok,
                       {"records": recorded, "rv_bracket_violation": rv_violation})


def check_collision_statistics(n: int = 32, m: int = 256, seeds: int = 1000) -> CheckResult:
    cfg = ModelConfig(n=n, m=m)
    counts = np.array([count_collisions(init_weights(cfg.replace(seed=s))) for s in range(seeds)], dtype=float)
    mean, se = counts.mean(), counts.std(ddof=1) / math.sqrt(seeds)
    exp = expected_collisions(n, m)
    return CheckResult("collision_count", "expected colliding pairs n(n-1)/(2m)", float(mean),
                       f"within 3 SE ({3 * se:.3g}) of {exp}", abs(mean - exp) <= 3 * se, {"se": se})


def check_benign_malign(collisions: int = 1000, m: int = 4, lam: float = 0.03, eta: float = 0.2,
                        t_max: float = 500.0) -> CheckResult:
    base = ModelConfig(n=2, m=m, lam=lam, eta=eta)
    W0s = []
    seed = 0
    while len(W0s) < collisions:
        W0 = init_weights(base.replace(seed=seed))
        seed += 1
        k = winners(W0)
        if k[0] == k[1]:
            W0s.append(W0)
    W0s = np.stack(W0s)
    Wf = run_l1(W0s, lam, eta, int(round(t_max / eta)))
    k = winners(W0s)[:, 0]
    idx = np.arange(collisions)
    benign = np.sign(W0s[idx, 0, k]) != np.sign(W0s[idx, 1, k])
    shared = Wf[idx, :, k]
    malign_ok = (shared[~benign] != 0).sum(axis=1) <= 1
    sb = shared[benign]
    benign_ok = (np.abs(sb) >= 0.9).all(axis=1) & (np.sign(sb[:, 0]) != np.sign(sb[:, 1]))
    frac = float(benign_ok.mean())
    ok = bool(malign_ok.all()) and frac >= 0.9
    return CheckResult("benign_malign", "malign collisions lose a feature, benign ones keep both",
                       frac, "all malign resolved, benign kept >= 0.9", ok,
                       {"benign": int(benign.sum()), "malign": int((~benign).sum()),
                        "malign_resolved": float(malign_ok.mean()), "seeds_drawn": seed})


def check_collision_scaling(cache: dict) -> CheckResult:
    res = cache.setdefault("collide", run_collide({}))
    ms, mean, pred = np.array(res["ms"], float), res["mean"], res["predicted"]
    ratio = mean / pred
    slope = float(np.polyfit(np.log(ms), np.log(np.maximum(mean, 1e-12)), 1)[0])
    ok = bool(np.all((ratio >= 0.5) & (ratio <= 2.0))) and -1.3 <= slope <= -0.7
    return CheckResult("collision_scaling", "polysemantic neurons ~ n(n-1)/(4m)",
                       {"ratio": ratio.tolist(), "slope": slope}, "ratio in [0.5, 2], slope in [-1.3, -0.7]", ok,
                       {"ms": ms.tolist(), "mean": mean.tolist(), "predicted": pred.tolist()})


def check_solution_quality(cache: dict) -> CheckResult:
    res = cache.setdefault("collide", run_collide({}))
    lam = DEFAULTS["collide"]["lam"]
    worst_win, bad = 1.0, 0
    for r in res["runs"]:
        W = r["final"]
        win = np.abs(W).max(axis=1)
        l2 = np.einsum("ij,ij->i", W, W)
        l1 = np.abs(W).sum(axis=1)
        worst_win = min(worst_win, float(win.min()))
        bad += int(np.sum((win < 0.9) | (l2 > 1) | (l2 < 1 - 5 * lam * l1)))
    return CheckResult("solution_quality", "every feature ends on one neuron with |w| >= 0.9, |W_i|^2 near 1",
                       worst_win, "winner >= 0.9 and |W_i|^2 in [1 - 5 lam |W_i|_1, 1]", bad == 0,
                       {"violating_rows": bad, "runs": len(res["runs"])})


def check_sparsification_law(cache: dict) -> CheckResult:
    res = cache.setdefault("sparsify", run_sparsify({}))
    cfg = res["config"]
    lam, m = cfg.lam, cfg.m
    arr = np.array([r[1:4] for r in res["rows"]], dtype=float)
    t, l1, mp = arr[:, 0], arr[:, 1], arr[:, 2]
    sel = (t >= 3 / (lam * math.sqrt(m))) & (t <= 1 / (3 * lam))
    ratio = l1[sel] * lam * t[sel]
    reach = t[mp <= 1]
    t_one = float(reach.min()) if reach.size else math.inf
    ok = bool(sel.any() and ratio.min() >= 0.3 and ratio.max() <= 3.0 and t_one <= 5 / lam)
    return CheckResult("sparsification_law", "|W|_1 ~ 1/(lam t) in the middle regime, one survivor by t = 5/lam",
                       {"ratio_min": float(ratio.min()), "ratio_max": float(ratio.max()), "t_single": t_one},
                       "ratio in [0.3, 3]; t_single <= 5/lam", ok, {"records_checked": int(sel.sum())})


KURTOSIS_SETUP = dict(n=8, m=16, sigma=0.15, eta=0.03, steps=20_000, seeds=16)


def check_kurtosis_ordering(cache: dict, **overrides) -> CheckResult:
    p = {**KURTOSIS_SETUP, **overrides}
    finals = {}
    for kind in ("bipolar", "uniform", "gaussian"):
        cfg = ModelConfig(n=p["n"], m=p["m"], eta=p["eta"], noise=NoiseSpec.matched(kind, p["sigma"]),
                          steps=p["steps"])
        _, W = train_noisy_batch(cfg, range(p["seeds"]))
        finals[kind] = float(np.mean(np.sum(W**4, axis=-1)))
    cache["kurtosis"] = finals
    ref = 3 / p["m"]
    b, u, g = finals["bipolar"], finals["uniform"], finals["gaussian"]
    ok = b > u > g and ref / 3 <= g <= 3 * ref and b >= 5 * g
    return CheckResult("kurtosis_ordering", "negative excess kurtosis sparsifies: bipolar > uniform > gaussian",
                       {**finals, "bipolar_over_gaussian": b / g},
                       f"b > u > g, g in [{ref / 3:.4g}, {3 * ref:.4g}], b >= 5 g", ok, p)


QUICK = ("gradients", "moments", "special_case", "affine", "collision_count", "benign_malign")
FULL = QUICK + ("sparsification_law", "collision_scaling", "solution_quality", "kurtosis_ordering")


def run_checks(names=FULL, corrupt_gradient: bool = False, cache: dict | None = None) -> list[CheckResult]:
    cache = {} if cache is None else cache
    table = {
        "gradients": lambda: check_gradients(corrupt=corrupt_gradient),
        "moments": check_moments,
        "special_case": check_single_feature_gradient,
        "affine": check_affine_spacing,
        "collision_count": check_collision_statistics,
        "benign_malign": check_benign_malign,
        "sparsification_law": lambda: check_sparsification_law(cache),
        "collision_scaling": lambda: check_collision_scaling(cache),
        "solution_quality": lambda: check_solution_quality(cache),
        "kurtosis_ordering": lambda: check_kurtosis_ordering(cache),
    }
    out = []
    for name in names:
        t0 = time.perf_counter()
        res = table[name]()
        res = res if isinstance(res, list) else [res]
        for r in res:
            r.seconds = time.perf_counter() - t0
        out.extend(res)
    return out


def run_verify(out=None, quick: bool = False, corrupt_gradient: bool = False, echo=print) -> tuple[bool, list]:
    results = []
    for r in run_checks(QUICK if quick else FULL, corrupt_gradient):
        echo(r.line())
        results.append(r)
    ok = all(r.passed for r in results)
    if out is not None:
        d = Path(out) / "verify"
        d.mkdir(parents=True, exist_ok=True)
        report = {"passed": ok, "checks": [_jsonable(asdict(r)) for r in results]}
        (d / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return ok, results
