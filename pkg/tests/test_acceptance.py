"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a ``[PASS]``/``[FAIL]`` line with the measured value and bound.
The expensive runs (collide sweep, long sparsification run) are shared through a
module-level cache. Set ``INCIDENTAL_FULL_SCALE=1`` to include the n = 256 spot
check, which takes tens of minutes.
"""
import os
import time

import numpy as np
import pytest

from incidental import verify
from incidental.analysis import expected_polysemantic
from incidental.experiments import run_collide

CACHE: dict = {}


@pytest.fixture
def report(capsys):
    def emit(results):
        results = results if isinstance(results, list) else [results]
        with capsys.disabled():
            for r in results:
                print(f"\n  {r.line()}  [{r.seconds:.1f}s]")
        return results

    return emit


def _timed(fn):
    t0 = time.perf_counter()
    res = fn()
    for r in res if isinstance(res, list) else [res]:
        r.seconds = time.perf_counter() - t0
    return res


def test_1_collision_scaling(report):
    (r,) = report(_timed(lambda: verify.check_collision_scaling(CACHE)))
    assert r.passed, r.details


@pytest.mark.skipif(os.environ.get("INCIDENTAL_FULL_SCALE") != "1", reason="full-scale run, tens of minutes")
def test_1b_full_scale_spot_check(capsys):
    res = run_collide(dict(n=256, ms=[1024]))
    mean, pred = float(res["mean"][0]), expected_polysemantic(256, 1024)
    ok = pred / 2 <= mean <= 2 * pred
    with capsys.disabled():
        print(f"\n  [{'PASS' if ok else 'FAIL'}] full_scale_spot_check: measured {mean:.3g} (bound [{pred / 2:.3g}, {2 * pred:.3g}])")
    assert ok


def test_2_sparsification_law(report):
    (r,) = report(_timed(lambda: verify.check_sparsification_law(CACHE)))
    assert r.passed, r.details


def test_3_gradient_correctness(report):
    results = report(_timed(lambda: verify.check_gradients(points=100)))
    assert len(results) == 2
    assert all(r.passed for r in results)


def test_4_moment_identities(report):
    (r,) = report(_timed(verify.check_moments))
    assert r.passed, r.details


def test_5_single_feature_noise_gradient(report):
    (r,) = report(_timed(verify.check_single_feature_gradient))
    assert r.passed, r.details


def test_6_kurtosis_ordering(report):
    (r,) = report(_timed(lambda: verify.check_kurtosis_ordering(CACHE)))
    assert r.passed, r.measured


def test_7_affine_spacing(report):
    (r,) = report(_timed(verify.check_affine_spacing))
    assert r.passed, r.details


def test_8_benign_malign_resolution(report):
    (r,) = report(_timed(verify.check_benign_malign))
    assert r.passed, r.details
    assert r.details["benign"] + r.details["malign"] == 1000


def test_9_solution_quality(report):
    (r,) = report(_timed(lambda: verify.check_solution_quality(CACHE)))
    assert r.passed, r.details
    assert r.details["runs"] == 5 * 16
    assert np.isfinite(r.measured)
