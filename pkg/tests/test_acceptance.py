"""Acceptance criteria, each reported as one PASS/FAIL line in the summary.

The N = 32 catalog flows are produced once by running the shipped scenario
suite into a temporary directory; criteria about those flows read the
resulting traces and reports.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from higgsflow import (LatticeSurface, build_background, catalog, degree, donaldson_functional,
                       gradient_check, hym_constant, identity_metric, integrate, make_group,
                       mean_curvature, random_metric, realize)
from higgsflow import _linalg as la
from higgsflow.cli import EXIT_PASS, run_scenario, run_suite
from higgsflow.lie import ad_perp_projection

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SCENARIO_NAMES = ["diag-polystable", "flat-line", "nilpotent", "split-unstable"]

pytestmark = pytest.mark.slow


@pytest.fixture(scope="session")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    start = time.perf_counter()
    code = run_suite(SCENARIOS, out_dir=out)
    elapsed = time.perf_counter() - start
    # scenario output paths are relative ("out/<name>..."), resolved against out_dir
    files = out / "out"
    reports = {n: json.loads((files / f"{n}.report.json").read_text()) for n in SCENARIO_NAMES
               if (files / f"{n}.report.json").is_file()}
    return {"code": code, "out": files, "elapsed": elapsed, "reports": reports}


def trace_rows(suite, name):
    text = (suite["out"] / f"{name}.csv").read_text().splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return {k: data[:, i] for i, k in enumerate(header)}


def test_ac01_calibration(acceptance):
    s = LatticeSurface(32, 1.0)
    worst_pt, worst_int, slowest = 0.0, 0.0, 0.0
    ok = True
    for d in range(-3, 4):
        start = time.perf_counter()
        b = build_background(s, 1, (d,))
        k = mean_curvature(b, identity_metric(s, 1))
        pt = float(np.max(np.abs(k - 2 * np.pi * d / s.area)))
        gap = abs(integrate(s, la.trace(k).real) - 2 * np.pi * d)
        slowest = max(slowest, time.perf_counter() - start)
        ok &= pt <= 1e-3 and gap <= 1e-6 * (1 + abs(d))
        worst_pt, worst_int = max(worst_pt, pt), max(worst_int, gap)
    ok &= slowest < 1.0
    acceptance("AC1", ok, f"max|K-2pi d/V| = {worst_pt:.1e}, integral gap {worst_int:.1e}, "
                          f"slowest case {slowest:.2f} s")
    assert ok


def test_ac02_degree_gauge_invariance(acceptance):
    s = LatticeSurface(32)
    ex = [e for e in catalog() if e.name == "split-unstable"][0]
    b, _ = realize(ex, s)
    rng = np.random.default_rng(2)
    base = degree(b, identity_metric(s, 2))
    start = time.perf_counter()
    drift, gap = 0.0, 0.0
    for i in range(100):
        h = random_metric(s, 2, rng, amplitude=0.5, modes=1 + i % 3)
        d = degree(b, h)
        drift = max(drift, abs(d - base))
        gap = max(gap, abs(d - round(d)))
    elapsed = time.perf_counter() - start
    ok = drift <= 1e-8 and gap <= 1e-6 and elapsed < 10
    acceptance("AC2", ok, f"degree drift {drift:.1e}, integrality gap {gap:.1e}, {elapsed:.1f} s")
    assert ok


def test_ac03_monotonicity(suite, acceptance):
    worst, steps = -np.inf, {}
    for name in SCENARIO_NAMES:
        cols = trace_rows(suite, name)
        lval = cols["L"]
        steps[name] = len(lval) - 1
        if len(lval) > 1:
            rise = np.diff(lval) / (1 + np.abs(lval[:-1]))
            worst = max(worst, float(np.max(rise)))
    ok = worst <= 1e-10 and max(steps.values()) <= 10_000 and suite["elapsed"] < 300
    acceptance("AC3", ok, f"max relative L increase {worst:.1e} over {sum(steps.values())} steps, "
                          f"suite {suite['elapsed']:.0f} s")
    assert ok


def test_ac04_gradient_identity(acceptance):
    s = LatticeSurface(16)
    rng = np.random.default_rng(4)
    worst, start = 0.0, time.perf_counter()
    for ex in catalog():
        b, phi = realize(ex, s)
        k = identity_metric(s, ex.rank).h
        c = hym_constant(sum(ex.flux) / ex.rank, s.area)
        for _ in range(10):
            h = random_metric(s, ex.rank, rng, amplitude=0.1)
            g = gradient_check(b, phi, h, k, c, dt_fd=1e-5)
            # a metric already at the HYM point has zero gradient on both sides
            err = g["rel_err"] if abs(g["analytic"]) > 1e-12 else abs(g["numeric"])
            worst = max(worst, err)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-3 and elapsed < 60
    acceptance("AC4", ok, f"worst rel_err {worst:.1e} over 40 metrics, {elapsed:.1f} s")
    assert ok


def test_ac05_path_independence(acceptance):
    s = LatticeSurface(16)
    rng = np.random.default_rng(5)
    worst, start = 0.0, time.perf_counter()
    for i in range(20):
        ex = catalog()[i % 4]
        b, phi = realize(ex, s)
        c = hym_constant(sum(ex.flux) / ex.rank, s.area)
        h, k, mid = (random_metric(s, ex.rank, rng, amplitude=0.5).h for _ in range(3))
        direct = donaldson_functional(b, phi, h, k, c, quad_points=33)
        split = (donaldson_functional(b, phi, h, mid, c, quad_points=33)
                 + donaldson_functional(b, phi, mid, k, c, quad_points=33))
        worst = max(worst, abs(direct - split) / max(abs(direct), 1e-300))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60
    acceptance("AC5", ok, f"worst relative path gap {worst:.1e} over 20 pairs, {elapsed:.1f} s")
    assert ok


def test_ac06_semistable_reaches_hym(suite, acceptance):
    parts, ok = [], True
    for name in ("nilpotent", "diag-polystable"):
        dev = trace_rows(suite, name)["dev_sup"]
        ratio = float(np.min(dev) / dev[0])
        ok &= ratio <= 0.1 and len(dev) - 1 <= 10_000
        parts.append(f"{name} min/initial {ratio:.4f} in {len(dev) - 1} steps")
    final = float(np.min(trace_rows(suite, "diag-polystable")["dev_sup"]))
    ok &= final <= 1e-4
    parts.append(f"diag-polystable min dev_sup {final:.1e}")
    acceptance("AC6", ok, "; ".join(parts))
    assert ok


def test_ac07_unstable_no_hym(suite, acceptance):
    dev = trace_rows(suite, "split-unstable")["dev_sup"]
    floor = 0.5 * 2 * np.pi * np.sqrt(2)
    cls = suite["reports"]["split-unstable"]["classification"]
    ok = float(np.min(dev)) >= floor and cls == "diverging"
    acceptance("AC7", ok, f"min dev_sup {np.min(dev):.3f} >= {floor:.3f}, classify = {cls}")
    assert ok


def test_ac08_reconciliation(suite, acceptance):
    statuses = {n: r["reconciliation"]["status"] for n, r in suite["reports"].items()}
    ok = suite["code"] == EXIT_PASS and len(statuses) == 4 and set(statuses.values()) == {"PASS"}
    acceptance("AC8", ok, ", ".join(f"{n} {s}" for n, s in sorted(statuses.items())))
    assert ok


def test_ac09_reduction_preserved(suite, acceptance):
    red = suite["reports"]["nilpotent"]["reduction"]
    n = len(red["samples"])
    ok = (red["group"] == "SL(2)" and n == 20 and red["max_residual"] <= 1e-8
          and red["max_commutator_error"] <= 1e-6)
    acceptance("AC9", ok, f"{n} samples, max residual {red['max_residual']:.1e}, "
                          f"commutator identity {red['max_commutator_error']:.1e}")
    assert ok


def test_ac10_projector_algebra(acceptance):
    rng = np.random.default_rng(10)
    ad_worst, idem, selfadj = 0.0, 0.0, 0.0
    for kind, m in (("SL", 2), ("GL", 2), ("SL", 3)):
        g = make_group(kind, m)
        for _ in range(50):
            coef = rng.normal(size=g.algebra_dim) + 1j * rng.normal(size=g.algebra_dim)
            x = np.einsum("k,kab->ab", coef, g.basis)
            ad_worst = max(ad_worst, float(np.max(np.abs(ad_perp_projection(g, g.ad(x))))))
            a, b = (rng.normal(size=(g.algebra_dim,) * 2) + 1j * rng.normal(size=(g.algebra_dim,) * 2)
                    for _ in range(2))
            ra = ad_perp_projection(g, a)
            idem = max(idem, float(np.max(np.abs(ad_perp_projection(g, ra) - ra))))
            gap = abs(np.vdot(ra, b) - np.vdot(a, ad_perp_projection(g, b)))
            selfadj = max(selfadj, gap / (np.linalg.norm(a) * np.linalg.norm(b)))
    sl2 = make_group("SL", 2)
    ident = float(np.max(np.abs(ad_perp_projection(sl2, np.eye(3)) - np.eye(3))))
    ok = ad_worst <= 1e-12 and idem <= 1e-12 and selfadj <= 1e-12 and ident <= 1e-10
    acceptance("AC10", ok, f"|r(ad X)| {ad_worst:.1e}, idempotence {idem:.1e}, "
                           f"self-adjointness {selfadj:.1e}, |r(Id3) - Id3| {ident:.1e}")
    assert ok


def test_ac11_determinism(suite, tmp_path, acceptance):
    names = ("diag-polystable", "flat-line")
    same = {}
    for name in names:
        code, _ = run_scenario(SCENARIOS / f"{name}.json", out_dir=tmp_path)
        first = (suite["out"] / f"{name}.csv").read_bytes()
        same[name] = code == EXIT_PASS and (tmp_path / "out" / f"{name}.csv").read_bytes() == first
    ok = all(same.values())
    acceptance("AC11", ok, ", ".join(f"{n} {'identical' if v else 'DIFFERS'}" for n, v in same.items()))
    assert ok
