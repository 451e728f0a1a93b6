import json

import numpy as np
import pytest

from higgsflow import (FlowConfig, FlowTrace, LatticeSurface, MetricSampler, build_background,
                       catalog, classify, donaldson_functional, flow_step, get_example,
                       gradient_check, hym_constant, identity_metric, mean_curvature,
                       random_metric, realize, run_flow)
from higgsflow import _linalg as la
from higgsflow.errors import ConditioningError, ValidationError
from higgsflow.flow import TRACE_HEADER, quadrature_weights

from oracles import functional, scalar_flow_factor


def setup(name, s):
    ex = get_example(name)
    b, phi = realize(ex, s)
    return ex, b, phi


def test_functional_zero_cases(s8, rng):
    ex, b, phi = setup("nilpotent", s8)
    h = random_metric(s8, 2, rng).h
    assert donaldson_functional(b, phi, h, h, 0.0) == 0.0
    b1 = build_background(s8, 1, (0,))
    k = np.ones(s8.shape + (1, 1))
    assert donaldson_functional(b1, None, np.e ** 0.7 * k, k, 0.0) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("name", ["nilpotent", "split-unstable", "diag-polystable", "flat-line-2"])
def test_functional_matches_closed_form(s8, rng, name):
    ex, b, phi = setup(name, s8)
    c = hym_constant(sum(ex.flux) / ex.rank, s8.area)
    h = random_metric(s8, ex.rank, rng, 0.5).h
    k = random_metric(s8, ex.rank, rng, 0.5).h
    got = donaldson_functional(b, phi, h, k, c)
    want = functional(b, phi.phi, h, k, c)
    assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_functional_antisymmetric(s8, rng):
    ex, b, phi = setup("split-unstable", s8)
    h = random_metric(s8, 2, rng, 0.5).h
    k = random_metric(s8, 2, rng, 0.5).h
    lhk = donaldson_functional(b, phi, h, k, 0.0)
    lkh = donaldson_functional(b, phi, k, h, 0.0)
    assert lhk == pytest.approx(-lkh, rel=1e-7)


def test_path_independence_small(s8, rng):
    ex, b, phi = setup("nilpotent", s8)
    h, k, m = (random_metric(s8, 2, rng, 0.5).h for _ in range(3))
    direct = donaldson_functional(b, phi, h, k, 0.0)
    split = donaldson_functional(b, phi, h, m, 0.0) + donaldson_functional(b, phi, m, k, 0.0)
    assert direct == pytest.approx(split, rel=1e-6)


def test_trapezoid_rule_available(s8, rng):
    ex, b, phi = setup("nilpotent", s8)
    h = random_metric(s8, 2, rng, 0.3).h
    k = identity_metric(s8, 2).h
    simp = donaldson_functional(b, phi, h, k, 0.0)
    trap = donaldson_functional(b, phi, h, k, 0.0, rule="trapezoid")
    assert trap == pytest.approx(simp, rel=1e-3)


def test_quadrature_weights():
    for rule in ("trapezoid", "simpson"):
        x, w = quadrature_weights(33, rule)
        assert w.sum() == pytest.approx(1.0)
        assert np.dot(w, x ** 2) == pytest.approx(1 / 3, rel=1e-3)
    with pytest.raises(ValidationError):
        quadrature_weights(1)
    with pytest.raises(ValidationError):
        quadrature_weights(4, "simpson")
    with pytest.raises(ValidationError):
        quadrature_weights(5, "gauss")


def test_flow_step_fixed_point(s8):
    ex, b, phi = setup("flat-line-3", s8)
    h = 1.7 * np.ones(s8.shape + (1, 1))
    c = hym_constant(3, s8.area)
    assert np.allclose(flow_step(b, phi, h, c, 1e-3).h, h, rtol=0, atol=1e-12)


@pytest.mark.parametrize("d,c", [(2, 0.0), (-1, 3.0)])
def test_flow_step_scalar_closed_form(s8, d, c):
    b = build_background(s8, 1, (d,))
    h = np.ones(s8.shape + (1, 1))
    out = flow_step(b, None, h, c, 1e-3).h
    assert np.allclose(out, scalar_flow_factor(d, s8.area, c, 1e-3), rtol=1e-12)


def test_flow_step_hermitian(s8, rng):
    ex, b, phi = setup("nilpotent", s8)
    h = random_metric(s8, 2, rng, 0.6).h
    out = flow_step(b, phi, h, 0.0, 1e-3).h
    assert np.max(np.abs(out - la.dag(out))) <= 1e-12


def test_flow_step_errors(s8):
    ex, b, phi = setup("split-unstable", s8)
    with pytest.raises(ValidationError):
        flow_step(b, phi, identity_metric(s8, 2), 0.0, 0.0)
    with pytest.raises(ConditioningError):
        flow_step(b, phi, identity_metric(s8, 2), 0.0, 0.5, eig_floor=0.5)


def test_gradient_check_fixed_point(s8):
    ex, b, phi = setup("flat-line-2", s8)
    h = identity_metric(s8, 1)
    g = gradient_check(b, phi, h, h, hym_constant(2, s8.area))
    assert abs(g["analytic"]) <= 1e-10 and abs(g["numeric"]) <= 1e-10


@pytest.mark.parametrize("name", ["nilpotent", "split-unstable"])
def test_gradient_check_at_identity(s16, name):
    ex, b, phi = setup(name, s16)
    h = identity_metric(s16, 2)
    g = gradient_check(b, phi, h, h, 0.0)
    assert g["rel_err"] <= 1e-3
    assert g["analytic"] < 0


def test_flow_config_validation():
    with pytest.raises(ValidationError):
        FlowConfig(dt_init=1.0, dt_max=0.1)
    with pytest.raises(ValidationError):
        FlowConfig(max_steps=0)
    with pytest.raises(ValidationError):
        FlowConfig(deviation_target=0.0)
    with pytest.raises(ValidationError):
        FlowConfig(monotonicity_slack=-1.0)
    assert FlowConfig().floor == FlowConfig().deviation_target
    assert FlowConfig(diverge_floor=2.0).floor == 2.0
    assert {"dt_init", "max_steps", "deviation_target"} <= FlowConfig.field_names()


def test_flat_line_single_row(s8):
    ex, b, phi = setup("flat-line-0", s8)
    tr = run_flow(b, phi, identity_metric(s8, 1), label=ex.name)
    assert tr.status == "reached_target"
    assert len(tr.rows) == 1
    assert tr.rows[0][0] == 0.0 and tr.rows[0][2] == 0.0
    assert classify(tr) == "approx_hym_reached"


@pytest.fixture(scope="module")
def short_nilpotent():
    s = LatticeSurface(8)
    ex, b, phi = setup("nilpotent", s)
    seen = []
    tr = run_flow(b, phi, identity_metric(s, 2), config=FlowConfig(t_max=0.2, deviation_target=1e-3),
                  c=0.0, label=ex.name, observer=lambda i, t, h: seen.append((i, t)))
    return tr, seen


def test_run_flow_trace_invariants(short_nilpotent):
    tr, seen = short_nilpotent
    assert tr.status == "reached_t_max"
    t = tr.column("t")
    assert np.all(np.diff(t) > 0)
    assert np.all(tr.column("dt") > 0)
    assert np.max(tr.column("deg_drift")) <= 1e-6
    lval = tr.column("L")
    assert lval[0] == 0.0
    assert np.all(np.diff(lval) <= 1e-10 * (1 + np.abs(lval[:-1])))
    assert t[-1] == pytest.approx(0.2)
    assert [i for i, _ in seen] == list(range(len(tr.rows)))


def test_run_flow_decays_like_closed_form(short_nilpotent):
    # for the nilpotent field from h = Id the ratio h1/h2 obeys rho = 1 / (1 + 4t);
    # exponential Euler is first order and dt reaches 6e-3 here
    tr, _ = short_nilpotent
    t = tr.column("t")[-1]
    rho = 1 / (1 + 4 * t)
    assert tr.column("dev_sup")[-1] == pytest.approx(2 * np.sqrt(2) * rho, rel=5e-3)


def test_run_flow_with_reference(s8, rng):
    ex, b, phi = setup("diag-polystable", s8)
    h0 = random_metric(s8, 2, rng, 0.3).h
    k = identity_metric(s8, 2).h
    tr = run_flow(b, phi, h0, k=k, config=FlowConfig(t_max=0.01), c=0.0, label=ex.name)
    assert tr.rows[0][1] == pytest.approx(donaldson_functional(b, phi, h0, k, 0.0))
    final = donaldson_functional(b, phi, tr.final_metric.h, k, 0.0)
    assert tr.rows[-1][1] == pytest.approx(final, rel=1e-6, abs=1e-8)


def test_run_flow_max_steps(s8):
    ex, b, phi = setup("nilpotent", s8)
    tr = run_flow(b, phi, identity_metric(s8, 2), config=FlowConfig(max_steps=5), c=0.0)
    assert tr.status == "reached_t_max" and tr.diagnostics["stop"] == "max_steps"
    assert len(tr.rows) == 6


def test_run_flow_step_failure():
    s = LatticeSurface(4)
    ex, b, phi = setup("split-unstable", s)
    tr = run_flow(b, phi, identity_metric(s, 2), config=FlowConfig(eig_floor=0.99), c=0.0)
    assert tr.status == "step_failure"
    assert "dt fell below" in tr.diagnostics["stop"]


def test_run_flow_rejects_bad_initial_metric(s8):
    ex, b, phi = setup("nilpotent", s8)
    h = np.broadcast_to(np.diag([1.0, -1.0]).astype(complex), s8.shape + (2, 2))
    with pytest.raises(ConditioningError):
        run_flow(b, phi, h)


def _trace(devs, ls, target=1e-3, **kw):
    cfg = FlowConfig(deviation_target=target, **kw)
    tr = FlowTrace(label="x", config=cfg, c=0.0, status="reached_t_max")
    for i, (d, lv) in enumerate(zip(devs, ls)):
        tr.rows.append((0.1 * i, lv, d, d, 1.0, 0.0, 0.1))
    return tr


def test_classify_cases():
    assert classify(_trace([1.0, 0.5, 1e-4], [0, -1, -2])) == "approx_hym_reached"
    assert classify(_trace([9.0, 8.9, 8.9], [0, -20, -40], target=1.0)) == "diverging"
    assert classify(_trace([9.0, 8.9, 8.9], [0, -2, -4], target=1.0)) == "bounded_below_plateau"
    assert classify(_trace([9.0, 0.5, 0.4], [0, -20, -40], target=0.1, diverge_floor=1.0)) \
        == "bounded_below_plateau"
    with pytest.raises(ValidationError):
        classify(FlowTrace(label="x", config=FlowConfig(), c=0.0))


def test_csv_and_sidecar(short_nilpotent, tmp_path):
    tr, _ = short_nilpotent
    text = tr.to_csv()
    lines = text.splitlines()
    assert lines[0] == ",".join(TRACE_HEADER) == "t,L,dev_sup,dev_l2,min_eig,deg_drift,dt"
    assert len(lines) == len(tr.rows) + 1
    assert float(lines[-1].split(",")[2]) == tr.rows[-1][2]
    tr.write_csv(tmp_path / "a.csv")
    tr.write_sidecar(tmp_path / "a.json", classification=classify(tr))
    side = json.loads((tmp_path / "a.json").read_text())
    assert side["status"] == tr.status and side["classification"] == "bounded_below_plateau"
    assert side["config"]["t_max"] == 0.2


def test_determinism(s8):
    ex, b, phi = setup("diag-polystable", s8)
    runs = []
    for _ in range(2):
        h0 = random_metric(s8, 2, np.random.default_rng(3), 0.3)
        runs.append(run_flow(b, phi, h0, config=FlowConfig(t_max=0.02), c=0.0).to_csv())
    assert runs[0] == runs[1]


def test_metric_sampler():
    smp = MetricSampler(capacity=4)
    for i in range(23):
        smp(i, 0.1 * i, np.full((2, 2), float(i)))
    steps = [s for s, _, _ in smp.samples]
    assert len(steps) <= 4
    assert all(s % smp.stride == 0 for s in steps)
    picked = [s for s, _, _ in smp.pick(3)]
    assert picked[0] == 0 and picked[-1] == 22
    with pytest.raises(ValidationError):
        MetricSampler(capacity=1)


def test_curvature_stays_self_adjoint_along_flow(short_nilpotent, s8):
    tr, _ = short_nilpotent
    ex, b, phi = setup("nilpotent", s8)
    h = tr.final_metric.h
    assert np.max(la.hsa_defect(h, mean_curvature(b, h, phi))) <= 1e-9


def test_catalog_slopes_give_constants():
    for ex in catalog(3):
        assert hym_constant(sum(ex.flux) / ex.rank, 1.0) == pytest.approx(2 * np.pi * sum(ex.flux) / ex.rank)
