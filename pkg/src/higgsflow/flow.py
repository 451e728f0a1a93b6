"""Donaldson functional and heat flow on lattice metrics."""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _linalg as la
from .bundle import MetricField
from .errors import ConditioningError, ValidationError
from .gauge import (_higgs_array, _metric_array, _spectral, background_degree, degree,
                    deviation_norm_l2, deviation_norm_sup, hs_curvature, hym_constant, slope)
from .surface import integrate

log = logging.getLogger(__name__)

TRACE_HEADER = ("t", "L", "dev_sup", "dev_l2", "min_eig", "deg_drift", "dt")
STATUSES = ("reached_target", "reached_t_max", "step_failure")
CLASSES = ("approx_hym_reached", "bounded_below_plateau", "diverging")


@dataclass(frozen=True)
class FlowConfig:
    """Step control, stopping rule and classification thresholds.

    ``cfl`` caps the step at ``cfl * a**2 / 2``, the explicit stability
    limit of the lattice Laplacian inside the mean curvature.
    ``diverge_drop`` and ``diverge_floor`` are the heuristics used by
    :func:`classify`; ``diverge_floor`` defaults to the deviation target.
    """

    dt_init: float = 1e-4
    dt_max: float = 1e-2
    t_max: float = 5.0
    max_steps: int = 10_000
    deviation_target: float = 1e-3
    eig_floor: float = 1e-10
    monotonicity_slack: float = 1e-10
    cfl: float = 0.8
    grow_after: int = 10
    grow_factor: float = 1.2
    dt_min: float = 1e-12
    increment_nodes: int = 3
    diverge_drop: float = 10.0
    diverge_floor: float = None

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "t_max", "deviation_target", "eig_floor", "cfl"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.dt_init > self.dt_max:
            raise ValidationError("dt_init must not exceed dt_max")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValidationError("max_steps must be an integer >= 1")
        if self.monotonicity_slack < 0:
            raise ValidationError("monotonicity_slack must be nonnegative")
        if self.increment_nodes < 2:
            raise ValidationError("increment_nodes must be >= 2")

    @property
    def floor(self):
        return self.deviation_target if self.diverge_floor is None else self.diverge_floor

    @classmethod
    def field_names(cls):
        return {f.name for f in fields(cls)}


@dataclass
class FlowTrace:
    label: str
    config: FlowConfig
    c: float
    rows: list = field(default_factory=list)
    status: str = ""
    diagnostics: dict = field(default_factory=dict)
    final_metric: object = None

    def column(self, name):
        i = TRACE_HEADER.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in self.rows:
            w.writerow(["%.17g" % v for v in row])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    def sidecar(self, classification=None):
        return {
            "label": self.label,
            "config": asdict(self.config),
            "c": self.c,
            "status": self.status,
            "classification": classification,
            "steps": len(self.rows) - 1,
            "diagnostics": self.diagnostics,
        }

    def write_sidecar(self, path, classification=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(classification), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _geodesic(h, k):
    """Hermitian generator of the path from k to h.

    Returns ``(k^{1/2}, g)`` with ``h_s = k^{1/2} exp(s g) k^{1/2}`` and
    ``eta = log(k^{-1} h) = k^{-1/2} g k^{1/2}``.
    """
    ks, kis = la.sqrt_pair(k)
    w, v = la.eigh(la.herm(kis @ h @ kis))
    if np.min(w) <= 0:
        raise ConditioningError("k^{-1} h has a nonpositive eigenvalue")
    return ks, kis, w, v


def _segment_integrand(bundle, phi, c, ks, kis, w, v, s, surface):
    g = la.from_eig(np.log(w), v)
    hs = la.herm(ks @ la.from_eig(w ** s, v) @ ks)
    eta = kis @ g @ ks
    kmat = hs_curvature(bundle, hs, phi, check=False, diagnostics=False).contracted
    dev = kmat - c * np.eye(kmat.shape[-1])
    return integrate(surface, la.trace(eta @ dev).real)


def quadrature_weights(n, rule="trapezoid"):
    if n < 2:
        raise ValidationError("need at least two quadrature nodes")
    nodes = np.linspace(0.0, 1.0, n)
    step = 1.0 / (n - 1)
    if rule == "trapezoid":
        wts = np.full(n, step)
        wts[[0, -1]] = step / 2
    elif rule == "simpson":
        if n % 2 == 0:
            raise ValidationError("Simpson's rule needs an odd number of nodes")
        wts = np.ones(n)
        wts[1:-1:2] = 4
        wts[2:-1:2] = 2
        wts *= step / 3
    else:
        raise ValidationError(f"unknown quadrature rule {rule!r}")
    return nodes, wts


def donaldson_functional(bundle, phi, h, k, c, quad_points=33, rule="simpson"):
    """Donaldson functional ``L(h, k)`` by integrating its first variation.

    Along ``h_s = k exp(s eta)`` with ``eta = log(k^{-1} h)`` the
    integrand is ``integrate(tr(eta (K(h_s) - c)))``; the result is the
    quadrature of that over ``s`` in [0, 1].
    """
    harr = _metric_array(h, bundle.rank)
    karr = _metric_array(k, bundle.rank)
    if np.array_equal(harr, karr):
        return 0.0
    phi = _higgs_array(phi, bundle)
    ks, kis, w, v = _geodesic(harr, karr)
    if np.allclose(w, 1.0, rtol=0, atol=1e-15):
        return 0.0
    nodes, wts = quadrature_weights(quad_points, rule)
    vals = [_segment_integrand(bundle, phi, c, ks, kis, w, v, s, bundle.surface) for s in nodes]
    return float(np.dot(wts, vals))


class StepRejected(ConditioningError):
    """Updated metric fell below the eigenvalue floor."""


def _advance(h, kdev, dt, eig_floor, roots=None):
    hs, his = la.sqrt_pair(h) if roots is None else roots
    s = la.herm(hs @ kdev @ his)
    hn = la.herm(hs @ la.expm_herm(-dt * s) @ hs)
    lo = float(np.min(la.eigh(hn)[0]))
    if lo < eig_floor:
        raise StepRejected(f"min eigenvalue {lo:.3e} below floor {eig_floor:.1e}")
    return hn, lo


def flow_step(bundle, phi, h, c, dt, eig_floor=1e-10):
    """One exponential step ``h' = h exp(-dt (K_h - c Id))``.

    Written as ``h^{1/2} exp(-dt h^{1/2}(K - c)h^{-1/2}) h^{1/2}`` so the
    result is Hermitian by construction.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    harr = _metric_array(h, bundle.rank)
    kmat = hs_curvature(bundle, harr, phi).contracted
    hn, _ = _advance(harr, kmat - c * np.eye(bundle.rank), dt, eig_floor)
    return MetricField.from_array(hn, eig_floor)


class _Evaluator:
    """Curvature and deviation data at one metric, computed once."""

    def __init__(self, bundle, phi, c, h):
        self.h = h
        spec = _spectral(h)
        self.roots = spec[2]
        self.min_eig = float(np.min(spec[0]))
        self.k = hs_curvature(bundle, h, phi, check=True, diagnostics=False,
                              spectral=spec).contracted
        self.dev = self.k - c * np.eye(bundle.rank)
        dens = np.maximum(la.trace(self.dev @ self.dev).real, 0.0)
        self.dev_sup = float(np.sqrt(np.max(dens)))
        self.dev_l2 = float(np.sqrt(integrate(bundle.surface, dens)))


def _increment(bundle, phi, c, ev0, ev1, dt, nodes):
    """L(h1, h0) along the step's own geodesic ``h0 exp(-s dt dev0)``."""
    surf = bundle.surface
    eta = -dt * ev0.dev
    s_nodes, wts = quadrature_weights(nodes, "simpson" if nodes % 2 else "trapezoid")
    hs, his = ev0.roots
    gen = la.herm(hs @ eta @ his)
    vals = []
    for s in s_nodes:
        if s == 0.0:
            dev = ev0.dev
        elif s == 1.0:
            dev = ev1.dev
        else:
            hm = la.herm(hs @ la.expm_herm(s * gen) @ hs)
            km = hs_curvature(bundle, hm, phi, check=False, diagnostics=False).contracted
            dev = km - c * np.eye(bundle.rank)
        vals.append(integrate(surf, la.trace(eta @ dev).real))
    return float(np.dot(wts, vals))


def run_flow(bundle, phi, h0, k=None, config=None, c=None, label="", observer=None):
    """Integrate the heat flow from ``h0`` with adaptive exponential steps.

    ``L`` in the trace is ``L(h_t, k)``, accumulated from per-step
    increments along each step's geodesic; ``k`` defaults to ``h0`` so the
    trace starts at zero.  ``observer(step, t, h)``, if given, is called on
    the initial metric and after every accepted step.
    """
    config = config or FlowConfig()
    harr = _metric_array(h0, bundle.rank)
    MetricField.from_array(harr, config.eig_floor)
    phi = _higgs_array(phi, bundle)
    if c is None:
        c = hym_constant(slope(bundle, harr), bundle.surface.area, 1)
    l_value = 0.0 if k is None else donaldson_functional(bundle, phi, harr, k, c)
    deg0 = degree(bundle, harr)
    trace = FlowTrace(label=label, config=config, c=float(c))
    trace.diagnostics["degree0"] = deg0
    trace.diagnostics["background_degree"] = background_degree(bundle)

    dt_cap = min(config.dt_max, config.cfl * bundle.surface.cell_area / 2)
    dt = min(config.dt_init, dt_cap)
    ev = _Evaluator(bundle, phi, c, harr)
    t = 0.0
    trace.rows.append((t, l_value, ev.dev_sup, ev.dev_l2, ev.min_eig, 0.0, dt))
    if observer is not None:
        observer(0, t, ev.h)
    accepted_run = 0
    max_increase = -np.inf
    steps = 0

    while True:
        if ev.dev_sup <= config.deviation_target:
            trace.status = "reached_target"
            break
        if t >= config.t_max * (1 - 1e-12):
            trace.status = "reached_t_max"
            trace.diagnostics["stop"] = "t_max"
            break
        if steps >= config.max_steps:
            trace.status = "reached_t_max"
            trace.diagnostics["stop"] = "max_steps"
            break
        if dt < config.dt_min:
            trace.status = "step_failure"
            trace.diagnostics["stop"] = f"dt fell below {config.dt_min:g} at t={t:.6g}"
            log.warning("%s: step failure at t=%.6g", label, t)
            break
        step_dt = min(dt, config.t_max - t)
        try:
            hn, _ = _advance(ev.h, ev.dev, step_dt, config.eig_floor, ev.roots)
            ev_new = _Evaluator(bundle, phi, c, hn)
        except ConditioningError as exc:
            log.debug("%s: rejected dt=%.3e (%s)", label, step_dt, exc)
            dt /= 2
            accepted_run = 0
            continue
        delta = _increment(bundle, phi, c, ev, ev_new, step_dt, config.increment_nodes)
        slack = config.monotonicity_slack * (1 + abs(l_value))
        if delta > slack:
            log.debug("%s: functional rose by %.3e at dt=%.3e", label, delta, step_dt)
            dt /= 2
            accepted_run = 0
            continue
        max_increase = max(max_increase, delta / (1 + abs(l_value)))
        l_value += delta
        t += step_dt
        steps += 1
        ev = ev_new
        drift = abs(degree(bundle, ev.h) - deg0)
        trace.rows.append((t, l_value, ev.dev_sup, ev.dev_l2, ev.min_eig, drift, step_dt))
        if observer is not None:
            observer(steps, t, ev.h)
        accepted_run += 1
        if accepted_run >= config.grow_after:
            dt = min(dt * config.grow_factor, dt_cap)
            accepted_run = 0

    trace.diagnostics["steps"] = steps
    trace.diagnostics["max_relative_increase"] = None if steps == 0 else max_increase
    trace.final_metric = MetricField.from_array(ev.h, 0.0)
    return trace


def gradient_check(bundle, phi, h, k, c, dt_fd=1e-5, quad_points=33, rule="simpson"):
    """Compare ``dL/dt`` along one flow step with ``-||K - c||_2**2``."""
    harr = _metric_array(h, bundle.rank)
    kmat = hs_curvature(bundle, harr, phi).contracted
    analytic = -deviation_norm_l2(kmat, c, harr, bundle.surface) ** 2
    hp = flow_step(bundle, phi, harr, c, dt_fd, eig_floor=0.0)
    l0 = donaldson_functional(bundle, phi, harr, k, c, quad_points, rule)
    l1 = donaldson_functional(bundle, phi, hp, k, c, quad_points, rule)
    numeric = (l1 - l0) / dt_fd
    return {"analytic": analytic, "numeric": numeric,
            "rel_err": abs(analytic - numeric) / (abs(analytic) + 1e-15)}


def classify(trace, config=None):
    """Label a finished trace by its deviation and functional history."""
    config = config or trace.config
    if not trace.rows:
        raise ValidationError("cannot classify an empty trace")
    dev = trace.column("dev_sup")
    lval = trace.column("L")
    if np.min(dev) <= config.deviation_target:
        return "approx_hym_reached"
    drop = lval[0] - np.min(lval)
    if drop > config.diverge_drop and np.min(dev) > config.floor:
        return "diverging"
    return "bounded_below_plateau"


def deviation(bundle, phi, h, c):
    """Sup and L2 deviation of the mean curvature of h from c Id."""
    kmat = hs_curvature(bundle, h, phi).contracted
    return (deviation_norm_sup(kmat, c, h),
            deviation_norm_l2(kmat, c, h, bundle.surface))


class MetricSampler:
    """Flow observer keeping an evenly spaced subset of the metrics.

    Metrics are stored every ``stride`` steps; when more than ``capacity``
    accumulate, every other one is dropped and the stride doubles, so
    memory stays bounded without knowing the run length in advance.
    """

    def __init__(self, capacity=40):
        if capacity < 2:
            raise ValidationError("capacity must be >= 2")
        self.capacity = capacity
        self.stride = 1
        self.samples = []
        self.last = None

    def __call__(self, step, t, h):
        self.last = (step, t, np.array(h))
        if step % self.stride == 0:
            self.samples.append(self.last)
            if len(self.samples) > self.capacity:
                self.samples = self.samples[::2]
                self.stride *= 2

    def pick(self, n):
        """About ``n`` evenly spaced samples, always including first and last."""
        pool = list(self.samples)
        if self.last is not None and (not pool or pool[-1][0] != self.last[0]):
            pool.append(self.last)
        if len(pool) <= n:
            return pool
        idx = np.unique(np.round(np.linspace(0, len(pool) - 1, n)).astype(int))
        return [pool[i] for i in idx]
