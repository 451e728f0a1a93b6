"""Command-line front end: ``run <config.json>`` and ``suite <dir>``.

Exit codes: 0 when reconciliation passes, 2 when it fails, 1 on any
execution error (bad config, step failure, I/O).
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from importlib import resources
from math import sqrt
from pathlib import Path

import numpy as np

from . import _linalg as la
from .bundle import random_metric, realize, verify_higgs
from .config import load_config
from .errors import ValidationError
from .flow import MetricSampler, deviation, run_flow
from .gauge import hym_constant, slope
from .lie import (adjoint_deviation, commutator_identity_error, principal_ahym_certificate,
                  principal_field, reduction_residual)
from .plotting import render_trace, write_plotdata
from .stability import reconcile

log = logging.getLogger("higgsflow")

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class RunError(RuntimeError):
    """Execution failed after the config was accepted."""


def report_schema():
    text = resources.files("higgsflow").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(report):
    import jsonschema
    jsonschema.validate(report, report_schema())


def initial_metric(cfg):
    s, ex = cfg.surface, cfg.example
    if cfg.initial_metric.kind == "identity":
        h = np.broadcast_to(np.eye(ex.rank, dtype=complex), s.shape + (ex.rank, ex.rank)).copy()
    else:
        rng = np.random.default_rng(cfg.seed)
        h = np.array(random_metric(s, ex.rank, rng, cfg.initial_metric.amplitude,
                                   cfg.initial_metric.modes).h)
    if cfg.group.kind == "SL":
        # an SL reduction fixes the determinant
        det = np.linalg.det(h).real
        h = la.herm(h / det[..., None, None] ** (1.0 / ex.rank))
    return h


def execute(cfg, max_steps_override=None):
    """Run one validated scenario; returns (report, trace)."""
    ex, s = cfg.example, cfg.surface
    bundle, phi = realize(ex, s)
    hol = verify_higgs(bundle, phi)
    h0 = initial_metric(cfg)
    c = hym_constant(slope(bundle, h0), s.area)

    flow = cfg.flow
    if max_steps_override is not None:
        flow = replace(flow, max_steps=int(max_steps_override))
    dev0 = deviation(bundle, phi, h0, c)[0]
    if cfg.relative_target is not None and dev0 > 0:
        flow = replace(flow, deviation_target=cfg.relative_target * dev0)

    sampler = MetricSampler(capacity=2 * cfg.residual_samples)
    trace = run_flow(bundle, phi, h0, config=flow, c=c, label=ex.name, observer=sampler)
    if trace.status == "step_failure":
        raise RunError(f"{ex.name}: step failure ({trace.diagnostics.get('stop')})")

    rec = reconcile(ex, trace, flow)
    samples = []
    for step, t, h in sampler.pick(cfg.residual_samples):
        samples.append({"step": int(step), "t": float(t),
                        "residual": reduction_residual(bundle, h, phi, cfg.group),
                        "commutator_error": commutator_identity_error(bundle, h, phi)})

    hf = trace.final_metric.h
    tau = c * np.eye(ex.rank) if cfg.group.kind == "GL" else np.zeros((ex.rank, ex.rank))
    cert = principal_ahym_certificate(cfg.group, principal_field(bundle, hf, phi), tau,
                                      flow.deviation_target)
    dev_f = float(trace.rows[-1][2])
    endo = adjoint_deviation(bundle, hf, phi)
    const = 2 * sqrt(cfg.group.algebra_dim)

    report = {
        "schema_version": 1,
        "scenario": ex.name,
        "config": cfg.raw,
        "example": ex.to_dict(),
        "holomorphy": hol,
        "verdict": rec.verdict.to_dict(),
        "flow": {
            "status": trace.status,
            "c": float(c),
            "deviation_target": float(flow.deviation_target),
            "steps": len(trace.rows) - 1,
            "t_final": float(trace.rows[-1][0]),
            "dev_sup_initial": float(trace.rows[0][2]),
            "dev_sup_final": dev_f,
            "L_final": float(trace.rows[-1][1]),
            "diagnostics": _jsonable(trace.diagnostics),
        },
        "classification": rec.classification,
        "reconciliation": {"status": rec.status, "evidence": _jsonable(rec.evidence)},
        "reduction": {"group": cfg.group.label, "samples": samples,
                      "max_residual": max(x["residual"] for x in samples),
                      "max_commutator_error": max(x["commutator_error"] for x in samples)},
        "certificate": {"xi": float(flow.deviation_target), "tau_scalar": float(tau[0, 0].real),
                        "ok": cert.ok, "margin": cert.margin, "kappa_norm": cert.norm,
                        "killing_norm": cert.killing_norm},
        "adjoint_transfer": {"dev_sup": dev_f, "endo_dev_sup": endo, "constant": const,
                             "ok": bool(endo <= const * dev_f + 1e-12)},
        "outputs": {k: str(v) for k, v in asdict(cfg.outputs).items()},
        "result": rec.status,
    }
    return report, trace


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_outputs(cfg, report, trace):
    out = cfg.outputs
    for p in asdict(out).values():
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out.trace_path)
    trace.write_sidecar(out.sidecar_path, report["classification"])
    write_plotdata(out.plotdata_path, trace)
    render_trace(out.figure_path, trace, title=f"{report['scenario']} ({report['classification']})",
                 target=report["flow"]["deviation_target"])
    validate_report(report)
    with open(out.report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_scenario(config_path, max_steps_override=None, out_dir=None):
    """Run one scenario file end to end; returns (exit_code, report or None)."""
    try:
        cfg = load_config(config_path, out_dir)
        report, trace = execute(cfg, max_steps_override)
        write_outputs(cfg, report, trace)
    except (ValidationError, RunError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR, None
    code = EXIT_PASS if report["result"] == "PASS" else EXIT_FAIL
    print(f"{report['scenario']}: {report['result']} ({report['verdict']['class']} / "
          f"{report['classification']}, {report['flow']['steps']} steps)")
    return code, report


def run_suite(directory, max_steps_override=None, out_dir=None):
    """Run every ``*.json`` scenario in ``directory``; returns an exit code."""
    directory = Path(directory)
    configs = sorted(directory.glob("*.json")) if directory.is_dir() else []
    if not configs:
        print(f"error: no scenario files in {directory}", file=sys.stderr)
        return EXIT_ERROR
    rows = []
    for path in configs:
        code, report = run_scenario(path, max_steps_override, out_dir)
        status = {EXIT_PASS: "PASS", EXIT_FAIL: "FAIL"}.get(code, "ERROR")
        detail = "-" if report is None else f"{report['verdict']['class']} / {report['classification']}"
        rows.append((path.name, status, detail))
    width = max(len(r[0]) for r in rows)
    print()
    for name, status, detail in rows:
        print(f"{name:<{width}}  {status:<5}  {detail}")
    statuses = {r[1] for r in rows}
    if "ERROR" in statuses:
        return EXIT_ERROR
    return EXIT_FAIL if "FAIL" in statuses else EXIT_PASS


def build_parser():
    p = argparse.ArgumentParser(prog="higgsflow",
                                description="Donaldson heat flow for lattice Higgs bundles.")
    p.add_argument("--verbose", "-v", action="store_true", help="log step control decisions")
    p.add_argument("--max-steps-override", type=int, metavar="N",
                   help="replace flow.max_steps in every scenario")
    p.add_argument("--out-dir", metavar="DIR",
                   help="resolve relative output paths against DIR instead of the config's directory")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config", help="scenario JSON file")
    s = sub.add_parser("suite", help="run every scenario in a directory")
    s.add_argument("directory")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.max_steps_override is not None and args.max_steps_override < 1:
        print("error: --max-steps-override must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "run":
        return run_scenario(args.config, args.max_steps_override, args.out_dir)[0]
    return run_suite(args.directory, args.max_steps_override, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
