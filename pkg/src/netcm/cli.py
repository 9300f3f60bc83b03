"""Command-line front end: parse specs, run criteria, emit reports.

Exit codes: 0 criterion satisfied / decomposition feasible, 1 violated /
infeasible-evidence, 2 inconclusive, 64 malformed spec or usage, 74 file
I/O failure.  Reports are JSON (or CSV for scans), written atomically,
byte-identical for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import ncmx
from .covariance import covariance_matrix, load_cm
from .criteria import (
    CriterionReport,
    btn_decompose,
    btn_residual_report,
    criterion_margin,
    ghz_fidelity_bound,
    trace_norm_criterion,
    visibility_threshold,
    xi_report,
)
from .feasibility import FeasibilityProblem, export_witness, solve
from .linalg import SubsystemLayout
from .observables import NAMED_SETS, full_product_set, named_observable_set
from .states import (
    DensityOperator,
    bell_pair,
    btn_assemble,
    cluster4_state,
    dicke_state,
    ghz_state,
    mix_white_noise,
    split_nodes,
    w_state,
)
from .topology import NetworkTopology, line_topology, triangle_topology

SCHEMA_VERSION = "1"

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_SPEC = 64
EXIT_IO = 74

STATE_FAMILIES = ("ghz", "w", "dicke", "cluster4", "bell", "btn", "file")


class SpecError(ValueError):
    """Malformed specification or usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2, which we reserve
        raise SpecError(message)


# -- state / observable / topology specs --------------------------------------


def state_from_spec(spec: dict) -> DensityOperator:
    """Build a state from the JSON grammar.

    ``{"family": "ghz|w|dicke|cluster4|bell|btn|file", "params": {...},
    "visibility": v, "split": [d1, d2]}``
    """
    if not isinstance(spec, dict) or "family" not in spec:
        raise SpecError(f"state spec must be an object with a 'family' key, got {spec!r}")
    family = spec["family"]
    params = spec.get("params", {})
    if family not in STATE_FAMILIES:
        raise SpecError(f"unknown state family {family!r}; known: {STATE_FAMILIES}")
    try:
        if family == "ghz":
            levels = params.get("levels", "full")
            rho = ghz_state(int(params.get("parties", 3)), int(params.get("dim", 2)),
                            levels if levels == "full" else tuple(levels))
        elif family == "w":
            rho = w_state()
        elif family == "dicke":
            rho = dicke_state(int(params["k"]))
        elif family == "cluster4":
            rho = cluster4_state()
        elif family == "bell":
            rho = bell_pair(int(params.get("dim", 2)))
        elif family == "btn":
            sub = params.get("sources")
            if sub is None and "bell_dim" in params:
                sub = [{"family": "bell", "params": {"dim": int(params["bell_dim"])}}] * 3
            if not isinstance(sub, list) or len(sub) != 3:
                raise SpecError("btn family needs params.sources with exactly three state specs")
            rho = btn_assemble(*[state_from_spec(s) for s in sub])
        else:  # file
            path = params.get("path")
            dims = params.get("dims")
            if path is None or dims is None:
                raise SpecError("file family needs params.path and params.dims")
            matrix = ncmx.read_matrix(path)
            dims = [int(d) for d in dims]
            labels = params.get("labels") or [chr(ord("A") + i) for i in range(len(dims))]
            nodes = params.get("nodes") or labels
            rho = DensityOperator(matrix, SubsystemLayout(tuple(dims), tuple(labels), tuple(nodes)))
    except KeyError as exc:
        raise SpecError(f"state spec for family {family!r} is missing {exc}") from None
    if "visibility" in spec and spec["visibility"] is not None:
        rho = mix_white_noise(rho, float(spec["visibility"]))
    if spec.get("split"):
        d1, d2 = (int(d) for d in spec["split"])
        rho = split_nodes(rho, (d1, d2))
    return rho


def _parse_split(text: str | None) -> list[int] | None:
    if not text:
        return None
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise SpecError(f"--split must look like 2x2, got {text!r}")
    return [int(p) for p in parts]


def state_spec_from_args(args) -> dict:
    """Canonical state spec from command-line flags (or pass-through JSON)."""
    given = [bool(args.state), bool(args.state_json), bool(args.state_file)]
    if sum(given) != 1:
        raise SpecError("give exactly one of --state, --state-json, --state-file")
    if args.state_json:
        text = args.state_json
        if text.startswith("@"):
            text = Path(text[1:]).read_text()
        spec = json.loads(text)
        if args.visibility is not None:
            spec["visibility"] = args.visibility
        if args.split:
            spec["split"] = _parse_split(args.split)
        return spec
    if args.state_file:
        if not args.dims:
            raise SpecError("--state-file needs --dims")
        spec = {
            "family": "file",
            "params": {"path": args.state_file, "dims": [int(d) for d in args.dims.split(",")]},
        }
    else:
        family = args.state
        params: dict = {}
        if family == "ghz":
            params["parties"] = args.parties or 3
            params["dim"] = args.dim or 2
            if args.levels:
                params["levels"] = ("full" if args.levels == "full"
                                    else [int(k) for k in args.levels.split(",")])
        elif family == "dicke":
            if args.k is None:
                raise SpecError("dicke family needs --k")
            params["k"] = args.k
        elif family == "bell":
            params["dim"] = args.dim or 2
        elif family == "btn":
            params["bell_dim"] = args.dim or 2
        elif family not in ("w", "cluster4"):
            raise SpecError(f"unknown state family {family!r}; known: {STATE_FAMILIES}")
        spec = {"family": family, "params": params}
    if args.visibility is not None:
        spec["visibility"] = args.visibility
    if args.split:
        spec["split"] = _parse_split(args.split)
    return spec


def topology_from_spec(spec, node_labels) -> NetworkTopology:
    if spec in (None, "triangle"):
        if len(node_labels) != 3 and spec == "triangle":
            raise SpecError(f"triangle topology needs three nodes, state has {len(node_labels)}")
        if len(node_labels) == 3:
            return triangle_topology(tuple(node_labels))
        return line_topology(tuple(node_labels))
    if spec == "line":
        return line_topology(tuple(node_labels))
    if isinstance(spec, str):
        text = Path(spec[1:]).read_text() if spec.startswith("@") else spec
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"topology must be 'triangle', 'line' or JSON: {exc}") from None
    try:
        return NetworkTopology(tuple(spec["nodes"]), tuple(tuple(s) for s in spec["sources"]))
    except (KeyError, TypeError) as exc:
        raise SpecError(f"topology JSON needs 'nodes' and 'sources': {exc}") from None


def observables_from_spec(name: str, rho: DensityOperator):
    if name not in NAMED_SETS:
        raise SpecError(f"unknown observable set {name!r}; known: {sorted(NAMED_SETS)}")
    return named_observable_set(name, rho.layout)


def topology_to_spec(topology: NetworkTopology) -> dict:
    return {"nodes": list(topology.nodes), "sources": [list(s) for s in topology.sources]}


# -- report plumbing -----------------------------------------------------------


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    p = Path(path)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(p)


def _emit_json(path: str | None, payload: dict) -> None:
    _write_text(path, json.dumps(payload, indent=2) + "\n")


def _check_report(report: CriterionReport, state_spec, obs_spec, topo_spec) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    out.update(report.to_dict())
    out["state_spec"] = state_spec
    out["observables_spec"] = obs_spec
    out["topology"] = topo_spec
    return out


def report_schema() -> str:
    """Versioned JSON schema for criterion and feasibility reports."""
    schema = {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "$id": "netcm-report",
        "version": SCHEMA_VERSION,
        "oneOf": [
            {"$ref": "#/definitions/criterion_report"},
            {"$ref": "#/definitions/feasibility_report"},
        ],
        "definitions": {
            "criterion_report": {
                "type": "object",
                "additionalProperties": False,
                "required": ["schema_version", "criterion", "lhs", "rhs", "margin",
                             "pass", "tolerance"],
                "properties": {
                    "schema_version": {"const": SCHEMA_VERSION},
                    "criterion": {"type": "string"},
                    "lhs": {"type": "number"},
                    "rhs": {"type": "number"},
                    "margin": {"type": "number"},
                    "pass": {"type": "boolean"},
                    "tolerance": {"type": "number"},
                    "details": {"type": "object"},
                    "state_spec": {"type": ["object", "null"]},
                    "observables_spec": {"type": ["string", "object", "null"]},
                    "topology": {"type": ["object", "null"]},
                },
            },
            "feasibility_report": {
                "type": "object",
                "additionalProperties": False,
                "required": ["schema_version", "status", "residual", "iterations"],
                "properties": {
                    "schema_version": {"const": SCHEMA_VERSION},
                    "status": {"enum": ["feasible", "infeasible-evidence", "inconclusive"]},
                    "residual": {"type": "number"},
                    "iterations": {"type": "number"},
                    "witness_manifest": {"type": ["string", "null"]},
                    "state_spec": {"type": ["object", "null"]},
                    "observables_spec": {"type": ["string", "object", "null"]},
                    "topology": {"type": ["object", "null"]},
                    "note": {"type": "string"},
                },
            },
        },
    }
    return json.dumps(schema, indent=2) + "\n"


# -- commands ------------------------------------------------------------------


def _build_state_and_obs(args):
    spec = state_spec_from_args(args)
    rho = state_from_spec(spec)
    if args.criterion == "xi-psd" and not args.split and all(
        len(rho.layout.factors_of(x)) == 1 for x in rho.layout.node_order
    ):
        raise SpecError("xi-psd needs split nodes; pass --split d1xd2")
    obs_name = args.observables
    obs = None
    if obs_name:
        obs = observables_from_spec(obs_name, rho)
    elif args.criterion in ("xi-psd", "btn-residual"):
        obs_name = "full-product"
        obs = full_product_set(rho.layout)
    elif args.criterion == "trace-norm":
        raise SpecError("the trace-norm criterion needs --observables")
    return spec, rho, obs_name, obs


def cmd_check(args) -> int:
    spec, rho, obs_name, obs = _build_state_and_obs(args)
    topo = topology_from_spec(args.topology, rho.layout.node_order)
    if args.criterion == "trace-norm":
        gamma = covariance_matrix(obs, rho)
        report = trace_norm_criterion(gamma, topo, tolerance=args.tolerance)
    elif args.criterion == "xi-psd":
        report = xi_report(rho)
    elif args.criterion == "btn-residual":
        report = btn_residual_report(rho, obs)
    else:
        raise SpecError(f"unknown criterion {args.criterion!r}")
    if args.format == "csv":
        lines = ["criterion,lhs,rhs,margin,pass,tolerance",
                 f"{report.criterion},{report.lhs!r},{report.rhs!r},"
                 f"{report.margin!r},{str(report.passed).lower()},{report.tolerance!r}"]
        _write_text(args.output, "\n".join(lines) + "\n")
    else:
        _emit_json(args.output, _check_report(report, spec, obs_name, topology_to_spec(topo)))
    return EXIT_PASS if report.passed else EXIT_FAIL


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise SpecError(f"--grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise SpecError(f"bad grid {text!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _worker_count() -> int:
    cap = os.environ.get("NETCM_THREADS")
    workers = os.cpu_count() or 1
    if cap is not None:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise SpecError(f"NETCM_THREADS must be an integer, got {cap!r}") from None
    return workers


def cmd_scan(args) -> int:
    spec, _, obs_name, _ = _build_state_and_obs(args)
    base_spec = dict(spec)
    base_spec.pop("visibility", None)

    def family(v: float) -> DensityOperator:
        s = dict(base_spec)
        s["visibility"] = float(v)
        return state_from_spec(s)

    def build_obs(rho: DensityOperator):
        return observables_from_spec(obs_name, rho) if obs_name else None

    grid = _parse_grid(args.grid)

    def evaluate(v: float):
        rho = family(float(v))
        topo = topology_from_spec(args.topology, rho.layout.node_order)
        margin = criterion_margin(rho, build_obs(rho), args.criterion, topo)
        if args.criterion == "trace-norm":
            rep = trace_norm_criterion(covariance_matrix(build_obs(rho), rho), topo)
            return rep.lhs, rep.rhs, rep.margin, rep.passed
        return margin, 0.0, margin, margin >= 0.0

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, grid))
    else:
        rows = [evaluate(v) for v in grid]

    threshold = None
    if args.refine:
        topo_for = topology_from_spec(args.topology, family(0.0).layout.node_order)
        threshold = visibility_threshold(family, build_obs, args.criterion, topo_for,
                                         tol=args.tolerance)

    if args.format == "csv":
        lines = ["visibility,lhs,rhs,margin,pass"]
        for v, (lhs, rhs, margin, ok) in zip(grid, rows):
            lines.append(f"{float(v)!r},{float(lhs)!r},{float(rhs)!r},{float(margin)!r},{str(bool(ok)).lower()}")
        if threshold is not None:
            lines.append(f"# refined_threshold,{threshold!r}")
        _write_text(args.output, "\n".join(lines) + "\n")
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "criterion": args.criterion,
            "state_spec": base_spec,
            "observables_spec": obs_name,
            "grid": [
                {"visibility": float(v), "lhs": float(l), "rhs": float(r),
                 "margin": float(m), "pass": bool(p)}
                for v, (l, r, m, p) in zip(grid, rows)
            ],
        }
        if threshold is not None:
            payload["refined_threshold"] = threshold
        _emit_json(args.output, payload)
    return EXIT_PASS


def cmd_decompose(args) -> int:
    spec = state_spec_from_args(args)
    if spec.get("family") != "btn":
        raise SpecError("decompose works on the btn family (three declared sources)")
    params = spec.get("params", {})
    sub = params.get("sources")
    if sub is None and "bell_dim" in params:
        sub = [{"family": "bell", "params": {"dim": int(params["bell_dim"])}}] * 3
    sources = [state_from_spec(s) for s in sub]
    rho = btn_assemble(*sources)
    obs = full_product_set(rho.layout)
    dec = btn_decompose(sources, obs)
    outdir = Path(args.output_dir or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    names = ["t_c", "t_b", "t_a", "r"]
    min_eigs = {}
    for name, part in zip(names, dec.parts()):
        ncmx.write_matrix(outdir / f"{name}.ncmx", part.astype(complex))
        min_eigs[name] = float(np.linalg.eigvalsh(part)[0])
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "state_spec": spec,
        "parts": [f"{n}.ncmx" for n in names],
        "block_sizes": list(dec.block_sizes),
        "node_labels": list(dec.node_labels),
        "min_eigenvalues": min_eigs,
    }
    _emit_json(str(outdir / "decomposition.json"), manifest)
    if args.output is None:
        _emit_json(None, manifest)
    return EXIT_PASS


def cmd_feasibility(args) -> int:
    state_spec = obs_name = None
    if args.cm_file:
        gamma = load_cm(args.cm_file)
        topo = topology_from_spec(args.topology, gamma.node_labels)
    else:
        state_spec, rho, obs_name, obs = _build_state_and_obs(args)
        if obs is None:
            raise SpecError("feasibility needs --observables (or --cm-file)")
        gamma = covariance_matrix(obs, rho)
        topo = topology_from_spec(args.topology, rho.layout.node_order)
    problem = FeasibilityProblem(gamma, topo)
    outcome = solve(problem, tol=args.tolerance, max_iter=args.max_iter,
                    allow_diagonal_slack=args.slack)
    manifest_path = None
    if args.witness_dir:
        manifest_path = str(export_witness(problem, outcome, args.witness_dir))
    payload = {
        "schema_version": SCHEMA_VERSION,
        "status": outcome.status,
        "residual": outcome.residual,
        "iterations": outcome.iterations,
        "witness_manifest": manifest_path,
        "state_spec": state_spec,
        "observables_spec": obs_name,
        "topology": topology_to_spec(topo),
        "note": ("infeasible-evidence is not a certificate; a dual certificate "
                 "would require an SDP solver"),
    }
    _emit_json(args.output, payload)
    if outcome.status == "feasible":
        return EXIT_PASS
    if outcome.status == "infeasible-evidence":
        return EXIT_FAIL
    return EXIT_INCONCLUSIVE


def cmd_fidelity_bound(args) -> int:
    bound = ghz_fidelity_bound(tol=args.tolerance, grid_step=args.grid_step)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "criterion": "trace-norm",
        "target": "ghz3",
        "bound": bound,
        "tolerance": args.tolerance,
    }
    _emit_json(args.output, payload)
    return EXIT_PASS


def cmd_schema(args) -> int:
    _write_text(args.output, report_schema())
    return EXIT_PASS


# -- argument wiring -----------------------------------------------------------


def _add_state_args(p: argparse.ArgumentParser):
    p.add_argument("--state", help=f"state family: {', '.join(STATE_FAMILIES[:-1])}")
    p.add_argument("--state-json", help="full JSON state spec (inline or @file)")
    p.add_argument("--state-file", help="NCMX density matrix file")
    p.add_argument("--dims", help="comma-separated node dimensions for --state-file")
    p.add_argument("--parties", type=int, help="party count for ghz")
    p.add_argument("--dim", type=int, help="local dimension (ghz, bell, btn)")
    p.add_argument("--levels", help="ghz levels: 'full' or e.g. '0,3'")
    p.add_argument("--k", type=int, help="dicke excitation number")
    p.add_argument("--visibility", type=float, help="white-noise visibility")
    p.add_argument("--split", help="per-node factor split, e.g. 2x2")


def _add_common_args(p: argparse.ArgumentParser):
    p.add_argument("--observables", help=f"named set: {', '.join(sorted(NAMED_SETS))}")
    p.add_argument("--criterion", default="trace-norm",
                   choices=["trace-norm", "xi-psd", "btn-residual"])
    p.add_argument("--topology", help="'triangle', 'line', or JSON (inline or @file)")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--output", help="report path (default: stdout)")
    p.add_argument("--format", default="json", choices=["json", "csv"])


def build_parser() -> _Parser:
    parser = _Parser(prog="netcm",
                     description="Covariance-matrix criteria for quantum network states")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate one criterion on one state")
    _add_state_args(p)
    _add_common_args(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("scan", help="criterion margin over a visibility grid")
    _add_state_args(p)
    _add_common_args(p)
    p.add_argument("--grid", required=True, help="start:stop:step over visibility")
    p.add_argument("--refine", action="store_true", help="bisection-refine the threshold")
    p.set_defaults(func=cmd_scan, tolerance=1e-6)

    p = sub.add_parser("decompose", help="source decomposition of a triangle-state CM")
    _add_state_args(p)
    _add_common_args(p)
    p.add_argument("--output-dir", help="directory for the NCMX parts")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("feasibility", help="block-decomposition feasibility of a CM")
    _add_state_args(p)
    _add_common_args(p)
    p.add_argument("--cm-file", help="NCMX covariance matrix (with JSON sidecar)")
    p.add_argument("--max-iter", type=int, default=50000)
    p.add_argument("--witness-dir", help="directory for witness export")
    p.add_argument("--slack", action="store_true",
                   help="allow a PSD block-diagonal slack (diagonal <= instead of =)")
    p.set_defaults(func=cmd_feasibility, tolerance=1e-7)

    p = sub.add_parser("fidelity-bound", help="GHZ fidelity bound from the trace-norm criterion")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--grid-step", type=float, default=0.02)
    p.add_argument("--output")
    p.set_defaults(func=cmd_fidelity_bound)

    p = sub.add_parser("schema", help="print the JSON report schema")
    p.add_argument("--output")
    p.set_defaults(func=cmd_schema)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SpecError as exc:
        print(f"netcm: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"netcm: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"netcm: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
