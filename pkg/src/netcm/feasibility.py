"""Numerical feasibility test for the source block decomposition of a CM.

Whether a covariance matrix splits into per-source PSD summands (off-diagonal
blocks fixed, diagonal blocks free but summing to the CM's diagonal blocks)
is a convex feasibility problem.  It is solved here with Dykstra's
alternating projections between the product of PSD cones and the affine
constraint set.  A converged iterate is returned as an explicit witness;
a residual that plateaus well above the tolerance is reported as
"infeasible-evidence".  That evidence is *not* a certificate: a dual
certificate would require an SDP solver, which this module deliberately
does not depend on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ncmx
from .covariance import BlockCovarianceMatrix
from .linalg import psd_project
from .topology import NetworkTopology, SourceMask, block_pattern

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 50000


@dataclass(frozen=True)
class FeasibilityProblem:
    """A CM, an NCDS topology, and the per-source block masks."""

    gamma: BlockCovarianceMatrix
    topology: NetworkTopology
    masks: tuple[SourceMask, ...] = ()

    def __post_init__(self):
        if not self.topology.is_ncds():
            raise ValueError("feasibility decomposition requires an NCDS topology")
        if set(self.gamma.node_labels) != set(self.topology.nodes):
            raise ValueError(
                f"CM nodes {self.gamma.node_labels} do not match topology nodes {self.topology.nodes}"
            )
        if not self.masks:
            object.__setattr__(self, "masks", tuple(block_pattern(self.topology)))
        else:
            object.__setattr__(self, "masks", tuple(self.masks))


@dataclass(frozen=True)
class FeasibilityOutcome:
    """Solver verdict: status, witness (when feasible), residual trace."""

    status: str  # "feasible" | "infeasible-evidence" | "inconclusive"
    witness: tuple[np.ndarray, ...] | None
    residual: float
    iterations: int
    residual_history: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "residual": self.residual,
            "iterations": self.iterations,
        }


def _node_slices(gamma: BlockCovarianceMatrix) -> dict[str, slice]:
    return {x: gamma.node_slice(x) for x in gamma.node_labels}


def affine_project(ts: Sequence[np.ndarray], problem: FeasibilityProblem) -> list[np.ndarray]:
    """Exact Euclidean projection onto the affine constraint set.

    Off-diagonal blocks of each summand are overwritten with their mask
    values; the diagonal deficit of every node is spread equally over the
    summands that carry that node.
    """
    gamma = problem.gamma
    sl = _node_slices(gamma)
    nodes = gamma.node_labels
    out = [t.copy() for t in ts]
    for t, mask in zip(out, problem.masks):
        for i, x in enumerate(nodes):
            for y in nodes[i + 1:]:
                blk = gamma.block(x, y) if not mask.zero_block(x, y) else 0.0
                t[sl[x], sl[y]] = blk
                t[sl[y], sl[x]] = np.transpose(blk) if isinstance(blk, np.ndarray) else 0.0
        for x in nodes:
            if x not in mask.free_nodes:
                t[sl[x], sl[x]] = 0.0
    for x in nodes:
        carriers = [k for k, mask in enumerate(problem.masks) if x in mask.free_nodes]
        if not carriers:
            raise ValueError(f"node {x!r} is fed by no source; its diagonal block cannot be matched")
        deficit = gamma.block(x, x) - sum(out[k][sl[x], sl[x]] for k in carriers)
        share = deficit / len(carriers)
        for k in carriers:
            out[k][sl[x], sl[x]] += share
    return out


def _psd_project_all(ts: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [psd_project(t).real for t in ts]


def _affine_violation(ts: Sequence[np.ndarray], problem: FeasibilityProblem) -> float:
    gamma = problem.gamma
    sl = _node_slices(gamma)
    nodes = gamma.node_labels
    worst = 0.0
    for t, mask in zip(ts, problem.masks):
        for i, x in enumerate(nodes):
            for y in nodes[i + 1:]:
                target = gamma.block(x, y) if not mask.zero_block(x, y) else np.zeros(
                    (sl[x].stop - sl[x].start, sl[y].stop - sl[y].start))
                worst = max(worst, float(np.abs(t[sl[x], sl[y]] - target).max(initial=0.0)))
            if x not in mask.free_nodes:
                worst = max(worst, float(np.abs(t[sl[x], sl[x]]).max(initial=0.0)))
    for x in nodes:
        total = sum(t[sl[x], sl[x]] for t in ts)
        worst = max(worst, float(np.abs(total - gamma.block(x, x)).max(initial=0.0)))
    # node pairs carried by no summand: the total decomposition has zero
    # there, so the CM block itself must vanish
    worst = max(worst, _uncovered_mismatch(problem))
    return worst


def _uncovered_mismatch(problem: FeasibilityProblem) -> float:
    gamma = problem.gamma
    nodes = gamma.node_labels
    worst = 0.0
    for i, x in enumerate(nodes):
        for y in nodes[i + 1:]:
            if all(mask.zero_block(x, y) for mask in problem.masks):
                worst = max(worst, float(np.abs(gamma.block(x, y)).max(initial=0.0)))
    return worst


DIAGONAL_SLACK = "diagonal-slack"


def _with_slack(problem: FeasibilityProblem) -> FeasibilityProblem:
    slack = SourceMask(source=(DIAGONAL_SLACK,), fixed_pairs=frozenset(),
                       free_nodes=frozenset(problem.gamma.node_labels))
    return FeasibilityProblem(problem.gamma, problem.topology, problem.masks + (slack,))


def solve(problem: FeasibilityProblem, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER, allow_diagonal_slack: bool = False) -> FeasibilityOutcome:
    """Dykstra alternating projections between the PSD cones and the affine set.

    Stops as soon as the PSD iterate satisfies the affine constraints within
    ``tol`` (status "feasible", the iterate is the witness).  At ``max_iter``
    the verdict is "infeasible-evidence" if the residual plateaued at or
    above ``10 * tol`` over the last tenth of the run, else "inconclusive".

    ``allow_diagonal_slack`` relaxes the diagonal equality to <= by adding a
    free block-diagonal PSD summand.
    """
    if allow_diagonal_slack:
        problem = _with_slack(problem)
    blocked = _uncovered_mismatch(problem)
    if blocked > tol:
        # a CM block between nodes no source connects cannot be matched by
        # any choice of summands; no amount of iteration changes that
        return FeasibilityOutcome("infeasible-evidence", None, float(blocked), 0,
                                  np.array([blocked]))
    n = problem.gamma.dim
    base = problem.gamma.matrix / len(problem.masks)
    start = affine_project([base.copy() for _ in problem.masks], problem)
    x = _psd_project_all(start)
    p = [np.zeros((n, n)) for _ in problem.masks]
    q = [np.zeros((n, n)) for _ in problem.masks]

    history = np.empty(max_iter)
    iterations = 0
    status = "inconclusive"
    residual = np.inf
    for it in range(max_iter):
        y = _psd_project_all([xi + pi for xi, pi in zip(x, p)])
        p = [xi + pi - yi for xi, pi, yi in zip(x, p, y)]
        x = affine_project([yi + qi for yi, qi in zip(y, q)], problem)
        q = [yi + qi - xi for yi, qi, xi in zip(y, q, x)]
        residual = _affine_violation(y, problem)
        history[it] = residual
        iterations = it + 1
        if residual <= tol:
            status = "feasible"
            break
    history = history[:iterations]
    if status != "feasible" and iterations == max_iter:
        tail = history[-max(1, max_iter // 10):]
        if tail.min() >= 10.0 * tol:
            status = "infeasible-evidence"
    witness = tuple(y) if status == "feasible" else None
    return FeasibilityOutcome(status, witness, float(residual), iterations, history)


def verify_witness(problem: FeasibilityProblem, witness: Sequence[np.ndarray],
                   tol: float = DEFAULT_TOL) -> bool:
    """Independent check of a decomposition witness.

    Each summand must be PSD within ``tol``, carry the mask's off-diagonal
    blocks within ``tol``, and the diagonal blocks must sum to the CM's
    within ``tol``.
    """
    if len(witness) != len(problem.masks):
        raise ValueError(f"need {len(problem.masks)} summands, got {len(witness)}")
    n = problem.gamma.dim
    mats = [np.asarray(t, dtype=float) for t in witness]
    if any(t.shape != (n, n) for t in mats):
        raise ValueError("witness summand shapes do not match the CM")
    for t in mats:
        if float(np.linalg.eigvalsh(0.5 * (t + t.T))[0]) < -tol:
            return False
    return _affine_violation(mats, problem) <= tol


def witness_from_parts(parts: Sequence[np.ndarray], remainder: np.ndarray,
                       problem: FeasibilityProblem) -> list[np.ndarray]:
    """Fold a block-diagonal PSD remainder into per-source summands.

    Each node's remainder block is assigned to the first summand whose mask
    carries that node; adding a PSD block-diagonal piece preserves PSD-ness,
    so a valid source decomposition with separate remainder becomes a valid
    witness for the equality-form constraints.
    """
    sl = _node_slices(problem.gamma)
    out = [np.asarray(t, dtype=float).copy() for t in parts]
    for x in problem.gamma.node_labels:
        for k, mask in enumerate(problem.masks):
            if x in mask.free_nodes:
                out[k][sl[x], sl[x]] += remainder[sl[x], sl[x]]
                break
        else:
            raise ValueError(f"no summand carries node {x!r}")
    return out


def export_witness(problem: FeasibilityProblem, outcome: FeasibilityOutcome, directory) -> Path:
    """Write one NCMX file per source summand plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    if outcome.witness is not None:
        for k, t in enumerate(outcome.witness):
            name = f"witness_{k}.ncmx"
            ncmx.write_matrix(directory / name, t.astype(complex))
            files.append(name)
    manifest = {
        "format": "netcm-witness",
        "version": 1,
        "status": outcome.status,
        "residual": outcome.residual,
        "iterations": outcome.iterations,
        "node_labels": list(problem.gamma.node_labels),
        "block_sizes": list(problem.gamma.block_sizes),
        "topology": {
            "nodes": list(problem.topology.nodes),
            "sources": [list(s) for s in problem.topology.sources],
        },
        "masks": [
            {
                "source": list(m.source),
                "fixed_pairs": sorted(sorted(p) for p in m.fixed_pairs),
                "free_nodes": sorted(m.free_nodes),
            }
            for m in problem.masks
        ],
        "witness_files": files,
        "note": ("infeasible-evidence is not a certificate; a dual certificate "
                 "would require an SDP solver"),
    }
    path = directory / "manifest.json"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2) + "\n")
    tmp.replace(path)
    return path
