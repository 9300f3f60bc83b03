"""Dense complex matrix kernel: tensor operations, spectral routines, PSD machinery.

Everything operates on plain complex numpy arrays.  Matrices fed to the
spectral routines are required to be Hermitian within ``HERMITICITY_TOL``
and are symmetrized before factorization so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERMITICITY_TOL = 1e-10


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    return m


def hermitian_deviation(m) -> float:
    """Max-abs deviation of ``m`` from its conjugate transpose."""
    m = _as_matrix(m)
    return float(np.abs(m - m.conj().T).max()) if m.size else 0.0


def require_hermitian(m, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Validate Hermiticity within ``tol`` and return the symmetrized matrix."""
    m = _as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"Hermitian matrix must be square, got shape {m.shape}")
    dev = hermitian_deviation(m)
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian: max|m - m^dag| = {dev:.3e} > {tol:.1e}")
    return 0.5 * (m + m.conj().T)


def kron(a, b) -> np.ndarray:
    """Kronecker product; dimensions multiply."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def _block_offsets(sizes: Sequence[int]) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=int)
    if sizes.size and sizes.min() <= 0:
        raise ValueError("block sizes must be positive")
    return np.concatenate([[0], np.cumsum(sizes)])


def khatri_rao(a, a_blocks, b, b_blocks) -> np.ndarray:
    """Block-wise Kronecker product of conformally partitioned matrices.

    ``a_blocks`` and ``b_blocks`` are ``(row_sizes, col_sizes)`` pairs
    partitioning the two operands.  Block ``(i, j)`` of the result is
    ``kron(A_ij, B_ij)``; both operands must have the same number of row
    blocks and of column blocks.
    """
    a, b = _as_matrix(a), _as_matrix(b)
    ar, ac = (_block_offsets(s) for s in a_blocks)
    br, bc = (_block_offsets(s) for s in b_blocks)
    if len(ar) != len(br) or len(ac) != len(bc):
        raise ValueError(
            f"block count mismatch: {len(ar) - 1}x{len(ac) - 1} vs {len(br) - 1}x{len(bc) - 1}"
        )
    if ar[-1] != a.shape[0] or ac[-1] != a.shape[1]:
        raise ValueError("block sizes of first operand do not sum to its shape")
    if br[-1] != b.shape[0] or bc[-1] != b.shape[1]:
        raise ValueError("block sizes of second operand do not sum to its shape")
    out_rows = _block_offsets([(ar[i + 1] - ar[i]) * (br[i + 1] - br[i]) for i in range(len(ar) - 1)])
    out_cols = _block_offsets([(ac[j + 1] - ac[j]) * (bc[j + 1] - bc[j]) for j in range(len(ac) - 1)])
    out = np.zeros((out_rows[-1], out_cols[-1]), dtype=complex)
    for i in range(len(ar) - 1):
        for j in range(len(ac) - 1):
            blk = np.kron(a[ar[i]:ar[i + 1], ac[j]:ac[j + 1]], b[br[i]:br[i + 1], bc[j]:bc[j + 1]])
            out[out_rows[i]:out_rows[i + 1], out_cols[j]:out_cols[j + 1]] = blk
    return out


@dataclass(frozen=True)
class SubsystemLayout:
    """Tensor factorization of a global Hilbert space.

    ``dims``   local dimension of each factor, in tensor order.
    ``labels`` unique name per factor.
    ``nodes``  node label per factor; factors of one node must be contiguous.
               Defaults to ``labels`` (every factor its own node).
    """

    dims: tuple[int, ...]
    labels: tuple[str, ...]
    nodes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.nodes:
            object.__setattr__(self, "nodes", self.labels)
        else:
            object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(self.dims) != len(self.labels) or len(self.dims) != len(self.nodes):
            raise ValueError("dims, labels and nodes must have equal length")
        if any(d < 1 for d in self.dims):
            raise ValueError("factor dimensions must be positive")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"factor labels must be unique: {self.labels}")
        seen = {}
        for i, x in enumerate(self.nodes):
            if x in seen and seen[x] != i - 1:
                raise ValueError(f"factors of node {x!r} are not contiguous")
            seen[x] = i

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def node_order(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.nodes))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown factor label {label!r}; have {self.labels}") from None

    def factors_of(self, node: str) -> tuple[str, ...]:
        out = tuple(l for l, x in zip(self.labels, self.nodes) if x == node)
        if not out:
            raise KeyError(f"unknown node {node!r}; have {self.node_order}")
        return out

    def node_dim(self, node: str) -> int:
        return int(np.prod([self.dims[self.index(l)] for l in self.factors_of(node)]))

    def keep(self, labels: Iterable[str]) -> "SubsystemLayout":
        """Layout restricted to the given factors, original order preserved."""
        kept = set(labels)
        unknown = kept - set(self.labels)
        if unknown:
            raise KeyError(f"unknown factor labels {sorted(unknown)}; have {self.labels}")
        sel = [i for i, l in enumerate(self.labels) if l in kept]
        return SubsystemLayout(
            tuple(self.dims[i] for i in sel),
            tuple(self.labels[i] for i in sel),
            tuple(self.nodes[i] for i in sel),
        )

    def reorder(self, new_order: Sequence[str]) -> "SubsystemLayout":
        if sorted(new_order) != sorted(self.labels):
            raise ValueError(f"{tuple(new_order)} is not a permutation of {self.labels}")
        idx = [self.index(l) for l in new_order]
        return SubsystemLayout(
            tuple(self.dims[i] for i in idx),
            tuple(self.labels[i] for i in idx),
            tuple(self.nodes[i] for i in idx),
        )


def partial_trace(rho, layout: SubsystemLayout, keep: Iterable[str]) -> np.ndarray:
    """Reduced operator on the kept factors, factor order preserved.

    Tracing over every factor yields the 1x1 matrix ``[tr(rho)]``.
    """
    rho = _as_matrix(rho)
    if rho.shape[0] != rho.shape[1] or rho.shape[0] != layout.dim:
        raise ValueError(f"operator shape {rho.shape} does not match layout dimension {layout.dim}")
    keep = set(keep)
    unknown = keep - set(layout.labels)
    if unknown:
        raise KeyError(f"unknown factor labels {sorted(unknown)}; have {layout.labels}")
    n = len(layout.dims)
    tensor = rho.reshape(layout.dims + layout.dims)
    kept = [i for i, l in enumerate(layout.labels) if l in keep]
    remaining = n
    for i in sorted(set(range(n)) - set(kept), reverse=True):
        tensor = np.trace(tensor, axis1=i, axis2=i + remaining)
        remaining -= 1
    d = int(np.prod([layout.dims[i] for i in kept])) if kept else 1
    return tensor.reshape(d, d)


def permute_subsystems(rho, layout: SubsystemLayout, new_order: Sequence[str]) -> np.ndarray:
    """State re-expressed in the reordered tensor factorization."""
    rho = _as_matrix(rho)
    if rho.shape[0] != layout.dim:
        raise ValueError(f"operator shape {rho.shape} does not match layout dimension {layout.dim}")
    if sorted(new_order) != sorted(layout.labels):
        raise ValueError(f"{tuple(new_order)} is not a permutation of {layout.labels}")
    n = len(layout.dims)
    perm = [layout.index(l) for l in new_order]
    tensor = rho.reshape(layout.dims + layout.dims)
    tensor = tensor.transpose(perm + [p + n for p in perm])
    return tensor.reshape(layout.dim, layout.dim)


def eigvals_hermitian(m, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Real spectrum of a Hermitian matrix, ascending."""
    return np.linalg.eigvalsh(require_hermitian(m, tol))


def trace_norm(m) -> float:
    """Sum of singular values."""
    m = _as_matrix(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False).sum())


def is_psd(m, tol: float = 1e-9) -> bool:
    """True iff the minimal eigenvalue of the (Hermitian) input is >= -tol."""
    vals = eigvals_hermitian(m)
    return bool(vals.size == 0 or vals[0] >= -tol)


def psd_project(m) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm: eigenvalues clipped at zero."""
    h = require_hermitian(m)
    vals, vecs = np.linalg.eigh(h)
    clipped = np.clip(vals, 0.0, None)
    return (vecs * clipped) @ vecs.conj().T
