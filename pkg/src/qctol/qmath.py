"""Dense complex linear algebra and entanglement primitives for small qubit systems.

Everything here works on plain numpy arrays plus two light containers
(:class:`DensityMatrix`, :class:`BipartiteSplit`).  Qubit labels map to tensor
factors left to right, and composite indices follow the row-major convention
``i_a * dim_b + i_b``.  All spectral computations go through a Hermitian
eigendecomposition of ``(M + M†)/2`` so that round-off is symmetrized.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce

import numpy as np

# Shared numerical tolerances.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-9   # accepted round-off floor for density-matrix spectra
PPT_TOL = 1e-9      # min PT eigenvalue >= -PPT_TOL is reported as "PPT"

PAULI_LABELS = "IXYZ"

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}


class QctolError(Exception):
    """Base class for errors raised by this package."""


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product with the row-major index convention (i_a*dim_b + i_b)."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(mats) -> np.ndarray:
    return reduce(kron, mats)


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(m).T)


def herm(m: np.ndarray) -> np.ndarray:
    """Symmetrized matrix (M + M†)/2 used for all spectral computations."""
    m = np.asarray(m)
    return 0.5 * (m + dag(m))


def eigh_sym(m: np.ndarray):
    """Hermitian eigendecomposition of the symmetrized matrix."""
    return np.linalg.eigh(herm(m))


def ket(bits: str) -> np.ndarray:
    """Computational-basis state vector, e.g. ket("01")."""
    n = len(bits)
    v = np.zeros(2**n, dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def pauli_labels(n: int):
    """All n-qubit Pauli labels in lexicographic [I,X,Y,Z] order per qubit."""
    return ["".join(t) for t in itertools.product(PAULI_LABELS, repeat=n)]


_PAULI_BASIS_CACHE: dict[int, np.ndarray] = {}


def pauli_basis(n: int) -> np.ndarray:
    """Stacked array of the 4**n Pauli-string matrices, shape (4**n, 2**n, 2**n)."""
    if n not in _PAULI_BASIS_CACHE:
        mats = [kron_all([PAULI_1Q[c] for c in lab]) if n > 1 else PAULI_1Q[lab]
                for lab in pauli_labels(n)]
        _PAULI_BASIS_CACHE[n] = np.stack(mats)
    return _PAULI_BASIS_CACHE[n]


@dataclass(frozen=True)
class PauliString:
    """A signed Pauli string, e.g. PauliString("XZ", -1)."""

    factors: str
    phase: complex = 1.0 + 0.0j

    def __post_init__(self):
        if any(c not in PAULI_LABELS for c in self.factors):
            raise QctolError(f"invalid Pauli factors {self.factors!r}")
        if not any(np.isclose(self.phase, p) for p in (1, -1, 1j, -1j)):
            raise QctolError(f"phase must be a fourth root of unity, got {self.phase}")

    @property
    def n_qubits(self) -> int:
        return len(self.factors)

    def matrix(self) -> np.ndarray:
        m = kron_all([PAULI_1Q[c] for c in self.factors])
        return self.phase * m


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix with ordered subsystem labels."""

    matrix: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", tuple(self.labels))
        dim = 2 ** len(self.labels)
        if m.shape != (dim, dim):
            raise QctolError(
                f"matrix shape {m.shape} does not match {len(self.labels)} qubit labels")
        if len(set(self.labels)) != len(self.labels):
            raise QctolError(f"duplicate labels in {self.labels}")
        if not np.all(np.isfinite(m)):
            raise QctolError("non-finite entries")
        if np.max(np.abs(m - dag(m))) > HERMITICITY_TOL * max(1.0, np.max(np.abs(m))):
            raise QctolError("matrix is not Hermitian to tolerance")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-9:
            raise QctolError(f"trace is {tr}, not 1")
        lo = float(np.linalg.eigvalsh(herm(m))[0])
        if lo < EIG_FLOOR:
            raise QctolError(f"minimum eigenvalue {lo} below floor {EIG_FLOOR}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise QctolError(f"unknown label {label!r}; have {self.labels}") from None


@dataclass(frozen=True)
class BipartiteSplit:
    """A bipartition of qubit labels into a left and a right block."""

    left: frozenset
    right: frozenset

    def __init__(self, left, right):
        object.__setattr__(self, "left", frozenset(left))
        object.__setattr__(self, "right", frozenset(right))
        if not self.left or not self.right:
            raise QctolError("both sides of a split must be nonempty")
        if self.left & self.right:
            raise QctolError("split sides overlap")

    def validate_for(self, labels) -> None:
        if self.left | self.right != set(labels):
            raise QctolError(
                f"split {sorted(self.left)}|{sorted(self.right)} does not cover {labels}")


def density(matrix: np.ndarray, labels=None) -> DensityMatrix:
    """Wrap a raw matrix as a DensityMatrix, defaulting labels to q0..q(n-1)."""
    matrix = np.asarray(matrix, dtype=complex)
    n = int(round(np.log2(matrix.shape[0])))
    if 2**n != matrix.shape[0]:
        raise QctolError(f"dimension {matrix.shape[0]} is not a power of 2")
    if labels is None:
        labels = tuple(f"q{i}" for i in range(n))
    return DensityMatrix(matrix, tuple(labels))


def pure(v: np.ndarray, labels=None) -> DensityMatrix:
    return density(projector(v), labels)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the kept labels (order preserved from the input)."""
    keep = list(keep)
    for lab in keep:
        rho.axis(lab)  # raises on unknown label
    n = rho.n_qubits
    drop = [i for i, lab in enumerate(rho.labels) if lab not in keep]
    if not drop:
        return rho
    t = rho.matrix.reshape([2] * (2 * n))
    for i in sorted(drop, reverse=True):
        t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    kept_labels = [lab for lab in rho.labels if lab in keep]
    d = 2 ** len(kept_labels)
    out = t.reshape(d, d)
    # reorder to the caller's requested label order
    perm = [kept_labels.index(lab) for lab in keep]
    if perm != list(range(len(keep))):
        k = len(keep)
        out = out.reshape([2] * (2 * k)).transpose(perm + [p + k for p in perm])
        out = out.reshape(d, d)
    return DensityMatrix(out, tuple(keep))


def partial_transpose(rho: DensityMatrix, split: BipartiteSplit) -> np.ndarray:
    """Transpose applied to the right-block indices of the split."""
    split.validate_for(rho.labels)
    n = rho.n_qubits
    t = rho.matrix.reshape([2] * (2 * n))
    axes = list(range(2 * n))
    for i, lab in enumerate(rho.labels):
        if lab in split.right:
            axes[i], axes[i + n] = axes[i + n], axes[i]
    return t.transpose(axes).reshape(rho.dim, rho.dim)


def min_pt_eigenvalue(rho: DensityMatrix, split: BipartiteSplit) -> float:
    """Smallest eigenvalue of the partial transpose; >= -PPT_TOL counts as PPT."""
    pt = partial_transpose(rho, split)
    return float(np.linalg.eigvalsh(herm(pt))[0])


def is_ppt(rho: DensityMatrix, split: BipartiteSplit, tol: float = PPT_TOL) -> bool:
    return min_pt_eigenvalue(rho, split) >= -tol


def entanglement_entropy_pure(psi: np.ndarray, labels, split: BipartiteSplit) -> float:
    """Von Neumann entropy (base 2, in ebits) of the left block of a pure state."""
    psi = np.asarray(psi, dtype=complex).ravel()
    labels = tuple(labels)
    n = len(labels)
    if psi.size != 2**n:
        raise QctolError(f"state length {psi.size} does not match {n} labels")
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-10:
        raise QctolError(f"state not normalized: |psi| = {nrm}")
    split.validate_for(labels)
    left_axes = [i for i, lab in enumerate(labels) if lab in split.left]
    right_axes = [i for i, lab in enumerate(labels) if lab in split.right]
    t = psi.reshape([2] * n).transpose(left_axes + right_axes)
    mat = t.reshape(2 ** len(left_axes), 2 ** len(right_axes))
    s = np.linalg.svd(mat, compute_uv=False)
    p = s**2
    p = p[p > 1e-15]
    return float(-np.sum(p * np.log2(p)))


def pauli_expand(rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Coefficients r_P = Tr[P rho] over the lexicographic Pauli strings.

    The inverse is :func:`pauli_reconstruct`: rho = 2**-n * sum_P r_P P.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    n = int(round(np.log2(m.shape[0])))
    basis = pauli_basis(n)
    return np.real(np.einsum("pij,ji->p", basis, m))


def pauli_reconstruct(r: np.ndarray, n_qubits: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.size != 4**n_qubits:
        raise QctolError(f"expected {4**n_qubits} coefficients, got {r.size}")
    basis = pauli_basis(n_qubits)
    return np.einsum("p,pij->ij", r, basis) / (2**n_qubits)


def simultaneously_diagonalize(mats, tol: float = 1e-9) -> np.ndarray:
    """Common eigenbasis of a family of commuting Hermitian matrices.

    Returns a unitary V whose columns diagonalize every input (refined
    subspace by subspace).  Raises if the family does not commute to `tol`.
    """
    mats = [herm(m) for m in mats]
    d = mats[0].shape[0]
    v = np.eye(d, dtype=complex)
    blocks = [list(range(d))]
    for m in mats:
        new_blocks = []
        for idx in blocks:
            if len(idx) == 1:
                new_blocks.append(idx)
                continue
            sub = dag(v[:, idx]) @ m @ v[:, idx]
            w, u = np.linalg.eigh(herm(sub))
            v[:, idx] = v[:, idx] @ u
            # split the block wherever the eigenvalue jumps
            start = 0
            for k in range(1, len(idx) + 1):
                if k == len(idx) or w[k] - w[start] > 1e-7:
                    new_blocks.append(idx[start:k])
                    start = k
        blocks = new_blocks
    for m in mats:
        off = dag(v) @ m @ v
        off = off - np.diag(np.diag(off))
        if np.max(np.abs(off)) > tol:
            raise QctolError("matrices are not simultaneously diagonalizable")
    return v


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None,
                          labels=None) -> DensityMatrix:
    """Hilbert-Schmidt random mixed state (optionally rank limited)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ dag(g)
    m /= np.trace(m).real
    return density(m, labels)


def closest_pure_product(vec: np.ndarray, dim_left: int, dim_right: int):
    """Best product approximation a (x) b of a bipartite vector (leading SVD term)."""
    m = np.asarray(vec, dtype=complex).reshape(dim_left, dim_right)
    u, s, vh = np.linalg.svd(m)
    return float(s[0]), u[:, 0], vh[0, :]


def schmidt_coefficients(vec: np.ndarray, dim_left: int, dim_right: int) -> np.ndarray:
    m = np.asarray(vec, dtype=complex).reshape(dim_left, dim_right)
    return np.linalg.svd(m, compute_uv=False)
