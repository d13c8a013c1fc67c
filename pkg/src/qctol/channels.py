"""Quantum operations with interconvertible Choi, Kraus and Pauli-transfer views.

The canonical internal representation is the Choi state (trace-1 convention:
the maximally mixed channel has Choi I/d^2 and trace preservation reads
"the input marginal equals I/d_in").  Kraus sets and transfer matrices are
derived views.  For a k-qubit operation the Choi state lives on labels
A1..Ak,B1..Bk, tensor-ordered as listed, with entangled reference pairs
(A1,B1)..(Ak,Bk).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import qmath
from .qmath import (
    DensityMatrix,
    QctolError,
    dag,
    density,
    herm,
    kron,
    kron_all,
    pauli_basis,
)

UNITARITY_TOL = 1e-10
TP_TOL = 1e-9
KRAUS_DROP = 1e-10
KRAUS_WARN = 1e-7


class ChannelError(QctolError):
    pass


def choi_labels(parties: int) -> tuple[str, ...]:
    return tuple(f"A{i+1}" for i in range(parties)) + tuple(f"B{i+1}" for i in range(parties))


def max_entangled_ket(parties: int) -> np.ndarray:
    """|+> = d^-1/2 sum_i |i>_A |i>_B as a vector on A1..Ak,B1..Bk."""
    d = 2**parties
    v = np.zeros(d * d, dtype=complex)
    for i in range(d):
        v[i * d + i] = 1.0
    return v / np.sqrt(d)


class Channel:
    """A trace-preserving quantum operation on `parties` qubits."""

    def __init__(self, choi: np.ndarray, parties: int, name: str | None = None,
                 validate: bool = True):
        choi = np.asarray(choi, dtype=complex)
        d = 2**parties
        if choi.shape != (d * d, d * d):
            raise ChannelError(f"Choi shape {choi.shape} does not match {parties} parties")
        self._choi = choi
        self.parties = parties
        self.in_dim = d
        self.out_dim = d
        self.name = name
        self._kraus: list[np.ndarray] | None = None
        if validate:
            self.validate()

    # -- validation ------------------------------------------------------

    def validate(self, atol: float = TP_TOL) -> None:
        c = self._choi
        if np.max(np.abs(c - dag(c))) > 1e-9:
            raise ChannelError("Choi state is not Hermitian")
        tr = np.trace(c).real
        if abs(tr - 1.0) > atol:
            raise ChannelError(f"Choi trace {tr} != 1")
        lo = float(np.linalg.eigvalsh(herm(c))[0])
        if lo < -1e-9:
            raise ChannelError(f"Choi state not PSD (min eigenvalue {lo})")
        marg = self._input_marginal()
        if np.max(np.abs(marg - np.eye(self.in_dim) / self.in_dim)) > atol:
            raise ChannelError("input marginal of Choi is not maximally mixed "
                               "(operation is not trace preserving)")

    def _input_marginal(self) -> np.ndarray:
        d = self.in_dim
        t = self._choi.reshape(d, d, d, d)
        return np.trace(t, axis1=1, axis2=3)

    # -- views -----------------------------------------------------------

    @property
    def choi(self) -> np.ndarray:
        return self._choi

    def choi_state(self) -> DensityMatrix:
        return DensityMatrix(self._choi, choi_labels(self.parties))

    @property
    def kraus(self) -> list[np.ndarray]:
        if self._kraus is None:
            self._kraus = kraus_from_choi(self)
        return self._kraus

    def ptm(self) -> np.ndarray:
        """Real transfer matrix T with T[P,Q] = 2^-n Tr[P E(Q)]."""
        n = self.parties
        basis = pauli_basis(n)
        d = 2**n
        imgs = np.stack([self.apply_matrix(basis[q]) for q in range(4**n)])
        t = np.einsum("pij,qji->pq", basis, imgs).real / d
        return t

    # -- action ----------------------------------------------------------

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        """Kraus action on a raw (possibly non-normalized, non-PSD) matrix."""
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        for k in self.kraus:
            out += k @ rho @ dag(k)
        return out

    def apply(self, rho: DensityMatrix, targets) -> DensityMatrix:
        """Apply the channel to the given target labels of a larger state."""
        targets = list(targets)
        if len(targets) != self.parties:
            raise ChannelError(
                f"channel acts on {self.parties} qubits, got targets {targets}")
        n = rho.n_qubits
        pos = [rho.axis(t) for t in targets]
        rest = [i for i in range(n) if i not in pos]
        perm = pos + rest
        inv = np.argsort(perm)
        t = rho.matrix.reshape([2] * (2 * n))
        t = t.transpose(perm + [p + n for p in perm]).reshape(rho.dim, rho.dim)
        d_rest = 2 ** len(rest)
        out = np.zeros_like(t)
        for k in self.kraus:
            kf = kron(k, np.eye(d_rest))
            out += kf @ t @ dag(kf)
        out = out.reshape([2] * (2 * n))
        out = out.transpose(list(inv) + [i + n for i in inv]).reshape(rho.dim, rho.dim)
        return DensityMatrix(out, rho.labels)

    def compose(self, other: "Channel") -> "Channel":
        """Channel running `other` first, then `self`."""
        if other.parties != self.parties:
            raise ChannelError("cannot compose channels of different arity")
        ops = [a @ b for a in self.kraus for b in other.kraus]
        return choi_from_kraus(ops)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<Channel{tag} on {self.parties} qubit(s)>"


def choi_of_unitary(u: np.ndarray, parties: int | None = None) -> Channel:
    """Pure Choi state (I (x) U)|+> of a unitary on 2**parties dimensions."""
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    n = int(round(np.log2(d)))
    if 2**n != d or u.shape != (d, d):
        raise ChannelError(f"unitary shape {u.shape} is not a square power of 2")
    if parties is not None and parties != n:
        raise ChannelError(f"unitary of dim {d} is not a {parties}-party gate")
    if np.max(np.abs(dag(u) @ u - np.eye(d))) > UNITARITY_TOL:
        raise ChannelError("matrix is not unitary to 1e-10")
    v = kron(np.eye(d), u) @ max_entangled_ket(n)
    return Channel(np.outer(v, v.conj()), n)


def choi_from_kraus(ops) -> Channel:
    """Choi state of the channel with the given Kraus operators."""
    ops = [np.asarray(k, dtype=complex) for k in ops]
    d = ops[0].shape[0]
    n = int(round(np.log2(d)))
    acc = np.zeros((d * d, d * d), dtype=complex)
    plus = max_entangled_ket(n)
    eye = np.eye(d)
    for k in ops:
        v = kron(eye, k) @ plus
        acc += np.outer(v, v.conj())
    return Channel(acc, n)


def kraus_from_choi(ch: Channel | np.ndarray, parties: int | None = None) -> list[np.ndarray]:
    """Kraus operators from the eigendecomposition of a Choi state.

    Eigenvalues below 1e-10 are dropped; values between 1e-10 and 1e-7 are
    kept with a warning (borderline channel rank).
    """
    if isinstance(ch, Channel):
        choi, d = ch.choi, ch.in_dim
    else:
        choi = np.asarray(ch, dtype=complex)
        d = int(round(np.sqrt(choi.shape[0])))
    w, v = np.linalg.eigh(herm(choi))
    if w[0] < -1e-9:
        raise ChannelError(f"Choi not PSD (min eigenvalue {w[0]})")
    ops = []
    for lam, vec in zip(w, v.T):
        if lam < KRAUS_DROP:
            continue
        if lam < KRAUS_WARN:
            warnings.warn(f"borderline Choi eigenvalue {lam:.3e} kept as Kraus term",
                          stacklevel=2)
        # vec indexes (input i, output a): K[a, i] = sqrt(lam * d) * vec[i*d + a]
        k = np.sqrt(lam * d) * vec.reshape(d, d).T
        ops.append(k)
    return ops


def mix(p: float, ideal: Channel, noise: Channel) -> Channel:
    """Convex combination (1-p) ideal + p noise at the Choi level."""
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"mixing probability {p} out of [0, 1]")
    if ideal.parties != noise.parties:
        raise ChannelError("cannot mix channels of different arity")
    return Channel((1.0 - p) * ideal.choi + p * noise.choi, ideal.parties)


# -- measure-and-prepare ---------------------------------------------------


@dataclass
class MeasurePrepare:
    """A POVM measurement followed by outcome-conditioned state preparation."""

    povm: list
    prepared: list

    def __post_init__(self):
        self.povm = [np.asarray(m, dtype=complex) for m in self.povm]
        self.prepared = [np.asarray(r, dtype=complex) for r in self.prepared]
        if len(self.povm) != len(self.prepared):
            raise ChannelError("POVM and prepared-state lists differ in length")
        d = self.povm[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for m in self.povm:
            if float(np.linalg.eigvalsh(herm(m))[0]) < -1e-9:
                raise ChannelError("POVM element is not PSD")
            total += m
        if np.max(np.abs(total - np.eye(d))) > TP_TOL:
            raise ChannelError("POVM does not sum to the identity")
        for r in self.prepared:
            density(r)  # validates

    @property
    def dim(self) -> int:
        return self.povm[0].shape[0]

    def kraus(self) -> list[np.ndarray]:
        ops = []
        for m, r in zip(self.povm, self.prepared):
            mw, mv = np.linalg.eigh(herm(m))
            rw, rv = np.linalg.eigh(herm(r))
            for a, ua in zip(mw, mv.T):
                if a < KRAUS_DROP:
                    continue
                for b, vb in zip(rw, rv.T):
                    if b < KRAUS_DROP:
                        continue
                    ops.append(np.sqrt(a * b) * np.outer(vb, ua.conj()))
        return ops


def measure_prepare(mp: MeasurePrepare) -> Channel:
    ch = choi_from_kraus(mp.kraus())
    ch.name = "measure_prepare"
    return ch


# -- standard gates and noise models ----------------------------------------

H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT_GATE = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]], dtype=complex)
SWAP_GATE = np.array(
    [[1, 0, 0, 0],
     [0, 0, 1, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1]], dtype=complex)


def phase_rotation(theta: float) -> np.ndarray:
    """Diagonal gate |0><0| + e^{i theta} |1><1| (theta = pi/4 is the pi/8 gate)."""
    return np.diag([1.0, np.exp(1j * theta)]).astype(complex)


PI8_GATE = phase_rotation(np.pi / 4)


def unitary(u: np.ndarray) -> Channel:
    return choi_of_unitary(u)


def identity_channel(parties: int = 1) -> Channel:
    ch = choi_of_unitary(np.eye(2**parties))
    ch.name = "identity"
    return ch


def depolarize(parties: int = 1) -> Channel:
    """Full depolarization rho -> I/d on `parties` qubits."""
    d = 2**parties
    ch = Channel(np.eye(d * d, dtype=complex) / (d * d), parties, name="depolarize")
    ch._kraus = [p / d for p in pauli_basis(parties)]
    return ch


def dephase(parties: int = 1) -> Channel:
    """Z-basis dephasing: kills all off-diagonal elements."""
    d = 2**parties
    ops = [np.zeros((d, d), dtype=complex) for _ in range(d)]
    for i in range(d):
        ops[i][i, i] = 1.0
    ch = choi_from_kraus(ops)
    ch.name = "dephase"
    return ch


def pauli_channel(weights) -> Channel:
    """Probabilistic Pauli channel with 4**n weights in lexicographic order."""
    weights = np.asarray(weights, dtype=float)
    n = int(round(np.log2(weights.size) / 2))
    if weights.size != 4**n:
        raise ChannelError(f"weight count {weights.size} is not a power of 4")
    if np.any(weights < -1e-12) or abs(weights.sum() - 1.0) > 1e-9:
        raise ChannelError("weights must form a probability distribution")
    basis = pauli_basis(n)
    ops = [np.sqrt(max(w, 0.0)) * basis[i] for i, w in enumerate(weights) if w > 1e-15]
    return choi_from_kraus(ops)


NAMED_GATES = {
    "cnot": CNOT_GATE,
    "swap": SWAP_GATE,
    "hadamard": H_GATE,
    "phase_s": S_GATE,
    "pi8": PI8_GATE,
}


def named_channel(name: str) -> Channel:
    if name in NAMED_GATES:
        ch = choi_of_unitary(NAMED_GATES[name])
        ch.name = name
        return ch
    if name == "identity":
        return identity_channel(1)
    if name == "depolarize":
        return depolarize(1)
    if name == "dephase":
        return dephase(1)
    raise ChannelError(f"unknown named channel {name!r}")


NAMED_CHANNELS = ("cnot", "swap", "pi8", "phase_s", "hadamard",
                  "depolarize", "dephase", "identity")


# -- JSON wire format --------------------------------------------------------


def _complex_to_json(m: np.ndarray):
    m = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def _complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ChannelError("matrix data must be a nested [re, im] array")
    return arr[..., 0] + 1j * arr[..., 1]


def channel_to_json(ch: Channel) -> dict:
    if ch.name in NAMED_CHANNELS:
        return {"kind": "named", "dim": ch.in_dim, "name": ch.name}
    return {"kind": "choi", "dim": ch.in_dim, "data": _complex_to_json(ch.choi)}


def channel_from_json(obj: dict) -> Channel:
    """Strict parser for the channel wire format (unknown fields are errors)."""
    if not isinstance(obj, dict):
        raise ChannelError(f"channel spec must be an object, got {type(obj).__name__}")
    allowed = {"kind", "dim", "data", "name"}
    extra = set(obj) - allowed
    if extra:
        raise ChannelError(f"unknown channel fields {sorted(extra)}")
    kind = obj.get("kind")
    if kind not in ("unitary", "kraus", "choi", "measure_prepare", "named"):
        raise ChannelError(f"unknown channel kind {kind!r}")
    dim = obj.get("dim")
    if kind == "named":
        name = obj.get("name")
        ch = named_channel(name)
        if dim is not None and ch.in_dim != dim:
            raise ChannelError(f"named channel {name!r} has dim {ch.in_dim}, not {dim}")
        return ch
    data = obj.get("data")
    if data is None:
        raise ChannelError(f"channel kind {kind!r} requires a data field")
    if kind == "unitary":
        u = _complex_from_json(data)
        _check_dim(u.shape[0], dim)
        return choi_of_unitary(u)
    if kind == "kraus":
        ops = [_complex_from_json(k) for k in data]
        _check_dim(ops[0].shape[0], dim)
        return choi_from_kraus(ops)
    if kind == "choi":
        c = _complex_from_json(data)
        d = int(round(np.sqrt(c.shape[0])))
        _check_dim(d, dim)
        return Channel(c, int(round(np.log2(d))))
    # measure_prepare: data = {"povm": [...], "prepared": [...]}
    if not isinstance(data, dict) or set(data) != {"povm", "prepared"}:
        raise ChannelError("measure_prepare data must have povm and prepared fields")
    mp = MeasurePrepare([_complex_from_json(m) for m in data["povm"]],
                        [_complex_from_json(r) for r in data["prepared"]])
    _check_dim(mp.dim, dim)
    return measure_prepare(mp)


def _check_dim(actual: int, declared) -> None:
    if declared is not None and actual != declared:
        raise ChannelError(f"declared dim {declared} does not match data dim {actual}")
