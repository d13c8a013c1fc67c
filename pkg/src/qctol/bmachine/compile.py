"""Compile circuits into the flat-array program both execution paths run.

All per-gate data is reduced to real arrays: single-qubit maps become 4x4
Pauli transfer blocks, in-pair two-qubit channels become 16x16 transfer
matrices, and each measure-and-prepare outcome becomes a 16x16x16 bilinear
tensor contracting the two old pair vectors into the rewired partners' one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import channels as ch
from .. import qmath
from ..qmath import dag, herm, kron
from .spec import Circuit, CircuitError

OP_1Q = 0
OP_2Q_PTM = 1
OP_2Q_BIENT = 2

_P1 = [qmath.PAULI_1Q[a] for a in "IXYZ"]
_P2 = qmath.pauli_basis(2)

# permutation of two-qubit Pauli indices under swapping the qubits
SWAP16 = np.array([4 * (i % 4) + i // 4 for i in range(16)], dtype=np.int64)


def transfer_1q(a: np.ndarray) -> np.ndarray:
    """Real 4x4 transfer block of the (not necessarily trace-preserving)
    map X -> A X A†."""
    a = np.asarray(a, dtype=complex)
    out = np.zeros((4, 4))
    for q in range(4):
        img = a @ _P1[q] @ dag(a)
        for p in range(4):
            out[p, q] = np.trace(_P1[p] @ img).real / 2.0
    return out


def measurement_conditioners() -> tuple[np.ndarray, np.ndarray]:
    """Transfer blocks of X -> |m><m| X |m><m| for m = 0, 1."""
    p0 = qmath.projector(qmath.ket("0"))
    p1 = qmath.projector(qmath.ket("1"))
    return transfer_1q(p0), transfer_1q(p1)


def eb_outcome_tensor(sqrt_m: np.ndarray) -> np.ndarray:
    """Bilinear tensor C[R, P, Q] for one measurement outcome.

    With the two affected pairs in (partner, target) x (target, partner)
    order, the unnormalized rewired vector is r'[R] = sum C[R,P,Q] u[P] v[Q];
    its 0 component is the outcome probability.
    """
    k_full = kron(kron(np.eye(2), np.asarray(sqrt_m, dtype=complex)), np.eye(2))
    c = np.zeros((16, 16, 16))
    for p in range(16):
        sp = kron(_P2[p], np.eye(4))        # sigma_P on (x, a) of (x,a,b,y)
        for q in range(16):
            sq = kron(np.eye(4), _P2[q])    # sigma_Q on (b, y)
            op = k_full @ (sp @ sq) @ dag(k_full)
            # partial trace over the middle qubits (a, b)
            t = op.reshape(2, 4, 2, 2, 4, 2)
            red = np.einsum("iajbak->ijbk", t).reshape(4, 4)
            for r in range(16):
                c[r, p, q] = np.trace(_P2[r] @ red).real / 16.0
    return c


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(herm(np.asarray(m, dtype=complex)))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dag(v)


@dataclass
class Program:
    """Flat-array form of a circuit, shared by the compiled and fallback paths."""

    n_qubits: int
    partner0: np.ndarray      # int64[n]
    r0: np.ndarray            # float64[n,16], valid at owner rows
    ops_kind: np.ndarray      # int64[G]
    ops_t0: np.ndarray
    ops_t1: np.ndarray
    ops_idx: np.ndarray
    ptm4s: np.ndarray         # float64[K1,4,4]
    ptm16s: np.ndarray        # float64[K2,16,16]
    spec_weights: np.ndarray  # float64[S,3]
    spec_ptm16: np.ndarray    # int64[S]
    sep_off: np.ndarray
    sep_cnt: np.ndarray
    sep_ma: np.ndarray        # float64[sumK,4,4]
    sep_mb: np.ndarray
    swp_off: np.ndarray
    swp_cnt: np.ndarray
    swp_ma: np.ndarray
    swp_mb: np.ndarray
    eb_off: np.ndarray
    eb_cnt: np.ndarray
    eb_c: np.ndarray          # float64[sumO,16,16,16]
    eb_prep: np.ndarray       # float64[sumO,16]
    measure: np.ndarray       # int64[M]
    max_draws: int

    def kernel_args(self, cond0: np.ndarray, cond1: np.ndarray) -> tuple:
        return (self.n_qubits, self.partner0, self.r0, self.ops_kind,
                self.ops_t0, self.ops_t1, self.ops_idx, self.ptm4s,
                self.ptm16s, self.spec_weights, self.spec_ptm16,
                self.sep_off, self.sep_cnt, self.sep_ma, self.sep_mb,
                self.swp_off, self.swp_cnt, self.swp_ma, self.swp_mb,
                self.eb_off, self.eb_cnt, self.eb_c, self.eb_prep,
                self.measure, cond0, cond1, SWAP16)


def initial_state(circuit: Circuit, pad: bool = False):
    """Deterministic initial matching q <-> q+1 and product pair vectors."""
    n = circuit.n_qubits
    inits = list(circuit.init)
    if n % 2 == 1:
        if not pad:
            raise CircuitError("odd qubit count; pass pad=True to add an idle qubit")
        n += 1
        inits = inits + [np.eye(2, dtype=complex) / 2.0]
    partner = np.zeros(n, dtype=np.int64)
    r = np.zeros((n, 16))
    for q in range(0, n, 2):
        partner[q] = q + 1
        partner[q + 1] = q
        ra = qmath.pauli_expand(inits[q])
        rb = qmath.pauli_expand(inits[q + 1])
        r[q] = np.outer(ra, rb).reshape(16)
    return n, partner, r


def compile_circuit(circuit: Circuit, pad: bool = False) -> Program:
    n, partner0, r0 = initial_state(circuit, pad=pad)

    ops_kind, ops_t0, ops_t1, ops_idx = [], [], [], []
    ptm4s: list[np.ndarray] = []
    ptm16s: list[np.ndarray] = []
    spec_weights, spec_ptm16 = [], []
    sep_off, sep_cnt, sep_ma, sep_mb = [], [], [], []
    swp_off, swp_cnt, swp_ma, swp_mb = [], [], [], []
    eb_off, eb_cnt, eb_c, eb_prep = [], [], [], []

    for g in circuit.gates:
        if len(g.targets) == 1:
            ops_kind.append(OP_1Q)
            ops_t0.append(g.targets[0])
            ops_t1.append(-1)
            ops_idx.append(len(ptm4s))
            ptm4s.append(g.channel.ptm())
        elif g.bient is None:
            ops_kind.append(OP_2Q_PTM)
            ops_t0.append(g.targets[0])
            ops_t1.append(g.targets[1])
            ops_idx.append(len(ptm16s))
            ptm16s.append(g.channel.ptm())
        else:
            spec = g.bient
            s = len(spec_weights)
            ops_kind.append(OP_2Q_BIENT)
            ops_t0.append(g.targets[0])
            ops_t1.append(g.targets[1])
            ops_idx.append(s)
            spec_weights.append(list(spec.weights))
            spec_ptm16.append(len(ptm16s))
            ptm16s.append(spec.total_channel().ptm())
            sep_off.append(len(sep_ma))
            sep_cnt.append(len(spec.sep))
            for kp in spec.sep:
                sep_ma.append(transfer_1q(kp.a))
                sep_mb.append(transfer_1q(kp.b))
            swp_off.append(len(swp_ma))
            swp_cnt.append(len(spec.swap))
            for kp in spec.swap:
                swp_ma.append(transfer_1q(kp.a))
                swp_mb.append(transfer_1q(kp.b))
            eb_off.append(len(eb_c))
            if spec.eb is not None:
                eb_cnt.append(len(spec.eb.povm))
                for m, prep in zip(spec.eb.povm, spec.eb.prepared):
                    eb_c.append(eb_outcome_tensor(_sqrt_psd(m)))
                    eb_prep.append(qmath.pauli_expand(prep))
            else:
                eb_cnt.append(0)

    n_bient = sum(1 for k in ops_kind if k == OP_2Q_BIENT)
    max_draws = 2 * n_bient + len(circuit.measure)

    def arr(lst, shape_tail, dtype=np.float64):
        if lst:
            return np.ascontiguousarray(np.stack(lst).astype(dtype))
        return np.zeros((0, *shape_tail), dtype=dtype)

    return Program(
        n_qubits=n,
        partner0=partner0,
        r0=r0,
        ops_kind=np.asarray(ops_kind, dtype=np.int64),
        ops_t0=np.asarray(ops_t0, dtype=np.int64),
        ops_t1=np.asarray(ops_t1, dtype=np.int64),
        ops_idx=np.asarray(ops_idx, dtype=np.int64),
        ptm4s=arr(ptm4s, (4, 4)),
        ptm16s=arr(ptm16s, (16, 16)),
        spec_weights=arr(spec_weights, (3,)),
        spec_ptm16=np.asarray(spec_ptm16, dtype=np.int64),
        sep_off=np.asarray(sep_off, dtype=np.int64),
        sep_cnt=np.asarray(sep_cnt, dtype=np.int64),
        sep_ma=arr(sep_ma, (4, 4)),
        sep_mb=arr(sep_mb, (4, 4)),
        swp_off=np.asarray(swp_off, dtype=np.int64),
        swp_cnt=np.asarray(swp_cnt, dtype=np.int64),
        swp_ma=arr(swp_ma, (4, 4)),
        swp_mb=arr(swp_mb, (4, 4)),
        eb_off=np.asarray(eb_off, dtype=np.int64),
        eb_cnt=np.asarray(eb_cnt, dtype=np.int64),
        eb_c=arr(eb_c, (16, 16, 16)),
        eb_prep=arr(eb_prep, (16,)),
        measure=np.asarray(circuit.measure, dtype=np.int64),
        max_draws=max_draws,
    )
