"""Reference interpreter for the pairing-list machine state.

This is the plain-numpy execution path: one machine state per shot, a
perfect matching of qubits, and one 16-component Pauli-expansion vector per
pair (stored at the lower qubit id, that qubit being the first tensor
factor).  The compiled kernel in :mod:`.kernel` runs the identical program;
this class is kept simple and checkable and doubles as the fallback when
the kernel is unavailable or disabled.
"""

from __future__ import annotations

import numpy as np

from ..qmath import QctolError
from .compile import OP_1Q, OP_2Q_BIENT, OP_2Q_PTM, SWAP16, Program, \
    measurement_conditioners

COND0, COND1 = measurement_conditioners()

IDX_ZI = 12   # Pauli index of Z (x) I
IDX_IZ = 3    # Pauli index of I (x) Z


class SimulationAbort(QctolError):
    """Raised when a shot hits an inconsistent branch (weights vanish)."""


class MachineState:
    """Pairing list plus per-pair Pauli vectors for a single shot."""

    def __init__(self, program: Program, check: bool = False):
        self.prog = program
        self.n = program.n_qubits
        self.partner = program.partner0.copy()
        self.r = program.r0.copy()
        self.check = check

    # -- bookkeeping -----------------------------------------------------

    def owner(self, q: int) -> int:
        return min(q, int(self.partner[q]))

    def pair_vector(self, q: int) -> np.ndarray:
        """Pair vector in (lower id, higher id) slot order."""
        return self.r[self.owner(q)]

    def slot(self, q: int) -> int:
        return 0 if q < self.partner[q] else 1

    def assert_consistent(self):
        for q in range(self.n):
            p = int(self.partner[q])
            if p == q or int(self.partner[p]) != q:
                raise SimulationAbort(f"pairing broken at qubit {q}")
        for q in range(0, self.n):
            if q < self.partner[q]:
                if abs(self.r[q][0] - 1.0) > 1e-9:
                    raise SimulationAbort(
                        f"pair ({q},{self.partner[q]}) trace {self.r[q][0]}")

    # -- primitive updates -------------------------------------------------

    def _apply_block(self, q: int, m4: np.ndarray) -> float:
        """Apply a 4x4 transfer block at qubit q's slot; returns the new
        0-component (the conditional weight for non-trace-preserving maps)."""
        o = self.owner(q)
        mat = self.r[o].reshape(4, 4)
        if self.slot(q) == 0:
            mat = m4 @ mat
        else:
            mat = mat @ m4.T
        self.r[o] = mat.reshape(16)
        return float(self.r[o][0])

    def apply_1q(self, ptm4: np.ndarray, q: int) -> None:
        self._apply_block(q, ptm4)
        if self.check:
            self.assert_consistent()

    def apply_2q_in_pair(self, ptm16: np.ndarray, a: int, b: int) -> None:
        if self.partner[a] != b:
            raise SimulationAbort(
                f"qubits {a},{b} are not paired; a branch spec is required")
        o = self.owner(a)
        vec = self.r[o]
        if a > b:  # gate order is (a, b), storage order is (b, a)
            vec = vec[SWAP16]
            vec = ptm16 @ vec
            vec = vec[SWAP16]
        else:
            vec = ptm16 @ vec
        self.r[o] = vec
        if self.check:
            self.assert_consistent()

    # -- cross-pair branches ----------------------------------------------

    def separable_branch(self, ma_list, mb_list, a: int, b: int, u: float):
        """Sample a product Kraus index and update both pairs conditionally.

        ma_list / mb_list are the 4x4 transfer blocks of the Kraus factors;
        the index weight factorizes because distinct pairs are independent.
        """
        oa, ob = self.owner(a), self.owner(b)
        sa, sb = self.slot(a), self.slot(b)
        mat_a = self.r[oa].reshape(4, 4)
        mat_b = self.r[ob].reshape(4, 4)
        k = len(ma_list)
        wa = np.empty(k)
        wb = np.empty(k)
        cand_a = []
        cand_b = []
        for i in range(k):
            ca = ma_list[i] @ mat_a if sa == 0 else mat_a @ ma_list[i].T
            cb = mb_list[i] @ mat_b if sb == 0 else mat_b @ mb_list[i].T
            cand_a.append(ca)
            cand_b.append(cb)
            wa[i] = max(ca.reshape(16)[0], 0.0)
            wb[i] = max(cb.reshape(16)[0], 0.0)
        w = wa * wb
        total = float(w.sum())
        if total < 1e-12:
            raise SimulationAbort("separable branch has vanishing total weight")
        target = u * total
        acc = 0.0
        pick = k - 1
        for i in range(k):
            acc += w[i]
            if target < acc:
                pick = i
                break
        self.r[oa] = (cand_a[pick] / wa[pick]).reshape(16)
        self.r[ob] = (cand_b[pick] / wb[pick]).reshape(16)
        if self.check:
            self.assert_consistent()
        return pick

    def relabel_swap(self, a: int, b: int) -> None:
        """Exchange the pair memberships of a and b (pure bookkeeping)."""
        x, y = int(self.partner[a]), int(self.partner[b])
        vec_xa = self.r[self.owner(a)].copy()
        vec_by = self.r[self.owner(b)].copy()
        if self.slot(a) == 0:   # stored (a, x): reorder to (partner, particle)
            vec_xa = vec_xa[SWAP16]
        if self.slot(b) == 0:   # stored (b, y): reorder to (y, b)
            vec_by = vec_by[SWAP16]
        # vec_xa is now ordered (x, old a-slot), vec_by ordered (y, old b-slot)
        self.partner[x], self.partner[b] = b, x
        self.partner[y], self.partner[a] = a, y
        # new pair (x, b) carries vec_xa with b in the old a slot
        self.r[min(x, b)] = vec_xa if x < b else vec_xa[SWAP16]
        self.r[min(y, a)] = vec_by if y < a else vec_by[SWAP16]
        if self.check:
            self.assert_consistent()

    def swap_branch(self, ma_list, mb_list, a: int, b: int, u: float):
        self.relabel_swap(a, b)
        return self.separable_branch(ma_list, mb_list, a, b, u)

    def eb_branch(self, c_tensors, preps, a: int, b: int, u: float):
        """Sample a measurement outcome on (a, b), rewire the pairing to
        (partner_a, partner_b) and (a, b), and set both new vectors."""
        x, y = int(self.partner[a]), int(self.partner[b])
        vec_xa = self.pair_vector(a)
        if self.slot(a) == 1:
            u_vec = vec_xa            # already (x, a)
        else:
            u_vec = vec_xa[SWAP16]    # stored (a, x) -> reorder to (x, a)
        vec_by = self.pair_vector(b)
        if self.slot(b) == 0:
            v_vec = vec_by            # already (b, y)
        else:
            v_vec = vec_by[SWAP16]
        k = len(c_tensors)
        probs = np.empty(k)
        for i in range(k):
            probs[i] = c_tensors[i][0] @ u_vec @ v_vec
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise SimulationAbort(
                f"measure-prepare outcome probabilities sum to {total}")
        target = u * total
        acc = 0.0
        pick = k - 1
        for i in range(k):
            acc += max(probs[i], 0.0)
            if target < acc:
                pick = i
                break
        new_xy = np.einsum("rpq,p,q->r", c_tensors[pick], u_vec, v_vec)
        new_xy /= new_xy[0]
        self.partner[x], self.partner[y] = y, x
        self.partner[a], self.partner[b] = b, a
        self.r[min(x, y)] = new_xy if x < y else new_xy[SWAP16]
        prep = preps[pick]
        self.r[min(a, b)] = prep if a < b else prep[SWAP16]
        if self.check:
            self.assert_consistent()
        return pick

    # -- program execution --------------------------------------------------

    def run_gate(self, g: int, draws) -> None:
        prog = self.prog
        kind = prog.ops_kind[g]
        idx = prog.ops_idx[g]
        if kind == OP_1Q:
            self.apply_1q(prog.ptm4s[idx], int(prog.ops_t0[g]))
            return
        a, b = int(prog.ops_t0[g]), int(prog.ops_t1[g])
        if kind == OP_2Q_PTM:
            self.apply_2q_in_pair(prog.ptm16s[idx], a, b)
            return
        # branch-spec gate
        if self.partner[a] == b:
            draws.skip(2)
            self.apply_2q_in_pair(prog.ptm16s[prog.spec_ptm16[idx]], a, b)
            return
        u_branch = draws.next()
        u_inner = draws.next()
        p, q, _r = prog.spec_weights[idx]
        if u_branch < p:
            off, cnt = prog.sep_off[idx], prog.sep_cnt[idx]
            self.separable_branch(prog.sep_ma[off:off + cnt],
                                  prog.sep_mb[off:off + cnt], a, b, u_inner)
        elif u_branch < p + q:
            off, cnt = prog.swp_off[idx], prog.swp_cnt[idx]
            self.swap_branch(prog.swp_ma[off:off + cnt],
                             prog.swp_mb[off:off + cnt], a, b, u_inner)
        else:
            off, cnt = prog.eb_off[idx], prog.eb_cnt[idx]
            self.eb_branch(prog.eb_c[off:off + cnt],
                           prog.eb_prep[off:off + cnt], a, b, u_inner)

    def measure_qubit(self, q: int, u: float) -> int:
        o = self.owner(q)
        zidx = IDX_ZI if self.slot(q) == 0 else IDX_IZ
        p0 = 0.5 * (1.0 + self.r[o][zidx])
        p0 = min(max(p0, 0.0), 1.0)
        bit = 0 if u < p0 else 1
        weight = self._apply_block(q, COND0 if bit == 0 else COND1)
        if weight < 1e-12:
            raise SimulationAbort(f"measurement of qubit {q} hit zero weight")
        self.r[o] /= weight
        return bit


class DrawCursor:
    """Sequential reader over one shot's row of pre-drawn uniforms."""

    def __init__(self, row: np.ndarray):
        self.row = row
        self.i = 0

    def next(self) -> float:
        u = float(self.row[self.i])
        self.i += 1
        return u

    def skip(self, k: int) -> None:
        self.i += k


def run_shot_reference(program: Program, uniforms_row: np.ndarray,
                       check: bool = False, trace: bool = False):
    """Execute one shot of a compiled program on the reference machine."""
    state = MachineState(program, check=check)
    draws = DrawCursor(uniforms_row)
    for g in range(len(program.ops_kind)):
        state.run_gate(g, draws)
    bits = np.empty(len(program.measure), dtype=np.uint8)
    for i, q in enumerate(program.measure):
        bits[i] = state.measure_qubit(int(q), draws.next())
    return bits


def run_shots_reference(program: Program, uniforms: np.ndarray,
                        check: bool = False) -> np.ndarray:
    out = np.empty((uniforms.shape[0], len(program.measure)), dtype=np.uint8)
    for s in range(uniforms.shape[0]):
        out[s] = run_shot_reference(program, uniforms[s], check=check)
    return out
