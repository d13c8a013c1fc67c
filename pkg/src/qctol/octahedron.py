"""Single-qubit Clifford-operation geometry on the Bloch sphere.

The convex hull of the six Pauli eigenstates is an octahedron, membership
test |r_x| + |r_y| + |r_z| <= 1.  Phase gates U(theta) act in the x-y plane,
so their noise thresholds reduce to plane geometry against the square cross
section |x| + |y| <= 1.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import channels as ch
from . import qmath
from .qmath import QctolError, dag, herm, kron

OCT_TOL = 1e-9


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.norm2() > 1.0 + OCT_TOL:
            raise QctolError(f"Bloch vector {self} outside the unit ball")

    def norm1(self) -> float:
        return abs(self.x) + abs(self.y) + abs(self.z)

    def norm2(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def bloch_of(rho: np.ndarray) -> np.ndarray:
    """Bloch components (x, y, z) of a single-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    return np.array([np.trace(qmath.PAULI_1Q[a] @ rho).real for a in "XYZ"])


def state_of_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    m = np.eye(2, dtype=complex)
    for c, a in zip(r, "XYZ"):
        m = m + c * qmath.PAULI_1Q[a]
    return m / 2.0


def in_octahedron(r, tol: float = OCT_TOL) -> bool:
    """Membership in the hull of the six Pauli eigenstates: ||r||_1 <= 1."""
    if isinstance(r, BlochVector):
        r = r.as_array()
    return float(np.sum(np.abs(np.asarray(r, dtype=float)))) <= 1.0 + tol


def plane_point(theta: float) -> np.ndarray:
    """Bloch point of |0> + e^{i theta}|1> (up to normalization): the x-y circle."""
    return np.array([np.cos(theta), np.sin(theta)])


def min_generic_noise_analytic(theta: float) -> float:
    """Closed form for the minimal mixing toward any x-y disc point that
    brings (cos t, sin t) inside the square |x| + |y| <= 1.

    The optimal noise point sits on the facet anti-normal, giving
    p = (k - 1) / (sqrt(2) + k) with k = |cos t| + |sin t| (0 when k <= 1).
    """
    k = abs(np.cos(theta)) + abs(np.sin(theta))
    if k <= 1.0:
        return 0.0
    return float((k - 1.0) / (np.sqrt(2.0) + k))


def min_generic_noise(theta: float) -> float:
    """Minimal p with (1-p) a(theta) + p s inside the octahedron for some s
    in the unit disc of the x-y plane.

    Solved as a linear program in (p, w = p*s): square facet constraints on
    the mixture, disc constraints on w sampled at the facet anti-normals and
    axes (which include every optimal direction); cross-checked against the
    closed form.
    """
    a = plane_point(theta)
    facets = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    disc_dirs = [np.array([np.cos(t), np.sin(t)])
                 for t in np.arange(8) * (np.pi / 4.0)]
    # variables (p, wx, wy): minimize p
    c = np.array([1.0, 0.0, 0.0])
    a_ub, b_ub = [], []
    for n in facets:
        # n . ((1-p) a + w) <= 1
        a_ub.append([-float(n @ a), n[0], n[1]])
        b_ub.append(1.0 - float(n @ a))
    for d in disc_dirs:
        # d . w <= p  (tangent half planes of the disc ||w|| <= p)
        a_ub.append([-1.0, d[0], d[1]])
        b_ub.append(0.0)
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  bounds=[(0, 1), (-1, 1), (-1, 1)], method="highs")
    if not res.success:
        raise QctolError(f"noise LP failed: {res.message}")
    p = float(res.x[0])
    exact = min_generic_noise_analytic(theta)
    if abs(p - exact) > 1e-7:
        raise QctolError(
            f"LP optimum {p} disagrees with the closed form {exact} at theta={theta}")
    return p


def min_dephasing_noise(theta: float) -> float:
    """Minimal p with (1-p) a(theta) inside the octahedron (mixing toward
    the center only): 1 - 1/(|cos t| + |sin t|), clamped at 0."""
    k = abs(np.cos(theta)) + abs(np.sin(theta))
    if k <= 1.0:
        return 0.0
    return float(1.0 - 1.0 / k)


# -- Bell twirling -------------------------------------------------------------


def bell_twirl(c: ch.Channel) -> np.ndarray:
    """Average a single-qubit channel over the four sigma (x) sigma Choi
    conjugations; returns the four Pauli weights of the Bell-diagonal result.
    """
    if c.parties != 1:
        raise QctolError("expected a single-qubit channel")
    acc = np.zeros((4, 4), dtype=complex)
    for a in "IXYZ":
        s2 = kron(qmath.PAULI_1Q[a], qmath.PAULI_1Q[a])
        acc += s2 @ c.choi @ dag(s2)
    acc /= 4.0
    plus = ch.max_entangled_ket(1)
    weights = []
    for a in "IXYZ":
        v = kron(np.eye(2), qmath.PAULI_1Q[a]) @ plus
        weights.append(float(np.real(v.conj() @ acc @ v)))
    return np.array(weights)


def bell_twirled_channel(c: ch.Channel) -> ch.Channel:
    acc = np.zeros((4, 4), dtype=complex)
    for a in "IXYZ":
        s2 = kron(qmath.PAULI_1Q[a], qmath.PAULI_1Q[a])
        acc += s2 @ c.choi @ dag(s2)
    return ch.Channel(acc / 4.0, 1)


def twirl_noise_channel(c: ch.Channel) -> ch.Channel:
    """The noise N with (1/4) c + (3/4) N equal to the Bell twirl of c."""
    acc = np.zeros((4, 4), dtype=complex)
    for a in "XYZ":
        s2 = kron(qmath.PAULI_1Q[a], qmath.PAULI_1Q[a])
        acc += s2 @ c.choi @ dag(s2)
    return ch.Channel(acc / 3.0, 1)


# -- the 24-element single-qubit Clifford group --------------------------------


def _phase_canonical(u: np.ndarray) -> bytes:
    """Hashable form of a unitary modulo global phase."""
    u = np.asarray(u, dtype=complex)
    mags = np.abs(u.ravel())
    # first entry within tolerance of the max, so ties resolve stably
    idx = int(np.argmax(mags > mags.max() - 1e-6))
    ph = u.flat[idx] / abs(u.flat[idx])
    v = np.round(u / ph, 6) + 0.0  # kill negative zeros
    return v.tobytes()


def clifford1q_group() -> list:
    """The 24 single-qubit Clifford unitaries modulo phase, generated by H and S."""
    gens = [ch.H_GATE, ch.S_GATE]
    seen = {_phase_canonical(np.eye(2)): np.eye(2, dtype=complex)}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                v = g @ u
                key = _phase_canonical(v)
                if key not in seen:
                    seen[key] = v
                    nxt.append(v)
        frontier = nxt
    return list(seen.values())


def bloch_action(u: np.ndarray) -> np.ndarray:
    """3x3 orthogonal matrix describing conjugation by u on Bloch vectors."""
    out = np.zeros((3, 3))
    for j, b in enumerate("XYZ"):
        img = u @ qmath.PAULI_1Q[b] @ dag(u)
        for i, a in enumerate("XYZ"):
            out[i, j] = np.trace(qmath.PAULI_1Q[a] @ img).real / 2.0
    return out


# -- dense verification of octahedron closure ----------------------------------

VERTICES = {
    "x+": np.array([1.0, 0.0, 0.0]), "x-": np.array([-1.0, 0.0, 0.0]),
    "y+": np.array([0.0, 1.0, 0.0]), "y-": np.array([0.0, -1.0, 0.0]),
    "z+": np.array([0.0, 0.0, 1.0]), "z-": np.array([0.0, 0.0, -1.0]),
}


def vertex_states() -> list:
    return [state_of_bloch(v) for v in VERTICES.values()]


def _embed(u: np.ndarray, pos, n: int) -> np.ndarray:
    """Embed a 1- or 2-qubit unitary at the given positions of an n-qubit space."""
    pos = list(pos)
    full = np.eye(2**n, dtype=complex)
    # build via tensor reshuffling: U on pos, identity elsewhere
    k = len(pos)
    rest = [i for i in range(n) if i not in pos]
    perm = pos + rest
    inv = np.argsort(perm)
    big = kron(u, np.eye(2 ** (n - k)))
    t = big.reshape([2] * (2 * n))
    t = t.transpose(list(inv) + [i + n for i in inv])
    return t.reshape(2**n, 2**n)


def _random_clifford_circuit(n: int, n_gates: int, rng: np.random.Generator) -> np.ndarray:
    """Unitary of a random circuit over H, S and CNOT on n qubits."""
    u = np.eye(2**n, dtype=complex)
    for _ in range(n_gates):
        kind = rng.integers(0, 3)
        if kind == 0:
            q = int(rng.integers(0, n))
            u = _embed(ch.H_GATE, [q], n) @ u
        elif kind == 1:
            q = int(rng.integers(0, n))
            u = _embed(ch.S_GATE, [q], n) @ u
        else:
            if n == 1:
                continue
            a, b = rng.choice(n, size=2, replace=False)
            u = _embed(ch.CNOT_GATE, [int(a), int(b)], n) @ u
    return u


def _check_one_circuit(args):
    n, n_gates, seed = args
    rng = np.random.default_rng(seed)
    u = _random_clifford_circuit(n, n_gates, rng)
    n_anc = n - 1
    violations = []
    worst = 0.0
    for name, r in VERTICES.items():
        # system qubit is position 0; ancillas start in |0>
        _, v = np.linalg.eigh(herm(state_of_bloch(r)))
        full = v[:, -1]
        for _ in range(n_anc):
            full = np.kron(full, np.array([1.0, 0.0], dtype=complex))
        out = u @ full
        # measure every ancilla in the computational basis
        t = out.reshape(2, -1)
        for branch in range(t.shape[1]):
            amp = t[:, branch]
            prob = float(np.real(amp.conj() @ amp))
            if prob < 1e-12:
                continue
            rho = np.outer(amp, amp.conj()) / prob
            rb = bloch_of(rho)
            n1 = float(np.sum(np.abs(rb)))
            dist = min(abs(n1 - 1.0), abs(n1))
            worst = max(worst, dist)
            if n1 > 1.0 + OCT_TOL or dist > OCT_TOL:
                violations.append({"input": name, "branch": branch,
                                   "bloch": rb.tolist(), "norm1": n1})
    return worst, violations


def observation0_check(n_ancilla: int = 2, n_circuits: int = 1000,
                       seed: int = 0, n_gates: int = 20) -> dict:
    """Dense verification that random Clifford circuits with computational
    ancillas and measurements map octahedron vertices to vertices or the
    center (so the octahedron is closed under these operations).

    Circuits are sharded across workers with per-shard seeds derived from
    the master seed; QCTOL_THREADS caps the worker count.
    """
    if n_ancilla + 1 > 3:
        raise QctolError("at most 2 ancillas (3 qubits total) are supported")
    n = n_ancilla + 1
    master = np.random.SeedSequence(seed)
    seeds = master.generate_state(n_circuits)
    jobs = [(n, n_gates, int(s)) for s in seeds]
    threads = int(os.environ.get("QCTOL_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_check_one_circuit, jobs))
    else:
        results = [_check_one_circuit(j) for j in jobs]
    worst = max(r[0] for r in results)
    violations = [v for r in results for v in r[1]]
    return {
        "n_qubits": n,
        "n_circuits": n_circuits,
        "n_gates_per_circuit": n_gates,
        "seed": seed,
        "worst_distance_to_vertex_or_center": worst,
        "n_violations": len(violations),
        "violations": violations[:10],
        "passed": len(violations) == 0,
    }
