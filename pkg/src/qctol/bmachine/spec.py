"""Circuit and gate-specification data model for the pairing-list machine.

A two-qubit gate that may act across pairs must be declared as a
:class:`BiEntanglingGateSpec`: a weighted mixture of a product-Kraus branch,
a swap-then-product branch, and a measure-and-prepare branch.  Gates acting
inside a pair may be arbitrary channels (applied deterministically through
their transfer matrix).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import channels as ch
from .. import qmath
from ..qmath import QctolError, dag, kron


class CircuitError(QctolError):
    pass


@dataclass
class KrausPair:
    """A product Kraus term A (x) B, A on the first target, B on the second."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        self.b = np.asarray(self.b, dtype=complex)
        if self.a.shape != (2, 2) or self.b.shape != (2, 2):
            raise CircuitError("Kraus factors must be 2x2")

    def full(self) -> np.ndarray:
        return kron(self.a, self.b)


def _branch_is_tp(pairs: list, atol: float = 1e-9) -> bool:
    total = np.zeros((4, 4), dtype=complex)
    for kp in pairs:
        total += kron(dag(kp.a) @ kp.a, dag(kp.b) @ kp.b)
    return bool(np.max(np.abs(total - np.eye(4))) <= atol)


@dataclass
class BiEntanglingGateSpec:
    """Executable two-qubit gate: weighted product / swap+product /
    measure-and-prepare branches."""

    weights: tuple  # (p_sep, p_swap, p_eb)
    sep: list = field(default_factory=list)    # list of KrausPair
    swap: list = field(default_factory=list)   # list of KrausPair, applied after swap
    eb: ch.MeasurePrepare | None = None
    reference: ch.Channel | None = None        # declared total channel, if any
    name: str | None = None

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != 3 or any(w < -1e-12 for w in self.weights):
            raise CircuitError("weights must be three nonnegative numbers")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise CircuitError(f"weights {self.weights} do not sum to 1")
        self.sep = [kp if isinstance(kp, KrausPair) else KrausPair(*kp)
                    for kp in self.sep]
        self.swap = [kp if isinstance(kp, KrausPair) else KrausPair(*kp)
                     for kp in self.swap]
        p, q, r = self.weights
        if p > 1e-12 and not _branch_is_tp(self.sep):
            raise CircuitError("separable branch is not trace preserving")
        if q > 1e-12 and not _branch_is_tp(self.swap):
            raise CircuitError("swap branch is not trace preserving")
        if r > 1e-12:
            if self.eb is None:
                raise CircuitError("eb weight positive but no measure-prepare given")
            if self.eb.dim != 4:
                raise CircuitError("measure-prepare branch must act on two qubits")
        if self.reference is not None:
            err = np.max(np.abs(self.total_channel().choi - self.reference.choi))
            if err > 1e-8:
                raise CircuitError(
                    f"declared reference Choi differs from branch mixture by {err:.2e}")

    def total_kraus(self) -> list:
        p, q, r = self.weights
        ops = []
        if p > 1e-12:
            ops += [np.sqrt(p) * kp.full() for kp in self.sep]
        if q > 1e-12:
            ops += [np.sqrt(q) * (kp.full() @ ch.SWAP_GATE) for kp in self.swap]
        if r > 1e-12:
            ops += [np.sqrt(r) * k for k in self.eb.kraus()]
        return ops

    def total_channel(self) -> ch.Channel:
        return ch.choi_from_kraus(self.total_kraus())


@dataclass
class Gate:
    targets: tuple
    channel: ch.Channel | None = None
    bient: BiEntanglingGateSpec | None = None

    def __post_init__(self):
        self.targets = tuple(int(t) for t in self.targets)
        if len(self.targets) == 1:
            if self.channel is None or self.channel.parties != 1:
                raise CircuitError("single-qubit gate needs a 1-qubit channel")
            if self.bient is not None:
                raise CircuitError("single-qubit gate cannot carry a branch spec")
        elif len(self.targets) == 2:
            if self.targets[0] == self.targets[1]:
                raise CircuitError("two-qubit gate targets must differ")
            if self.bient is None and (self.channel is None
                                       or self.channel.parties != 2):
                raise CircuitError("two-qubit gate needs a branch spec or a "
                                   "2-qubit channel (in-pair only)")
        else:
            raise CircuitError("gates act on one or two qubits")


_NAMED_INIT = {
    "0": qmath.projector(qmath.ket("0")),
    "1": qmath.projector(qmath.ket("1")),
    "+": np.full((2, 2), 0.5, dtype=complex),
    "-": np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex),
    "i+": np.array([[0.5, -0.5j], [0.5j, 0.5]], dtype=complex),
    "i-": np.array([[0.5, 0.5j], [-0.5j, 0.5]], dtype=complex),
    "maxmixed": np.eye(2, dtype=complex) / 2.0,
}


def init_state(spec) -> np.ndarray:
    if isinstance(spec, str):
        try:
            return _NAMED_INIT[spec]
        except KeyError:
            raise CircuitError(f"unknown init state {spec!r}; "
                               f"known: {sorted(_NAMED_INIT)}") from None
    m = np.asarray(spec, dtype=complex)
    if m.shape != (2, 2):
        raise CircuitError("init state must be a 2x2 density matrix")
    qmath.density(m)  # validates
    return m


@dataclass
class Circuit:
    n_qubits: int
    init: list
    gates: list
    measure: list

    def __post_init__(self):
        self.n_qubits = int(self.n_qubits)
        if self.n_qubits < 1:
            raise CircuitError("need at least one qubit")
        if len(self.init) != self.n_qubits:
            raise CircuitError(
                f"{len(self.init)} init states for {self.n_qubits} qubits")
        self.init = [init_state(s) for s in self.init]
        self.measure = [int(q) for q in self.measure]
        for g in self.gates:
            for t in g.targets:
                if not 0 <= t < self.n_qubits:
                    raise CircuitError(f"gate target {t} out of range")
        for q in self.measure:
            if not 0 <= q < self.n_qubits:
                raise CircuitError(f"measured qubit {q} out of range")
        if len(set(self.measure)) != len(self.measure):
            raise CircuitError("duplicate measured qubits")

    @property
    def n_bient_gates(self) -> int:
        return sum(1 for g in self.gates if g.bient is not None)


# -- JSON wire format ----------------------------------------------------------


def _mat_json(m):
    return ch._complex_to_json(m)


def _mat_from(obj):
    return ch._complex_from_json(obj)


def bient_spec_to_json(spec: BiEntanglingGateSpec) -> dict:
    out: dict = {"weights": list(spec.weights)}
    if spec.sep:
        out["sep"] = [[_mat_json(kp.a), _mat_json(kp.b)] for kp in spec.sep]
    if spec.swap:
        out["swap"] = [[_mat_json(kp.a), _mat_json(kp.b)] for kp in spec.swap]
    if spec.eb is not None:
        out["eb"] = {"povm": [_mat_json(m) for m in spec.eb.povm],
                     "prepared": [_mat_json(r) for r in spec.eb.prepared]}
    if spec.reference is not None:
        out["reference"] = ch.channel_to_json(spec.reference)
    return out


def bient_spec_from_json(obj: dict) -> BiEntanglingGateSpec:
    allowed = {"weights", "sep", "swap", "eb", "reference", "name"}
    extra = set(obj) - allowed
    if extra:
        raise CircuitError(f"unknown branch-spec fields {sorted(extra)}")
    eb = None
    if "eb" in obj:
        data = obj["eb"]
        if set(data) != {"povm", "prepared"}:
            raise CircuitError("eb branch must have povm and prepared fields")
        eb = ch.MeasurePrepare([_mat_from(m) for m in data["povm"]],
                               [_mat_from(r) for r in data["prepared"]])
    ref = ch.channel_from_json(obj["reference"]) if "reference" in obj else None
    return BiEntanglingGateSpec(
        weights=tuple(obj["weights"]),
        sep=[KrausPair(_mat_from(a), _mat_from(b)) for a, b in obj.get("sep", [])],
        swap=[KrausPair(_mat_from(a), _mat_from(b)) for a, b in obj.get("swap", [])],
        eb=eb,
        reference=ref,
        name=obj.get("name"))


def circuit_to_json(c: Circuit) -> dict:
    gates = []
    for g in c.gates:
        entry: dict = {"type": "1q" if len(g.targets) == 1 else "2q",
                       "targets": list(g.targets)}
        if g.channel is not None:
            entry["channel"] = ch.channel_to_json(g.channel)
        if g.bient is not None:
            entry["bient_spec"] = bient_spec_to_json(g.bient)
        gates.append(entry)
    init = []
    for m in c.init:
        for name, mat in _NAMED_INIT.items():
            if np.max(np.abs(mat - m)) < 1e-12:
                init.append(name)
                break
        else:
            init.append(_mat_json(m))
    return {"n_qubits": c.n_qubits, "init": init, "gates": gates,
            "measure": list(c.measure)}


def circuit_from_json(obj: dict) -> Circuit:
    allowed = {"n_qubits", "init", "gates", "measure"}
    extra = set(obj) - allowed
    if extra:
        raise CircuitError(f"unknown circuit fields {sorted(extra)}")
    gates = []
    for entry in obj.get("gates", []):
        eallowed = {"type", "targets", "channel", "bient_spec"}
        eextra = set(entry) - eallowed
        if eextra:
            raise CircuitError(f"unknown gate fields {sorted(eextra)}")
        kind = entry.get("type")
        targets = entry.get("targets", [])
        if kind == "1q" and len(targets) != 1:
            raise CircuitError("1q gate must have exactly one target")
        if kind == "2q" and len(targets) != 2:
            raise CircuitError("2q gate must have exactly two targets")
        if kind not in ("1q", "2q"):
            raise CircuitError(f"unknown gate type {kind!r}")
        channel = (ch.channel_from_json(entry["channel"])
                   if "channel" in entry else None)
        bient = (bient_spec_from_json(entry["bient_spec"])
                 if "bient_spec" in entry else None)
        gates.append(Gate(tuple(targets), channel=channel, bient=bient))
    init = []
    for s in obj.get("init", []):
        init.append(s if isinstance(s, str) else _mat_from(s))
    return Circuit(n_qubits=obj["n_qubits"], init=init, gates=gates,
                   measure=obj.get("measure", []))


@dataclass
class ShotResult:
    bits: list
    branch_trace: list | None = None
