"""Pairing-list Monte-Carlo simulator for circuits of single-qubit channels
and declared-branch two-qubit gates."""

from .compile import Program, compile_circuit, initial_state, transfer_1q
from .kernel import HAS_NUMBA
from .machine import MachineState, SimulationAbort, run_shot_reference
from .runner import (
    aggregate_counts,
    draw_uniforms,
    numba_enabled,
    run,
    run_program,
    sample_shot,
)
from .spec import (
    BiEntanglingGateSpec,
    Circuit,
    CircuitError,
    Gate,
    KrausPair,
    ShotResult,
    bient_spec_from_json,
    bient_spec_to_json,
    circuit_from_json,
    circuit_to_json,
)

__all__ = [
    "BiEntanglingGateSpec", "Circuit", "CircuitError", "Gate", "KrausPair",
    "MachineState", "Program", "ShotResult", "SimulationAbort", "HAS_NUMBA",
    "aggregate_counts", "bient_spec_from_json", "bient_spec_to_json",
    "circuit_from_json", "circuit_to_json", "compile_circuit", "draw_uniforms",
    "initial_state", "numba_enabled", "run", "run_program", "run_shot_reference",
    "sample_shot", "transfer_1q",
]
