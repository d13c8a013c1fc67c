"""Shot execution: counter-based randomness, path selection, aggregation.

All randomness is drawn up front from a Philox stream keyed by the seed;
shot s consumes row s, draw g is counter position (s, g).  Shots are
therefore reproducible and independent of execution order, and the compiled
and fallback paths consume identical numbers.

Set QCTOL_DISABLE_NUMBA=1 to force the pure-numpy reference path;
QCTOL_THREADS caps shot-sharding workers on the compiled path.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..qmath import QctolError
from . import kernel as _kernel
from .compile import Program, compile_circuit, measurement_conditioners
from .machine import SimulationAbort, run_shot_reference, run_shots_reference
from .spec import Circuit, ShotResult

_ERR_NAMES = {
    _kernel.ERR_SEP_WEIGHT: "separable branch has vanishing total weight",
    _kernel.ERR_EB_NORM: "measure-prepare outcome probabilities do not sum to 1",
    _kernel.ERR_MEAS_WEIGHT: "measurement hit zero weight",
    _kernel.ERR_NOT_PAIRED: "plain two-qubit channel applied across pairs",
}


def numba_enabled() -> bool:
    if os.environ.get("QCTOL_DISABLE_NUMBA", "0") not in ("", "0"):
        return False
    return _kernel.HAS_NUMBA


def draw_uniforms(seed: int, shots: int, n_draws: int) -> np.ndarray:
    """Philox-keyed uniform block; row s holds shot s's draw sequence."""
    bitgen = np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 0],
                                           dtype=np.uint64))
    gen = np.random.Generator(bitgen)
    return gen.random((shots, max(n_draws, 1)))


def _run_kernel(program: Program, uniforms: np.ndarray, threads: int):
    shots = uniforms.shape[0]
    out = np.empty((shots, len(program.measure)), dtype=np.uint8)
    errs = np.zeros(shots, dtype=np.int64)
    cond0, cond1 = measurement_conditioners()
    args = program.kernel_args(cond0, cond1)
    if threads <= 1 or shots < 2 * threads:
        _kernel.run_shots(*args, uniforms, out, errs)
    else:
        bounds = np.linspace(0, shots, threads + 1, dtype=int)
        def job(k):
            lo, hi = bounds[k], bounds[k + 1]
            _kernel.run_shots(*args, uniforms[lo:hi], out[lo:hi], errs[lo:hi])
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, range(threads)))
    bad = np.nonzero(errs)[0]
    if bad.size:
        s = int(bad[0])
        raise SimulationAbort(
            f"shot {s}: {_ERR_NAMES.get(int(errs[s]), 'unknown error')}")
    return out


def run_program(program: Program, shots: int, seed: int,
                force_reference: bool = False, check: bool = False):
    """Execute a compiled program; returns the (shots, n_measured) bit array."""
    uniforms = draw_uniforms(seed, shots, program.max_draws)
    if force_reference or not numba_enabled():
        return run_shots_reference(program, uniforms, check=check)
    threads = int(os.environ.get("QCTOL_THREADS", "1"))
    return _run_kernel(program, uniforms, threads)


def aggregate_counts(bits: np.ndarray) -> dict:
    counts: dict[str, int] = {}
    for row in bits:
        key = "".join("1" if b else "0" for b in row)
        counts[key] = counts.get(key, 0) + 1
    return counts


def run(circuit: Circuit, shots: int, seed: int = 0, pad: bool = False,
        force_reference: bool = False, check: bool = False) -> dict:
    """Simulate a circuit and aggregate measurement counts.

    Returns {"counts": {bitstring: count}, "meta": {...}}; same seed, same
    counts, independent of path and thread count.
    """
    if shots < 1:
        raise QctolError("need at least one shot")
    program = compile_circuit(circuit, pad=pad)
    bits = run_program(program, shots, seed,
                       force_reference=force_reference, check=check)
    return {
        "counts": aggregate_counts(bits),
        "meta": {
            "shots": shots,
            "seed": seed,
            "measured_qubits": [int(q) for q in program.measure],
            "path": ("reference" if (force_reference or not numba_enabled())
                     else "numba"),
            "version": 1,
        },
    }


def sample_shot(circuit: Circuit, seed: int = 0, shot_index: int = 0,
                pad: bool = False) -> ShotResult:
    """Run a single shot on the reference machine (with consistency checks)."""
    program = compile_circuit(circuit, pad=pad)
    uniforms = draw_uniforms(seed, shot_index + 1, program.max_draws)
    bits = run_shot_reference(program, uniforms[shot_index], check=True)
    return ShotResult(bits=[int(b) for b in bits])
