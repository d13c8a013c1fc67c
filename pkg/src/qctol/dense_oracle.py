"""Brute-force reference simulator and statistical comparison harness.

Evolves the full density matrix (capped at 8 qubits), computing exact
outcome distributions against which the pairing-list machine is validated.
No attention is paid to performance: this code must be obviously correct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import qmath
from .bmachine.spec import Circuit
from .qmath import QctolError, dag, kron

MAX_QUBITS = 8


@dataclass
class ComparisonReport:
    tv_distance: float
    chi2_pvalue: float
    table: dict
    alpha: float

    @property
    def passed(self) -> bool:
        return self.chi2_pvalue > self.alpha

    def to_json(self) -> dict:
        return {
            "tv_distance": self.tv_distance,
            "chi2_pvalue": self.chi2_pvalue,
            "alpha": self.alpha,
            "passed": self.passed,
            "per_outcome": self.table,
        }


def _embed_kraus(k: np.ndarray, pos, n: int) -> np.ndarray:
    """Embed a 1- or 2-qubit operator at the given qubit positions."""
    pos = list(pos)
    nk = len(pos)
    rest = [i for i in range(n) if i not in pos]
    perm = pos + rest
    inv = np.argsort(perm)
    big = kron(k, np.eye(2 ** (n - nk)))
    t = big.reshape([2] * (2 * n))
    t = t.transpose(list(inv) + [i + n for i in inv])
    return t.reshape(2**n, 2**n)


def run_dense(circuit: Circuit) -> dict:
    """Exact final distribution over measured bitstrings.

    Branch-spec gates contribute their full weighted channel.
    """
    n = circuit.n_qubits
    if n > MAX_QUBITS:
        raise QctolError(f"dense oracle capped at {MAX_QUBITS} qubits, got {n}")
    rho = circuit.init[0]
    for q in range(1, n):
        rho = kron(rho, circuit.init[q])
    for g in circuit.gates:
        if g.bient is not None:
            ops = g.bient.total_kraus()
        else:
            ops = g.channel.kraus
        acc = np.zeros_like(rho)
        for k in ops:
            kf = _embed_kraus(k, g.targets, n)
            acc += kf @ rho @ dag(kf)
        rho = acc
    # marginal distribution over the measured qubits, in measure-list order
    probs = np.real(np.diag(rho)).reshape([2] * n)
    keep = list(circuit.measure)
    drop = [i for i in range(n) if i not in keep]
    if drop:
        probs = probs.sum(axis=tuple(drop))
    kept_order = [q for q in range(n) if q in keep]
    perm = [kept_order.index(q) for q in keep]
    probs = probs.transpose(perm).reshape(-1)
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise QctolError(f"dense distribution sums to {total}")
    out = {}
    m = len(keep)
    for idx, p in enumerate(probs):
        key = format(idx, f"0{m}b")
        out[key] = float(p)
    return out


def dense_state(circuit: Circuit) -> qmath.DensityMatrix:
    """Final density matrix of the circuit (before measurement)."""
    n = circuit.n_qubits
    if n > MAX_QUBITS:
        raise QctolError(f"dense oracle capped at {MAX_QUBITS} qubits, got {n}")
    rho = circuit.init[0]
    for q in range(1, n):
        rho = kron(rho, circuit.init[q])
    for g in circuit.gates:
        ops = g.bient.total_kraus() if g.bient is not None else g.channel.kraus
        acc = np.zeros_like(rho)
        for k in ops:
            kf = _embed_kraus(k, g.targets, n)
            acc += kf @ rho @ dag(kf)
        rho = acc
    return qmath.density(rho, tuple(f"q{i}" for i in range(n)))


def compare(counts: dict, exact: dict, alpha: float = 1e-3) -> ComparisonReport:
    """Total-variation distance and chi-square goodness of fit of empirical
    counts against an exact distribution; outcomes with tiny expectation are
    pooled to keep the chi-square statistic valid."""
    n_shots = sum(counts.values())
    if n_shots == 0:
        raise QctolError("no counts to compare")
    extra = set(counts) - set(exact)
    if extra:
        raise QctolError(f"counts contain outcomes outside the exact support "
                         f"only if probability ~ 0; unexpected: {sorted(extra)[:4]}")
    keys = sorted(exact)
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    exp = np.array([exact[k] * n_shots for k in keys])
    tv = 0.5 * float(np.sum(np.abs(obs / n_shots - exp / n_shots)))

    # pool cells with expectation below 5 into one bin
    big = exp >= 5.0
    obs_b = list(obs[big])
    exp_b = list(exp[big])
    if np.any(~big):
        obs_b.append(obs[~big].sum())
        exp_b.append(exp[~big].sum())
    obs_b = np.array(obs_b)
    exp_b = np.array(exp_b)
    if len(obs_b) < 2:
        pval = 1.0
    else:
        # renormalize away count/expectation rounding drift
        exp_b *= obs_b.sum() / exp_b.sum()
        chi2 = float(np.sum((obs_b - exp_b) ** 2 / exp_b))
        dof = len(obs_b) - 1
        pval = float(stats.chi2.sf(chi2, dof))
    table = {k: {"observed": int(o), "expected": float(e)}
             for k, o, e in zip(keys, obs, exp)}
    return ComparisonReport(tv_distance=tv, chi2_pvalue=pval, table=table,
                            alpha=alpha)
