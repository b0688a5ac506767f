"""Two-qubit polarization state tomography.

Sixteen product projections from {H, V, D, R, L} on each photon are
measured.  The state is reconstructed by linear inversion (projected back
onto the physical set) and refined by maximum likelihood with the
Cholesky-type parameterization rho = T^dagger T / tr(T^dagger T), T lower
triangular, so every iterate is physical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ._validation import ParameterError, require, require_range
from .quantum_state import DensityMatrix, fidelity, PHI_MINUS

__all__ = [
    "SINGLE_QUBIT_STATES",
    "STANDARD_SETTINGS",
    "TomoSettings",
    "TomoCounts",
    "MLEResult",
    "standard_projection_set",
    "simulate_tomo_counts",
    "linear_inversion",
    "project_to_physical",
    "log_likelihood",
    "mle_reconstruct",
]

_S = 1.0 / math.sqrt(2.0)
SINGLE_QUBIT_STATES = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, 1j * _S], dtype=complex),
    "L": np.array([_S, -1j * _S], dtype=complex),
}

#: Projection order of the standard 16-setting scheme (signal, idler).
STANDARD_SETTINGS = ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                     "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")


@dataclass(frozen=True)
class TomoSettings:
    labels: tuple = STANDARD_SETTINGS
    weights: tuple | None = None

    def __post_init__(self):
        for lab in self.labels:
            require(len(lab) == 2 and all(c in SINGLE_QUBIT_STATES for c in lab),
                    "labels", f"unknown projection {lab!r}")
        if self.weights is not None:
            require(len(self.weights) == len(self.labels), "weights",
                    "need one weight per projection")
            require(all(w > 0 for w in self.weights), "weights", "weights must be positive")

    def projectors(self) -> np.ndarray:
        out = []
        for lab in self.labels:
            v = np.kron(SINGLE_QUBIT_STATES[lab[0]], SINGLE_QUBIT_STATES[lab[1]])
            out.append(np.outer(v, v.conj()))
        return np.array(out)

    def weight_array(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self.labels))
        return np.asarray(self.weights, dtype=float)


def standard_projection_set() -> np.ndarray:
    """The 16 projectors in ``STANDARD_SETTINGS`` order, shape (16, 4, 4)."""
    return TomoSettings().projectors()


@dataclass(frozen=True)
class TomoCounts:
    counts: np.ndarray
    settings: TomoSettings = TomoSettings()

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float).reshape(-1)
        if c.size != len(self.settings.labels):
            raise ParameterError("counts",
                                 f"expected {len(self.settings.labels)} counts, got {c.size}")
        if np.any(~np.isfinite(c)) or np.any(c < 0):
            raise ParameterError("counts", "counts must be finite and non-negative")
        if c.sum() == 0:
            raise ParameterError("counts", "all counts are zero")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class MLEResult:
    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    fidelity_phi_minus: float


def simulate_tomo_counts(rho: DensityMatrix, n_per_setting: float,
                         rng: np.random.Generator | int,
                         settings: TomoSettings = TomoSettings()) -> TomoCounts:
    """Poisson counts with means n_per_setting * w_j * tr(rho Pi_j).

    ``rng`` is a Generator or an integer seed.
    """
    require_range(n_per_setting, "n_per_setting", 0.0, lo_open=True)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng)))
    probs = np.real(np.einsum("kij,ji->k", settings.projectors(), rho.matrix))
    means = n_per_setting * settings.weight_array() * np.clip(probs, 0.0, None)
    return TomoCounts(rng.poisson(means), settings)


def _pauli_basis() -> np.ndarray:
    s = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]),
         np.array([[1, 0], [0, -1]])]
    return np.array([np.kron(a, b) for a in s for b in s], dtype=complex)


def project_to_physical(matrix: np.ndarray) -> DensityMatrix:
    """Closest density matrix in Frobenius norm.

    Eigenvalues are projected onto the probability simplex; eigenvectors
    are kept.
    """
    m = 0.5 * (np.asarray(matrix, dtype=complex) + np.asarray(matrix, dtype=complex).conj().T)
    m = m / np.trace(m).real
    w, v = np.linalg.eigh(m)
    # Euclidean projection onto {x >= 0, sum x = 1}
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
    x = np.maximum(w - css[k] / (k + 1), 0.0)
    return DensityMatrix.from_unnormalized((v * x) @ v.conj().T)


def linear_inversion(counts: TomoCounts) -> DensityMatrix:
    """Least-squares fit of n_j / w_j = N tr(rho Pi_j) over a Pauli expansion.

    The fitted matrix is rescaled to unit trace, which fixes N, and then
    projected onto the physical states.
    """
    proj = counts.settings.projectors()
    paulis = _pauli_basis()
    # design matrix A[j, k] = tr(Pi_j sigma_k) / 4
    design = np.real(np.einsum("jab,kba->jk", proj, paulis)) / 4.0
    if np.linalg.matrix_rank(design) < 16:
        raise ParameterError("settings", "projection set is not informationally complete")
    y = counts.counts / counts.settings.weight_array()
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    raw = np.einsum("k,kab->ab", coef, paulis) / 4.0
    if np.trace(raw).real <= 0:
        raise ParameterError("counts", "linear inversion gives a non-positive trace")
    return project_to_physical(raw)


def log_likelihood(rho: DensityMatrix, counts: TomoCounts) -> float:
    """Extended Poisson log-likelihood with the total count as free scale.

    sum_j n_j log p_j - N log sum_k w_k p_k, with p_j = w_j tr(rho Pi_j).
    """
    proj = counts.settings.projectors()
    w = counts.settings.weight_array()
    p = w * np.real(np.einsum("jab,ba->j", proj, rho.matrix))
    n = counts.counts
    mask = n > 0
    if np.any(p[mask] <= 0):
        return -math.inf
    return float(np.sum(n[mask] * np.log(p[mask])) - n.sum() * math.log(p.sum()))


_TRIL = np.tril_indices(4)


def _unpack(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    k = len(_TRIL[0])
    t[_TRIL] = x[:k] + 1j * x[k:]
    return t


def _pack(t: np.ndarray) -> np.ndarray:
    vals = t[_TRIL]
    return np.concatenate([vals.real, vals.imag])


def _initial_t(rho: DensityMatrix) -> np.ndarray:
    # numpy gives rho = L L^dagger; reversing the basis turns that into
    # rho = T^dagger T with T lower triangular
    j = np.eye(4)[::-1]
    m = rho.matrix + 1e-6 * np.eye(4)
    low = np.linalg.cholesky(j @ m @ j)
    return j @ low.conj().T @ j


def _objective_factory(counts: TomoCounts):
    proj = counts.settings.projectors()
    w = counts.settings.weight_array()
    wproj = w[:, None, None] * proj
    m_total = wproj.sum(axis=0)
    n = counts.counts
    n_tot = n.sum()

    def negloglike(x):
        t = _unpack(x)
        a = t.conj().T @ t
        p = np.real(np.einsum("jab,ba->j", wproj, a))
        z = np.real(np.trace(m_total @ a))
        p = np.maximum(p, 1e-300)
        value = np.sum(n * np.log(p)) - n_tot * math.log(z)
        g = np.einsum("j,jab->ab", n / p, wproj) - n_tot * m_total / z
        gt = g @ t.conj().T
        d = gt.T[_TRIL]
        grad = np.concatenate([2 * d.real, -2 * d.imag])
        return -value / n_tot, -grad / n_tot

    return negloglike


def mle_reconstruct(counts: TomoCounts, max_iter: int = 10_000,
                    tol: float = 1e-12) -> MLEResult:
    """Maximum-likelihood state; starts from the linear-inversion estimate."""
    require(max_iter > 0, "max_iter", "must be positive")
    start = linear_inversion(counts)
    fun = _objective_factory(counts)
    res = minimize(fun, _pack(_initial_t(start)), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-9})
    t = _unpack(res.x)
    rho = DensityMatrix.from_unnormalized(t.conj().T @ t)
    return MLEResult(rho, log_likelihood(rho, counts), int(res.nit), bool(res.success),
                     fidelity(rho, PHI_MINUS))
