"""Two-qubit polarization states of signal/idler photon pairs.

Basis ordering is fixed to (HH, HV, VH, VV) throughout the package, with
the signal photon as the first tensor factor.

Noise is modelled as an isotropic (Werner) mixture

    rho = V |psi><psi| + (1 - V) I/4

which yields S = 2 sqrt(2) V for the CHSH value and F = (1 + 3V)/4 for the
fidelity to the target Bell state at the same time.  A single visibility is
used for every analyzer basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ._validation import ParameterError, require_range

__all__ = [
    "TwoQubitState",
    "DensityMatrix",
    "AnalyzerSetting",
    "DEFAULT_CHSH_ANGLES",
    "bell_state",
    "PHI_MINUS",
    "PHI_PLUS",
    "product_state",
    "werner_mix",
    "analyzer_projector",
    "coincidence_probability",
    "outcome_probabilities",
    "correlation",
    "chsh_value",
    "fidelity",
]

_NORM_TOL = 1e-12
_HERM_TOL = 1e-12
_PSD_TOL = 1e-10

#: (a, a', b, b') analyzer projection angles in degrees.  With the Phi-
#: correlation law E = cos 2(a + b) this set reaches S = 2 sqrt(2).
DEFAULT_CHSH_ANGLES = (0.0, 45.0, -22.5, -67.5)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TwoQubitState:
    """Pure two-qubit state with amplitudes over (HH, HV, VH, VV)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (4,):
            raise ParameterError("amplitudes", f"expected 4 amplitudes, got {amps.shape}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > _NORM_TOL:
            raise ParameterError("amplitudes", f"state is not normalized (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_unnormalized(cls, amplitudes) -> "TwoQubitState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ParameterError("amplitudes", "zero vector cannot be normalized")
        return cls(amps / norm)

    def projector(self) -> "DensityMatrix":
        psi = self.amplitudes
        return DensityMatrix(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """4x4 Hermitian, unit-trace, positive semidefinite matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ParameterError("matrix", f"expected a 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > _HERM_TOL:
            raise ParameterError("matrix", "matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > _NORM_TOL:
            raise ParameterError("matrix", f"trace must be 1, got {tr!r}")
        if np.min(np.linalg.eigvalsh(m)) < -_PSD_TOL:
            raise ParameterError("matrix", "matrix has negative eigenvalues")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def from_unnormalized(cls, matrix) -> "DensityMatrix":
        """Hermitize and rescale a positive matrix to unit trace."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if tr <= 0:
            raise ParameterError("matrix", "trace must be positive to normalize")
        return cls(m / tr)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


@dataclass(frozen=True)
class AnalyzerSetting:
    """Linear polarization projection angle in degrees, kept in [-90, 90).

    A half-wave plate at angle t maps to a projection angle of 2 t.
    """

    angle: float

    def __post_init__(self):
        require_range(self.angle, "angle")
        wrapped = (float(self.angle) + 90.0) % 180.0 - 90.0
        object.__setattr__(self, "angle", wrapped)

    @classmethod
    def from_hwp(cls, hwp_deg: float) -> "AnalyzerSetting":
        return cls(2.0 * hwp_deg)


Angle = Union[AnalyzerSetting, float]


def _deg(a: Angle) -> float:
    return a.angle if isinstance(a, AnalyzerSetting) else AnalyzerSetting(a).angle


def bell_state(phase: float) -> TwoQubitState:
    """(|HH> + e^{i phase} |VV>)/sqrt(2)."""
    require_range(phase, "phase")
    s = 1.0 / np.sqrt(2.0)
    return TwoQubitState(np.array([s, 0.0, 0.0, s * np.exp(1j * phase)]))


PHI_MINUS = bell_state(np.pi)
PHI_PLUS = bell_state(0.0)


def _linear(theta_deg: float) -> np.ndarray:
    t = np.radians(theta_deg)
    return np.array([np.cos(t), np.sin(t)], dtype=complex)


def product_state(a_deg: float, b_deg: float) -> TwoQubitState:
    """Separable state with linear polarizations at angles a (signal), b (idler)."""
    return TwoQubitState(np.kron(_linear(a_deg), _linear(b_deg)))


def werner_mix(visibility: float, target: TwoQubitState) -> DensityMatrix:
    require_range(visibility, "visibility", 0.0, 1.0)
    pure = np.outer(target.amplitudes, target.amplitudes.conj())
    return DensityMatrix(visibility * pure + (1.0 - visibility) * np.eye(4) / 4.0)


def analyzer_projector(a: Angle, b: Angle) -> np.ndarray:
    """Pi_a (x) Pi_b for linear analyzers on signal and idler."""
    v = np.kron(_linear(_deg(a)), _linear(_deg(b)))
    return np.outer(v, v.conj())


def coincidence_probability(rho: DensityMatrix, a: Angle, b: Angle) -> float:
    """Probability that both photons pass their analyzers, tr(rho Pi_a (x) Pi_b)."""
    p = float(np.real(np.trace(rho.matrix @ analyzer_projector(a, b))))
    return min(max(p, 0.0), 1.0)


def outcome_probabilities(rho: DensityMatrix, a: Angle, b: Angle) -> np.ndarray:
    """2x2 array P[i, j] of joint outcomes.

    Index 0 is "pass" (projection onto the analyzer angle) and index 1 is
    "fail" (projection onto the orthogonal angle).
    """
    a, b = _deg(a), _deg(b)
    out = np.empty((2, 2))
    for i, da in enumerate((0.0, 90.0)):
        for j, db in enumerate((0.0, 90.0)):
            out[i, j] = coincidence_probability(rho, a + da, b + db)
    return out


def correlation(rho: DensityMatrix, a: Angle, b: Angle) -> float:
    """E(a, b) = P(++) + P(--) - P(+-) - P(-+)."""
    p = outcome_probabilities(rho, a, b)
    return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])


def chsh_value(rho: DensityMatrix,
               angles: Sequence[float] = DEFAULT_CHSH_ANGLES) -> float:
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b') for angles (a, a', b, b')."""
    a, a2, b, b2 = angles
    return (correlation(rho, a, b) - correlation(rho, a, b2)
            + correlation(rho, a2, b) + correlation(rho, a2, b2))


def fidelity(rho: DensityMatrix, target: TwoQubitState) -> float:
    """<target| rho |target>."""
    psi = target.amplitudes
    f = psi.conj() @ rho.matrix @ psi
    return float(min(max(f.real, 0.0), 1.0))
