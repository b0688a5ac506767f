"""Entangled photon-pair source: pair statistics, calibration and brightness.

Wavelengths are in nm, pump powers in mW for the SPDC source and in W for
the frequency-upconversion (FUC) pump, bandwidths in MHz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats

from ._validation import ParameterError, require, require_range

__all__ = [
    "SourceParams",
    "BrightnessInputs",
    "PairDistribution",
    "MU_PER_MW",
    "QCE_ETA_MAX",
    "QCE_P_SAT_W",
    "pair_count_distribution",
    "mu_from_pump",
    "conjugate_wavelength",
    "upconversion_qce",
    "fuc_operating_point",
    "spectral_brightness",
    "car_analytic",
]

#: Linear pump calibration: mu = 0.03 at 10 mW.
MU_PER_MW = 0.003

#: sin^2 sqrt(P) conversion model through QCE(1.5 W) = 0.5 with unit peak
#: efficiency, which puts saturation at 6 W.
QCE_ETA_MAX = 1.0
QCE_P_SAT_W = 6.0

_TRUNCATION = 1e-12


@dataclass(frozen=True)
class SourceParams:
    mu: float = 0.03
    rep_rate: float = 100e6
    pump_power: float = 10.0
    visibility: float = 0.958
    phase: float = math.pi
    pump_wavelength: float = 1064.0
    signal_wavelength: float = 1555.0
    idler_wavelength: float = 3370.0

    def __post_init__(self):
        require_range(self.mu, "mu", 0.0)
        require_range(self.rep_rate, "rep_rate", 0.0, lo_open=True)
        require_range(self.pump_power, "pump_power", 0.0)
        require_range(self.visibility, "visibility", 0.0, 1.0)
        require_range(self.phase, "phase")
        for name in ("pump_wavelength", "signal_wavelength", "idler_wavelength"):
            require_range(getattr(self, name), name, 0.0, lo_open=True)
        lhs = 1.0 / self.pump_wavelength
        rhs = 1.0 / self.signal_wavelength + 1.0 / self.idler_wavelength
        require(abs(lhs - rhs) <= 1e-3 * lhs, "idler_wavelength",
                "wavelengths violate energy conservation by more than 0.1%")


@dataclass(frozen=True)
class BrightnessInputs:
    ncc: float
    pump_mw: float
    alpha_s: float = 1.0
    alpha_i: float = 1.0
    eta_s: float = 1.0
    eta_i: float = 1.0
    dnu: float | None = None
    dnu_s: float | None = None
    dnu_i: float | None = None

    def __post_init__(self):
        require_range(self.ncc, "ncc", 0.0)
        require_range(self.pump_mw, "pump_mw", 0.0)
        for name in ("alpha_s", "alpha_i", "eta_s", "eta_i"):
            require_range(getattr(self, name), name, 0.0, 1.0, lo_open=True)
        for name in ("dnu", "dnu_s", "dnu_i"):
            value = getattr(self, name)
            if value is not None:
                require_range(value, name, 0.0, lo_open=True)


@dataclass(frozen=True)
class PairDistribution:
    """Truncated pair-number distribution; ``probs[n]`` is P(n)."""

    mean: float
    law: str
    probs: np.ndarray

    def pmf(self, n: int) -> float:
        return float(self.probs[n]) if 0 <= n < len(self.probs) else 0.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        lam = self.mean
        if self.law == "poisson":
            return rng.poisson(lam, size)
        # total of two independent geometric modes, each with mean lam/2
        p = 1.0 / (1.0 + lam / 2.0)
        return rng.negative_binomial(2, p, size)


def pair_count_distribution(mu: float,
                            law: Literal["poisson", "thermal"] = "poisson") -> PairDistribution:
    """Pairs per pump pulse.

    ``"poisson"`` is the multimode approximation.  ``"thermal"`` is the
    two-mode distribution P(n) = (n+1) l^n / (1+l)^(n+2), l = mu/2, whose
    no-click generating function is the (1 + eta mu/2)^-2 form of the
    analytic gain model.
    """
    if not (isinstance(mu, (int, float)) and math.isfinite(mu)) or mu < 0:
        raise ParameterError("mu", f"must be a finite number >= 0, got {mu!r}")
    if law == "poisson":
        dist = stats.poisson(mu)
    elif law == "thermal":
        dist = stats.nbinom(2, 1.0 / (1.0 + mu / 2.0))
    else:
        raise ParameterError("law", f"unknown pair statistics {law!r}")
    n_max = int(dist.ppf(1.0 - _TRUNCATION)) + 1 if mu > 0 else 0
    probs = dist.pmf(np.arange(n_max + 1))
    probs.setflags(write=False)
    return PairDistribution(float(mu), law, probs)


def mu_from_pump(pump_mw: float, k: float = MU_PER_MW) -> float:
    require_range(pump_mw, "pump_mw", 0.0)
    return k * pump_mw


def conjugate_wavelength(lambda_p: float, lambda_known: float,
                         process: Literal["spdc", "fuc"] = "spdc") -> float:
    """Energy-conservation partner wavelength in nm.

    ``spdc``: idler from pump and signal, 1/l_p = 1/l_s + 1/l_i.
    ``fuc``: upconverted output from input and pump, 1/l_out = 1/l_in + 1/l_p.
    """
    require_range(lambda_p, "lambda_p", 0.0, lo_open=True)
    require_range(lambda_known, "lambda_known", 0.0, lo_open=True)
    if process == "spdc":
        if lambda_known <= lambda_p:
            raise ParameterError("lambda_known",
                                 "signal wavelength must exceed the pump wavelength")
        return 1.0 / (1.0 / lambda_p - 1.0 / lambda_known)
    if process == "fuc":
        return 1.0 / (1.0 / lambda_known + 1.0 / lambda_p)
    raise ParameterError("process", f"unknown process {process!r}")


def upconversion_qce(fuc_pump_w, eta_max: float = QCE_ETA_MAX,
                     p_sat: float = QCE_P_SAT_W):
    """eta_max sin^2((pi/2) sqrt(P/p_sat)), held at eta_max beyond p_sat."""
    if not p_sat > 0:
        raise ParameterError("p_sat", "saturation power must be positive")
    p = np.asarray(fuc_pump_w, dtype=float)
    if np.any(p < 0):
        raise ParameterError("fuc_pump_w", "pump power must be >= 0")
    x = np.minimum(p / p_sat, 1.0)
    out = eta_max * np.sin(0.5 * np.pi * np.sqrt(x)) ** 2
    return float(out) if out.ndim == 0 else out


def fuc_operating_point(fuc_pump_w: float, *, downstream_eff: float,
                        base_y0: float, noise_per_w: float,
                        eta_max: float = QCE_ETA_MAX,
                        p_sat: float = QCE_P_SAT_W) -> tuple[float, float]:
    """Idler-arm (efficiency, background yield) at a given FUC pump power.

    Efficiency is ``downstream_eff * QCE(P)``; pump-induced parasitic noise
    adds ``noise_per_w * P`` to the background yield per pulse.
    """
    require_range(noise_per_w, "noise_per_w", 0.0)
    eta = downstream_eff * upconversion_qce(fuc_pump_w, eta_max, p_sat)
    return eta, base_y0 + noise_per_w * fuc_pump_w


def spectral_brightness(inputs: BrightnessInputs,
                        mode: Literal["inferred", "detected"] = "detected") -> float:
    """Spectral brightness in pairs/(s mW MHz).

    inferred: N_cc / (alpha_s alpha_i eta_s eta_i P dnu)
    detected: N_cc / (P sqrt(dnu_s dnu_i))
    """
    if mode == "inferred":
        if inputs.dnu is None:
            raise ParameterError("dnu", "required for the inferred brightness")
        denom = (inputs.alpha_s * inputs.alpha_i * inputs.eta_s * inputs.eta_i
                 * inputs.pump_mw * inputs.dnu)
    elif mode == "detected":
        if inputs.dnu_s is None or inputs.dnu_i is None:
            raise ParameterError("dnu_s", "dnu_s and dnu_i are required for the detected brightness")
        denom = inputs.pump_mw * math.sqrt(inputs.dnu_s * inputs.dnu_i)
    else:
        raise ParameterError("mode", f"unknown brightness mode {mode!r}")
    if denom == 0:
        raise ZeroDivisionError("spectral brightness denominator is zero")
    return inputs.ncc / denom


def car_analytic(mu: float, eta_a: float, eta_b: float,
                 y0a: float = 0.0, y0b: float = 0.0) -> float:
    """Small-mu coincidence-to-accidental ratio.

    True pairs per pulse mu eta_a eta_b over the product of singles
    (mu eta_a + y0a)(mu eta_b + y0b).  Returns ``inf`` when the accidental
    rate vanishes.
    """
    for name, value in (("mu", mu), ("eta_a", eta_a), ("eta_b", eta_b),
                        ("y0a", y0a), ("y0b", y0b)):
        require_range(value, name, 0.0)
    p_acc = (mu * eta_a + y0a) * (mu * eta_b + y0b)
    if p_acc == 0:
        return math.inf
    return mu * eta_a * eta_b / p_acc
