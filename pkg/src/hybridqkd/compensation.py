"""Spectral phase of the crossed-crystal source and its birefringent compensation.

Pairs are taken to be born at the entrance face of the source crystals, so
the full crystal length contributes.  The residual phase between |VV> and
|HH> along the energy-conservation diagonal is flattened by a tilted
lithium niobate plate in the signal arm, and flatness is the peak-to-peak
spread of the compensated phase over the signal band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import ParameterError, require, require_range
from .source import conjugate_wavelength

__all__ = [
    "IndexModel",
    "MGO_LN_GAYER",
    "SourceCrystal",
    "CompensatorSpec",
    "CompensationOptimum",
    "refractive_index",
    "angle_tuned_index",
    "phase_difference",
    "compensation_term",
    "compensated_phase",
    "flatness",
    "optimize_compensation",
    "phase_map",
    "walkoff_estimate",
]


@dataclass(frozen=True)
class IndexModel:
    """Temperature-dependent Sellmeier model

        n^2 = a1 + b1 f + (a2 + b2 f)/(l^2 - (a3 + b3 f)^2)
              + (a4 + b4 f)/(l^2 - a5^2) - a6 l^2,
        f = (T - 24.5)(T + 570.82),  l in um.
    """

    material: str
    source: str
    ordinary: dict
    extraordinary: dict
    temperature_range_c: tuple = (20.0, 200.0)
    wavelength_range_nm: tuple = (500.0, 4000.0)


MGO_LN_GAYER = IndexModel(
    material="5 mol% MgO:LiNbO3 (congruent)",
    source="O. Gayer et al., Appl. Phys. B 91, 343-348 (2008)",
    ordinary=dict(a1=5.653, a2=0.1185, a3=0.2091, a4=89.61, a5=10.85, a6=1.97e-2,
                  b1=7.941e-7, b2=3.134e-8, b3=-4.641e-9, b4=-2.188e-6),
    extraordinary=dict(a1=5.756, a2=0.0983, a3=0.2020, a4=189.32, a5=12.52, a6=1.32e-2,
                       b1=2.860e-6, b2=4.700e-8, b3=6.113e-8, b4=1.516e-4),
)


@dataclass(frozen=True)
class SourceCrystal:
    """The SPDC crystal pair producing the uncompensated phase."""

    length_mm: float = 4.5
    temperature_c: float = 75.0
    pump_nm: float = 1064.0

    def __post_init__(self):
        require_range(self.length_mm, "length_mm", 0.0)
        require_range(self.pump_nm, "pump_nm", 0.0, lo_open=True)


@dataclass(frozen=True)
class CompensatorSpec:
    """Tilted compensation plate in the signal arm.

    ``optic_axis`` is the polarization that sees the angle-tuned index:
    ``"vertical"`` adds n_e(theta) - n_o to the VV phase, ``"horizontal"``
    subtracts it.
    """

    length_mm: float = 5.0
    cut_angle_deg: float = 45.4
    temperature_c: float = 32.5
    optic_axis: Literal["horizontal", "vertical"] = "horizontal"

    def __post_init__(self):
        require_range(self.length_mm, "length_mm", 0.0, lo_open=True)
        require_range(self.cut_angle_deg, "cut_angle_deg", 0.0, 90.0, lo_open=True)
        require(self.optic_axis in ("horizontal", "vertical"), "optic_axis",
                f"must be 'horizontal' or 'vertical', got {self.optic_axis!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.optic_axis == "vertical" else -1.0


def _check_range(model: IndexModel, lambda_nm, temp_c):
    lam = np.asarray(lambda_nm, dtype=float)
    lo, hi = model.wavelength_range_nm
    if np.any(~np.isfinite(lam)) or np.any((lam < lo) | (lam > hi)):
        raise ParameterError("lambda_nm", f"wavelength outside model range [{lo}, {hi}] nm")
    t = np.asarray(temp_c, dtype=float)
    lo, hi = model.temperature_range_c
    if np.any(~np.isfinite(t)) or np.any((t < lo) | (t > hi)):
        raise ParameterError("temp_c", f"temperature outside model range [{lo}, {hi}] C")


def refractive_index(model: IndexModel, polarization: Literal["ordinary", "extraordinary"],
                     lambda_nm, temp_c):
    _check_range(model, lambda_nm, temp_c)
    if polarization == "ordinary":
        c = model.ordinary
    elif polarization == "extraordinary":
        c = model.extraordinary
    else:
        raise ParameterError("polarization", f"unknown polarization {polarization!r}")
    lam = np.asarray(lambda_nm, dtype=float) / 1000.0
    f = (np.asarray(temp_c, dtype=float) - 24.5) * (np.asarray(temp_c, dtype=float) + 570.82)
    l2 = lam ** 2
    n2 = (c["a1"] + c["b1"] * f
          + (c["a2"] + c["b2"] * f) / (l2 - (c["a3"] + c["b3"] * f) ** 2)
          + (c["a4"] + c["b4"] * f) / (l2 - c["a5"] ** 2)
          - c["a6"] * l2)
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


def angle_tuned_index(model: IndexModel, theta_deg, lambda_nm, temp_c):
    """Index of the extraordinary wave at angle theta to the optic axis."""
    no = refractive_index(model, "ordinary", lambda_nm, temp_c)
    ne = refractive_index(model, "extraordinary", lambda_nm, temp_c)
    t = np.radians(theta_deg)
    n = 1.0 / np.sqrt(np.cos(t) ** 2 / no ** 2 + np.sin(t) ** 2 / ne ** 2)
    return float(n) if np.ndim(n) == 0 else n


def phase_difference(lambda_s_nm, lambda_p_nm: float = 1064.0,
                     crystal_length_mm: float = 4.5,
                     model: IndexModel = MGO_LN_GAYER, temp_c: float = 75.0):
    """Phase of |VV> relative to |HH> behind the source crystals, in radians.

    The idler wavelength follows from energy conservation.
    """
    require_range(crystal_length_mm, "crystal_length_mm", 0.0)
    ls = np.asarray(lambda_s_nm, dtype=float)
    if np.any(ls <= lambda_p_nm):
        raise ParameterError("lambda_s_nm", "signal wavelength must exceed the pump wavelength")
    li = 1.0 / (1.0 / lambda_p_nm - 1.0 / ls)
    length_nm = crystal_length_mm * 1e6
    phi = 2 * math.pi * length_nm * (
        refractive_index(model, "ordinary", ls, temp_c) / ls
        + refractive_index(model, "ordinary", li, temp_c) / li
        - refractive_index(model, "extraordinary", lambda_p_nm, temp_c) / lambda_p_nm)
    return float(phi) if np.ndim(phi) == 0 else phi


def compensation_term(comp: CompensatorSpec, lambda_s_nm,
                      model: IndexModel = MGO_LN_GAYER, theta_deg=None, temp_c=None):
    """2 pi L (n_e(theta, T) - n_o(T)) / lambda_s, without the orientation sign.

    ``theta_deg`` and ``temp_c`` override the spec and may be arrays that
    broadcast against ``lambda_s_nm``.
    """
    theta = comp.cut_angle_deg if theta_deg is None else theta_deg
    temp = comp.temperature_c if temp_c is None else temp_c
    ls = np.asarray(lambda_s_nm, dtype=float)
    dn = (angle_tuned_index(model, theta, ls, temp)
          - refractive_index(model, "ordinary", ls, temp))
    return 2 * math.pi * comp.length_mm * 1e6 * dn / ls


def compensated_phase(delta_phi, comp: CompensatorSpec, lambda_s_nm,
                      model: IndexModel = MGO_LN_GAYER):
    out = np.asarray(delta_phi) + comp.sign * compensation_term(comp, lambda_s_nm, model)
    return float(out) if np.ndim(out) == 0 else out


def flatness(phase, axis=-1):
    """Peak-to-peak spread of a phase curve."""
    p = np.asarray(phase)
    return np.max(p, axis=axis) - np.min(p, axis=axis)


@dataclass(frozen=True)
class CompensationOptimum:
    free_param: str
    optimum: float
    flatness_before: float
    flatness_after: float
    flatness_uncompensated: float
    grid_optimum: float
    grid_flatness: float


_DEFAULT_RANGES = {"temperature": (20.0, 200.0), "tilt_angle": (10.0, 80.0)}
_DEFAULT_STEPS = {"temperature": 0.1, "tilt_angle": 0.01}


def optimize_compensation(free_param: Literal["temperature", "tilt_angle"],
                          search_range: Sequence[float] | None = None,
                          spectral_range_nm: Sequence[float] = (1547.0, 1563.0),
                          spec: CompensatorSpec = CompensatorSpec(),
                          source: SourceCrystal = SourceCrystal(),
                          model: IndexModel = MGO_LN_GAYER,
                          step: float | None = None,
                          n_wavelengths: int = 161) -> CompensationOptimum:
    """Grid scan plus bounded refinement of the compensated-phase flatness.

    The other parameter stays at its value in ``spec``.  On ties the lowest
    parameter value wins, and refinement is only accepted if it improves on
    the best grid point.
    """
    if free_param not in _DEFAULT_RANGES:
        raise ParameterError("free_param", f"unknown free parameter {free_param!r}")
    lo, hi = _DEFAULT_RANGES[free_param] if search_range is None else search_range
    step = _DEFAULT_STEPS[free_param] if step is None else step
    require(hi > lo, "search_range", "empty search range")
    require(spectral_range_nm[1] > spectral_range_nm[0], "spectral_range_nm",
            "empty spectral range")
    require(step > 0, "step", "must be positive")
    require(n_wavelengths >= 2, "n_wavelengths", "need at least two wavelengths")
    if free_param == "tilt_angle":
        require(lo > 0 and hi <= 90, "search_range", "tilt angles must lie in (0, 90]")

    ls = np.linspace(spectral_range_nm[0], spectral_range_nm[1], n_wavelengths)
    base = phase_difference(ls, source.pump_nm, source.length_mm, model, source.temperature_c)

    def curve(values):
        v = np.asarray(values, dtype=float)[..., None]
        if free_param == "temperature":
            term = compensation_term(spec, ls, model, temp_c=v)
        else:
            term = compensation_term(spec, ls, model, theta_deg=v)
        return base + spec.sign * term

    grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    flat_grid = flatness(curve(grid))
    i = int(np.argmin(flat_grid))
    best, best_flat = float(grid[i]), float(flat_grid[i])

    a, b = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, len(grid) - 1)])
    if b > a:
        res = minimize_scalar(lambda x: float(flatness(curve([x]))[0]), bounds=(a, b),
                              method="bounded", options={"xatol": step * 1e-4})
        refined, refined_flat = float(res.x), float(res.fun)
    else:
        refined, refined_flat = best, best_flat
    if refined_flat < best_flat:
        optimum, after = refined, refined_flat
    else:
        optimum, after = best, best_flat

    before = float(flatness(compensated_phase(base, spec, ls, model)))
    return CompensationOptimum(free_param, optimum, before, after,
                               float(flatness(base)), best, best_flat)


def phase_map(spec: CompensatorSpec = CompensatorSpec(),
              source: SourceCrystal = SourceCrystal(),
              model: IndexModel = MGO_LN_GAYER,
              spectral_range_nm: Sequence[float] = (1547.0, 1563.0),
              n_wavelengths: int = 161):
    """(lambda_s, delta_phi, delta_phi_c) arrays for tabulation."""
    ls = np.linspace(spectral_range_nm[0], spectral_range_nm[1], n_wavelengths)
    base = phase_difference(ls, source.pump_nm, source.length_mm, model, source.temperature_c)
    return ls, base, compensated_phase(base, spec, ls, model)


def walkoff_estimate(spec: CompensatorSpec = CompensatorSpec(), lambda_nm: float = 1555.0,
                     model: IndexModel = MGO_LN_GAYER) -> dict:
    """Spatial walk-off of the extraordinary signal beam in the compensator.

    tan rho = (n(theta)^2 / 2)(1/n_e^2 - 1/n_o^2) sin 2 theta
    """
    no = refractive_index(model, "ordinary", lambda_nm, spec.temperature_c)
    ne = refractive_index(model, "extraordinary", lambda_nm, spec.temperature_c)
    nt = angle_tuned_index(model, spec.cut_angle_deg, lambda_nm, spec.temperature_c)
    t = math.radians(spec.cut_angle_deg)
    tan_rho = 0.5 * nt ** 2 * (1 / ne ** 2 - 1 / no ** 2) * math.sin(2 * t)
    return {"walkoff_angle_deg": math.degrees(math.atan(abs(tan_rho))),
            "displacement_um": abs(tan_rho) * spec.length_mm * 1e3}
