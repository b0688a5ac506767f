"""Loss and background models for Alice's fiber and Bob's free-space channel.

Turbulence, beam wander and pointing error are not modelled.  The free-space
transmissivity is diffraction at the receiver aperture times an exponential
atmospheric extinction profile alpha(h) = alpha0 exp(-h / scale_height).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._validation import ParameterError, require, require_range

__all__ = [
    "FiberChannel",
    "FreeSpaceChannel",
    "BackgroundParams",
    "DEFAULT_SCALE_HEIGHT_M",
    "ETA0_B",
    "FUC_GATE_FRACTION",
    "fiber_transmissivity",
    "beam_radius_at_receiver",
    "diffraction_transmissivity",
    "atmospheric_transmissivity",
    "free_space_transmissivity",
    "photon_collection_factor",
    "solar_background_yield",
    "link_budget",
]

#: Extinction scale height; not given with the extinction coefficient and
#: therefore reported alongside every link budget.
DEFAULT_SCALE_HEIGHT_M = 6600.0

#: Bob's receiver-internal detection efficiency.
ETA0_B = 0.0023

#: Upconversion only acts on background photons that overlap the 100 ps
#: FUC pump pulse inside the 1 ns detection window.
FUC_GATE_FRACTION = 100e-12 / 1e-9


@dataclass(frozen=True)
class FiberChannel:
    loss_db_per_km: float = 0.18
    length_km: float = 0.0

    def __post_init__(self):
        require_range(self.loss_db_per_km, "loss_db_per_km", 0.0)
        require_range(self.length_km, "length_km", 0.0)


@dataclass(frozen=True)
class FreeSpaceChannel:
    """Free-space channel geometry.

    ``vertical`` paths integrate the extinction profile from the ground up
    to altitude ``path_length_m``; ``altitude_m`` is ignored.  ``horizontal``
    paths run at constant altitude ``altitude_m``.
    """

    receiver_radius_m: float = 0.5
    beam_waist_m: float = 0.5
    path_length_m: float = 0.0
    altitude_m: float = 0.0
    wavelength_nm: float = 3370.0
    extinction_sea_level_per_m: float = 8.1e-5
    scale_height_m: float = DEFAULT_SCALE_HEIGHT_M
    geometry: Literal["vertical", "horizontal"] = "vertical"

    def __post_init__(self):
        require_range(self.receiver_radius_m, "receiver_radius_m", 0.0, lo_open=True)
        require_range(self.beam_waist_m, "beam_waist_m", 0.0, lo_open=True)
        require_range(self.path_length_m, "path_length_m", 0.0)
        require_range(self.altitude_m, "altitude_m", 0.0)
        require_range(self.wavelength_nm, "wavelength_nm", 0.0, lo_open=True)
        require_range(self.extinction_sea_level_per_m, "extinction_sea_level_per_m", 0.0)
        require_range(self.scale_height_m, "scale_height_m", 0.0, lo_open=True)
        require(self.geometry in ("vertical", "horizontal"), "geometry",
                f"must be 'vertical' or 'horizontal', got {self.geometry!r}")


@dataclass(frozen=True)
class BackgroundParams:
    """Daytime solar background at Bob's receiver.

    ``detector_eff`` defaults to ETA0_B scaled by the upconversion time gate.
    """

    kappa: float = 0.3
    solar_irradiance: float = 2.85e17  # photons m^-2 s^-1 nm^-1 sr^-1
    filter_bandwidth_nm: float = 5.0
    time_window_s: float = 1e-9
    fov_sr: float = 1e-10
    receiver_radius_m: float = 0.5
    detector_eff: float = ETA0_B * FUC_GATE_FRACTION
    excess_noise: float = 2e-5

    def __post_init__(self):
        require_range(self.kappa, "kappa", 0.0, 1.0)
        for name in ("solar_irradiance", "filter_bandwidth_nm", "time_window_s",
                     "fov_sr", "receiver_radius_m", "excess_noise"):
            require_range(getattr(self, name), name, 0.0)
        require_range(self.detector_eff, "detector_eff", 0.0, 1.0)


def fiber_transmissivity(ch: FiberChannel) -> float:
    return 10.0 ** (-ch.loss_db_per_km * ch.length_km / 10.0)


def beam_radius_at_receiver(w0, z, wavelength_m):
    """Gaussian spot radius w(z) = w0 sqrt(1 + (z lambda / (pi w0^2))^2), all in m."""
    if np.any(np.asarray(w0) <= 0):
        raise ParameterError("w0", "beam waist must be positive")
    return w0 * np.sqrt(1.0 + (z * wavelength_m / (math.pi * w0 ** 2)) ** 2)


def diffraction_transmissivity(a_r, w_z):
    return 1.0 - np.exp(-2.0 * a_r ** 2 / w_z ** 2)


def _atmosphere(alpha0, scale_height, z, altitude, geometry):
    if geometry == "vertical":
        # closed form of the integral of alpha0 exp(-h/scale_height) over 0..z
        return np.exp(-alpha0 * scale_height * -np.expm1(-z / scale_height))
    return np.exp(-alpha0 * math.exp(-altitude / scale_height) * z)


def atmospheric_transmissivity(ch: FreeSpaceChannel) -> float:
    return float(_atmosphere(ch.extinction_sea_level_per_m, ch.scale_height_m,
                             ch.path_length_m, ch.altitude_m, ch.geometry))


def free_space_transmissivity(ch: FreeSpaceChannel, path_length_m=None):
    """eta_d * eta_atm.  ``path_length_m`` may be an array overriding the channel's."""
    z = ch.path_length_m if path_length_m is None else np.asarray(path_length_m, dtype=float)
    w_z = beam_radius_at_receiver(ch.beam_waist_m, z, ch.wavelength_nm * 1e-9)
    eta = diffraction_transmissivity(ch.receiver_radius_m, w_z) * _atmosphere(
        ch.extinction_sea_level_per_m, ch.scale_height_m, z, ch.altitude_m, ch.geometry)
    return float(eta) if np.ndim(eta) == 0 else eta


def photon_collection_factor(p: BackgroundParams) -> float:
    """Gamma_R = d_lambda * d_t * Omega_fov * a_R^2."""
    return p.filter_bandwidth_nm * p.time_window_s * p.fov_sr * p.receiver_radius_m ** 2


def solar_background_yield(p: BackgroundParams) -> float:
    """Y0B = eta_eff * kappa * H_sun * Gamma_R + n_ex, per pulse."""
    n_b = p.kappa * p.solar_irradiance * photon_collection_factor(p)
    return p.detector_eff * n_b + p.excess_noise


def link_budget(fiber: FiberChannel, free_space: FreeSpaceChannel,
                background: BackgroundParams) -> dict:
    """Every intermediate quantity of the two channels plus the modelling assumptions."""
    w_z = float(beam_radius_at_receiver(free_space.beam_waist_m, free_space.path_length_m,
                                        free_space.wavelength_nm * 1e-9))
    gamma = photon_collection_factor(background)
    n_b = background.kappa * background.solar_irradiance * gamma
    return {
        "eta_fiber": fiber_transmissivity(fiber),
        "w_z_m": w_z,
        "eta_diffraction": float(diffraction_transmissivity(free_space.receiver_radius_m, w_z)),
        "eta_atm": atmospheric_transmissivity(free_space),
        "eta_space": free_space_transmissivity(free_space),
        "gamma_r": gamma,
        "n_background": n_b,
        "y0b": solar_background_yield(background),
        "assumptions": {
            "scale_height_m": free_space.scale_height_m,
            "geometry": free_space.geometry,
            "background_detector_eff": background.detector_eff,
        },
    }
