"""Asymptotic BBM92 secret key rate for a pair source between two lossy arms.

    R >= q Q [1 - f H2(E) - H2(E)]

with the overall gain Q and QBER E of a two-mode pair source whose arms
have total transmittances eta_A, eta_B and background yields Y0A, Y0B.
The bound is treated as an equality.  All core functions broadcast over
numpy arrays so the channel sweeps evaluate a whole grid at once.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import brentq

from ._validation import ParameterError, require_range
from .channel import (BackgroundParams, FiberChannel, FreeSpaceChannel, ETA0_B,
                      fiber_transmissivity, free_space_transmissivity,
                      solar_background_yield)

__all__ = [
    "LinkParams",
    "KeyRateResult",
    "KeyRateGrid",
    "binary_entropy",
    "gain",
    "qber",
    "overall_gain",
    "overall_qber",
    "key_rate_per_pulse",
    "secret_key_rate",
    "secure_rate_from_sifted",
    "qber_threshold",
    "link_for_lengths",
    "sweep_hybrid",
    "fiber_crossover_km",
]


@dataclass(frozen=True)
class LinkParams:
    """Parameters of the key-rate model.

    ``eta_a``/``eta_b`` are overall transmittances (channel times the
    receiver-internal ``eta0_a``/``eta0_b``).  Defaults are the laboratory
    operating point at zero channel length.
    """

    mu: float = 0.03
    eta_a: float = 0.042
    eta_b: float = ETA0_B
    eta0_a: float = 0.042
    eta0_b: float = ETA0_B
    y0a: float = 3e-5
    y0b: float = solar_background_yield(BackgroundParams())
    e0: float = 0.5
    ed: float = 0.015
    f_ec: float = 1.16
    q: float = 0.5
    rep_rate: float = 100e6

    def __post_init__(self):
        require_range(self.mu, "mu", 0.0)
        for name in ("eta_a", "eta_b", "eta0_a", "eta0_b", "y0a", "y0b", "e0", "ed"):
            require_range(getattr(self, name), name, 0.0, 1.0)
        require_range(self.e0, "e0", 0.0, 0.5)
        require_range(self.ed, "ed", 0.0, 0.5)
        require_range(self.f_ec, "f_ec", 1.0)
        require_range(self.q, "q", 0.0, 1.0, lo_open=True)
        require_range(self.rep_rate, "rep_rate", 0.0, lo_open=True)


@dataclass(frozen=True)
class KeyRateResult:
    gain_q: float
    qber_e: float
    rate_per_pulse: float
    rate_bits_per_s: float

    @property
    def secure(self) -> bool:
        return self.rate_per_pulse > 0

    @property
    def rate_per_pulse_floored(self) -> float:
        return max(self.rate_per_pulse, 0.0)

    @property
    def rate_bits_per_s_floored(self) -> float:
        return max(self.rate_bits_per_s, 0.0)


@dataclass(frozen=True)
class KeyRateGrid:
    """Sweep results; arrays are indexed [fiber, space]."""

    fiber_km: np.ndarray
    space_km: np.ndarray
    gain_q: np.ndarray
    qber_e: np.ndarray
    rate_per_pulse: np.ndarray
    rate_bits_per_s: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.gain_q.shape

    def cell(self, i: int, j: int) -> KeyRateResult:
        return KeyRateResult(float(self.gain_q[i, j]), float(self.qber_e[i, j]),
                             float(self.rate_per_pulse[i, j]),
                             float(self.rate_bits_per_s[i, j]))

    def rows(self) -> Iterator[tuple[float, float, KeyRateResult]]:
        """Row-major (fiber outer, space inner) iteration."""
        for i, lf in enumerate(self.fiber_km):
            for j, ls in enumerate(self.space_km):
                yield float(lf), float(ls), self.cell(i, j)


def binary_entropy(x):
    """H2(x) = -x log2 x - (1-x) log2(1-x), with H2(0) = H2(1) = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise ParameterError("x", "binary entropy argument must lie in [0, 1]")
    inner = (arr > 0) & (arr < 1)
    safe = np.where(inner, arr, 0.5)
    h = -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe)
    h = np.where(inner, h, 0.0)
    return float(h) if h.ndim == 0 else h


def gain(mu, eta_a, eta_b, y0a, y0b):
    """Probability that both parties register a click in a pulse.

    Evaluates

        1 - (1-Y0A)/(1+h_A)^2 - (1-Y0B)/(1+h_B)^2 + (1-Y0A)(1-Y0B)/(1+h_A+h_B-eta_A eta_B mu/2)^2

    with h = eta mu/2, regrouped so that no O(1) terms cancel: the joint
    denominator factors as (1+h_B)(1+d) with d = h_A (1-eta_B)/(1+h_B).
    """
    mu, eta_a, eta_b, y0a, y0b = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mu, eta_a, eta_b, y0a, y0b)))
    ha = eta_a * mu / 2
    hb = eta_b * mu / 2
    d = ha * (1 - eta_b) / (1 + hb)

    def one_minus_inv_sq(x):
        return -np.expm1(-2 * np.log1p(x))

    click_a = y0a + (1 - y0a) * one_minus_inv_sq(ha)
    b_minus_joint = (1 - y0b) / (1 + hb) ** 2 * (y0a + (1 - y0a) * one_minus_inv_sq(d))
    q = click_a - b_minus_joint
    return float(q) if q.ndim == 0 else q


def qber(mu, eta_a, eta_b, y0a, y0b, e0, ed, q_gain=None):
    if q_gain is None:
        q_gain = gain(mu, eta_a, eta_b, y0a, y0b)
    if np.any(np.asarray(q_gain) <= 0):
        raise ZeroDivisionError("QBER undefined for zero gain")
    ha = eta_a * mu / 2
    hb = eta_b * mu / 2
    joint = 1 + ha + hb - eta_a * eta_b * mu / 2
    corr = eta_a * eta_b * mu * (1 + mu / 2) / ((1 + ha) * (1 + hb) * joint)
    return e0 - (e0 - ed) * corr / q_gain


def key_rate_per_pulse(q_gain, e, f_ec, q=0.5):
    """q Q [1 - f H2(E) - H2(E)]; negative values are kept."""
    h = binary_entropy(np.clip(e, 0.0, 1.0))
    return q * q_gain * (1 - f_ec * h - h)


def overall_gain(p: LinkParams) -> float:
    return float(gain(p.mu, p.eta_a, p.eta_b, p.y0a, p.y0b))


def overall_qber(p: LinkParams) -> float:
    return float(qber(p.mu, p.eta_a, p.eta_b, p.y0a, p.y0b, p.e0, p.ed))


def secret_key_rate(p: LinkParams) -> KeyRateResult:
    q_gain = overall_gain(p)
    e = float(qber(p.mu, p.eta_a, p.eta_b, p.y0a, p.y0b, p.e0, p.ed, q_gain))
    r = float(key_rate_per_pulse(q_gain, e, p.f_ec, p.q))
    return KeyRateResult(q_gain, e, r, r * p.rep_rate)


def secure_rate_from_sifted(sifted_rate: float, e: float, f_ec: float = 1.16) -> float:
    """Secure rate from a measured sifted rate (already including q) and QBER."""
    return sifted_rate * (1 - (1 + f_ec) * binary_entropy(e))


def qber_threshold(f_ec: float = 1.16) -> float:
    """QBER at which 1 - f H2(E) - H2(E) changes sign."""
    return brentq(lambda e: 1 - (1 + f_ec) * binary_entropy(e), 1e-9, 0.5)


def link_for_lengths(base: LinkParams, fiber_km: float, space_km: float,
                     fiber: FiberChannel = FiberChannel(),
                     free_space: FreeSpaceChannel = FreeSpaceChannel(),
                     background: BackgroundParams = BackgroundParams()) -> LinkParams:
    """``base`` with channel transmittances and Bob's background filled in."""
    eta_f = fiber_transmissivity(replace(fiber, length_km=fiber_km))
    eta_s = free_space_transmissivity(free_space, space_km * 1e3)
    return replace(base, eta_a=base.eta0_a * eta_f, eta_b=base.eta0_b * eta_s,
                   y0b=solar_background_yield(background))


def sweep_hybrid(fiber_km: Sequence[float], space_km: Sequence[float],
                 base: LinkParams = LinkParams(),
                 fiber: FiberChannel = FiberChannel(),
                 free_space: FreeSpaceChannel = FreeSpaceChannel(),
                 background: BackgroundParams = BackgroundParams()) -> KeyRateGrid:
    """Key rate over a (fiber length, free-space length) grid in km.

    Alice's arm is the fiber, Bob's the free-space link; Bob's background
    yield comes from the solar model.  Each cell is independent.
    """
    lf = np.asarray(fiber_km, dtype=float).reshape(-1)
    ls = np.asarray(space_km, dtype=float).reshape(-1)
    if lf.size == 0 or ls.size == 0:
        raise ParameterError("grid", "sweep grids must be non-empty")
    eta_a = base.eta0_a * 10.0 ** (-fiber.loss_db_per_km * lf / 10.0)
    eta_b = base.eta0_b * np.atleast_1d(free_space_transmissivity(free_space, ls * 1e3))
    ea, eb = np.meshgrid(eta_a, eta_b, indexing="ij")
    y0b = solar_background_yield(background)
    q_gain = gain(base.mu, ea, eb, base.y0a, y0b)
    e = qber(base.mu, ea, eb, base.y0a, y0b, base.e0, base.ed, q_gain)
    r = key_rate_per_pulse(q_gain, e, base.f_ec, base.q)
    return KeyRateGrid(lf, ls, q_gain, e, r, r * base.rep_rate)


def fiber_crossover_km(space_km: float, base: LinkParams = LinkParams(),
                       fiber: FiberChannel = FiberChannel(),
                       free_space: FreeSpaceChannel = FreeSpaceChannel(),
                       background: BackgroundParams = BackgroundParams(),
                       max_km: float = 1000.0) -> float:
    """Fiber length at which the key rate reaches zero for a fixed free-space length.

    Returns 0.0 if the rate is already non-positive without fiber and
    ``inf`` if it is still positive at ``max_km``.
    """
    def rate(lf):
        return sweep_hybrid([lf], [space_km], base, fiber, free_space,
                            background).rate_per_pulse[0, 0]

    if rate(0.0) <= 0:
        return 0.0
    if rate(max_km) > 0:
        return float("inf")
    return brentq(rate, 0.0, max_km, xtol=1e-9)
