"""Pulse-level Monte Carlo of the BBM92 experiment and the CHSH counting test.

Pair emission
    Each pump pulse populates two correlated mode pairs, one per outcome of
    whichever basis both parties measure.  With ``pair_statistics="thermal"``
    each mode pair holds a geometric number of pairs with mean mu/2; the
    total then follows the two-mode thermal law behind the analytic gain
    model, so the simulated gain and QBER converge to it exactly.
    ``"poisson"`` draws independent Poisson(mu/2) mode occupations, which is
    equivalent to independent pairs with Poisson total.

Measurement
    Bases are drawn uniformly and independently per pulse.  In matched bases
    Bob's photon of every pair leaves its mode with probability
    P(01) + P(10) taken from the Werner state's joint outcome table; in
    mismatched bases each of Bob's photons lands on a detector with the
    conditional marginal from the same table.  Photons are detected
    independently with the arm transmittance; threshold detectors only
    register whether at least one photon arrived.  Background clicks with
    probability Y0 per pulse hit a uniformly chosen detector.  Double clicks
    are squashed to a random bit (``"random"``) or dropped from the sifted
    key (``"discard"``).  The intrinsic detector error flips Bob's bit with
    probability ed.

Coincidences are pulse-slotted (the window is shorter than the pulse
period).  Accidentals are estimated from Alice's pulse k against Bob's
pulse k + 1.  Dead time and afterpulsing are not modelled.

Randomness is derived per fixed-size pulse block from (seed, block index),
so results do not depend on how blocks are distributed over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Literal, Sequence

import numpy as np

from ._validation import ParameterError, require, require_range
from .keyrate import LinkParams, binary_entropy
from .quantum_state import (DEFAULT_CHSH_ANGLES, PHI_MINUS, outcome_probabilities,
                            werner_mix)

__all__ = [
    "SimConfig",
    "CountsRecord",
    "SimTally",
    "SimReport",
    "CARResult",
    "ChshResult",
    "simulate_blocks",
    "simulate_run",
    "car_measurement",
    "chsh_from_counts",
    "sigma_of_S",
    "chsh_experiment",
]

#: Bit-0 analyzer angle of each basis, per party.  Bob's X-basis bit 0 sits
#: at -45 deg so that Phi- outcomes are correlated in both bases.
DEFAULT_BASIS_ANGLES = ((0.0, 0.0), (45.0, -45.0))

_CHSH_STREAM = 0x43485348


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_pulses: int = 1_000_000
    link: LinkParams = field(default_factory=LinkParams)
    visibility: float = 1.0
    visibility_x: float | None = None
    coincidence_window_s: float = 3.2e-9
    basis_angles: tuple = DEFAULT_BASIS_ANGLES
    chsh_angles: tuple = DEFAULT_CHSH_ANGLES
    double_click_policy: Literal["random", "discard"] = "random"
    pair_statistics: Literal["thermal", "poisson"] = "thermal"
    block_size: int = 1 << 18

    def __post_init__(self):
        require(isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2 ** 64,
                "seed", "must be an integer in [0, 2^64)")
        require(isinstance(self.n_pulses, (int, np.integer)) and self.n_pulses > 0,
                "n_pulses", "must be a positive integer")
        require_range(self.visibility, "visibility", 0.0, 1.0)
        if self.visibility_x is not None:
            require_range(self.visibility_x, "visibility_x", 0.0, 1.0)
        require_range(self.coincidence_window_s, "coincidence_window_s", 0.0, lo_open=True)
        require(self.coincidence_window_s <= 1.0 / self.link.rep_rate,
                "coincidence_window_s", "pulse-slotted model needs window <= pulse period")
        require(len(self.basis_angles) == 2 and all(len(b) == 2 for b in self.basis_angles),
                "basis_angles", "expected ((Z_alice, Z_bob), (X_alice, X_bob))")
        require(len(self.chsh_angles) == 4, "chsh_angles", "expected (a, a', b, b')")
        require(self.double_click_policy in ("random", "discard"), "double_click_policy",
                f"unknown policy {self.double_click_policy!r}")
        require(self.pair_statistics in ("thermal", "poisson"), "pair_statistics",
                f"unknown pair statistics {self.pair_statistics!r}")
        require(isinstance(self.block_size, (int, np.integer)) and self.block_size > 1,
                "block_size", "must be an integer > 1")

    @property
    def n_blocks(self) -> int:
        return -(-self.n_pulses // self.block_size)


@dataclass(frozen=True)
class CountsRecord:
    """Coincidence counts C[setting pair, outcome pair].

    Setting pairs follow (a,b), (a,b'), (a',b), (a',b'); outcome pairs
    follow (++, +-, -+, --).
    """

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c)
        if c.size != 16:
            raise ParameterError("c", f"expected 16 counts, got {c.size}")
        if np.any(c < 0):
            raise ParameterError("c", "counts must be non-negative")
        c = c.reshape(4, 4).astype(np.int64 if np.issubdtype(c.dtype, np.integer) else float)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    def flat(self) -> list:
        return self.c.ravel().tolist()


@dataclass
class SimTally:
    """Integer event counts; tallies of disjoint pulse blocks add up."""

    n_pulses: int = 0
    coincidences: int = 0
    sifted_z: int = 0
    sifted_x: int = 0
    errors_z: int = 0
    errors_x: int = 0
    double_clicks_a: int = 0
    double_clicks_b: int = 0
    singles_a: int = 0
    singles_b: int = 0
    accidentals: int = 0
    shifted_slots: int = 0

    def __add__(self, other: "SimTally") -> "SimTally":
        return SimTally(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                           for f in fields(self)})


def _ratio(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return math.nan, math.nan
    p = k / n
    return p, math.sqrt(p * (1 - p) / n)


@dataclass(frozen=True)
class SimReport:
    n_pulses: int
    coincidences: int
    sifted: int
    errors: int
    gain: float
    gain_err: float
    qber_total: float
    qber_total_err: float
    qber_z: float
    qber_z_err: float
    qber_x: float
    qber_x_err: float
    raw_rate: float
    sifted_rate: float
    secure_rate: float
    secure_rate_raw: float
    car: float
    car_err: float
    accidentals: int

    @classmethod
    def from_tally(cls, t: SimTally, link: LinkParams) -> "SimReport":
        sifted = t.sifted_z + t.sifted_x
        errors = t.errors_z + t.errors_x
        g, g_err = _ratio(t.coincidences, t.n_pulses)
        e, e_err = _ratio(errors, sifted)
        ez, ez_err = _ratio(t.errors_z, t.sifted_z)
        ex, ex_err = _ratio(t.errors_x, t.sifted_x)
        if math.isnan(e):
            r_raw = 0.0
        else:
            r_raw = link.q * g * (1 - (1 + link.f_ec) * binary_entropy(min(e, 1.0)))
        car, car_err = _car(t)
        return cls(
            n_pulses=t.n_pulses, coincidences=t.coincidences, sifted=sifted, errors=errors,
            gain=g, gain_err=g_err, qber_total=e, qber_total_err=e_err,
            qber_z=ez, qber_z_err=ez_err, qber_x=ex, qber_x_err=ex_err,
            raw_rate=g * link.rep_rate,
            sifted_rate=sifted / t.n_pulses * link.rep_rate,
            secure_rate=max(r_raw, 0.0) * link.rep_rate,
            secure_rate_raw=r_raw * link.rep_rate,
            car=car, car_err=car_err, accidentals=t.accidentals,
        )

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v
        return {k: clean(v) for k, v in asdict(self).items()}


def _car(t: SimTally) -> tuple[float, float]:
    if t.accidentals == 0 or t.coincidences == 0:
        return math.inf, math.inf
    true_rate = t.coincidences / t.n_pulses
    acc_rate = t.accidentals / t.shifted_slots
    ratio = true_rate / acc_rate
    return ratio - 1.0, ratio * math.sqrt(1 / t.coincidences + 1 / t.accidentals)


def _measurement_tables(cfg: SimConfig):
    """Per-basis-combination probabilities derived from the Werner state.

    Returns (flip[basis], p_bob0[alice basis, bob basis]) where ``flip`` is
    the probability that Bob's photon of a pair ends on the detector not
    correlated with Alice's in matched bases, and ``p_bob0`` is Bob's
    conditional probability of bit 0 in mismatched bases.
    """
    vis = (cfg.visibility, cfg.visibility if cfg.visibility_x is None else cfg.visibility_x)
    flip = np.empty(2)
    p_bob0 = np.full((2, 2), 0.5)
    for ba in range(2):
        rho = werner_mix(vis[ba], PHI_MINUS)
        for bb in range(2):
            p = outcome_probabilities(rho, cfg.basis_angles[ba][0], cfg.basis_angles[bb][1])
            if ba == bb:
                flip[ba] = p[0, 1] + p[1, 0]
            else:
                p_bob0[ba, bb] = p[0, 0] + p[1, 0]
    return flip, p_bob0


def _detect(rng, photons, eta):
    # P(at least one of k photons detected) = 1 - (1 - eta)^k
    if eta >= 1.0:
        return photons > 0
    p = -np.expm1(photons * math.log1p(-eta))
    return rng.random(photons.shape) < p


def _bits(rng, c0, c1):
    return np.where(c0 & ~c1, 0, np.where(c1 & ~c0, 1, rng.integers(0, 2, c0.shape)))


def _block(cfg: SimConfig, tables, index: int) -> SimTally:
    size = min(cfg.block_size, cfg.n_pulses - index * cfg.block_size)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(index,))))
    link = cfg.link
    lam = link.mu / 2
    if cfg.pair_statistics == "thermal":
        p = 1.0 / (1.0 + lam)
        k0 = rng.geometric(p, size) - 1
        k1 = rng.geometric(p, size) - 1
    else:
        k0 = rng.poisson(lam, size)
        k1 = rng.poisson(lam, size)
    bg_a = rng.random(size) < link.y0a
    bg_b = rng.random(size) < link.y0b

    active = np.flatnonzero((k0 + k1 > 0) | bg_a | bg_b)
    k0, k1, bg_a, bg_b = k0[active], k1[active], bg_a[active], bg_b[active]
    m = active.size
    basis_a = rng.integers(0, 2, m)
    basis_b = rng.integers(0, 2, m)
    matched = basis_a == basis_b

    flip, p_bob0 = tables
    flip_p = flip[basis_a]
    f0 = rng.binomial(k0, flip_p)
    f1 = rng.binomial(k1, flip_p)
    n = k0 + k1
    d0 = rng.binomial(n, p_bob0[basis_a, basis_b])
    bob0 = np.where(matched, k0 - f0 + f1, d0)
    bob1 = np.where(matched, k1 - f1 + f0, n - d0)

    a0 = _detect(rng, k0, link.eta_a)
    a1 = _detect(rng, k1, link.eta_a)
    b0 = _detect(rng, bob0, link.eta_b)
    b1 = _detect(rng, bob1, link.eta_b)
    side_a = rng.integers(0, 2, m)
    side_b = rng.integers(0, 2, m)
    a0 |= bg_a & (side_a == 0)
    a1 |= bg_a & (side_a == 1)
    b0 |= bg_b & (side_b == 0)
    b1 |= bg_b & (side_b == 1)

    click_a = a0 | a1
    click_b = b0 | b1
    coinc = click_a & click_b
    bit_a = _bits(rng, a0, a1)
    bit_b = _bits(rng, b0, b1) ^ (rng.random(m) < link.ed)
    double_a = a0 & a1
    double_b = b0 & b1

    sifted = coinc & matched
    if cfg.double_click_policy == "discard":
        sifted &= ~double_a & ~double_b
    wrong = sifted & (bit_a != bit_b)
    is_z = basis_a == 0

    full_a = np.zeros(size, dtype=bool)
    full_b = np.zeros(size, dtype=bool)
    full_a[active] = click_a
    full_b[active] = click_b

    return SimTally(
        n_pulses=size,
        coincidences=int(coinc.sum()),
        sifted_z=int((sifted & is_z).sum()),
        sifted_x=int((sifted & ~is_z).sum()),
        errors_z=int((wrong & is_z).sum()),
        errors_x=int((wrong & ~is_z).sum()),
        double_clicks_a=int(double_a.sum()),
        double_clicks_b=int(double_b.sum()),
        singles_a=int(click_a.sum()),
        singles_b=int(click_b.sum()),
        accidentals=int((full_a[:-1] & full_b[1:]).sum()),
        shifted_slots=size - 1,
    )


def simulate_blocks(cfg: SimConfig, blocks: Iterable[int]) -> SimTally:
    """Tally for a subset of pulse blocks; disjoint subsets sum to the full run."""
    tables = _measurement_tables(cfg)
    total = SimTally()
    for index in blocks:
        if not 0 <= index < cfg.n_blocks:
            raise ParameterError("blocks", f"block index {index} out of range")
        total = total + _block(cfg, tables, index)
    return total


def simulate_run(cfg: SimConfig, workers: int | None = None) -> SimReport:
    """Simulate ``cfg.n_pulses`` pulses and summarize them."""
    indices = range(cfg.n_blocks)
    if workers and workers > 1:
        tables = _measurement_tables(cfg)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda i: _block(cfg, tables, i), indices))
        tally = sum(parts, SimTally())
    else:
        tally = simulate_blocks(cfg, indices)
    return SimReport.from_tally(tally, cfg.link)


@dataclass(frozen=True)
class CARResult:
    car: float
    car_err: float
    coincidences: int
    accidentals: int


def car_measurement(cfg: SimConfig) -> CARResult:
    """Net coincidences over accidentals from the one-pulse-shifted window.

    ``inf`` signals that no accidental was observed.
    """
    tally = simulate_blocks(cfg, range(cfg.n_blocks))
    car, err = _car(tally)
    return CARResult(car, err, tally.coincidences, tally.accidentals)


_OUTCOME_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])
_SETTING_SIGNS = np.array([1.0, -1.0, 1.0, 1.0])


def _correlations(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    totals = c.sum(axis=1).astype(float)
    if np.any(totals == 0):
        raise ZeroDivisionError("a setting pair has zero total coincidences")
    return (c * _OUTCOME_SIGNS).sum(axis=1) / totals, totals


def chsh_from_counts(counts: CountsRecord) -> float:
    """S from the four correlation estimators E = (C++ + C-- - C+- - C-+)/N."""
    e, _ = _correlations(counts.c)
    return float(_SETTING_SIGNS @ e)


def sigma_of_S(counts: CountsRecord) -> float:
    """Poisson error of S propagated through every C_j.

    dS/dC_j = sign_k (s_j - E_k)/N_k for count j of setting pair k, and
    sigma_{C_j} = sqrt(C_j).
    """
    e, totals = _correlations(counts.c)
    partial = _SETTING_SIGNS[:, None] * (_OUTCOME_SIGNS[None, :] - e[:, None]) / totals[:, None]
    return float(np.sqrt(np.sum(counts.c * partial ** 2)))


@dataclass(frozen=True)
class ChshResult:
    S: float
    sigma_S: float
    counts: CountsRecord


def chsh_experiment(cfg: SimConfig, counts_target_per_setting: float,
                    seed: int | None = None) -> ChshResult:
    """Accumulate the 16 coincidence counts at the configured CHSH angles.

    Each C_j is Poisson with mean ``counts_target_per_setting`` times the
    joint outcome probability of the Werner(visibility, Phi-) state.
    """
    require_range(counts_target_per_setting, "counts_target_per_setting", 0.0, lo_open=True)
    seed = cfg.seed if seed is None else seed
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(_CHSH_STREAM,))))
    rho = werner_mix(cfg.visibility, PHI_MINUS)
    a, a2, b, b2 = cfg.chsh_angles
    probs = np.array([outcome_probabilities(rho, x, y).ravel()
                      for x, y in ((a, b), (a, b2), (a2, b), (a2, b2))])
    counts = CountsRecord(rng.poisson(counts_target_per_setting * probs))
    return ChshResult(chsh_from_counts(counts), sigma_of_S(counts), counts)
