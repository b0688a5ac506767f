import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hybridqkd import ParameterError
from hybridqkd.keyrate import LinkParams, overall_gain, overall_qber
from hybridqkd.protocol_sim import (
    CountsRecord, SimConfig, car_measurement, chsh_experiment, chsh_from_counts, sigma_of_S,
    simulate_blocks, simulate_run,
)

BRIGHT = LinkParams(mu=0.05, eta_a=0.4, eta_b=0.3, y0a=2e-4, y0b=1e-4)


def within(value, expected, sigma, k=3.0):
    return abs(value - expected) <= k * sigma


def test_determinism_and_seed_sensitivity():
    cfg = SimConfig(seed=7, n_pulses=400_000, link=BRIGHT, block_size=50_000)
    a, b = simulate_run(cfg), simulate_run(cfg)
    assert a == b
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert simulate_run(replace(cfg, seed=8)) != a


def test_partition_independence():
    cfg = SimConfig(seed=3, n_pulses=300_001, link=BRIGHT, block_size=10_000)
    whole = simulate_blocks(cfg, range(cfg.n_blocks))
    even = simulate_blocks(cfg, range(0, cfg.n_blocks, 2))
    odd = simulate_blocks(cfg, range(1, cfg.n_blocks, 2))
    assert even + odd == whole
    assert odd + even == whole
    assert whole.n_pulses == 300_001
    assert simulate_run(cfg, workers=4) == simulate_run(cfg)
    with pytest.raises(ParameterError):
        simulate_blocks(cfg, [cfg.n_blocks])


def test_perfect_correlations_give_zero_qber():
    link = LinkParams(mu=0.1, eta_a=1.0, eta_b=1.0, y0a=0, y0b=0, ed=0)
    cfg = SimConfig(seed=1, n_pulses=200_000, link=link, double_click_policy="discard")
    r = simulate_run(cfg)
    assert r.sifted > 1000
    assert r.errors == 0 and r.qber_total == 0.0


def test_sifting_keeps_half():
    r = simulate_run(SimConfig(seed=2, n_pulses=1_000_000, link=BRIGHT))
    p, sig = r.sifted / r.coincidences, math.sqrt(0.25 / r.coincidences)
    assert within(p, 0.5, sig)
    assert r.sifted_rate <= r.raw_rate
    assert 0 <= r.qber_total <= 1


@pytest.mark.parametrize("seed,link", [
    (11, BRIGHT),
    (12, LinkParams(mu=0.2, eta_a=0.2, eta_b=0.5, y0a=1e-3, y0b=5e-4, ed=0.03)),
    (13, LinkParams(mu=0.03, eta_a=0.042 * 10, eta_b=0.0023 * 100, y0a=3e-5, y0b=2.2e-5)),
])
def test_matches_analytic_gain_and_qber(seed, link):
    r = simulate_run(SimConfig(seed=seed, n_pulses=2_000_000, link=link))
    assert within(r.gain, overall_gain(link), r.gain_err)
    assert within(r.qber_total, overall_qber(link), r.qber_total_err)


def test_poisson_pair_statistics_match_poisson_oracle():
    link = LinkParams(mu=0.3, eta_a=0.5, eta_b=0.4, y0a=1e-3, y0b=2e-3)
    r = simulate_run(SimConfig(seed=5, n_pulses=1_000_000, link=link, pair_statistics="poisson"))
    mu, ea, eb, ya, yb = link.mu, link.eta_a, link.eta_b, link.y0a, link.y0b
    q = (1 - (1 - ya) * math.exp(-mu * ea) - (1 - yb) * math.exp(-mu * eb)
         + (1 - ya) * (1 - yb) * math.exp(-mu * (ea + eb - ea * eb)))
    assert within(r.gain, q, r.gain_err)
    assert abs(overall_gain(link) - q) > 0.005 * q


def test_werner_visibility_qber():
    link = LinkParams(mu=0.002, eta_a=0.8, eta_b=0.8, y0a=0, y0b=0, ed=0)
    r = simulate_run(SimConfig(seed=9, n_pulses=4_000_000, link=link, visibility=0.912))
    assert within(r.qber_total, (1 - 0.912) / 2, r.qber_total_err)
    assert (1 - 0.912) / 2 == pytest.approx(0.044)


def test_per_basis_visibility_hook():
    link = LinkParams(mu=0.002, eta_a=0.8, eta_b=0.8, y0a=0, y0b=0, ed=0)
    r = simulate_run(SimConfig(seed=4, n_pulses=4_000_000, link=link, visibility=1.0,
                               visibility_x=0.9))
    assert r.qber_z < 0.003
    assert within(r.qber_x, 0.05, r.qber_x_err)


def test_config_validation():
    with pytest.raises(ParameterError) as err:
        SimConfig(n_pulses=0)
    assert err.value.field == "n_pulses"
    with pytest.raises(ParameterError):
        SimConfig(coincidence_window_s=2e-8)
    with pytest.raises(ParameterError):
        SimConfig(double_click_policy="keep")
    with pytest.raises(ParameterError):
        SimConfig(pair_statistics="uniform")


def _car_oracle(mu, ea, eb):
    # threshold detectors, two-mode thermal pairs, no background
    click = lambda eta: -math.expm1(-2 * math.log1p(eta * mu / 2))
    q = overall_gain(LinkParams(mu=mu, eta_a=ea, eta_b=eb, y0a=0, y0b=0))
    return q / (click(ea) * click(eb)) - 1


def test_noise_free_car():
    mu = 0.02
    link = LinkParams(mu=mu, eta_a=0.5, eta_b=0.5, y0a=0, y0b=0)
    res = car_measurement(SimConfig(seed=21, n_pulses=20_000_000, link=link))
    assert within(res.car, 1 / mu, res.car_err)
    assert within(res.car, _car_oracle(mu, 0.5, 0.5), res.car_err)


def test_car_falls_with_mu():
    cars = []
    for mu in (0.01, 0.1):
        link = LinkParams(mu=mu, eta_a=0.5, eta_b=0.5, y0a=0, y0b=0)
        cars.append(car_measurement(SimConfig(seed=22, n_pulses=4_000_000, link=link)).car)
    assert cars[0] > cars[1]


def test_no_accidentals_gives_infinite_car():
    link = LinkParams(mu=1e-4, eta_a=0.01, eta_b=0.01, y0a=0, y0b=0)
    res = car_measurement(SimConfig(seed=1, n_pulses=100_000, link=link))
    assert res.car == math.inf
    assert simulate_run(SimConfig(seed=1, n_pulses=100_000, link=link)).to_dict()["car"] is None


def test_equal_counts_chsh():
    n = 10_000
    c = CountsRecord(np.full(16, n))
    assert chsh_from_counts(c) == 0.0
    assert sigma_of_S(c) == pytest.approx(1 / math.sqrt(n), rel=1e-12)


def test_sigma_scaling_and_positivity():
    rng = np.random.default_rng(0)
    counts = rng.integers(50, 500, 16)
    s1 = sigma_of_S(CountsRecord(counts))
    assert s1 > 0
    assert sigma_of_S(CountsRecord(4 * counts)) == pytest.approx(s1 / 2, rel=1e-12)


def test_sigma_matches_finite_difference_propagation():
    rng = np.random.default_rng(1)
    c = rng.uniform(100, 1000, 16)
    grad = np.empty(16)
    h = 1e-4
    for j in range(16):
        up, dn = c.copy(), c.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (chsh_from_counts(CountsRecord(up)) - chsh_from_counts(CountsRecord(dn))) / (2 * h)
    expected = math.sqrt(np.sum(c * grad ** 2))
    assert sigma_of_S(CountsRecord(c)) == pytest.approx(expected, rel=1e-6)


def test_counts_record_validation():
    with pytest.raises(ParameterError):
        CountsRecord(np.ones(15))
    with pytest.raises(ParameterError):
        CountsRecord(-np.ones(16))
    zero_pair = np.ones(16)
    zero_pair[4:8] = 0
    with pytest.raises(ZeroDivisionError):
        chsh_from_counts(CountsRecord(zero_pair))


def test_chsh_ideal_state():
    res = chsh_experiment(SimConfig(seed=3, visibility=1.0), 250_000)
    assert res.counts.c.sum() == pytest.approx(1e6, rel=0.01)
    assert within(res.S, 2 * math.sqrt(2), res.sigma_S)


def test_chsh_deterministic():
    cfg = SimConfig(seed=5, visibility=0.958)
    assert chsh_experiment(cfg, 1000).counts.flat() == chsh_experiment(cfg, 1000).counts.flat()
