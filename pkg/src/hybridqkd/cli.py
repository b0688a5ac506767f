"""``hybridqkd`` command-line front end.

Exit codes: 0 success, 1 numerical failure (error JSON on stderr),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import ParameterError
from .channel import link_budget
from .compensation import MGO_LN_GAYER, optimize_compensation, phase_map, walkoff_estimate
from .config import RunConfig, SweepSection, load_config
from .keyrate import secret_key_rate, sweep_hybrid
from .protocol_sim import chsh_experiment, simulate_run
from .quantum_state import PHI_MINUS, werner_mix
from .tomography import TomoCounts, mle_reconstruct, simulate_tomo_counts

__all__ = ["main", "build_parser", "parse_grid"]

SUBCOMMANDS = ("keyrate", "sweep", "simulate", "chsh", "tomo", "compensate", "linkbudget")
_CSV_FMT = "%.8e"


class NumericalFailure(RuntimeError):
    pass


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return value


def parse_grid(text: str) -> dict:
    """``fiber=a:b:s,space=a:b:s`` (km) -> {"fiber_km": (a, b, s), ...}."""
    out = {}
    for part in text.split(","):
        key, sep, spec = part.partition("=")
        key = key.strip()
        if not sep or key not in ("fiber", "space"):
            raise ParameterError("grid", f"expected fiber=... or space=..., got {part!r}")
        try:
            start, stop, step = (float(x) for x in spec.split(":"))
        except ValueError:
            raise ParameterError("grid", f"expected start:stop:step, got {spec!r}") from None
        out[f"{key}_km"] = (start, stop, step)
    return out


def _axis(start: float, stop: float, step: float) -> np.ndarray:
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (laboratory preset if omitted)")
    common.add_argument("--out", help="output file (directory for compensate); stdout if omitted")
    common.add_argument("--seed", type=_u64, help="RNG seed for randomized subcommands")
    common.add_argument("--grid", help="sweep grid, fiber=start:stop:step,space=start:stop:step in km")
    common.add_argument("--geometry", choices=("vertical", "horizontal"),
                        help="free-space path geometry")
    parser = argparse.ArgumentParser(prog="hybridqkd",
                                     description="BBM92 hybrid fiber/free-space QKD toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    helps = {
        "keyrate": "analytic key rate at the configured channel lengths (JSON)",
        "sweep": "key rate over a fiber x free-space grid (CSV)",
        "simulate": "Monte Carlo BBM92 run (JSON)",
        "chsh": "simulated CHSH measurement (JSON)",
        "tomo": "maximum-likelihood state tomography (JSON)",
        "compensate": "phase-compensation optimization (CSV phase map + JSON optimum)",
        "linkbudget": "channel transmissivities and background yield (JSON)",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_CSV_FMT % v for v in row])
    return buf.getvalue()


def _cmd_keyrate(cfg: RunConfig, args) -> str:
    link = cfg.link_params()
    res = secret_key_rate(link)
    return _json({
        "Q": res.gain_q, "E": res.qber_e,
        "R_per_pulse": res.rate_per_pulse, "R_bits_per_s": res.rate_bits_per_s,
        "secure": res.secure,
        "R_per_pulse_floored": res.rate_per_pulse_floored,
        "R_bits_per_s_floored": res.rate_bits_per_s_floored,
        "fiber_km": cfg.fiber.length_km, "space_km": cfg.free_space.path_length_m / 1e3,
    })


def _cmd_sweep(cfg: RunConfig, args) -> str:
    grid = cfg.sweep
    if args.grid:
        try:
            grid = replace(grid, **parse_grid(args.grid))
        except ParameterError as exc:
            raise ParameterError(f"grid.{exc.field}" if exc.field != "grid" else "grid",
                                 exc.message) from None
    res = sweep_hybrid(_axis(*grid.fiber_km), _axis(*grid.space_km), cfg.base_link(),
                       cfg.fiber, cfg.free_space, cfg.background)
    rows = ((lf, ls, r.gain_q, r.qber_e, r.rate_per_pulse_floored, r.rate_bits_per_s_floored)
            for lf, ls, r in res.rows())
    return _csv(("fiber_km", "space_km", "Q", "E", "R_per_pulse", "R_bits_per_s"), rows)


def _cmd_simulate(cfg: RunConfig, args) -> str:
    sim = cfg.sim_config(args.seed)
    report = simulate_run(sim, workers=cfg.simulation.workers)
    return _json({"seed": sim.seed, **report.to_dict()})


def _cmd_chsh(cfg: RunConfig, args) -> str:
    sim = replace(cfg.sim_config(args.seed), visibility=cfg.source.visibility,
                  visibility_x=None)
    res = chsh_experiment(sim, cfg.simulation.chsh_counts_per_setting)
    return _json({"seed": sim.seed, "S": res.S, "sigma_S": res.sigma_S,
                  "counts": res.counts.flat()})


def _cmd_tomo(cfg: RunConfig, args) -> str:
    t = cfg.tomography
    seed = cfg.simulation.seed if args.seed is None else args.seed
    if t.counts is not None:
        counts = TomoCounts(np.array(t.counts))
    else:
        vis = cfg.source.visibility if t.visibility is None else t.visibility
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        counts = simulate_tomo_counts(werner_mix(vis, PHI_MINUS), t.n_per_setting, rng)
    res = mle_reconstruct(counts, max_iter=t.max_iter)
    if not res.converged:
        raise NumericalFailure(f"MLE did not converge in {res.iterations} iterations")
    rho = res.rho.matrix
    return _json({"seed": seed, "rho_re": rho.real.tolist(), "rho_im": rho.imag.tolist(),
                  "fidelity": res.fidelity_phi_minus, "log_likelihood": res.log_likelihood,
                  "iterations": res.iterations, "counts": counts.counts.tolist()})


def _cmd_compensate(cfg: RunConfig, args):
    c = cfg.compensation
    spec, src = c.spec(), c.source()
    ls, base, comp = phase_map(spec, src, MGO_LN_GAYER, c.spectral_range_nm, c.n_wavelengths)
    optima = {}
    for name, rng in (("temperature", c.temperature_range_c), ("tilt_angle", c.angle_range_deg)):
        opt = optimize_compensation(name, rng, c.spectral_range_nm, spec, src, MGO_LN_GAYER,
                                    n_wavelengths=c.n_wavelengths)
        optima[name] = asdict(opt)
    optimum = {**optima, "walkoff": walkoff_estimate(spec, 0.5 * sum(c.spectral_range_nm)),
               "index_model": MGO_LN_GAYER.source, "optic_axis": spec.optic_axis}
    table = _csv(("lambda_s_nm", "delta_phi", "delta_phi_c"), zip(ls, base, comp))
    if args.out is None:
        sys.stdout.write(_json({**optimum, "phase_map": {
            "lambda_s_nm": ls.tolist(), "delta_phi": base.tolist(),
            "delta_phi_c": comp.tolist()}}))
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "phase_map.csv").write_text(table)
        (out / "optimum.json").write_text(_json(optimum))
    return None


def _cmd_linkbudget(cfg: RunConfig, args) -> str:
    budget = link_budget(cfg.fiber, cfg.free_space, cfg.background)
    link = cfg.link_params()
    budget.update({"eta_a_total": link.eta_a, "eta_b_total": link.eta_b, "y0b_used": link.y0b})
    return _json(budget)


_COMMANDS = {
    "keyrate": _cmd_keyrate, "sweep": _cmd_sweep, "simulate": _cmd_simulate,
    "chsh": _cmd_chsh, "tomo": _cmd_tomo, "compensate": _cmd_compensate,
    "linkbudget": _cmd_linkbudget,
}


def _fail(kind: str, message: str, code: int, field: str | None = None) -> int:
    err = {"error": kind, "message": message}
    if field is not None:
        err["field"] = field
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.geometry:
            cfg = replace(cfg, free_space=replace(cfg.free_space, geometry=args.geometry))
        text = _COMMANDS[args.command](cfg, args)
    except ParameterError as exc:
        return _fail("config", exc.message, 2, exc.field)
    except (NumericalFailure, ZeroDivisionError, FloatingPointError,
            np.linalg.LinAlgError, ValueError) as exc:
        return _fail("numerical", str(exc), 1)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    if text is not None:
        _emit(text, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
