"""Command-line front end: ``refocus <subcommand> [options]``.

Each run writes its CSV output, an optional JSON sidecar and a JSON manifest
holding the resolved configuration.  Passing a manifest back through
``--config`` reproduces the run.  Exit status is 0 on success, 1 for invalid
input and 2 when a numerical routine fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import envelope as env
from . import figures
from .gate import CrosstalkGate, scan_detuning
from .ionchain import AMU, ConvergenceError, TrapConfig, ZigzagInstabilityError, chain_geometry, transverse_mode_spectrum
from .noise import monte_carlo_grid, reference_setup, thermal_position_std
from .spectral import plane_wave_matrix, solve_spectral_amplitudes, spectral_profile, wavevector_grid

OUT_DIR_ENV = "REFOCUS_OUT_DIR"

NCORR_NOTE = (
    "n_corr counts correction beams flanking the gate pair on ions nearest to it; "
    "both target envelopes are solved on that shared set; n_corr=0 means bare beams"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- output ---------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v, precision):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if precision is None:
        return repr(float(v))  # shortest string that round-trips
    return f"{float(v):.{precision}g}"


def _csv_text(header, rows, precision) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v, precision) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class Writer:
    """Collects outputs and writes them, plus a manifest, into one directory."""

    def __init__(self, out_dir: Path, precision: int):
        self.out_dir = out_dir
        self.precision = precision
        self.files = []

    def _path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.out_dir / p

    def csv(self, name, header, rows):
        path = self._path(name)
        _atomic_write(path, _csv_text(header, rows, self.precision))
        self.files.append(str(path))
        return path

    def json(self, name, obj):
        path = self._path(name)
        _atomic_write(path, _dump(obj))
        self.files.append(str(path))
        return path

    def manifest(self, stem: str, config: dict, elapsed: float, notes: dict):
        body = {
            "tool": "refocus",
            "version": __version__,
            "config": config,
            "outputs": [os.path.basename(f) for f in self.files],
            "elapsed_s": elapsed,
            "notes": notes,
        }
        _atomic_write(self._path(f"{stem}.manifest.json"), _dump(body))


# --- configuration --------------------------------------------------------


def _positive(name, value):
    if value is None or not value > 0:
        raise UsageError(f"--{name.replace('_', '-')} must be positive")


def _need(cfg, *names):
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _pair(text):
    try:
        j, n = (int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("pair must look like 'j,n'")
    return j, n


def _load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    # a manifest holds the resolved options under "config"
    return data.get("config", data) if isinstance(data, dict) else {}


# --- subcommands ----------------------------------------------------------


def run_envelope(cfg, out: Writer):
    _need(cfg, "width", "sites", "target")
    for k in ("width", "spacing", "epsilon"):
        _positive(k, cfg[k])
    n, target = cfg["sites"], cfg["target"]
    if n < 1 or not 0 <= target < n:
        raise UsageError("--target must index a site of the chain")
    a = cfg["spacing"]
    if cfg["beam"] == "gaussian":
        beam = env.BeamProfile.gaussian(cfg["width"])
    else:
        beam = env.BeamProfile.exponential(1.0 / cfg["width"])
    lat = env.QubitLattice.homogeneous(n, a)
    sol = env.solve_envelope_exact(env.build_addressing_matrix(lat, beam), target, beam=beam, spacing=a)
    cut = env.truncate_envelope(sol, cfg["epsilon"])
    f = sol.amplitudes
    stem = Path(cfg["out"] or "envelope.csv")
    out.csv(stem, ["j", "re_f", "im_f", "abs_f"], [(j, np.real(v), np.imag(v), abs(v)) for j, v in enumerate(f)])
    predicted = env.predicted_beam_count(cfg["width"] / a, cfg["epsilon"]) if beam.kind == "gaussian" else None
    out.json(stem.with_suffix(".json"), {
        "f0": float(np.real(sol.f0)),
        "predicted_active": predicted,
        "actual_active": cut.n_correction,
        "residual_max": sol.residual_max,
        "condition_estimate": sol.condition_estimate,
    })
    return stem.stem, {"active_count": "beams above epsilon other than the target beam"}


def _trap(cfg):
    _need(cfg, "ions")
    _positive("omega_z", cfg["omega_z"])
    _positive("anisotropy", cfg["anisotropy"])
    _positive("mass", cfg["mass"])
    if not 2 <= cfg["ions"] <= 100:
        raise UsageError("--ions must be between 2 and 100")
    return TrapConfig(cfg["ions"], 2 * np.pi * cfg["omega_z"], cfg["anisotropy"], cfg["mass"] * AMU)


def run_chain(cfg, out: Writer):
    trap = _trap(cfg)
    geom = chain_geometry(trap)
    modes = transverse_mode_spectrum(geom, trap)
    stem = Path(cfg["out"] or "chain.json")
    out.json(stem, {
        "positions_um": geom.positions * 1e6,
        "mode_freqs_over_omega_z": modes.ratios,
        "lamb_dicke": modes.lamb_dicke,
    })
    notes = {}
    if modes.large_lamb_dicke:
        notes["warning"] = "Lamb-Dicke parameter above 0.2; the gate model assumes the Lamb-Dicke regime"
    return stem.stem, notes


def run_gate(cfg, out: Writer):
    trap = _trap(cfg)
    j, n = cfg["pair"]
    if not (0 <= j < trap.n_ions and 0 <= n < trap.n_ions and j != n):
        raise UsageError("--pair must name two distinct ions")
    _positive("tau_periods", cfg["tau_periods"])
    _positive("waist_rel", cfg["waist_rel"])
    if cfg["mu_steps"] < 1 or cfg["mu_max"] < cfg["mu_min"]:
        raise UsageError("need --mu-steps >= 1 and --mu-max >= --mu-min")
    if cfg["ncorr"] is not None and cfg["ncorr"] < 0:
        raise UsageError("--ncorr must be non-negative")
    mus = np.linspace(cfg["mu_min"], cfg["mu_max"], cfg["mu_steps"])
    kw = dict(tau_periods=cfg["tau_periods"], waist_rel=cfg["waist_rel"])
    gate = CrosstalkGate(trap, (j, n), n_corr=cfg["ncorr"], **kw)
    rows = scan_detuning(gate, mus)
    best = min(rows, key=lambda r: r[3])
    perfect = CrosstalkGate(trap, (j, n), n_corr=None, geometry=gate.geometry, modes=gate.modes, **kw)
    stem = Path(cfg["out"] or "gate.csv")
    out.csv(stem, ["mu_over_omega_z", "omega_j", "omega_n", "infidelity"], rows)
    out.json(stem.with_suffix(".json"), {
        "best_mu": best[0],
        "best_infidelity": best[3],
        "baseline_infidelity": perfect.optimize(best[0]).infidelity,
    })
    return stem.stem, {"n_corr": NCORR_NOTE}


def run_spectral(cfg, out: Writer):
    n = cfg["ions"]
    if not 2 <= n <= 100:
        raise UsageError("--ions must be between 2 and 100")
    target = n // 2 if cfg["target"] is None else cfg["target"]
    if not 0 <= target < n:
        raise UsageError("--target must index an ion")
    if cfg["grid_points"] < 2:
        raise UsageError("--grid-points must be at least 2")
    _positive("wavelength", cfg["wavelength"])
    trap = TrapConfig(n)
    geom = chain_geometry(trap)
    u = geom.u
    a_min = float(np.min(np.diff(u)))
    waves = wavevector_grid(n, a_min, cfg["kgrid"], k=2 * np.pi / cfg["wavelength"] * trap.length_scale)
    sol = solve_spectral_amplitudes(plane_wave_matrix(u, waves), target)
    x = np.linspace(u[0] - a_min, u[-1] + a_min, cfg["grid_points"])
    prof = spectral_profile(sol, waves, x)
    stem = Path(cfg["out"] or "spectral.csv")
    out.csv(stem, ["x_over_l", "intensity"], zip(x, prof.intensity))
    f = sol.amplitudes
    out.json(stem.with_suffix(".json"), {
        "kx_l": waves.kx, "re_f": f.real, "im_f": f.imag, "theta_rad": waves.angles,
        "length_scale_m": trap.length_scale, "wavevector_grid": waves.grid,
        "residual_max": sol.residual_max,
    })
    return stem.stem, {"wavevector_grid": waves.grid}


def run_noise(cfg, out: Writer):
    if cfg["dr_max"] < 0 or cfg["dphi_max"] < 0:
        raise UsageError("error widths must be non-negative")
    if cfg["cells"] < 1 or cfg["samples"] < 1:
        raise UsageError("--cells and --samples must be at least 1")
    grid = monte_carlo_grid(
        reference_setup(),
        np.linspace(0, cfg["dr_max"], cfg["cells"]),
        np.linspace(0, cfg["dphi_max"], cfg["cells"]),
        cfg["samples"],
        cfg["seed"],
    )
    stem = Path(cfg["out"] or "noise.csv")
    out.csv(stem, ["dr", "dphi", "mean_error", "stderr"], grid.rows())
    if cfg["thermal"]:
        pf = thermal_position_std(TrapConfig(21))
        out.json(stem.with_name(stem.stem + "_thermal.json"), {
            "sigma_nm": pf.sigma * 1e9, "com_occupation": pf.com_occupation,
            "axial_mode_ratios": pf.mode_ratios, "occupations": pf.occupations,
        })
    return stem.stem, {"rng": "PCG64, one SeedSequence child per grid cell in row-major order"}


def run_figures(cfg, out: Writer):
    which = cfg["which"]
    if which is None:
        raise UsageError("missing required option(s): --which")
    if which in figures.LONG_RUNNING and not cfg["confirm_long"]:
        raise UsageError(f"{which} runs for minutes; pass --confirm-long")
    kwargs = {"seed": cfg["seed"]} if which == "fig4" else {}
    for name, table in figures.BUILDERS[which](**kwargs).items():
        out.csv(f"{name}.csv", table.header, table.rows)
    notes = {"figure": which}
    if which.startswith("fig3"):
        notes["n_corr"] = NCORR_NOTE
    return which, notes


COMMANDS = {
    "envelope": run_envelope,
    "chain": run_chain,
    "gate": run_gate,
    "spectral": run_spectral,
    "noise": run_noise,
    "figures": run_figures,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="JSON file (or manifest) supplying defaults")
    g.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--precision", type=int, help="significant digits in CSV output (default: exact round trip)")

    p = _Parser(prog="refocus", description="Refocused laser addressing of trapped-ion chains.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("envelope", parents=[common], help="beam envelope on a homogeneous lattice")
    s.add_argument("--beam", choices=("gaussian", "exponential"), default="gaussian")
    s.add_argument("--width", type=float, help="Gaussian waist or exponential decay length")
    s.add_argument("--spacing", type=float, default=1.0)
    s.add_argument("--sites", type=int)
    s.add_argument("--target", type=int)
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--out")

    def trap_flags(s, ions=None):
        s.add_argument("--ions", type=int, default=ions)
        s.add_argument("--omega-z", type=float, default=1e6, help="axial trap frequency in Hz")
        s.add_argument("--anisotropy", type=float, default=10.0)
        s.add_argument("--mass", type=float, default=round(TrapConfig(2).mass / AMU, 6), help="ion mass in amu")

    s = sub.add_parser("chain", parents=[common], help="equilibrium positions and transverse modes")
    trap_flags(s)
    s.add_argument("--out")

    s = sub.add_parser("gate", parents=[common], help="detuning scan of the optimised gate infidelity")
    trap_flags(s, ions=20)
    s.add_argument("--pair", type=_pair, default=(9, 10))
    s.add_argument("--tau-periods", type=float, default=180.0)
    s.add_argument("--mu-min", type=float, default=9.98)
    s.add_argument("--mu-max", type=float, default=10.0)
    s.add_argument("--mu-steps", type=int, default=21)
    s.add_argument("--ncorr", type=int, default=0, help="correction beams; -1 for perfect focusing")
    s.add_argument("--waist-rel", type=float, default=1.15)
    s.add_argument("--out")

    s = sub.add_parser("spectral", parents=[common], help="plane-wave refocusing on a harmonic chain")
    s.add_argument("--ions", type=int, default=21)
    s.add_argument("--target", type=int)
    s.add_argument("--grid-points", type=int, default=2001)
    s.add_argument("--wavelength", type=float, default=0.4e-6, help="metres")
    s.add_argument("--kgrid", choices=("dft", "inclusive"), default="dft")
    s.add_argument("--out")

    s = sub.add_parser("noise", parents=[common], help="Monte Carlo intensity error heatmap")
    s.add_argument("--dr-max", type=float, default=0.1)
    s.add_argument("--dphi-max", type=float, default=0.4)
    s.add_argument("--cells", type=int, default=21)
    s.add_argument("--samples", type=int, default=5000)
    s.add_argument("--thermal", action="store_true", help="also write per-ion thermal spread")
    s.add_argument("--out")

    s = sub.add_parser("figures", parents=[common], help="datasets behind each figure panel")
    s.add_argument("--which", choices=sorted(figures.BUILDERS))
    s.add_argument("--confirm-long", action="store_true")
    return p


def _resolve(parser, argv):
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(1)
    cfg = vars(args)
    if cfg.get("config"):
        file_cfg = _load_config(cfg["config"])
        explicit = set(_explicit_dests(parser, argv))
        for k, v in file_cfg.items():
            if k in cfg and k not in explicit and k not in ("command", "config"):
                cfg[k] = tuple(v) if k == "pair" else v
    if cfg.get("ncorr") == -1:
        cfg["ncorr"] = None
    return cfg


def _explicit_dests(parser, argv):
    # dests given on the command line, found by reparsing with suppressed defaults
    probe = build_parser()
    for action in _all_actions(probe):
        action.default = argparse.SUPPRESS
    return vars(probe.parse_args(argv)).keys()


def _all_actions(parser):
    for a in parser._actions:
        yield a
        if isinstance(a, argparse._SubParsersAction):
            for sp in a.choices.values():
                yield from sp._actions


def _usage(parser, argv) -> str:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            for token in argv:
                if token in a.choices:
                    return a.choices[token].format_usage()
    return parser.format_usage()


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = _resolve(parser, argv)
        out_dir = Path(cfg.get("out_dir") or os.environ.get(OUT_DIR_ENV) or ".")
        writer = Writer(out_dir, cfg["precision"])
        start = time.perf_counter()
        stem, notes = COMMANDS[cfg["command"]](cfg, writer)
        resolved = {k: v for k, v in cfg.items() if k not in ("config", "out_dir")}
        writer.manifest(stem, resolved, time.perf_counter() - start, notes)
    except UsageError as exc:
        print(_usage(parser, argv) + f"refocus: error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, ConvergenceError, ZigzagInstabilityError) as exc:
        print(f"refocus: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"refocus: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"refocus: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
