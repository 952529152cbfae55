"""Tabular datasets for each published figure panel.

Every builder returns ``{name: Table}``; the command line writes one CSV per
entry.  Nothing here renders plots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envelope as env
from .gate import CrosstalkGate, refine_detuning, scan_detuning
from .ionchain import TrapConfig, chain_geometry, transverse_mode_spectrum
from .noise import monte_carlo_grid, reference_setup
from .spectral import plane_wave_matrix, solve_spectral_amplitudes, spectral_profile, wavevector_grid

LONG_RUNNING = ("fig3a", "fig3b", "fig3c")

CENTER_PAIR = (9, 10)
EDGE_PAIR = (0, 1)
CENTER_MU = 9.9888
EDGE_MU = 9.9387
CENTER_NCORR = (0, 2, 4, 6, 8)
EDGE_NCORR = (0, 1, 2, 3)


@dataclass
class Table:
    header: list
    rows: list


def fig1a(n_sites: int = 401, ratios=(1.5, 1.0, 0.5)) -> dict:
    """Envelope magnitude against distance from the target, one curve per waist."""
    target = n_sites // 2
    lat = env.QubitLattice.homogeneous(n_sites)
    out = {}
    for r in ratios:
        beam = env.BeamProfile.gaussian(r)
        sol = env.solve_envelope_exact(env.build_addressing_matrix(lat, beam), target, beam=beam)
        f = np.real(sol.amplitudes)
        rows = [(j - target, f[j], abs(f[j])) for j in range(n_sites)]
        out[f"fig1a_w{r:g}"] = Table(["offset", "f", "abs_f"], rows)
    return out


def fig1b(n_sites: int = 401, ratios=None, epsilon: float = 1e-3) -> dict:
    ratios = np.round(np.arange(0.3, 2.0001, 0.05), 10) if ratios is None else np.asarray(ratios, float)
    target = n_sites // 2
    lat = env.QubitLattice.homogeneous(n_sites)
    f0_rows, count_rows = [], []
    for r in ratios:
        beam = env.BeamProfile.gaussian(r)
        sol = env.solve_envelope_exact(env.build_addressing_matrix(lat, beam), target, beam=beam)
        g = beam.gamma(1.0)
        small = env.f0_small_waist(g) if g < 0.5 else float("nan")
        large = env.f0_large_waist(r) if r >= 1 else float("nan")
        f0_rows.append((float(r), float(np.real(sol.f0)), small, large))
        cut = env.truncate_envelope(sol, epsilon)
        count_rows.append((float(r), cut.n_correction, env.predicted_beam_count(r, epsilon)))
    return {
        "fig1b": Table(["w_over_a", "f0_exact", "f0_small_w", "f0_large_w"], f0_rows),
        "fig1b_beam_count": Table(["w_over_a", "correction_beams", "predicted"], count_rows),
    }


def fig2(n_ions: int = 21, target=None, grid_points: int = 2001, wavelength: float = 0.4e-6) -> dict:
    """Spectral refocusing on a harmonic chain; positions in units of ``l``."""
    config = TrapConfig(n_ions)
    geom = chain_geometry(config)
    target = n_ions // 2 if target is None else target
    u = geom.u
    a_min = float(np.min(np.diff(u)))
    waves = wavevector_grid(n_ions, a_min, k=2 * np.pi / wavelength * config.length_scale)
    sol = solve_spectral_amplitudes(plane_wave_matrix(u, waves), target)
    x = np.linspace(u[0] - a_min, u[-1] + a_min, grid_points)
    prof = spectral_profile(sol, waves, x)
    f = sol.amplitudes
    return {
        "fig2_intensity": Table(["x_over_l", "intensity"], list(zip(x, prof.intensity))),
        "fig2_amplitudes": Table(
            ["kx_l", "re_f", "im_f", "abs_f", "theta_rad"],
            list(zip(waves.kx, f.real, f.imag, np.abs(f), waves.angles)),
        ),
        "fig2_ions": Table(["x_over_l"], [(float(v),) for v in u]),
    }


def _detuning_panel(pair, ncorrs, mu_min, mu_max, steps, config) -> dict:
    mus = np.linspace(mu_min, mu_max, steps)
    out = {}
    tag = "center" if pair == CENTER_PAIR else f"pair{pair[0]}_{pair[1]}"
    for nc in list(ncorrs) + [None]:
        gate = CrosstalkGate(config, pair, n_corr=nc)
        name = "perfect" if nc is None else f"ncorr{nc}"
        out[f"{tag}_{name}"] = Table(["mu_over_omega_z", "omega_j", "omega_n", "infidelity"], scan_detuning(gate, mus))
    modes = transverse_mode_spectrum(chain_geometry(config), config)
    out[f"{tag}_modes"] = Table(["mode_over_omega_z"], [(float(r),) for r in modes.ratios])
    return out


def fig3a(mu_min: float = 9.90, mu_max: float = 10.02, steps: int = 121) -> dict:
    return {f"fig3a_{k}": v for k, v in _detuning_panel(CENTER_PAIR, CENTER_NCORR, mu_min, mu_max, steps, TrapConfig(20)).items()}


def fig3b(mu_min: float = 9.90, mu_max: float = 10.02, steps: int = 121) -> dict:
    out = _detuning_panel(EDGE_PAIR, EDGE_NCORR, mu_min, mu_max, steps, TrapConfig(20))
    return {f"fig3b_{k.replace('pair0_1', 'edge')}": v for k, v in out.items()}


def crosstalk_trend(pair, mu_quoted: float, ncorrs, config=None):
    """Optimised infidelity per correction-beam count at the refined detuning.

    Returns ``(mu, baseline, [(n_corr, dF), ...])``.
    """
    config = config or TrapConfig(20)
    perfect = CrosstalkGate(config, pair, n_corr=None)
    mu = refine_detuning(perfect, mu_quoted)
    base = perfect.optimize(mu).infidelity
    rows = [(nc, CrosstalkGate(config, pair, n_corr=nc).optimize(mu).infidelity) for nc in ncorrs]
    return mu, base, rows


def fig3c() -> dict:
    out = {}
    for name, pair, mq, ncs in (("center", CENTER_PAIR, CENTER_MU, range(9)), ("edge", EDGE_PAIR, EDGE_MU, range(4))):
        mu, base, rows = crosstalk_trend(pair, mq, ncs)
        out[f"fig3c_{name}"] = Table(
            ["n_corr", "infidelity", "perfect_focusing", "mu_over_omega_z"],
            [(nc, d, base, mu) for nc, d in rows],
        )
    return out


def fig4(cells: int = 21, dr_max: float = 0.1, dphi_max: float = 0.4, samples: int = 5000, seed: int = 0) -> dict:
    grid = monte_carlo_grid(
        reference_setup(), np.linspace(0, dr_max, cells), np.linspace(0, dphi_max, cells), samples, seed
    )
    return {"fig4": Table(["dr", "dphi", "mean_error", "stderr"], list(grid.rows()))}


BUILDERS = {
    "fig1a": fig1a,
    "fig1b": fig1b,
    "fig2": fig2,
    "fig3a": fig3a,
    "fig3b": fig3b,
    "fig3c": fig3c,
    "fig4": fig4,
}
