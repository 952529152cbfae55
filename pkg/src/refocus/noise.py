"""Robustness of a refocused profile to beam errors and thermal motion.

Each active beam amplitude is perturbed as ``f_j (1 + r_j) exp(i phi_j)``
with independent Gaussian ``r_j ~ N(0, dr^2)`` and ``phi_j ~ N(0, dphi^2)``.
The intensity error compares actual and ideal intensities at the ion sites,
``eps = (1/N) sum_j | |G~(x_j)|^2 - |G(x_j)|^2 |``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envelope import (
    AddressingMatrix,
    BeamProfile,
    EnvelopeSolution,
    build_addressing_matrix,
    solve_envelope_exact,
)
from .ionchain import HBAR, ChainGeometry, TrapConfig, axial_mode_spectrum, bose_occupation, chain_geometry

DOPPLER_LINEWIDTH = 2 * np.pi * 20e6


@dataclass(frozen=True)
class BeamErrorModel:
    dr: float = 0.0
    dphi: float = 0.0
    samples: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.dr < 0 or self.dphi < 0:
            raise ValueError("error widths must be non-negative")
        if self.samples < 1:
            raise ValueError("need at least one sample")


@dataclass(frozen=True)
class NoiseGrid:
    """Mean intensity error ``mean[i, k]`` at ``(dr[i], dphi[k])``."""

    dr: np.ndarray
    dphi: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    samples: int
    seed: int

    def cell(self, dr: float, dphi: float):
        i = int(np.argmin(np.abs(self.dr - dr)))
        k = int(np.argmin(np.abs(self.dphi - dphi)))
        return self.mean[i, k], self.stderr[i, k]

    def rows(self):
        for i, r in enumerate(self.dr):
            for k, p in enumerate(self.dphi):
                yield float(r), float(p), float(self.mean[i, k]), float(self.stderr[i, k])


@dataclass(frozen=True)
class PositionFluctuation:
    sigma: np.ndarray  # metres, per ion
    occupations: np.ndarray  # axial modes, ascending frequency
    mode_ratios: np.ndarray

    @property
    def com_occupation(self) -> float:
        return float(self.occupations[0])


@dataclass(frozen=True)
class NoiseSetup:
    """A solved envelope with the matrix mapping beam amplitudes to ion sites."""

    envelope: EnvelopeSolution
    matrix: AddressingMatrix
    geometry: Optional[ChainGeometry] = None
    meta: dict = field(default_factory=dict)

    @property
    def ideal(self) -> np.ndarray:
        return self.matrix.entries @ self.envelope.amplitudes


def reference_setup(n_ions: int = 21, target: int = 10, config: Optional[TrapConfig] = None) -> NoiseSetup:
    """Harmonic chain, Gaussian waist equal to the spacing right of the target,
    one beam on every ion."""
    config = config or TrapConfig(n_ions)
    geom = chain_geometry(config)
    pos = geom.positions
    waist = pos[target + 1] - pos[target]
    beam = BeamProfile.gaussian(waist)
    M = build_addressing_matrix(pos, beam, pos)
    env = solve_envelope_exact(M, target, beam=beam)
    return NoiseSetup(env, M, geom, {"waist_m": float(waist), "target": target, "n_ions": n_ions})


def perturb_envelope(sol: EnvelopeSolution, r, phi) -> EnvelopeSolution:
    """Multiply each active amplitude by ``(1 + r_j) exp(i phi_j)``.

    ``r`` and ``phi`` hold one entry per active beam, in index order.
    """
    idx = sol.active_indices
    r = np.asarray(r, float)
    phi = np.asarray(phi, float)
    if r.shape != idx.shape or phi.shape != idx.shape:
        raise ValueError(f"need one error pair per active beam ({idx.size})")
    f = sol.amplitudes.astype(complex)
    f[idx] = f[idx] * (1 + r) * np.exp(1j * phi)
    return dataclasses.replace(sol, amplitudes=f)


def intensity_error(ideal, actual) -> float:
    """Mean absolute intensity deviation over the ion sites."""
    g = np.asarray(ideal)
    h = np.asarray(actual)
    if g.shape != h.shape:
        raise ValueError("ideal and actual profiles cover different sites")
    return float(np.mean(np.abs(np.abs(h) ** 2 - np.abs(g) ** 2)))


def _sample_errors(setup: NoiseSetup, dr: float, dphi: float, samples: int, rng: np.random.Generator):
    """Intensity error of ``samples`` independent draws, vectorised."""
    idx = setup.envelope.active_indices
    f = setup.envelope.amplitudes[idx]
    cols = setup.matrix.entries[:, idx]
    z = rng.standard_normal((2, samples, idx.size))
    pert = f[None, :] * (1 + dr * z[0]) * np.exp(1j * dphi * z[1])
    g_ideal = np.abs(setup.ideal) ** 2
    g = np.abs(pert @ cols.T) ** 2
    return np.mean(np.abs(g - g_ideal[None, :]), axis=1)


def monte_carlo_grid(
    setup: NoiseSetup,
    dr_values=None,
    dphi_values=None,
    samples: int = 5000,
    seed: int = 0,
) -> NoiseGrid:
    """Mean intensity error over a grid of ``(dr, dphi)``.

    Each cell draws from its own PCG64 stream, spawned from ``seed`` in
    row-major cell order, so a cell's result does not depend on the grid
    it sits in as long as its position is the same.
    """
    dr_values = np.linspace(0, 0.1, 21) if dr_values is None else np.asarray(dr_values, float)
    dphi_values = np.linspace(0, 0.4, 21) if dphi_values is None else np.asarray(dphi_values, float)
    if np.any(dr_values < 0) or np.any(dphi_values < 0):
        raise ValueError("error widths must be non-negative")
    streams = np.random.SeedSequence(seed).spawn(dr_values.size * dphi_values.size)
    mean = np.zeros((dr_values.size, dphi_values.size))
    err = np.zeros_like(mean)
    for c, ss in enumerate(streams):
        i, k = divmod(c, dphi_values.size)
        if dr_values[i] == 0 and dphi_values[k] == 0:
            continue  # unperturbed: exactly zero
        eps = _sample_errors(setup, dr_values[i], dphi_values[k], samples, np.random.Generator(np.random.PCG64(ss)))
        mean[i, k] = eps.mean()
        err[i, k] = eps.std(ddof=1) / np.sqrt(samples) if samples > 1 else 0.0
    return NoiseGrid(dr_values, dphi_values, mean, err, samples, seed)


def mean_intensity_error(setup: NoiseSetup, model: BeamErrorModel):
    """``(mean, stderr)`` at a single operating point."""
    grid = monte_carlo_grid(setup, [model.dr], [model.dphi], model.samples, model.seed)
    return float(grid.mean[0, 0]), float(grid.stderr[0, 0])


def doppler_temperature(linewidth: float = DOPPLER_LINEWIDTH) -> float:
    """``k_B T / hbar`` in rad/s at the Doppler limit ``k_B T = hbar Gamma / 2``."""
    return linewidth / 2


def thermal_position_std(config: TrapConfig, linewidth: float = DOPPLER_LINEWIDTH) -> PositionFluctuation:
    """Per-ion axial position spread of a Doppler-cooled chain.

    ``sigma_i^2 = sum_k (b_i^k)^2 (hbar / 2 M omega_k) (2 n_k + 1)`` over all
    axial modes, with Bose occupations at the Doppler temperature.
    """
    modes = axial_mode_spectrum(chain_geometry(config), config.omega_z)
    ratios, vectors = modes.ratios, modes.vectors
    omega = config.omega_z * ratios
    if np.any(omega <= 0):
        raise ValueError("non-positive mode frequency")
    nbar = bose_occupation(omega / doppler_temperature(linewidth))
    var = (vectors**2) @ (HBAR / (2 * config.mass * omega) * (2 * nbar + 1))
    return PositionFluctuation(np.sqrt(var), nbar, ratios)


def single_ion_position_std(omega: float, mass: float, linewidth: float = DOPPLER_LINEWIDTH) -> float:
    """Position spread of one trapped ion at the Doppler limit."""
    if not (omega > 0 and mass > 0):
        raise ValueError("non-positive mode frequency or mass")
    nbar = bose_occupation(omega / doppler_temperature(linewidth))
    return float(np.sqrt(HBAR / (2 * mass * omega) * (2 * nbar + 1)))


def gate_infidelity_under_noise(gate, mu: float, omega_j: float, omega_n: float, model: BeamErrorModel):
    """Mean gate infidelity and intensity error with noisy envelopes on both targets.

    The in-phase part of each perturbed profile drives the gate; the
    quadrature part, which would couple to an orthogonal spin axis, is
    dropped.  Returns ``(mean infidelity, mean intensity error)``.
    """
    pos = gate.geometry.positions
    envs = gate.envelopes()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(model.seed)))
    mats = [build_addressing_matrix(pos, gate.beam, e.centers).entries for e in envs]
    ideal = [m @ e.amplitudes for m, e in zip(mats, envs)]
    infid = np.empty(model.samples)
    eps = np.empty(model.samples)
    for s in range(model.samples):
        prof = []
        e_s = 0.0
        for m, e, g in zip(mats, envs, ideal):
            n = e.active_indices.size
            p = perturb_envelope(e, model.dr * rng.standard_normal(n), model.dphi * rng.standard_normal(n))
            h = m @ p.amplitudes
            e_s += intensity_error(g, h) / 2
            prof.append(np.real(h))
        noisy = dataclasses.replace(gate, profiles=np.array(prof))
        infid[s] = noisy.infidelity(mu, omega_j, omega_n)
        eps[s] = e_s
    return float(infid.mean()), float(eps.mean())
