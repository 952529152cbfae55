"""Independent reference computations used only by the tests."""

import itertools

import numpy as np
from scipy.linalg import expm
from scipy.special import roots_legendre

FOCK_CUTOFF = 30


def _lowering(cutoff):
    return np.diag(np.sqrt(np.arange(1, cutoff)), 1)


def thermal_state(nbar, cutoff=FOCK_CUTOFF):
    p = (nbar / (1 + nbar)) ** np.arange(cutoff) / (1 + nbar)
    return np.diag(p / p.sum())


def displacement(beta, cutoff=FOCK_CUTOFF):
    a = _lowering(cutoff)
    return expm(beta * a.T - np.conj(beta) * a)


def fock_fidelity(alpha, phi, nbar, pair, cutoff=FOCK_CUTOFF):
    """Gate fidelity by explicit thermal traces in a truncated Fock space.

    The evolution for z-basis spin configuration ``s`` is
    ``prod_k D_k(sum_i s_i alpha[i, k]) * exp(i sum_{i<m} phi[i, m] s_i s_m)``.
    The pair starts in ``|+>|+>``, spectators in the maximally mixed state,
    and the result is the thermal average of ``|<ideal|actual>|^2``.
    """
    N, K = alpha.shape
    j, n = pair
    spect = [i for i in range(N) if i not in pair]
    rhos = [thermal_state(x, cutoff) for x in nbar]
    iu = np.triu_indices(N, 1)

    def config(pair_spins, c):
        z = np.empty(N)
        z[[j, n]] = pair_spins
        z[spect] = c
        return z

    def phase(z, p):
        return np.sum(phi[iu] * z[iu[0]] * z[iu[1]]) - np.pi / 4 * p[0] * p[1]

    total = 0.0
    for c in itertools.product((1, -1), repeat=len(spect)):
        acc = 0.0
        for s in itertools.product((1, -1), repeat=2):
            for t in itertools.product((1, -1), repeat=2):
                zs, zt = config(s, c), config(t, c)
                tr = 1.0 + 0j
                for k in range(K):
                    Ds = displacement(zs @ alpha[:, k], cutoff)
                    Dt = displacement(zt @ alpha[:, k], cutoff)
                    tr *= np.trace(rhos[k] @ Dt.conj().T @ Ds)
                acc += np.exp(1j * (phase(zs, s) - phase(zt, t))) * tr
        total += acc / 16
    return float(np.real(total) / 2 ** len(spect))


def gauss_legendre(f, a, b, n=400):
    x, w = roots_legendre(n)
    t = 0.5 * (b - a) * x + 0.5 * (b + a)
    return 0.5 * (b - a) * np.sum(w * f(t))


def displacement_quadrature(omega, mu, tau, panels=64, n=40):
    """``int_0^tau sin(mu t) exp(i omega t) dt`` by composite Gauss-Legendre."""
    edges = np.linspace(0, tau, panels + 1)
    f = lambda t: np.sin(mu * t) * np.exp(1j * omega * t)
    return sum(gauss_legendre(f, lo, hi, n) for lo, hi in zip(edges[:-1], edges[1:]))


def phase_quadrature(omega, mu, tau, panels=None, n=24):
    """``int_0^tau dt1 int_0^t1 dt2 sin(mu t1) sin(mu t2) sin(omega (t1 - t2))``.

    ``sin(omega (t1 - t2))`` splits into products, so the inner integral is a
    running integral of ``sin(mu t) exp(-i omega t)``; both levels use
    composite Gauss-Legendre with a mapped rule on the partial panel.
    """
    if panels is None:
        panels = max(8, int(np.ceil(tau * max(abs(omega), abs(mu), 1.0) / 2)))
    x, w = roots_legendre(n)
    u, wu = 0.5 * (x + 1), 0.5 * w
    h = tau / panels
    lo = h * np.arange(panels)
    g = lambda t: np.sin(mu * t) * np.exp(-1j * omega * t)

    t1 = lo[:, None] + h * u[None, :]  # outer nodes, (panels, n)
    full = h * (g(t1) @ wu)  # integral over each whole panel
    before = np.concatenate([[0.0], np.cumsum(full)[:-1]])
    # partial panel [lo, t1]: nodes lo + (t1 - lo) u
    t2 = lo[:, None, None] + (t1 - lo[:, None])[:, :, None] * u[None, None, :]
    part = (t1 - lo[:, None]) * (g(t2) @ wu)
    inner = before[:, None] + part  # int_0^t1 sin(mu t2) exp(-i omega t2)
    outer = np.sin(mu * t1) * np.imag(np.exp(1j * omega * t1) * inner)
    return float(h * np.sum(outer @ wu))
