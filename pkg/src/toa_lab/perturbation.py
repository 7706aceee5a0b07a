"""Closed-form survival predictions for small measurement intervals.

With the detector at the boundary site N, one cycle of drift-plus-projection
acts on the detector-removed chain as a near-unitary operator whose modes
pick up, to second order in tau, a per-mode decay rate proportional to the
mode's probability density next to the detector:

* open chain:  alpha_s = tau * phi_s(1)^2 = (2 tau / N) sin^2(s pi / N)
* even ring:   bright (odd s) modes decay at 4 tau phi_s(1)^2; even-s modes
  have exactly zero detector overlap and never decay, leaving the survival
  of a position state pinned at the dark-sector weight 1/2 (0 at site N/2).

An eigenstate then survives as exp(-alpha_s t) and a position state as the
mode sum of those exponentials. For large N the sum becomes an integral over
the band; for large x = t tau / N both band edges contribute equal Gaussian
peaks, giving the 1/sqrt(x) bulk decay and the crossover to x^(-3/2) near
the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import PerturbationDomainError
from .lattice import LatticeSpec, _sin_pi_frac, reduced_open_basis

__all__ = [
    "PerturbativePrediction",
    "decay_rates",
    "survival_eigenstate",
    "survival_position_sum",
    "survival_position_integral",
    "survival_asymptotic",
    "ring_plateau",
    "perturbed_eigenvector_correction",
    "regime_flags",
]

QUAD_ABS_TOL = 1e-10


@dataclass(frozen=True)
class PerturbativePrediction:
    """Per-mode decay rates and phases of the detector-removed basis.

    ``alphas[s-1]`` is the decay rate of reduced mode s (exactly 0 for ring
    dark modes), ``mode_energies[s-1]`` its energy, and ``mu[s-1]`` the
    per-cycle multiplier exp(-i tau e_s) exp(-alpha_s tau / 2).
    """

    spec: LatticeSpec
    tau: float
    alphas: np.ndarray
    mode_energies: np.ndarray
    mu: np.ndarray
    parity_tags: tuple[str, ...] | None = None

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    def _check_mode(self, s: int) -> int:
        if not 1 <= s <= self.n_sites - 1:
            raise PerturbationDomainError(
                f"reduced mode index must lie in 1..{self.n_sites - 1}, got {s}"
            )
        return int(s)


def decay_rates(spec: LatticeSpec, tau: float) -> PerturbativePrediction:
    """Second-order-in-tau decay rates for all reduced modes.

    Requires the detector at site N (the block structure behind the
    expansion pins it there) and, on the ring, even N.
    """
    n = spec.n_sites
    if spec.detector_site != n:
        raise PerturbationDomainError(
            f"perturbative rates need the detector at site {n}, got site {spec.detector_site}"
        )
    if not tau > 0:
        raise PerturbationDomainError(f"tau must be positive, got {tau}")
    s = np.arange(1, n)
    phi1_sq = (2.0 / n) * _sin_pi_frac(s, n) ** 2
    energies = -2.0 * np.cos(s * np.pi / n)
    tags = None
    if spec.boundary == "open":
        if n < 3:
            raise PerturbationDomainError(f"open-chain rates need n_sites >= 3, got {n}")
        alphas = tau * phi1_sq
    else:
        if n % 2 or n < 4:
            raise PerturbationDomainError(f"ring rates are derived for even n_sites >= 4, got {n}")
        alphas = np.where(s % 2 == 1, 4.0 * tau * phi1_sq, 0.0)
        tags = tuple("dark" if k % 2 == 0 else "bright" for k in s)
    mu = np.exp(-1j * tau * energies) * np.exp(-alphas * tau / 2.0)
    return PerturbativePrediction(spec, tau, alphas, energies, mu, tags)


def survival_eigenstate(pred: PerturbativePrediction, s: int, t):
    """exp(-alpha_s t): survival of reduced eigenstate s (1 for dark modes)."""
    alpha = pred.alphas[pred._check_mode(s) - 1]
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise PerturbationDomainError("t must be non-negative")
    out = np.exp(-alpha * t)
    return float(out) if out.ndim == 0 else out


def _mode_weights(pred: PerturbativePrediction, site: int) -> np.ndarray:
    n = pred.n_sites
    if site == n:
        raise PerturbationDomainError(
            f"site {n} is the detector itself and lies outside the reduced expansion"
        )
    if not 1 <= site <= n - 1:
        raise PerturbationDomainError(f"site must lie in 1..{n - 1}, got {site}")
    s = np.arange(1, n)
    return (2.0 / n) * _sin_pi_frac(s * site, n) ** 2


def survival_position_sum(pred: PerturbativePrediction, site: int, t):
    """Mode sum for the survival of a particle released at ``site``.

    Open chain: sum_s phi_s(site)^2 exp(-alpha_s t) over all reduced modes.
    Ring: the same bright-mode sum on top of the constant dark-sector weight.
    """
    w = _mode_weights(pred, site)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise PerturbationDomainError("t must be non-negative")
    decay = np.exp(-np.multiply.outer(t, pred.alphas))
    if pred.spec.boundary == "ring":
        dark = pred.alphas == 0.0
        out = w[dark].sum() + decay[..., ~dark] @ w[~dark]
    else:
        out = decay @ w
    return float(out) if out.ndim == 0 else out


def _band_integral(coeff: float, site: int) -> float:
    """(1/pi) * integral over [0, pi] of (1 - cos(2 site q)) exp(-coeff sin^2 q)."""
    f = lambda q: np.exp(-coeff * np.sin(q) ** 2)
    smooth, _ = quad(f, 0.0, np.pi, epsabs=QUAD_ABS_TOL / 10, epsrel=0.0, limit=400)
    oscill, _ = quad(f, 0.0, np.pi, weight="cos", wvar=2 * site,
                     epsabs=QUAD_ABS_TOL / 10, epsrel=0.0, limit=400)
    return (smooth - oscill) / np.pi


def survival_position_integral(pred: PerturbativePrediction, site: int, t):
    """Band-integral form of the position survival (valid for large N and
    t tau / N^3 << 1); rings include the dark plateau so the value is
    directly comparable to :func:`survival_position_sum`.
    """
    _mode_weights(pred, site)  # shared site validation
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise PerturbationDomainError("t must be non-negative")
    n, tau = pred.n_sites, pred.tau
    out = np.empty_like(ts)
    for i, ti in enumerate(ts):
        if pred.spec.boundary == "ring":
            out[i] = ring_plateau(n, site) + 0.5 * _band_integral(8.0 * ti * tau / n, site)
        else:
            out[i] = _band_integral(2.0 * ti * tau / n, site)
    return float(out[0]) if scalar else out


def survival_asymptotic(boundary: str, site: int, x):
    """Large-x closed form in the scaling variable x = t tau / N.

    Both band edges contribute an identical Gaussian peak, so the bulk decay
    is 1/sqrt(2 pi x) with the boundary factor [1 - exp(-site^2 / 2x)]
    (open), and the ring's decay of the excess over its plateau is a quarter
    of that with site^2 / 8x in the exponent. For the open chain this is the
    full survival; for the ring it is the excess over the plateau.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise PerturbationDomainError("x must be positive")
    if boundary == "open":
        out = (1.0 - np.exp(-(site * site) / (2.0 * x))) / np.sqrt(2.0 * np.pi * x)
    elif boundary == "ring":
        out = (1.0 - np.exp(-(site * site) / (8.0 * x))) / (4.0 * np.sqrt(2.0 * np.pi * x))
    else:
        raise PerturbationDomainError(f"boundary must be 'open' or 'ring', got {boundary!r}")
    return float(out) if out.ndim == 0 else out


def ring_plateau(n_sites: int, site: int) -> float:
    """Asymptotic ring survival: the dark-sector weight 1/2, which vanishes
    for release at the antipode N/2 and at the detector site N itself."""
    n = int(n_sites)
    if n % 2 or n < 4:
        raise PerturbationDomainError(f"ring plateau is derived for even n_sites >= 4, got {n_sites}")
    if not 1 <= site <= n:
        raise PerturbationDomainError(f"site must lie in 1..{n}, got {site}")
    return 0.0 if site in (n // 2, n) else 0.5


def perturbed_eigenvector_correction(pred: PerturbativePrediction, s: int) -> np.ndarray:
    """O(tau^2) mixing coefficients of reduced mode s into the other modes.

    Entry s'-1 holds -(tau^2/2) phi_s(N-1) phi_s'(N-1) / (e_s - e_s') for
    s' != s (zero at s itself). Open chain only: the ring's degenerate pairs
    are handled structurally by the dark/bright split, not by this formula.
    """
    if pred.spec.boundary != "open":
        raise PerturbationDomainError(
            "eigenvector corrections apply to the open chain; ring modes are degenerate"
        )
    k = pred._check_mode(s)
    n = pred.n_sites
    edge = np.sqrt(2.0 / n) * _sin_pi_frac(np.arange(1, n) * (n - 1), n)
    delta = np.zeros(n - 1)
    others = np.arange(n - 1) != k - 1
    delta[others] = (
        -(pred.tau ** 2 / 2.0)
        * edge[k - 1] * edge[others]
        / (pred.mode_energies[k - 1] - pred.mode_energies[others])
    )
    return delta


def regime_flags(pred: PerturbativePrediction, site: int, t: float) -> tuple[str, ...]:
    """Soft validity annotations for the closed forms at time t.

    Empty when every approximation is comfortably inside its regime; the
    evaluators themselves never refuse on these grounds.
    """
    n, tau = pred.n_sites, pred.tau
    x = t * tau / n
    flags = []
    if t * tau / n ** 3 > 1e-2:
        flags.append(f"sum-to-integral conversion marginal: t*tau/N^3 = {t * tau / n ** 3:.2g}")
    if x < 10.0:
        flags.append(f"x = {x:.3g} below the large-x asymptotic regime")
    factor = 1.0 if pred.spec.boundary == "open" else 4.0
    if x > 0 and factor * x > site * site:
        flags.append(f"past the boundary crossover (x = {x:.3g} vs site^2 = {site * site})")
    return tuple(flags)
