"""Analytic eigensystems for the nearest-neighbour hopping chain and ring.

The hopping amplitude and hbar are fixed at 1, so the open-chain Hamiltonian
is the N x N tridiagonal matrix with -1 off the diagonal; the ring adds the
two corner elements. Both have closed-form sine/cosine eigenbases, which is
what makes the measurement engine O(N) per step: eigenvectors are built once
here and shared read-only afterwards.

Mode and site indices are 1-based everywhere in the public API (s = 1..N,
site = 1..N); the underlying arrays are plain 0-based numpy storage with
``V[site-1, s-1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError

__all__ = [
    "LatticeSpec",
    "SpectralBasis",
    "open_chain_eigensystem",
    "reduced_open_basis",
    "ring_eigensystem",
    "dense_hamiltonian",
    "full_lattice_basis",
]

# eigenvalues closer than this are treated as one degenerate class; the
# analytic constructions produce exactly equal values, so this only guards
# float noise in the numeric fallback
DEGENERACY_TOL = 1e-9


def _sin_pi_frac(k, d):
    """sin(pi * k / d) for integer k, with range reduction done in integers.

    Multiples of pi come out as exact zeros and the half-turn symmetry
    sin(pi - x) = sin(x) holds exactly, so e.g. the mode amplitudes at a
    reflected site agree to the last bit.
    """
    k = np.asarray(k, dtype=np.int64)
    r = np.mod(k, 2 * d)
    sign = np.where(r < d, 1.0, -1.0)
    r = np.mod(r, d)
    r = np.minimum(r, d - r)
    return sign * np.sin(np.pi * r / d)


def _cos_pi_frac(k, d):
    """cos(pi * k / d) for integer k and even d (shift by a quarter turn)."""
    if d % 2:
        raise ValueError("integer quarter-turn shift needs even denominator")
    return _sin_pi_frac(np.asarray(k, dtype=np.int64) + d // 2, d)


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of the monitored lattice.

    Parameters
    ----------
    n_sites : int
        Number of lattice sites N (>= 2).
    boundary : {'open', 'ring'}
        Open chain (particle in a box) or periodic ring.
    detector_site : int, optional
        Site where the projective detector acts, 1-based. Defaults to N.
    """

    n_sites: int
    boundary: str = "open"
    detector_site: int | None = None

    def __post_init__(self):
        if self.boundary not in ("open", "ring"):
            raise InvalidSpecError(f"boundary must be 'open' or 'ring', got {self.boundary!r}")
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise InvalidSpecError(f"n_sites must be an integer >= 2, got {self.n_sites}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        d = self.n_sites if self.detector_site is None else int(self.detector_site)
        if not 1 <= d <= self.n_sites:
            raise InvalidSpecError(f"detector_site must lie in 1..{self.n_sites}, got {d}")
        object.__setattr__(self, "detector_site", d)


@dataclass(frozen=True)
class SpectralBasis:
    """Real orthonormal eigenbasis of a chain/ring Hamiltonian.

    ``vectors[site-1, s-1]`` is the amplitude of mode s at the given site.
    ``degeneracy_classes`` groups 1-based mode indices sharing an eigenvalue.
    ``parity_tags`` is only set for the detector-removed basis used on the
    ring, marking each mode 'dark' (vanishes at the detector, never decays)
    or 'bright'.
    """

    dimension: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    degeneracy_classes: tuple[tuple[int, ...], ...] = field(default=())
    parity_tags: tuple[str, ...] | None = None

    def eigenvalue(self, s: int) -> float:
        return float(self.eigenvalues[self._check_mode(s) - 1])

    def vector(self, s: int) -> np.ndarray:
        return self.vectors[:, self._check_mode(s) - 1]

    def amplitude(self, site: int, s: int) -> float:
        if not 1 <= site <= self.vectors.shape[0]:
            raise InvalidSpecError(f"site must lie in 1..{self.vectors.shape[0]}, got {site}")
        return float(self.vectors[site - 1, self._check_mode(s) - 1])

    def _check_mode(self, s: int) -> int:
        if not 1 <= s <= self.dimension:
            raise InvalidSpecError(f"mode index must lie in 1..{self.dimension}, got {s}")
        return int(s)


def _group_degenerate(eigenvalues: np.ndarray) -> tuple[tuple[int, ...], ...]:
    order = np.argsort(eigenvalues, kind="stable")
    classes = []
    current = [int(order[0]) + 1]
    for i, j in zip(order[:-1], order[1:]):
        if abs(eigenvalues[j] - eigenvalues[i]) < DEGENERACY_TOL:
            current.append(int(j) + 1)
        else:
            classes.append(tuple(current))
            current = [int(j) + 1]
    classes.append(tuple(current))
    return tuple(classes)


def open_chain_eigensystem(n_sites: int) -> SpectralBasis:
    """Eigenbasis of the open N-site chain.

    Mode s has energy -2 cos(s pi / (N+1)) and amplitude
    sqrt(2/(N+1)) sin(s site pi / (N+1)); energies are ascending in s.
    """
    n = int(n_sites)
    if n < 2:
        raise InvalidSpecError(f"open chain needs n_sites >= 2, got {n_sites}")
    s = np.arange(1, n + 1)
    energies = -2.0 * np.cos(s * np.pi / (n + 1))
    sites = np.arange(1, n + 1)
    vectors = np.sqrt(2.0 / (n + 1)) * _sin_pi_frac(np.outer(sites, s), n + 1)
    return SpectralBasis(n, energies, vectors, _group_degenerate(energies))


def reduced_open_basis(n_sites: int, ring_tags: bool = False) -> SpectralBasis:
    """Eigenbasis of the chain with the boundary detector site removed.

    For an N-site lattice monitored at site N this is the open chain on the
    remaining N-1 sites: mode s has energy -2 cos(s pi / N) and amplitude
    sqrt(2/N) sin(s site pi / N), s = 1..N-1.

    With ``ring_tags=True`` (even N only) each mode is tagged by what it does
    on the ring: even-s modes vanish identically at site N, so they are exact
    non-decaying eigenstates of the monitored ring ('dark'); odd-s modes are
    'bright'.
    """
    n = int(n_sites)
    if n < 3:
        raise InvalidSpecError(f"reduced basis needs n_sites >= 3, got {n_sites}")
    if ring_tags and n % 2:
        raise InvalidSpecError("dark/bright tagging applies to even-size rings only")
    s = np.arange(1, n)
    energies = -2.0 * np.cos(s * np.pi / n)
    sites = np.arange(1, n)
    vectors = np.sqrt(2.0 / n) * _sin_pi_frac(np.outer(sites, s), n)
    tags = tuple("dark" if k % 2 == 0 else "bright" for k in s) if ring_tags else None
    return SpectralBasis(n - 1, energies, vectors, _group_degenerate(energies), tags)


def ring_eigensystem(n_sites: int) -> SpectralBasis:
    """Eigenbasis of the even-size ring.

    Modes s = 1..N/2-1 are the sine waves sqrt(2/N) sin(2 s site pi / N) and
    modes s = N/2..N-2 their degenerate cosine partners, both at energy
    -2 cos(2 s pi / N). Mode N-1 is the alternating state (-1)^site / sqrt(N)
    at energy +2 and mode N the uniform state 1/sqrt(N) at energy -2.
    """
    n = int(n_sites)
    if n < 4 or n % 2:
        raise InvalidSpecError(
            f"analytic ring eigensystem needs even n_sites >= 4, got {n_sites}; "
            "odd rings are handled by dense diagonalization in full_lattice_basis"
        )
    half = n // 2
    sites = np.arange(1, n + 1)
    energies = np.empty(n)
    vectors = np.empty((n, n))
    s = np.arange(1, half)
    energies[: half - 1] = -2.0 * np.cos(2.0 * s * np.pi / n)
    energies[half - 1 : n - 2] = energies[: half - 1]
    norm = np.sqrt(2.0 / n)
    vectors[:, : half - 1] = norm * _sin_pi_frac(np.outer(sites, 2 * s), n)
    vectors[:, half - 1 : n - 2] = norm * _cos_pi_frac(np.outer(sites, 2 * s), n)
    # alternating wave sits at the band top, uniform wave at the band bottom
    vectors[:, n - 2] = np.where(sites % 2 == 0, 1.0, -1.0) / np.sqrt(n)
    energies[n - 2] = 2.0
    vectors[:, n - 1] = 1.0 / np.sqrt(n)
    energies[n - 1] = -2.0
    classes = tuple((int(k), int(k) + half - 1) for k in s) + ((n - 1,), (n,))
    return SpectralBasis(n, energies, vectors, classes)


def dense_hamiltonian(spec: LatticeSpec) -> np.ndarray:
    """Dense N x N hopping Hamiltonian for the brute-force reference path.

    Tridiagonal with -1 off the diagonal; a ring adds -1 at the (1, N) and
    (N, 1) corners (so the two-site ring carries a doubled bond).
    """
    n = spec.n_sites
    h = np.zeros((n, n))
    idx = np.arange(n - 1)
    h[idx, idx + 1] = -1.0
    h[idx + 1, idx] = -1.0
    if spec.boundary == "ring":
        h[0, n - 1] += -1.0
        h[n - 1, 0] += -1.0
    return h


def full_lattice_basis(spec: LatticeSpec) -> SpectralBasis:
    """Eigenbasis of the full lattice used by the stepping engine.

    Analytic for the open chain and the even ring with N >= 4; other rings
    fall back to a dense symmetric eigensolve (the closed-form ring basis is
    only derived for even N).
    """
    if spec.boundary == "open":
        return open_chain_eigensystem(spec.n_sites)
    if spec.n_sites >= 4 and spec.n_sites % 2 == 0:
        return ring_eigensystem(spec.n_sites)
    energies, vectors = np.linalg.eigh(dense_hamiltonian(spec))
    return SpectralBasis(spec.n_sites, energies, vectors, _group_degenerate(energies))
