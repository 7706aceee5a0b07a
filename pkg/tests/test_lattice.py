import numpy as np
import pytest

from toa_lab import (
    InvalidSpecError,
    LatticeSpec,
    dense_hamiltonian,
    full_lattice_basis,
    open_chain_eigensystem,
    reduced_open_basis,
    ring_eigensystem,
)

SQRT2 = np.sqrt(2.0)


class TestLatticeSpec:
    def test_detector_defaults_to_last_site(self):
        assert LatticeSpec(7).detector_site == 7
        assert LatticeSpec(7, "open", 3).detector_site == 3

    @pytest.mark.parametrize("bad", [dict(n_sites=1), dict(n_sites=0),
                                     dict(n_sites=5, detector_site=6),
                                     dict(n_sites=5, detector_site=0),
                                     dict(n_sites=5, boundary="moebius")])
    def test_invalid_specs(self, bad):
        with pytest.raises(InvalidSpecError):
            LatticeSpec(**bad)


class TestOpenChain:
    def test_two_site_eigenvalues(self):
        basis = open_chain_eigensystem(2)
        np.testing.assert_allclose(basis.eigenvalues, [-1.0, 1.0], atol=1e-15)

    def test_three_site_eigenvalues(self):
        basis = open_chain_eigensystem(3)
        np.testing.assert_allclose(basis.eigenvalues, [-SQRT2, 0.0, SQRT2], atol=1e-15)

    def test_three_site_ground_vector(self):
        basis = open_chain_eigensystem(3)
        np.testing.assert_allclose(basis.vector(1), [0.5, 1 / SQRT2, 0.5], atol=1e-15)

    def test_eigenvalues_ascending(self):
        basis = open_chain_eigensystem(37)
        assert np.all(np.diff(basis.eigenvalues) > 0)

    def test_too_small(self):
        with pytest.raises(InvalidSpecError):
            open_chain_eigensystem(1)


class TestReducedBasis:
    def test_four_site_eigenvalues(self):
        basis = reduced_open_basis(4)
        np.testing.assert_allclose(basis.eigenvalues, [-SQRT2, 0.0, SQRT2], atol=1e-15)

    def test_ring_tagging_dark_modes(self):
        basis = reduced_open_basis(8, ring_tags=True)
        dark = [s + 1 for s, tag in enumerate(basis.parity_tags) if tag == "dark"]
        assert dark == [2, 4, 6]

    def test_no_tags_by_default(self):
        assert reduced_open_basis(8).parity_tags is None

    def test_center_node_is_exact_zero(self):
        # phi_2(2) on the 3-site reduced chain sits on sin(pi) = 0
        assert reduced_open_basis(4).amplitude(2, 2) == 0.0

    def test_completeness_per_site(self):
        basis = reduced_open_basis(9)
        sums = np.sum(basis.vectors**2, axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    @pytest.mark.parametrize("n", [4, 8, 12])
    def test_dark_modes_are_exact_ring_eigenstates(self, n):
        basis = reduced_open_basis(n, ring_tags=True)
        h_ring = dense_hamiltonian(LatticeSpec(n, "ring"))
        for s, tag in enumerate(basis.parity_tags, start=1):
            if tag != "dark":
                continue
            embedded = np.zeros(n)
            embedded[: n - 1] = basis.vector(s)
            assert embedded[n - 1] == 0.0
            residual = h_ring @ embedded - basis.eigenvalue(s) * embedded
            assert np.max(np.abs(residual)) < 1e-12

    def test_errors(self):
        with pytest.raises(InvalidSpecError):
            reduced_open_basis(2)
        with pytest.raises(InvalidSpecError):
            reduced_open_basis(7, ring_tags=True)


class TestRing:
    def test_four_site_spectrum(self):
        basis = ring_eigensystem(4)
        np.testing.assert_allclose(sorted(basis.eigenvalues), [-2.0, 0.0, 0.0, 2.0], atol=1e-15)

    def test_six_site_spectrum(self):
        basis = ring_eigensystem(6)
        np.testing.assert_allclose(sorted(basis.eigenvalues), [-2, -1, -1, 1, 1, 2], atol=1e-14)

    def test_last_mode_is_uniform(self):
        basis = ring_eigensystem(4)
        np.testing.assert_allclose(basis.vector(4), [0.5, 0.5, 0.5, 0.5], atol=1e-15)

    def test_degenerate_pairs(self):
        basis = ring_eigensystem(8)
        assert (1, 4) in basis.degeneracy_classes
        assert (7,) in basis.degeneracy_classes and (8,) in basis.degeneracy_classes

    def test_odd_ring_rejected(self):
        with pytest.raises(InvalidSpecError):
            ring_eigensystem(7)

    def test_odd_ring_numeric_fallback(self):
        spec = LatticeSpec(5, "ring")
        basis = full_lattice_basis(spec)
        h = dense_hamiltonian(spec)
        residual = h @ basis.vectors - basis.vectors * basis.eigenvalues
        assert np.max(np.abs(residual)) < 1e-12
        # odd ring: all but the uniform mode come in degenerate pairs
        sizes = sorted(len(c) for c in basis.degeneracy_classes)
        assert sizes == [1, 2, 2]


class TestDenseHamiltonian:
    def test_two_site_open(self):
        h = dense_hamiltonian(LatticeSpec(2, "open"))
        np.testing.assert_array_equal(h, [[0, -1], [-1, 0]])

    def test_three_site_ring_fully_coupled(self):
        h = dense_hamiltonian(LatticeSpec(3, "ring"))
        np.testing.assert_array_equal(h, [[0, -1, -1], [-1, 0, -1], [-1, -1, 0]])

    def test_four_site_ring_corners(self):
        h = dense_hamiltonian(LatticeSpec(4, "ring"))
        assert h[0, 3] == -1 and h[3, 0] == -1
        assert h[0, 2] == 0

    def test_two_site_ring_doubled_bond(self):
        h = dense_hamiltonian(LatticeSpec(2, "ring"))
        np.testing.assert_array_equal(h, [[0, -2], [-2, 0]])


@pytest.mark.parametrize("boundary", ["open", "ring"])
@pytest.mark.parametrize("n", range(2, 13))
def test_analytic_basis_diagonalizes_dense_hamiltonian(n, boundary):
    spec = LatticeSpec(n, boundary)
    basis = full_lattice_basis(spec)
    h = dense_hamiltonian(spec)
    residual = h @ basis.vectors - basis.vectors * basis.eigenvalues
    assert np.max(np.abs(residual)) < 1e-12


@pytest.mark.parametrize("n,boundary", [(5, "open"), (50, "open"), (500, "open"),
                                        (2000, "open"), (64, "ring"), (2000, "ring")])
def test_orthonormality(n, boundary):
    basis = full_lattice_basis(LatticeSpec(n, boundary))
    gram = basis.vectors.T @ basis.vectors
    assert np.max(np.abs(gram - np.eye(n))) < 1e-12
