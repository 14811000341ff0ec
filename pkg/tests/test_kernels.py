import numpy as np
import pytest

from gphier.spectral import GridSpec, forward_transform
from gphier.kernels import (
    FactorizedKernel,
    HierarchySequence,
    MarginalKernel,
    ResourceBudgetError,
    adjoint,
    factorized,
    factorized_sequence,
    hermitize,
    hermiticity_defect,
    is_hermitian,
    is_symmetric,
    load_kernel,
    load_wavefunction,
    partial_trace_last,
    permute_particles,
    random_test_kernel,
    save_kernel,
    save_wavefunction,
    symmetrize,
    symmetrize_bruteforce,
    symmetry_defect,
    trace,
)

GRID = GridSpec(1, 2 * np.pi, 6)


def gaussian_phi(grid, width=1.0, amp=1.0):
    return amp * np.exp(-grid.positions ** 2 / (2.0 * width ** 2))


def random_kernel_raw(grid, k, seed):
    rng = np.random.default_rng(seed)
    shape = grid.kernel_shape(k)
    return MarginalKernel(grid, k, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class TestFactorized:
    def test_dense_structure(self):
        phi = gaussian_phi(GRID)
        kern = factorized(phi, GRID, 2)
        phihat = forward_transform(phi, GRID)
        expect = np.einsum("a,b,c,d->abcd", phihat, phihat, np.conj(phihat), np.conj(phihat))
        np.testing.assert_allclose(kern.data, expect, rtol=1e-13)

    def test_lazy_matches_dense(self):
        phi = gaussian_phi(GRID, width=0.7)
        lazy = FactorizedKernel.from_position(phi, GRID, 3)
        np.testing.assert_allclose(lazy.materialize().data, factorized(phi, GRID, 3).data, rtol=1e-13)

    def test_trace_is_mass_power(self):
        phi = gaussian_phi(GRID, amp=0.9)
        mass = np.sum(np.abs(phi) ** 2) * (GRID.L / GRID.M)
        for k in (1, 2, 3):
            dense = factorized(phi, GRID, k)
            assert trace(dense) == pytest.approx(mass ** k, rel=1e-10)
            lazy = FactorizedKernel.from_position(phi, GRID, k)
            assert trace(lazy) == pytest.approx(mass ** k, rel=1e-10)

    def test_factorized_is_symmetric_and_hermitian(self):
        kern = factorized(gaussian_phi(GRID), GRID, 3)
        assert is_symmetric(kern)
        assert is_hermitian(kern)


class TestSymmetryOps:
    def test_adjoint_involution(self):
        kern = random_kernel_raw(GRID, 2, 0)
        np.testing.assert_allclose(adjoint(adjoint(kern)).data, kern.data, rtol=1e-15)

    def test_hermitize_projects(self):
        kern = random_kernel_raw(GRID, 2, 1)
        h = hermitize(kern)
        assert hermiticity_defect(h) < 1e-14
        np.testing.assert_allclose(hermitize(h).data, h.data, rtol=1e-14)

    def test_random_kernel_not_symmetric(self):
        kern = random_kernel_raw(GRID, 2, 2)
        assert not is_symmetric(kern)
        assert not is_hermitian(kern)

    def test_symmetrize_matches_bruteforce(self):
        for k in (2, 3):
            kern = random_kernel_raw(GRID, k, 3 + k)
            fast = symmetrize(kern)
            brute = symmetrize_bruteforce(kern)
            np.testing.assert_allclose(fast.data, brute.data, rtol=1e-13, atol=1e-13)

    def test_symmetrize_idempotent_and_symmetric(self):
        kern = symmetrize(random_kernel_raw(GRID, 3, 9))
        assert symmetry_defect(kern) < 1e-12
        np.testing.assert_allclose(symmetrize(kern).data, kern.data, rtol=1e-12, atol=1e-13)

    def test_symmetrize_preserves_trace(self):
        kern = random_kernel_raw(GRID, 3, 10)
        assert trace(symmetrize(kern)) == pytest.approx(trace(kern), rel=1e-12)

    def test_permute_particles_swap(self):
        kern = random_kernel_raw(GRID, 3, 11)
        swapped = permute_particles(kern, (1, 0, 2))
        np.testing.assert_allclose(permute_particles(swapped, (1, 0, 2)).data, kern.data)
        assert not np.allclose(swapped.data, kern.data)


class TestTraces:
    def test_partial_trace_factorized(self):
        phi = gaussian_phi(GRID)
        phi = phi / np.sqrt(np.sum(np.abs(phi) ** 2) * (GRID.L / GRID.M))  # unit mass
        k3 = factorized(phi, GRID, 3)
        k2 = factorized(phi, GRID, 2)
        np.testing.assert_allclose(partial_trace_last(k3).data, k2.data, rtol=1e-10, atol=1e-12)

    def test_partial_trace_lazy_matches_dense(self):
        phi = gaussian_phi(GRID, amp=1.3)
        lazy = partial_trace_last(FactorizedKernel.from_position(phi, GRID, 3))
        dense = partial_trace_last(factorized(phi, GRID, 3))
        np.testing.assert_allclose(lazy.materialize().data, dense.data, rtol=1e-11)

    def test_partial_trace_consistent_with_trace(self):
        kern = random_kernel_raw(GRID, 2, 12)
        assert trace(partial_trace_last(kern)) == pytest.approx(trace(kern), rel=1e-12)

    def test_partial_trace_needs_two_particles(self):
        with pytest.raises(ValueError):
            partial_trace_last(random_kernel_raw(GRID, 1, 13))


class TestRandomTestKernel:
    def test_seed_reproducible(self):
        a = random_test_kernel(GRID, 2, 1.0, seed=42)
        b = random_test_kernel(GRID, 2, 1.0, seed=42)
        np.testing.assert_array_equal(a.data, b.data)
        c = random_test_kernel(GRID, 2, 1.0, seed=43)
        assert not np.allclose(a.data, c.data)

    def test_projections_applied(self):
        kern = random_test_kernel(GRID, 3, 1.0, seed=7)
        assert is_symmetric(kern, tol=1e-10)
        assert is_hermitian(kern, tol=1e-10)
        assert np.all(np.isfinite(kern.data.view(float)))
        assert np.linalg.norm(kern.data.ravel()) > 0


class TestSerialization:
    def test_kernel_round_trip(self, tmp_path):
        kern = random_test_kernel(GRID, 2, 0.5, seed=5)
        path = tmp_path / "k2.bin"
        save_kernel(path, kern)
        back = load_kernel(path)
        assert back.grid == GRID
        assert back.k == 2
        np.testing.assert_array_equal(back.data, kern.data)

    def test_wavefunction_round_trip(self, tmp_path):
        phihat = forward_transform(gaussian_phi(GRID), GRID)
        path = tmp_path / "phi.bin"
        save_wavefunction(path, phihat, GRID)
        grid, back = load_wavefunction(path)
        assert grid == GRID
        np.testing.assert_array_equal(back, phihat)

    def test_type_confusion_rejected(self, tmp_path):
        path = tmp_path / "phi.bin"
        save_wavefunction(path, forward_transform(gaussian_phi(GRID), GRID), GRID)
        with pytest.raises(ValueError):
            load_kernel(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "k1.bin"
        save_kernel(path, factorized(gaussian_phi(GRID), GRID, 1))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            load_kernel(path)


class TestBudget:
    def test_oversized_materialization_refused(self):
        with pytest.raises(ResourceBudgetError):
            factorized(gaussian_phi(GRID), GRID, 2, budget=1024)

    def test_zeros_budget(self):
        with pytest.raises(ResourceBudgetError):
            MarginalKernel.zeros(GRID, 3, budget=10_000)

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("GPHIER_BUDGET_BYTES", "1000")
        with pytest.raises(ResourceBudgetError):
            random_test_kernel(GRID, 2, 1.0, seed=1)
        monkeypatch.setenv("GPHIER_BUDGET_BYTES", "1e9")
        random_test_kernel(GRID, 2, 1.0, seed=1)


class TestHierarchySequence:
    def test_basic(self):
        phi = gaussian_phi(GRID)
        seq = factorized_sequence(phi, GRID, 3, xi=0.5)
        assert seq.K == 3
        assert seq.level(2).k == 2
        assert seq.grid == GRID

    def test_lazy_tail(self):
        seq = factorized_sequence(gaussian_phi(GRID), GRID, 4, xi=0.5, dense_up_to=2)
        assert isinstance(seq.level(2), MarginalKernel)
        assert isinstance(seq.level(3), FactorizedKernel)
        assert isinstance(seq.level(4), FactorizedKernel)

    def test_validation(self):
        phi = gaussian_phi(GRID)
        lv1 = factorized(phi, GRID, 1)
        lv2 = factorized(phi, GRID, 2)
        with pytest.raises(ValueError):
            HierarchySequence(2, 0.5, (lv2, lv1))
        with pytest.raises(ValueError):
            HierarchySequence(2, 1.5, (lv1, lv2))
