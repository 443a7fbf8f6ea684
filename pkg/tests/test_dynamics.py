import numpy as np
import pytest

from spintomo import (apply_unitary, coefficients_to_density,
                      coherence_order_decompose, detect_signal,
                      evolution_cache, evolve, gradient_project,
                      product_operator, realistic_gradient_project,
                      rotation_pulse)

from conftest import (DEMO_COEFFS, local_maxima_above,
                      random_hermitian_traceless)


class TestEvolutionCache:
    def test_antisymmetry(self, two_spin_system):
        cache = evolution_cache(two_spin_system)
        assert np.allclose(cache.frequencies, -cache.frequencies.T)
        assert np.array_equal(cache.orders, -cache.orders.T)
        assert np.allclose(np.diag(cache.frequencies), 0.0)
        assert np.all(np.diag(cache.orders) == 0)

    def test_down_counts(self, two_spin_system):
        cache = evolution_cache(two_spin_system)
        assert list(cache.down) == [0, 1, 1, 2]


class TestEvolve:
    def test_zero_time_identity(self, two_spin_system):
        rng = np.random.default_rng(0)
        rho = random_hermitian_traceless(rng, 4)
        assert np.allclose(evolve(rho, two_spin_system, 0.0), rho)

    def test_single_element_phase(self, two_spin_system):
        # element (0, 2) connects the two states whose energy difference
        # is 1300 Hz; its phase must advance at exactly that rate
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 2] = 1.0
        rho[2, 0] = 1.0
        t = 1.7e-4
        evolved = evolve(rho, two_spin_system, t, with_decay=False)
        assert evolved[0, 2] == pytest.approx(np.exp(-2j * np.pi * 1300.0 * t), abs=1e-12)
        assert evolved[2, 0] == pytest.approx(np.exp(+2j * np.pi * 1300.0 * t), abs=1e-12)

    def test_decay_at_t2(self, two_spin_system):
        rho = product_operator(two_spin_system, "xo")
        evolved = evolve(rho, two_spin_system, two_spin_system.t2_s, with_decay=True)
        ratio = np.abs(evolved[0, 2]) / np.abs(rho[0, 2])
        assert ratio == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_magnitudes_conserved_without_decay(self, two_spin_system):
        rng = np.random.default_rng(1)
        rho = random_hermitian_traceless(rng, 4)
        evolved = evolve(rho, two_spin_system, 3.3e-3, with_decay=False)
        assert np.allclose(np.abs(evolved), np.abs(rho))

    def test_diagonal_always_conserved(self, two_spin_system):
        rng = np.random.default_rng(2)
        rho = random_hermitian_traceless(rng, 4)
        evolved = evolve(rho, two_spin_system, 5e-3, with_decay=True)
        assert np.allclose(np.diag(evolved), np.diag(rho))

    def test_negative_time_rejected(self, two_spin_system):
        with pytest.raises(ValueError, match="non-negative"):
            evolve(np.zeros((4, 4)), two_spin_system, -1e-3)


class TestApplyUnitary:
    def test_identity(self, two_spin_system):
        rng = np.random.default_rng(3)
        rho = random_hermitian_traceless(rng, 4)
        assert np.allclose(apply_unitary(rho, np.eye(4)), rho)

    def test_z_to_x_rotation(self, two_spin_system):
        pulse = rotation_pulse(two_spin_system, np.pi / 2, 0.0)
        rho = coefficients_to_density(two_spin_system, {"zo": 2.0, "oz": 3.0})
        rotated = apply_unitary(rho, pulse)
        expected = coefficients_to_density(two_spin_system, {"xo": 2.0, "ox": 3.0})
        assert np.max(np.abs(rotated - expected)) < 1e-12

    def test_spectrum_preserved(self, two_spin_system):
        rng = np.random.default_rng(4)
        rho = random_hermitian_traceless(rng, 4)
        unitary = rotation_pulse(two_spin_system, 0.9, 1.3)
        rotated = apply_unitary(rho, unitary)
        assert abs(np.trace(rotated) - np.trace(rho)) < 1e-10
        assert np.allclose(np.linalg.eigvalsh(rotated), np.linalg.eigvalsh(rho),
                           atol=1e-10)
        assert np.max(np.abs(rotated - rotated.conj().T)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            apply_unitary(np.zeros((4, 4)), np.eye(2))


class TestGradientProject:
    def test_transverse_killed(self, two_spin_system):
        rho = product_operator(two_spin_system, "xo")
        assert np.allclose(gradient_project(rho), 0.0)

    def test_demo_state_diagonal(self, two_spin_system):
        rho = coefficients_to_density(two_spin_system, DEMO_COEFFS)
        projected = gradient_project(rho)
        assert np.allclose(projected, np.diag([3.325, -2.325, -1.025, 0.025]))

    def test_idempotent(self, two_spin_system):
        rng = np.random.default_rng(5)
        rho = random_hermitian_traceless(rng, 4)
        once = gradient_project(rho)
        assert np.allclose(gradient_project(once), once)


class TestRealisticGradient:
    def test_diagonal_untouched(self, two_spin_system):
        rho = np.diag([1.0, 2.0, -1.5, -1.5]).astype(complex)
        rng = np.random.default_rng(6)
        out = realistic_gradient_project(rho, two_spin_system, rng, draws=8)
        assert np.allclose(out, rho)

    def test_zero_quantum_survives_single_draw(self, two_spin_system):
        # IxIx + IyIy is purely zero quantum plus its conjugate
        rho = (product_operator(two_spin_system, "xx")
               + product_operator(two_spin_system, "yy"))
        rng = np.random.default_rng(7)
        out = realistic_gradient_project(rho, two_spin_system, rng, draws=1,
                                         tau_max_s=0.0)
        assert abs(out[1, 2]) == pytest.approx(abs(rho[1, 2]), rel=1e-12)

    def test_averaging_suppresses_zero_quantum(self, two_spin_system):
        rho = (product_operator(two_spin_system, "xx")
               + product_operator(two_spin_system, "yy"))
        single = realistic_gradient_project(
            rho, two_spin_system, np.random.default_rng(8), draws=1, tau_max_s=0.02)
        averaged = realistic_gradient_project(
            rho, two_spin_system, np.random.default_rng(8), draws=64, tau_max_s=0.02)
        assert abs(averaged[1, 2]) < 0.5 * abs(single[1, 2])
        assert abs(averaged[1, 2]) < 0.35 * abs(rho[1, 2])

    def test_higher_orders_removed(self, two_spin_system):
        rho = product_operator(two_spin_system, "xo")
        rng = np.random.default_rng(9)
        out = realistic_gradient_project(rho, two_spin_system, rng, draws=4)
        assert np.allclose(out, 0.0)


class TestCoherenceOrderDecompose:
    def test_diagonal_is_order_zero(self, two_spin_system):
        rho = np.diag([1.0, -1.0, 2.0, -2.0]).astype(complex)
        parts = coherence_order_decompose(rho, two_spin_system)
        assert set(parts) == {0}
        assert np.allclose(parts[0], rho)

    def test_two_spin_xx_orders(self, two_spin_system):
        rho = product_operator(two_spin_system, "xx")
        parts = coherence_order_decompose(rho, two_spin_system)
        assert set(parts) == {-2, 0, 2}

    def test_partition(self, two_spin_system):
        rng = np.random.default_rng(10)
        rho = random_hermitian_traceless(rng, 4)
        parts = coherence_order_decompose(rho, two_spin_system)
        assert np.allclose(sum(parts.values()), rho)

    def test_projection_inside_order_zero(self, two_spin_system):
        rng = np.random.default_rng(11)
        rho = random_hermitian_traceless(rng, 4)
        projected = gradient_project(rho)
        order_zero = coherence_order_decompose(rho, two_spin_system).get(0, 0)
        # the diagonal is a subset of the order-zero component
        assert np.allclose(np.diag(projected), np.diag(order_zero))


class TestDetectSignal:
    def test_diagonal_silent(self, two_spin_system):
        rho = np.diag([1.0, 2.0, -1.0, -2.0]).astype(complex)
        assert detect_signal(rho, two_spin_system) == pytest.approx(0.0, abs=1e-14)

    def test_x_gives_real_unit(self, two_spin_system):
        rho = product_operator(two_spin_system, "xo")
        assert detect_signal(rho, two_spin_system) == pytest.approx(1.0 + 0.0j, abs=1e-14)

    def test_y_gives_imaginary_unit(self, two_spin_system):
        rho = product_operator(two_spin_system, "yo")
        assert detect_signal(rho, two_spin_system) == pytest.approx(0.0 + 1.0j, abs=1e-14)

    def test_linearity(self, two_spin_system):
        rng = np.random.default_rng(12)
        rho_a = random_hermitian_traceless(rng, 4)
        rho_b = random_hermitian_traceless(rng, 4)
        a, b = rng.uniform(-2, 2, size=2)
        combined = detect_signal(a * rho_a + b * rho_b, two_spin_system)
        split = a * detect_signal(rho_a, two_spin_system) + b * detect_signal(rho_b, two_spin_system)
        assert combined == pytest.approx(split, abs=1e-12)


class TestSpectralSupport:
    def test_fid_peaks_at_cache_frequencies(self, two_spin_system):
        # detected spectrum of a freely evolving operator may only contain
        # eigenvalue-difference frequencies
        cache = evolution_cache(two_spin_system)
        rho = product_operator(two_spin_system, "xo")
        n, dwell = 512, 1.0 / 7600.0
        fid = np.array([
            detect_signal(evolve(rho, two_spin_system, k * dwell), two_spin_system)
            for k in range(n)
        ])
        spectrum = np.fft.fftshift(np.fft.fft(fid))
        freqs = np.fft.fftshift(np.fft.fftfreq(n, dwell))
        bin_width = freqs[1] - freqs[0]
        magnitude = np.abs(spectrum)
        peaks = local_maxima_above(magnitude, 1e-6 * magnitude.max())
        allowed = np.unique(cache.frequencies)
        for index in peaks:
            assert np.min(np.abs(allowed - freqs[index])) <= bin_width
