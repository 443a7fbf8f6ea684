import numpy as np
import pytest

from spintomo import (LineOverlapError, Signal1D, Signal2D, Transition,
                      TransitionTable, coefficients_to_density, cross_section,
                      default_acquisition, dft_fid, dft_t1, dft_t2,
                      hybrid_omega2_axis, peak_amplitudes, run_sequence_A,
                      transition_table)
from spintomo.spectral import HybridSpectrum, nearest_bin

from conftest import DEMO_COEFFS, local_maxima_above


def oscillator_fid(n, dwell, frequency, decay_s=None, amplitude=1.0):
    t = np.arange(n) * dwell
    samples = amplitude * np.exp(2j * np.pi * frequency * t)
    if decay_s is not None:
        samples *= np.exp(-t / decay_s)
    return Signal1D(samples=samples, dwell_s=dwell, meta={})


class TestDftCore:
    def test_oscillator_lands_exactly_on_its_bin(self):
        n, dwell = 256, 1e-3
        axis = np.fft.fftshift(np.fft.fftfreq(n, dwell))
        target = 170
        signal = oscillator_fid(n, dwell, axis[target])
        spectrum = dft_fid(signal, apodization=None, zero_fill=1,
                           first_point_half=False)
        assert np.argmax(np.abs(spectrum.values)) == target
        assert spectrum.omega_hz[target] == axis[target]

    def test_parseval(self):
        rng = np.random.default_rng(31)
        samples = rng.normal(size=128) + 1j * rng.normal(size=128)
        signal = Signal1D(samples=samples, dwell_s=1e-3, meta={})
        for zero_fill in (1, 2):
            spectrum = dft_fid(signal, apodization=None, zero_fill=zero_fill,
                               first_point_half=False)
            energy_time = np.sum(np.abs(samples) ** 2)
            energy_freq = np.sum(np.abs(spectrum.values) ** 2) / len(spectrum.values)
            assert abs(energy_freq / energy_time - 1.0) < 1e-9

    def test_first_point_halving(self):
        samples = np.ones(16, dtype=complex)
        signal = Signal1D(samples=samples, dwell_s=1e-3, meta={})
        full = dft_fid(signal, apodization=None, zero_fill=1, first_point_half=False)
        halved = dft_fid(signal, apodization=None, zero_fill=1, first_point_half=True)
        assert np.allclose(full.values - halved.values, 0.5)

    def test_matched_apodization_needs_t2(self):
        signal = Signal1D(samples=np.ones(8, dtype=complex), dwell_s=1e-3, meta={})
        with pytest.raises(ValueError, match="t2_s"):
            dft_fid(signal)

    def test_hybrid_axis_helper_matches_dft(self, two_spin_system):
        rho0 = coefficients_to_density(two_spin_system, DEMO_COEFFS)
        params = default_acquisition(two_spin_system, n_t1=8, n_t2=64)
        hybrid = dft_t2(run_sequence_A(two_spin_system, rho0, params))
        assert np.allclose(hybrid.omega2_hz,
                           hybrid_omega2_axis(params.n_t2, params.dwell_t2_s))


class TestLineShapes:
    def test_cosine_rows_give_symmetric_absorptive_pairs(self):
        n, dwell, f, tau = 256, 1e-3, 62.5, 0.05
        t = np.arange(n) * dwell
        trace = np.cos(2 * np.pi * f * t) * np.exp(-t / tau)
        hybrid = HybridSpectrum(grid=trace[:, None].astype(complex),
                                t1_s=t, omega2_hz=np.array([0.0]),
                                meta={"t2_s": tau})
        spectrum = dft_t1(hybrid, apodization=None, zero_fill=1,
                          first_point_half=True)
        real = spectrum.grid[:, 0].real
        axis = spectrum.omega1_hz
        plus = nearest_bin(axis, +f)
        minus = nearest_bin(axis, -f)
        assert real[plus] == pytest.approx(real.max(), rel=1e-6)
        assert real[minus] == pytest.approx(real[plus], rel=1e-6)

    def test_sine_rows_give_antisymmetric_dispersive_pairs(self):
        n, dwell, f, tau = 256, 1e-3, 62.5, 0.05
        t = np.arange(n) * dwell
        trace = np.sin(2 * np.pi * f * t) * np.exp(-t / tau)
        hybrid = HybridSpectrum(grid=trace[:, None].astype(complex),
                                t1_s=t, omega2_hz=np.array([0.0]),
                                meta={"t2_s": tau})
        spectrum = dft_t1(hybrid, apodization=None, zero_fill=1,
                          first_point_half=True)
        real = spectrum.grid[:, 0].real
        axis = spectrum.omega1_hz
        plus = nearest_bin(axis, +f)
        minus = nearest_bin(axis, -f)
        scale = np.max(np.abs(real))
        # dispersive shape: near-zero crossing at each line center with
        # opposite-signed lobes on either side
        assert abs(real[plus]) < 0.05 * scale
        lobe = np.max(np.abs(real[plus - 4:plus + 5]))
        assert lobe > 0.3 * scale
        # opposite-line tails bias the lobes a little, hence the loose bound
        for k in (2, 3):
            assert np.sign(real[plus + k]) == -np.sign(real[plus - k])
            assert real[plus + k] == pytest.approx(-real[plus - k], rel=0.25)
        # the time samples are real, so the real part is mirror symmetric
        assert np.allclose(real[minus - 4:minus + 5], real[plus + 4:plus - 5:-1],
                           atol=1e-9 * scale)

    def test_apodization_does_not_shift_peak_center(self):
        n, dwell, tau = 512, 1e-3, 0.04
        axis_plain = np.fft.fftshift(np.fft.fftfreq(2 * n, dwell))
        f = axis_plain[len(axis_plain) // 2 + 101] + 0.2 * (axis_plain[1] - axis_plain[0])
        signal = oscillator_fid(n, dwell, f, decay_s=tau)
        signal.meta["t2_s"] = tau
        centers = {}
        for apod in (None, "matched"):
            spectrum = dft_fid(signal, apodization=apod)
            power = np.abs(spectrum.values) ** 2
            window = 40
            b = nearest_bin(spectrum.omega_hz, f)
            sl = slice(b - window, b + window + 1)
            centers[apod] = (np.sum(spectrum.omega_hz[sl] * power[sl])
                             / np.sum(power[sl]))
        bin_width = axis_plain[1] - axis_plain[0]
        assert abs(centers[None] - f) < 0.5 * bin_width
        assert abs(centers["matched"] - f) < 0.5 * bin_width


@pytest.fixture(scope="module")
def demo_hybrid():
    import spintomo
    system = spintomo.build_spin_system(2, [1200.0, 1800.0], {(1, 2): 200.0}, 0.010)
    rho0 = coefficients_to_density(system, DEMO_COEFFS)
    params = default_acquisition(system)
    hybrid = dft_t2(run_sequence_A(system, rho0, params))
    return system, hybrid


class TestDemoSpectra:

    def test_t2_peaks_only_at_transitions(self, demo_hybrid):
        system, hybrid = demo_hybrid
        profile = np.max(np.abs(hybrid.grid), axis=0)
        bin_width = hybrid.omega2_hz[1] - hybrid.omega2_hz[0]
        table_freqs = transition_table(system).frequencies()
        peaks = local_maxima_above(profile, 1e-6 * profile.max())
        assert peaks
        for index in peaks:
            assert np.min(np.abs(table_freqs - hybrid.omega2_hz[index])) <= bin_width

    def test_omega1_support_set(self, demo_hybrid):
        system, hybrid = demo_hybrid
        spectrum = dft_t1(hybrid)
        profile = np.max(np.abs(spectrum.grid), axis=1)
        expected = []
        for f in (1100.0, 1300.0, 1700.0, 1900.0, 600.0, 3000.0):
            expected += [f, -f]
        expected = np.array(expected)
        bin_width = spectrum.omega1_hz[1] - spectrum.omega1_hz[0]
        peaks = local_maxima_above(profile, 1e-6 * profile.max())
        assert peaks
        found = {spectrum.omega1_hz[i] for i in peaks}
        # mixed absorptive/dispersive lineshapes shift magnitude maxima by up
        # to about one bin, hence the two-bin bound
        for index in peaks:
            assert np.min(np.abs(expected - spectrum.omega1_hz[index])) <= 2 * bin_width
        # spectrum resolves at least the single-quantum and double/zero
        # quantum groups on both sides of the axis
        assert any(f > 0 for f in found) and any(f < 0 for f in found)


class TestCrossSection:
    def make_hybrid(self, n_t1=64, n_f2=32):
        rng = np.random.default_rng(32)
        grid = rng.normal(size=(n_t1, n_f2)) + 1j * rng.normal(size=(n_t1, n_f2))
        axis = np.linspace(-500.0, 500.0, n_f2)
        t1 = np.arange(n_t1) * 1e-3
        return HybridSpectrum(grid=grid, t1_s=t1, omega2_hz=axis,
                              meta={"t2_s": 0.05, "processing_t2": {"zero_fill": 2}})

    def test_nearest_bin_column(self):
        hybrid = self.make_hybrid()
        request = float(hybrid.omega2_hz[12]) + 0.5
        section = cross_section(hybrid, request)
        b = nearest_bin(hybrid.omega2_hz, request)
        assert b == 12
        assert np.allclose(section.time_trace, hybrid.grid[:, b])
        assert section.bin_hz == hybrid.omega2_hz[b]

    def test_linearity(self):
        hybrid_a = self.make_hybrid()
        hybrid_b = self.make_hybrid()
        summed = HybridSpectrum(grid=hybrid_a.grid + hybrid_b.grid,
                                t1_s=hybrid_a.t1_s, omega2_hz=hybrid_a.omega2_hz,
                                meta=hybrid_a.meta)
        anchor = float(hybrid_a.omega2_hz[20])
        a = cross_section(hybrid_a, anchor)
        b = cross_section(hybrid_b, anchor)
        s = cross_section(summed, anchor)
        assert np.allclose(s.time_trace, a.time_trace + b.time_trace)
        assert np.allclose(s.freq_trace, a.freq_trace + b.freq_trace)

    def test_out_of_range_rejected(self):
        hybrid = self.make_hybrid()
        with pytest.raises(ValueError, match="outside"):
            cross_section(hybrid, 1e4)

    def test_far_bin_warns(self):
        hybrid = self.make_hybrid(n_f2=4)
        hybrid.omega2_hz = np.array([-300.0, -100.0, 100.0, 300.0])
        with pytest.warns(UserWarning, match="half a"):
            cross_section(hybrid, 190.0)

    def test_time_and_frequency_forms_consistent(self):
        hybrid = self.make_hybrid()
        section = cross_section(hybrid, 50.0)
        signal = Signal1D(samples=section.time_trace,
                          dwell_s=float(hybrid.t1_s[1] - hybrid.t1_s[0]),
                          meta={"t2_s": hybrid.meta["t2_s"]})
        again = dft_fid(signal, apodization="matched", zero_fill=2,
                        first_point_half=True)
        assert np.max(np.abs(again.values - section.freq_trace)) < 1e-10

    def test_spectrum_sourced_section_has_frequency_form_only(self, demo_hybrid):
        _, hybrid = demo_hybrid
        spectrum = dft_t1(hybrid)
        section = cross_section(spectrum, 1300.0)
        assert section.time_trace is None
        b = nearest_bin(spectrum.omega2_hz, 1300.0)
        assert np.allclose(section.freq_trace, spectrum.grid[:, b])
        assert np.allclose(section.omega1_hz, spectrum.omega1_hz)

    def test_non_power_of_two_lengths_zero_filled(self):
        signal = Signal1D(samples=np.ones(100, dtype=complex), dwell_s=1e-3,
                          meta={})
        spectrum = dft_fid(signal, apodization=None, zero_fill=2)
        assert len(spectrum.values) == 256
        assert len(spectrum.omega_hz) == 256

    def test_peakless_trace_near_zero(self):
        # noiseless oscillator without decay: off-line columns are exactly empty
        n_t1, n_t2 = 16, 128
        dwell = 1e-3
        axis = hybrid_omega2_axis(n_t2, dwell, zero_fill=1)
        f = axis[96]
        t2 = np.arange(n_t2) * dwell
        grid = np.tile(np.exp(2j * np.pi * f * t2), (n_t1, 1))
        signal = Signal2D(grid=grid, dwell_t1_s=1e-3, dwell_t2_s=dwell, meta={})
        hybrid = dft_t2(signal, apodization=None, zero_fill=1,
                        first_point_half=False)
        on_peak = cross_section(hybrid, f)
        off_peak = cross_section(hybrid, axis[40])
        assert np.max(np.abs(off_peak.time_trace)) <= 1e-9 * np.max(np.abs(on_peak.time_trace))


class TestPeakAmplitudes:
    @staticmethod
    def table_for(frequencies):
        entries = tuple(
            Transition(qubit=i + 1, upper=0, lower=1, frequency_hz=f)
            for i, f in enumerate(frequencies)
        )
        return TransitionTable(entries=entries)

    def test_zero_signal(self):
        signal = Signal1D(samples=np.zeros(64, dtype=complex), dwell_s=1e-3,
                          meta={"t2_s": 0.05})
        spectrum = dft_fid(signal)
        amps = peak_amplitudes(spectrum, self.table_for([100.0]))
        assert all(abs(v) <= 1e-12 for v in amps.values())

    def test_two_lorentzians_match_closed_form(self):
        n, dwell, tau = 512, 1e-3, 0.05
        axis = np.fft.fftshift(np.fft.fftfreq(2 * n, dwell))
        bin_width = axis[1] - axis[0]
        f1 = float(axis[len(axis) // 2 + 150])          # exactly on a bin
        f2 = float(axis[len(axis) // 2 + 400]) + 0.3 * bin_width  # off bin
        a1, a2 = 2.0, -0.7
        t = np.arange(n) * dwell
        samples = (a1 * np.exp(2j * np.pi * f1 * t) + a2 * np.exp(2j * np.pi * f2 * t)) \
            * np.exp(-t / tau)
        signal = Signal1D(samples=samples, dwell_s=dwell, meta={"t2_s": tau})
        spectrum = dft_fid(signal, apodization=None, zero_fill=2,
                           first_point_half=True)

        def line_sum(amplitude, line_f, read_f):
            rate = 2j * np.pi * (line_f - read_f) - 1.0 / tau
            ratio = np.exp(rate * dwell)
            total = amplitude * (1.0 - ratio ** n) / (1.0 - ratio)
            return total - 0.5 * amplitude  # first-point correction

        amps = peak_amplitudes(spectrum, self.table_for([f1, f2]))
        for read_f, amplitude in zip((f1, f2), amps.values()):
            expected = line_sum(a1, f1, read_f) + line_sum(a2, f2, read_f)
            assert abs(amplitude - expected) < 0.01 * abs(expected)

    def test_overlap_strict_raises(self):
        signal = Signal1D(samples=np.zeros(64, dtype=complex), dwell_s=1e-3,
                          meta={"t2_s": 0.05})
        spectrum = dft_fid(signal)
        table = self.table_for([100.0, 103.0])
        with pytest.raises(LineOverlapError, match="100"):
            peak_amplitudes(spectrum, table, strict=True)

    def test_overlap_relaxed_warns(self):
        signal = Signal1D(samples=np.zeros(64, dtype=complex), dwell_s=1e-3,
                          meta={"t2_s": 0.05})
        spectrum = dft_fid(signal)
        table = self.table_for([100.0, 103.0])
        with pytest.warns(UserWarning, match="closer than"):
            peak_amplitudes(spectrum, table, strict=False)

    def test_out_of_axis_rejected(self):
        signal = Signal1D(samples=np.zeros(64, dtype=complex), dwell_s=1e-3,
                          meta={"t2_s": 0.05})
        spectrum = dft_fid(signal)
        with pytest.raises(ValueError, match="outside"):
            peak_amplitudes(spectrum, self.table_for([1e5]))
