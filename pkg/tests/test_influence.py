import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, signal

from helpers import random_gaussian, random_path_pair, seeds, smooth_path
from wigprop.errors import (
    DivergentIntegral,
    GridMismatch,
    InadmissibleState,
    NonPositiveParameter,
    NonPositiveWidth,
    NonUniformGrid,
    NumericalFailure,
    QuadratureUnderflow,
)
from wigprop.influence import (
    ANTIDERIVATIVES,
    Coupling,
    InadmissibleInitialState,
    InfluencePhase,
    MemoryKernels,
    OscillatorSpec,
    PacketParams,
    PathPair,
    SpectralDensity,
    Thermal,
    Vacuum,
    kernels_from_spectral_density,
    log_expectation,
    phase_collection,
    phase_continuum,
    phase_gaussian_packet,
    phase_oscillator,
    phase_single_general,
    phase_thermal,
    phase_vacuum,
    trapezoid_weights,
    triangle_weights,
)
from wigprop.states import GaussianWignerState, GridWignerState, gaussian_packet, thermal_oscillator


def osc(M=1.0, omega=1.0, gamma=0.7, initial=None):
    return OscillatorSpec(M, omega, Coupling(strength=gamma), Vacuum() if initial is None else initial)


def assert_phase_close(a: InfluencePhase, b: InfluencePhase, rel: float, abs_: float = 1e-14):
    scale = max(abs(a.value), abs(b.value))
    assert abs(a.value - b.value) <= rel * scale + abs_, (a.value, b.value)


def random_osc(rng, kind):
    M, w, gam = rng.uniform(0.5, 2.0), rng.uniform(0.3, 3.0), rng.uniform(-1.5, 1.5)
    if kind == "vacuum":
        init = Vacuum()
    elif kind == "thermal":
        init = Thermal(rng.uniform(0.2, 5.0))
    else:
        init = PacketParams(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 2.0))
    return OscillatorSpec(M, w, Coupling(strength=gam), init)


def general_equivalent(o: OscillatorSpec, hbar: float) -> OscillatorSpec:
    init = o.initial
    if isinstance(init, Vacuum):
        g = gaussian_packet(0.0, 0.0, math.sqrt(hbar / (2 * o.M * o.omega)), hbar)
    elif isinstance(init, Thermal):
        g = thermal_oscillator(o.M, o.omega, init.beta, hbar)
    else:
        g = gaussian_packet(init.u0, init.p0, init.delta, hbar)
    return OscillatorSpec(o.M, o.omega, o.coupling, g)


class TestQuadratureWeights:
    def test_triangle_integrates_linear(self):
        n, h = 11, 0.1
        t = np.arange(n) * h
        L = triangle_weights(n, h)
        np.testing.assert_allclose(L @ t, t**2 / 2, atol=1e-15)
        np.testing.assert_allclose(L[-1], trapezoid_weights(n, h))


class TestPathPair:
    def test_non_uniform(self):
        with pytest.raises(NonUniformGrid):
            PathPair([0.0, 0.1, 0.3], [0, 0, 0], [0, 0, 0])

    def test_too_short(self):
        with pytest.raises(Exception):
            PathPair([0.0], [0.0], [0.0])


class TestSingleOscillator:
    def test_uncoupled(self):
        paths = random_path_pair(np.random.default_rng(0))
        o = OscillatorSpec(1.0, 1.0, Coupling(strength=0.0), gaussian_packet(0.3, 0.2, 0.8))
        ph = phase_single_general(paths, o)
        assert ph.value == 0 and ph.functional == 1.0 and ph.abs_F == 1.0

    def test_diagonal_paths(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0, 2, 51)
        x = smooth_path(rng, t)
        paths = PathPair(t, x, x)
        for o in (osc(initial=gaussian_packet(1, 1, 1)), osc(), osc(initial=Thermal(0.5)),
                  osc(initial=PacketParams(0.3, 0.1, 0.5))):
            assert phase_oscillator(paths, o).value == 0

    def test_coherent_state_is_vacuum(self):
        paths = random_path_pair(np.random.default_rng(2))
        M, w, hbar = 1.3, 0.8, 0.6
        o = osc(M, w, 0.9, gaussian_packet(0, 0, math.sqrt(hbar / (2 * M * w)), hbar))
        assert_phase_close(phase_single_general(paths, o, hbar), phase_vacuum(paths, osc(M, w, 0.9), hbar), 1e-8)

    def test_packet_drive_terms_vanish_at_rest(self):
        paths = random_path_pair(np.random.default_rng(3))
        at_rest = phase_gaussian_packet(paths, osc(initial=PacketParams(0, 0, 0.9)))
        moving = phase_gaussian_packet(paths, osc(initial=PacketParams(0.4, -0.3, 0.9)))
        assert at_rest.im == pytest.approx(moving.im, rel=1e-14)
        self_term = phase_vacuum(paths, osc()).re
        assert at_rest.re == pytest.approx(self_term, rel=1e-14)
        assert moving.re != pytest.approx(self_term, rel=1e-6)

    def test_packet_with_coherent_width_is_vacuum(self):
        paths = random_path_pair(np.random.default_rng(4))
        M, w, hbar = 0.7, 1.9, 1.3
        pk = PacketParams(0, 0, math.sqrt(hbar / (2 * M * w)))
        assert_phase_close(phase_gaussian_packet(paths, osc(M, w, 1.1, pk), hbar),
                           phase_vacuum(paths, osc(M, w, 1.1), hbar), 1e-12)

    def test_vacuum_constant_paths_closed_form(self):
        x0, dlt, gam, M, w, T = 0.3, 0.2, 1.0, 1.0, 1.0, 1.0
        n = 4001
        t = np.linspace(0, T, n)
        paths = PathPair(t, np.full(n, x0), np.full(n, x0 + dlt))
        g, s = -gam * dlt, gam * (2 * x0 + dlt)
        re = g * s / (2 * M * w) * (T / w - math.sin(w * T) / w**2)
        im = g * g / (4 * M * w) * (2 - 2 * math.cos(w * T)) / w**2
        ph = phase_vacuum(paths, osc(M, w, gam))
        assert ph.re == pytest.approx(re, abs=1e-9)
        assert ph.im == pytest.approx(im, abs=1e-9)

    def test_vacuum_positivity_1000_pairs(self):
        rng = np.random.default_rng(5)
        worst = math.inf
        for _ in range(1000):
            paths = random_path_pair(rng, n=41)
            worst = min(worst, phase_vacuum(paths, random_osc(rng, "vacuum")).im)
        assert worst >= -1e-10

    @pytest.mark.parametrize("omega", [0.3, 1.0, 7.0])
    def test_cos_kernel_gram_is_psd(self, omega):
        n, h = 81, 0.05
        t = np.arange(n) * h
        sw = np.sqrt(trapezoid_weights(n, h))
        gram = sw[:, None] * np.cos(omega * (t[:, None] - t[None, :])) * sw[None, :]
        assert np.linalg.eigvalsh(gram).min() >= -1e-12 * np.abs(gram).max()

    def test_thermal_ratio_is_coth(self):
        paths = random_path_pair(np.random.default_rng(6))
        for beta, hbar, w in [(0.3, 1.0, 1.0), (2.0, 0.5, 3.0), (10.0, 1.0, 0.2)]:
            o = osc(omega=w)
            th = phase_thermal(paths, o, hbar, beta)
            vac = phase_vacuum(paths, o, hbar)
            assert th.re == vac.re
            assert th.im / vac.im == pytest.approx(1 / math.tanh(beta * hbar * w / 2), rel=1e-13)

    def test_thermal_zero_temperature(self):
        paths = random_path_pair(np.random.default_rng(7))
        o = osc(initial=Thermal(1e4))
        assert abs(phase_thermal(paths, o).value - phase_vacuum(paths, o).value) <= 1e-10

    def test_thermal_matches_general(self):
        paths = random_path_pair(np.random.default_rng(8))
        o = osc(1.2, 0.9, 0.8, Thermal(0.7))
        assert_phase_close(phase_thermal(paths, o), phase_single_general(paths, general_equivalent(o, 1.0)), 1e-8)

    @pytest.mark.parametrize("kind", ["vacuum", "thermal", "packet"])
    def test_closed_forms_match_general_100_pairs(self, kind):
        rng = np.random.default_rng({"vacuum": 10, "thermal": 11, "packet": 12}[kind])
        closed = {"vacuum": phase_vacuum, "thermal": phase_thermal, "packet": phase_gaussian_packet}[kind]
        for _ in range(100):
            paths = random_path_pair(rng, n=int(rng.integers(20, 150)))
            o = random_osc(rng, kind)
            hbar = rng.uniform(0.3, 2.0)
            assert_phase_close(closed(paths, o, hbar), phase_single_general(paths, general_equivalent(o, hbar), hbar), 1e-7)

    def test_grid_initial_state(self):
        paths = random_path_pair(np.random.default_rng(13), n=61, T=1.0)
        g = GaussianWignerState([0.2, -0.1], [[0.7, 0.1], [0.1, 0.5]])
        f = g.render(np.linspace(-8, 8, 201), np.linspace(-8, 8, 201))
        o = osc(1.0, 1.0, 0.5)
        a = phase_single_general(paths, OscillatorSpec(1.0, 1.0, o.coupling, f))
        b = phase_single_general(paths, OscillatorSpec(1.0, 1.0, o.coupling, g))
        assert_phase_close(a, b, 1e-8)

    def test_grid_inadmissible(self):
        x = np.linspace(-1, 1, 21)
        v = np.zeros((21, 21))
        v[10, 10] = 1 / (x[1] - x[0]) ** 2
        o = OscillatorSpec(1.0, 1.0, Coupling(strength=1.0), GridWignerState(x, x, v))
        with pytest.raises(InadmissibleInitialState):
            phase_single_general(random_path_pair(np.random.default_rng(0), 11), o)
        assert issubclass(InadmissibleInitialState, InadmissibleState)

    def test_underflow(self):
        # a grid whose signed mass cancels exactly has no logarithm
        x = np.linspace(-1, 1, 3)
        v = np.zeros((3, 3))
        v[0, 1], v[2, 1] = 1.0, -1.0
        f = GridWignerState(x, x, v, norm_tol=None)
        with pytest.raises(QuadratureUnderflow):
            log_expectation(f, np.array([0.0, 0.0]), 1.0)

    def test_nonlinear_coupling(self):
        paths = random_path_pair(np.random.default_rng(14))
        lin = OscillatorSpec(1.0, 1.0, Coupling(func=lambda x: 0.7 * x), Thermal(0.4))
        ref = osc(1.0, 1.0, 0.7, Thermal(0.4))
        assert_phase_close(phase_thermal(paths, lin), phase_thermal(paths, ref), 1e-14)
        cubic = OscillatorSpec(1.0, 1.0, Coupling(func=lambda x: x + 0.2 * x**3), Thermal(0.4))
        assert_phase_close(phase_thermal(paths, cubic), phase_single_general(paths, general_equivalent(cubic, 1.0)), 1e-8)

    def test_errors(self):
        paths = random_path_pair(np.random.default_rng(15), 11)
        with pytest.raises(NonPositiveParameter):
            phase_thermal(paths, osc(), beta=0.0)
        with pytest.raises(NonPositiveWidth):
            phase_gaussian_packet(paths, osc(initial=PacketParams(0, 0, 0.0)))
        with pytest.raises(NonPositiveParameter):
            OscillatorSpec(0.0, 1.0, Coupling(strength=1.0))
        with pytest.raises(NumericalFailure):
            InfluencePhase(complex(0.0, -1e-3))

    def test_second_order_convergence(self):
        T = 2.0
        o = osc(1.0, 2.0, 1.0, PacketParams(0.3, 0.4, 0.6))

        def xs(t):
            return np.sin(1.3 * t) + 0.2 * t

        def xps(t):
            return np.cos(0.7 * t)

        def phase(n):
            t = np.linspace(0, T, n)
            return phase_gaussian_packet(PathPair(t, xs(t), xps(t)), o).value

        ref = phase(8 * 256 + 1)
        errs = [abs(phase(k * 32 + 1) - ref) for k in (1, 2, 4)]
        assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5, errs


class TestSymmetry:
    @settings(max_examples=40, deadline=None)
    @given(seeds, st.sampled_from(["vacuum", "thermal", "packet", "general"]))
    def test_swap(self, seed, kind):
        rng = np.random.default_rng(seed)
        paths = random_path_pair(rng, n=41)
        if kind == "general":
            o = OscillatorSpec(1.0, 1.3, Coupling(strength=0.8), random_gaussian(rng))
        else:
            o = random_osc(rng, kind)
        a, b = phase_oscillator(paths, o), phase_oscillator(paths.swapped(), o)
        scale = max(abs(a.value), 1e-300)
        assert abs(a.re + b.re) <= 1e-10 * scale
        assert abs(a.im - b.im) <= 1e-10 * scale
        assert a.im >= -1e-10

    def test_swap_continuum(self):
        rng = np.random.default_rng(3)
        paths = random_path_pair(rng, n=41, T=1.0)
        k = kernels_from_spectral_density(SpectralDensity.ohmic(0.5, 20.0), 1.0, 1.0, 1.0, 81)
        for scheme in ("trapezoid", "product"):
            a, b = phase_continuum(paths, k, scheme=scheme), phase_continuum(paths.swapped(), k, scheme=scheme)
            assert abs(a.re + b.re) <= 1e-10 * abs(a.value)
            assert abs(a.im - b.im) <= 1e-10 * abs(a.value)


class TestCollection:
    def test_single(self):
        paths = random_path_pair(np.random.default_rng(20))
        o = osc(initial=Thermal(0.8))
        assert phase_collection(paths, [o]).value == phase_thermal(paths, o).value

    def test_duplicate_doubles(self):
        paths = random_path_pair(np.random.default_rng(21))
        o = osc(initial=PacketParams(0.1, 0.2, 0.7))
        assert phase_collection(paths, [o, o]).value == 2 * phase_gaussian_packet(paths, o).value

    def test_left_to_right_sum(self):
        rng = np.random.default_rng(22)
        paths = random_path_pair(rng)
        members = [random_osc(rng, k) for k in ("vacuum", "thermal", "packet", "thermal")]
        total = 0j
        for o in members:
            total += phase_oscillator(paths, o).value
        assert phase_collection(paths, members).value == total

    def test_two_thermal_oscillators_n_term_sum(self):
        rng = np.random.default_rng(23)
        paths = random_path_pair(rng, n=121)
        beta, hbar = 0.9, 0.8
        members = [osc(1.0, 0.7, 0.5, Thermal(beta)), osc(2.0, 1.9, -1.2, Thermal(beta))]
        t, x, xp = paths.times, paths.x, paths.x_prime
        s, g = x + xp, x - xp
        re = im = 0.0
        for o in members:
            gam, M, w = o.coupling.strength, o.M, o.omega
            # inner integrals by per-node trapezoid over [t_0, t_i]
            inner = np.array([np.trapezoid(s[: i + 1] * np.sin(w * (t[i] - t[: i + 1])), t[: i + 1]) if i else 0.0
                              for i in range(t.size)])
            re += gam**2 / (2 * M * w) * np.trapezoid(g * inner, t)
            c = np.trapezoid(g * np.cos(w * t), t)
            sn = np.trapezoid(g * np.sin(w * t), t)
            im += gam**2 / (4 * M * w) / math.tanh(beta * hbar * w / 2) * (c * c + sn * sn)
        ph = phase_collection(paths, members, hbar)
        assert ph.re == pytest.approx(re, rel=1e-8)
        assert ph.im == pytest.approx(im, rel=1e-8)


def line_kernels(o, beta, hbar, t_max, n_t):
    return kernels_from_spectral_density(SpectralDensity.from_oscillators([o]), beta, hbar, t_max, n_t)


class TestKernels:
    @pytest.mark.parametrize("sd", [SpectralDensity.ohmic(0.5, 10.0), SpectralDensity.ohmic(1.0, 3.0, "sharp"),
                                    SpectralDensity.lines([1.0, 2.0], [0.3, 0.1]),
                                    SpectralDensity.sampled([0.5, 1.0, 2.0, 4.0], [0.0, 1.0, 0.5, 0.0])])
    def test_A_vanishes_at_zero(self, sd):
        k = kernels_from_spectral_density(sd, 1.0, 1.0, 2.0, 21)
        assert k.A[0] == 0.0
        assert np.all(np.isfinite(k.R))

    def test_single_line(self):
        o = osc(1.3, 2.1, 0.6)
        k = line_kernels(o, 0.7, 1.0, 3.0, 61)
        amp = 0.6**2 / (1.3 * 2.1)
        np.testing.assert_allclose(k.A, amp * np.sin(2.1 * k.times), atol=1e-14)
        np.testing.assert_allclose(k.R, amp / 4 / math.tanh(0.35 * 2.1) * np.cos(2.1 * k.times), atol=1e-14)

    def test_ohmic_noise_mass(self):
        eta, T = 0.5, 1.0
        for wc in (50.0, 200.0):
            k = kernels_from_spectral_density(SpectralDensity.ohmic(eta, wc), 1 / T, 0.01, 2.0, 4001)
            mass = integrate.simpson(k.R, x=k.times)
            assert mass == pytest.approx(eta * T / 2, rel=0.01)

    def test_sampled_matches_quadrature(self):
        sd = SpectralDensity.sampled([0.5, 1.0, 2.0, 4.0], [0.0, 1.0, 0.5, 0.0])
        k = kernels_from_spectral_density(sd, 1.0, 1.0, 2.0, 5)
        ref, _ = integrate.quad(lambda w: float(sd(w)) * math.sin(w * 2.0), 0.5, 4.0, points=[1.0, 2.0])
        assert k.A[-1] == pytest.approx(ref, rel=1e-8)

    def test_antiderivatives_consistent(self):
        k = kernels_from_spectral_density(SpectralDensity.ohmic(0.5, 5.0), 2.0, 1.0, 3.0, 601)
        np.testing.assert_allclose(k.A1, integrate.cumulative_simpson(k.A, x=k.times, initial=0), atol=1e-6)
        for prev, name in zip(("A", "A1", "A2", "A3", "R", "R1", "R2", "R3"), ANTIDERIVATIVES):
            num = integrate.cumulative_simpson(getattr(k, prev), x=k.times, initial=0)
            np.testing.assert_allclose(getattr(k, name), num, atol=1e-6, err_msg=name)

    def test_line_antiderivatives_small_times(self):
        # series branch near t = 0 against the closed forms
        t, w, v = 1e-3, 2.0, 0.5
        k = kernels_from_spectral_density(SpectralDensity.lines([w], [v]), 1.0, 1.0, t, 3)
        assert k.A4[-1] == pytest.approx(v * (w * t) ** 5 / 120 / w**4, rel=1e-6)
        assert k.R3[-1] / k.R[0] == pytest.approx(t**3 / 6, rel=1e-6)

    def test_divergent(self):
        with pytest.raises(DivergentIntegral):
            SpectralDensity.ohmic(0.5, None)
        with pytest.raises(DivergentIntegral):
            SpectralDensity.ohmic(0.5, math.inf)

    def test_json_round_trip(self):
        for sd in (SpectralDensity.ohmic(0.5, 3.0, "sharp"), SpectralDensity.lines([1.0], [0.2])):
            assert SpectralDensity.from_json(sd.to_json()) == sd


class TestContinuum:
    def test_matches_thermal_for_one_line(self):
        rng = np.random.default_rng(30)
        paths = random_path_pair(rng, n=81, T=2.0)
        o = osc(1.1, 1.7, 0.8, Thermal(0.6))
        k = line_kernels(o, 0.6, 1.0, 2.0, 161)
        ref = phase_thermal(paths, o)
        assert_phase_close(phase_continuum(paths, k, scheme="trapezoid"), ref, 1e-6)
        # exact inner integration differs from the trapezoid rule by O(h^2)
        assert_phase_close(phase_continuum(paths, k, scheme="product"), ref, 1e-3)

    def test_diagonal(self):
        t = np.linspace(0, 1, 21)
        x = np.sin(t)
        k = kernels_from_spectral_density(SpectralDensity.ohmic(0.5, 10.0), 1.0, 1.0, 1.0, 21)
        assert phase_continuum(PathPair(t, x, x), k).value == 0

    def test_delta_limit(self):
        rng = np.random.default_rng(31)
        eta, T, hbar = 0.5, 1.0, 0.01
        paths = random_path_pair(rng, n=41, T=1.0)
        k = kernels_from_spectral_density(SpectralDensity.ohmic(eta, 100 / paths.dt), 1 / T, hbar, 1.0, 41)
        ph = phase_continuum(paths, k, hbar)
        g = paths.x - paths.x_prime
        target = eta * T * np.trapezoid(g * g, paths.times) / hbar
        assert ph.im == pytest.approx(target, rel=0.02)

    def test_product_exact_for_linear_paths(self):
        # refining a piecewise-linear path leaves the product phase unchanged
        rng = np.random.default_rng(32)
        paths = random_path_pair(rng, n=21, T=1.5)
        sd = SpectralDensity.ohmic(0.7, 60.0)
        ph = phase_continuum(paths, kernels_from_spectral_density(sd, 2.0, 1.0, 1.5, 21), scheme="product")
        tf = np.linspace(0, 1.5, 101)
        fine = PathPair(tf, np.interp(tf, paths.times, paths.x), np.interp(tf, paths.times, paths.x_prime))
        ref = phase_continuum(fine, kernels_from_spectral_density(sd, 2.0, 1.0, 1.5, 101), scheme="product")
        assert_phase_close(ph, ref, 1e-7)

    def test_product_vs_classical_lorentzian(self):
        # in the classical regime the exponential cutoff gives a Lorentzian noise kernel
        rng = np.random.default_rng(33)
        eta, T, hbar, wc = 0.5, 1.0, 1e-5, 2000.0
        paths = random_path_pair(rng, n=21, T=1.0)
        k = kernels_from_spectral_density(SpectralDensity.ohmic(eta, wc), 1 / T, hbar, 1.0, 21)
        tf = np.linspace(0, 1, 100001)
        g = np.interp(tf, paths.times, paths.x - paths.x_prime)
        lag = np.arange(-tf.size + 1, tf.size) * tf[1]
        R = eta * T / np.pi * wc / (1 + (wc * lag) ** 2)
        inner = signal.fftconvolve(R, g, mode="valid") * tf[1]
        ref = np.trapezoid(g * inner, tf)
        assert phase_continuum(paths, k, hbar).im * hbar == pytest.approx(ref, rel=1e-4)

    def test_grid_mismatch(self):
        paths = random_path_pair(np.random.default_rng(0), n=11, T=1.0)
        short = MemoryKernels(np.linspace(0, 0.5, 6), np.zeros(6), np.ones(6))
        with pytest.raises(GridMismatch):
            phase_continuum(paths, short)
        odd = MemoryKernels(np.linspace(0, 1.0, 8), np.zeros(8), np.ones(8))
        with pytest.raises(GridMismatch):
            phase_continuum(paths, odd)
