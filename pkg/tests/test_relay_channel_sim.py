import numpy as np
import pytest

from dstc.code_library import (
    LinearDispersionCode,
    alamouti,
    block_diagonal_extend,
    clifford_4x4,
    cuw_ssd,
    repetition_control,
    scaled_relay_pairs,
    square_cod,
)
from dstc.constraint_checker import random_compliant_code
from dstc.diversity_analyzer import Constellation
from dstc.errors import ContractError, DimensionError, InsufficientDataError, ParameterError
from dstc.relay_channel_sim import (
    BerPoint,
    ChannelRealization,
    PowerAllocation,
    ReceivedSignal,
    SimConfig,
    _Kernel,
    codebook_symbol_vectors,
    dstc_matrix,
    estimate_diversity,
    group_ml_decode,
    ml_decode,
    monte_carlo_ber,
    noise_covariance,
    noise_covariance_real,
    quadrature_pair_values,
    sample_channel,
    simulate_transmission,
    whiten,
    wilson_interval,
)


def make_signal(code, s, ch, pa, rng=None, add_noise=True):
    return simulate_transmission(code, s, ch, pa, rng=rng, add_noise=add_noise)


class TestPowerAllocation:
    def test_equal_split_satisfies_identity(self):
        pa = PowerAllocation.equal_split(alamouti(), 10.0)
        assert pa.pi1 + pa.pi2 + pa.n_relays * pa.pi3 == pytest.approx(pa.t1 + pa.t2)

    def test_violating_split_rejected(self):
        with pytest.raises(ParameterError):
            PowerAllocation(1.0, 0.0, 1.0, 10.0, t1=2, t2=2, n_relays=2)  # sums to 3

    def test_negative_power_rejected(self):
        with pytest.raises(ParameterError):
            PowerAllocation(2.0, 0.0, 1.0, -1.0, t1=2, t2=2, n_relays=2)


class TestSampleChannel:
    def test_moments(self):
        rng = np.random.default_rng(0)
        g2 = np.empty(0)
        f2 = np.empty(0)
        for _ in range(10):
            ch = sample_channel(100_000, True, rng)
            g2 = np.concatenate([g2, np.abs(ch.g) ** 2])
            f2 = np.concatenate([f2, np.asarray(ch.f) ** 2])
        assert np.mean(g2) == pytest.approx(1.0, abs=0.01)
        assert np.mean(f2) == pytest.approx(1.0, abs=0.01)

    def test_phase_compensated_gains_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            ch = sample_channel(8, True, rng)
            assert np.all(np.asarray(ch.f) >= 0)

    def test_complex_gains_without_compensation(self):
        rng = np.random.default_rng(2)
        ch = sample_channel(4, False, rng)
        assert np.iscomplexobj(ch.f)

    def test_invariant_enforced(self):
        with pytest.raises(ParameterError):
            ChannelRealization(0j, np.ones(1, dtype=complex), np.array([-0.5]), True)


class TestTransmissionModel:
    @pytest.mark.parametrize(
        "code",
        [alamouti(), square_cod(4), clifford_4x4(), block_diagonal_extend(cuw_ssd(4), 2),
         repetition_control()],
        ids=lambda c: c.name,
    )
    def test_noiseless_matches_dispersion_matrix(self, code):
        rng = np.random.default_rng(5)
        pa = PowerAllocation.equal_split(code, 50.0)
        for _ in range(20):
            ch = sample_channel(code.N, True, rng)
            s = (rng.standard_normal(code.K) + 1j * rng.standard_normal(code.K)) / np.sqrt(code.K)
            sig = make_signal(code, s, ch, pa, add_noise=False)
            model = pa.combined_scale * dstc_matrix(code, s, pa) @ ch.h
            assert np.max(np.abs(sig.y - model)) <= 1e-10

    def test_noiseless_random_codes(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            code = random_compliant_code(rng)
            pa = PowerAllocation.equal_split(code, 20.0)
            ch = sample_channel(code.N, True, rng)
            s = rng.standard_normal(code.K) + 1j * rng.standard_normal(code.K)
            sig = make_signal(code, s, ch, pa, add_noise=False)
            model = pa.combined_scale * dstc_matrix(code, s, pa) @ ch.h
            assert np.max(np.abs(sig.y - model)) <= 1e-10

    def test_single_relay_identity_chain(self):
        # one relay with A = I/sqrt(2): y2 = relay_gain * g1 * (c1 f1 s + v1) with zero noise
        wi = (np.array([[1.0], [0.0]], dtype=complex), np.array([[0.0], [1.0]], dtype=complex))
        wq = (np.array([[1j], [0.0]]), np.array([[0.0], [1j]]))
        code = LinearDispersionCode(wi, wq, name="column")
        pa = PowerAllocation.equal_split(code, 25.0)
        ch = ChannelRealization(0.3 + 0.1j, np.array([0.7 - 0.2j]), np.array([0.9]), True)
        s = np.array([0.5 + 0.25j, -0.3 + 0.4j])
        sig = make_signal(code, s, ch, pa, add_noise=False)
        expected = pa.relay_gain * ch.g[0] * (pa.broadcast_amp * 0.9 * s) / np.sqrt(2)
        assert np.allclose(sig.y2, expected)
        assert np.allclose(sig.y1, pa.broadcast_amp * ch.g0 * s)

    def test_dstc_matrix_columns(self):
        code = alamouti()
        pa = PowerAllocation.equal_split(code, 10.0)
        s = np.array([0.2 + 0.1j, -0.4 + 0.3j])
        mat = dstc_matrix(code, s, pa)
        top = np.sqrt((pa.pi1 * pa.p + 1) / (pa.pi3 * pa.p)) * s
        assert np.allclose(mat[:2, 0], top)
        assert np.allclose(mat[2:, 0], 0)
        for i, pair in enumerate(scaled_relay_pairs(code)):
            assert np.allclose(mat[2:, i + 1], pair.a @ s + pair.b @ np.conj(s))
            assert np.allclose(mat[:2, i + 1], 0)

    def test_source_cooperation_column(self):
        code = alamouti()
        t = code.K + code.T
        pa = PowerAllocation(pi1=1.5, pi2=1.0, pi3=(t - 2.5) / code.N, p=10.0,
                             t1=code.K, t2=code.T, n_relays=code.N)
        a0 = np.eye(2, dtype=complex)
        s = np.array([0.1 + 0.2j, 0.3 - 0.1j])
        mat = dstc_matrix(code, s, pa, a0=a0)
        coeff = np.sqrt(pa.pi2 * (pa.pi1 * pa.p + 1) / (pa.pi3 * pa.pi1 * pa.p))
        assert np.allclose(mat[2:, 0], coeff * s)
        ch = ChannelRealization(0.5 + 0.5j, np.full(2, 0.1 + 0.2j), np.array([0.4, 1.2]), True)
        sig = simulate_transmission(code, s, ch, pa, add_noise=False, a0=a0)
        model = pa.combined_scale * mat @ ch.h
        assert np.max(np.abs(sig.y - model)) <= 1e-10

    def test_dimension_validation(self):
        pa = PowerAllocation.equal_split(alamouti(), 10.0)
        ch = sample_channel(3, True, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            simulate_transmission(alamouti(), np.zeros(2, dtype=complex), ch, pa, add_noise=False)


class TestNoiseCovariance:
    def test_forward_only_unitary_relay(self):
        # B = 0 and A = c * unitary: cooperation block is (1 + kappa c^2 sum|g|^2) I
        wi = (np.array([[1.0], [0.0]], dtype=complex), np.array([[0.0], [1.0]], dtype=complex))
        wq = (np.array([[1j], [0.0]]), np.array([[0.0], [1j]]))
        code = LinearDispersionCode(wi, wq, name="column")
        pa = PowerAllocation.equal_split(code, 10.0)
        ch = ChannelRealization(0.1j, np.array([1.3 - 0.4j]), np.array([1.0]), True)
        om = noise_covariance(code, ch, pa)
        expected = 1 + pa.relay_gain_sq * 0.5 * abs(ch.g[0]) ** 2
        assert np.allclose(om[2:, 2:], expected * np.eye(2))
        assert np.allclose(om[:2, :2], np.eye(2))

    def test_clifford_block_scalar(self):
        code = clifford_4x4()
        pa = PowerAllocation.equal_split(code, 30.0)
        ch = sample_channel(code.N, True, np.random.default_rng(3))
        om = noise_covariance(code, ch, pa)
        coop = om[4:, 4:]
        assert np.allclose(coop, coop[0, 0] * np.eye(4), atol=1e-12)

    def test_empirical_agreement(self):
        rng = np.random.default_rng(4)
        code = clifford_4x4()
        pa = PowerAllocation.equal_split(code, 40.0)
        ch = sample_channel(code.N, True, rng)
        n = 100_000
        cn = lambda *sh: (rng.standard_normal(sh) + 1j * rng.standard_normal(sh)) / np.sqrt(2)
        noise2 = cn(n, pa.t2)
        for pair, gi in zip(scaled_relay_pairs(code), ch.g):
            v = cn(n, pa.t1)
            noise2 = noise2 + pa.relay_gain * gi * (v @ pair.a.T + np.conj(v) @ pair.b.T)
        stacked = np.concatenate([cn(n, pa.t1), noise2], axis=1)
        emp = stacked.T.conj() @ stacked / n
        om = noise_covariance(code, ch, pa)
        assert np.linalg.norm(emp.T - om) / np.linalg.norm(om) <= 0.02
        real = np.concatenate([stacked.real, stacked.imag], axis=1)
        emp_real = real.T @ real / n
        cov_real = noise_covariance_real(code, ch, pa)
        assert np.linalg.norm(emp_real - cov_real) / np.linalg.norm(cov_real) <= 0.02


class TestWhitening:
    def _signal(self, code, p=30.0, seed=0):
        rng = np.random.default_rng(seed)
        pa = PowerAllocation.equal_split(code, p)
        ch = sample_channel(code.N, True, rng)
        sym, _, _ = codebook_symbol_vectors(code, Constellation.qpsk())
        sig = simulate_transmission(code, sym[3], ch, pa, rng)
        return sig, ch, pa, sym

    def test_identity_covariance_is_noop(self):
        eye = np.eye(4, dtype=complex)
        sig = ReceivedSignal(
            y1=np.array([1 + 1j, 2 - 1j]),
            y2=np.array([0.5j, -0.25]),
            h=np.ones(3, dtype=complex),
            omega=eye,
            cov_real=0.5 * np.eye(8),
        )
        ws = whiten(sig)
        assert np.allclose(ws.y, sig.y)
        assert np.allclose(ws.cov_real, sig.cov_real)

    def test_scalar_covariance_rescales(self):
        omega = np.eye(4, dtype=complex)
        omega[2:, 2:] *= 4.0
        sig = ReceivedSignal(
            y1=np.array([1 + 1j, 2 - 1j]),
            y2=np.array([2.0 + 0j, -4.0 + 0j]),
            h=np.ones(3, dtype=complex),
            omega=omega,
            cov_real=np.diag([0.5] * 2 + [2.0] * 2 + [0.5] * 2 + [2.0] * 2),
        )
        ws = whiten(sig)
        assert np.allclose(ws.y2, sig.y2 / 2.0)
        assert np.allclose(ws.cov_real, 0.5 * np.eye(8))

    def test_decisions_unchanged_by_whitening(self):
        code = clifford_4x4()
        sig, ch, pa, sym = self._signal(code)
        ws = whiten(sig)
        assert ml_decode(ws, code, sym, ch, pa) == ml_decode(sig, code, sym, ch, pa)

    def test_post_whitening_covariance_identity(self):
        rng = np.random.default_rng(8)
        code = random_compliant_code(rng, t=3, n=2, k=2)
        pa = PowerAllocation.equal_split(code, 25.0)
        ch = sample_channel(code.N, True, rng)
        cov = noise_covariance_real(code, ch, pa)
        w = np.linalg.cholesky(np.linalg.inv(cov))
        n = 100_000
        cn = lambda *sh: (rng.standard_normal(sh) + 1j * rng.standard_normal(sh)) / np.sqrt(2)
        noise2 = cn(n, pa.t2)
        for pair, gi in zip(scaled_relay_pairs(code), ch.g):
            v = cn(n, pa.t1)
            noise2 = noise2 + pa.relay_gain * gi * (v @ pair.a.T + np.conj(v) @ pair.b.T)
        stacked = np.concatenate([cn(n, pa.t1), noise2], axis=1)
        real = np.concatenate([stacked.real, stacked.imag], axis=1) @ w
        emp = real.T @ real / n
        dim = emp.shape[0]
        assert np.linalg.norm(emp - np.eye(dim)) / np.sqrt(dim) <= 0.02


class TestMlDecode:
    @pytest.mark.parametrize(
        "code", [alamouti(), square_cod(4), clifford_4x4()], ids=lambda c: c.name
    )
    def test_zero_noise_recovery(self, code):
        rng = np.random.default_rng(9)
        con = Constellation.qpsk()
        pa = PowerAllocation.equal_split(code, 60.0)
        sym, _, _ = codebook_symbol_vectors(code, con)
        for _ in range(30):
            ch = sample_channel(code.N, True, rng)
            m = int(rng.integers(0, len(sym)))
            sig = simulate_transmission(code, sym[m], ch, pa, add_noise=False)
            assert ml_decode(sig, code, sym, ch, pa) == m

    def test_empty_codebook_rejected(self):
        code = alamouti()
        pa = PowerAllocation.equal_split(code, 10.0)
        rng = np.random.default_rng(0)
        ch = sample_channel(code.N, True, rng)
        sym, _, _ = codebook_symbol_vectors(code, Constellation.qpsk())
        sig = simulate_transmission(code, sym[0], ch, pa, rng)
        with pytest.raises(ParameterError):
            ml_decode(sig, code, np.zeros((0, 2)), ch, pa)

    def test_high_snr_nearly_error_free(self):
        cfg = SimConfig(
            code=alamouti(),
            constellation=Constellation.qpsk(),
            snr_db=(40.0,),
            trials=(100_000,),
            seed=12,
        )
        (point,) = monte_carlo_ber(cfg)
        assert point.cw_errors <= 1

    def test_seeded_repeatability(self):
        code = alamouti()
        con = Constellation.qpsk()
        pa = PowerAllocation.equal_split(code, 20.0)
        sym, _, _ = codebook_symbol_vectors(code, con)
        decisions = []
        for _ in range(2):
            rng = np.random.default_rng(77)
            ch = sample_channel(code.N, True, rng)
            sig = simulate_transmission(code, sym[9], ch, pa, rng)
            decisions.append(ml_decode(sig, code, sym, ch, pa))
        assert decisions[0] == decisions[1]


class TestGroupDecode:
    def test_clifford_matches_joint(self):
        code = clifford_4x4()
        con = Constellation.qpsk()
        pa = PowerAllocation.equal_split(code, 30.0)
        sym, _, scale = codebook_symbol_vectors(code, con)
        groups = tuple((2 * m, 2 * m + 1) for m in range(code.K))
        values = [quadrature_pair_values(con, scale)] * code.K
        rng = np.random.default_rng(13)
        for _ in range(200):
            ch = sample_channel(code.N, True, rng)
            m = int(rng.integers(0, len(sym)))
            sig = simulate_transmission(code, sym[m], ch, pa, rng)
            joint = ml_decode(sig, code, sym, ch, pa)
            dec = group_ml_decode(sig, code, groups, values, ch, pa)
            assert dec.joint_index([con.size] * code.K) == joint

    def test_single_group_partition_equals_joint(self):
        code = clifford_4x4()
        con = Constellation.qpsk()
        pa = PowerAllocation.equal_split(code, 25.0)
        sym, _, _ = codebook_symbol_vectors(code, con)
        reals = np.empty((len(sym), 2 * code.K))
        reals[:, 0::2] = sym.real
        reals[:, 1::2] = sym.imag
        rng = np.random.default_rng(14)
        ch = sample_channel(code.N, True, rng)
        sig = simulate_transmission(code, sym[100], ch, pa, rng)
        dec = group_ml_decode(sig, code, (tuple(range(2 * code.K)),), [reals], ch, pa)
        assert dec.group_indices[0] == ml_decode(sig, code, sym, ch, pa)

    def test_invalid_partition_raises_contract_error(self):
        code = clifford_4x4()
        con = Constellation.qpsk()
        pa = PowerAllocation.equal_split(code, 25.0)
        sym, _, scale = codebook_symbol_vectors(code, con)
        bad_groups = ((0, 2), (1, 3), (4, 6), (5, 7))  # splits the coupled (x_kI, x_kQ) pairs
        values = [quadrature_pair_values(con, scale)] * code.K
        rng = np.random.default_rng(15)
        ch = sample_channel(code.N, True, rng)
        sig = simulate_transmission(code, sym[0], ch, pa, rng)
        with pytest.raises(ContractError, match="coupling"):
            group_ml_decode(sig, code, bad_groups, values, ch, pa)

    def test_incomplete_partition_rejected(self):
        code = clifford_4x4()
        pa = PowerAllocation.equal_split(code, 25.0)
        rng = np.random.default_rng(16)
        ch = sample_channel(code.N, True, rng)
        sym, _, scale = codebook_symbol_vectors(code, Constellation.qpsk())
        sig = simulate_transmission(code, sym[0], ch, pa, rng)
        with pytest.raises(ParameterError):
            group_ml_decode(sig, code, ((0, 1),), [np.zeros((1, 2))], ch, pa)


class TestKernel:
    @pytest.mark.parametrize(
        "code",
        [alamouti(), repetition_control(), clifford_4x4()],
        ids=lambda c: c.name,
    )
    def test_batched_decoder_matches_reference(self, code):
        con = Constellation.qpsk()
        cfg = SimConfig(code=code, constellation=con, snr_db=(10.0,), trials=(1,), seed=21)
        kernel = _Kernel(cfg)
        pa = PowerAllocation.equal_split(code, 30.0)
        rng = np.random.Generator(np.random.Philox(key=np.array([21, 0], dtype=np.uint64)))
        idx, g0, g, f, y1, y2 = kernel.simulate_batch(pa, rng, 200)
        dec = kernel.decode_batch(pa, g0, g, f, y1, y2)
        sym, _, _ = codebook_symbol_vectors(code, con)
        for t in range(200):
            ch = ChannelRealization(complex(g0[t]), g[t], f[t], True)
            sig = ReceivedSignal(
                y1[t], y2[t], ch.h, noise_covariance(code, ch, pa),
                noise_covariance_real(code, ch, pa),
            )
            assert ml_decode(sig, code, sym, ch, pa) == dec[t]

    def test_general_noise_path_matches_reference(self):
        # mixed conjugation forces the full real-covariance whitening path
        wi = (np.eye(2, dtype=complex), np.array([[0, 1], [0, 0]], dtype=complex))
        wq = (np.array([[1j, 0], [0, 0]]), np.array([[0, 1j], [1j, 0]]))
        code = LinearDispersionCode(wi, wq, name="mixed")
        con = Constellation.qpsk()
        cfg = SimConfig(code=code, constellation=con, snr_db=(10.0,), trials=(1,), seed=22)
        kernel = _Kernel(cfg)
        assert kernel.noise_path == "general"
        pa = PowerAllocation.equal_split(code, 12.0)
        rng = np.random.Generator(np.random.Philox(key=np.array([22, 0], dtype=np.uint64)))
        idx, g0, g, f, y1, y2 = kernel.simulate_batch(pa, rng, 150)
        dec = kernel.decode_batch(pa, g0, g, f, y1, y2)
        sym, _, _ = codebook_symbol_vectors(code, con)
        for t in range(150):
            ch = ChannelRealization(complex(g0[t]), g[t], f[t], True)
            sig = ReceivedSignal(
                y1[t], y2[t], ch.h, noise_covariance(code, ch, pa),
                noise_covariance_real(code, ch, pa),
            )
            assert ml_decode(sig, code, sym, ch, pa) == dec[t]


class TestMonteCarlo:
    def test_zero_power_limit_is_guessing(self):
        cfg = SimConfig(
            code=alamouti(),
            constellation=Constellation.qpsk(),
            snr_db=(-40.0,),
            trials=(40_000,),
            seed=31,
        )
        (point,) = monte_carlo_ber(cfg)
        lo, hi = wilson_interval(point.cw_errors, point.trials)
        assert lo <= 15.0 / 16.0 <= hi

    def test_thread_count_does_not_change_counts(self):
        base = dict(
            code=alamouti(),
            constellation=Constellation.qpsk(),
            snr_db=(12.0, 18.0),
            trials=(30_000, 30_000),
            seed=5,
            chunk=4096,
        )
        one = monte_carlo_ber(SimConfig(**base, threads=1))
        many = monte_carlo_ber(SimConfig(**base, threads=4))
        assert [(p.cw_errors, p.bit_errors) for p in one] == [
            (p.cw_errors, p.bit_errors) for p in many
        ]

    def test_trial_broadcast(self):
        cfg = SimConfig(
            code=alamouti(),
            constellation=Constellation.qpsk(),
            snr_db=(0.0, 5.0),
            trials=(1000,),
            seed=1,
        )
        assert cfg.trials == (1000, 1000)

    def test_full_csi_flag_runs(self):
        cfg = SimConfig(
            code=alamouti(),
            constellation=Constellation.qpsk(),
            snr_db=(10.0,),
            trials=(5_000,),
            seed=2,
            partial_csi=False,
        )
        (point,) = monte_carlo_ber(cfg)
        assert 0 <= point.ber <= 1

    def test_full_diversity_code_beats_rank_deficient_control(self):
        snr = (18.0, 24.0)
        base = dict(constellation=Constellation.qpsk(), snr_db=snr, trials=(150_000,), seed=44)
        full = monte_carlo_ber(SimConfig(code=alamouti(), **base))
        ctrl = monte_carlo_ber(SimConfig(code=repetition_control(), **base))
        for pf, pc in zip(full, ctrl):
            assert pf.ci_high < pc.ci_low  # separated confidence intervals at both points


class TestEstimateDiversity:
    @staticmethod
    def _points(snrs, bers, trials=10**6):
        return [
            BerPoint(s, trials, 0, int(b * trials * 4), trials * 4, 0.0, b, 0.0, 1.0)
            for s, b in zip(snrs, bers)
        ]

    def test_exact_power_law(self):
        snrs = [20.0, 25.0, 30.0, 35.0]
        bers = [10 ** (-3.0 * s / 10.0) for s in snrs]
        pts = self._points(snrs, bers)
        assert estimate_diversity(pts, (20, 35)) == pytest.approx(-3.0, abs=1e-9)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(17)
        snrs = np.arange(20.0, 36.0, 2.5)
        bers = [10 ** (-3.0 * s / 10.0) * (1 + 0.1 * rng.standard_normal()) for s in snrs]
        slope = estimate_diversity(self._points(snrs, bers), (20, 35))
        assert slope == pytest.approx(-3.0, abs=0.2)

    def test_single_point_rejected(self):
        pts = self._points([30.0], [1e-3])
        with pytest.raises(InsufficientDataError):
            estimate_diversity(pts, (25, 35))

    def test_zero_error_point_rejected(self):
        pts = self._points([25.0, 30.0], [1e-3, 0.0])
        with pytest.raises(InsufficientDataError):
            estimate_diversity(pts, (25, 35))

    def test_window_filters_points(self):
        snrs = [10.0, 25.0, 30.0, 35.0]
        bers = [0.5] + [10 ** (-3.0 * s / 10.0) for s in snrs[1:]]
        slope = estimate_diversity(self._points(snrs, bers), (25, 35))
        assert slope == pytest.approx(-3.0, abs=1e-9)


class TestWilson:
    def test_contains_proportion(self):
        lo, hi = wilson_interval(10, 100)
        assert lo < 0.1 < hi

    def test_zero_counts(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo == 0.0 and hi < 0.01
