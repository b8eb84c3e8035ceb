import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bstr import oracle
from bstr.bicm import (L_MAX, CodeSpec, deinterleave, encode_interleave_map,
                       interleave, ldpc_code, load_code, peg_parity_check,
                       prior_update, qam, read_alist, save_code, siso_decode,
                       symbol_extrinsic_llr, symbol_probabilities, turbo_run,
                       write_alist)
from bstr.detector import PosteriorState


def product_code():
    """2 x 4 array code: every bit sits in one row check and one column check."""
    H = np.zeros((6, 8), dtype=int)
    for r in range(2):
        H[r, 4 * r:4 * r + 4] = 1
    for c in range(4):
        H[2 + c, [c, 4 + c]] = 1
    return CodeSpec.from_parity_check(H)


@pytest.fixture(scope="module")
def code1024():
    return ldpc_code("regular-1024")


class TestQAM:
    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_unit_energy_and_gray(self, order):
        c = qam(order)
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
        d = np.abs(c.points[:, None] - c.points[None, :])
        dmin = d[d > 1e-9].min()
        for i, j in zip(*np.nonzero(np.isclose(d, dmin))):
            assert np.sum(c.labels[i] != c.labels[j]) == 1

    def test_map(self):
        c = qam(16)
        for k in range(16):
            assert c.map(c.labels[k]) == c.points[k]

    @pytest.mark.parametrize("order", [2, 8, 32, 5])
    def test_rejects_non_square(self, order):
        with pytest.raises(ValueError):
            qam(order)


class TestCode:
    def test_regular_structure(self, code1024):
        H = code1024.H.toarray()
        assert H.shape == (512, 1024)
        np.testing.assert_array_equal(H.sum(axis=0), 3)
        assert code1024.k >= 512

    def test_encode_satisfies_checks(self, code1024, rng):
        info = rng.integers(0, 2, (5, code1024.k))
        cw = code1024.encode(info)
        assert not code1024.syndrome(cw).any()
        np.testing.assert_array_equal(cw[:, code1024.info_cols], info)

    def test_peg_high_rate(self):
        code = ldpc_code("peg-2112")
        assert code.n == 2112 and code.rate >= 0.75
        np.testing.assert_array_equal(code.H.toarray().sum(axis=0), 3)

    def test_peg_has_no_four_cycles(self):
        H = peg_parity_check(96, 48, 3, seed=1).toarray()
        overlap = H.T @ H
        np.fill_diagonal(overlap, 0)
        assert overlap.max() <= 1

    def test_alist_round_trip(self, tmp_path):
        H = peg_parity_check(40, 20, 3, seed=2)
        write_alist(tmp_path / "h.alist", H)
        assert (read_alist(tmp_path / "h.alist") != H).nnz == 0

    def test_code_file_round_trip(self, tmp_path):
        code = ldpc_code("regular-64", cache_dir=False)
        save_code(tmp_path / "code.json", code, bits_per_symbol=2)
        back = load_code(tmp_path / "code.json")
        assert (back.H != code.H).nnz == 0 and back.k == code.k

    def test_unknown_code(self):
        with pytest.raises(ValueError):
            ldpc_code("turbo-1024")


class TestInterleaver:
    @given(N=st.sampled_from([1, 2, 4, 6]), cols=st.integers(1, 20),
           seed=st.integers(0, 1000))
    def test_inverse(self, N, cols, seed):
        v = np.random.default_rng(seed).standard_normal((3, N * cols))
        np.testing.assert_array_equal(deinterleave(interleave(v, N), N), v)
        np.testing.assert_array_equal(interleave(deinterleave(v, N), N), v)

    def test_row_column_layout(self):
        # rows of length 3 written row-wise, read column by column
        np.testing.assert_array_equal(interleave(np.arange(6), 2), [0, 3, 1, 4, 2, 5])

    def test_length_check(self):
        with pytest.raises(ValueError):
            interleave(np.arange(7), 2)


class TestMapping:
    def test_all_zero_info(self, code1024):
        const = qam(4)
        x, cw = encode_interleave_map(np.zeros((2, code1024.k), int), code1024, const)
        assert not cw.any()
        np.testing.assert_array_equal(x, const.points[0])
        assert x.shape == (code1024.n // 2, 2)


class TestSoftDemapping:
    def test_confident_observation(self):
        const = qam(4)
        for k in range(4):
            L = symbol_extrinsic_llr(np.array(const.points[k]), np.array(1e-6),
                                     np.zeros(2), const)
            np.testing.assert_array_equal(np.sign(L), 2 * const.labels[k] - 1)
            np.testing.assert_allclose(np.abs(L), L_MAX)

    def test_symmetric_observation(self):
        L = symbol_extrinsic_llr(np.array(0j), np.array(0.5), np.zeros(2), qam(4))
        np.testing.assert_allclose(L, 0, atol=1e-14)

    @pytest.mark.parametrize("order", [4, 16])
    def test_matches_probability_domain(self, order, rng):
        const = qam(order)
        for _ in range(10):
            mu = complex(*rng.standard_normal(2))
            s2 = rng.uniform(0.05, 2.0)
            La = rng.uniform(-5, 5, const.N)
            fast = symbol_extrinsic_llr(np.array(mu), np.array(s2), La, const)
            ref = oracle.probability_domain_llr(mu, s2, La, const.points, const.labels)
            assert np.max(np.abs(fast - ref)) <= 1e-9

    def test_independent_of_own_prior(self, rng):
        const = qam(16)
        La = rng.uniform(-3, 3, 4)
        base = symbol_extrinsic_llr(np.array(0.3 + 0.2j), np.array(0.4), La, const)
        for i in range(4):
            pinned = La.copy()
            pinned[i] = 25.0
            out = symbol_extrinsic_llr(np.array(0.3 + 0.2j), np.array(0.4), pinned, const)
            assert out[i] == pytest.approx(base[i], abs=1e-9)

    def test_posterior_decomposition(self, rng):
        # full a-posteriori LLR = extrinsic + own a-priori LLR
        const = qam(16)
        mu, s2 = 0.1 - 0.4j, 0.3
        La = rng.uniform(-3, 3, 4)
        Le = symbol_extrinsic_llr(np.array(mu), np.array(s2), La, const)
        like = np.exp(-np.abs(mu - const.points) ** 2 / s2)
        post = like * symbol_probabilities(La, const)
        for i in range(4):
            one = const.labels[:, i] == 1
            full = np.log(post[one].sum() / post[~one].sum())
            assert full == pytest.approx(Le[i] + La[i], abs=1e-9)


class TestPriorUpdate:
    def test_uniform(self):
        p = prior_update(np.zeros((3, 2)), qam(4))
        np.testing.assert_allclose(p.mu, 0, atol=1e-15)
        np.testing.assert_allclose(p.sigma, 1)

    def test_pinned(self):
        const = qam(16)
        La = (2 * const.labels[5] - 1) * L_MAX
        p = prior_update(La, const)
        assert p.mu == pytest.approx(const.points[5], abs=1e-10)
        assert p.sigma < 1e-10

    def test_enumeration(self, rng):
        const = qam(16)
        La = rng.uniform(-6, 6, 4)
        probs = np.array([np.prod([1 / (1 + np.exp(-La[j])) if const.labels[k, j]
                                   else 1 / (1 + np.exp(La[j])) for j in range(4)])
                          for k in range(16)])
        p = prior_update(La, const)
        assert p.mu == pytest.approx(probs @ const.points, abs=1e-12)
        ref = probs @ np.abs(const.points) ** 2 - abs(probs @ const.points) ** 2
        assert p.sigma == pytest.approx(ref, abs=1e-12)

    @given(hnp.arrays(float, (5, 4), elements=st.floats(-1e3, 1e3)))
    def test_probabilities_sum_to_one(self, La):
        p = symbol_probabilities(La, qam(16))
        np.testing.assert_allclose(p.sum(axis=-1), 1.0)
        assert np.all(p >= 0)


class TestDecoder:
    def test_noiseless(self, code1024, rng):
        cw = code1024.encode(rng.integers(0, 2, (3, code1024.k)))
        _, hard = siso_decode(10.0 * (2.0 * cw - 1), code1024)
        np.testing.assert_array_equal(hard, cw)

    def test_zero_input(self, code1024):
        ext, _ = siso_decode(np.zeros((2, code1024.n)), code1024)
        np.testing.assert_array_equal(ext, 0)

    def test_single_flip_on_toy_code(self):
        code = product_code()
        assert (code.n, code.k) == (8, 3)
        for bits in itertools.product((0, 1), repeat=code.k):
            cw = code.encode(np.array(bits))
            for f in range(code.n):
                L = 5.0 * (2.0 * cw - 1)
                L[f] = -L[f]
                _, hard = siso_decode(L, code)
                np.testing.assert_array_equal(hard[0], cw)

    def test_corrects_noise(self, code1024, rng):
        cw = code1024.encode(rng.integers(0, 2, (4, code1024.k)))
        m = 4.0
        L = (2.0 * cw - 1) * m + rng.standard_normal(cw.shape) * np.sqrt(2 * m)
        _, hard = siso_decode(L, code1024)
        assert np.sum(hard != cw) < np.sum((L > 0) != cw) / 10

    def test_rejects_non_finite(self, code1024):
        L = np.zeros(code1024.n)
        L[3] = np.inf
        with pytest.raises(ValueError):
            siso_decode(L, code1024)


class IdentityReceiver:
    """Detector for y = x (one antenna per UT), noise variance sigma_z."""

    def __init__(self, U, sigma_z):
        self.U, self.sigma_z = U, sigma_z

    def detect(self, y, prior):
        mu_p = (prior.sigma * y + self.sigma_z * prior.mu) / (prior.sigma + self.sigma_z)
        sigma_p = prior.sigma * self.sigma_z / (prior.sigma + self.sigma_z)
        return PosteriorState(mu_p=mu_p, sigma_p=sigma_p)


class TestTurbo:
    def test_all_zero_fixed_point(self, code1024):
        const = qam(4)
        res = turbo_run(np.zeros((code1024.n // 2, 1)), IdentityReceiver(1, 1e9),
                        code1024, const, T=2, U=1, keep_llr=True)
        for L in res.llr_per_iter:
            np.testing.assert_allclose(L, 0, atol=1e-6)

    def test_noiseless_single_ut(self, code1024, rng):
        const = qam(4)
        info = rng.integers(0, 2, (1, code1024.k))
        x, _ = encode_interleave_map(info, code1024, const)
        res = turbo_run(x, IdentityReceiver(1, 1e-9), code1024, const, T=1, U=1)
        np.testing.assert_array_equal(res.info_hat, info)

    def test_slot_count_check(self, code1024):
        with pytest.raises(ValueError):
            turbo_run(np.zeros((10, 1)), IdentityReceiver(1, 1.0), code1024, qam(4), U=1)
