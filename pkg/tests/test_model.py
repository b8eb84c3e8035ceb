import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bstr import oracle
from bstr.model import (SPEED_OF_LIGHT, BeamOps, SystemConfig, beam_adjoint_windowed,
                        beam_matrix_dense, make_grid, map_cosine, steering_vector,
                        synthesize_space)
from bstr.window import classical_window

from .conftest import crandn


def cfg_of(M, F=2, ratio=0.96, U=4):
    return SystemConfig.from_ratio(M, U, F, ratio)


class TestSystemConfig:
    def test_default_spacing_is_half_wavelength(self):
        cfg = cfg_of(16)
        assert cfg.d == pytest.approx(SPEED_OF_LIGHT / (2 * cfg.f_o))

    @pytest.mark.parametrize("kw", [dict(M=7), dict(M=0), dict(U=0), dict(F=0)])
    def test_rejects_bad_sizes(self, kw):
        args = dict(M=8, U=2, F=2, ratio=0.9) | kw
        with pytest.raises(ValueError):
            SystemConfig.from_ratio(**args)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 1.2])
    def test_requires_carrier_below_highest_frequency(self, ratio):
        with pytest.raises(ValueError):
            SystemConfig.from_ratio(8, 2, 2, ratio)

    def test_derived_quantities(self):
        cfg = cfg_of(64, F=2, ratio=0.96)
        assert cfg.S == 128
        assert cfg.M_eq == pytest.approx(61.44)
        assert cfg.M_eq <= cfg.M


class TestGrid:
    def test_small_example(self):
        cfg = cfg_of(4, F=2, ratio=0.8)
        grid = make_grid(cfg)
        assert cfg.M_eq == pytest.approx(3.2)
        assert grid.delta == pytest.approx(0.3125)
        assert (grid.A, cfg.S) == (7, 8)

    def test_full_scale_example(self):
        f_o = SPEED_OF_LIGHT / 18
        cfg = SystemConfig(M=256, U=72, F=2, f_c=16e6, f_o=f_o, d=9.0)
        grid = make_grid(cfg)
        assert cfg.S == 512
        assert cfg.M_eq == pytest.approx(245.76)
        assert grid.A == 491 and grid.A % 2 == 1 and grid.A <= cfg.S

    @given(M=st.integers(1, 64).map(lambda k: 2 * k), F=st.integers(1, 4),
           ratio=st.floats(0.05, 0.999))
    @settings(max_examples=60, deadline=None)
    def test_grid_invariants(self, M, F, ratio):
        cfg = cfg_of(M, F, ratio)
        try:
            grid = make_grid(cfg)
        except ValueError:
            assert 2 * int(np.floor(F * cfg.M_eq / 2 + 1e-9)) + 1 > cfg.S
            return
        assert grid.A == 2 * grid.K + 1
        assert grid.omega[grid.center] == 0.0
        assert np.all(np.diff(grid.omega) > 0)
        assert grid.A <= cfg.S
        assert grid.delta == pytest.approx(2 / (F * cfg.M_eq))

    def test_rejects_more_beams_than_fft_bins(self):
        # f_c just below f_o with F * M_eq an even integer in the limit
        cfg = SystemConfig.from_ratio(4, 1, 1, 1 - 1e-12)
        with pytest.raises(ValueError, match="A"):
            make_grid(cfg)


class TestMapCosine:
    def setup_method(self):
        self.cfg = cfg_of(32)
        self.grid = make_grid(self.cfg)

    def test_broadside_maps_to_center(self):
        assert map_cosine(self.grid, 0.0) == self.grid.K

    def test_rounds_to_nearest(self):
        g = self.grid
        for a in (3, g.K, g.A - 4):
            assert map_cosine(g, g.omega[a] + 0.49 * g.delta) == a
            assert map_cosine(g, g.omega[a] - 0.49 * g.delta) == a

    def test_matches_exhaustive_search(self, rng):
        om = rng.uniform(-1, 1, 100_000)
        om = om[(om >= self.grid.omega[0]) & (om <= self.grid.omega[-1])]
        np.testing.assert_array_equal(map_cosine(self.grid, om),
                                      oracle.nearest_beam(self.grid, om))


class TestSteering:
    def test_broadside_is_flat(self):
        cfg = cfg_of(16)
        np.testing.assert_allclose(steering_vector(cfg, 0.0), np.full(16, 16 ** -0.5))

    @given(st.floats(-1, 1))
    def test_unit_norm(self, om):
        assert np.linalg.norm(steering_vector(cfg_of(16), om)) == pytest.approx(1.0)

    @given(st.floats(-1, 1))
    def test_conjugate_centrosymmetric(self, om):
        v = steering_vector(cfg_of(16), om)
        np.testing.assert_allclose(v[::-1], np.conj(v), atol=1e-15)

    def test_inner_product_is_dirichlet_ratio(self, rng):
        cfg = cfg_of(8)
        for om1, om2 in rng.uniform(-1, 1, (10, 2)):
            ip = np.vdot(steering_vector(cfg, om1), steering_vector(cfg, om2))
            x = np.pi * cfg.f_c * cfg.dtau * (om1 - om2)
            assert abs(ip) == pytest.approx(abs(np.sin(8 * x) / (8 * np.sin(x))), abs=1e-12)

    def test_asymptotic_orthogonality(self):
        # the M = 32 grid is nested in the grids at 128 and 512 (ratio 0.96, F = 2)
        # so a fixed pair of grid cosines can be tracked as M grows
        vals = []
        for M in (32, 128, 512):
            cfg = cfg_of(M)
            grid = make_grid(cfg)
            step = M // 32
            a, b = grid.K, grid.K + 3 * step
            np.testing.assert_allclose(grid.omega[b] - grid.omega[a], 3 / 30.72)
            q = abs(np.vdot(steering_vector(cfg, grid.omega[a]),
                            steering_vector(cfg, grid.omega[b])))
            assert q < 10 / np.sqrt(M)
            vals.append(q)
        # past M = 32 the pair sits on exact nulls, so allow for roundoff
        assert vals[0] + 1e-14 >= vals[1] and vals[1] + 1e-14 >= vals[2]


class TestDenseBeamMatrix:
    def test_columns_are_steering_vectors(self):
        cfg = cfg_of(4)
        grid = make_grid(cfg)
        V = beam_matrix_dense(cfg, grid)
        for a in range(grid.A):
            np.testing.assert_allclose(V[:, a], steering_vector(cfg, grid.omega[a]))

    @pytest.mark.parametrize("M,F", [(4, 2), (16, 2), (32, 4)])
    def test_factored_forms(self, M, F):
        cfg = cfg_of(M, F)
        grid = make_grid(cfg)
        V = beam_matrix_dense(cfg, grid)
        assert np.max(np.abs(oracle.factored_V(cfg, grid) - V)) < 1e-12
        assert np.max(np.abs(oracle.factored_V_left(cfg, grid) - V)) < 1e-12
        np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0)

    def test_budget(self):
        cfg = cfg_of(64)
        with pytest.raises(ValueError):
            beam_matrix_dense(cfg, make_grid(cfg), budget=100)


class TestBeamOps:
    @given(M=st.integers(2, 32).map(lambda k: 2 * k), F=st.sampled_from([1, 2, 4]),
           seed=st.integers(0, 2**16))
    @settings(max_examples=40, deadline=None)
    def test_apply_and_adjoint_match_dense(self, M, F, seed):
        cfg = cfg_of(M, F)
        if cfg.S > 128:
            return
        grid = make_grid(cfg)
        ops = BeamOps.build(cfg, grid)
        V = oracle.dense_V(cfg, grid)
        r = np.random.default_rng(seed)
        x, w = crandn(r, grid.A), crandn(r, M)
        assert np.max(np.abs(ops.apply(x) - V @ x)) < 1e-10
        assert np.max(np.abs(ops.adjoint(w) - V.conj().T @ w)) < 1e-10

    def test_gram_column(self):
        cfg = cfg_of(16)
        grid = make_grid(cfg)
        ops = BeamOps.build(cfg, grid)
        Q = oracle.dense_Q(cfg, grid, np.ones(cfg.M))
        for a in (0, grid.K, grid.A - 1):
            e = np.zeros(grid.A)
            e[a] = 1
            np.testing.assert_allclose(ops.adjoint(ops.apply(e)), Q[:, a], atol=1e-13)

    def test_shape_errors(self):
        cfg = cfg_of(8)
        ops = BeamOps.build(cfg, make_grid(cfg))
        with pytest.raises(ValueError):
            ops.apply(np.zeros(ops.A + 1))
        with pytest.raises(ValueError):
            ops.adjoint(np.zeros(ops.M + 1))


class TestSynthesis:
    def setup_method(self):
        self.cfg = cfg_of(32, U=5)
        self.grid = make_grid(self.cfg)
        self.ops = BeamOps.build(self.cfg, self.grid)
        self.V = oracle.dense_V(self.cfg, self.grid)

    def random_G(self, rng):
        import scipy.sparse as sp
        G = sp.random(self.grid.A, self.cfg.U, density=0.05, random_state=rng,
                      data_rvs=lambda n: crandn(rng, n), format="csc",
                      dtype=complex)
        return G

    def test_zero_input(self, rng):
        G = self.random_G(rng)
        np.testing.assert_array_equal(synthesize_space(self.ops, G, np.zeros(5)), 0)

    def test_selects_column(self):
        import scipy.sparse as sp
        a, u = 7, 2
        G = sp.csc_matrix(([1.0], ([a], [u])), shape=(self.grid.A, 5))
        x = np.eye(5)[u]
        np.testing.assert_allclose(synthesize_space(self.ops, G, x), self.V[:, a],
                                   atol=1e-14)

    def test_random_instance(self, rng):
        G = self.random_G(rng)
        x = crandn(rng, 5)
        ref = self.V @ (G.toarray() @ x)
        assert np.max(np.abs(synthesize_space(self.ops, G, x) - ref)) < 1e-10

    def test_windowed_adjoint(self, rng):
        G = self.random_G(rng)
        y, mu = crandn(rng, 32), crandn(rng, 5)
        eta = classical_window("kaiser", 32, 10.0)
        ref = self.V.conj().T @ (eta * (y - self.V @ G.toarray() @ mu))
        out = beam_adjoint_windowed(self.ops, y, eta, G, mu)
        assert np.max(np.abs(out - ref)) < 1e-10

    def test_windowed_adjoint_trivia(self, rng):
        G = self.random_G(rng)
        mu = crandn(rng, 5)
        ones = np.ones(32)
        y = self.V @ G.toarray() @ mu
        assert np.max(np.abs(beam_adjoint_windowed(self.ops, y, ones, G, mu))) < 1e-12
        Q = self.V.conj().T @ self.V
        out = beam_adjoint_windowed(self.ops, self.V[:, 4], ones, G, np.zeros(5))
        np.testing.assert_allclose(out, Q[:, 4], atol=1e-13)
