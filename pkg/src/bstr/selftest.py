"""Fast path versus oracle checks, runnable without pytest.

Each check builds a small seeded instance, evaluates one fast-path routine
and its brute-force counterpart from :mod:`bstr.oracle`, and reports the
largest absolute deviation against a tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import oracle
from .bicm import qam, symbol_extrinsic_llr
from .channel import ChannelSpec, dense_channel, gen_channel, make_plan, plan_groups
from .detector import (BSTRReceiver, PriorState, WindowedReceiver, build_D_hat,
                       mmse_tr_detect)
from .model import (BeamOps, SystemConfig, beam_adjoint_windowed, beam_matrix_dense,
                    make_grid, map_cosine, synthesize_space)
from .window import (build_kernels, classical_window, energy_focusing_window,
                     gamma_coeffs, gamma_spectrum, rectangular_gamma,
                     reconstruct_qtilde, toeplitz_block)


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag}  {self.name:<40s} err={self.error:.3e}  tol={self.tol:.0e}"
                f"  ({self.seconds:.2f}s)")


def _maxabs(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _cfg(M, F, U=4, ratio=0.96):
    return SystemConfig.from_ratio(M, U, F, ratio)


def _random_prior(rng, T, U):
    mu = 0.3 * (rng.standard_normal((T, U)) + 1j * rng.standard_normal((T, U)))
    return PriorState(mu=mu, sigma=rng.uniform(0.2, 1.0, (T, U)))


def _instance(M=32, U=6, F=2, seed=0):
    cfg = _cfg(M, F, U)
    grid = make_grid(cfg)
    spec = ChannelSpec(sector=(-0.3, 0.3), min_ut_separation=0.0)
    chan = gen_channel(cfg, grid, spec, seed=seed)
    return cfg, grid, chan


def check_beam_factorization():
    err = 0.0
    for M, F in ((4, 2), (16, 2), (32, 4)):
        cfg = _cfg(M, F)
        grid = make_grid(cfg)
        V = oracle.dense_V(cfg, grid)
        err = max(err, _maxabs(oracle.factored_V(cfg, grid), V),
                  _maxabs(oracle.factored_V_left(cfg, grid), V),
                  _maxabs(beam_matrix_dense(cfg, grid), V))
    return err, 1e-12


def check_fft_transforms():
    rng = np.random.default_rng(1)
    err = 0.0
    for M, F in ((16, 2), (32, 2), (64, 2)):
        cfg = _cfg(M, F)
        grid = make_grid(cfg)
        ops = BeamOps.build(cfg, grid)
        V = oracle.dense_V(cfg, grid)
        x = rng.standard_normal((3, grid.A)) + 1j * rng.standard_normal((3, grid.A))
        w = rng.standard_normal((3, M)) + 1j * rng.standard_normal((3, M))
        err = max(err, _maxabs(ops.apply(x), x @ V.T),
                  _maxabs(ops.adjoint(w), w @ V.conj()))
    return err, 1e-10


def check_synthesis_and_windowed_adjoint():
    rng = np.random.default_rng(2)
    cfg, grid, chan = _instance(M=64, U=8)
    ops = BeamOps.build(cfg, grid)
    V = oracle.dense_V(cfg, grid)
    G = chan.G.toarray()
    x = rng.standard_normal((4, cfg.U)) + 1j * rng.standard_normal((4, cfg.U))
    y = rng.standard_normal((4, cfg.M)) + 1j * rng.standard_normal((4, cfg.M))
    eta = classical_window("hanning", cfg.M)
    ref = (y - x @ (V @ G).T) * eta @ V.conj()
    return max(_maxabs(synthesize_space(ops, chan.G, x), x @ (V @ G).T),
               _maxabs(beam_adjoint_windowed(ops, y, eta, chan.G, x), ref)), 1e-10


def check_channel_assembly():
    cfg, grid, chan = _instance(M=32, U=6)
    V = oracle.dense_V(cfg, grid)
    return _maxabs(dense_channel(chan), V @ chan.G.toarray()), 1e-12


def check_grid_mapping():
    cfg = _cfg(32, 2)
    grid = make_grid(cfg)
    om = np.random.default_rng(3).uniform(grid.omega[0], grid.omega[-1], 500)
    return float(np.count_nonzero(map_cosine(grid, om) != oracle.nearest_beam(grid, om))), 0.0


def _windows(cfg):
    yield "rectangular", classical_window("rectangular", cfg.M)
    yield "hanning", classical_window("hanning", cfg.M)
    yield "kaiser", classical_window("kaiser", cfg.M, 10.0)
    yield "energy_focusing", energy_focusing_window(cfg, 3, 1.0, cache_dir=False).eta


def check_gram_spectra():
    err = 0.0
    for M in (8, 16, 32):
        cfg = _cfg(M, 2)
        grid = make_grid(cfg)
        idx = np.arange(grid.A)
        for _, eta in _windows(cfg):
            co = gamma_coeffs(eta, cfg)
            err = max(err,
                      _maxabs(toeplitz_block(co, idx, idx), oracle.dense_Q(cfg, grid, eta)),
                      _maxabs(toeplitz_block(co, idx, idx, "tilde"),
                              oracle.dense_Q(cfg, grid, eta * eta)),
                      _maxabs(reconstruct_qtilde(co), oracle.dense_Qtilde(cfg, grid, eta)))
    return err, 1e-10


def check_rectangular_closed_form():
    err = 0.0
    for M, F in ((8, 2), (16, 2), (32, 4)):
        ks = np.arange((F * M + 1) // 2)
        err = max(err, _maxabs(gamma_spectrum(np.ones(M), F * M),
                               rectangular_gamma(M, F, ks)))
    return err, 1e-12


def check_quadrature_energy():
    # F * M_eq is an integer at this ratio, which makes the kernels exact
    cfg = SystemConfig.from_ratio(16, 2, 2, 0.9375)
    grid = make_grid(cfg)
    Phi, Xi = build_kernels(cfg, grid, 3, 1.0)
    eta = classical_window("hanning", cfg.M)
    _, num, den = oracle.quadrature_energy_ratio(cfg, grid, eta, 3, 1.0,
                                                 return_integrals=True)
    M2 = cfg.M ** 2
    return max(abs(num / 2 - eta @ Phi @ eta / M2),
               abs(den / 2 - eta @ Xi @ eta / M2)), 1e-6


def check_mmse():
    rng = np.random.default_rng(4)
    cfg, grid, chan = _instance(M=32, U=6)
    H = oracle.dense_V(cfg, grid) @ chan.G.toarray()
    y = rng.standard_normal((3, cfg.M)) + 1j * rng.standard_normal((3, cfg.M))
    prior = _random_prior(rng, 3, cfg.U)
    post = mmse_tr_detect(H, y, prior, 0.1)
    err = 0.0
    for t in range(3):
        xh, var = oracle.dense_mmse(H, y[t], prior.mu[t], prior.sigma[t], 0.1)
        err = max(err, _maxabs(post.mu_p[t], xh), _maxabs(post.sigma_p[t], var))
    return err, 1e-10


def _group_ref(V, eta, G, plan, y, prior, sigma_z):
    mu = np.empty(prior.mu.shape, complex)
    for t in range(len(y)):
        for beams, users in zip(plan.beam_sets, plan.groups):
            mu[t, users] = oracle.dense_group_detect(
                V, eta, G, beams, users, y[t], prior.mu[t], prior.sigma[t], sigma_z)[0]
    return mu


def check_group_detectors():
    rng = np.random.default_rng(5)
    cfg, grid, chan = _instance(M=32, U=6)
    ops = BeamOps.build(cfg, grid)
    V = oracle.dense_V(cfg, grid)
    G = chan.G.toarray()
    plan = plan_groups(chan, target_L=3)
    y = rng.standard_normal((2, cfg.M)) + 1j * rng.standard_normal((2, cfg.M))
    prior = _random_prior(rng, 2, cfg.U)
    sz = 0.1
    bstr = BSTRReceiver(ops, chan.G, plan, sz).detect(y, prior)
    err = _maxabs(bstr.mu_p, _group_ref(V, np.ones(cfg.M), G, plan, y, prior, sz))
    eta = classical_window("kaiser", cfg.M, 10.0)
    co = gamma_coeffs(eta, cfg)
    win = WindowedReceiver(ops, chan.G, plan, co, sz, "exact", "exact").detect(y, prior)
    err = max(err, _maxabs(win.mu_p, _group_ref(V, eta, G, plan, y, prior, sz)))
    return err, 1e-10


def check_interference_reduction():
    rng = np.random.default_rng(6)
    cfg, grid, chan = _instance(M=32, U=6)
    ops = BeamOps.build(cfg, grid)
    plan = make_plan(chan.supports, [range(cfg.U)])
    co = gamma_coeffs(classical_window("hanning", cfg.M), cfg)
    y = rng.standard_normal((2, cfg.M)) + 1j * rng.standard_normal((2, cfg.M))
    prior = _random_prior(rng, 2, cfg.U)
    a = WindowedReceiver(ops, chan.G, plan, co, 0.1, "exact", "exact").detect(y, prior)
    b = WindowedReceiver(ops, chan.G, plan, co, 0.1, "exact",
                         "interference_approx").detect(y, prior)
    return max(_maxabs(a.mu_p, b.mu_p), _maxabs(a.sigma_p, b.sigma_p)), 1e-8


def check_windowed_coupling():
    cfg, grid, chan = _instance(M=32, U=6)
    V = oracle.dense_V(cfg, grid)
    eta = classical_window("hanning", cfg.M)
    ref = V.conj().T @ (eta[:, None] * V) @ chan.G.toarray()
    co = gamma_coeffs(eta, cfg, eps=0.0)
    return max(_maxabs(build_D_hat(chan.G, co, "exact"), ref),
               _maxabs(build_D_hat(sp.csc_matrix(chan.G), co, "approx"), ref)), 1e-10


def check_bit_llrs():
    rng = np.random.default_rng(7)
    err = 0.0
    for order in (4, 16):
        const = qam(order)
        for _ in range(5):
            mu = complex(rng.standard_normal(), rng.standard_normal())
            s2 = float(rng.uniform(0.05, 2.0))
            La = rng.uniform(-4, 4, const.N)
            fast = symbol_extrinsic_llr(np.array(mu), np.array(s2), La, const)
            ref = oracle.probability_domain_llr(mu, s2, La, const.points, const.labels)
            err = max(err, _maxabs(fast, ref))
    return err, 1e-9


CHECKS = {
    "beam matrix factorization": check_beam_factorization,
    "fft beam transforms": check_fft_transforms,
    "synthesis and windowed adjoint": check_synthesis_and_windowed_adjoint,
    "channel assembly": check_channel_assembly,
    "grid mapping": check_grid_mapping,
    "gram spectra (4 windows)": check_gram_spectra,
    "rectangular closed form": check_rectangular_closed_form,
    "quadrature energy forms": check_quadrature_energy,
    "mmse with priors": check_mmse,
    "group detectors": check_group_detectors,
    "interference-set reduction": check_interference_reduction,
    "windowed coupling": check_windowed_coupling,
    "bit llrs": check_bit_llrs,
}


def run_selftest(names=None, echo=print) -> list[CheckResult]:
    """Run the named checks (all by default); returns their results."""
    out = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            err, tol = CHECKS[name]()
        except Exception as exc:  # report, keep going
            err, tol = float("nan"), 0.0
            if echo:
                echo(f"ERROR {name}: {type(exc).__name__}: {exc}")
        res = CheckResult(name, float(err), tol, time.perf_counter() - t0)
        if echo:
            echo(res.line())
        out.append(res)
    return out
