"""Soft-input soft-output linear detectors.

All detectors work on a batch of symbol slots that share one channel: ``y``
has shape ``(T, M)`` and prior moments have shape ``(T, U)``.  Each returns
a :class:`PosteriorState` holding posterior and extrinsic moments of the
detected users.

* :func:`mmse_tr_detect` is the full-dimensional MMSE detector with priors.
* :func:`detect_group_bstr` works on the beam-domain observations of one
  group using ``D = V^H V G`` and ``B' (V^H V) B`` obtained from FFTs.
* :func:`detect_group_windowed` works on windowed beam-domain observations
  using the Toeplitz coefficient tables, either by solving the beam-sized
  system or its interference-set reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import BeamOps, beam_adjoint_windowed
from .window import WindowCoeffs, toeplitz_block

SIGMA_P_REL_FLOOR = 1e-10
SIGMA_E_MIN = 1e-8
SIGMA_E_MAX = 1e8


@dataclass
class PriorState:
    """Per-symbol prior means and variances, shape ``(T, U)``."""

    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def uninformative(cls, T, U):
        return cls(mu=np.zeros((T, U), dtype=complex), sigma=np.ones((T, U)))


@dataclass
class PosteriorState:
    mu_p: np.ndarray
    sigma_p: np.ndarray
    mu_e: np.ndarray | None = None
    sigma_e: np.ndarray | None = None
    clamps: dict = field(default_factory=dict)


def _posterior(mu, sig, z, g) -> PosteriorState:
    """Moments from the filter outputs of one batch of users.

    ``z`` and ``g`` are such that ``mu_p = mu + sig z`` and
    ``sigma_p = (1 - sig g) sig``.  The extrinsic moments
    ``sigma_e = (1 - sig g) / g`` and ``mu_e = mu + z / g`` equal the
    Gaussian division of posterior by prior, written without dividing by
    ``sigma`` so they stay accurate when the prior is nearly deterministic.
    """
    g = np.real(g)
    rho = sig * g
    mu_p = mu + sig * z
    sigma_p = (1.0 - rho) * sig
    tiny = g <= 1e-300
    gs = np.where(tiny, 1.0, g)
    sig_e = np.where(tiny, SIGMA_E_MAX, (1.0 - rho) / gs)
    mu_e = np.where(tiny, mu_p, mu + z / gs)
    clipped = ((sig_e < SIGMA_E_MIN) | (sig_e > SIGMA_E_MAX)) & ~tiny
    clamps = {"sigma_p_floor": 0, "no_information": int(tiny.sum()),
              "sigma_e_clip": int(clipped.sum())}
    return PosteriorState(mu_p=mu_p, sigma_p=sigma_p, mu_e=mu_e,
                          sigma_e=np.clip(sig_e, SIGMA_E_MIN, SIGMA_E_MAX),
                          clamps=clamps)


class OpCounter:
    """Tally of complex multiplications charged by the instrumented kernels."""

    def __init__(self):
        self.cm = 0

    def fft(self, S, count=1):
        self.cm += int(count * (S // 2) * max(1, math.ceil(math.log2(S))))

    def matmul(self, n, k, m, count=1):
        self.cm += int(count * n * k * m)

    def solve(self, n, nrhs, count=1):
        # LU factor plus forward/back substitution
        self.cm += int(count * (n ** 3 // 3 + n * n * nrhs))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite detector input")


def _check_noise(sigma_z):
    if not sigma_z > 0:
        raise ValueError("noise variance must be positive")


def mmse_tr_detect(H, y, prior: PriorState, sigma_z, counter=None):
    """Full MMSE detection with priors.

    ``R^H = Sigma (H^H H Sigma + s I)^{-1} H^H``, ``x = mu + R^H (y - H mu)``
    and ``sigma_p = (1 - [R^H H]_uu) sigma``.  Returns a
    :class:`PosteriorState` with shape ``(T, U)`` arrays.
    """
    _check_noise(sigma_z)
    H = np.asarray(H)
    y = np.atleast_2d(y)
    mu, sig = np.atleast_2d(prior.mu), np.atleast_2d(prior.sigma)
    _check_finite(H, y, mu, sig)
    U = H.shape[1]
    gram = H.conj().T @ H
    resid = y - mu @ H.T
    rhs_y = resid @ H.conj()  # (T, U): H^H r per slot
    A = gram[None, :, :] * sig[:, None, :] + sigma_z * np.eye(U)
    rhs = np.concatenate([rhs_y[:, :, None],
                          np.broadcast_to(gram, (len(y),) + gram.shape)], axis=2)
    Z = np.linalg.solve(A, rhs)
    if counter is not None:
        counter.matmul(len(y), H.shape[0], U)
        counter.solve(U, U + 1, count=len(y))
    return _posterior(mu, sig, Z[:, :, 0], np.diagonal(Z[:, :, 1:], axis1=1, axis2=2))


# -- matrices shared by the group detectors -------------------------------------


def gram_times_channel(ops: BeamOps, G) -> np.ndarray:
    """``D = V^H V G`` (A x U) through one forward and one inverse FFT per UT."""
    Gd = G.toarray() if sp.issparse(G) else np.asarray(G)
    return ops.adjoint(ops.apply(Gd.T)).T


def gram_block(ops: BeamOps, beams) -> np.ndarray:
    """``B' V^H V B`` for a beam index set, via FFTs of unit vectors."""
    beams = np.asarray(beams, dtype=int)
    E = np.zeros((beams.size, ops.A))
    E[np.arange(beams.size), beams] = 1.0
    return ops.adjoint(ops.apply(E))[:, beams].T


def build_D_hat(G, coeffs: WindowCoeffs, mode: str = "exact", rows=None) -> np.ndarray:
    """Windowed coupling ``D_hat = V^H Lam V G`` on the requested beam rows.

    ``exact`` multiplies the Toeplitz rows by the sparse channel.  ``approx``
    spreads every nonzero of ``G`` only to the beam offsets whose base
    coefficient index lies in the filtering set, which is the diffusion form
    of the product.
    """
    G = sp.csc_matrix(G)
    A, U = G.shape
    rows = np.arange(A) if rows is None else np.asarray(rows, dtype=int)
    coo = G.tocoo()
    if mode == "exact":
        src = np.unique(coo.row)
        if src.size == 0:
            return np.zeros((rows.size, U), dtype=complex)
        T = toeplitz_block(coeffs, rows, src)
        return T @ G[src, :].toarray()
    if mode != "approx":
        raise ValueError(f"unknown D_hat mode {mode!r}")
    S = coeffs.S
    kept = np.concatenate([[0], coeffs.filter_set])
    offs = np.concatenate([kept, S - kept[kept > 0]])
    offs = offs[offs < A]
    offs = np.unique(np.concatenate([offs, -offs[offs > 0]]))
    tvals = coeffs.offset_values(A)[np.abs(offs)]
    full = np.zeros((A, U), dtype=complex)
    for d, t in zip(offs, tvals):
        tgt = coo.row + d
        ok = (tgt >= 0) & (tgt < A)
        np.add.at(full, (tgt[ok], coo.col[ok]), t * coo.data[ok])
    return full[rows]


def diffusion_error_bound(G, coeffs: WindowCoeffs) -> np.ndarray:
    """Per-column bound on ``|D_hat_approx - D_hat_exact|``."""
    G = sp.csc_matrix(G)
    dropped = np.setdiff1d(np.arange(1, len(coeffs.gamma)), coeffs.filter_set)
    l1 = np.asarray(abs(G).sum(axis=0)).ravel()
    return np.abs(coeffs.gamma[dropped]).sum() * l1


@dataclass(frozen=True)
class GroupCache:
    """Per-group precomputation for the windowed detector."""

    beams: np.ndarray
    users: np.ndarray
    interferers: np.ndarray
    own_pos: np.ndarray
    D_rows: np.ndarray      # B_l x U rows of D_hat
    U_l: np.ndarray         # B_l x B_l
    T_l: np.ndarray         # B_l x Ntilde_l
    K_l: np.ndarray         # Ntilde_l x Ntilde_l


def build_group_caches(plan, D_hat_rows, row_index, coeffs: WindowCoeffs,
                       counter=None) -> list[GroupCache]:
    """``U_l``, ``T_l = U_l^{-1} D_l`` and ``K_l = D_l^H T_l`` for every group.

    ``D_hat_rows`` holds D_hat on the beams ``row_index`` (sorted).
    """
    caches = []
    for beams, users, interf, pos in zip(plan.beam_sets, plan.groups,
                                         plan.interference_sets, plan.own_pos):
        r = np.searchsorted(row_index, beams)
        if not np.array_equal(row_index[r], beams):
            raise ValueError("D_hat rows do not cover the group beam set")
        D_rows = D_hat_rows[r]
        U_l = toeplitz_block(coeffs, beams, beams, "tilde")
        try:
            chol = np.linalg.cholesky(U_l)
        except np.linalg.LinAlgError as exc:
            raise ValueError("windowed Gram block is not positive definite") from exc
        Dn = D_rows[:, interf]
        T_l = np.linalg.solve(chol.T, np.linalg.solve(chol, Dn))
        K_l = Dn.conj().T @ T_l
        K_l = (K_l + K_l.conj().T) / 2
        if counter is not None:
            b, n = Dn.shape
            counter.solve(b, n)
            counter.matmul(n, b, n)
        caches.append(GroupCache(beams=beams, users=users, interferers=interf,
                                 own_pos=pos, D_rows=D_rows, U_l=U_l, T_l=T_l,
                                 K_l=K_l))
    return caches


# -- group detectors -----------------------------------------------------------


def _beam_domain_solve(D_l, Q_l, users, yb, prior, sigma_z, counter):
    # W = (D Sig D^H + s Q)^{-1} D_users Sig_users, batched over slots
    mu, sig = prior.mu, prior.sigma
    T = yb.shape[0]
    B = D_l.shape[0]
    C = (D_l[None, :, :] * sig[:, None, :]) @ D_l.conj().T + sigma_z * Q_l
    Dn = D_l[:, users]
    rhs = np.concatenate([yb[:, :, None],
                          np.broadcast_to(Dn, (T,) + Dn.shape)], axis=2)
    Z = np.linalg.solve(C, rhs)
    if counter is not None:
        counter.matmul(B, D_l.shape[1], B, count=T)
        counter.solve(B, len(users) + 1, count=T)
    return _posterior(mu[:, users], sig[:, users],
                      np.einsum("bn,tb->tn", Dn.conj(), Z[:, :, 0]),
                      np.einsum("bn,tbn->tn", Dn.conj(), Z[:, :, 1:]))


def detect_group_bstr(l, y_beam, prior: PriorState, D, plan, sigma_z, Q_l=None,
                      ops=None, counter=None):
    """Beam-structured detection of group ``l``.

    ``y_beam`` is the full beam-domain residual ``V^H (y - V G mu)`` of shape
    ``(T, A)``; ``D = V^H V G``.  ``Q_l`` defaults to the FFT Gram block.
    """
    _check_noise(sigma_z)
    beams, users = plan.beam_sets[l], plan.groups[l]
    if Q_l is None:
        Q_l = gram_block(ops, beams)
    yb = np.atleast_2d(y_beam)[:, beams]
    _check_finite(yb, prior.mu, prior.sigma)
    return _beam_domain_solve(D[beams], Q_l, users, yb, prior, sigma_z, counter)


def detect_group_windowed(cache: GroupCache, y_hat, prior: PriorState, sigma_z,
                          mode: str = "exact", counter=None):
    """Windowed detection of one group from ``y_hat = V^H Lam (y - V G mu)``.

    ``exact`` solves the beam-sized system.  ``interference_approx`` keeps
    only the interference UTs in the signal covariance and solves the
    ``Ntilde_l``-sized system ``(Sig K_l + s I)`` via the cached ``T_l``.
    """
    _check_noise(sigma_z)
    yb = np.atleast_2d(y_hat)[:, cache.beams]
    _check_finite(yb, prior.mu, prior.sigma)
    if mode == "exact":
        return _beam_domain_solve(cache.D_rows, cache.U_l, cache.users, yb, prior,
                                  sigma_z, counter)
    if mode != "interference_approx":
        raise ValueError(f"unknown windowed mode {mode!r}")
    T = yb.shape[0]
    nt = cache.interferers
    n = nt.size
    sig_t = prior.sigma[:, nt]
    # (K Sig + s I)^{-1} [T^H y, K S]; K is Hermitian and Sig is real diagonal
    Amat = cache.K_l[None, :, :] * sig_t[:, None, :] + sigma_z * np.eye(n)
    KS = cache.K_l[:, cache.own_pos]
    rhs = np.concatenate([(yb @ cache.T_l.conj())[:, :, None],
                          np.broadcast_to(KS, (T,) + KS.shape)], axis=2)
    Z = np.linalg.solve(Amat, rhs)
    if counter is not None:
        counter.matmul(cache.beams.size, n, 1, count=T)
        counter.solve(n, cache.users.size + 1, count=T)
    return _posterior(prior.mu[:, cache.users], prior.sigma[:, cache.users],
                      Z[:, cache.own_pos, 0],
                      np.diagonal(Z[:, cache.own_pos, 1:], axis1=1, axis2=2))


# -- extrinsic moments ---------------------------------------------------------


def extrinsic_moments(mu_p, sigma_p, mu, sigma):
    """Gaussian division of the posterior by the prior, with clamping.

    ``sigma_e = (1/sigma_p - 1/sigma)^{-1}`` and
    ``mu_e = (mu_p/sigma_p - mu/sigma) sigma_e``, evaluated as
    ``sigma sigma_p / (sigma - sigma_p)`` and
    ``(mu_p sigma - mu sigma_p) / (sigma - sigma_p)``.  Returns
    ``(mu_e, sigma_e, counters)``.
    """
    mu_p, sigma_p = np.asarray(mu_p), np.asarray(sigma_p, dtype=float)
    mu, sigma = np.asarray(mu), np.asarray(sigma, dtype=float)
    lo = SIGMA_P_REL_FLOOR * sigma
    hi = sigma * (1.0 - SIGMA_P_REL_FLOOR)
    no_info = sigma_p >= hi
    low = (sigma_p < lo) & ~no_info
    sp_c = np.clip(sigma_p, lo, hi)
    gap = np.where(no_info, 1.0, sigma - sp_c)
    sig_e = np.where(no_info, SIGMA_E_MAX, sigma * sp_c / gap)
    mu_e = np.where(no_info, mu_p, (mu_p * sigma - mu * sp_c) / gap)
    clipped = ((sig_e < SIGMA_E_MIN) | (sig_e > SIGMA_E_MAX)) & ~no_info
    sig_e = np.clip(sig_e, SIGMA_E_MIN, SIGMA_E_MAX)
    counters = {"sigma_p_floor": int(low.sum()), "no_information": int(no_info.sum()),
                "sigma_e_clip": int(clipped.sum())}
    return mu_e, sig_e, counters


# -- receivers -----------------------------------------------------------------


class MMSEReceiver:
    """Full-dimensional MMSE with priors on ``H = V G``."""

    name = "mmse_tr"

    def __init__(self, ops: BeamOps, G, sigma_z, counter=None):
        Gd = G.toarray() if sp.issparse(G) else np.asarray(G)
        self.H = ops.apply(Gd.T).T
        self.sigma_z = sigma_z
        self.counter = counter

    def detect(self, y, prior: PriorState):
        return mmse_tr_detect(self.H, y, prior, self.sigma_z, self.counter)


class BSTRReceiver:
    """Grouped beam-structured detector without a window."""

    name = "bstr"

    def __init__(self, ops: BeamOps, G, plan, sigma_z, counter=None):
        self.ops, self.G, self.plan = ops, G, plan
        self.sigma_z = sigma_z
        self.counter = counter
        self.D = gram_times_channel(ops, G)
        self.Q = [gram_block(ops, b) for b in plan.beam_sets]
        self._ones = np.ones(ops.M)

    def detect(self, y, prior: PriorState):
        y_beam = beam_adjoint_windowed(self.ops, y, self._ones, self.G, prior.mu)
        if self.counter is not None:
            self.counter.fft(self.ops.S, count=2 * len(y_beam))
        return _merge(self.plan, prior, [
            detect_group_bstr(l, y_beam, prior, self.D, self.plan, self.sigma_z,
                              Q_l=self.Q[l], counter=self.counter)
            for l in range(self.plan.L)])


class WindowedReceiver:
    """Windowed beam-structured detector.

    ``dhat_mode`` selects the exact or filtered construction of ``D_hat``;
    ``solve_mode`` selects the beam-sized or interference-set solve.
    """

    name = "wbstr"

    def __init__(self, ops: BeamOps, G, plan, coeffs: WindowCoeffs, sigma_z,
                 dhat_mode="approx", solve_mode="interference_approx", counter=None):
        self.ops, self.G, self.plan = ops, G, plan
        self.coeffs = coeffs
        self.sigma_z = sigma_z
        self.solve_mode = solve_mode
        self.counter = counter
        rows = plan.union_beams
        D_hat = build_D_hat(G, coeffs, dhat_mode, rows)
        self.caches = build_group_caches(plan, D_hat, rows, coeffs, counter)

    def detect(self, y, prior: PriorState):
        y_hat = beam_adjoint_windowed(self.ops, y, self.coeffs.eta, self.G, prior.mu)
        if self.counter is not None:
            self.counter.fft(self.ops.S, count=2 * len(y_hat))
        return _merge(self.plan, prior, [
            detect_group_windowed(c, y_hat, prior, self.sigma_z, self.solve_mode,
                                  self.counter)
            for c in self.caches])


def _merge(plan, prior, results) -> PosteriorState:
    shape = np.shape(prior.mu)
    out = PosteriorState(mu_p=np.empty(shape, complex), sigma_p=np.empty(shape),
                         mu_e=np.empty(shape, complex), sigma_e=np.empty(shape),
                         clamps=dict.fromkeys(results[0].clamps, 0))
    for users, r in zip(plan.groups, results):
        out.mu_p[:, users] = r.mu_p
        out.sigma_p[:, users] = r.sigma_p
        out.mu_e[:, users] = r.mu_e
        out.sigma_e[:, users] = r.sigma_e
        for k, v in r.clamps.items():
            out.clamps[k] += v
    return out
