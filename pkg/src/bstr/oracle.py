"""Brute-force references for the structured fast paths.

Everything here is deliberately naive (dense matrices, explicit DFT matrices,
quadrature, arbitrary-precision sums) and does not call into the FFT or
Toeplitz code it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import roots_legendre


@dataclass(frozen=True)
class OracleBudget:
    max_M: int = 64
    max_S: int = 128
    max_quad_pieces: int = 4096
    max_nodes_per_piece: int = 256
    quad_rtol: float = 1e-12

    def check(self, M, S):
        if M > self.max_M or S > self.max_S:
            raise ValueError(
                f"oracle budget exceeded: M={M} (max {self.max_M}), "
                f"S={S} (max {self.max_S})")


DEFAULT_BUDGET = OracleBudget()


def _steer(cfg, omega):
    m = np.arange(1, cfg.M + 1)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    ph = -np.pi * cfg.f_c * cfg.dtau * np.outer(2 * m - cfg.M - 1, omega)
    return np.exp(1j * ph) / np.sqrt(cfg.M)  # M x len(omega)


def dense_V(cfg, grid, budget=DEFAULT_BUDGET):
    budget.check(cfg.M, cfg.S)
    return _steer(cfg, (np.arange(grid.A) - grid.K) * grid.delta)


def dft_matrix(S):
    p = np.arange(S)
    return np.exp(-2j * np.pi * np.outer(p, p) / S)


def cyclic_shift(S):
    """Forward cyclic shift: maps e_i to e_{i+1} and e_S to e_1."""
    return np.roll(np.eye(S), 1, axis=0)


def negacyclic_shift(S):
    """Like :func:`cyclic_shift` but the wrapped column carries a minus sign."""
    P = cyclic_shift(S)
    P[0, S - 1] = -1.0
    return P


def eye_rect(n1, n2):
    """First n1 rows (or columns) of the larger identity."""
    return np.eye(n1, n2)


def _omega_phase(cfg):
    S, M = cfg.S, cfg.M
    f2 = dft_matrix(2 * S)[:, M - 1]
    return np.diag(-np.conj(f2[:S]))


def factored_V(cfg, grid, budget=DEFAULT_BUDGET):
    """``(1/sqrt M) I_{M,S} F_S Omega Pibar^{S-K} I_{S,A}``."""
    budget.check(cfg.M, cfg.S)
    S, M, A, K = cfg.S, cfg.M, grid.A, grid.K
    Pb = np.linalg.matrix_power(negacyclic_shift(S), S - K)
    return (eye_rect(M, S) @ dft_matrix(S) @ _omega_phase(cfg) @ Pb
            @ eye_rect(S, A)) / np.sqrt(M)


def factored_V_left(cfg, grid, budget=DEFAULT_BUDGET):
    """``(1/sqrt M) Omega~ I_{M,S} F_S I_{S,A} Omega-bar`` (the first form)."""
    budget.check(cfg.M, cfg.S)
    S, M, A, K = cfg.S, cfg.M, grid.A, grid.K
    FS = dft_matrix(S)
    om_t = np.diag(FS[:M, S - K])
    f2c = np.conj(dft_matrix(2 * S)[:, M - 1])
    om_b = np.diag((np.linalg.matrix_power(cyclic_shift(2 * S), K) @ f2c)[:A])
    return om_t @ eye_rect(M, S) @ FS @ eye_rect(S, A) @ om_b / np.sqrt(M)


def dense_Q(cfg, grid, eta, budget=DEFAULT_BUDGET):
    """``V^H diag(eta) V`` from explicit steering columns."""
    V = dense_V(cfg, grid, budget)
    return V.conj().T @ (np.asarray(eta)[:, None] * V)


def dense_Qtilde(cfg, grid, eta, budget=DEFAULT_BUDGET):
    """S x S matrix ``-(1/M) Pibar^K Omega* F^H I_{S,M} diag(eta) I_{M,S} F Omega Pibar^{S-K}``."""
    budget.check(cfg.M, cfg.S)
    S, M, K = cfg.S, cfg.M, grid.K
    FS = dft_matrix(S)
    Om = _omega_phase(cfg)
    Pb = negacyclic_shift(S)
    lam = eye_rect(S, M) @ np.diag(np.asarray(eta, dtype=float)) @ eye_rect(M, S)
    inner = Om.conj() @ FS.conj().T @ lam @ FS @ Om
    return -(np.linalg.matrix_power(Pb, K) @ inner
             @ np.linalg.matrix_power(Pb, S - K)) / M


def selection_matrix(N, idx):
    """N x T matrix whose columns are the unit vectors listed in ``idx``."""
    idx = np.asarray(idx, dtype=int)
    Sm = np.zeros((N, idx.size))
    Sm[idx, np.arange(idx.size)] = 1.0
    return Sm


def nearest_beam(grid, omega):
    """Nearest grid point by exhaustive search (ties go to the larger index)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    dist = np.abs(omega[:, None] - grid.omega[None, :])
    # reverse so argmin picks the larger index on exact ties
    return grid.A - 1 - np.argmin(dist[:, ::-1], axis=1)


def dense_mmse(H, y, mu, sigma, sigma_z):
    """Detector with priors written exactly as ``R = H (Sigma H^H H + s I)^-1 Sigma``.

    Returns estimates and the posterior variances ``(1 - [R^H H]_uu) sigma_u``.
    """
    U = H.shape[1]
    Sig = np.diag(sigma)
    R = H @ np.linalg.inv(Sig @ H.conj().T @ H + sigma_z * np.eye(U)) @ Sig
    n = mu - R.conj().T @ H @ mu
    xhat = R.conj().T @ y + n
    var = (1.0 - np.real(np.diag(R.conj().T @ H))) * sigma
    return xhat, var


def dense_group_detect(V, eta, G, beams, users, y, mu, sigma, sigma_z):
    """Windowed beam-structured group detector built from dense matrices.

    ``eta = ones`` gives the unwindowed detector.  Returns ``(xhat_l, var_l)``.
    """
    G = np.asarray(G)
    Lam = np.diag(np.asarray(eta, dtype=float))
    Bs = selection_matrix(V.shape[1], beams)
    Ns = selection_matrix(G.shape[1], users)
    yhat = Bs.T @ V.conj().T @ Lam @ (y - V @ G @ mu)
    Dhat = Bs.T @ V.conj().T @ Lam @ V @ G
    Ul = Bs.T @ V.conj().T @ Lam @ Lam @ V @ Bs
    Sig = np.diag(sigma)
    Sig_l = Ns.T @ Sig @ Ns
    Dbar = Dhat @ Ns
    W = np.linalg.inv(Dhat @ Sig @ Dhat.conj().T + sigma_z * Ul) @ Dbar @ Sig_l
    xhat = W.conj().T @ yhat + Ns.T @ mu
    var = (1.0 - np.real(np.diag(W.conj().T @ Dbar))) * np.diag(Sig_l)
    return xhat, var


def _gl_pieces(lo, hi, breaks, q):
    edges = np.concatenate(([lo], breaks[(breaks > lo) & (breaks < hi)], [hi]))
    x, w = roots_legendre(q)
    a, b = edges[:-1], edges[1:]
    half = (b - a)[:, None] / 2
    nodes = (a + b)[:, None] / 2 + half * x[None, :]
    return nodes.ravel(), (half * w[None, :]).ravel()


def _energies(cfg, grid, eta, c, omega):
    V = _steer(cfg, (np.arange(grid.A) - grid.K) * grid.delta)
    v = _steer(cfg, omega)  # M x Nq
    ev = np.asarray(eta)[:, None] * v
    p_all = np.sum(np.abs(V.conj().T @ ev) ** 2, axis=0)
    # C(Omega) lives on the unbounded lattice n * delta, never clipped
    n0 = np.floor(omega / grid.delta + 0.5)
    p_in = np.zeros_like(omega)
    for off in range(-c, c + 1):
        for j, om in enumerate(omega):
            va = _steer(cfg, (n0[j] + off) * grid.delta)[:, 0]
            p_in[j] += abs(np.vdot(va, ev[:, j])) ** 2
    return p_in, p_all


def quadrature_energy_ratio(cfg, grid, eta, c, omega_prime, nodes=512,
                            budget=DEFAULT_BUDGET, return_integrals=False):
    """Average in-region energy ratio by composite Gauss-Legendre quadrature.

    The interval is split at every cell boundary ``(j + 1/2) delta`` so the
    integrand is smooth on each piece; the per-piece order is doubled until
    the ratio changes by less than ``budget.quad_rtol``.
    """
    if nodes < 512:
        raise ValueError("at least 512 quadrature nodes are required")
    eta = np.asarray(eta, dtype=float)
    if not np.any(eta):
        raise ValueError("zero window has no energy")
    budget.check(cfg.M, cfg.S)
    lo, hi = -omega_prime, omega_prime
    j = np.arange(np.floor(lo / grid.delta) - 1, np.ceil(hi / grid.delta) + 1)
    breaks = (j + 0.5) * grid.delta
    n_pieces = int(np.sum((breaks > lo) & (breaks < hi))) + 1
    if n_pieces > budget.max_quad_pieces:
        raise ValueError("too many quadrature pieces for the oracle budget")
    q = max(4, int(np.ceil(nodes / n_pieces)))
    q_max = max(budget.max_nodes_per_piece, 4 * q)  # room for two doublings
    prev = None
    while q <= q_max:
        x, w = _gl_pieces(lo, hi, breaks, q)
        p_in, p_all = _energies(cfg, grid, eta, c, x)
        num, den = float(w @ p_in), float(w @ p_all)
        lam = num / den
        if prev is not None and abs(lam - prev) <= budget.quad_rtol * abs(lam):
            return (lam, num, den) if return_integrals else lam
        prev = lam
        q *= 2
    raise RuntimeError(f"quadrature did not converge (last estimate {prev})")


def probability_domain_llr(mu_e, sigma_e, La, points, labels, dps=50):
    """Extrinsic bit LLRs evaluated as plain probability ratios in mpmath.

    ``La`` holds the a-priori LLRs ``ln P(q=1)/P(q=0)`` of the N bits of one
    symbol; the bit's own prior is excluded from its extrinsic value.
    """
    labels = np.asarray(labels, dtype=int)
    K, N = labels.shape
    if K > 64:
        raise ValueError("oracle limited to K <= 64")
    with mpmath.workdps(dps):
        mu = mpmath.mpc(complex(mu_e))
        s2 = mpmath.mpf(float(sigma_e))
        bitp = []
        for j in range(N):
            t = mpmath.tanh(mpmath.mpf(float(La[j])) / 2)
            bitp.append((mpmath.mpf(1) - t) / 2)  # P(q=0)
        like = [mpmath.exp(-abs(mu - mpmath.mpc(complex(p))) ** 2 / s2)
                for p in points]
        out = np.empty(N)
        for i in range(N):
            num = mpmath.mpf(0)
            den = mpmath.mpf(0)
            for k in range(K):
                pr = like[k]
                for j in range(N):
                    if j != i:
                        pr *= (1 - bitp[j]) if labels[k, j] else bitp[j]
                if labels[k, i]:
                    num += pr
                else:
                    den += pr
            out[i] = float(mpmath.log(num) - mpmath.log(den))
    return out
