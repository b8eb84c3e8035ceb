"""Energy-focusing window design and the Toeplitz coefficient spectra.

For a real centrosymmetric window ``eta`` the windowed Gram matrix
``V^H diag(eta) V`` is real symmetric Toeplitz.  Its entry at beam offset
``d`` is ``gamma_d`` with ``gamma_k = (1/M) sum_m eta_m cos(pi k (M-2m+1)/S)``,
and the coefficients obey ``gamma_{S-k} = -gamma_k`` for even M.  The same
holds for ``V^H diag(eta)^2 V`` with ``eta * eta`` in place of ``eta``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.signal import windows as _sigwin

from .model import SystemConfig, make_grid

_NORM_RTOL = 1e-9


def dirichlet(n, x):
    """``sin((n + 1/2) x) / sin(x / 2)`` with the limit ``2n + 1`` at the poles."""
    x = np.asarray(x, dtype=float)
    den = np.sin(x / 2)
    small = np.abs(den) < 1e-14
    safe = np.where(small, 1.0, den)
    return np.where(small, 2 * n + 1, np.sin((n + 0.5) * x) / safe)


def build_kernels(cfg: SystemConfig, grid, c: int, omega_prime: float):
    """In-region and total beam-energy kernels ``(Phi, Xi)``.

    Both are symmetric Toeplitz in the antenna index difference ``k``:
    ``Phi_k = sinc(k/S) D_c(2 pi k/S)`` and
    ``Xi_k = sinc(2 k omega_prime / (delta S)) D_K(2 pi k/S)`` with the
    normalized sinc.
    """
    if not 0.0 < omega_prime <= 1.0:
        raise ValueError("omega_prime must lie in (0, 1]")
    if not 0 <= c <= grid.K:
        raise ValueError(f"c must lie in [0, {grid.K}]")
    S = cfg.S
    k = np.arange(cfg.M, dtype=float)
    phi = np.sinc(k / S) * dirichlet(c, 2 * np.pi * k / S)
    xi = (np.sinc(2 * k * omega_prime / (grid.delta * S))
          * dirichlet(grid.K, 2 * np.pi * k / S))
    return scipy.linalg.toeplitz(phi), scipy.linalg.toeplitz(xi)


def energy_ratio(Phi, Xi, eta) -> float:
    """Average in-region energy ratio ``eta' Phi eta / eta' Xi eta``."""
    eta = np.asarray(eta, dtype=float)
    return float(eta @ Phi @ eta) / float(eta @ Xi @ eta)


def normalize_window(eta) -> np.ndarray:
    """Scale so the entries sum to M (the convention all coefficient code expects)."""
    eta = np.asarray(eta, dtype=float)
    s = eta.sum()
    if abs(s) < 1e-12 * max(1.0, np.abs(eta).sum()):
        raise ValueError("window sums to zero and cannot be normalized")
    return eta * (eta.size / s)


@dataclass(frozen=True)
class WindowDesign:
    c: int
    omega_prime: float
    eta: np.ndarray = field(repr=False)
    ratio: float
    residual: float
    Phi: np.ndarray | None = field(default=None, repr=False)
    Xi: np.ndarray | None = field(default=None, repr=False)


def _symmetric_basis(M):
    # orthonormal columns (e_i + e_{M-1-i}) / sqrt 2, plus e_mid for odd M
    h = M // 2
    B = np.zeros((M, h + M % 2))
    i = np.arange(h)
    B[i, i] = B[M - 1 - i, i] = np.sqrt(0.5)
    if M % 2:
        B[h, h] = 1.0
    return B


def design_window(Phi, Xi, c=None, omega_prime=None, rtol=1e-8) -> WindowDesign:
    """Best centrosymmetric generalized eigenvector of ``(Phi, Xi)``.

    Both kernels commute with the reversal permutation, so every simple
    generalized eigenvector is either symmetric or antisymmetric.  The solve
    runs on the symmetric subspace (half the size), which returns the top
    eigenvector among the symmetric ones; at small M the overall top one
    can be antisymmetric and would vanish under symmetrization.

    ``Xi`` is shifted by ``1e-12 * trace(Xi) / M`` before the
    symmetric-definite solve.  The vector is symmetrized with its reversal
    and normalized to sum M.  Raises ``RuntimeError`` when the residual
    ``||Phi eta - lam Xi eta||`` exceeds ``rtol * ||Phi eta||``.
    """
    Phi = np.asarray(Phi, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    M = Phi.shape[0]
    reg = 1e-12 * np.trace(Xi) / M
    basis = _symmetric_basis(M)
    phi_s = basis.T @ Phi @ basis
    xi_s = basis.T @ (Xi + reg * np.eye(M)) @ basis
    n = basis.shape[1]
    try:
        _, vecs = scipy.linalg.eigh(phi_s, xi_s, subset_by_index=[n - 1, n - 1])
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"generalized eigensolve failed: {exc}") from exc
    v = basis @ vecs[:, 0]
    sym = v + v[::-1]
    if np.linalg.norm(sym) < 1e-8 * np.linalg.norm(v):
        raise RuntimeError("top eigenvector is anti-centrosymmetric; "
                           "no centrosymmetric optimizer available")
    eta = normalize_window(sym)
    lam = energy_ratio(Phi, Xi, eta)
    phi_eta = Phi @ eta
    resid = np.linalg.norm(phi_eta - lam * (Xi @ eta)) / np.linalg.norm(phi_eta)
    if not resid <= rtol:
        raise RuntimeError(
            f"generalized eigen residual {resid:.3e} exceeds {rtol:.1e} "
            f"(ratio {lam:.12g})")
    eta.setflags(write=False)
    return WindowDesign(c=c, omega_prime=omega_prime, eta=eta, ratio=lam,
                        residual=float(resid), Phi=Phi, Xi=Xi)


def classical_window(kind: str, M: int, beta: float = 10.0) -> np.ndarray:
    """Rectangular, Hann or Kaiser window normalized to sum M."""
    if kind == "rectangular":
        return np.ones(M)
    if kind in ("hanning", "hann"):
        return normalize_window(_sigwin.hann(M, sym=True))
    if kind == "kaiser":
        if beta < 0:
            raise ValueError("Kaiser beta must be non-negative")
        return normalize_window(_sigwin.kaiser(M, beta, sym=True))
    raise ValueError(f"unknown window kind {kind!r}")


def _cos_basis(M, S, ks):
    m = np.arange(1, M + 1)
    return np.cos(np.pi * np.outer(ks, M - 2 * m + 1) / S)


def gamma_spectrum(eta, S) -> np.ndarray:
    """``gamma_k`` for ``k = 0 .. ceil(S/2) - 1`` (no normalization check)."""
    eta = np.asarray(eta, dtype=float)
    M = eta.size
    ks = np.arange((S + 1) // 2)
    return _cos_basis(M, S, ks) @ eta / M


@dataclass(frozen=True)
class WindowCoeffs:
    """Toeplitz spectra of ``V^H Lam V`` (gamma) and ``V^H Lam^2 V`` (gamma_tilde)."""

    M: int
    S: int
    eta: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    gamma_tilde: np.ndarray = field(repr=False)
    eps: float = 0.0
    filter_set: np.ndarray = field(default=None, repr=False)

    @property
    def Q(self) -> int:
        return int(self.filter_set.size)

    def offset_values(self, n, which="gamma") -> np.ndarray:
        """Toeplitz entries for offsets ``0 .. n-1`` (n may exceed S/2)."""
        g = self.gamma if which == "gamma" else self.gamma_tilde
        return _extend(g, self.S, n)

    def with_eps(self, eps) -> "WindowCoeffs":
        return WindowCoeffs(M=self.M, S=self.S, eta=self.eta, gamma=self.gamma,
                            gamma_tilde=self.gamma_tilde, eps=eps,
                            filter_set=filtering_set(self.gamma, eps))


def _extend(g, S, n):
    # offsets past S/2 fold back as gamma_d = -gamma_{S-d}; gamma_{S/2} = 0
    d = np.arange(n)
    half = len(g)
    out = np.zeros(n)
    low = d < half
    out[low] = g[d[low]]
    high = d > S - half
    out[high] = -g[S - d[high]]
    return out


def gamma_coeffs(eta, cfg: SystemConfig, eps: float = 0.0) -> WindowCoeffs:
    """Coefficient spectra for a centrosymmetric window that sums to M."""
    eta = np.asarray(eta, dtype=float)
    M, S = cfg.M, cfg.S
    if eta.shape != (M,):
        raise ValueError(f"window must have length {M}")
    if not np.allclose(eta, eta[::-1], rtol=0, atol=1e-12 * np.abs(eta).max()):
        raise ValueError("window must be centrosymmetric")
    if abs(eta.sum() - M) > _NORM_RTOL * M:
        raise ValueError(f"window must sum to M={M}, got {eta.sum()!r}")
    gamma = gamma_spectrum(eta, S)
    gamma_tilde = gamma_spectrum(eta * eta, S)
    eta = eta.copy()
    for a in (eta, gamma, gamma_tilde):
        a.setflags(write=False)
    return WindowCoeffs(M=M, S=S, eta=eta, gamma=gamma, gamma_tilde=gamma_tilde,
                        eps=eps, filter_set=filtering_set(gamma, eps))


def filtering_set(gamma, eps: float) -> np.ndarray:
    """Indices ``k >= 1`` with ``|gamma_k| > eps``."""
    if eps < 0:
        raise ValueError("threshold must be non-negative")
    g = np.asarray(gamma)
    return np.flatnonzero(np.abs(g[1:]) > eps) + 1


def rectangular_gamma(M, F, ks):
    """Closed form ``sin(pi k/F) / (M sin(pi k/S))`` for the all-ones window."""
    ks = np.asarray(ks, dtype=float)
    S = F * M
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sin(np.pi * ks / F) / (M * np.sin(np.pi * ks / S))
    return np.where(ks % S == 0, 1.0, out)


def toeplitz_block(coeffs: WindowCoeffs, rows, cols, which="gamma") -> np.ndarray:
    """Entries of the Gram matrix at beam indices ``rows x cols``."""
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    d = np.abs(rows[:, None] - cols[None, :])
    n = int(d.max()) + 1 if d.size else 1
    return coeffs.offset_values(n, which)[d]


def reconstruct_qtilde(coeffs: WindowCoeffs) -> np.ndarray:
    """S x S matrix ``I + sum_k gamma_k (Pibar^k + (-1)^(M+1) Pibar^(S-k))``.

    Built from the coefficient spectrum alone; with ``I_{A,S}`` on both
    sides it gives the windowed Gram matrix.
    """
    S = coeffs.S
    sign = -1.0 if coeffs.M % 2 == 0 else 1.0
    g = coeffs.gamma
    ks = np.arange(1, len(g))
    # Pibar^k is Toeplitz with +1 on sub-diagonal k and -1 on super-diagonal S-k
    col = np.zeros(S)
    row = np.zeros(S)
    col[0] = row[0] = g[0]
    col[ks] += g[ks]
    row[S - ks] -= g[ks]
    col[S - ks] += sign * g[ks]
    row[ks] -= sign * g[ks]
    return scipy.linalg.toeplitz(col, row)


# -- persistence ---------------------------------------------------------------

WINDOW_SCHEMA = "bstr-window-v1"


def _fmt(x):
    return float(f"{x:.17g}")


def save_window(path, cfg: SystemConfig, design: WindowDesign, eps=1e-3):
    """Write a window JSON file (floats with 17 significant digits)."""
    coeffs = gamma_coeffs(design.eta, cfg, eps)
    doc = {
        "schema": WINDOW_SCHEMA,
        "note": "floats printed with 17 significant digits; beam indices 0-based",
        "params": {"M": cfg.M, "F": cfg.F, "ratio": _fmt(cfg.ratio),
                   "f_c": _fmt(cfg.f_c), "f_o": _fmt(cfg.f_o),
                   "c": design.c, "omega_prime": design.omega_prime},
        "lambda": _fmt(design.ratio),
        "residual": _fmt(design.residual),
        "eta": [_fmt(v) for v in design.eta],
        "gamma": [_fmt(v) for v in coeffs.gamma],
        "eps": eps,
        "filter_set_size": coeffs.Q,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_window(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != WINDOW_SCHEMA:
        raise ValueError(f"{path}: not a window file (schema {doc.get('schema')!r})")
    doc["eta"] = np.asarray(doc["eta"], dtype=float)
    doc["gamma"] = np.asarray(doc["gamma"], dtype=float)
    return doc


def default_cache_dir() -> Path:
    root = os.environ.get("BSTR_CACHE_DIR")
    if root:
        return Path(root)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "bstr"


def energy_focusing_window(cfg: SystemConfig, c: int = 3, omega_prime: float = 1.0,
                           cache_dir=None) -> WindowDesign:
    """Design (or load from the on-disk cache) the energy-focusing window.

    The cache key is ``(M, F, f_c/f_o, c, omega_prime)``.  Pass
    ``cache_dir=False`` to bypass the cache.
    """
    grid = make_grid(cfg)
    if cache_dir is False:
        Phi, Xi = build_kernels(cfg, grid, c, omega_prime)
        return design_window(Phi, Xi, c, omega_prime)
    cache_dir = Path(cache_dir) if cache_dir else default_cache_dir()
    key = repr((cfg.M, cfg.F, cfg.ratio, c, float(omega_prime)))
    fname = cache_dir / f"window-{hashlib.sha256(key.encode()).hexdigest()[:16]}.json"
    if fname.exists():
        try:
            doc = json.loads(fname.read_text())
            if doc.get("key") == key:
                eta = np.asarray(doc["eta"], dtype=float)
                eta.setflags(write=False)
                return WindowDesign(c=c, omega_prime=omega_prime, eta=eta,
                                    ratio=doc["lambda"], residual=doc["residual"])
        except (OSError, ValueError, KeyError):
            pass
    Phi, Xi = build_kernels(cfg, grid, c, omega_prime)
    design = design_window(Phi, Xi, c, omega_prime)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        tmp = fname.with_suffix(f".{os.getpid()}.tmp")
        tmp.write_text(json.dumps({"key": key, "lambda": design.ratio,
                                   "residual": design.residual,
                                   "eta": design.eta.tolist()}))
        tmp.replace(fname)
    except OSError:
        pass
    return design
