"""System parameters, directional-cosine grid and FFT beam transforms.

The beam matrix ``V`` holds the steering vectors sampled on the uniform
directional-cosine grid ``Omega_a = n_a * delta``, ``n_a = a - K`` for the
0-based beam index ``a`` and ``K = floor(1 / delta)``.  Because
``f_c * dtau * delta = 1 / S`` each column is a phase-shifted DFT column of
length ``S = F * M``, so ``V x`` and ``V^H w`` cost one length-S FFT each.

Beam indices are 0-based everywhere in code; ``a = 0`` is the most negative
directional cosine and ``a = K`` is broadside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 3.0e8
"""Propagation speed used to relate ``d``, ``f_c`` and ``f_o`` (m/s)."""

# floor(1/delta) is taken with this slack so that exact integers that come out
# of the float product as k - 1e-15 are not rounded down.
_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class SystemConfig:
    """Physical and sampling parameters of the uplink.

    ``d`` defaults to half the wavelength of the highest operating
    frequency ``f_o``.
    """

    M: int
    U: int
    F: int
    f_c: float
    f_o: float
    d: float | None = None
    sigma_z: float = 1.0

    def __post_init__(self):
        if self.d is None:
            object.__setattr__(self, "d", SPEED_OF_LIGHT / (2.0 * self.f_o))
        if self.M < 2 or self.M % 2:
            # the phase-shifted DFT factorization and the Toeplitz coefficient
            # structure only hold for an even number of antennas
            raise ValueError(f"M must be a positive even integer, got {self.M}")
        if self.U < 1:
            raise ValueError(f"U must be positive, got {self.U}")
        if self.F < 1:
            raise ValueError(f"F must be a positive integer, got {self.F}")
        if not 0.0 < self.f_c < self.f_o:
            raise ValueError(
                f"need 0 < f_c < f_o, got f_c={self.f_c!r}, f_o={self.f_o!r}")
        if self.d <= 0:
            raise ValueError("antenna spacing must be positive")
        if self.sigma_z < 0:
            raise ValueError("noise variance must be non-negative")

    @classmethod
    def from_ratio(cls, M, U, F, ratio, f_o=SPEED_OF_LIGHT / 18.0, **kw):
        """Build a config from ``f_c / f_o`` (default ``f_o`` matches d = 9 m)."""
        return cls(M=M, U=U, F=F, f_c=ratio * f_o, f_o=f_o, **kw)

    @property
    def dtau(self) -> float:
        return self.d / SPEED_OF_LIGHT

    @property
    def M_eq(self) -> float:
        return self.M * self.f_c / self.f_o

    @property
    def S(self) -> int:
        return self.F * self.M

    @property
    def ratio(self) -> float:
        return self.f_c / self.f_o

    def to_dict(self) -> dict:
        return {"M": self.M, "U": self.U, "F": self.F, "f_c": self.f_c,
                "f_o": self.f_o, "d": self.d, "sigma_z": self.sigma_z}


@dataclass(frozen=True)
class BeamGrid:
    delta: float
    K: int
    omega: np.ndarray = field(repr=False)

    @property
    def A(self) -> int:
        return 2 * self.K + 1

    @property
    def center(self) -> int:
        return self.K


def make_grid(cfg: SystemConfig) -> BeamGrid:
    """Uniform directional-cosine grid with ``A = 2 floor(1/delta) + 1`` beams."""
    inv_delta = cfg.F * cfg.M * cfg.f_c * cfg.dtau
    delta = 1.0 / inv_delta
    K = int(math.floor(inv_delta + _FLOOR_SLACK))
    A = 2 * K + 1
    if A > cfg.S:
        raise ValueError(
            f"grid has A={A} beams but the FFT length is S={cfg.S}; "
            "this happens when f_c = f_o with F*M_eq even")
    omega = (np.arange(A) - K) * delta
    return BeamGrid(delta=delta, K=K, omega=omega)


def map_cosine(grid: BeamGrid, omega):
    """Index (0-based) of the grid subset containing each directional cosine.

    Rounds half up, matching the half-open subsets, and folds the outermost
    pieces of ``[-1, 1)`` into the first and last beams.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < -1.0) or np.any(omega >= 1.0):
        raise ValueError("directional cosine must lie in [-1, 1)")
    n = np.floor(omega / grid.delta + 0.5).astype(int)
    idx = np.clip(n + grid.K, 0, grid.A - 1)
    return idx if idx.ndim else int(idx)


def steering_vector(cfg: SystemConfig, omega) -> np.ndarray:
    """Unit-norm ULA response; a trailing axis of length M is appended."""
    omega = np.asarray(omega, dtype=float)
    m = np.arange(1, cfg.M + 1)
    phase = -np.pi * cfg.f_c * cfg.dtau * (2 * m - cfg.M - 1)
    return np.exp(1j * phase * omega[..., None]) / np.sqrt(cfg.M)


_DENSE_BUDGET = 1 << 22


def beam_matrix_dense(cfg: SystemConfig, grid: BeamGrid,
                      budget: int = _DENSE_BUDGET) -> np.ndarray:
    """Column-stacked steering vectors, M x A.  Intended for small M."""
    if cfg.M * grid.A > budget:
        raise ValueError(f"M*A = {cfg.M * grid.A} exceeds dense budget {budget}")
    return steering_vector(cfg, grid.omega).T


@dataclass(frozen=True)
class BeamOps:
    """Precomputed phases and FFT bin positions for applying V and V^H.

    ``phase[a] = exp(j pi (M-1) n_a / S)`` and ``bins[a] = n_a mod S``.
    """

    M: int
    S: int
    A: int
    K: int
    phase: np.ndarray = field(repr=False)
    bins: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, cfg: SystemConfig, grid: BeamGrid) -> "BeamOps":
        n = np.arange(grid.A) - grid.K
        phase = np.exp(1j * np.pi * (cfg.M - 1) * n / cfg.S)
        phase.setflags(write=False)
        bins = np.mod(n, cfg.S)
        bins.setflags(write=False)
        return cls(M=cfg.M, S=cfg.S, A=grid.A, K=grid.K, phase=phase, bins=bins)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``V x`` for beam-domain vectors along the last axis."""
        x = np.asarray(x)
        if x.shape[-1] != self.A:
            raise ValueError(f"expected last axis {self.A}, got {x.shape[-1]}")
        z = np.zeros(x.shape[:-1] + (self.S,), dtype=complex)
        z[..., self.bins] = x * self.phase
        return np.fft.fft(z, axis=-1)[..., :self.M] / np.sqrt(self.M)

    def adjoint(self, w: np.ndarray) -> np.ndarray:
        """``V^H w`` for space-domain vectors along the last axis."""
        w = np.asarray(w)
        if w.shape[-1] != self.M:
            raise ValueError(f"expected last axis {self.M}, got {w.shape[-1]}")
        spec = np.fft.ifft(w, n=self.S, axis=-1) * self.S
        return spec[..., self.bins] * np.conj(self.phase) / np.sqrt(self.M)


def _beam_vectors(G, x):
    # G x for a (sparse or dense) A x U matrix and x with trailing axis U
    x = np.asarray(x)
    return np.asarray((G @ x.reshape(-1, x.shape[-1]).T).T).reshape(
        x.shape[:-1] + (G.shape[0],))


def synthesize_space(ops: BeamOps, G, x) -> np.ndarray:
    """Space-domain signal ``V G x``; G may be a scipy sparse matrix."""
    if G.shape[0] != ops.A:
        raise ValueError(f"G has {G.shape[0]} rows, grid has {ops.A} beams")
    x = np.asarray(x)
    if x.shape[-1] != G.shape[1]:
        raise ValueError(f"x has length {x.shape[-1]}, G has {G.shape[1]} columns")
    return ops.apply(_beam_vectors(G, x))


def beam_adjoint_windowed(ops: BeamOps, y, eta, G, mu) -> np.ndarray:
    """Windowed beam-domain residual ``V^H diag(eta) (y - V G mu)``.

    Pass ``eta = np.ones(M)`` for the unwindowed transform.  ``y`` and ``mu``
    may carry matching leading batch axes.
    """
    y = np.asarray(y)
    eta = np.asarray(eta)
    if eta.shape != (ops.M,):
        raise ValueError(f"window must have length {ops.M}")
    if y.shape[-1] != ops.M:
        raise ValueError(f"y must have length {ops.M}")
    resid = y - synthesize_space(ops, G, mu)
    return ops.adjoint(resid * eta)
