"""Bit-interleaved coded modulation chain and the turbo loop.

LLRs follow ``L = ln P(bit = 1) / P(bit = 0)`` everywhere in this module,
including the decoder interface.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import log_expit, logsumexp

from .detector import PriorState, extrinsic_moments

L_MAX = 30.0


# -- constellation -------------------------------------------------------------


@dataclass(frozen=True)
class Constellation:
    """Unit-energy constellation; row k of ``labels`` is the MSB-first binary of k."""

    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return self.points.size

    @property
    def N(self) -> int:
        return self.labels.shape[1]

    def subset(self, i, b) -> np.ndarray:
        return np.flatnonzero(self.labels[:, i] == b)

    def map(self, bits) -> np.ndarray:
        """Map bit groups (trailing axis of length N, MSB first) to points."""
        bits = np.asarray(bits, dtype=np.int64)
        weights = 1 << np.arange(self.N - 1, -1, -1)
        return self.points[bits @ weights]


def _binary_labels(N):
    k = np.arange(1 << N)
    return ((k[:, None] >> np.arange(N - 1, -1, -1)) & 1).astype(np.int8)


def _gray_to_index(g):
    out = g.copy()
    shift = g >> 1
    while np.any(shift):
        out ^= shift
        shift >>= 1
    return out


def qam(order: int) -> Constellation:
    """Gray-labelled square QAM (4, 16, 64, ...) with unit average energy.

    The first half of each label selects the in-phase level and the second
    half the quadrature level; each half is a reflected Gray code of the
    level index.
    """
    N = int(round(np.log2(order)))
    if order < 4 or (1 << N) != order or N % 2:
        raise ValueError(f"square QAM order must be 4**n, got {order}")
    h = N // 2
    labels = _binary_labels(N)
    k = np.arange(order)
    gi, gq = k >> h, k & ((1 << h) - 1)
    side = 1 << h
    lvl = lambda g: 2 * _gray_to_index(g) - (side - 1)  # noqa: E731
    pts = lvl(gi) + 1j * lvl(gq)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(points=pts, labels=labels)


# -- LDPC code -----------------------------------------------------------------


def _gf2_rref(H):
    H = (np.asarray(H) & 1).astype(np.uint8)
    m, n = H.shape
    pivots = []
    r = 0
    for c in range(n):
        if r == m:
            break
        nz = np.flatnonzero(H[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            H[[r, p]] = H[[p, r]]
        rows = np.flatnonzero(H[:, c])
        rows = rows[rows != r]
        H[rows] ^= H[r]
        pivots.append(c)
        r += 1
    return H[:r], np.array(pivots, dtype=int)


@dataclass(frozen=True)
class CodeSpec:
    """Binary LDPC code with a systematic-by-columns GF(2) encoder.

    ``info_cols`` hold the information bits and ``parity_cols`` the pivot
    columns of the reduced parity-check matrix, so
    ``c[parity_cols] = parity_map @ c[info_cols] (mod 2)``.
    """

    H: sp.csr_matrix = field(repr=False)
    info_cols: np.ndarray = field(repr=False)
    parity_cols: np.ndarray = field(repr=False)
    parity_map: np.ndarray = field(repr=False)
    max_iter: int = 20
    alpha: float = 0.75
    name: str = ""

    @classmethod
    def from_parity_check(cls, H, **kw):
        H = sp.csr_matrix(H, dtype=np.uint8)
        R, piv = _gf2_rref(H.toarray())
        info = np.setdiff1d(np.arange(H.shape[1]), piv)
        return cls(H=H, info_cols=info, parity_cols=piv,
                   parity_map=R[:, info].astype(np.uint8), **kw)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def k(self) -> int:
        return self.info_cols.size

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, info) -> np.ndarray:
        info = np.asarray(info)
        if info.shape[-1] != self.k:
            raise ValueError(f"info length {info.shape[-1]} != code dimension {self.k}")
        c = np.zeros(info.shape[:-1] + (self.n,), dtype=np.uint8)
        c[..., self.info_cols] = info
        c[..., self.parity_cols] = (info.astype(np.int64)
                                    @ self.parity_map.T.astype(np.int64)) & 1
        return c

    def syndrome(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.int64)
        s = (self.H.astype(np.int64) @ np.atleast_2d(c).T).T & 1
        return s if c.ndim > 1 else s[0]

    @cached_property
    def graph(self) -> "_Graph":
        return _Graph(self.H)

    def to_dict(self, alist_path=None, bits_per_symbol=None) -> dict:
        doc = {"schema": CODE_SCHEMA, "n": self.n, "k": self.k,
               "rate": self.rate, "name": self.name, "alist": alist_path,
               "decoder": {"kind": "normalized_min_sum", "alpha": self.alpha,
                           "max_iter": self.max_iter}}
        if bits_per_symbol:
            doc["interleaver"] = {"kind": "row_column", "rows": bits_per_symbol,
                                  "cols": self.n // bits_per_symbol,
                                  "write": "row-wise", "read": "column-wise"}
        return doc


CODE_SCHEMA = "bstr-code-v1"


def save_code(path, code: CodeSpec, bits_per_symbol=None):
    """Write ``<path>`` (JSON) and the parity-check matrix next to it as alist."""
    path = Path(path)
    alist = path.with_suffix(".alist")
    write_alist(alist, code.H)
    path.write_text(json.dumps(code.to_dict(alist.name, bits_per_symbol), indent=1))


def load_code(path) -> CodeSpec:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("schema") != CODE_SCHEMA:
        raise ValueError(f"{path}: not a code file")
    H = read_alist(path.parent / doc["alist"])
    dec = doc.get("decoder", {})
    code = CodeSpec.from_parity_check(H, max_iter=dec.get("max_iter", 20),
                                      alpha=dec.get("alpha", 0.75),
                                      name=doc.get("name", ""))
    if code.n != doc["n"] or code.k != doc["k"]:
        raise ValueError(f"{path}: n/k do not match the parity-check matrix")
    return code


def peg_parity_check(n: int, m: int, var_degree: int = 3, seed: int = 0) -> sp.csr_matrix:
    """Progressive edge growth construction of an ``m x n`` parity-check matrix.

    Each new edge of a variable node goes to a check node that is either
    unreachable from it in the current graph or at the largest distance,
    choosing the lowest-degree (then seeded random) candidate.
    """
    if var_degree > m:
        raise ValueError("variable degree exceeds the number of checks")
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(m)
    chk_deg = np.zeros(m, dtype=int)
    var_adj = [[] for _ in range(n)]
    chk_adj = [[] for _ in range(m)]
    for v in range(n):
        for e in range(var_degree):
            if e == 0:
                cand = np.arange(m)
            else:
                cand = _peg_candidates(v, var_adj, chk_adj, m)
            cand = np.asarray(cand)
            key = chk_deg[cand] * m + tiebreak[cand]
            c = int(cand[np.argmin(key)])
            var_adj[v].append(c)
            chk_adj[c].append(v)
            chk_deg[c] += 1
    rows = np.concatenate([np.asarray(a) for a in var_adj])
    cols = np.repeat(np.arange(n), var_degree)
    return sp.csr_matrix((np.ones(rows.size, dtype=np.uint8), (rows, cols)),
                         shape=(m, n))


def _peg_candidates(v, var_adj, chk_adj, m):
    seen_c = np.zeros(m, dtype=bool)
    seen_v = {v}
    frontier = list(var_adj[v])
    seen_c[frontier] = True
    last = frontier
    while True:
        nxt = []
        vq = deque()
        for c in frontier:
            for w in chk_adj[c]:
                if w not in seen_v:
                    seen_v.add(w)
                    vq.append(w)
        for w in vq:
            for c in var_adj[w]:
                if not seen_c[c]:
                    seen_c[c] = True
                    nxt.append(c)
        if not nxt:
            # graph closed without covering every check: use the unreached ones
            unreached = np.flatnonzero(~seen_c)
            return unreached if unreached.size else np.asarray(last)
        if seen_c.all():
            return np.asarray(nxt)
        last, frontier = nxt, nxt


def write_alist(path, H):
    """MacKay alist text format (1-based indices, rows padded with zeros)."""
    H = sp.csc_matrix(H)
    m, n = H.shape
    cols = [H.indices[H.indptr[j]:H.indptr[j + 1]] + 1 for j in range(n)]
    Hr = H.tocsr()
    rows = [Hr.indices[Hr.indptr[i]:Hr.indptr[i + 1]] + 1 for i in range(m)]
    dv = max(len(c) for c in cols)
    dc = max(len(r) for r in rows)
    pad = lambda a, w: " ".join(map(str, list(a) + [0] * (w - len(a))))  # noqa: E731
    lines = [f"{n} {m}", f"{dv} {dc}",
             " ".join(str(len(c)) for c in cols),
             " ".join(str(len(r)) for r in rows)]
    lines += [pad(sorted(c), dv) for c in cols]
    lines += [pad(sorted(r), dc) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_alist(path) -> sp.csr_matrix:
    tok = Path(path).read_text().split()
    it = iter(int(t) for t in tok)
    n, m = next(it), next(it)
    dv_max, _ = next(it), next(it)
    col_deg = [next(it) for _ in range(n)]
    for _ in range(m):
        next(it)
    rows, cols = [], []
    for j in range(n):
        entries = [next(it) for _ in range(dv_max)]
        nz = [e for e in entries if e > 0]
        if len(nz) != col_deg[j]:
            raise ValueError(f"alist column {j + 1}: degree mismatch")
        rows += [e - 1 for e in nz]
        cols += [j] * len(nz)
    return sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)),
                         shape=(m, n))


def _code_cache_dir():
    from .window import default_cache_dir
    return default_cache_dir()


def ldpc_code(kind: str = "regular-1024", seed: int = 0, cache_dir=None,
              max_iter=20, alpha=0.75) -> CodeSpec:
    """Stock codes: ``regular-1024`` (degree 3/6, rate 1/2) and ``peg-2112``
    (length 2112, rate 3/4, variable degree 3).  Parity-check matrices are
    cached as alist files.  Any ``regular-<n>`` with even n is accepted.
    """
    if kind == "peg-2112":
        n, m = 2112, 528
    elif kind.startswith("regular-"):
        n = int(kind.split("-", 1)[1])
        if n % 2 or n < 8:
            raise ValueError("regular code length must be even and at least 8")
        m = n // 2
    else:
        raise ValueError(f"unknown code {kind!r}")
    H = None
    path = None
    if cache_dir is not False:
        d = Path(cache_dir) if cache_dir else _code_cache_dir()
        tag = hashlib.sha256(f"{kind}:{seed}:peg-v1".encode()).hexdigest()[:12]
        path = d / f"code-{kind}-{tag}.alist"
        if path.exists():
            try:
                H = read_alist(path)
            except (OSError, ValueError, StopIteration):
                H = None
    if H is None:
        H = peg_parity_check(n, m, 3, seed)
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".{os.getpid()}.tmp")
                write_alist(tmp, H)
                tmp.replace(path)
            except OSError:
                pass
    return CodeSpec.from_parity_check(H, max_iter=max_iter, alpha=alpha, name=kind)


# -- interleaver ---------------------------------------------------------------


def interleave(c, N: int) -> np.ndarray:
    """Row-column interleaver: write N rows of length n/N row-wise, read by column."""
    c = np.asarray(c)
    n = c.shape[-1]
    if n % N:
        raise ValueError(f"length {n} not divisible by {N}")
    return np.swapaxes(c.reshape(c.shape[:-1] + (N, n // N)), -1, -2).reshape(c.shape)


def deinterleave(v, N: int) -> np.ndarray:
    v = np.asarray(v)
    n = v.shape[-1]
    if n % N:
        raise ValueError(f"length {n} not divisible by {N}")
    return np.swapaxes(v.reshape(v.shape[:-1] + (n // N, N)), -1, -2).reshape(v.shape)


def encode_interleave_map(info, code: CodeSpec, const: Constellation):
    """Per-UT info bits ``(U, k)`` to symbols ``(n / N, U)`` and codewords ``(U, n)``."""
    info = np.atleast_2d(info)
    cw = code.encode(info)
    bits = interleave(cw, const.N)
    groups = bits.reshape(bits.shape[0], -1, const.N)
    return const.map(groups).T, cw


# -- soft demapping and prior update -------------------------------------------


def symbol_extrinsic_llr(mu_e, sigma_e, La_prime, const: Constellation) -> np.ndarray:
    """Extrinsic bit LLRs of each symbol from its Gaussian extrinsic message.

    ``La_prime`` has the shape of ``mu_e`` plus a trailing bit axis.  The
    bit's own prior is removed exactly, so the output does not depend on it.
    """
    mu_e = np.asarray(mu_e)
    sigma_e = np.asarray(sigma_e, dtype=float)
    La = np.broadcast_to(np.asarray(La_prime, dtype=float), mu_e.shape + (const.N,))
    b = const.labels.astype(float)
    metric = -np.abs(mu_e[..., None] - const.points) ** 2 / sigma_e[..., None]
    metric = metric + La @ (b - 0.5).T
    out = np.empty(La.shape)
    for i in range(const.N):
        one = const.labels[:, i] == 1
        out[..., i] = (logsumexp(metric[..., one], axis=-1)
                       - logsumexp(metric[..., ~one], axis=-1) - La[..., i])
    return np.clip(out, -L_MAX, L_MAX)


def symbol_probabilities(La_prime, const: Constellation) -> np.ndarray:
    """``P(x = s_k)`` from independent bit LLRs, trailing axis of length K."""
    La = np.clip(np.asarray(La_prime, dtype=float), -L_MAX, L_MAX)
    sgn = 2.0 * const.labels - 1.0  # K x N
    logp = log_expit(La[..., None, :] * sgn).sum(axis=-1)
    p = np.exp(logp)
    return p / p.sum(axis=-1, keepdims=True)


def prior_update(La_prime, const: Constellation) -> PriorState:
    """Symbol means and variances implied by the decoder's bit LLRs."""
    p = symbol_probabilities(La_prime, const)
    mu = p @ const.points
    sigma = np.clip(p @ np.abs(const.points) ** 2 - np.abs(mu) ** 2, 0.0, None)
    return PriorState(mu=mu, sigma=sigma)


# -- SISO decoder --------------------------------------------------------------


class _Graph:
    def __init__(self, H):
        H = sp.csr_matrix(H)
        m, n = H.shape
        self.m, self.n = m, n
        coo = H.tocoo()
        order = np.lexsort((coo.col, coo.row))
        self.chk = coo.row[order]
        self.var = coo.col[order]
        E = self.chk.size
        self.E = E
        deg = np.bincount(self.chk, minlength=m)
        dmax = int(deg.max()) if m else 0
        start = np.concatenate([[0], np.cumsum(deg)[:-1]])
        slot = np.arange(E) - start[self.chk]
        self.table = np.full((m, dmax), E, dtype=int)  # E is the padding edge
        self.table[self.chk, slot] = np.arange(E)
        self.scatter = sp.csr_matrix((np.ones(E), (np.arange(E), self.var)),
                                     shape=(E, n))
        self.gather = self.scatter.T.tocsr()  # n x E
        self.check = sp.csr_matrix(H, dtype=np.int64)


def siso_decode(La, code: CodeSpec, return_hard=True):
    """Normalized min-sum decoding of a batch of words ``La`` (B x n).

    Returns ``(L_ext, hard)`` with ``L_ext = L_total - La`` clamped to
    ``+-L_MAX`` and ``hard`` the sign decisions of ``L_total``.
    """
    La = np.atleast_2d(np.asarray(La, dtype=float))
    if not np.all(np.isfinite(La)):
        raise ValueError("non-finite decoder input")
    g = code.graph
    B = La.shape[0]
    lam = -La  # ln P(0)/P(1) inside the decoder
    E = g.E
    c2v = np.zeros((B, E))
    v2c = np.empty((B, E + 1))
    v2c[:, E] = np.inf  # padding edge: never the minimum, positive sign
    total = lam.copy()
    flat = g.table.ravel()
    real = flat < E
    for _ in range(code.max_iter):
        v2c[:, :E] = total[:, g.var] - c2v
        msg = v2c[:, g.table]  # B x m x dmax
        mag = np.abs(msg)
        neg = msg < 0
        parity = np.logical_xor.reduce(neg, axis=2, keepdims=True)
        two = np.partition(mag, 1, axis=2)
        m1, m2 = two[..., :1], two[..., 1:2]
        out_mag = np.where(mag == m1, m2, m1)
        out = code.alpha * np.where(neg ^ parity, -out_mag, out_mag)
        c2v[:, flat[real]] = out.reshape(B, -1)[:, real]
        total = lam + (g.gather @ c2v.T).T
        hard = (total < 0).astype(np.int64)
        if not np.any((g.check @ hard.T) & 1):
            break
    L_total = -total
    L_ext = np.clip(L_total - La, -L_MAX, L_MAX)
    hard = (L_total > 0).astype(np.uint8)
    return (L_ext, hard) if return_hard else L_ext


# -- turbo loop ----------------------------------------------------------------


@dataclass
class TurboResult:
    info_hat: np.ndarray           # (U, k) decisions after the last iteration
    info_per_iter: list            # per-iteration (U, k) decisions
    llr_per_iter: list             # per-iteration detector extrinsic LLRs
    clamps_per_iter: list          # per-iteration clamp counters
    cm_per_iter: list              # op-counter reading after each iteration


def turbo_run(y, receiver, code: CodeSpec, const: Constellation, T: int = 3,
              U: int | None = None, keep_llr: bool = False) -> TurboResult:
    """Iterate detector and decoder ``T`` times on the slots ``y`` (n/N x M).

    The first iteration starts from zero-mean, unit-variance priors, which
    makes the soft interference estimate vanish.  Decisions are taken every
    iteration for diagnostics; ``info_hat`` holds those of iteration T.
    """
    if T < 1:
        raise ValueError("need at least one turbo iteration")
    y = np.atleast_2d(y)
    slots = y.shape[0]
    if slots * const.N != code.n:
        raise ValueError(f"{slots} slots x {const.N} bits != code length {code.n}")
    U = U if U is not None else receiver_users(receiver)
    counter = getattr(receiver, "counter", None)
    prior = PriorState.uninformative(slots, U)
    La_prime = np.zeros((slots, U, const.N))
    per_iter, llrs, clamps, cms = [], [], [], []
    for _ in range(T):
        post = receiver.detect(y, prior)
        if post.mu_e is None:
            post.mu_e, post.sigma_e, post.clamps = extrinsic_moments(
                post.mu_p, post.sigma_p, prior.mu, prior.sigma)
        clamps.append(post.clamps)
        Le = symbol_extrinsic_llr(post.mu_e, post.sigma_e, La_prime, const)
        if keep_llr:
            llrs.append(Le)
        stream = np.transpose(Le, (1, 0, 2)).reshape(U, code.n)
        ext, hard = siso_decode(deinterleave(stream, const.N), code)
        per_iter.append(hard[:, code.info_cols])
        cms.append(counter.cm if counter is not None else 0)
        La_prime = np.transpose(interleave(ext, const.N).reshape(U, slots, const.N),
                                (1, 0, 2))
        prior = prior_update(La_prime, const)
    return TurboResult(info_hat=per_iter[-1], info_per_iter=per_iter,
                       llr_per_iter=llrs, clamps_per_iter=clamps, cm_per_iter=cms)


def receiver_users(receiver) -> int:
    if hasattr(receiver, "plan"):
        return receiver.plan.U
    return receiver.H.shape[1]
