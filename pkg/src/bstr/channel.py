"""Synthetic sparse beam-domain channels and UT group plans.

Each UT sees a few paths clustered around a random directional cosine.  Path
cosines are snapped to the beam grid, so ``H = V G`` holds exactly with a
sparse ``G``.  Path gains are ``CN(0, 1/P_u)`` which gives ``E||h_u||^2 = 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import BeamGrid, SystemConfig, map_cosine

_SIN70 = math.sin(math.radians(70.0))


@dataclass(frozen=True)
class ChannelSpec:
    """Geometry of the synthetic multipath channel.

    ``angle_spread`` and ``min_ut_separation`` are in grid steps when
    ``units == "beams"`` and in directional-cosine units when
    ``units == "cosine"``.  ``min_ut_separation`` is the smallest allowed
    distance between paths of different UTs.
    """

    paths_per_ut_range: tuple[int, int] = (1, 4)
    angle_spread: float = 2.0
    sector: tuple[float, float] = (-_SIN70, _SIN70)
    min_ut_separation: float = 3.0
    units: str = "beams"
    max_tries: int = 2000

    def __post_init__(self):
        lo, hi = self.paths_per_ut_range
        if not 1 <= lo <= hi:
            raise ValueError("paths_per_ut_range must satisfy 1 <= lo <= hi")
        s0, s1 = self.sector
        if not -1.0 <= s0 < s1 <= 1.0:
            raise ValueError("sector must be a sub-interval of [-1, 1)")
        if self.angle_spread < 0 or self.min_ut_separation < 0:
            raise ValueError("spread and separation must be non-negative")
        if self.units not in ("beams", "cosine"):
            raise ValueError("units must be 'beams' or 'cosine'")

    def in_cosine(self, grid: BeamGrid) -> tuple[float, float]:
        scale = grid.delta if self.units == "beams" else 1.0
        return self.angle_spread * scale, self.min_ut_separation * scale

    def to_dict(self):
        return {"paths_per_ut_range": list(self.paths_per_ut_range),
                "angle_spread": self.angle_spread, "sector": list(self.sector),
                "min_ut_separation": self.min_ut_separation, "units": self.units}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("paths_per_ut_range", "sector"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ChannelRealization:
    """Sparse beam-domain channel ``G`` (A x U, CSC) plus its statistics.

    ``coupling`` is the dense A x U matrix of per-beam gain variances
    (column u is the coupling vector of UT u).  ``paths`` keeps, per UT, the
    raw cosines, their beam indices and complex gains.
    """

    cfg: SystemConfig
    grid: BeamGrid = field(repr=False)
    G: sp.csc_matrix = field(repr=False)
    coupling: np.ndarray = field(repr=False)
    paths: tuple = field(repr=False, default=())

    @property
    def U(self) -> int:
        return self.G.shape[1]

    @property
    def supports(self) -> list[np.ndarray]:
        """Beam index sets ``A_u`` (sorted, 0-based) from the coupling vectors."""
        return [np.flatnonzero(self.coupling[:, u]) for u in range(self.U)]

    def column(self, u) -> np.ndarray:
        return self.G[:, u].toarray().ravel()


def _draw_geometry(cfg, grid, spec, rng):
    spread, sep = spec.in_cosine(grid)
    lo, hi = spec.sector
    c_lo, c_hi = lo + spread / 2, hi - spread / 2
    if c_lo >= c_hi:
        raise ValueError("angle spread does not fit inside the sector")
    taken = np.empty(0)
    geometry = []
    for u in range(cfg.U):
        for _ in range(spec.max_tries):
            n_paths = int(rng.integers(spec.paths_per_ut_range[0],
                                       spec.paths_per_ut_range[1] + 1))
            center = rng.uniform(c_lo, c_hi)
            cos = center + spread * (rng.random(n_paths) - 0.5)
            cos = np.clip(cos, lo, np.nextafter(hi, -np.inf))
            if taken.size == 0 or np.min(np.abs(cos[:, None] - taken[None, :])) >= sep:
                break
        else:
            raise ValueError(
                f"could not place UT {u} of {cfg.U} with separation {sep:.4g} "
                f"after {spec.max_tries} tries; the sector is too crowded")
        taken = np.concatenate([taken, cos])
        geometry.append(cos)
    return geometry


def _assemble(cfg, grid, geometry, gains):
    rows, cols, vals = [], [], []
    coupling = np.zeros((grid.A, cfg.U))
    paths = []
    for u, (cos, g) in enumerate(zip(geometry, gains)):
        beams = np.atleast_1d(map_cosine(grid, cos))
        np.add.at(coupling[:, u], beams, 1.0 / len(cos))
        rows.append(beams)
        cols.append(np.full(len(beams), u))
        vals.append(g)
        paths.append({"cosine": cos, "beam": beams, "gain": g})
    G = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows),
                                              np.concatenate(cols))),
                      shape=(grid.A, cfg.U))
    G.sum_duplicates()
    return ChannelRealization(cfg=cfg, grid=grid, G=G, coupling=coupling,
                              paths=tuple(paths))


def _draw_gains(geometry, rng):
    out = []
    for cos in geometry:
        p = len(cos)
        out.append((rng.standard_normal(p) + 1j * rng.standard_normal(p))
                   / np.sqrt(2 * p))
    return out


def gen_channel(cfg: SystemConfig, grid: BeamGrid, spec: ChannelSpec = ChannelSpec(),
                seed=None) -> ChannelRealization:
    """Draw a channel; geometry and gains both come from ``seed``."""
    rng = np.random.default_rng(seed)
    geometry = _draw_geometry(cfg, grid, spec, rng)
    return _assemble(cfg, grid, geometry, _draw_gains(geometry, rng))


def redraw_gains(chan: ChannelRealization, seed=None) -> ChannelRealization:
    """Same path geometry (hence the same coupling vectors), fresh gains."""
    rng = np.random.default_rng(seed)
    geometry = [p["cosine"] for p in chan.paths]
    return _assemble(chan.cfg, chan.grid, geometry, _draw_gains(geometry, rng))


def coupling_from_ensemble(draw, n_samples: int) -> np.ndarray:
    """Empirical ``E{g_u * conj(g_u)}`` from ``draw(i) -> G`` for i < n_samples."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    acc = None
    for i in range(n_samples):
        G = draw(i)
        G = G.toarray() if sp.issparse(G) else np.asarray(G)
        p = np.abs(G) ** 2
        acc = p if acc is None else acc + p
    return acc / n_samples


def dense_channel(chan: ChannelRealization) -> np.ndarray:
    """``H = sum_p alpha_p v(Omega_a(p))`` assembled path by path (small M)."""
    from .model import steering_vector

    H = np.zeros((chan.cfg.M, chan.U), dtype=complex)
    for u, p in enumerate(chan.paths):
        v = steering_vector(chan.cfg, chan.grid.omega[p["beam"]])
        H[:, u] = p["gain"] @ v
    return H


# -- grouping ------------------------------------------------------------------


@dataclass(frozen=True)
class GroupPlan:
    """Partition of the UTs with the beam and interference sets of every group.

    All index arrays are sorted and 0-based.  ``own_pos[l]`` gives the
    positions of ``groups[l]`` inside ``interference_sets[l]``.
    """

    groups: tuple
    beam_sets: tuple
    interference_sets: tuple
    disjoint: bool
    U: int

    @property
    def L(self) -> int:
        return len(self.groups)

    @property
    def own_pos(self) -> tuple:
        return tuple(np.searchsorted(nt, n)
                     for n, nt in zip(self.groups, self.interference_sets))

    @property
    def union_beams(self) -> np.ndarray:
        return np.unique(np.concatenate(self.beam_sets))

    def averages(self) -> dict:
        """Mean group size, beam-set size and interference-set size."""
        return {"N": float(np.mean([len(g) for g in self.groups])),
                "B": float(np.mean([len(b) for b in self.beam_sets])),
                "N_tilde": float(np.mean([len(n) for n in self.interference_sets]))}


def make_plan(supports, groups) -> GroupPlan:
    """Build a plan from explicit groups (sets of UT indices)."""
    U = len(supports)
    groups = tuple(np.array(sorted(int(u) for u in g), dtype=int) for g in groups)
    flat = np.concatenate(groups) if groups else np.empty(0, int)
    if len(flat) != U or set(flat.tolist()) != set(range(U)):
        raise ValueError("groups must partition the UTs")
    sets = [set(np.asarray(s).tolist()) for s in supports]
    beam_sets = tuple(np.array(sorted(set().union(*(sets[u] for u in g))), dtype=int)
                      for g in groups)
    interf = tuple(np.array([u for u in range(U) if sets[u] & set(b.tolist())],
                            dtype=int) for b in beam_sets)
    disjoint = all(not (set(beam_sets[i].tolist()) & set(beam_sets[j].tolist()))
                   for i in range(len(groups)) for j in range(i + 1, len(groups)))
    return GroupPlan(groups=groups, beam_sets=beam_sets, interference_sets=interf,
                     disjoint=disjoint, U=U)


def _gap(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return int(np.min(np.abs(a[:, None] - b[None, :])))


def plan_groups(supports, target_L=None, max_beam_overlap=None, seed=0) -> GroupPlan:
    """Greedy agglomerative grouping.

    Starting from singletons, the pair of groups with the largest beam-set
    overlap is merged; ties go to the smallest merged beam set, then to the
    smallest index distance between the two sets, then to a seeded random
    order.  With ``target_L`` merging stops at that many groups; with
    ``max_beam_overlap`` it stops once no pair overlaps by more than that.
    """
    if isinstance(supports, ChannelRealization):
        supports = supports.supports
    U = len(supports)
    if (target_L is None) == (max_beam_overlap is None):
        raise ValueError("give exactly one of target_L and max_beam_overlap")
    if target_L is not None and not 1 <= target_L <= U:
        raise ValueError(f"target_L must lie in [1, {U}]")
    rank = np.random.default_rng(seed).permutation(U)
    groups = [[u] for u in range(U)]
    beams = [set(np.asarray(s).tolist()) for s in supports]

    while len(groups) > 1:
        if target_L is not None and len(groups) <= target_L:
            break
        best, best_key = None, None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                ov = len(beams[i] & beams[j])
                key = (-ov, len(beams[i] | beams[j]),
                       _gap(sorted(beams[i]), sorted(beams[j])),
                       min(rank[groups[i]].min(), rank[groups[j]].min()),
                       max(rank[groups[i]].min(), rank[groups[j]].min()))
                if best_key is None or key < best_key:
                    best, best_key = (i, j), key
        if max_beam_overlap is not None and -best_key[0] <= max_beam_overlap:
            break
        i, j = best
        groups[i] = groups[i] + groups[j]
        beams[i] = beams[i] | beams[j]
        del groups[j], beams[j]
    groups.sort(key=min)
    return make_plan(supports, groups)


# -- persistence ---------------------------------------------------------------

CHANNEL_SCHEMA = "bstr-channel-v1"


def save_channel(path, chan: ChannelRealization):
    """JSON file: header, then per-UT ``[index, re, im]`` triplets.

    Beam indices are 0-based.  Floats are written with Python's shortest
    round-trip repr so loading reproduces every value bit for bit.
    """
    cfg = chan.cfg
    G = chan.G.tocsc()
    uts = []
    for u in range(chan.U):
        lo, hi = G.indptr[u], G.indptr[u + 1]
        uts.append({
            "entries": [[int(a), float(v.real), float(v.imag)]
                        for a, v in zip(G.indices[lo:hi], G.data[lo:hi])],
            "coupling": [[int(a), float(chan.coupling[a, u])]
                         for a in np.flatnonzero(chan.coupling[:, u])],
        })
    doc = {"schema": CHANNEL_SCHEMA,
           "note": "beam indices are 0-based; floats use shortest round-trip repr",
           "header": {"M": cfg.M, "U": cfg.U, "F": cfg.F, "f_c": cfg.f_c,
                      "f_o": cfg.f_o, "d": cfg.d, "A": chan.grid.A, "S": cfg.S},
           "uts": uts}
    Path(path).write_text(json.dumps(doc))


def load_channel(path, sigma_z: float = 1.0) -> ChannelRealization:
    from .model import make_grid

    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CHANNEL_SCHEMA:
        raise ValueError(f"{path}: not a channel file")
    h = doc["header"]
    cfg = SystemConfig(M=h["M"], U=h["U"], F=h["F"], f_c=h["f_c"], f_o=h["f_o"],
                       d=h["d"], sigma_z=sigma_z)
    grid = make_grid(cfg)
    if grid.A != h["A"] or cfg.S != h["S"]:
        raise ValueError("header A/S inconsistent with the physical parameters")
    rows, cols, vals = [], [], []
    coupling = np.zeros((grid.A, cfg.U))
    for u, ut in enumerate(doc["uts"]):
        for a, re, im in ut["entries"]:
            rows.append(a)
            cols.append(u)
            vals.append(complex(re, im))
        for a, w in ut["coupling"]:
            coupling[a, u] = w
    G = sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)),
                      shape=(grid.A, cfg.U))
    return ChannelRealization(cfg=cfg, grid=grid, G=G, coupling=coupling)
