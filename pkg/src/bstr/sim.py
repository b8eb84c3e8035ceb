"""Seeded Monte Carlo BER sweeps and complexity accounting.

Seeds are derived from ``(seed, stream, ...)`` tuples so that every frame
and SNR point can be regenerated independently of evaluation order:

* channel geometry: ``(seed, 0)``
* path gains of frame f: ``(seed, 1, f)``
* information bits of frame f: ``(seed, 2, f)``
* noise of SNR point i, frame f: ``(seed, 3, i, f)``

All receivers see the same channel, bits and noise.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bicm import encode_interleave_map, ldpc_code, qam, turbo_run
from .channel import ChannelSpec, gen_channel, make_plan, plan_groups, redraw_gains
from .detector import BSTRReceiver, MMSEReceiver, OpCounter, WindowedReceiver
from .model import SPEED_OF_LIGHT, BeamOps, SystemConfig, make_grid
from .window import (classical_window, energy_focusing_window, gamma_coeffs,
                     load_window)

RECEIVERS = ("mmse_tr", "bstr", "bstr_l1", "wbstr")
CSV_SCHEMA = "# bstr-ber-csv v1"
# Crowded sector: UTs share beams, so the detector must cancel interference
# and the turbo iterations have something to gain.
DESK_CHANNEL = {"paths_per_ut_range": [1, 4], "angle_spread": 2.0,
                "sector": [-0.15, 0.15], "min_ut_separation": 0.0,
                "units": "beams"}
CSV_COLUMNS = ["scenario_hash", "receiver", "snr_db", "iteration", "bits",
               "bit_errors", "ber", "frames", "frame_errors", "clamps",
               "cm_count", "wallclock_ms", "status"]


@dataclass(frozen=True)
class Scenario:
    """Everything a BER sweep depends on.  Serializable to and from JSON.

    ``window`` is ``{"kind": ..., ...}`` with kind one of ``rectangular``,
    ``hanning``, ``kaiser`` (``beta``), ``energy_focusing`` (``c``,
    ``omega_prime``) or ``file`` (``path`` to a window JSON).
    """

    M: int = 64
    U: int = 8
    F: int = 2
    ratio: float = 0.96
    f_o: float = SPEED_OF_LIGHT / 18.0
    channel: dict = field(default_factory=lambda: dict(DESK_CHANNEL))
    grouping: dict = field(default_factory=lambda: {"target_L": 4})
    window: dict = field(default_factory=lambda: {"kind": "energy_focusing",
                                                  "c": 3, "omega_prime": 1.0})
    eps: float = 1e-3
    receivers: tuple = ("mmse_tr", "bstr", "wbstr")
    dhat_mode: str = "approx"
    solve_mode: str = "interference_approx"
    modulation: int = 4
    code: str = "regular-1024"
    T: int = 3
    snr_db: tuple = (2.0, 4.0, 6.0)
    frames: int = 200
    seed: int = 0
    timing: bool = True

    def __post_init__(self):
        object.__setattr__(self, "receivers", tuple(self.receivers))
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        self.validate()

    def validate(self):
        bad = [r for r in self.receivers if r not in RECEIVERS]
        if bad:
            raise ValueError(f"unknown receivers {bad}; choose from {RECEIVERS}")
        if self.T < 1 or self.frames < 1:
            raise ValueError("T and frames must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.dhat_mode not in ("exact", "approx"):
            raise ValueError("dhat_mode must be exact or approx")
        if self.solve_mode not in ("exact", "interference_approx"):
            raise ValueError("solve_mode must be exact or interference_approx")
        keys = set(self.grouping)
        if keys not in ({"target_L"}, {"max_beam_overlap"}):
            raise ValueError("grouping needs exactly one of target_L, max_beam_overlap")
        if self.window.get("kind") not in ("rectangular", "hanning", "kaiser",
                                           "energy_focusing", "file"):
            raise ValueError(f"unknown window {self.window!r}")
        self.config()  # raises on bad physics
        ChannelSpec.from_dict(self.channel)

    @classmethod
    def table1(cls, **kw) -> "Scenario":
        """Full-scale parameters: M=256, U=72, L=18, F=2, f_c=16 MHz, d=9 m,
        2112-bit rate-3/4 code, wide sector."""
        base = dict(M=256, U=72, F=2, ratio=16e6 / (SPEED_OF_LIGHT / 18.0),
                    channel=ChannelSpec().to_dict(), grouping={"target_L": 18},
                    code="peg-2112")
        base.update(kw)
        return cls(**base)

    def config(self, sigma_z=1.0) -> SystemConfig:
        return SystemConfig.from_ratio(self.M, self.U, self.F, self.ratio,
                                       f_o=self.f_o, sigma_z=sigma_z)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["receivers"] = list(self.receivers)
        d["snr_db"] = list(self.snr_db)
        return d

    @classmethod
    def from_dict(cls, d) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown scenario fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("timing")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def resolve_window(scn: Scenario, cfg: SystemConfig) -> np.ndarray:
    w = scn.window
    kind = w["kind"]
    if kind == "energy_focusing":
        return energy_focusing_window(cfg, w.get("c", 3), w.get("omega_prime", 1.0)).eta
    if kind == "file":
        doc = load_window(w["path"])
        p = doc["params"]
        if p["M"] != cfg.M or p["F"] != cfg.F:
            raise ValueError("window file does not match the scenario (M, F)")
        return doc["eta"]
    return classical_window(kind, cfg.M, w.get("beta", 10.0))


def _rng(*key):
    return np.random.default_rng([int(k) for k in key])


@dataclass
class _Tally:
    bits: int = 0
    bit_errors: int = 0
    frames: int = 0
    frame_errors: int = 0
    clamps: int = 0
    cm: int = 0
    seconds: float = 0.0


def _build_receiver(kind, ops, G, plan, plan_l1, coeffs, scn, counter):
    if kind == "mmse_tr":
        return MMSEReceiver(ops, G, 1.0, counter)
    if kind == "bstr":
        return BSTRReceiver(ops, G, plan, 1.0, counter)
    if kind == "bstr_l1":
        return BSTRReceiver(ops, G, plan_l1, 1.0, counter)
    return WindowedReceiver(ops, G, plan, coeffs, 1.0, scn.dhat_mode,
                            scn.solve_mode, counter)


def run_ber(scn: Scenario, out=None, progress=None) -> list[dict]:
    """Run the sweep; return CSV rows and append them to ``out`` if given.

    One row per (receiver, SNR, iteration).  ``frames`` counts codewords
    (U per channel realization).  A failure at one SNR point is recorded in
    the ``status`` column of that point's rows and the sweep continues.
    """
    cfg = scn.config()
    grid = make_grid(cfg)
    ops = BeamOps.build(cfg, grid)
    const = qam(scn.modulation)
    code = ldpc_code(scn.code)
    if code.n % const.N:
        raise ValueError("code length must be a multiple of bits per symbol")
    spec = ChannelSpec.from_dict(scn.channel)
    base = gen_channel(cfg, grid, spec, seed=[scn.seed, 0])
    plan = plan_groups(base, seed=scn.seed, **scn.grouping)
    plan_l1 = make_plan(base.supports, [range(cfg.U)])
    coeffs = None
    if "wbstr" in scn.receivers:
        coeffs = gamma_coeffs(resolve_window(scn, cfg), cfg, scn.eps)

    tallies = {(r, i, t): _Tally() for r in scn.receivers
               for i in range(len(scn.snr_db)) for t in range(scn.T)}
    status = {(r, i): "ok" for r in scn.receivers for i in range(len(scn.snr_db))}

    for f in range(scn.frames):
        chan = redraw_gains(base, seed=[scn.seed, 1, f])
        info = _rng(scn.seed, 2, f).integers(0, 2, (cfg.U, code.k), dtype=np.uint8)
        x, _ = encode_interleave_map(info, code, const)
        H = ops.apply(chan.G.toarray().T).T
        clean = x @ H.T
        receivers = {}
        for kind in scn.receivers:
            counter = OpCounter()
            receivers[kind] = (_build_receiver(kind, ops, chan.G, plan, plan_l1,
                                               coeffs, scn, counter), counter)
        for i, snr in enumerate(scn.snr_db):
            sigma_z = 10.0 ** (-snr / 10.0)
            nrng = _rng(scn.seed, 3, i, f)
            noise = (nrng.standard_normal(clean.shape)
                     + 1j * nrng.standard_normal(clean.shape)) * math.sqrt(sigma_z / 2)
            y = clean + noise
            for kind, (rx, counter) in receivers.items():
                if status[(kind, i)] != "ok":
                    continue
                rx.sigma_z = sigma_z
                start_cm = counter.cm
                t0 = time.perf_counter()
                try:
                    res = turbo_run(y, rx, code, const, scn.T, U=cfg.U)
                except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                    status[(kind, i)] = f"error:{type(exc).__name__}:{exc}"
                    continue
                elapsed = time.perf_counter() - t0
                for t, dec in enumerate(res.info_per_iter):
                    tl = tallies[(kind, i, t)]
                    err = dec != info
                    tl.bits += err.size
                    tl.bit_errors += int(err.sum())
                    tl.frames += cfg.U
                    tl.frame_errors += int(err.any(axis=1).sum())
                    tl.clamps += sum(res.clamps_per_iter[t].values())
                    tl.cm += res.cm_per_iter[t] - start_cm
                    tl.seconds += elapsed * (t + 1) / scn.T
        if progress is not None:
            progress(f + 1, scn.frames)

    digest = scn.digest()
    slots = code.n // const.N
    rows = []
    for kind in scn.receivers:
        for i, snr in enumerate(scn.snr_db):
            for t in range(scn.T):
                tl = tallies[(kind, i, t)]
                ok = status[(kind, i)] == "ok"
                n_real = max(1, tl.frames // cfg.U)
                rows.append({
                    "scenario_hash": digest, "receiver": kind, "snr_db": snr,
                    "iteration": t + 1, "bits": tl.bits, "bit_errors": tl.bit_errors,
                    "ber": tl.bit_errors / tl.bits if ok and tl.bits else float("nan"),
                    "frames": tl.frames, "frame_errors": tl.frame_errors,
                    "clamps": tl.clamps,
                    "cm_count": tl.cm // (n_real * slots) if ok else 0,
                    "wallclock_ms": round(1e3 * tl.seconds, 3) if scn.timing else 0,
                    "status": status[(kind, i)],
                })
    if out is not None:
        write_csv(out, rows)
    return rows


def write_csv(path, rows):
    """Append rows to a schema-tagged CSV, creating it (with header) if needed."""
    path = Path(path)
    if path.exists() and path.stat().st_size:
        with path.open() as fh:
            first, header = fh.readline().rstrip("\n"), fh.readline().rstrip("\n")
        if first != CSV_SCHEMA or header != ",".join(CSV_COLUMNS):
            raise ValueError(f"{path}: existing file has a different schema")
        mode = "a"
    else:
        mode = "w"
    with path.open(mode, newline="") as fh:
        if mode == "w":
            fh.write(CSV_SCHEMA + "\n")
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if mode == "w":
            w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        if fh.readline().rstrip("\n") != CSV_SCHEMA:
            raise ValueError(f"{path}: missing schema line")
        return list(csv.DictReader(fh))


# -- complexity ----------------------------------------------------------------


def _log2(S):
    # exact for powers of two, float otherwise
    if S & (S - 1) == 0:
        return Fraction(S.bit_length() - 1)
    return math.log2(S)


@dataclass(frozen=True)
class ComplexityReport:
    """Complex-multiplication counts per symbol slot for the three receivers."""

    mmse_tr: Fraction
    bstr: Fraction
    wbstr: Fraction
    averages: dict
    params: dict
    empirical: dict = field(default_factory=dict)

    def as_floats(self) -> dict:
        return {"mmse_tr": float(self.mmse_tr), "bstr": float(self.bstr),
                "wbstr": float(self.wbstr)}

    def to_dict(self) -> dict:
        return {"cm": self.as_floats(),
                "exact": {k: str(getattr(self, k)) for k in ("mmse_tr", "bstr", "wbstr")},
                "averages": {k: str(v) for k, v in self.averages.items()},
                "params": self.params, "empirical": self.empirical}


def plan_averages(supports, plan) -> dict:
    """Exact means of ``|A_u|``, ``B_l``, ``N_l`` and ``Ntilde_l``."""
    U, L = len(supports), plan.L
    return {"A_tilde": Fraction(sum(len(s) for s in supports), U),
            "B": Fraction(sum(len(b) for b in plan.beam_sets), L),
            "N": Fraction(sum(len(g) for g in plan.groups), L),
            "N_tilde": Fraction(sum(len(n) for n in plan.interference_sets), L)}


def cm_mmse_tr(M, U, T):
    M, U = Fraction(M), Fraction(U)
    return M * U * (U + 1) / 2 + ((U + 5) * U ** 2 / 2 + M * U * (U + 2)) * T


def cm_bstr(M, S, A, U, L, T, A_tilde, B):
    S2 = Fraction((S + 1) // 2 - 1)
    pre = A_tilde * U * S2 / 2
    per = (A_tilde * U + A + S * (1 + _log2(S))
           + (B * (B + 2) * U + B ** 2 * (B + 3)) * Fraction(L, 2) + B * (B + 1) * U)
    return pre + per * T


def cm_wbstr(M, S, A, U, L, T, A_tilde, B, N_tilde, Q):
    pre = A_tilde * U * Fraction(Q) / 2 + (B + (N_tilde + 1) / 2) * B * N_tilde * L
    per = (A_tilde * U + A + Fraction(M, 2) + S * (1 + _log2(S))
           + (N_tilde / 2 + 2) * N_tilde ** 2 * L
           + (N_tilde / 2 + B * N_tilde + B) * U)
    return pre + per * T


def complexity_report(cfg: SystemConfig, supports, plan, Q: int, T: int,
                      empirical=None) -> ComplexityReport:
    """Evaluate the three closed-form counts with averages taken from ``plan``."""
    grid = make_grid(cfg)
    av = plan_averages(supports, plan)
    args = dict(M=cfg.M, S=cfg.S, A=grid.A, U=cfg.U, L=plan.L, T=T)
    return ComplexityReport(
        mmse_tr=cm_mmse_tr(cfg.M, cfg.U, T),
        bstr=cm_bstr(**args, A_tilde=av["A_tilde"], B=av["B"]),
        wbstr=cm_wbstr(**args, A_tilde=av["A_tilde"], B=av["B"],
                       N_tilde=av["N_tilde"], Q=Q),
        averages=av, params={**args, "Q": Q}, empirical=empirical or {})


def scenario_complexity(scn: Scenario, measure_frames: int = 0) -> ComplexityReport:
    """Closed forms for a scenario, optionally with instrumented counts.

    With ``measure_frames > 0`` each receiver runs one detection pass on
    that many random frames and the counter readings (per slot, per
    iteration, including setup) are attached as ``empirical``.
    """
    cfg = scn.config()
    grid = make_grid(cfg)
    chan = gen_channel(cfg, grid, ChannelSpec.from_dict(scn.channel), seed=[scn.seed, 0])
    plan = plan_groups(chan, seed=scn.seed, **scn.grouping)
    coeffs = gamma_coeffs(resolve_window(scn, cfg), cfg, scn.eps)
    empirical = {}
    if measure_frames:
        from .detector import PriorState

        ops = BeamOps.build(cfg, grid)
        plan_l1 = make_plan(chan.supports, [range(cfg.U)])
        slots = 16
        for kind in scn.receivers:
            counter = OpCounter()
            for f in range(measure_frames):
                ch = redraw_gains(chan, seed=[scn.seed, 1, f])
                rx = _build_receiver(kind, ops, ch.G, plan, plan_l1, coeffs, scn, counter)
                y = np.zeros((slots, cfg.M), dtype=complex)
                rx.detect(y, PriorState.uninformative(slots, cfg.U))
            empirical[kind] = counter.cm // (measure_frames * slots)
    return complexity_report(cfg, chan.supports, plan, coeffs.Q, scn.T, empirical)
