"""Command-line front end: ``bstr <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .channel import ChannelSpec, gen_channel, plan_groups, save_channel
from .model import SystemConfig, make_grid
from .sim import DESK_CHANNEL, Scenario, run_ber, scenario_complexity


def _add_system_args(p, M=64, U=8):
    p.add_argument("--M", type=int, default=M, help="number of antennas (even)")
    p.add_argument("--U", type=int, default=U, help="number of UTs")
    p.add_argument("--F", type=int, default=2, help="oversampling factor")
    p.add_argument("--ratio", type=float, default=0.96, help="f_c / f_o")


def _load_scenario(args) -> Scenario:
    if getattr(args, "table1", False):
        scn = Scenario.table1()
    elif args.config:
        scn = Scenario.load(args.config)
    else:
        scn = Scenario()
    over = {}
    for name in ("seed", "frames", "T", "eps"):
        val = getattr(args, name, None)
        if val is not None:
            over[name] = val
    if getattr(args, "snr", None):
        over["snr_db"] = tuple(args.snr)
    if getattr(args, "receivers", None):
        over["receivers"] = tuple(args.receivers)
    if getattr(args, "window", None):
        over["window"] = {"kind": "file", "path": str(args.window)}
    if getattr(args, "no_timing", False):
        over["timing"] = False
    return scn.replace(**over) if over else scn


def cmd_design_window(args):
    from .window import energy_focusing_window, save_window

    cfg = SystemConfig.from_ratio(args.M, 1, args.F, args.ratio)
    design = energy_focusing_window(cfg, args.c, args.omega_prime,
                                    cache_dir=None if args.cache else False)
    save_window(args.out, cfg, design, args.eps)
    print(f"wrote {args.out}: lambda={design.ratio:.12g} residual={design.residual:.2e}")
    return 0


def cmd_gen_channel(args):
    cfg = SystemConfig.from_ratio(args.M, args.U, args.F, args.ratio)
    grid = make_grid(cfg)
    spec = (ChannelSpec.from_dict(json.loads(Path(args.spec).read_text()))
            if args.spec else ChannelSpec.from_dict(DESK_CHANNEL))
    chan = gen_channel(cfg, grid, spec, seed=args.seed)
    save_channel(args.out, chan)
    plan = plan_groups(chan, target_L=min(args.L, cfg.U))
    print(f"wrote {args.out}: A={grid.A} S={cfg.S} paths/UT="
          f"{[len(p['cosine']) for p in chan.paths]} groups={plan.L} "
          f"disjoint={plan.disjoint}")
    return 0


def cmd_simulate(args):
    scn = _load_scenario(args)
    if args.dump_config:
        print(json.dumps(scn.to_dict(), indent=1))
        return 0

    def progress(f, n):
        if not args.quiet and (f == n or f % max(1, n // 10) == 0):
            print(f"frame {f}/{n}", file=sys.stderr)

    rows = run_ber(scn, out=args.out, progress=progress)
    bad = [r for r in rows if r["status"] != "ok"]
    print(f"wrote {len(rows)} rows to {args.out} (scenario {scn.digest()})")
    for r in rows:
        if r["iteration"] == scn.T and not args.quiet:
            print(f"  {r['receiver']:8s} snr={r['snr_db']:6.2f} dB  ber={r['ber']:.3e}"
                  f"  {r['status']}")
    return 1 if bad else 0


def cmd_complexity(args):
    scn = _load_scenario(args)
    rep = scenario_complexity(scn, measure_frames=args.measure)
    doc = rep.to_dict()
    doc["scenario_hash"] = scn.digest()
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest

    results = run_selftest(args.only or None)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} oracle checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bstr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design-window", help="design the energy-focusing window")
    _add_system_args(p)
    p.add_argument("--c", type=int, default=3, help="half-width of the in-band beam set")
    p.add_argument("--omega-prime", type=float, default=1.0,
                   help="half-width of the averaged directional-cosine range")
    p.add_argument("--eps", type=float, default=1e-3, help="filtering-set threshold")
    p.add_argument("--cache", action="store_true", help="use the on-disk window cache")
    p.add_argument("--out", default="window.json")
    p.set_defaults(func=cmd_design_window)

    p = sub.add_parser("gen-channel", help="draw a beam-domain channel")
    _add_system_args(p)
    p.add_argument("--L", type=int, default=4, help="groups for the summary line")
    p.add_argument("--spec", help="channel-spec JSON (default: desk scenario)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="channel.json")
    p.set_defaults(func=cmd_gen_channel)

    for name, func, default_out in (("simulate", cmd_simulate, "ber.csv"),
                                    ("complexity", cmd_complexity, None)):
        p = sub.add_parser(name, help=("run a BER sweep" if name == "simulate"
                                       else "complex-multiplication counts"))
        p.add_argument("--config", help="scenario JSON (default: desk scenario)")
        p.add_argument("--table1", action="store_true",
                       help="full-scale parameters instead of the desk scenario")
        p.add_argument("--seed", type=int)
        p.add_argument("--T", type=int, help="turbo iterations")
        p.add_argument("--eps", type=float, help="filtering-set threshold")
        p.add_argument("--window", help="window JSON from design-window")
        p.add_argument("--receivers", nargs="+")
        p.add_argument("--out", default=default_out)
        p.set_defaults(func=func)
        if name == "simulate":
            p.add_argument("--frames", type=int, help="channel realizations per SNR")
            p.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
            p.add_argument("--no-timing", action="store_true",
                           help="write 0 wall-clock times for byte-identical CSVs")
            p.add_argument("--dump-config", action="store_true",
                           help="print the resolved scenario JSON and exit")
            p.add_argument("--quiet", action="store_true")
        else:
            p.add_argument("--measure", type=int, default=0,
                           help="frames for instrumented operation counts")

    p = sub.add_parser("selftest", help="run every fast-path/oracle pair")
    p.add_argument("--only", nargs="+", help="subset of check names")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"bstr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
