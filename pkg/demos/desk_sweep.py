"""Small BER sweep on the desk scenario, printed per turbo iteration.

Usage: python demos/desk_sweep.py [frames]
"""

import sys

from bstr.sim import Scenario, run_ber

frames = int(sys.argv[1]) if len(sys.argv) > 1 else 20
scn = Scenario(receivers=("mmse_tr", "bstr", "wbstr"), frames=frames, timing=False)
print(f"M={scn.M} U={scn.U} T={scn.T} frames={frames} code={scn.code}")
for r in run_ber(scn, progress=lambda f, n: print(f"\rframe {f}/{n}", end="", file=sys.stderr)):
    print(f"{r['receiver']:8s} {r['snr_db']:4.1f} dB  iter {r['iteration']}"
          f"  BER {r['ber']:.4f}  CM/slot {r['cm_count']}")
