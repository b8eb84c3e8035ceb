"""Design the energy-focusing window and compare it with classical windows.

Prints the in-band energy ratio of each window and the filtering-set size
at two thresholds, for a few array sizes.
"""

import numpy as np

from bstr import SystemConfig, make_grid
from bstr.window import (build_kernels, classical_window, energy_focusing_window,
                         energy_ratio, gamma_coeffs)

C, OMEGA_PRIME = 3, 1.0

for M in (32, 64, 256):
    cfg = SystemConfig.from_ratio(M, 1, 2, 0.96)
    Phi, Xi = build_kernels(cfg, make_grid(cfg), C, OMEGA_PRIME)
    windows = {
        "rectangular": np.ones(M),
        "hanning": classical_window("hanning", M),
        "kaiser(10)": classical_window("kaiser", M, 10.0),
        "energy focusing": energy_focusing_window(cfg, C, OMEGA_PRIME).eta,
    }
    print(f"M={M}")
    for name, eta in windows.items():
        co = gamma_coeffs(eta, cfg)
        print(f"  {name:16s} lambda={energy_ratio(Phi, Xi, eta):.6f}"
              f"  |Q|(1e-3)={co.with_eps(1e-3).Q:4d}  |Q|(2e-3)={co.with_eps(2e-3).Q:4d}")
