"""Beam-structured turbo receivers for wideband massive-MIMO uplinks.

Modules:

* :mod:`bstr.model`     system parameters, beam grid, FFT beam transforms
* :mod:`bstr.channel`   sparse beam-domain channels and UT grouping
* :mod:`bstr.window`    energy-focusing window and Toeplitz coefficient spectra
* :mod:`bstr.detector`  MMSE, grouped and windowed soft detectors
* :mod:`bstr.bicm`      QAM, LDPC, interleaving, soft demapping, turbo loop
* :mod:`bstr.sim`       BER sweeps, CSV output, complexity accounting
* :mod:`bstr.oracle`    brute-force references used by tests and ``selftest``
"""

from .bicm import CodeSpec, Constellation, ldpc_code, qam, siso_decode, turbo_run
from .channel import (ChannelRealization, ChannelSpec, GroupPlan, gen_channel,
                      load_channel, make_plan, plan_groups, redraw_gains,
                      save_channel)
from .detector import (BSTRReceiver, MMSEReceiver, OpCounter, PosteriorState,
                       PriorState, WindowedReceiver)
from .model import BeamGrid, BeamOps, SystemConfig, make_grid
from .sim import ComplexityReport, Scenario, complexity_report, run_ber
from .window import (WindowCoeffs, WindowDesign, classical_window,
                     energy_focusing_window, gamma_coeffs, load_window,
                     save_window)

__version__ = "0.1.0"

__all__ = [
    "BSTRReceiver", "BeamGrid", "BeamOps", "ChannelRealization", "ChannelSpec",
    "CodeSpec", "ComplexityReport", "Constellation", "GroupPlan", "MMSEReceiver",
    "OpCounter", "PosteriorState", "PriorState", "Scenario", "SystemConfig",
    "WindowCoeffs", "WindowDesign", "WindowedReceiver", "classical_window",
    "complexity_report", "energy_focusing_window", "gamma_coeffs", "gen_channel",
    "ldpc_code", "load_channel", "load_window", "make_grid", "make_plan",
    "plan_groups", "qam", "redraw_gains", "run_ber", "save_channel", "save_window",
    "siso_decode", "turbo_run",
]
