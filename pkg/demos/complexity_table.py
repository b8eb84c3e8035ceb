"""Complex multiplications per symbol slot at full scale, per turbo iteration count."""

from bstr.sim import Scenario, scenario_complexity

for T in (1, 2, 3, 4):
    rep = scenario_complexity(Scenario.table1(T=T)).as_floats()
    print(f"T={T}  mmse_tr {rep['mmse_tr']:12.0f}  bstr {rep['bstr']:10.0f}"
          f"  wbstr {rep['wbstr']:9.0f}")
