"""High-precision ln(1 - tau) and ln(c0) for small networks, where
tau = (1 - m^{-mB})^{1/B} and c0 = (80 m sqrt(l) / (1 - tau))^2.

Writes crates/core/tests/data/theory_constants.csv.
"""
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50
OUT = Path(__file__).resolve().parent.parent / "crates/core/tests/data/theory_constants.csv"

cases = [(m, b, l) for m in (2, 3, 4, 6, 8, 16, 32) for b in (1, 2, 5, 20) for l in (0.5, 1.0, 7.0)]
with OUT.open("w") as f:
    f.write("m,window,lipschitz,ln_one_minus_tau,ln_c0\n")
    for m, b, l in cases:
        x = mp.power(m, -m * b)
        one_minus_tau = -mp.expm1(mp.log1p(-x) / b)
        ln_omt = mp.log(one_minus_tau)
        ln_c0 = 2 * (mp.log(80 * m) + mp.log(l) / 2 - ln_omt)
        f.write(f"{m},{b},{l},{mp.nstr(ln_omt, 20)},{mp.nstr(ln_c0, 20)}\n")
print(f"wrote {len(cases)} rows to {OUT}")
