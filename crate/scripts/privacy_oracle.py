"""Reference values for the Gaussian-mechanism variance and advanced
composition, evaluated with 50-digit arithmetic (mpmath).

Writes crates/core/tests/data/privacy_grid.csv.
"""
import itertools
import random
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50
OUT = Path(__file__).resolve().parent.parent / "crates/core/tests/data/privacy_grid.csv"

rng = random.Random(20240607)
fixed = list(itertools.product([0.5, 1.0, 2.0], [0.5, 0.01], [0.1, 1.0], [1, 30]))
rows = [(mp.mpf(e), mp.mpf(d), mp.mpf(u), a) for e, d, u, a in fixed]
while len(rows) < 100:
    eps = mp.mpf(repr(round(10 ** rng.uniform(-2, 1), 6)))
    delta = mp.mpf(repr(round(10 ** rng.uniform(-8, -0.05), 10)))
    u = mp.mpf(repr(round(10 ** rng.uniform(-3, 1), 6)))
    a = rng.choice([0, 1, 2, 5, 17, 100, 1000, 10**5])
    rows.append((eps, delta, u, a))

with OUT.open("w") as f:
    f.write("epsilon,delta,sensitivity,rounds,variance,epsilon_total,delta_total_raw\n")
    for eps, delta, u, a in rows:
        var = 2 * mp.log(mp.mpf("1.25") / delta) * u**2 / eps**2
        eps_tot = mp.sqrt(2 * a * mp.log(1 / delta)) * eps + a * eps * mp.expm1(eps)
        delta_tot = (a + 1) * delta
        vals = [eps, delta, u]
        f.write(",".join(mp.nstr(v, 17, strip_zeros=False) for v in vals))
        f.write(f",{a},")
        f.write(",".join(mp.nstr(v, 20) for v in (var, eps_tot, delta_tot)))
        f.write("\n")
print(f"wrote {len(rows)} rows to {OUT}")
