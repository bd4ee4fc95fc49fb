"""Arbitrary-precision reference values for the spoiled gradient-echo (VIBE) signal.

Regenerate with:  python3 vibe_mpmath.py > ../data/vibe_oracle.json
Inputs are drawn from a fixed-seed generator and stored as exact float64
repr strings so the Rust side parses bit-identical arguments.
"""
import json
import random

import mpmath as mp

mp.mp.dps = 60

TE = 4.54
TR = 7.25
ALPHA_DEG = 10.0


def signal(t1, t2, rho):
    t1, t2, rho = mp.mpf(t1), mp.mpf(t2), mp.mpf(rho)
    te, tr = mp.mpf(TE), mp.mpf(TR)
    alpha = mp.mpf(ALPHA_DEG) * mp.pi / 180
    e1 = mp.exp(-tr / t1)
    return rho * mp.sin(alpha) * (1 - e1) / (1 - mp.cos(alpha) * e1) * mp.exp(-te / t2)


def main():
    rng = random.Random(20201104)
    cases = []
    for _ in range(100):
        t1 = rng.uniform(200.0, 3000.0)
        t2 = rng.uniform(5.0, min(t1 * 0.9, 400.0))
        rho = rng.uniform(0.01, 1.5)
        cases.append(
            {
                "t1": repr(t1),
                "t2": repr(t2),
                "rho": repr(rho),
                "expected": mp.nstr(signal(t1, t2, rho), 30),
            }
        )
    # the named single case: T1 800 ms, T2 40 ms, rho 1
    cases.append({"t1": "800.0", "t2": "40.0", "rho": "1.0", "expected": mp.nstr(signal(800.0, 40.0, 1.0), 30)})
    print(json.dumps({"te": TE, "tr": TR, "alpha_deg": ALPHA_DEG, "cases": cases}, indent=1))


if __name__ == "__main__":
    main()
