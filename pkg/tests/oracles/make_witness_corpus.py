"""Regenerate tests/data/ineq_witnesses.json.

For the families with existential constants the corpus stores the
brute-forced extremal tuple together with the admissible constant
(fitted value * 1.01); for the explicit-constant families it stores the
extremal tuple of a large seeded sweep plus hand-picked antipodal
configurations. Every entry must re-verify via check_witness.
"""

import json
import pathlib
import time

from fracp.inequalities import brute_force_constant, check_witness, sweep

HERE = pathlib.Path(__file__).resolve().parent
OUT = HERE.parent / "data" / "ineq_witnesses.json"

P_GRID = (2.0, 2.5, 3.0, 4.0)
QG_GRID = (1.5, 2.0, 3.0)


def main():
    t0 = time.time()
    entries = []

    for gamma in QG_GRID:
        fit = brute_force_constant("holder", gamma=gamma)
        entries.append({"id": "holder", "args": list(fit.witness),
                        "gamma": gamma, "C": fit.constant * 1.01})
    entries.append({"id": "holder", "args": [1.0, -1.0], "gamma": 2.0, "C": 2.0})

    for p in P_GRID:
        fit = brute_force_constant("xxx", p=p)
        entries.append({"id": "xxx", "args": list(fit.witness),
                        "p": p, "C": fit.constant * 1.01})
    entries.append({"id": "xxx", "args": [1.0, -1.0], "p": 3.0, "C": 2.0})

    for p in P_GRID:
        for gamma in QG_GRID:
            fit = brute_force_constant("erik", p=p, gamma=gamma)
            entries.append({"id": "erik", "args": list(fit.witness),
                            "p": p, "gamma": gamma, "C": fit.constant * 1.01})

    for p in P_GRID:
        for q in QG_GRID:
            v = sweep("monotone", 200000, seed=1, p=p, q=q)
            entries.append({"id": "monotone", "args": list(v.extremal_witness),
                            "p": p, "q": q})
    for p in P_GRID:
        v = sweep("lipschitz", 200000, seed=1, p=p)
        entries.append({"id": "lipschitz", "args": list(v.extremal_witness), "p": p})
        entries.append({"id": "lipschitz", "args": [1.0, -1.0], "p": p})
    for p in P_GRID:
        for gamma in QG_GRID:
            v = sweep("erik2", 200000, seed=1, p=p, gamma=gamma)
            entries.append({"id": "erik2", "args": list(v.extremal_witness),
                            "p": p, "gamma": gamma})

    bad = [e for e in entries if not check_witness(e).all_passed]
    if bad:
        raise SystemExit(f"{len(bad)} corpus entries fail re-check: {bad[:3]}")

    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(entries)} entries to {OUT} in {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()
