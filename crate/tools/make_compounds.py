"""Write data/compounds_example.csv: synthetic binary and ternary compounds
over H..Xe with a formation-energy-like target.

The target is a deterministic function of element electronegativity and
valence plus small Gaussian noise. It exists to exercise `ptg evaluate` and is
not a measured quantity. Usage:

    python tools/make_compounds.py > data/compounds_example.csv
"""
import csv
import sys

import numpy as np

N_BINARY = 500
N_TERNARY = 300
NOBLE = {"He", "Ne", "Ar", "Kr", "Xe"}


def load(path="data/elements.csv"):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {
        r["symbol"]: (float(r["electron_negativity"]), float(r["num_valence"]))
        for r in rows
        if r["symbol"] not in NOBLE
    }


def formula(symbols, counts):
    return "".join(s + (str(c) if c > 1 else "") for s, c in zip(symbols, counts))


def target(props, symbols, counts, rng):
    w = np.array(counts, float) / sum(counts)
    chi = np.array([props[s][0] for s in symbols])
    val = np.array([props[s][1] for s in symbols])
    mean_chi = w @ chi
    spread = w @ (chi - mean_chi) ** 2
    return -1.8 * spread - 0.05 * abs(w @ val - 4.0) + 0.1 + rng.normal(0.0, 0.05)


def main():
    rng = np.random.default_rng(20240917)
    props = load()
    symbols = sorted(props, key=lambda s: props[s][0])
    seen = set()
    out = csv.writer(sys.stdout, lineterminator="\n")
    print("# Synthetic targets generated by tools/make_compounds.py; not measured data.")
    out.writerow(["formula", "target[eV/atom]"])
    for n_el, n_rows in [(2, N_BINARY), (3, N_TERNARY)]:
        written = 0
        while written < n_rows:
            els = list(rng.choice(symbols, size=n_el, replace=False))
            counts = list(rng.integers(1, 5, size=n_el))
            f = formula(els, counts)
            if f in seen:
                continue
            seen.add(f)
            out.writerow([f, f"{target(props, els, counts, rng):.4f}"])
            written += 1


if __name__ == "__main__":
    main()
