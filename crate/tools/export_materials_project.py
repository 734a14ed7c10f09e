"""Export stable compounds over H..Xe with their formation energy per atom as
`formula,target[eV/atom]` CSV for `ptg evaluate`.

Requires the `mp-api` client and an API key in MP_API_KEY. Usage:

    python tools/export_materials_project.py > data/mp_formation_energy.csv

Then point `PTG_MP_DATA` at the file to enable the full descriptor comparison
in the acceptance suite.
"""
import csv
import os
import sys

from mp_api.client import MPRester
from pymatgen.core import Element

MAX_Z = 54


def main():
    allowed = {Element.from_Z(z).symbol for z in range(1, MAX_Z + 1)}
    with MPRester(os.environ["MP_API_KEY"]) as mpr:
        docs = mpr.materials.summary.search(
            is_stable=True,
            fields=["formula_pretty", "formation_energy_per_atom", "elements"],
        )
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["formula", "target[eV/atom]"])
    seen = set()
    for d in docs:
        symbols = {str(e) for e in d.elements}
        if not symbols <= allowed or d.formation_energy_per_atom is None:
            continue
        if d.formula_pretty in seen:
            continue
        seen.add(d.formula_pretty)
        out.writerow([d.formula_pretty, f"{d.formation_energy_per_atom:.6f}"])


if __name__ == "__main__":
    main()
