"""Regenerate data/elements.csv (elements H..Xe, 39 features).

Sources: the `mendeleev` package and the Magpie element tables shipped with
`matminer` (matminer/utils/data_files/magpie_elementdata). Usage:

    python tools/build_elements.py <magpie_elementdata dir> > data/elements.csv
"""
import csv
import math
import os
import sys

from mendeleev import element

MAX_Z = 54

MAGPIE = {
    "electron_negativity": "Electronegativity",
    "gs_bandgap": "GSbandgap",
    "gs_energy": "GSenergy_pa",
    "gs_est_bcc_latcnt": "GSestBCClatcnt",
    "gs_est_fcc_latcnt": "GSestFCClatcnt",
    "gs_mag_moment": "GSmagmom",
    "gs_volume_per": "GSvolume_pa",
    "icsd_volume": "ICSDVolume",
    "num_unfilled": "NUnfilled",
    "num_valence": "NValence",
    "num_d_unfilled": "NdUnfilled",
    "num_d_valence": "NdValence",
    "num_p_unfilled": "NpUnfilled",
    "num_p_valence": "NpValence",
    "num_s_unfilled": "NsUnfilled",
    "num_s_valence": "NsValence",
    "molar_volume": "MolarVolume",
    "Polarizability": "Polarizability",
}

MENDELEEV = [
    "atomic_radius_rahm",
    "atomic_volume",
    "atomic_weight",
    "boiling_point",
    "c6_gb",
    "covalent_radius_cordero",
    "covalent_radius_pyykko",
    "density",
    "dipole_polarizability",
    "en_allen",
    "en_ghosh",
    "mendeleev_number",
    "melting_point",
    "period",
    "thermal_conductivity",
    "vdw_radius",
    "vdw_radius_alvarez",
    "vdw_radius_mm3",
    "vdw_radius_uff",
]

FEATURES = [
    "atomic_number", "atomic_radius_rahm", "atomic_volume", "atomic_weight",
    "boiling_point", "c6_gb", "covalent_radius_cordero", "covalent_radius_pyykko",
    "density", "dipole_polarizability", "electron_negativity", "en_allen",
    "en_ghosh", "first_ion_en", "gs_bandgap", "gs_energy", "gs_est_bcc_latcnt",
    "gs_est_fcc_latcnt", "gs_mag_moment", "gs_volume_per", "icsd_volume",
    "mendeleev_number", "melting_point", "molar_volume", "num_unfilled",
    "num_valence", "num_d_unfilled", "num_d_valence", "num_p_unfilled",
    "num_p_valence", "num_s_unfilled", "num_s_valence", "period",
    "thermal_conductivity", "vdw_radius", "vdw_radius_alvarez", "vdw_radius_mm3",
    "vdw_radius_uff", "Polarizability",
]


def magpie_column(root, name):
    with open(os.path.join(root, name + ".table")) as fh:
        vals = []
        for line in fh:
            tok = line.strip()
            try:
                vals.append(float(tok))
            except ValueError:
                vals.append(math.nan)
    return vals


# Fallbacks for entries mendeleev leaves empty (allotropes, gases).
FALLBACK_MAGPIE = {
    "melting_point": "MeltingT",
    "boiling_point": "BoilingT",
    "thermal_conductivity": "ThermalConductivity",
}


def main():
    root = sys.argv[1]
    magpie = {k: magpie_column(root, v) for k, v in MAGPIE.items()}
    fallback = {k: magpie_column(root, v) for k, v in FALLBACK_MAGPIE.items()}

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["symbol"] + FEATURES)
    for z in range(1, MAX_Z + 1):
        el = element(z)
        vals = {"atomic_number": z, "first_ion_en": el.ionenergies.get(1, math.nan)}
        for f in MENDELEEV:
            vals[f] = getattr(el, f)
        for f, col in magpie.items():
            vals[f] = col[z - 1]
        for f, col in fallback.items():
            if vals[f] is None or math.isnan(vals[f]):
                vals[f] = col[z - 1]
        # No Pauling value exists for He, Ne, Ar; use the Allen scale there
        # (mendeleev stores Allen in eV, 0.169 converts to Pauling units).
        if math.isnan(vals["electron_negativity"]):
            vals["electron_negativity"] = round(0.169 * el.en_allen, 3)
        # Helium only solidifies under pressure; tabulated value at 2.5 MPa.
        if vals["melting_point"] is None or math.isnan(vals["melting_point"]):
            vals["melting_point"] = 0.95
        cells = []
        for f in FEATURES:
            v = vals[f]
            if v is None or (isinstance(v, float) and math.isnan(v)):
                cells.append("")
            elif f in ("atomic_number", "mendeleev_number", "period"):
                cells.append(str(int(v)))
            else:
                cells.append(repr(float(v)))
        out.writerow([el.symbol] + cells)


if __name__ == "__main__":
    main()
