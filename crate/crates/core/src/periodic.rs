//! Static reference data for the standard periodic table.

pub const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Atomic number for a symbol, case-sensitive.
pub fn atomic_number(symbol: &str) -> Option<u32> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .map(|i| i as u32 + 1)
}

pub fn symbol(atomic_number: u32) -> Option<&'static str> {
    SYMBOLS.get((atomic_number as usize).checked_sub(1)?).copied()
}

pub fn period(atomic_number: u32) -> Option<u32> {
    const ENDS: [u32; 7] = [2, 10, 18, 36, 54, 86, 118];
    if atomic_number == 0 {
        return None;
    }
    ENDS.iter()
        .position(|&end| atomic_number <= end)
        .map(|p| p as u32 + 1)
}

/// IUPAC group 1–18. Lanthanides and actinides (other than La/Ac) have no group.
pub fn group(atomic_number: u32) -> Option<u32> {
    let z = atomic_number;
    let g = match z {
        1 => 1,
        2 => 18,
        3 | 4 => z - 2,
        5..=10 => z + 8,
        11 | 12 => z - 10,
        13..=18 => z,
        19..=36 => z - 18,
        37..=54 => z - 36,
        55 | 56 => z - 54,
        57 => 3,
        58..=71 => return None,
        72..=86 => z - 68,
        87 | 88 => z - 86,
        89 => 3,
        90..=103 => return None,
        104..=118 => z - 100,
        _ => return None,
    };
    Some(g)
}
