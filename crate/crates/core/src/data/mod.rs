//! Element feature tables, chemical formulas and compound datasets.

mod compounds;
mod elements;
mod formula;

pub use compounds::{CompoundDataset, CompoundRecord};
pub use elements::{
    Element, ElementTable, LoadOptions, MissingPolicy, Standardization, VarianceConvention,
};
pub use formula::{parse_formula, Composition};
