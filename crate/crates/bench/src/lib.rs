//! Shared fixtures for the criterion benchmarks.

use heatcone_core::{Potential, SourcePoint};

/// Square well `v0 = 2, r = 1` on the line.
pub fn standard_well() -> Potential {
    Potential::square_well(1, 2.0, 1.0).expect("valid well")
}

pub fn origin() -> SourcePoint {
    SourcePoint::origin(1)
}
