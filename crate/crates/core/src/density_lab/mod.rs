//! Grid-approximated measurable sets, broken lines, distortion of monotone
//! iterates and empirical probes of the distortion and density lemmas.

pub mod broken_line;
pub mod distortion;
pub mod grid;
pub mod probes;

pub use grid::{invariant_hull, GridRle, GridSet};
pub use broken_line::{d_verdict, is_d_broken_line, make_proper, BrokenLine, DVerdict, LinkReading};
pub use distortion::distortion;
