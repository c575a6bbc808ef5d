//! Monte Carlo laboratory: data-generating processes, design files and the
//! rejection-rate harness.

pub mod design;
pub mod dgp;
pub mod mc;

pub use design::{parse_design, CSpec, ErrorSpec, McDesign, TestSpec, DESK_PRESET, FULL_GRID};
pub use dgp::{generate, generate_with_innovations, volatility_path, DgpSpec, GammaMode, VolatilitySpec};
pub use mc::{cells, run_cell, run_mc, simulate_cell, McCell, McOptions, McReport, McRow};
