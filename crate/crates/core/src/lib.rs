//! Car-following platoon dynamics with reaction delays and delayed
//! acceleration feedback: model right-hand sides, a delay-equation
//! integrator, linear stability analysis and bifurcation sweeps.

pub mod analysis;
pub mod dde;
pub mod model;
pub mod sweep;
