//! Bohmian trajectories for two entangled photons in 1+1 dimensions.

pub mod io;
pub mod kg;
pub mod lorentz;
pub mod metric;
pub mod ode;
pub mod parallel;
pub mod paraxial;
pub mod quadrature;
pub mod stats;
pub mod trajectories;
pub mod verification;
pub mod wavepacket;
pub mod weak_value;

pub use kg::{CurrentDensity, MultiPoint, NodeSingularity, TwoPhotonConfig, VelocityField};
pub use lorentz::Boost;
pub use wavepacket::{Direction, Event, Packet};
