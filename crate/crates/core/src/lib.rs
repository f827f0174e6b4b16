//! Field solver, active crosstalk cancellation and spin-response simulator
//! for concentric dual-loop microwave transducers on a hexagonal site lattice.

pub mod cancellation;
pub mod experiments;
pub mod fit;
pub mod geometry;
pub mod magnetostatics;
pub mod rng;
pub mod spin;
pub mod table;

pub use geometry::{LoopSpec, Point3, Shape, Winding};
pub use magnetostatics::{FieldPhasor, Phasor};
