//! Forward thermal model of the strand.

mod caster;
pub mod front;
pub mod patch;
pub mod setup;

pub use caster::{write_field_csv, write_front_csv, Caster, MachineAudit, SolverState};
pub use front::{FrontResult, FrontSample, PhaseFront, StefanResidual};
pub use patch::{Advection, Boundaries, Exchange, Metric, NodeBc, Patch, PatchGeometry, RadiationLaw, StepReport, TimeStep};
pub use setup::{AlphaPair, BoundaryEnvironment, CasterSetup, CoolingSpec, FaceAlphas, Schedule, SectionEnvironment, WaterChannel};
