//! Simulation core for nonlinear magneto-optical rotation in thin alkali
//! vapor cells: spin algebra, wall-filtered kinetics, optical Bloch
//! evolution, Ramsey-type lineshapes, transport Monte Carlo, and lineshape
//! fitting.

pub mod constants;
pub mod domain;
pub mod error;
pub mod fit;
pub mod kinetics;
pub mod lineshape;
pub mod montecarlo;
pub mod numerics;
pub mod obe;
pub mod spin;

pub use domain::{
    derive_thermal, gyromagnetic_ratio, larmor, signed_larmor, AtomSpecies, CellGeometry,
    FieldConfig, ThermalEnsemble,
};
pub use error::{CoreError, Result};
pub use fit::{fit_rotation_curve, separable_linear_solve, FitProblem, FitResult};
pub use kinetics::FluxReport;
pub use lineshape::{LinewidthReport, Spectrum, SpectrumMeta, Strategy};
pub use montecarlo::{McConfig, McResult};
pub use obe::{DensityMatrix, HamiltonianParts, PulseSequence, RotationResult, SequenceResult};
pub use spin::{GroundStateMoments, SpinMatrices};
