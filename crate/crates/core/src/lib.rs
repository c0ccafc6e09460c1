//! Correlated collective noise on N qubits: every qubit is rotated by the same
//! SU(2) element drawn from the heat kernel of the group after diffusion time
//! `t`.
//!
//! The core types are generic over [`scalar::Real`]; the aliases below fix
//! them to `f64`.
//!
//! ```
//! use su2drift::{DiffusionChannel, three_qubit::average_fidelity};
//!
//! let ch = DiffusionChannel::new(2, 0.5).unwrap();
//! let out = ch.apply_operator(&nalgebra::DMatrix::identity(4, 4)).unwrap();
//! assert!((out.trace().re - 4.0).abs() < 1e-12);
//! assert!((average_fidelity(0.0_f64) - 1.0).abs() < 1e-15);
//! ```

pub mod angular_momentum;
pub mod channel;
pub mod constants;
pub mod coupling;
pub mod error;
pub mod linalg;
pub mod optimize;
pub mod scalar;
pub mod stats;
pub mod su2_group;
pub mod sweep;
pub mod three_qubit;
pub mod verify;

pub use angular_momentum::HalfInteger;
pub use channel::ChoiMode;
pub use error::{Error, Result};
pub use scalar::Real;
pub use sweep::SweepQuantity;
pub use verify::{run_verify, VerifyOptions, VerifyReport};

pub type AngularMomentum = angular_momentum::AngularMomentum<f64>;
pub type DiffusionChannel = channel::DiffusionChannel<f64>;
pub type MonteCarloEstimate = channel::MonteCarloEstimate<f64>;
pub type CoupledBasis = coupling::CoupledBasis<f64>;
pub type ProjectorExpansion = coupling::ProjectorExpansion<f64>;
pub type TwirledState = coupling::TwirledState<f64>;
pub type CMat = linalg::CMat<f64>;
pub type CVec = linalg::CVec<f64>;
pub type DensityMatrix = linalg::DensityMatrix<f64>;
pub type OptimizerConfig = optimize::OptimizerConfig<f64>;
pub type HeatKernel = su2_group::HeatKernel<f64>;
pub type HeatKernelSampler = su2_group::HeatKernelSampler<f64>;
pub type QutritState = three_qubit::QutritState<f64>;
pub type QutritChannel = three_qubit::QutritChannel<f64>;
pub type BlochAffineMap = three_qubit::BlochAffineMap<f64>;
pub type Ensemble = three_qubit::Ensemble<f64>;
