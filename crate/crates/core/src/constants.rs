//! Tolerances and size caps shared across modules.

/// Eigenvalues in `[-EIGEN_CLAMP, 0)` are clamped to zero before entropies;
/// Choi eigenvalues below it are dropped during Kraus extraction.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// Allowed negativity of density-matrix eigenvalues on input validation.
pub const DENSITY_PSD_TOL: f64 = 1e-10;

/// Allowed trace error and Hermiticity defect on input validation.
pub const DENSITY_TRACE_TOL: f64 = 1e-10;

/// Blocks with weight below this carry a zero multiplicity state.
pub const BLOCK_WEIGHT_FLOOR: f64 = 1e-14;

/// Smallest diffusion time supported by the truncated character sum.
pub const KERNEL_T_MIN: f64 = 1e-3;

/// Default truncation tolerance of the heat-kernel character sum.
pub const KERNEL_TRUNCATION_TOL: f64 = 1e-12;

/// Number of intervals in the inverse-CDF sampling grid.
pub const SAMPLER_GRID_INTERVALS: usize = 4096;

/// Largest `2j` accepted by `wigner_d` by default.
pub const WIGNER_D_TWICE_J_CAP: i32 = 16;

/// Qubit-count caps.
pub const PATH_N_CAP: usize = 16;
pub const BASIS_N_CAP: usize = 10;
pub const DENSE_CHANNEL_N_CAP: usize = 8;
pub const CHOI_FULL_N_CAP: usize = 5;

/// Floor below which a coherent-information maximum counts as zero.
pub const COHERENT_INFO_FLOOR: f64 = 1e-9;

/// Default optimizer settings.
pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_OPT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 20_000;
pub const DEFAULT_SEED: u64 = 20_070_611;

/// Hermiticity, trace and positivity tolerance of qutrit states.
pub const QUTRIT_STATE_TOL: f64 = 1e-12;
