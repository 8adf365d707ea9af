//! Construction and numerical certification of martingale families built
//! from Levy characteristics.
//!
//! Given a triplet `(beta, sigma^2, nu)` the crate manufactures function
//! systems in `L^2(sigma^2 delta_0 + nu)` (power monomials, Hermite- and
//! Haar-weighted densities, indicator partitions), simulates the associated
//! martingales pathwise, evaluates iterated stochastic integrals against
//! them, and checks the structural identities these families satisfy:
//! isometry and orthogonality of the iterated integrals, stability under
//! compensated covariation, the product representation of monomials, the
//! permutation identity relating multiple and iterated integrals, and the
//! convergence of chaos projections.
//!
//! Every Monte Carlo routine is deterministic given a master seed; exact
//! event-driven arithmetic is used wherever the model is pure-jump, with an
//! independent oracle (`oracle`) backing the tests.

pub mod chaos;
pub mod config;
pub mod error;
pub mod family;
pub mod iterated;
pub mod measure;
pub mod oracle;
pub mod path;
pub mod piecewise;
pub mod stats;
pub mod stepfn;
pub mod suite;
pub mod systems;

pub use chaos::{
    chaos_coefficients, crp_convergence_study, multiple_vs_iterated_disjoint,
    multiple_vs_iterated_meansquare, product_formula_check, ChaosBasis, ChaosBasisElement,
    CoefficientRow, CrpRow, PathSample, ProjectionReport, ResidualRow,
};
pub use config::{BasisKind, DensityKind, ExperimentConfig, NuSpec, SuiteSelection};
pub use error::{Error, Result};
pub use family::MartingaleFamily;
pub use iterated::{
    charlier_style_reference, hermite_reference, isometry_check, isometry_reference, iterate,
    iterate_on_path, simplex_integral, McOptions, MomentCheck,
};
pub use measure::{
    gram_schmidt, mu_inner, mu_integral, mu_integral_with_err, mu_norm2, Atom, IntegrabilityFlags,
    JumpMeasure, LevyTriplet, MuMeasure, OrthonormalSystem, QuadratureSpec, TestFunction, DROP_TOL,
    GRAM_RESIDUAL_TOL,
};
pub use path::{
    compensated_covariation, compensated_poisson_affine, martingale_path, martingale_path_on,
    path_seed, predictable_covariation, quadratic_covariation, simulate_levy, AffineIntensity,
    CadlagSeries, LevyPath, PathGenerator, Timeline,
};
pub use stepfn::{ElementaryTensor, IteratedSpec, StepFunction};
pub use suite::{run_suite, CheckRecord, VerificationReport};
pub use systems::{
    haar_system, haar_wavelet, hermite_normalized, hermite_weighted_system, indicator_system,
    teugels_system, teugels_system_with, IndicatorSystem, Interval, TailParams,
};
