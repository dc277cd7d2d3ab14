//! Variance and central limit behaviour of sums of a spatial linear process
//! `Z(i) = sum_j alpha(i - j) eps(j)` over the lattice sites of an inflated
//! region `lambda R0`.
//!
//! The centred sum is `sum_i theta_n(i) eps(i)` with
//! `theta_n(i) = sum_{j in D_n} alpha(j - i)`, so its variance is
//! `sum_i theta_n(i)^2`.  The crate evaluates `theta_n` exactly (directly
//! or by FFT), classifies coefficient models by dependence regime, computes
//! the limiting variances and simulates the sums.

pub mod coefficients;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod limits;
pub mod montecarlo;
pub mod quadrature;
pub mod spec;
pub mod special;
pub mod theta;

pub use coefficients::{
    Amplitude, CoefficientModel, DependenceClass, GammaValue, ModelKind, Regime, SeparableSequence,
    TotalSum, ZeroSum,
};
pub use error::{Error, Result};
pub use geometry::{
    BoundaryClassification, Estimate, InflatedRegion, PrototypeKind, RegionPrototype, ShellRule,
    SiteClass, SiteSet,
};
pub use lattice::IntBox;
pub use limits::{LimitFunction, LimitMethod, LimitVariance};
pub use montecarlo::{
    CltReport, ExperimentReport, GrowthFit, Histogram, Innovation, ScanOptions, ScanPoint, ScanRow,
    SumSampler,
};
pub use spec::{ModelSpec, RegionSpec};
pub use theta::{SigmaSq, ThetaField, VarianceDecomposition};

/// Version string embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
