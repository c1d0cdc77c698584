//! Multiuser uplink reception with nested and coprime sparse arrays.
//!
//! The pipeline turns the covariance of a sparse physical array into an
//! augmented virtual uniform array (difference co-array, lag de-duplication,
//! spatial smoothing), then runs MMSE and ordered-SIC receivers on that
//! virtual array and scores them by achievable sum-rate and bit error rate
//! against a plain ULA.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! bottom of this file fix the common `f64` instantiations.

pub mod channel;
pub mod compare;
pub mod config;
pub mod constellation;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod receivers;
pub mod scalar;
pub mod sim;
pub mod virtualization;

pub use channel::{
    draw_channel, draw_users, generate_symbols, received_block, steering_vector, AnglePolicy, ChannelRealization,
    SnapshotBlock, SymbolBlock, UserDraw,
};
pub use compare::{compare_pair, Metric, PairedComparison};
pub use config::{ExperimentConfig, SnrRange};
pub use constellation::Constellation;
pub use error::{Error, Result};
pub use geometry::{
    build_cpa, build_tlna, build_ula, difference_coarray, virtual_half_extent, CoarrayProfile, GeometryKind,
    GeometryParams, GeometryReport, GeometrySpec, SensorLayout,
};
pub use metrics::{achievable_sum_rate, bit_error_rate, complexity_report, sinr, ComplexityReport};
pub use receivers::{
    detect_linear, interference_plus_noise_cov, mmse_filter, osic_detect, DetectionResult, FilterBank, LinearModel,
};
pub use scalar::{CMatrix, CVector, Cx, Real};
pub use sim::{run_sweep, run_sweep_with_threads, CovarianceMode, SimConfig, SweepPoint, SweepResult};
pub use virtualization::{
    augmented_manifold, augmented_steering, deduplicate_and_sort, exact_covariance, sample_covariance,
    spatial_smoothing, synthesize_augmented_snapshots, vectorize_covariance, AugmentedManifold, DedupMode,
    LagSelectionMap, SmoothedCovariance, VirtualSnapshot,
};

pub type C64 = Cx<f64>;
pub type C32 = Cx<f32>;
pub type CMatrix64 = CMatrix<f64>;
pub type CVector64 = CVector<f64>;
pub type Channel64 = ChannelRealization<f64>;
pub type Channel32 = ChannelRealization<f32>;
pub type Manifold64 = AugmentedManifold<f64>;
pub type Manifold32 = AugmentedManifold<f32>;
pub type Smoothed64 = SmoothedCovariance<f64>;
pub type Smoothed32 = SmoothedCovariance<f32>;
pub type Model64 = LinearModel<f64>;
pub type Model32 = LinearModel<f32>;
pub type Detection64 = DetectionResult<f64>;
pub type Bank64 = FilterBank<f64>;
