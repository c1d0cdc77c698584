//! Seeded Monte Carlo sweep over an SNR grid.
//!
//! Every trial redraws user angles and gains, designs MMSE filters, and
//! scores the achievable sum-rate (from design-time SINR) plus the uncoded
//! BER of linear MMSE and OSIC detection. Sparse layouts (nested, coprime) go
//! through the virtual-array pipeline; ULA and custom layouts use the
//! physical model directly.
//!
//! Randomness is split per `(seed, trial, snr index, stream)` with a
//! splitmix64 chain, so results do not depend on worker count and two
//! configurations that differ only in geometry see the same users.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, generate_symbols, received_block, AnglePolicy, ChannelRealization, HALF_WAVELENGTH};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::geometry::{virtual_half_extent, GeometryKind, GeometrySpec, SensorLayout};
use crate::linalg::hermitian_floor;
use crate::metrics::{achievable_sum_rate, bit_error_rate};
use crate::receivers::{detect_linear, osic_detect, FilterBank, LinearModel};
use crate::scalar::{CMatrix, Real};
use crate::virtualization::{augmented_manifold, sample_covariance, synthesize_augmented_snapshots, virtualize, DedupMode};

/// Environment variable holding the worker count (default: logical cores).
pub const THREADS_ENV: &str = "COARRAY_MIMO_THREADS";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// Filters from the model covariance.
    #[default]
    Exact,
    /// Filters from the sample covariance of `T` physical snapshots, with
    /// eigenvalues floored at the noise power.
    Sample,
}

impl FromStr for CovarianceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(CovarianceMode::Exact),
            "sample" => Ok(CovarianceMode::Sample),
            other => Err(Error::config("covariance_mode", format!("expected exact or sample, got {other:?}"))),
        }
    }
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::Exact => "exact",
            CovarianceMode::Sample => "sample",
        })
    }
}

fn default_d_over_lambda() -> f64 {
    HALF_WAVELENGTH
}

/// One array, one SNR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub geometry: GeometrySpec,
    pub users: usize,
    /// Snapshots per trial.
    pub snapshots: usize,
    pub trials: usize,
    pub snr_grid_db: Vec<f64>,
    #[serde(default)]
    pub constellation: Constellation,
    /// Per-user symbol powers; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
    #[serde(default)]
    pub angle_policy: AnglePolicy,
    #[serde(default)]
    pub dedup_mode: DedupMode,
    #[serde(default)]
    pub covariance_mode: CovarianceMode,
    pub seed: u64,
    #[serde(default = "default_d_over_lambda")]
    pub d_over_lambda: f64,
}

impl SimConfig {
    pub fn new(geometry: GeometrySpec, users: usize, snr_grid_db: Vec<f64>, seed: u64) -> Self {
        SimConfig {
            geometry,
            users,
            snapshots: 100,
            trials: 1000,
            snr_grid_db,
            constellation: Constellation::Qpsk,
            powers: None,
            angle_policy: AnglePolicy::default(),
            dedup_mode: DedupMode::default(),
            covariance_mode: CovarianceMode::default(),
            seed,
            d_over_lambda: HALF_WAVELENGTH,
        }
    }

    pub fn symbol_powers(&self) -> Vec<f64> {
        self.powers.clone().unwrap_or_else(|| vec![1.0; self.users])
    }

    /// Field-level checks; returns the built layout and, for sparse
    /// layouts, the virtual half extent `J`.
    pub fn validate(&self) -> Result<(SensorLayout, Option<usize>)> {
        let layout = self
            .geometry
            .0
            .build()
            .map_err(|e| Error::config("geometry", e.to_string()))?;
        if self.users == 0 {
            return Err(Error::config("users", "must be >= 1"));
        }
        if self.snapshots == 0 {
            return Err(Error::config("snapshots", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::config("snr_grid_db", "must not be empty"));
        }
        if let Some(x) = self.snr_grid_db.iter().find(|x| !x.is_finite()) {
            return Err(Error::config("snr_grid_db", format!("non-finite value {x}")));
        }
        if let Some(p) = &self.powers {
            if p.len() != self.users {
                return Err(Error::config("powers", format!("expected {} entries, found {}", self.users, p.len())));
            }
            if p.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::config("powers", "entries must be positive and finite"));
            }
        }
        if !(self.d_over_lambda > 0.0) || !self.d_over_lambda.is_finite() {
            return Err(Error::config("d_over_lambda", "must be positive and finite"));
        }
        match &self.angle_policy {
            AnglePolicy::Uniform { min_separation_deg } => {
                if !(*min_separation_deg >= 0.0) {
                    return Err(Error::config("angle_policy.min_separation_deg", "must be >= 0"));
                }
                if *min_separation_deg * (self.users.saturating_sub(1)) as f64 >= 180.0 {
                    return Err(Error::config(
                        "angle_policy.min_separation_deg",
                        format!("{} users cannot be {min_separation_deg} deg apart inside 180 deg", self.users),
                    ));
                }
            }
            AnglePolicy::Fixed { angles_deg } => {
                if angles_deg.len() != self.users {
                    return Err(Error::config(
                        "angle_policy.angles_deg",
                        format!("expected {} angles, found {}", self.users, angles_deg.len()),
                    ));
                }
                if angles_deg.iter().any(|a| !(a.abs() <= 90.0)) {
                    return Err(Error::config("angle_policy.angles_deg", "angles must lie in [-90, 90]"));
                }
            }
        }
        let j = match layout.kind() {
            GeometryKind::Tlna | GeometryKind::Cpa => {
                Some(virtual_half_extent(&layout).map_err(|e| Error::config("geometry", e.to_string()))?)
            }
            GeometryKind::Ula | GeometryKind::Custom => None,
        };
        let bound = j.unwrap_or(layout.len());
        if self.users > bound {
            return Err(Error::config(
                "users",
                format!("{} users exceed the resolvable bound {bound} of {}", self.users, self.geometry),
            ));
        }
        if j.is_some() && self.users > layout.len() {
            log::warn!(
                "{} users exceed the {} physical sensors of {}; relying on the virtual array",
                self.users,
                layout.len(),
                self.geometry
            );
        }
        Ok((layout, j))
    }
}

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Angles and gains; shared by every SNR point and every geometry.
    Channel = 1,
    /// Physical symbols and noise.
    Physical = 2,
    /// Augmented symbols and virtual noise.
    Augmented = 3,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ trial) ^ snr) ^ stream)`.
pub fn derive_seed(seed: u64, trial: usize, snr_index: usize, stream: Stream) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ trial as u64);
    h = splitmix64(h ^ snr_index as u64);
    splitmix64(h ^ stream as u64)
}

pub fn stream_rng(seed: u64, trial: usize, snr_index: usize, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, trial, snr_index, stream))
}

/// Noise power for unit symbol power at `snr_db`.
pub fn noise_power_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Metrics of one trial at one SNR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub asr: f64,
    pub ber_mmse: f64,
    pub ber_osic: f64,
}

struct Prepared {
    config: SimConfig,
    layout: SensorLayout,
    half_extent: Option<usize>,
    powers: Vec<f64>,
}

fn channel_for_trial<T: Real>(p: &Prepared, trial: usize) -> Result<ChannelRealization<T>> {
    let mut rng = stream_rng(p.config.seed, trial, 0, Stream::Channel);
    draw_channel(&mut rng, &p.layout, p.config.users, &p.config.angle_policy, T::of(p.config.d_over_lambda))
}

fn virtual_point<T: Real>(
    p: &Prepared,
    channel: &ChannelRealization<T>,
    j: usize,
    trial: usize,
    snr_index: usize,
) -> Result<TrialMetrics> {
    let cfg = &p.config;
    let noise = T::of(noise_power_for_snr(cfg.snr_grid_db[snr_index]));
    let powers: Vec<T> = p.powers.iter().map(|&x| T::of(x)).collect();
    let manifold = augmented_manifold(channel, j)?;
    let omega = manifold.virtual_source_powers(&powers)?;
    let model = LinearModel::augmented(&manifold, omega.clone(), noise)?;

    let r_hat: Option<CMatrix<T>> = match cfg.covariance_mode {
        CovarianceMode::Exact => None,
        CovarianceMode::Sample => {
            let mut rng = stream_rng(cfg.seed, trial, snr_index, Stream::Physical);
            let s = generate_symbols(&mut rng, cfg.users, cfg.snapshots, cfg.constellation, &powers)?;
            let block = received_block(channel, &s.symbols, noise, &mut rng)?;
            let smoothed = virtualize(&sample_covariance(&block.x)?, &p.layout, j, cfg.dedup_mode)?;
            // R̄ = R_a/√J, so √J·R̄ estimates the virtual covariance
            let r = smoothed.r_bar * crate::scalar::real(T::of_usize(j).sqrt());
            Some(hermitian_floor(&r, noise))
        }
    };
    let bank = match &r_hat {
        None => FilterBank::design(&model)?,
        Some(r) => FilterBank::design_from_covariance(&model, r)?,
    };
    let asr = achievable_sum_rate(&bank, &model)?;

    let mut rng = stream_rng(cfg.seed, trial, snr_index, Stream::Augmented);
    let s_a = generate_symbols(&mut rng, cfg.users, cfg.snapshots, cfg.constellation, &omega)?;
    let x_a = synthesize_augmented_snapshots(&manifold, &s_a.symbols, noise, &mut rng)?;
    score(&x_a, &model, &bank, r_hat.as_ref(), &s_a.indices, cfg.constellation, asr)
}

fn physical_point<T: Real>(
    p: &Prepared,
    channel: &ChannelRealization<T>,
    trial: usize,
    snr_index: usize,
) -> Result<TrialMetrics> {
    let cfg = &p.config;
    let noise = T::of(noise_power_for_snr(cfg.snr_grid_db[snr_index]));
    let powers: Vec<T> = p.powers.iter().map(|&x| T::of(x)).collect();
    let model = LinearModel::physical(channel, powers.clone(), noise)?;
    let mut rng = stream_rng(cfg.seed, trial, snr_index, Stream::Physical);
    let s = generate_symbols(&mut rng, cfg.users, cfg.snapshots, cfg.constellation, &powers)?;
    let block = received_block(channel, &s.symbols, noise, &mut rng)?;
    let r_hat = match cfg.covariance_mode {
        CovarianceMode::Exact => None,
        CovarianceMode::Sample => Some(hermitian_floor(&sample_covariance(&block.x)?, noise)),
    };
    let bank = match &r_hat {
        None => FilterBank::design(&model)?,
        Some(r) => FilterBank::design_from_covariance(&model, r)?,
    };
    let asr = achievable_sum_rate(&bank, &model)?;
    score(&block.x, &model, &bank, r_hat.as_ref(), &s.indices, cfg.constellation, asr)
}

fn score<T: Real>(
    x: &CMatrix<T>,
    model: &LinearModel<T>,
    bank: &FilterBank<T>,
    r_hat: Option<&CMatrix<T>>,
    truth: &DMatrix<usize>,
    constellation: Constellation,
    asr: T,
) -> Result<TrialMetrics> {
    let lin = detect_linear(x, model, bank, constellation)?;
    let osic = osic_detect(x, model, constellation, r_hat)?;
    Ok(TrialMetrics {
        asr: asr.as_f64(),
        ber_mmse: bit_error_rate(&lin, truth)?,
        ber_osic: bit_error_rate(&osic, truth)?,
    })
}

fn run_trial<T: Real>(p: &Prepared, trial: usize) -> Result<Vec<TrialMetrics>> {
    let channel = channel_for_trial::<T>(p, trial)?;
    (0..p.config.snr_grid_db.len())
        .map(|i| match p.half_extent {
            Some(j) => virtual_point(p, &channel, j, trial, i),
            None => physical_point(p, &channel, trial, i),
        })
        .collect()
}

/// Per-trial values of one SNR point, in trial order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialSamples {
    pub asr: Vec<f64>,
    pub ber_mmse: Vec<f64>,
    pub ber_osic: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub asr_mean: f64,
    pub asr_se: f64,
    pub ber_mmse_mean: f64,
    pub ber_mmse_se: f64,
    pub ber_osic_mean: f64,
    pub ber_osic_se: f64,
    pub trials: usize,
    pub samples: TrialSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SimConfig,
    pub seed: u64,
    pub version: String,
    /// Virtual half extent `J`, absent for physical layouts.
    pub half_extent: Option<usize>,
    pub points: Vec<SweepPoint>,
}

/// Mean and standard error `s/√n` (0 for a single sample).
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean and standard error of `a[i] - b[i]`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::dims("paired samples", a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(mean_and_se(&d))
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0)
}

/// Runs the sweep with the worker count from [`THREADS_ENV`].
pub fn run_sweep<T: Real>(config: &SimConfig) -> Result<SweepResult> {
    run_sweep_with_threads::<T>(config, worker_count())
}

/// Runs the sweep on a dedicated pool of `threads` workers (`None`: one per
/// logical core).
pub fn run_sweep_with_threads<T: Real>(config: &SimConfig, threads: Option<usize>) -> Result<SweepResult> {
    let (layout, half_extent) = config.validate()?;
    let prepared = Prepared {
        powers: config.symbol_powers(),
        config: config.clone(),
        layout,
        half_extent,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    log::info!(
        "sweep {}: {} trials x {} SNR points on {} workers",
        config.geometry,
        config.trials,
        config.snr_grid_db.len(),
        pool.current_num_threads()
    );
    let per_trial: Vec<Result<Vec<TrialMetrics>>> =
        pool.install(|| (0..config.trials).into_par_iter().map(|t| run_trial::<T>(&prepared, t)).collect());

    let n_snr = config.snr_grid_db.len();
    let mut samples = vec![TrialSamples::default(); n_snr];
    for trial in per_trial {
        for (i, m) in trial?.into_iter().enumerate() {
            samples[i].asr.push(m.asr);
            samples[i].ber_mmse.push(m.ber_mmse);
            samples[i].ber_osic.push(m.ber_osic);
        }
    }
    let points = samples
        .into_iter()
        .zip(&config.snr_grid_db)
        .map(|(s, &snr_db)| {
            let (asr_mean, asr_se) = mean_and_se(&s.asr);
            let (ber_mmse_mean, ber_mmse_se) = mean_and_se(&s.ber_mmse);
            let (ber_osic_mean, ber_osic_se) = mean_and_se(&s.ber_osic);
            SweepPoint {
                snr_db,
                asr_mean,
                asr_se,
                ber_mmse_mean,
                ber_mmse_se,
                ber_osic_mean,
                ber_osic_se,
                trials: s.asr.len(),
                samples: s,
            }
        })
        .collect();
    Ok(SweepResult {
        config: config.clone(),
        seed: config.seed,
        version: VERSION.to_string(),
        half_extent,
        points,
    })
}

pub const CSV_HEADER: &str = "snr_db,asr_mean,asr_se,ber_mmse_mean,ber_mmse_se,ber_osic_mean,ber_osic_se,trials";

impl SweepResult {
    pub fn label(&self) -> String {
        self.config.geometry.to_string()
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.snr_db).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.snr_db, p.asr_mean, p.asr_se, p.ber_mmse_mean, p.ber_mmse_se, p.ber_osic_mean, p.ber_osic_se, p.trials
            );
        }
        out
    }

    /// Whitespace-delimited columns for gnuplot, header commented out.
    pub fn to_gnuplot(&self) -> String {
        let mut out = format!("# {}\n# {}\n", self.label(), CSV_HEADER.replace(',', " "));
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.3} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {:.9e} {}",
                p.snr_db, p.asr_mean, p.asr_se, p.ber_mmse_mean, p.ber_mmse_se, p.ber_osic_mean, p.ber_osic_se, p.trials
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InternalConsistency(format!("JSON encoding failed: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config("result", e.to_string()))
    }
}
