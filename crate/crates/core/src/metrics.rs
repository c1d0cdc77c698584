//! Output SINR, achievable sum-rate, bit error rate and the filter-design
//! cost model.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::receivers::{DetectionResult, FilterBank, LinearModel};
use crate::scalar::{CVector, Real};

/// `σ_k²|w_kᴴb_k|² / (Σ_{i≠k} σ_i²|w_kᴴb_i|² + σ_n²‖w_k‖²)`.
pub fn sinr<T: Real>(w: &CVector<T>, model: &LinearModel<T>, k: usize) -> Result<T> {
    if k >= model.users() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: model.users(),
        });
    }
    if w.len() != model.dim() {
        return Err(Error::dims("filter length", model.dim(), w.len()));
    }
    let mut signal = T::zero();
    let mut interference = T::zero();
    for i in 0..model.users() {
        let g = w.dotc(&model.channel.column(i)).norm_sqr() * model.powers[i];
        if i == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    let denom = interference + model.noise_power * w.norm_squared();
    if denom > T::zero() {
        Ok(signal / denom)
    } else if signal == T::zero() {
        Err(Error::InvalidFilter)
    } else {
        Ok(T::max_value().unwrap_or_else(T::one))
    }
}

/// `Σ_k log₂(1 + SINR_k)` in bits/s/Hz.
pub fn achievable_sum_rate<T: Real>(bank: &FilterBank<T>, model: &LinearModel<T>) -> Result<T> {
    if bank.users() != model.users() {
        return Err(Error::dims("filter bank users", model.users(), bank.users()));
    }
    let mut total = T::zero();
    for k in 0..model.users() {
        total += (T::one() + sinr(&bank.filter(k), model, k)?).log2();
    }
    Ok(total)
}

/// Fraction of Gray-labelled bits in error.
pub fn bit_error_rate<T: Real>(result: &DetectionResult<T>, truth: &DMatrix<usize>) -> Result<f64> {
    if result.hard.shape() != truth.shape() {
        return Err(Error::dims(
            "detected vs transmitted symbols",
            format!("{:?}", truth.shape()),
            format!("{:?}", result.hard.shape()),
        ));
    }
    let c = result.constellation;
    let total = truth.len() * c.bits_per_symbol();
    if total == 0 {
        return Ok(0.0);
    }
    let errors: u32 = result
        .hard
        .iter()
        .zip(truth.iter())
        .map(|(&h, &t)| (c.gray_label(h) ^ c.gray_label(t)).count_ones())
        .sum();
    Ok(errors as f64 / total as f64)
}

/// Dominant-term operation count of one user's MMSE design plus a timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub half_extent: usize,
    /// `J³`.
    pub j_cubed: u64,
    /// Real flops per complex multiply-add (4 mul + 4 add) times the
    /// Cholesky count `J³/3`, i.e. `c = 8/3`.
    pub coefficient: f64,
    pub predicted_flops: f64,
    /// Mean wall time of one `mmse_filter` call, when measured.
    pub seconds_per_design: Option<f64>,
}

pub const CHOLESKY_FLOP_COEFFICIENT: f64 = 8.0 / 3.0;

pub fn complexity_report(half_extent: usize) -> Result<ComplexityReport> {
    if half_extent == 0 {
        return Err(Error::InvalidParameter("J must be >= 1".into()));
    }
    let j_cubed = (half_extent as u64).pow(3);
    Ok(ComplexityReport {
        half_extent,
        j_cubed,
        coefficient: CHOLESKY_FLOP_COEFFICIENT,
        predicted_flops: CHOLESKY_FLOP_COEFFICIENT * j_cubed as f64,
        seconds_per_design: None,
    })
}

/// Times `FilterBank::design` on `model` and returns seconds per filter
/// (median of `repeats` batches).
pub fn time_filter_design<T: Real>(model: &LinearModel<T>, repeats: usize, batch: usize) -> Result<f64> {
    let mut samples = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        for _ in 0..batch.max(1) {
            let bank = FilterBank::design(model)?;
            std::hint::black_box(&bank);
        }
        samples.push(start.elapsed().as_secs_f64() / (batch.max(1) * model.users().max(1)) as f64);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[samples.len() / 2])
}

pub fn complexity_report_timed<T: Real>(model: &LinearModel<T>, repeats: usize, batch: usize) -> Result<ComplexityReport> {
    let mut report = complexity_report(model.dim())?;
    report.seconds_per_design = Some(time_filter_design(model, repeats, batch)?);
    Ok(report)
}
