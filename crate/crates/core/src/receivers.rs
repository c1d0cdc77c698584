//! Linear MMSE and norm-ordered SIC receivers.
//!
//! Both operate on a [`LinearModel`] `x(t) = c·(B s(t) + z(t))`: the
//! augmented virtual array uses `B = B1`, `c = J^{-1/4}` and the virtual
//! source powers; a physical array uses `B = H`, `c = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::linalg::HpdFactor;
use crate::scalar::{real, CMatrix, CVector, Cx, Real};
use crate::virtualization::AugmentedManifold;

/// Effective linear observation model seen by a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Real> {
    /// Columns `b_k`.
    pub channel: CMatrix<T>,
    /// Symbol powers `σ_k²` in this domain.
    pub powers: Vec<T>,
    pub noise_power: T,
    /// Common amplitude factor `c` applied to signal and noise.
    pub gain: T,
}

impl<T: Real> LinearModel<T> {
    pub fn new(channel: CMatrix<T>, powers: Vec<T>, noise_power: T, gain: T) -> Result<Self> {
        if powers.len() != channel.ncols() {
            return Err(Error::dims("model powers", channel.ncols(), powers.len()));
        }
        if noise_power < T::zero() || !(gain > T::zero()) {
            return Err(Error::InvalidParameter("noise power must be >= 0 and gain > 0".into()));
        }
        Ok(LinearModel {
            channel,
            powers,
            noise_power,
            gain,
        })
    }

    /// Augmented virtual-ULA model with virtual source powers `omega`.
    pub fn augmented(manifold: &AugmentedManifold<T>, omega: Vec<T>, noise_power: T) -> Result<Self> {
        let j = T::of_usize(manifold.half_extent());
        Self::new(manifold.b1.clone(), omega, noise_power, j.powf(T::of(-0.25)))
    }

    /// Physical array model `x = H s + z`.
    pub fn physical(channel: &ChannelRealization<T>, powers: Vec<T>, noise_power: T) -> Result<Self> {
        Self::new(channel.h.clone(), powers, noise_power, T::one())
    }

    pub fn users(&self) -> usize {
        self.channel.ncols()
    }

    pub fn dim(&self) -> usize {
        self.channel.nrows()
    }

    fn check_user(&self, k: usize) -> Result<()> {
        if k < self.users() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: k,
                len: self.users(),
            })
        }
    }

    /// `Σ_{i ∈ users} σ_i² b_i b_iᴴ + σ_n² I`.
    fn partial_covariance(&self, users: impl Iterator<Item = usize>) -> CMatrix<T> {
        let n = self.dim();
        let mut r = DMatrix::identity(n, n).scale(self.noise_power);
        for i in users {
            let b = self.channel.column(i);
            r += (b * b.adjoint()).scale(self.powers[i]);
        }
        r
    }

    /// Full covariance `B diag(σ²) Bᴴ + σ_n² I` (without the `c²` factor).
    pub fn covariance(&self) -> CMatrix<T> {
        self.partial_covariance(0..self.users())
    }
}

/// `R_{i+n} = Σ_{i≠k} σ_i² b_i b_iᴴ + σ_n² I`.
pub fn interference_plus_noise_cov<T: Real>(model: &LinearModel<T>, k: usize) -> Result<CMatrix<T>> {
    model.check_user(k)?;
    Ok(model.partial_covariance((0..model.users()).filter(|&i| i != k)))
}

/// `w_k = c^{-1} σ_k² (R_{i+n} + σ_k² b_k b_kᴴ)^{-1} b_k`.
///
/// With `c = J^{-1/4}` this is `J^{1/4} σ_k² (…)^{-1} b_k`.
pub fn mmse_filter<T: Real>(model: &LinearModel<T>, k: usize) -> Result<CVector<T>> {
    let mut r = interference_plus_noise_cov(model, k)?;
    let b = model.channel.column(k).into_owned();
    r += (&b * b.adjoint()).scale(model.powers[k]);
    filter_from_covariance(&r, &b, model.powers[k], model.gain)
}

/// `w = c^{-1} σ² R^{-1} b` for a given (model or estimated) covariance `R`.
pub fn filter_from_covariance<T: Real>(r: &CMatrix<T>, b: &CVector<T>, power: T, gain: T) -> Result<CVector<T>> {
    let x = HpdFactor::new(r)?.solve(b);
    Ok(x * real(power / gain))
}

/// Relative residual of the zero-gradient condition of the MSE,
/// `c² σ_k² (b bᴴ)ᵀ w* − c σ_k² b* + c² R_{i+n}ᵀ w* = 0`, normalised by
/// `‖c σ_k² b*‖`.
pub fn stationarity_residual<T: Real>(model: &LinearModel<T>, k: usize, w: &CVector<T>) -> Result<T> {
    let rin = interference_plus_noise_cov(model, k)?;
    let b = model.channel.column(k).into_owned();
    let c = model.gain;
    let p = model.powers[k];
    let wc = w.conjugate();
    let bbt = (&b * b.adjoint()).transpose();
    let lhs = (bbt * &wc).scale(c * c * p) - b.conjugate().scale(c * p) + (rin.transpose() * &wc).scale(c * c);
    let norm = b.norm() * c * p;
    Ok(if norm > T::zero() { lhs.norm() / norm } else { lhs.norm() })
}

/// Filters `W = [w_1 … w_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T: Real> {
    pub w: CMatrix<T>,
}

impl<T: Real> FilterBank<T> {
    /// One MMSE filter per user, each from its own solve.
    pub fn design(model: &LinearModel<T>) -> Result<Self> {
        let mut w = DMatrix::zeros(model.dim(), model.users());
        for k in 0..model.users() {
            w.set_column(k, &mmse_filter(model, k)?);
        }
        Ok(FilterBank { w })
    }

    /// MMSE filters against an estimated full covariance `R̂` (same domain and
    /// scaling as [`LinearModel::covariance`]).
    pub fn design_from_covariance(model: &LinearModel<T>, r_hat: &CMatrix<T>) -> Result<Self> {
        if r_hat.nrows() != model.dim() {
            return Err(Error::dims("estimated covariance", model.dim(), r_hat.nrows()));
        }
        let factor = HpdFactor::new(r_hat)?;
        let mut w = DMatrix::zeros(model.dim(), model.users());
        for k in 0..model.users() {
            let b = model.channel.column(k).into_owned();
            w.set_column(k, &(factor.solve(&b) * real(model.powers[k] / model.gain)));
        }
        Ok(FilterBank { w })
    }

    pub fn filter(&self, k: usize) -> CVector<T> {
        self.w.column(k).into_owned()
    }

    pub fn users(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult<T: Real> {
    /// `K × T` soft estimates.
    pub soft: CMatrix<T>,
    /// `K × T` alphabet indices.
    pub hard: DMatrix<usize>,
    /// Detection order (identity for linear MMSE).
    pub order: Vec<usize>,
    pub constellation: Constellation,
}

fn check_snapshots<T: Real>(x: &CMatrix<T>, model: &LinearModel<T>) -> Result<()> {
    if x.nrows() != model.dim() {
        return Err(Error::dims("snapshot rows", model.dim(), x.nrows()));
    }
    Ok(())
}

/// `ŝ_k(t) = w_kᴴ x(t)` followed by the slicer.
pub fn detect_linear<T: Real>(
    x: &CMatrix<T>,
    model: &LinearModel<T>,
    bank: &FilterBank<T>,
    constellation: Constellation,
) -> Result<DetectionResult<T>> {
    check_snapshots(x, model)?;
    if bank.w.nrows() != model.dim() || bank.users() != model.users() {
        return Err(Error::dims("filter bank", format!("{}x{}", model.dim(), model.users()), format!("{}x{}", bank.w.nrows(), bank.users())));
    }
    let soft = bank.w.adjoint() * x;
    let hard = DMatrix::from_fn(soft.nrows(), soft.ncols(), |k, t| constellation.slice(soft[(k, t)]));
    Ok(DetectionResult {
        soft,
        hard,
        order: (0..model.users()).collect(),
        constellation,
    })
}

/// Users sorted by decreasing column norm; ties keep index order.
pub fn norm_order<T: Real>(channel: &CMatrix<T>) -> Vec<usize> {
    let norms: Vec<T> = (0..channel.ncols()).map(|k| channel.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..channel.ncols()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Norm-ordered successive interference cancellation.
///
/// Stage `r` designs the MMSE filter for the `r`-th strongest user against the
/// users not yet cancelled, slices, and subtracts `c·b_(r)·s̃_(r)` from the
/// running residual. With `r_hat` the stage covariance is `R̂` minus the
/// contributions of the already cancelled users.
pub fn osic_detect<T: Real>(
    x: &CMatrix<T>,
    model: &LinearModel<T>,
    constellation: Constellation,
    r_hat: Option<&CMatrix<T>>,
) -> Result<DetectionResult<T>> {
    check_snapshots(x, model)?;
    let k_total = model.users();
    let order = norm_order(&model.channel);
    let mut residual = x.clone();
    let mut soft = DMatrix::zeros(k_total, x.ncols());
    let mut hard = DMatrix::zeros(k_total, x.ncols());
    let mut remaining: Vec<bool> = vec![true; k_total];
    let mut stage_cov = r_hat.cloned();

    for &k in &order {
        let b = model.channel.column(k).into_owned();
        let w = match &stage_cov {
            Some(r) => filter_from_covariance(r, &b, model.powers[k], model.gain)?,
            None => {
                let mut r = model.partial_covariance((0..k_total).filter(|&i| remaining[i]));
                r = crate::linalg::hermitian_part(&r);
                filter_from_covariance(&r, &b, model.powers[k], model.gain)?
            }
        };
        let amp = model.powers[k].sqrt();
        let est = w.adjoint() * &residual;
        let cancel_scale = real(model.gain * amp);
        for t in 0..x.ncols() {
            let s = est[(0, t)];
            let idx = constellation.slice(s);
            soft[(k, t)] = s;
            hard[(k, t)] = idx;
            let sym: Cx<T> = constellation.point(idx);
            let delta = &b * (sym * cancel_scale);
            let mut col = residual.column_mut(t);
            col -= delta;
        }
        remaining[k] = false;
        if let Some(r) = stage_cov.as_mut() {
            // an estimate minus the model term can dip below the noise floor
            *r -= (&b * b.adjoint()).scale(model.powers[k]);
            *r = crate::linalg::hermitian_floor(r, model.noise_power);
        }
    }

    Ok(DetectionResult {
        soft,
        hard,
        order,
        constellation,
    })
}

/// One CSV row per `(user, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub trial: usize,
    pub user: usize,
    pub t: usize,
    pub soft_re: f64,
    pub soft_im: f64,
    pub hard_index: usize,
    pub true_index: usize,
}

impl<T: Real> DetectionResult<T> {
    pub fn rows(&self, trial: usize, truth: &DMatrix<usize>) -> Result<Vec<DetectionRow>> {
        if truth.shape() != self.hard.shape() {
            return Err(Error::dims("truth symbols", format!("{:?}", self.hard.shape()), format!("{:?}", truth.shape())));
        }
        let mut rows = Vec::with_capacity(self.hard.len());
        for user in 0..self.hard.nrows() {
            for t in 0..self.hard.ncols() {
                let s = self.soft[(user, t)];
                rows.push(DetectionRow {
                    trial,
                    user,
                    t,
                    soft_re: s.re.as_f64(),
                    soft_im: s.im.as_f64(),
                    hard_index: self.hard[(user, t)],
                    true_index: truth[(user, t)],
                });
            }
        }
        Ok(rows)
    }
}

/// CSV with header `trial,user,t,soft_re,soft_im,hard_index,true_index`.
pub fn detection_csv(rows: &[DetectionRow]) -> String {
    let mut out = String::from("trial,user,t,soft_re,soft_im,hard_index,true_index\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{},{}\n",
            r.trial, r.user, r.t, r.soft_re, r.soft_im, r.hard_index, r.true_index
        ));
    }
    out
}
