//! Co-array virtualization: covariance vectorization, lag de-duplication,
//! spatial smoothing and the augmented virtual-ULA manifold.
//!
//! Lag convention: entry `(r, c)` of a covariance matrix carries lag
//! `pos[r] - pos[c]`, which matches the `exp(-j·2π·(d/λ)·ℓ·sin θ)` phase of
//! the augmented steering vector at lag `ℓ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{gaussian_matrix, ChannelRealization};
use crate::error::{Error, Result};
use crate::geometry::{virtual_half_extent, SensorLayout};
use crate::linalg::{hermitian_part, hermitian_sqrt};
use crate::scalar::{real, unit_phasor, CMatrix, CVector, Cx, Real};

/// `R_x = Σ_k σ_k² h_k h_kᴴ + σ_n² I`.
pub fn exact_covariance<T: Real>(channel: &ChannelRealization<T>, powers: &[T], noise_power: T) -> Result<CMatrix<T>> {
    if powers.len() != channel.users() {
        return Err(Error::dims("covariance powers", channel.users(), powers.len()));
    }
    let m = channel.sensors();
    let mut r = DMatrix::identity(m, m).scale(noise_power);
    for (k, &p) in powers.iter().enumerate() {
        let h = channel.h.column(k);
        r += (h * h.adjoint()).scale(p);
    }
    Ok(r)
}

/// `(1/T) X Xᴴ`.
pub fn sample_covariance<T: Real>(x: &CMatrix<T>) -> Result<CMatrix<T>> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::Empty("snapshot block"));
    }
    let r = (x * x.adjoint()).unscale(T::of_usize(x.ncols()));
    Ok(hermitian_part(&r))
}

/// Column-major stacking `vec(R)`.
pub fn vectorize_covariance<T: Real>(r: &CMatrix<T>) -> Result<CVector<T>> {
    if !r.is_square() {
        return Err(Error::dims("vectorize", "square matrix", format!("{}x{}", r.nrows(), r.ncols())));
    }
    Ok(DVector::from_column_slice(r.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMode {
    /// Value of the first `vec(R)` entry (column-major scan) at each lag.
    FirstOccurrence,
    /// Mean over every entry sharing the lag.
    #[default]
    Average,
}

/// Covariance index pairs `(row, col)` grouped by lag over `[-(J-1), J-1]`,
/// each group in column-major scan order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSelectionMap {
    half_extent: usize,
    sensors: usize,
    groups: Vec<Vec<(usize, usize)>>,
}

impl LagSelectionMap {
    pub fn new(layout: &SensorLayout, half_extent: usize) -> Result<Self> {
        if half_extent == 0 {
            return Err(Error::InvalidParameter("virtual half extent must be >= 1".into()));
        }
        let reach = half_extent as i64 - 1;
        let mut groups = vec![Vec::new(); 2 * half_extent - 1];
        let pos = layout.positions();
        for (c, &pc) in pos.iter().enumerate() {
            for (r, &pr) in pos.iter().enumerate() {
                let lag = pr - pc;
                if lag.abs() <= reach {
                    groups[(lag + reach) as usize].push((r, c));
                }
            }
        }
        if let Some(idx) = groups.iter().position(Vec::is_empty) {
            return Err(Error::GeometryInconsistency {
                lag: idx as i64 - reach,
            });
        }
        Ok(LagSelectionMap {
            half_extent,
            sensors: layout.len(),
            groups,
        })
    }

    pub fn half_extent(&self) -> usize {
        self.half_extent
    }

    pub fn pairs(&self, lag: i64) -> &[(usize, usize)] {
        let reach = self.half_extent as i64 - 1;
        assert!(lag.abs() <= reach, "lag {lag} outside the contiguous segment");
        &self.groups[(lag + reach) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let reach = self.half_extent as i64 - 1;
        -reach..=reach
    }
}

/// Lag-domain vector of length `2J - 1`, index 0 holding lag `-(J-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSnapshot<T: Real> {
    pub values: CVector<T>,
    pub half_extent: usize,
}

impl<T: Real> VirtualSnapshot<T> {
    pub fn at_lag(&self, lag: i64) -> Cx<T> {
        self.values[(lag + self.half_extent as i64 - 1) as usize]
    }

    /// `max_ℓ |v[-ℓ] - conj(v[ℓ])|`.
    pub fn conjugate_symmetry_defect(&self) -> T {
        let reach = self.half_extent as i64 - 1;
        (0..=reach).fold(T::zero(), |acc, l| {
            let d = (self.at_lag(-l) - self.at_lag(l).conj()).norm_sqr().sqrt();
            if d > acc {
                d
            } else {
                acc
            }
        })
    }
}

/// Keeps one value per lag of the contiguous segment and sorts by lag.
pub fn deduplicate_and_sort<T: Real>(
    v: &CVector<T>,
    layout: &SensorLayout,
    half_extent: usize,
    mode: DedupMode,
) -> Result<VirtualSnapshot<T>> {
    let map = LagSelectionMap::new(layout, half_extent)?;
    dedup_with_map(v, &map, mode)
}

pub fn dedup_with_map<T: Real>(v: &CVector<T>, map: &LagSelectionMap, mode: DedupMode) -> Result<VirtualSnapshot<T>> {
    let m = map.sensors;
    if v.len() != m * m {
        return Err(Error::dims("vectorized covariance length", m * m, v.len()));
    }
    let values = DVector::from_iterator(
        map.groups.len(),
        map.groups.iter().map(|pairs| match mode {
            DedupMode::FirstOccurrence => {
                let (r, c) = pairs[0];
                v[c * m + r]
            }
            DedupMode::Average => {
                let sum = pairs.iter().fold(Cx::new(T::zero(), T::zero()), |acc, &(r, c)| acc + v[c * m + r]);
                sum.unscale(T::of_usize(pairs.len()))
            }
        }),
    );
    Ok(VirtualSnapshot {
        values,
        half_extent: map.half_extent,
    })
}

/// `|g|² · exp(-j·2π·(d/λ)·ℓ·sin θ)` for `ℓ = -(J-1) ..= J-1`.
pub fn augmented_steering<T: Real>(theta: T, gain: Cx<T>, half_extent: usize, d_over_lambda: T) -> Result<CVector<T>> {
    if !(theta.is_finite() && theta.abs() <= T::frac_pi_2()) {
        return Err(Error::InvalidAngle(theta.as_f64()));
    }
    if half_extent == 0 {
        return Err(Error::InvalidParameter("virtual half extent must be >= 1".into()));
    }
    let step = -T::two_pi() * d_over_lambda * theta.sin();
    let g2 = gain.norm_sqr();
    let reach = half_extent as i64 - 1;
    Ok(DVector::from_iterator(
        2 * half_extent - 1,
        (-reach..=reach).map(|l| unit_phasor(step * T::of(l as f64)).scale(g2)),
    ))
}

/// Spatially smoothed covariance and its Hermitian square root.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCovariance<T: Real> {
    pub r_ss: CMatrix<T>,
    pub r_bar: CMatrix<T>,
    pub half_extent: usize,
}

/// `R_ss = (1/J) Σ_i w_i w_iᴴ`, window `i` (1-based) covering rows
/// `J+1-i ..= 2J-i` of the lag-sorted vector. Accumulates in ascending
/// window order.
pub fn spatial_smoothing<T: Real>(vs: &VirtualSnapshot<T>) -> Result<SmoothedCovariance<T>> {
    let j = vs.half_extent;
    if j == 0 || vs.values.len() != 2 * j - 1 {
        return Err(Error::dims("virtual snapshot length", 2 * j.max(1) - 1, vs.values.len()));
    }
    let mut r_ss = DMatrix::<Cx<T>>::zeros(j, j);
    for i in 1..=j {
        let w = vs.values.rows(j - i, j);
        r_ss += &w * w.adjoint();
    }
    r_ss.unscale_mut(T::of_usize(j));
    let r_ss = hermitian_part(&r_ss);
    let r_bar = hermitian_sqrt(&r_ss)?;
    Ok(SmoothedCovariance {
        r_ss,
        r_bar,
        half_extent: j,
    })
}

/// Vectorize, de-duplicate and smooth a physical covariance in one go.
pub fn virtualize<T: Real>(
    r_x: &CMatrix<T>,
    layout: &SensorLayout,
    half_extent: usize,
    mode: DedupMode,
) -> Result<SmoothedCovariance<T>> {
    if r_x.nrows() != layout.len() {
        return Err(Error::dims("covariance size vs sensors", layout.len(), r_x.nrows()));
    }
    let v = vectorize_covariance(r_x)?;
    spatial_smoothing(&deduplicate_and_sort(&v, layout, half_extent, mode)?)
}

/// Augmented manifold `B1` (`J × K`): lags `0 ..= J-1` of each user's
/// augmented steering vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedManifold<T: Real> {
    pub b1: CMatrix<T>,
    /// `|g_k|²`, the per-column scale of `B1`.
    pub gains_sq: Vec<T>,
    /// `η_k = exp(-j·2π·(d/λ)·sin θ_k)`.
    pub eta: Vec<Cx<T>>,
}

pub fn augmented_manifold<T: Real>(channel: &ChannelRealization<T>, half_extent: usize) -> Result<AugmentedManifold<T>> {
    let expected = virtual_half_extent(&channel.layout)?;
    if expected != half_extent {
        return Err(Error::dims("virtual half extent", expected, half_extent));
    }
    manifold_from_users(&channel.angles, &channel.gains, half_extent, channel.d_over_lambda)
}

/// Manifold for arbitrary angles/gains, without a layout check.
pub fn manifold_from_users<T: Real>(
    angles: &[T],
    gains: &[Cx<T>],
    half_extent: usize,
    d_over_lambda: T,
) -> Result<AugmentedManifold<T>> {
    if angles.len() != gains.len() {
        return Err(Error::dims("manifold gains", angles.len(), gains.len()));
    }
    let mut b1 = DMatrix::zeros(half_extent, angles.len());
    let mut eta = Vec::with_capacity(angles.len());
    for (k, (&theta, &g)) in angles.iter().zip(gains).enumerate() {
        let q = augmented_steering(theta, g, half_extent, d_over_lambda)?;
        b1.set_column(k, &q.rows(half_extent - 1, half_extent));
        eta.push(unit_phasor(-T::two_pi() * d_over_lambda * theta.sin()));
    }
    Ok(AugmentedManifold {
        b1,
        gains_sq: gains.iter().map(|g| g.norm_sqr()).collect(),
        eta,
    })
}

impl<T: Real> AugmentedManifold<T> {
    pub fn half_extent(&self) -> usize {
        self.b1.nrows()
    }

    pub fn users(&self) -> usize {
        self.b1.ncols()
    }

    /// Virtual-domain source powers `ω_k = p_k / |g_k|²`.
    ///
    /// The smoothed data carry `p_k |g_k|²` per user while each column of
    /// `B1` already holds `|g_k|²`, so `B1 diag(ω) B1ᴴ` reproduces the
    /// smoothed covariance only with this normalisation.
    pub fn virtual_source_powers(&self, powers: &[T]) -> Result<Vec<T>> {
        if powers.len() != self.users() {
            return Err(Error::dims("source powers", self.users(), powers.len()));
        }
        powers
            .iter()
            .zip(&self.gains_sq)
            .map(|(&p, &g2)| {
                if g2 > T::zero() {
                    Ok(p / g2)
                } else {
                    Err(Error::InvalidParameter("user with zero fading gain has no virtual source".into()))
                }
            })
            .collect()
    }

    /// `B1 diag(ω) B1ᴴ + σ_n² I`.
    pub fn covariance(&self, omega: &[T], noise_power: T) -> Result<CMatrix<T>> {
        if omega.len() != self.users() {
            return Err(Error::dims("manifold powers", self.users(), omega.len()));
        }
        let j = self.half_extent();
        let mut r = DMatrix::identity(j, j).scale(noise_power);
        for (k, &w) in omega.iter().enumerate() {
            let b = self.b1.column(k);
            r += (b * b.adjoint()).scale(w);
        }
        Ok(r)
    }

    /// Closed-form smoothed covariance `(1/J) R_a²` and its root `R_a / √J`
    /// with `R_a = B1 diag(ω) B1ᴴ + σ_n² I`.
    pub fn smoothed_closed_form(&self, omega: &[T], noise_power: T) -> Result<(CMatrix<T>, CMatrix<T>)> {
        let ra = self.covariance(omega, noise_power)?;
        let j = T::of_usize(self.half_extent());
        Ok((( &ra * &ra).unscale(j), ra.unscale(j.sqrt())))
    }

    pub fn to_export(&self) -> ManifoldExport {
        ManifoldExport {
            half_extent: self.half_extent(),
            b1: MatrixJson::from_matrix(&self.b1),
            gains_sq: self.gains_sq.iter().map(|g| g.as_f64()).collect(),
        }
    }
}

/// `x_a(t) = J^{-1/4} (B1 s_a(t) + z_a(t))`, `z_a ~ CN(0, σ_n² I_J)`.
pub fn synthesize_augmented_snapshots<T: Real, R: Rng + ?Sized>(
    manifold: &AugmentedManifold<T>,
    s_a: &CMatrix<T>,
    noise_power: T,
    rng: &mut R,
) -> Result<CMatrix<T>> {
    if s_a.nrows() != manifold.users() {
        return Err(Error::dims("augmented symbols vs users", manifold.users(), s_a.nrows()));
    }
    let j = manifold.half_extent();
    let z = gaussian_matrix(rng, j, s_a.ncols(), noise_power);
    let gain = T::of_usize(j).powf(T::of(-0.25));
    Ok((&manifold.b1 * s_a + z) * real(gain))
}

/// Row-major matrix with `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix<T: Real>(m: &CMatrix<T>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re.as_f64(), z.im.as_f64()]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<CMatrix<T>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::dims("matrix json data", self.rows * self.cols, self.data.len()));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            Cx::new(T::of(re), T::of(im))
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCovarianceExport {
    pub half_extent: usize,
    pub r_ss: MatrixJson,
    pub r_bar: MatrixJson,
}

impl<T: Real> SmoothedCovariance<T> {
    pub fn to_export(&self) -> SmoothedCovarianceExport {
        SmoothedCovarianceExport {
            half_extent: self.half_extent,
            r_ss: MatrixJson::from_matrix(&self.r_ss),
            r_bar: MatrixJson::from_matrix(&self.r_bar),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldExport {
    pub half_extent: usize,
    pub b1: MatrixJson,
    pub gains_sq: Vec<f64>,
}
