//! Single-cell uplink scenario: user angles, Rayleigh gains, steering
//! vectors, QPSK symbol blocks and noisy snapshots.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::geometry::SensorLayout;
use crate::scalar::{cx, unit_phasor, CMatrix, CVector, Cx, Real};

/// Default sensor spacing in wavelengths.
pub const HALF_WAVELENGTH: f64 = 0.5;

fn check_angle<T: Real>(theta: T) -> Result<()> {
    let lim = T::frac_pi_2();
    if theta.is_finite() && theta >= -lim && theta <= lim {
        Ok(())
    } else {
        Err(Error::InvalidAngle(theta.as_f64()))
    }
}

/// `exp(-j·2π·(d/λ)·n·sin θ)` for every sensor position `n`.
pub fn steering_vector<T: Real>(layout: &SensorLayout, theta: T, d_over_lambda: T) -> Result<CVector<T>> {
    check_angle(theta)?;
    let step = -T::two_pi() * d_over_lambda * theta.sin();
    Ok(DVector::from_iterator(
        layout.len(),
        layout
            .positions()
            .iter()
            .map(|&n| unit_phasor(step * T::of(n as f64))),
    ))
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Cx<T> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    cx(T::of(s * re), T::of(s * im))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AnglePolicy {
    /// Uniform on `[-π/2, π/2]` conditioned on a minimum pairwise separation.
    Uniform { min_separation_deg: f64 },
    /// Fixed angles in degrees, one per user.
    Fixed { angles_deg: Vec<f64> },
}

impl Default for AnglePolicy {
    fn default() -> Self {
        AnglePolicy::Uniform {
            min_separation_deg: 5.0,
        }
    }
}

/// Per-user angles and fading gains, independent of the receive array so
/// the same draw can be replayed on several layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDraw<T: Real> {
    pub angles: Vec<T>,
    pub gains: Vec<Cx<T>>,
}

/// Draws `k` angles under `policy` and i.i.d. `CN(0, 1)` gains.
///
/// The separated uniform draw samples the `k` gaps directly: `k` uniforms on
/// an interval shortened by `(k-1)·δ`, sorted and re-spread by `δ`, then
/// randomly assigned to users. That is exactly the uniform law conditioned
/// on the separation constraint, without rejection loops.
pub fn draw_users<T: Real, R: Rng + ?Sized>(rng: &mut R, k: usize, policy: &AnglePolicy) -> Result<UserDraw<T>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one user".into()));
    }
    let angles_f64: Vec<f64> = match policy {
        AnglePolicy::Fixed { angles_deg } => {
            if angles_deg.len() != k {
                return Err(Error::dims("fixed angle list", k, angles_deg.len()));
            }
            angles_deg.iter().map(|d| d.to_radians()).collect()
        }
        AnglePolicy::Uniform { min_separation_deg } => {
            let delta = min_separation_deg.max(0.0).to_radians();
            let span = std::f64::consts::PI - (k as f64 - 1.0) * delta;
            if span < 0.0 || !span.is_finite() {
                return Err(Error::PlacementFailure {
                    users: k,
                    min_separation_deg: *min_separation_deg,
                });
            }
            let u = Uniform::new_inclusive(0.0, span).expect("valid range");
            let mut pts: Vec<f64> = (0..k).map(|_| u.sample(rng)).collect();
            pts.sort_by(|a, b| a.total_cmp(b));
            let mut placed: Vec<f64> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (p + i as f64 * delta - std::f64::consts::FRAC_PI_2).clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2))
                .collect();
            // Fisher-Yates so that angle rank is independent of user index.
            for i in (1..k).rev() {
                let j = rng.random_range(0..=i);
                placed.swap(i, j);
            }
            placed
        }
    };
    let angles: Vec<T> = angles_f64.into_iter().map(T::of).collect();
    for &a in &angles {
        check_angle(a)?;
    }
    let gains = (0..k).map(|_| complex_gaussian(rng, 1.0)).collect();
    Ok(UserDraw { angles, gains })
}

/// Channel matrix `H` with columns `g_k · a(θ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    pub angles: Vec<T>,
    pub gains: Vec<Cx<T>>,
    pub h: CMatrix<T>,
    pub layout: SensorLayout,
    pub d_over_lambda: T,
}

impl<T: Real> ChannelRealization<T> {
    pub fn from_parts(layout: &SensorLayout, angles: Vec<T>, gains: Vec<Cx<T>>, d_over_lambda: T) -> Result<Self> {
        if angles.len() != gains.len() {
            return Err(Error::dims("channel gains", angles.len(), gains.len()));
        }
        if !(d_over_lambda > T::zero()) {
            return Err(Error::InvalidParameter("d/λ must be positive".into()));
        }
        let mut h = DMatrix::zeros(layout.len(), angles.len());
        for (k, (&theta, &g)) in angles.iter().zip(&gains).enumerate() {
            let a = steering_vector(layout, theta, d_over_lambda)?;
            h.set_column(k, &(a * g));
        }
        Ok(ChannelRealization {
            angles,
            gains,
            h,
            layout: layout.clone(),
            d_over_lambda,
        })
    }

    pub fn from_users(layout: &SensorLayout, users: &UserDraw<T>, d_over_lambda: T) -> Result<Self> {
        Self::from_parts(layout, users.angles.clone(), users.gains.clone(), d_over_lambda)
    }

    pub fn users(&self) -> usize {
        self.angles.len()
    }

    pub fn sensors(&self) -> usize {
        self.layout.len()
    }

    pub fn to_export(&self) -> ChannelExport {
        ChannelExport {
            layout: self.layout.params().to_string(),
            d_over_lambda: self.d_over_lambda.as_f64(),
            angles_deg: self.angles.iter().map(|a| a.as_f64().to_degrees()).collect(),
            gains: self.gains.iter().map(|g| [g.re.as_f64(), g.im.as_f64()]).collect(),
        }
    }
}

pub fn draw_channel<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    layout: &SensorLayout,
    k: usize,
    policy: &AnglePolicy,
    d_over_lambda: T,
) -> Result<ChannelRealization<T>> {
    let users = draw_users(rng, k, policy)?;
    ChannelRealization::from_users(layout, &users, d_over_lambda)
}

/// JSON form of a channel realization used for regression pinning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelExport {
    pub layout: String,
    pub d_over_lambda: f64,
    pub angles_deg: Vec<f64>,
    /// `[re, im]` pairs.
    pub gains: Vec<[f64; 2]>,
}

/// Transmitted symbols with the alphabet indices they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock<T: Real> {
    /// `K × T`, row `k` scaled to average power `powers[k]`.
    pub symbols: CMatrix<T>,
    /// `K × T` alphabet indices.
    pub indices: DMatrix<usize>,
    pub constellation: Constellation,
}

pub fn generate_symbols<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    t: usize,
    constellation: Constellation,
    powers: &[T],
) -> Result<SymbolBlock<T>> {
    if powers.len() != k {
        return Err(Error::dims("symbol powers", k, powers.len()));
    }
    if let Some(p) = powers.iter().find(|p| !(**p > T::zero()) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("symbol power must be positive, got {}", p.as_f64())));
    }
    let alphabet = constellation.alphabet::<T>();
    if alphabet.is_empty() {
        return Err(Error::Empty("constellation"));
    }
    let amps: Vec<T> = powers.iter().map(|p| p.sqrt()).collect();
    let mut indices = DMatrix::zeros(k, t);
    let mut symbols = DMatrix::zeros(k, t);
    // column-major fill: snapshot by snapshot
    for col in 0..t {
        for row in 0..k {
            let i = rng.random_range(0..alphabet.len());
            indices[(row, col)] = i;
            symbols[(row, col)] = alphabet[i].scale(amps[row]);
        }
    }
    Ok(SymbolBlock {
        symbols,
        indices,
        constellation,
    })
}

/// `X = H·S + Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock<T: Real> {
    pub x: CMatrix<T>,
    pub s: CMatrix<T>,
    pub noise_power: T,
}

impl<T: Real> SnapshotBlock<T> {
    pub fn snapshots(&self) -> usize {
        self.x.ncols()
    }
}

/// Matrix of i.i.d. `CN(0, variance)` entries, filled column by column.
pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: T) -> CMatrix<T> {
    let v = variance.as_f64();
    let mut z = DMatrix::zeros(rows, cols);
    if v > 0.0 {
        for c in 0..cols {
            for r in 0..rows {
                z[(r, c)] = complex_gaussian(rng, v);
            }
        }
    }
    z
}

pub fn received_block<T: Real, R: Rng + ?Sized>(
    channel: &ChannelRealization<T>,
    s: &CMatrix<T>,
    noise_power: T,
    rng: &mut R,
) -> Result<SnapshotBlock<T>> {
    if s.nrows() != channel.users() {
        return Err(Error::dims("symbol rows vs users", channel.users(), s.nrows()));
    }
    if noise_power < T::zero() || !noise_power.is_finite() {
        return Err(Error::InvalidParameter("noise power must be finite and non-negative".into()));
    }
    let z = gaussian_matrix(rng, channel.sensors(), s.ncols(), noise_power);
    Ok(SnapshotBlock {
        x: &channel.h * s + z,
        s: s.clone(),
        noise_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_tlna, build_ula};
    use crate::virtualization::{exact_covariance, sample_covariance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(&build_tlna(4, 4).unwrap(), 0.0, 0.5).unwrap();
        assert!(a.iter().all(|z| (z - cx(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn endfire_ula2() {
        let a = steering_vector(&build_ula(2).unwrap(), FRAC_PI_2, 0.5).unwrap();
        assert!((a[0] - cx(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - cx(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn tlna11_at_30_degrees() {
        let a = steering_vector(&build_tlna(1, 1).unwrap(), FRAC_PI_6, 0.5).unwrap();
        // positions {1,2}: phases -π/2 and -π
        assert!((a[0] - unit_phasor(-PI / 2.0)).norm() < 1e-12);
        assert!((a[1] - unit_phasor(-PI)).norm() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_angle() {
        let l = build_ula(2).unwrap();
        assert!(matches!(steering_vector(&l, 1.6, 0.5), Err(Error::InvalidAngle(_))));
        assert!(steering_vector(&l, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn steering_conjugate_symmetry() {
        let l = build_tlna(3, 3).unwrap();
        for &th in &[0.1, 0.7, -1.2, 1.5] {
            let a = steering_vector(&l, th, 0.5).unwrap();
            let b = steering_vector(&l, -th, 0.5).unwrap();
            assert!((a.conjugate() - b).norm() < 1e-13);
        }
    }

    #[test]
    fn same_seed_same_channel() {
        let l = build_tlna(4, 4).unwrap();
        let p = AnglePolicy::default();
        let a = draw_channel::<f64, _>(&mut rng(9), &l, 6, &p, 0.5).unwrap();
        let b = draw_channel::<f64, _>(&mut rng(9), &l, 6, &p, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separation_is_respected() {
        let mut r = rng(3);
        let p = AnglePolicy::Uniform { min_separation_deg: 5.0 };
        for _ in 0..200 {
            let u = draw_users::<f64, _>(&mut r, 12, &p).unwrap();
            let mut a = u.angles.clone();
            a.sort_by(f64::total_cmp);
            assert!(a.windows(2).all(|w| w[1] - w[0] >= 5f64.to_radians() - 1e-12));
            assert!(a.iter().all(|x| x.abs() <= FRAC_PI_2));
        }
        let too_many = draw_users::<f64, _>(&mut r, 40, &p);
        assert!(matches!(too_many, Err(Error::PlacementFailure { users: 40, .. })));
    }

    #[test]
    fn fixed_policy_and_forced_gain() {
        let l = build_tlna(2, 2).unwrap();
        let c = ChannelRealization::from_parts(&l, vec![0.0], vec![cx(1.0, 0.0)], 0.5).unwrap();
        assert!(c.h.iter().all(|z| (z - cx(1.0, 0.0)).norm() < 1e-15));
        let u = draw_users::<f64, _>(&mut rng(1), 2, &AnglePolicy::Fixed { angles_deg: vec![10.0, -20.0] }).unwrap();
        assert!((u.angles[0] - 10f64.to_radians()).abs() < 1e-15);
        assert!(draw_users::<f64, _>(&mut rng(1), 3, &AnglePolicy::Fixed { angles_deg: vec![1.0] }).is_err());
    }

    #[test]
    fn channel_entries_have_gain_modulus() {
        let l = build_tlna(4, 4).unwrap();
        let c = draw_channel::<f64, _>(&mut rng(5), &l, 5, &AnglePolicy::default(), 0.5).unwrap();
        for k in 0..5 {
            for m in 0..l.len() {
                assert!((c.h[(m, k)].norm() - c.gains[k].norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gain_variance_is_unity() {
        let mut r = rng(11);
        let n = 10_000;
        let v: f64 = (0..n).map(|_| complex_gaussian::<f64, _>(&mut r, 1.0).norm_sqr()).sum::<f64>() / n as f64;
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn qpsk_symbols_and_row_power() {
        let mut r = rng(2);
        let b = generate_symbols::<f64, _>(&mut r, 2, 10_000, Constellation::Qpsk, &[1.0, 4.0]).unwrap();
        let alph = Constellation::Qpsk.alphabet::<f64>();
        for t in 0..20 {
            assert!(alph.iter().any(|p| (p - b.symbols[(0, t)]).norm() < 1e-15));
        }
        let pw = |k: usize| b.symbols.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() / 10_000.0;
        assert!((pw(0) - 1.0).abs() < 0.03);
        assert!((pw(1) / pw(0) - 4.0).abs() < 1e-9);
        // indices are uniform-ish
        let ones = b.indices.row(0).iter().filter(|&&i| i == 1).count() as f64 / 10_000.0;
        assert!((ones - 0.25).abs() < 0.02);
        assert!(generate_symbols::<f64, _>(&mut r, 2, 4, Constellation::Qpsk, &[1.0, 0.0]).is_err());
        assert!(generate_symbols::<f64, _>(&mut r, 2, 4, Constellation::Qpsk, &[1.0]).is_err());
    }

    #[test]
    fn noiseless_block_is_hs() {
        let l = build_ula(4).unwrap();
        let mut r = rng(4);
        let c = draw_channel::<f64, _>(&mut r, &l, 2, &AnglePolicy::default(), 0.5).unwrap();
        let s = generate_symbols(&mut r, 2, 10, Constellation::Qpsk, &[1.0, 1.0]).unwrap();
        let blk = received_block(&c, &s.symbols, 0.0, &mut r).unwrap();
        assert!((&blk.x - &c.h * &s.symbols).norm() < 1e-14);
        let bad = DMatrix::zeros(3, 10);
        assert!(matches!(received_block(&c, &bad, 0.1, &mut r), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn noise_only_covariance() {
        let l = build_ula(4).unwrap();
        let mut c = ChannelRealization::from_parts(&l, vec![0.3], vec![cx(0.0, 0.0)], 0.5).unwrap();
        c.h.fill(cx(0.0, 0.0));
        let mut r = rng(8);
        let s = DMatrix::from_element(1, 10_000, cx(1.0, 0.0));
        let blk = received_block(&c, &s, 0.5, &mut r).unwrap();
        let rs = sample_covariance(&blk.x).unwrap();
        let target = DMatrix::<Cx<f64>>::identity(4, 4).scale(0.5);
        assert!((&rs - &target).norm() / target.norm() < 0.05);
    }

    #[test]
    fn per_antenna_snr() {
        // E|x_m|² = Σ σ_k² E|g_k|² + σ_n², checked against the exact covariance diagonal
        let l = build_tlna(4, 4).unwrap();
        let c = ChannelRealization::from_parts(&l, vec![0.2, -0.4], vec![cx(0.6, 0.8), cx(2.0, 0.0)], 0.5).unwrap();
        let r = exact_covariance(&c, &[1.0, 0.5], 0.1).unwrap();
        for m in 0..l.len() {
            assert!((r[(m, m)].re - (1.0f64 * 1.0 + 0.5 * 4.0 + 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_covariance_converges_to_model() {
        let l = build_tlna(4, 4).unwrap();
        let mut r = rng(21);
        let c = draw_channel::<f64, _>(&mut r, &l, 2, &AnglePolicy::default(), 0.5).unwrap();
        let p = [1.0, 1.0];
        let s = generate_symbols(&mut r, 2, 10_000, Constellation::Qpsk, &p).unwrap();
        let blk = received_block(&c, &s.symbols, 0.1, &mut r).unwrap();
        let rs = sample_covariance(&blk.x).unwrap();
        let rx = exact_covariance(&c, &p, 0.1).unwrap();
        assert!((&rs - &rx).norm() / rx.norm() < 0.10);
    }

    #[test]
    fn export_is_degrees() {
        let l = build_ula(2).unwrap();
        let c = ChannelRealization::from_parts(&l, vec![PI / 6.0], vec![cx(0.5, -0.5)], 0.5).unwrap();
        let e = c.to_export();
        assert!((e.angles_deg[0] - 30.0).abs() < 1e-12);
        assert_eq!(e.gains[0], [0.5, -0.5]);
        assert_eq!(e.layout, "ula:2");
    }
}
