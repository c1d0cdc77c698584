//! Sensor layouts (ULA, two-level nested, coprime) and their difference co-arrays.
//!
//! Positions are exact integers in units of the base spacing `d`; physical
//! distances only appear once phases are computed in [`crate::channel`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Ula,
    Tlna,
    Cpa,
    Custom,
}

/// Construction parameters of a layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometryParams {
    Ula { m: usize },
    Tlna { m1: usize, m2: usize },
    Cpa { f: usize, q: usize },
    Custom { positions: Vec<i64> },
}

impl GeometryParams {
    pub fn kind(&self) -> GeometryKind {
        match self {
            GeometryParams::Ula { .. } => GeometryKind::Ula,
            GeometryParams::Tlna { .. } => GeometryKind::Tlna,
            GeometryParams::Cpa { .. } => GeometryKind::Cpa,
            GeometryParams::Custom { .. } => GeometryKind::Custom,
        }
    }

    pub fn build(&self) -> Result<SensorLayout> {
        match self {
            GeometryParams::Ula { m } => build_ula(*m),
            GeometryParams::Tlna { m1, m2 } => build_tlna(*m1, *m2),
            GeometryParams::Cpa { f, q } => build_cpa(*f, *q),
            GeometryParams::Custom { positions } => SensorLayout::custom(positions.clone()),
        }
    }
}

/// Canonical short form, e.g. `tlna:4,4`. Round-trips through [`FromStr`].
impl fmt::Display for GeometryParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryParams::Ula { m } => write!(f, "ula:{m}"),
            GeometryParams::Tlna { m1, m2 } => write!(f, "tlna:{m1},{m2}"),
            GeometryParams::Cpa { f: ff, q } => write!(f, "cpa:{ff},{q}"),
            GeometryParams::Custom { positions } => {
                write!(f, "custom:")?;
                for (i, p) in positions.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for GeometryParams {
    type Err = Error;

    /// Parses `ula:M`, `tlna:M1,M2`, `cpa:F,Q` or `custom:p0,p1,...`.
    /// Error positions are 1-based columns into the input.
    fn from_str(input: &str) -> Result<Self> {
        let err = |position: usize, message: &str| Error::Parse {
            input: input.to_string(),
            position,
            message: message.to_string(),
        };
        let colon = input
            .find(':')
            .ok_or_else(|| err(input.len() + 1, "expected `<kind>:<params>`"))?;
        let kind = input[..colon].trim().to_ascii_lowercase();

        let mut values = Vec::new();
        let mut offset = colon + 1;
        for field in input[colon + 1..].split(',') {
            let trimmed = field.trim();
            let lead = field.len() - field.trim_start().len();
            if trimmed.is_empty() {
                return Err(err(offset + lead + 1, "missing integer"));
            }
            let value: i64 = trimmed
                .parse()
                .map_err(|_| err(offset + lead + 1, "not an integer"))?;
            values.push((value, offset + lead + 1));
            offset += field.len() + 1;
        }

        let unsigned = |idx: usize| -> Result<usize> {
            let (v, pos) = values[idx];
            usize::try_from(v).map_err(|_| err(pos, "must be non-negative"))
        };
        let arity = |n: usize| -> Result<()> {
            if values.len() == n {
                Ok(())
            } else {
                let pos = values.get(n).map(|v| v.1).unwrap_or(input.len() + 1);
                Err(err(pos, &format!("`{kind}` takes {n} parameter(s), got {}", values.len())))
            }
        };

        match kind.as_str() {
            "ula" => {
                arity(1)?;
                Ok(GeometryParams::Ula { m: unsigned(0)? })
            }
            "tlna" | "nested" => {
                arity(2)?;
                Ok(GeometryParams::Tlna {
                    m1: unsigned(0)?,
                    m2: unsigned(1)?,
                })
            }
            "cpa" | "coprime" => {
                arity(2)?;
                Ok(GeometryParams::Cpa {
                    f: unsigned(0)?,
                    q: unsigned(1)?,
                })
            }
            "custom" => Ok(GeometryParams::Custom {
                positions: values.iter().map(|v| v.0).collect(),
            }),
            _ => Err(err(1, "unknown geometry kind (expected ula, tlna, cpa or custom)")),
        }
    }
}

impl Serialize for GeometrySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for GeometrySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(GeometrySpec).map_err(serde::de::Error::custom)
    }
}

/// [`GeometryParams`] that (de)serializes as its short string form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometrySpec(pub GeometryParams);

impl FromStr for GeometrySpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.parse().map(GeometrySpec)
    }
}

impl fmt::Display for GeometrySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Sensor positions in units of `d`, strictly increasing and non-negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorLayout {
    positions: Vec<i64>,
    params: GeometryParams,
}

impl SensorLayout {
    /// Arbitrary layout for testing. Positions are sorted; duplicates and
    /// negative entries are rejected.
    pub fn custom(mut positions: Vec<i64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("custom layout needs at least one sensor".into()));
        }
        if let Some(p) = positions.iter().find(|&&p| p < 0) {
            return Err(Error::InvalidParameter(format!("negative sensor position {p}")));
        }
        positions.sort_unstable();
        if let Some(w) = positions.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate sensor position {}", w[0])));
        }
        Ok(SensorLayout {
            params: GeometryParams::Custom {
                positions: positions.clone(),
            },
            positions,
        })
    }

    fn from_parts(mut positions: Vec<i64>, params: GeometryParams) -> Self {
        positions.sort_unstable();
        positions.dedup();
        SensorLayout { positions, params }
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn params(&self) -> &GeometryParams {
        &self.params
    }

    pub fn kind(&self) -> GeometryKind {
        self.params.kind()
    }

    /// Number of physical sensors.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Aperture in units of `d`.
    pub fn aperture(&self) -> i64 {
        self.positions.last().copied().unwrap_or(0) - self.positions.first().copied().unwrap_or(0)
    }
}

/// Uniform linear array `{0, 1, ..., M-1}`.
pub fn build_ula(m: usize) -> Result<SensorLayout> {
    if m == 0 {
        return Err(Error::InvalidParameter("ULA needs M >= 1".into()));
    }
    Ok(SensorLayout::from_parts(
        (0..m as i64).collect(),
        GeometryParams::Ula { m },
    ))
}

/// Two-level nested array: inner `{1..=M1}`, outer `{n(M1+1) : n = 1..=M2}`.
pub fn build_tlna(m1: usize, m2: usize) -> Result<SensorLayout> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "nested array needs M1, M2 >= 1 (got {m1}, {m2})"
        )));
    }
    let outer_spacing = m1 as i64 + 1;
    let inner = 1..=m1 as i64;
    let outer = (1..=m2 as i64).map(|n| n * outer_spacing);
    Ok(SensorLayout::from_parts(
        inner.chain(outer).collect(),
        GeometryParams::Tlna { m1, m2 },
    ))
}

/// Coprime pair: `{Qf : 0 <= f < F} ∪ {Fq : 1 <= q <= 2Q-1}`, `F + 2Q - 1` sensors.
pub fn build_cpa(f: usize, q: usize) -> Result<SensorLayout> {
    if f < 2 || q < 2 {
        return Err(Error::InvalidParameter(format!(
            "coprime array needs F, Q >= 2 (got {f}, {q})"
        )));
    }
    if gcd(f, q) != 1 {
        return Err(Error::NonCoprime { f, q });
    }
    let (fi, qi) = (f as i64, q as i64);
    let first = (0..fi).map(|k| qi * k);
    let second = (1..2 * qi).map(|k| fi * k);
    let layout = SensorLayout::from_parts(first.chain(second).collect(), GeometryParams::Cpa { f, q });
    debug_assert_eq!(layout.len(), f + 2 * q - 1);
    Ok(layout)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Difference co-array of a layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarrayProfile {
    /// Sorted distinct lags.
    pub lags: Vec<i64>,
    /// Number of ordered sensor pairs producing each lag.
    pub weight: BTreeMap<i64, usize>,
    pub dof: usize,
    /// Largest `L` with every lag of `[-L, L]` present.
    pub contiguous_half_extent: usize,
}

impl CoarrayProfile {
    pub fn weight_of(&self, lag: i64) -> usize {
        self.weight.get(&lag).copied().unwrap_or(0)
    }
}

/// Enumerates all `M²` ordered pairs of the layout.
pub fn difference_coarray(layout: &SensorLayout) -> CoarrayProfile {
    let mut weight = BTreeMap::new();
    for &a in layout.positions() {
        for &b in layout.positions() {
            *weight.entry(a - b).or_insert(0usize) += 1;
        }
    }
    let lags: Vec<i64> = weight.keys().copied().collect();
    let mut contiguous = 0usize;
    while weight.contains_key(&(contiguous as i64 + 1)) && weight.contains_key(&-(contiguous as i64 + 1)) {
        contiguous += 1;
    }
    CoarrayProfile {
        dof: lags.len(),
        lags,
        weight,
        contiguous_half_extent: contiguous,
    }
}

/// Closed-form one-sided virtual ULA length `J`.
///
/// Nested arrays with `M1 = M2 = M/2` give `J = M²/4 + M/2` and must match the
/// enumerated co-array exactly. Coprime arrays give `J = QF + 1`; the
/// enumerated contiguous segment of a coprime pair is always longer
/// (`QF + Q - 1` one-sided), so only containment is required there.
pub fn virtual_half_extent(layout: &SensorLayout) -> Result<usize> {
    let profile = difference_coarray(layout);
    let (closed_form, exact) = match *layout.params() {
        GeometryParams::Tlna { m1, m2 } if m1 == m2 => {
            let m = m1 + m2;
            (m * m / 4 + m / 2, true)
        }
        GeometryParams::Cpa { f, q } => (q * f + 1, false),
        _ => return Err(Error::UnsupportedKind(layout.kind())),
    };
    let brute = profile.contiguous_half_extent + 1;
    let consistent = if exact { closed_form == brute } else { closed_form <= brute };
    if !consistent {
        return Err(Error::InternalConsistency(format!(
            "closed-form J = {closed_form} but enumerated contiguous segment gives {brute}"
        )));
    }
    Ok(closed_form)
}

/// JSON geometry report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub kind: GeometryKind,
    pub params: GeometryParams,
    pub positions: Vec<i64>,
    pub dof: usize,
    pub contiguous_half_extent: usize,
    /// `(lag, multiplicity)` in ascending lag order.
    pub weight_table: Vec<(i64, usize)>,
    /// `None` for layouts without a closed-form virtual extent.
    pub virtual_half_extent: Option<usize>,
}

impl GeometryReport {
    pub fn new(layout: &SensorLayout) -> Result<Self> {
        let profile = difference_coarray(layout);
        let virtual_half_extent = match virtual_half_extent(layout) {
            Ok(j) => Some(j),
            Err(Error::UnsupportedKind(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(GeometryReport {
            kind: layout.kind(),
            params: layout.params().clone(),
            positions: layout.positions().to_vec(),
            dof: profile.dof,
            contiguous_half_extent: profile.contiguous_half_extent,
            weight_table: profile.weight.into_iter().collect(),
            virtual_half_extent,
        })
    }
}
