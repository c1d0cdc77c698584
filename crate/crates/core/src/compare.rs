//! Paired comparison of sweep results on a common SNR grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{paired_difference, SweepPoint, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Asr,
    BerMmse,
    BerOsic,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Asr, Metric::BerMmse, Metric::BerOsic];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Asr => "asr",
            Metric::BerMmse => "ber_mmse",
            Metric::BerOsic => "ber_osic",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Asr)
    }

    pub fn samples(self, p: &SweepPoint) -> &[f64] {
        match self {
            Metric::Asr => &p.samples.asr,
            Metric::BerMmse => &p.samples.ber_mmse,
            Metric::BerOsic => &p.samples.ber_osic,
        }
    }

    pub fn mean(self, p: &SweepPoint) -> f64 {
        match self {
            Metric::Asr => p.asr_mean,
            Metric::BerMmse => p.ber_mmse_mean,
            Metric::BerOsic => p.ber_osic_mean,
        }
    }
}

/// `first` minus `second` at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub snr_db: f64,
    pub first: f64,
    pub second: f64,
    pub delta: f64,
    /// Standard error of the per-trial difference; `None` when the results
    /// are not paired (different seeds or trial counts).
    pub delta_se: Option<f64>,
}

impl PairedRow {
    /// `first` is at least as good as `second`.
    pub fn first_no_worse(&self, metric: Metric) -> bool {
        if metric.higher_is_better() {
            self.delta >= 0.0
        } else {
            self.delta <= 0.0
        }
    }

    /// `first` is better by more than `k` paired standard errors.
    pub fn first_better_by(&self, metric: Metric, k: f64) -> bool {
        let se = self.delta_se.unwrap_or(f64::INFINITY);
        if metric.higher_is_better() {
            self.delta > k * se
        } else {
            -self.delta > k * se
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub first: String,
    pub second: String,
    pub metric: Metric,
    pub rows: Vec<PairedRow>,
}

impl PairedComparison {
    pub fn dominates(&self) -> bool {
        self.rows.iter().all(|r| r.first_no_worse(self.metric))
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{} vs {} ({}, {} better)\n{:>8} {:>14} {:>14} {:>14} {:>12}\n",
            self.first,
            self.second,
            self.metric.name(),
            if self.metric.higher_is_better() { "higher" } else { "lower" },
            "snr_db",
            "first",
            "second",
            "delta",
            "delta_se"
        );
        for r in &self.rows {
            let se = r.delta_se.map_or("-".to_string(), |s| format!("{s:.4e}"));
            let _ = writeln!(out, "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>12}", r.snr_db, r.first, r.second, r.delta, se);
        }
        let _ = writeln!(out, "dominates at all points: {}", if self.dominates() { "yes" } else { "no" });
        out
    }
}

fn same_grid(a: &SweepResult, b: &SweepResult) -> bool {
    a.points.len() == b.points.len() && a.points.iter().zip(&b.points).all(|(x, y)| x.snr_db == y.snr_db)
}

pub fn compare_pair(first: &SweepResult, second: &SweepResult, metric: Metric) -> Result<PairedComparison> {
    if !same_grid(first, second) {
        return Err(Error::InvalidParameter(format!(
            "SNR grids differ: {:?} vs {:?}",
            first.snr_grid(),
            second.snr_grid()
        )));
    }
    let paired = first.seed == second.seed && first.config.trials == second.config.trials;
    let rows = first
        .points
        .iter()
        .zip(&second.points)
        .map(|(a, b)| {
            let (fa, fb) = (metric.mean(a), metric.mean(b));
            let delta_se = if paired {
                paired_difference(metric.samples(a), metric.samples(b)).ok().map(|(_, se)| se)
            } else {
                None
            };
            PairedRow {
                snr_db: a.snr_db,
                first: fa,
                second: fb,
                delta: fa - fb,
                delta_se,
            }
        })
        .collect();
    Ok(PairedComparison {
        first: first.label(),
        second: second.label(),
        metric,
        rows,
    })
}

/// An ordering claim: `better` beats `worse` on `metric` at every point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub better: String,
    pub worse: String,
    pub metric: Metric,
    /// Required margin in paired standard errors (0: plain ordering).
    #[serde(default)]
    pub min_standard_errors: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationFile {
    pub expect: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationOutcome {
    pub expectation: Expectation,
    pub comparison: PairedComparison,
    pub violations: Vec<f64>,
}

impl ExpectationOutcome {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_expectation(results: &[SweepResult], e: &Expectation) -> Result<ExpectationOutcome> {
    let find = |label: &str| {
        results
            .iter()
            .find(|r| r.label() == label)
            .ok_or_else(|| Error::InvalidParameter(format!("no result for array {label:?}")))
    };
    let comparison = compare_pair(find(&e.better)?, find(&e.worse)?, e.metric)?;
    let violations = comparison
        .rows
        .iter()
        .filter(|r| {
            if e.min_standard_errors > 0.0 {
                !r.first_better_by(e.metric, e.min_standard_errors)
            } else {
                !r.first_no_worse(e.metric)
            }
        })
        .map(|r| r.snr_db)
        .collect();
    Ok(ExpectationOutcome {
        expectation: e.clone(),
        comparison,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_sweep_with_threads, SimConfig};

    fn result(g: &str) -> SweepResult {
        let mut c = SimConfig::new(g.parse().unwrap(), 3, vec![0.0, 10.0], 5);
        c.trials = 6;
        c.snapshots = 20;
        run_sweep_with_threads::<f64>(&c, Some(2)).unwrap()
    }

    #[test]
    fn identical_results_have_zero_deltas() {
        let r = result("tlna:2,2");
        for m in Metric::ALL {
            let c = compare_pair(&r, &r, m).unwrap();
            assert!(c.rows.iter().all(|row| row.delta == 0.0 && row.delta_se == Some(0.0)));
            assert!(c.dominates());
            assert!(c.table().ends_with("dominates at all points: yes\n"));
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = result("tlna:2,2");
        let mut b = a.clone();
        b.points.pop();
        assert!(compare_pair(&a, &b, Metric::Asr).is_err());
    }

    #[test]
    fn expectations() {
        let a = result("tlna:4,4");
        let b = result("ula:3");
        let rs = vec![a, b];
        let e = Expectation {
            better: "tlna:4,4".into(),
            worse: "ula:3".into(),
            metric: Metric::Asr,
            min_standard_errors: 0.0,
        };
        assert!(check_expectation(&rs, &e).unwrap().holds());
        let rev = Expectation {
            better: "ula:3".into(),
            worse: "tlna:4,4".into(),
            ..e.clone()
        };
        let out = check_expectation(&rs, &rev).unwrap();
        assert_eq!(out.violations, vec![0.0, 10.0]);
        let missing = Expectation {
            better: "cpa:5,2".into(),
            ..e
        };
        assert!(check_expectation(&rs, &missing).is_err());
    }
}
