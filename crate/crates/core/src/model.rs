//! Stochastic model of conflict parameters for scenario generation.
//!
//! Two sampling modes are offered. `JointResample` draws whole
//! `(t_cp, v_sdv, v_tv)` triples from the fitted records and keeps their
//! dependence. `IndependentKde` smooths each marginal with a Gaussian kernel
//! and draws the variables independently, which ignores any correlation
//! between them. Distance to the conflict point is always derived as
//! `t_cp * v_sdv`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ConflictRecord;
use crate::parallel::{self, derive_seed, Parallelism};
use crate::stats::std_dev;

/// Cap on rejected (non-positive) kernel draws before giving up on a sample.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    JointResample,
    IndependentKde,
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "joint" | "resample" | "jointresample" | "joint_resample" => Ok(SamplingMode::JointResample),
            "kde" | "independentkde" | "independent_kde" => Ok(SamplingMode::IndependentKde),
            other => Err(Error::Config(format!("unknown model mode `{other}`"))),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::JointResample => "joint",
            SamplingMode::IndependentKde => "kde",
        })
    }
}

/// Per-variable kernel bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub t_cp: f64,
    pub v_sdv: f64,
    pub v_tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioModel {
    pub mode: SamplingMode,
    pub t_cp: Vec<f64>,
    pub v_sdv: Vec<f64>,
    pub v_tv: Vec<f64>,
    pub bandwidths: Option<Bandwidths>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub t_cp: f64,
    pub v_sdv: f64,
    pub v_tv: f64,
    pub d_cp: f64,
    /// Seed that regenerates exactly this sample.
    pub seed: u64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// Falls back to whichever spread measure is non-zero, and to a small
/// scale-relative width when the sample is constant.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let sd = std_dev(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = if sorted.is_empty() {
        0.0
    } else {
        quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
    };
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        return h;
    }
    let scale = sorted.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        1e-3 * scale
    } else {
        1e-6
    }
}

pub fn fit_model(records: &[ConflictRecord], mode: SamplingMode) -> Result<ScenarioModel> {
    if records.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: records.len() });
    }
    let ok = records
        .iter()
        .all(|r| [r.t_cp, r.v_sdv, r.v_tv].iter().all(|v| v.is_finite() && *v >= 0.0));
    if !ok {
        return Err(Error::InvalidInput("records must have finite, non-negative t_cp, v_sdv, v_tv".into()));
    }
    let t_cp: Vec<f64> = records.iter().map(|r| r.t_cp).collect();
    let v_sdv: Vec<f64> = records.iter().map(|r| r.v_sdv).collect();
    let v_tv: Vec<f64> = records.iter().map(|r| r.v_tv).collect();
    let bandwidths = match mode {
        SamplingMode::JointResample => None,
        SamplingMode::IndependentKde => Some(Bandwidths {
            t_cp: silverman_bandwidth(&t_cp),
            v_sdv: silverman_bandwidth(&v_sdv),
            v_tv: silverman_bandwidth(&v_tv),
        }),
    };
    Ok(ScenarioModel { mode, t_cp, v_sdv, v_tv, bandwidths })
}

impl ScenarioModel {
    pub fn len(&self) -> usize {
        self.t_cp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_cp.is_empty()
    }

    /// Copy of the model with `delta` added to every `v_tv` source value.
    pub fn with_v_tv_shift(&self, delta: f64) -> ScenarioModel {
        ScenarioModel { v_tv: self.v_tv.iter().map(|v| v + delta).collect(), ..self.clone() }
    }

    fn draw_kernel(rng: &mut ChaCha8Rng, source: &[f64], h: f64) -> f64 {
        for _ in 0..MAX_REJECTIONS {
            let center = source[rng.random_range(0..source.len())];
            let z: f64 = StandardNormal.sample(rng);
            let v = center + h * z;
            if v > 0.0 {
                return v;
            }
        }
        // every kernel sits at or below zero; clamp to the smallest positive
        f64::MIN_POSITIVE
    }

    /// Draws the sample that `seed` identifies.
    pub fn sample_one(&self, seed: u64) -> ScenarioSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t_cp, v_sdv, v_tv) = match (self.mode, self.bandwidths) {
            (SamplingMode::IndependentKde, Some(bw)) => (
                Self::draw_kernel(&mut rng, &self.t_cp, bw.t_cp),
                Self::draw_kernel(&mut rng, &self.v_sdv, bw.v_sdv),
                Self::draw_kernel(&mut rng, &self.v_tv, bw.v_tv),
            ),
            _ => {
                let k = rng.random_range(0..self.len());
                (self.t_cp[k], self.v_sdv[k], self.v_tv[k])
            }
        };
        ScenarioSample { t_cp, v_sdv, v_tv, d_cp: t_cp * v_sdv, seed }
    }
}

/// Draws `n` scenarios. Sample `i` uses a seed derived from `(seed, i)`, so
/// the sequence does not depend on the degree of parallelism.
pub fn sample_scenarios(model: &ScenarioModel, n: usize, seed: u64, par: Parallelism) -> Result<Vec<ScenarioSample>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    if model.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: model.len() });
    }
    Ok(parallel::map_range(n, par, |i| model.sample_one(derive_seed(seed, i as u64))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t_cp: f64, v_sdv: f64, v_tv: f64) -> ConflictRecord {
        ConflictRecord {
            event_id: String::new(),
            trip_id: String::new(),
            t_x: 0.0,
            d_cp: t_cp * v_sdv,
            t_cp,
            v_sdv,
            v_tv,
            label: String::new(),
        }
    }

    #[test]
    fn joint_stores_triples_verbatim() {
        let recs = [rec(2.0, 15.0, 5.0), rec(3.0, 12.0, 4.0)];
        let m = fit_model(&recs, SamplingMode::JointResample).unwrap();
        assert_eq!(m.t_cp, vec![2.0, 3.0]);
        assert_eq!(m.v_sdv, vec![15.0, 12.0]);
        assert_eq!(m.v_tv, vec![5.0, 4.0]);
        for s in sample_scenarios(&m, 200, 9, Parallelism::Sequential).unwrap() {
            assert!([(2.0, 15.0, 5.0), (3.0, 12.0, 4.0)].contains(&(s.t_cp, s.v_sdv, s.v_tv)));
            assert_eq!(s.d_cp, s.t_cp * s.v_sdv);
        }
    }

    #[test]
    fn single_atom() {
        let recs = [rec(2.0, 15.0, 5.0), rec(2.0, 15.0, 5.0)];
        let m = fit_model(&recs, SamplingMode::JointResample).unwrap();
        let s = sample_scenarios(&m, 50, 1, Parallelism::Sequential).unwrap();
        assert!(s.iter().all(|x| (x.t_cp, x.v_sdv, x.v_tv, x.d_cp) == (2.0, 15.0, 5.0, 30.0)));
    }

    #[test]
    fn identical_records_kde_cluster() {
        let recs = vec![rec(2.0, 15.0, 5.0); 10];
        let m = fit_model(&recs, SamplingMode::IndependentKde).unwrap();
        let bw = m.bandwidths.unwrap();
        assert!(bw.t_cp > 0.0 && bw.v_sdv > 0.0 && bw.v_tv > 0.0);
        for s in sample_scenarios(&m, 500, 3, Parallelism::Sequential).unwrap() {
            assert!((s.t_cp - 2.0).abs() < 0.05);
            assert!((s.v_sdv - 15.0).abs() < 0.2);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_model(&[rec(1.0, 1.0, 1.0)], SamplingMode::JointResample),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
        let m = fit_model(&[rec(1.0, 1.0, 1.0), rec(2.0, 2.0, 2.0)], SamplingMode::JointResample).unwrap();
        assert!(sample_scenarios(&m, 0, 1, Parallelism::Sequential).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let recs: Vec<_> = (0..50).map(|k| rec(1.0 + k as f64 * 0.1, 10.0 + k as f64 * 0.2, 3.0 + k as f64 * 0.05)).collect();
        for mode in [SamplingMode::JointResample, SamplingMode::IndependentKde] {
            let m = fit_model(&recs, mode).unwrap();
            let a = sample_scenarios(&m, 300, 42, Parallelism::Sequential).unwrap();
            let b = sample_scenarios(&m, 300, 42, Parallelism::Threads(4)).unwrap();
            let c = sample_scenarios(&m, 300, 43, Parallelism::Sequential).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
            assert!(a.iter().all(|s| s.t_cp > 0.0 && s.v_sdv > 0.0 && s.v_tv > 0.0));
        }
    }

    #[test]
    fn kde_rejects_non_positive() {
        let recs: Vec<_> = (0..40).map(|k| rec(0.01 + 0.5 * (k % 2) as f64, 10.0, 0.02)).collect();
        let m = fit_model(&recs, SamplingMode::IndependentKde).unwrap();
        let s = sample_scenarios(&m, 2000, 5, Parallelism::Sequential).unwrap();
        assert!(s.iter().all(|x| x.t_cp > 0.0 && x.v_tv > 0.0));
    }

    #[test]
    fn silverman_reference_value() {
        // n = 5, sd = sqrt(2.5), IQR = 2 (linear interpolation)
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let expected = 0.9 * 2.5f64.sqrt().min(2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-12);
    }
}
