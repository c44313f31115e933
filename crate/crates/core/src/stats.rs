//! Empirical distributions of conflict variables and two-sample comparison.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::metrics::ConflictRecord;

/// Largest per-sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 8;

pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    Dcp,
    Tcp,
    DcpInv,
    TcpInv,
    Vsdv,
    Vtv,
}

impl Variable {
    pub const ALL: [Variable; 6] =
        [Variable::Dcp, Variable::Tcp, Variable::DcpInv, Variable::TcpInv, Variable::Vsdv, Variable::Vtv];

    pub fn code(self) -> &'static str {
        match self {
            Variable::Dcp => "d_cp",
            Variable::Tcp => "t_cp",
            Variable::DcpInv => "d_cp_inv",
            Variable::TcpInv => "t_cp_inv",
            Variable::Vsdv => "v_sdv",
            Variable::Vtv => "v_tv",
        }
    }

    fn is_reciprocal(self) -> bool {
        matches!(self, Variable::DcpInv | Variable::TcpInv)
    }

    fn raw(self, r: &ConflictRecord) -> f64 {
        match self {
            Variable::Dcp | Variable::DcpInv => r.d_cp,
            Variable::Tcp | Variable::TcpInv => r.t_cp,
            Variable::Vsdv => r.v_sdv,
            Variable::Vtv => r.v_tv,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variable::ALL
            .into_iter()
            .find(|v| v.code() == key)
            .ok_or_else(|| Error::Config(format!("unknown variable `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub label: String,
    pub samples: Vec<f64>,
    /// Records dropped because a reciprocal was undefined.
    pub excluded: usize,
}

impl EmpiricalDistribution {
    pub fn new(label: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(EmpiricalDistribution { label: label.into(), samples, excluded: 0 })
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    /// Sample standard deviation (n - 1 denominator; 0 for one sample).
    pub fn std_dev(&self) -> f64 {
        std_dev(&self.samples)
    }

    /// Empirical CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.iter().filter(|&&v| v <= x).count() as f64 / self.samples.len() as f64
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Extracts `variable` from each record. Zero or negative values under a
/// reciprocal variable are excluded and counted.
pub fn build_distribution(
    records: &[ConflictRecord],
    variable: Variable,
    label: impl Into<String>,
) -> Result<EmpiricalDistribution> {
    let mut samples = Vec::with_capacity(records.len());
    let mut excluded = 0;
    for r in records {
        let v = variable.raw(r);
        if variable.is_reciprocal() {
            if v > 0.0 && (1.0 / v).is_finite() {
                samples.push(1.0 / v);
            } else {
                excluded += 1;
            }
        } else if v.is_finite() {
            samples.push(v);
        } else {
            excluded += 1;
        }
    }
    let mut d = EmpiricalDistribution::new(label, samples)?;
    d.excluded = excluded;
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over the sample range. The maximum falls in the
/// last bin; a zero-width range puts everything in the first.
pub fn histogram(samples: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() {
        return Histogram { edges: vec![0.0; bins + 1], counts: vec![0; bins] };
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| if k == bins { hi } else { lo + width * k as f64 }).collect();
    let mut counts = vec![0; bins];
    for &v in samples {
        let k = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub n: usize,
    pub excluded: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

pub fn summarize(dist: &EmpiricalDistribution, bins: usize) -> Summary {
    let s = &dist.samples;
    Summary {
        label: dist.label.clone(),
        n: s.len(),
        excluded: dist.excluded,
        mean: dist.mean(),
        std: dist.std_dev(),
        min: s.iter().copied().fold(f64::INFINITY, f64::min),
        max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        histogram: histogram(s, bins),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MwwMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwwResult {
    /// Number of (a, b) pairs with `a > b`, ties counting one half.
    pub u_statistic: f64,
    /// Continuity- and tie-corrected standard score of `u_statistic`.
    pub z_score: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: MwwMethod,
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

struct RankSummary {
    u: f64,
    n1: usize,
    n2: usize,
    ties: Vec<usize>,
}

fn rank_summary(a: &[f64], b: &[f64]) -> RankSummary {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let n1 = a.len();
    let r1: f64 = ranks[..n1].iter().sum();
    RankSummary { u: r1 - (n1 * (n1 + 1)) as f64 / 2.0, n1, n2: b.len(), ties }
}

fn corrected_z(rs: &RankSummary) -> (f64, f64) {
    let (n1, n2) = (rs.n1 as f64, rs.n2 as f64);
    let n = n1 + n2;
    let tie_term: f64 = rs.ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = if n > 1.0 { n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0))) } else { 0.0 };
    let dev = (rs.u - n1 * n2 / 2.0).abs();
    if var <= 0.0 {
        return (0.0, 1.0);
    }
    let z = (dev - 0.5).max(0.0) / var.sqrt();
    let p = 2.0 * Normal::standard().sf(z);
    let signed = if rs.u < n1 * n2 / 2.0 { -z } else { z };
    (signed, p.clamp(0.0, 1.0))
}

/// Number of rank arrangements giving each value of U, for sample sizes
/// `(m, n)` without ties. Index is U in `0..=m*n`.
pub fn u_null_counts(m: usize, n: usize) -> Vec<u64> {
    // f[i][j] is the count vector for sizes (i, j); the largest pooled value
    // either belongs to the first sample (adding j to U) or to the second.
    let mut f: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); n + 1]; m + 1];
    for i in 0..=m {
        for j in 0..=n {
            let mut counts = vec![0u64; i * j + 1];
            if i == 0 || j == 0 {
                counts[0] = 1;
            } else {
                for (u, &c) in f[i - 1][j].iter().enumerate() {
                    counts[u + j] += c;
                }
                for (u, &c) in f[i][j - 1].iter().enumerate() {
                    counts[u] += c;
                }
            }
            f[i][j] = counts;
        }
    }
    std::mem::take(&mut f[m][n])
}

/// Exact two-sided test. Requires tie-free samples.
pub fn mww_exact(a: &[f64], b: &[f64]) -> Result<MwwResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let rs = rank_summary(a, b);
    if !rs.ties.is_empty() {
        return Err(Error::InvalidInput("exact test requires tie-free samples".into()));
    }
    let counts = u_null_counts(rs.n1, rs.n2);
    let total: u64 = counts.iter().sum();
    let u = rs.u.round() as usize;
    let lower: u64 = counts[..=u].iter().sum();
    let upper: u64 = counts[u..].iter().sum();
    let p = (2.0 * lower.min(upper) as f64 / total as f64).min(1.0);
    let (z, _) = corrected_z(&rs);
    Ok(MwwResult { u_statistic: rs.u, z_score: z, p_value: p, method: MwwMethod::Exact })
}

/// Normal approximation with tie-corrected variance and continuity
/// correction.
pub fn mww_normal(a: &[f64], b: &[f64]) -> Result<MwwResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let rs = rank_summary(a, b);
    let (z, p) = corrected_z(&rs);
    Ok(MwwResult { u_statistic: rs.u, z_score: z, p_value: p, method: MwwMethod::NormalApprox })
}

/// Mann-Whitney-Wilcoxon rank-sum test of `a` against `b`: exact for small
/// tie-free samples, normal approximation otherwise.
pub fn mww_samples(a: &[f64], b: &[f64]) -> Result<MwwResult> {
    let rs_ties = {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        !midranks(&pooled).1.is_empty()
    };
    if a.len() <= EXACT_MAX_N && b.len() <= EXACT_MAX_N && !rs_ties {
        mww_exact(a, b)
    } else {
        mww_normal(a, b)
    }
}

pub fn mww_test(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<MwwResult> {
    mww_samples(&a.samples, &b.samples)
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
