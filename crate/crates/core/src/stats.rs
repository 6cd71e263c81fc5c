//! Reconstruction metrics and the nonparametric statistical battery:
//! Kruskal–Wallis omnibus, Wilcoxon signed-rank, Fisher's ratio, and AUROC.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::features::{iskna_values, IntegratorConfig};
use crate::signal::{Condition, SampledSignal};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("signals differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("signals differ in sampling rate ({a} Hz vs {b} Hz)")]
    RateMismatch { a: f64, b: f64 },
    #[error("correlation undefined: {0} input has zero variance")]
    UndefinedCorrelation(&'static str),
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least 5 non-zero paired differences, got {0}")]
    InsufficientPairs(usize),
    #[error("input must be non-empty")]
    EmptyInput,
    #[error("both groups have zero variance; ratio undefined")]
    DegenerateVariance,
    #[error("all values must be finite")]
    NonFinite,
    #[error("need at least 2 values for a confidence interval")]
    TooFewValues,
}

/// Reported SNR ceiling for perfect reconstructions.
pub const SNR_CAP_DB: f64 = 99.0;

/// Clamps an SNR (possibly the +inf sentinel) to the reporting ceiling.
pub fn capped_snr(snr_db: f64) -> f64 {
    snr_db.min(SNR_CAP_DB)
}

/// Agreement metrics between a candidate trace and its clean reference
/// over one subset of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    /// Zero-lag Pearson correlation of the raw traces.
    pub corr: f64,
    /// Pearson correlation of the integrated (iSKNA) traces.
    pub corr_iskna: f64,
    pub mse: f64,
    pub mae: f64,
    /// `10*log10(sum clean^2 / sum err^2)`; +inf when the error is zero.
    pub snr_db: f64,
    pub n: usize,
}

/// Metric blocks over all samples and per condition (when present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconMetrics {
    pub overall: MetricBlock,
    pub baseline: Option<MetricBlock>,
    pub stimulation: Option<MetricBlock>,
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut cov = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cov += (x - ma) * (y - mb);
    }
    if va == 0.0 {
        return Err(StatsError::UndefinedCorrelation("first"));
    }
    if vb == 0.0 {
        return Err(StatsError::UndefinedCorrelation("second"));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

fn block(
    cand: &[f64],
    clean: &[f64],
    cand_int: &[f64],
    clean_int: &[f64],
    idx: &[usize],
) -> Result<MetricBlock, StatsError> {
    let take = |src: &[f64]| -> Vec<f64> { idx.iter().map(|&i| src[i]).collect() };
    let c = take(cand);
    let r = take(clean);
    let ci = take(cand_int);
    let ri = take(clean_int);
    let n = idx.len();
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut pr = 0.0;
    for (&x, &y) in c.iter().zip(&r) {
        let e = x - y;
        se += e * e;
        ae += e.abs();
        pr += y * y;
    }
    let snr_db = if se == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (pr / se).log10()
    };
    Ok(MetricBlock {
        corr: pearson(&c, &r)?,
        corr_iskna: pearson(&ci, &ri)?,
        mse: se / n as f64,
        mae: ae / n as f64,
        snr_db,
        n,
    })
}

/// Compares a candidate signal against the clean reference: Pearson
/// correlation (raw and integrated), MSE, MAE, and SNR, over all samples
/// and within each labeled condition of the reference.
pub fn recon_metrics(
    candidate: &SampledSignal,
    clean: &SampledSignal,
    tau_s: f64,
) -> Result<ReconMetrics, StatsError> {
    if candidate.len() != clean.len() {
        return Err(StatsError::LengthMismatch {
            a: candidate.len(),
            b: clean.len(),
        });
    }
    if candidate.fs != clean.fs {
        return Err(StatsError::RateMismatch {
            a: candidate.fs,
            b: clean.fs,
        });
    }
    let cfg = IntegratorConfig { fs: clean.fs, tau_s };
    let cand_int = iskna_values(&candidate.samples, cfg);
    let clean_int = iskna_values(&clean.samples, cfg);
    let all: Vec<usize> = (0..clean.len()).collect();
    let cond_idx = |cond: Condition| -> Vec<usize> {
        clean
            .periods
            .iter()
            .filter(|p| p.condition == cond)
            .flat_map(|p| p.start..p.end)
            .collect()
    };
    let overall = block(
        &candidate.samples,
        &clean.samples,
        &cand_int,
        &clean_int,
        &all,
    )?;
    let per = |cond: Condition| -> Result<Option<MetricBlock>, StatsError> {
        let idx = cond_idx(cond);
        if idx.is_empty() {
            Ok(None)
        } else {
            block(
                &candidate.samples,
                &clean.samples,
                &cand_int,
                &clean_int,
                &idx,
            )
            .map(Some)
        }
    };
    Ok(ReconMetrics {
        overall,
        baseline: per(Condition::Baseline)?,
        stimulation: per(Condition::Stimulation)?,
    })
}

/// Significance stars: `p <= 0.001 -> ***`, `<= 0.01 -> **`,
/// `<= 0.05 -> *`, otherwise `n.s.`.
pub fn stars_for(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        "n.s."
    }
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size (pairs or pooled observations).
    pub n: usize,
    /// Set when the data admit no test (e.g. all paired differences zero).
    pub degenerate: bool,
}

impl TestResult {
    pub fn stars(&self) -> &'static str {
        stars_for(self.p_value)
    }
}

/// 1-based midranks of `values` plus the size of every tie group.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Survival function of the chi-squared distribution.
fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(df / 2.0, x / 2.0)
    }
}

/// Two-sided tail of the standard normal: `2*P(Z >= |z|)`.
fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Kruskal–Wallis rank test across `groups`, with tie correction and a
/// chi-squared p-value on k-1 degrees of freedom. When every pooled value
/// is identical the statistic is 0 and p is 1.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(StatsError::EmptyGroup(i));
        }
        check_finite(g)?;
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len();
    let (ranks, ties) = midranks(&pooled);
    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r * r / g.len() as f64;
        offset += g.len();
    }
    let nf = n as f64;
    h = 12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0);
    let tie_sum: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let correction = 1.0 - tie_sum / (nf * nf * nf - nf);
    let (h, degenerate) = if correction == 0.0 {
        (0.0, true)
    } else {
        (h / correction, false)
    };
    let df = (groups.len() - 1) as f64;
    Ok(TestResult {
        method: "kruskal-wallis".into(),
        statistic: h,
        p_value: chi2_sf(h, df),
        n,
        degenerate,
    })
}

/// Exact two-sided signed-rank p-value by dynamic programming over the
/// doubled midranks (integers even when ties produce half-ranks).
fn signed_rank_exact(doubled_ranks: &[u64], doubled_w_plus: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut dp = vec![0.0f64; total as usize + 1];
    dp[0] = 1.0;
    let mut reach = 0usize;
    for &d in doubled_ranks {
        let d = d as usize;
        reach += d;
        for s in (0..=reach.saturating_sub(d)).rev() {
            if dp[s] > 0.0 {
                dp[s + d] += dp[s];
            }
        }
    }
    let denom = 2f64.powi(doubled_ranks.len() as i32);
    let w = doubled_w_plus as usize;
    let p_le: f64 = dp[..=w.min(total as usize)].iter().sum::<f64>() / denom;
    let p_ge: f64 = dp[w.min(total as usize)..].iter().sum::<f64>() / denom;
    (2.0 * p_le.min(p_ge)).min(1.0)
}

/// Maximum pair count handled by exact enumeration; the normal
/// approximation with continuity and tie corrections is used above it.
pub const WILCOXON_EXACT_LIMIT: usize = 25;

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero
/// differences are dropped; when all differences are zero the result is
/// degenerate with p = 1.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    check_finite(x)?;
    check_finite(y)?;
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        if x.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        return Ok(TestResult {
            method: "wilcoxon-signed-rank".into(),
            statistic: 0.0,
            p_value: 1.0,
            n: 0,
            degenerate: true,
        });
    }
    let n = diffs.len();
    if n < 5 {
        return Err(StatsError::InsufficientPairs(n));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let p_value = if n <= WILCOXON_EXACT_LIMIT {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        signed_rank_exact(&doubled, (2.0 * w_plus).round() as u64)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_sum: f64 = ties
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum / 48.0;
        let mut d = w_plus - mean;
        d -= 0.5 * d.signum();
        normal_two_sided(d / var.sqrt()).min(1.0)
    };
    Ok(TestResult {
        method: "wilcoxon-signed-rank".into(),
        statistic: w_plus,
        p_value,
        n,
        degenerate: false,
    })
}

/// Fisher's discriminant ratio `(mean_a - mean_b)^2 / (var_a + var_b)`
/// with n-1 sample variances (singleton groups contribute zero variance).
pub fn fishers_ratio(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(a)?;
    check_finite(b)?;
    let stats = |v: &[f64]| -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() < 2 {
            0.0
        } else {
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        };
        (mean, var)
    };
    let (ma, va) = stats(a);
    let (mb, vb) = stats(b);
    if va + vb == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((ma - mb) * (ma - mb) / (va + vb))
}

/// Area under the ROC curve via the rank (Mann–Whitney) formulation:
/// `U / (n_pos * n_neg)` with ties counted as half.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64, StatsError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(pos)?;
    check_finite(neg)?;
    let pooled: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let r_pos: f64 = ranks[..pos.len()].iter().sum();
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let u = r_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Mean, sample standard deviation, and the half-width of a t-based 95%
/// confidence interval for the mean.
pub fn mean_ci95(values: &[f64]) -> Result<(f64, f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewValues);
    }
    check_finite(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("valid dof")
        .inverse_cdf(0.975);
    Ok((mean, sd, t * sd / n.sqrt()))
}
