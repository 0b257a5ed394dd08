use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero variance: statistic undefined")]
    ZeroVariance,
    #[error("non-finite observation")]
    NonFinite,
    #[error("level {level} out of range for {levels} levels")]
    Level { level: usize, levels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: String,
    pub estimate: f64,
    pub p_value: Option<f64>,
    pub n: usize,
    pub df: Option<f64>,
}

fn check(x: &[f64], needed: usize) -> Result<(), StatError> {
    if x.len() < needed {
        return Err(StatError::TooShort { needed, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatError::NonFinite);
    }
    Ok(())
}

fn check_pair(x: &[f64], y: &[f64], needed: usize) -> Result<(), StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    check(x, needed)?;
    check(y, needed)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Ranks starting at 1; ties share their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn two_sided_t(t: f64, df: f64) -> Option<f64> {
    if !df.is_finite() || df <= 0.0 {
        return None;
    }
    if t.is_infinite() {
        return Some(0.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

fn correlation(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn correlation_result(name: &str, r: f64, n: usize) -> StatResult {
    let df = n as f64 - 2.0;
    let p = if df > 0.0 {
        if r.abs() >= 1.0 {
            Some(0.0)
        } else {
            two_sided_t(r * (df / (1.0 - r * r)).sqrt(), df)
        }
    } else {
        None
    };
    StatResult { statistic: name.to_string(), estimate: r, p_value: p, n, df: (df > 0.0).then_some(df) }
}

/// Pearson product-moment correlation with a t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<StatResult, StatError> {
    check_pair(x, y, 2)?;
    Ok(correlation_result("pearson_r", correlation(x, y)?, x.len()))
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<StatResult, StatError> {
    check_pair(x, y, 2)?;
    Ok(correlation_result("spearman_rho", correlation(&ranks(x), &ranks(y))?, x.len()))
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    check_pair(x, y, 1)?;
    Ok((x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64).sqrt())
}

/// Welch's unequal-variance t-test, x minus y.
pub fn welch_t(x: &[f64], y: &[f64]) -> Result<StatResult, StatError> {
    check(x, 2)?;
    check(y, 2)?;
    let (vx, vy) = (sample_variance(x) / x.len() as f64, sample_variance(y) / y.len() as f64);
    let se2 = vx + vy;
    if se2 == 0.0 {
        return Err(StatError::ZeroVariance);
    }
    let t = (mean(x) - mean(y)) / se2.sqrt();
    let df = se2 * se2 / (vx * vx / (x.len() as f64 - 1.0) + vy * vy / (y.len() as f64 - 1.0));
    Ok(StatResult {
        statistic: "welch_t".to_string(),
        estimate: t,
        p_value: two_sided_t(t, df),
        n: x.len() + y.len(),
        df: Some(df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsResult {
    pub slope: f64,
    pub intercept: f64,
    pub beta_standardized: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Least-squares fit of `y = intercept + slope * x`.
pub fn ols_simple(x: &[f64], y: &[f64]) -> Result<OlsResult, StatError> {
    check_pair(x, y, 2)?;
    let r = correlation(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    Ok(OlsResult { slope, intercept: my - slope * mx, beta_standardized: r, r_squared: r * r, n: x.len() })
}

/// Row-stochastic matrix of level transitions; rows with no observations are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub rows: Vec<Option<Vec<f64>>>,
    pub counts: Vec<Vec<u64>>,
}

/// Each unit's series is split at `split`; position `t` of the first phase is
/// paired with position `t` of the second. Entry `(i, j)` estimates
/// P(level j in phase 2 | level i in phase 1).
pub fn transition_matrix(series: &[Vec<usize>], levels: usize, split: usize) -> Result<TransitionMatrix, StatError> {
    let mut counts = vec![vec![0u64; levels]; levels];
    for s in series {
        if s.len() < 2 {
            return Err(StatError::TooShort { needed: 2, got: s.len() });
        }
        if split == 0 || split >= s.len() {
            return Err(StatError::TooShort { needed: split + 1, got: s.len() });
        }
        for t in 0..split.min(s.len() - split) {
            let (a, b) = (s[t], s[t + split]);
            if a >= levels || b >= levels {
                return Err(StatError::Level { level: a.max(b), levels });
            }
            counts[a][b] += 1;
        }
    }
    let rows = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect();
    Ok(TransitionMatrix { rows, counts })
}
