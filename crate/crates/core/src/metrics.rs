//! MCMC and predictive diagnostics.

use crate::error::{Error, Result};
use crate::kernels::covariance_to_correlation;
use crate::linalg::Matrix;

/// Minimum chain length accepted by [`ess`].
pub const MIN_ESS_DRAWS: usize = 10;
/// Above this many draws CRPS uses the shifted-pair estimator.
pub const CRPS_EXACT_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// The sequence had zero variance; `value` is the draw count.
    pub constant: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Effective sample size by Geyer's initial monotone positive sequence,
/// capped at the draw count.
pub fn ess(draws: &[f64]) -> Result<Ess> {
    let n = draws.len();
    if n < MIN_ESS_DRAWS {
        return Err(Error::TooFewDraws { need: MIN_ESS_DRAWS, got: n });
    }
    if draws.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("draws".into()));
    }
    if draws.iter().all(|&x| x == draws[0]) {
        return Ok(Ess { value: n as f64, constant: true });
    }
    let m = mean(draws);
    let c: Vec<f64> = draws.iter().map(|x| x - m).collect();
    let acov = |t: usize| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = acov(0);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = acov(t) + acov(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * sum / g0).max(1.0 / n as f64);
    Ok(Ess { value: (n as f64 / tau).min(n as f64), constant: false })
}

/// Sample CRPS: `mean|Y − y| − ½ mean|Y − Y′|` over all ordered pairs, or
/// over pairs shifted by one above [`CRPS_EXACT_LIMIT`] draws.
pub fn crps_from_samples(draws: &[f64], y: f64) -> Result<f64> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::TooFewDraws { need: 2, got: n });
    }
    let first = draws.iter().map(|d| (d - y).abs()).sum::<f64>() / n as f64;
    let spread = if n <= CRPS_EXACT_LIMIT {
        // Σ_{i,j} |Y_i − Y_j| = 2 Σ_i (2i − n − 1) Y_(i) over sorted draws
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        let total: f64 = s.iter().enumerate().map(|(i, &v)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * v).sum();
        2.0 * total / (n * n) as f64
    } else {
        (0..n).map(|i| (draws[i] - draws[(i + 1) % n]).abs()).sum::<f64>() / n as f64
    };
    Ok(first - 0.5 * spread)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interval {
    /// `[q_{(1−L)/2}, q_{(1+L)/2}]`.
    Central,
    /// `(−∞, q_L]`.
    Upper,
    /// `[q_{1−L}, ∞)`.
    Lower,
}

/// Fraction of points whose interval at each level contains the truth.
/// `draws[i]` are the predictive draws for point `i`. Returns `None` for an
/// empty test set.
pub fn coverage(draws: &[Vec<f64>], truth: &[f64], levels: &[f64], kind: Interval) -> Result<Option<Vec<f64>>> {
    if draws.len() != truth.len() {
        return Err(Error::Invalid(format!("{} draw sets for {} truths", draws.len(), truth.len())));
    }
    if let Some(l) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Invalid(format!("coverage level {l} outside (0, 1)")));
    }
    if truth.is_empty() {
        return Ok(None);
    }
    let sorted: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| {
            let mut s = d.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    if sorted.iter().any(Vec::is_empty) {
        return Err(Error::Empty("predictive draws"));
    }
    let rates = levels
        .iter()
        .map(|&l| {
            let hits = sorted
                .iter()
                .zip(truth)
                .filter(|(s, &t)| match kind {
                    Interval::Central => quantile(s, 0.5 * (1.0 - l)) <= t && t <= quantile(s, 0.5 * (1.0 + l)),
                    Interval::Upper => t <= quantile(s, l),
                    Interval::Lower => t >= quantile(s, 1.0 - l),
                })
                .count();
            hits as f64 / truth.len() as f64
        })
        .collect();
    Ok(Some(rates))
}

/// Root mean square prediction error; `None` when empty.
pub fn rmspe(pred: &[f64], truth: &[f64]) -> Option<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return None;
    }
    Some((pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64).sqrt())
}

/// Mean absolute error in prediction; `None` when empty.
pub fn maep(pred: &[f64], truth: &[f64]) -> Option<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return None;
    }
    Some(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn align_signs(lambda: &Matrix<f64>) -> Matrix<f64> {
    let mut out = lambda.clone();
    for h in 0..lambda.cols() {
        let col = lambda.column(h);
        let big = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if big < 0.0 {
            for j in 0..lambda.rows() {
                out[(j, h)] = -out[(j, h)];
            }
        }
    }
    out
}

/// Posterior mean of the latent cross-correlation `corr(ΛΛᵀ)`.
pub fn omega_corr(lambda_draws: &[Matrix<f64>]) -> Result<Matrix<f64>> {
    let first = lambda_draws.first().ok_or(Error::Empty("loading draws"))?;
    let q = first.rows();
    let mut acc = Matrix::zeros(q, q);
    for l in lambda_draws {
        let a = align_signs(l);
        let c = covariance_to_correlation(&a.matmul(&a.transpose()));
        acc.add_assign_matrix(&c);
    }
    acc.scale(1.0 / lambda_draws.len() as f64);
    for j in 0..q {
        acc[(j, j)] = 1.0;
    }
    Ok(acc)
}

/// Rank-based area under the ROC curve, ties at mid-rank. `None` unless
/// both classes are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let pos_rank: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Some((pos_rank - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Summary of a fit. Optional entries are absent when the inputs they need
/// were not supplied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsReport {
    /// `(name, ESS, ESS per second of sampling)`.
    pub ess: Vec<(String, f64, f64)>,
    /// Per outcome, on held-out entries: errors of the posterior mean of η.
    pub rmspe_eta: Vec<Option<f64>>,
    pub maep_eta: Vec<Option<f64>>,
    /// Per outcome, on held-out entries: posterior predictive errors of y.
    pub rmspe_y: Vec<Option<f64>>,
    pub maep_y: Vec<Option<f64>>,
    pub crps_y: Vec<Option<f64>>,
    /// Per outcome; binary outcomes only.
    pub auc: Vec<Option<f64>>,
    /// `(level, rate)` for central intervals of η over all held-out entries.
    pub coverage: Option<Vec<(f64, f64)>>,
    pub omega_corr: Option<Matrix<f64>>,
    pub omega_frobenius: Option<f64>,
}
