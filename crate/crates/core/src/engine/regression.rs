//! Per-outcome targets: regression coefficients with loadings, and the
//! nuisance parameter.

use crate::linalg::{Cholesky, Matrix};
use crate::outcomes::{fisher_eta, loglik, score_eta, Family};
use crate::samplers::Target;

/// Joint target of `(β_j, λ_[j,:])` given the latent factors.
///
/// The parameter vector is `β_j` (when free) followed by the free loadings
/// `λ_j0, …, λ_j(m−1)`; frozen parts are read from the current values.
pub struct RegressionTarget<'a> {
    pub family: Family,
    pub gamma: f64,
    /// Reference rows where outcome `j` is observed.
    pub rows: &'a [usize],
    pub j: usize,
    pub x: &'a Matrix<f64>,
    pub v: &'a Matrix<f64>,
    pub y: &'a Matrix<f64>,
    pub beta: &'a [f64],
    pub lambda: &'a [f64],
    pub free_beta: bool,
    /// Number of free loadings; zero when loadings are frozen.
    pub n_lambda: usize,
    pub beta_prec: f64,
    pub lambda_prec: f64,
}

impl RegressionTarget<'_> {
    fn p(&self) -> usize {
        if self.free_beta {
            self.x.cols()
        } else {
            0
        }
    }

    fn eta(&self, th: &[f64], r: usize) -> f64 {
        let p = self.p();
        let xr = self.x.row(r);
        let vr = self.v.row(r);
        let beta = if self.free_beta { &th[..p] } else { self.beta };
        let mut e: f64 = xr.iter().zip(beta).map(|(a, b)| a * b).sum();
        for (h, &vh) in vr.iter().enumerate() {
            let l = if h < self.n_lambda { th[p + h] } else { self.lambda[h] };
            e += l * vh;
        }
        e
    }

    fn design(&self, r: usize, z: &mut Vec<f64>) {
        z.clear();
        if self.free_beta {
            z.extend_from_slice(self.x.row(r));
        }
        z.extend_from_slice(&self.v.row(r)[..self.n_lambda]);
    }

    fn prior_prec(&self, a: usize) -> f64 {
        if a < self.p() {
            self.beta_prec
        } else {
            self.lambda_prec
        }
    }

    fn prior(&self, th: &[f64]) -> f64 {
        th.iter().enumerate().map(|(a, &t)| -0.5 * self.prior_prec(a) * t * t).sum()
    }

    /// Current parameter vector.
    pub fn current(&self) -> Vec<f64> {
        let mut th = Vec::with_capacity(self.dim());
        if self.free_beta {
            th.extend_from_slice(self.beta);
        }
        th.extend_from_slice(&self.lambda[..self.n_lambda]);
        th
    }

    /// Splits a parameter vector back into `(β_j, λ_[j,:])`.
    pub fn unpack(&self, th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.p();
        let beta = if self.free_beta { th[..p].to_vec() } else { self.beta.to_vec() };
        let mut lambda = self.lambda.to_vec();
        lambda[..self.n_lambda].copy_from_slice(&th[p..p + self.n_lambda]);
        (beta, lambda)
    }
}

impl Target<f64> for RegressionTarget<'_> {
    fn dim(&self) -> usize {
        self.p() + self.n_lambda
    }

    fn log_density(&self, th: &[f64]) -> f64 {
        let mut total = self.prior(th);
        for &r in self.rows {
            total += loglik(self.family, self.y[(r, self.j)], self.eta(th, r), self.gamma);
        }
        total
    }

    fn log_density_and_gradient(&self, th: &[f64]) -> (f64, Vec<f64>) {
        let mut total = self.prior(th);
        let mut grad: Vec<f64> = th.iter().enumerate().map(|(a, &t)| -self.prior_prec(a) * t).collect();
        let mut z = Vec::with_capacity(th.len());
        for &r in self.rows {
            let (y, e) = (self.y[(r, self.j)], self.eta(th, r));
            total += loglik(self.family, y, e, self.gamma);
            let s = score_eta(self.family, y, e, self.gamma);
            self.design(r, &mut z);
            for (g, &za) in grad.iter_mut().zip(&z) {
                *g += s * za;
            }
        }
        (total, grad)
    }

    fn fisher(&self, th: &[f64]) -> Option<Matrix<f64>> {
        let d = self.dim();
        let mut f = Matrix::diag(&(0..d).map(|a| self.prior_prec(a)).collect::<Vec<_>>());
        let mut z = Vec::with_capacity(d);
        for &r in self.rows {
            let w = fisher_eta(self.family, self.eta(th, r), self.gamma);
            self.design(r, &mut z);
            for a in 0..d {
                let wa = w * z[a];
                for b in 0..=a {
                    f[(a, b)] += wa * z[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                f[(b, a)] = f[(a, b)];
            }
        }
        Some(f)
    }
}

/// Target of `ln γ_j` for families with a nuisance parameter.
pub struct NuisanceTarget<'a> {
    pub family: Family,
    pub rows: &'a [usize],
    pub y: &'a Matrix<f64>,
    pub j: usize,
    /// Linear predictor per entry of `rows`.
    pub eta: Vec<f64>,
    /// Standard deviation of the normal prior on `ln γ`.
    pub prior_sd: f64,
}

impl Target<f64> for NuisanceTarget<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let gamma = x[0].exp();
        let prior = -0.5 * (x[0] / self.prior_sd).powi(2);
        prior
            + self
                .rows
                .iter()
                .zip(&self.eta)
                .map(|(&r, &e)| loglik(self.family, self.y[(r, self.j)], e, gamma))
                .sum::<f64>()
    }

    /// Central differences; only random-walk kernels use this target.
    fn log_density_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let h = 1e-5;
        let g = (self.log_density(&[x[0] + h]) - self.log_density(&[x[0] - h])) / (2.0 * h);
        (self.log_density(x), vec![g])
    }
}

/// Generalized linear fit ignoring space, by Fisher scoring. Returns `None`
/// when the weighted normal equations are singular or the iteration
/// diverges.
pub fn irls(family: Family, x: &Matrix<f64>, rows: &[usize], y: &[f64], gamma: f64) -> Option<Vec<f64>> {
    let p = x.cols();
    if p == 0 {
        return Some(Vec::new());
    }
    let mut beta = vec![0.0; p];
    for _ in 0..50 {
        let mut xtwx = Matrix::zeros(p, p);
        let mut xtwz = vec![0.0; p];
        for (&r, &yr) in rows.iter().zip(y) {
            let xr = x.row(r);
            let e: f64 = xr.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let w = fisher_eta(family, e, gamma).max(1e-10);
            let z = e + score_eta(family, yr, e, gamma) / w;
            for a in 0..p {
                xtwz[a] += w * xr[a] * z;
                for b in 0..p {
                    xtwx[(a, b)] += w * xr[a] * xr[b];
                }
            }
        }
        let next = Cholesky::new(&xtwx).ok()?.solve(&xtwz);
        if next.iter().any(|b| !b.is_finite()) {
            return None;
        }
        let change = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if change < 1e-10 {
            break;
        }
    }
    Some(beta)
}
