//! Synthetic datasets with known ground truth.
//!
//! `poisson-grid`: bivariate Poisson counts on a regular grid from two exponential
//! factors with `ΛΛᵀ = [[4, −1.3], [−1.3, 1]]`. `binary`: `q` binary outcomes
//! at uniform random sites from `k` factors with random decays and
//! loadings, probit link, two covariates.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::table::{read_matrix, write_matrix};
use crate::kernels::{correlation_matrix, covariance_to_correlation, BlockConditionals, CorrFamily, CorrelationSpec, JITTER, LatentFamily};
use crate::latent::{sample_meshed_prior, MeshContext};
use crate::linalg::{Cholesky, Matrix};
use crate::mesh::{build_cubic_dag, build_partition, PartitionSpec};
use crate::outcomes::{sample, Family};
use crate::rng::{substream, Group, StreamRng};
use crate::scalar::normal_cdf;

/// Largest size simulated with a dense Cholesky factor.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Design {
    /// `grid × grid` sites on the unit square.
    PoissonGrid { grid: usize },
    /// `n` uniform sites, `q` outcomes, `k` factors.
    Binary { n: usize, q: usize, k: usize },
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::PoissonGrid { .. } => "poisson-grid",
            Design::Binary { .. } => "binary",
        }
    }

    pub fn families(&self) -> Vec<Family> {
        match *self {
            Design::PoissonGrid { .. } => vec![Family::Poisson; 2],
            Design::Binary { q, .. } => vec![Family::Bernoulli; q],
        }
    }
}

/// Known values behind a simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub lambda: Matrix<f64>,
    pub phi: Vec<f64>,
    /// `q × p`.
    pub beta: Matrix<f64>,
    pub omega_corr: Matrix<f64>,
    /// `n × q` linear predictor.
    pub eta: Matrix<f64>,
    /// `n × q` outcomes before masking.
    pub y: Matrix<f64>,
    /// `n × q`; 1 where the entry was held out.
    pub test: Matrix<f64>,
}

impl Truth {
    pub fn is_test(&self, r: usize, j: usize) -> bool {
        self.test[(r, j)] != 0.0
    }

    /// Held-out `(row, outcome)` entries in row-major order.
    pub fn test_entries(&self) -> Vec<(usize, usize)> {
        let (n, q) = (self.test.rows(), self.test.cols());
        (0..n).flat_map(|r| (0..q).map(move |j| (r, j))).filter(|&(r, j)| self.is_test(r, j)).collect()
    }
}

fn latent_field(coords: &Matrix<f64>, phi: &[f64], rng: &mut StreamRng) -> Result<Matrix<f64>> {
    let n = coords.rows();
    let k = phi.len();
    if n <= DENSE_LIMIT {
        let rows: Vec<usize> = (0..n).collect();
        let mut v = Matrix::zeros(n, k);
        for (h, &p) in phi.iter().enumerate() {
            let spec = CorrelationSpec { family: CorrFamily::Exponential, phi: p };
            let c = correlation_matrix(&spec, coords, &rows, &rows);
            let (chol, _) = Cholesky::with_jitter(&c, &JITTER).map_err(|e| Error::NotPositiveDefinite {
                context: "simulation covariance".into(),
                pivot: e.pivot,
            })?;
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            for (r, x) in chol.mul_lower(&z).into_iter().enumerate() {
                v[(r, h)] = x;
            }
        }
        Ok(v)
    } else {
        // about 25 sites per block
        let side = ((n as f64 / 25.0).sqrt().ceil() as usize).max(1);
        let part = build_partition(coords, &PartitionSpec::equal(vec![side; coords.cols()]))?;
        let g = build_cubic_dag(part.dims())?;
        let bc = BlockConditionals::build(&g, coords, part.members(), CorrFamily::Exponential, phi)?;
        let ctx = MeshContext { graph: &g, members: part.members(), bc: &bc, latent: LatentFamily::Gaussian };
        Ok(sample_meshed_prior(&ctx, n, rng))
    }
}

fn hold_out(n: usize, q: usize, fraction: f64, rng: &mut StreamRng) -> Matrix<f64> {
    let mut test = Matrix::zeros(n, q);
    let m = (fraction * n as f64).round() as usize;
    for j in 0..q {
        for r in sample_indices(rng, n, m) {
            test[(r, j)] = 1.0;
        }
    }
    test
}

/// Generates a dataset and its ground truth. Identical inputs give
/// identical outputs.
pub fn simulate(design: Design, seed: u64) -> Result<(Dataset, Truth)> {
    let mut rng = substream(seed, Group::Simulate, 0, 0);
    let (coords, lambda, phi, covariates, beta, probit, names): (_, _, _, _, _, bool, Vec<String>) = match design {
        Design::PoissonGrid { grid } => {
            if grid < 2 {
                return Err(Error::Invalid("grid needs at least 2 points per side".into()));
            }
            let step = 1.0 / (grid - 1) as f64;
            let coords = Matrix::from_fn(grid * grid, 2, |r, c| if c == 0 { (r / grid) as f64 * step } else { (r % grid) as f64 * step });
            let l21 = -1.3 / 2.0;
            let lambda = Matrix::from_rows(&[vec![2.0, 0.0], vec![l21, (1.0f64 - l21 * l21).sqrt()]]);
            let n = grid * grid;
            (coords, lambda, vec![2.5, 2.5], Matrix::from_fn(n, 1, |_, _| 1.0), Matrix::zeros(2, 1), false, vec!["intercept".into()])
        }
        Design::Binary { n, q, k } => {
            if k == 0 || k > q || n == 0 {
                return Err(Error::Invalid("need n ≥ 1 and 1 ≤ k ≤ q".into()));
            }
            let unit = Uniform::new(0.0, 1.0).expect("valid range");
            let coords = Matrix::from_fn(n, 2, |_, _| unit.sample(&mut rng));
            let phi: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..10.0)).collect();
            let mut lambda = Matrix::zeros(q, k);
            for j in 0..q {
                for h in 0..k.min(j + 1) {
                    lambda[(j, h)] = if j == h { rng.random_range(1.5..2.0) } else { rng.random_range(-2.0..2.0) };
                }
            }
            let beta = Matrix::from_fn(q, 2, |_, _| rng.sample::<f64, _>(StandardNormal) * (0.2f64).sqrt());
            let covariates = Matrix::from_fn(n, 2, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
            (coords, lambda, phi, covariates, beta, true, vec!["intercept".into(), "x1".into()])
        }
    };
    let n = coords.rows();
    let q = lambda.rows();
    let v = latent_field(&coords, &phi, &mut rng)?;
    let w = v.matmul(&lambda.transpose());
    let eta = Matrix::from_fn(n, q, |r, j| {
        covariates.row(r).iter().zip(beta.row(j)).map(|(a, b)| a * b).sum::<f64>() + w[(r, j)]
    });
    let families = design.families();
    let mut y = Matrix::zeros(n, q);
    for r in 0..n {
        for j in 0..q {
            y[(r, j)] = if probit {
                f64::from(u8::from(rng.random::<f64>() < normal_cdf(eta[(r, j)])))
            } else {
                sample(families[j], eta[(r, j)], f64::NAN, &mut rng)
            };
        }
    }
    let test = hold_out(n, q, 0.2, &mut rng);
    let mut observed = y.clone();
    for r in 0..n {
        for j in 0..q {
            if test[(r, j)] != 0.0 {
                observed[(r, j)] = f64::NAN;
            }
        }
    }
    let omega_corr = covariance_to_correlation(&lambda.matmul(&lambda.transpose()));
    let data = Dataset {
        coords,
        y: observed,
        covariates,
        coord_names: vec!["x".into(), "y".into()],
        outcome_names: (1..=q).map(|j| format!("y{j}")).collect(),
        covariate_names: names,
    };
    Ok((data, Truth { lambda, phi, beta, omega_corr, eta, y, test }))
}

fn numbered(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("{prefix}{j}")).collect()
}

fn write_params(path: &Path, truth: &Truth) -> Result<()> {
    let fmt = |m: &Matrix<f64>| {
        let vals: Vec<String> = m.as_slice().iter().map(|v| format!("{v}")).collect();
        format!("{} {} {}", m.rows(), m.cols(), vals.join(","))
    };
    let phi = Matrix::from_vec(1, truth.phi.len(), truth.phi.clone());
    let text = format!(
        "lambda = {}\nphi = {}\nbeta = {}\nomega_corr = {}\n",
        fmt(&truth.lambda),
        fmt(&phi),
        fmt(&truth.beta),
        fmt(&truth.omega_corr)
    );
    std::fs::write(path, text)?;
    Ok(())
}

fn read_params(path: &Path) -> Result<Vec<(String, Matrix<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let bad = || Error::Config(format!("{}: malformed line {l:?}", path.display()));
            let (k, v) = l.split_once('=').ok_or_else(bad)?;
            let mut it = v.split_whitespace();
            let r: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let c: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let vals: Vec<f64> = match it.next() {
                Some(s) => s.split(',').map(|x| x.parse().map_err(|_| bad())).collect::<Result<_>>()?,
                None => Vec::new(),
            };
            if vals.len() != r * c {
                return Err(bad());
            }
            Ok((k.trim().to_string(), Matrix::from_vec(r, c, vals)))
        })
        .collect()
}

/// Writes `truth.txt` and `truth_eta.csv` into `dir`.
pub fn write_truth(dir: &Path, truth: &Truth) -> Result<()> {
    write_params(&dir.join("truth.txt"), truth)?;
    let (n, q) = (truth.eta.rows(), truth.eta.cols());
    let mut header = numbered("eta", q);
    header.extend(numbered("y", q));
    header.extend(numbered("test", q));
    let table = Matrix::from_fn(n, 3 * q, |r, c| match c / q {
        0 => truth.eta[(r, c)],
        1 => truth.y[(r, c - q)],
        _ => truth.test[(r, c - 2 * q)],
    });
    write_matrix(&dir.join("truth_eta.csv"), &header, &table)
}

pub fn read_truth(dir: &Path) -> Result<Truth> {
    let params = read_params(&dir.join("truth.txt"))?;
    let find = |name: &str| {
        params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::Config(format!("truth file lacks {name}")))
    };
    let (_, table) = read_matrix(&dir.join("truth_eta.csv"))?;
    if table.cols() % 3 != 0 {
        return Err(Error::Config("truth_eta.csv must have 3q columns".into()));
    }
    let q = table.cols() / 3;
    let n = table.rows();
    Ok(Truth {
        lambda: find("lambda")?,
        phi: find("phi")?.into_vec(),
        beta: find("beta")?,
        omega_corr: find("omega_corr")?,
        eta: Matrix::from_fn(n, q, |r, j| table[(r, j)]),
        y: Matrix::from_fn(n, q, |r, j| table[(r, q + j)]),
        test: Matrix::from_fn(n, q, |r, j| table[(r, 2 * q + j)]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let (a, ta) = simulate(Design::PoissonGrid { grid: 8 }, 3).unwrap();
        let (b, tb) = simulate(Design::PoissonGrid { grid: 8 }, 3).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(format!("{ta:?}"), format!("{tb:?}"));
    }

    #[test]
    fn s51_shape_and_truth() {
        let (d, t) = simulate(Design::PoissonGrid { grid: 10 }, 1).unwrap();
        assert_eq!((d.n(), d.q(), d.p()), (100, 2, 1));
        assert!((t.omega_corr[(0, 1)] + 0.65).abs() < 1e-12);
        let c = t.lambda.matmul(&t.lambda.transpose());
        assert!((c[(0, 0)] - 4.0).abs() < 1e-12 && (c[(1, 1)] - 1.0).abs() < 1e-12);
        for j in 0..2 {
            assert_eq!((0..100).filter(|&r| t.is_test(r, j)).count(), 20);
            assert_eq!((0..100).filter(|&r| !d.is_observed(r, j)).count(), 20);
        }
        assert!(d.validate().is_ok());
    }

    #[test]
    fn s61_shape() {
        let (d, t) = simulate(Design::Binary { n: 60, q: 4, k: 2 }, 2).unwrap();
        assert_eq!((d.n(), d.q(), d.p()), (60, 4, 2));
        assert_eq!(t.lambda[(0, 1)], 0.0);
        assert!(t.lambda[(1, 1)] >= 1.5 && t.phi.iter().all(|&p| (0.5..10.0).contains(&p)));
        assert!(d.validate_families(&Design::Binary { n: 60, q: 4, k: 2 }.families()).is_ok());
    }

    #[test]
    fn truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (_, t) = simulate(Design::Binary { n: 30, q: 3, k: 2 }, 5).unwrap();
        write_truth(dir.path(), &t).unwrap();
        assert_eq!(read_truth(dir.path()).unwrap(), t);
    }
}
