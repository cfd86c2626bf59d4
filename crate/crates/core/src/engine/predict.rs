//! Posterior predictive draws at new locations.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{Draws, Model};
use crate::error::{Error, Result};
use crate::kernels::{correlation_matrix, cross_correlation, CorrelationSpec, JITTER};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::mesh::parent_set_for_prediction;
use crate::outcomes::sample;
use crate::rng::{substream, Group};

/// Per-draw predictive samples; entry `t` belongs to the `t`-th latent draw.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    /// `m × k` latent factors.
    pub v: Vec<Matrix<f64>>,
    /// `m × q` linear predictors.
    pub eta: Vec<Matrix<f64>>,
    /// `m × q` outcomes.
    pub y: Vec<Matrix<f64>>,
}

/// New points grouped by the block that contains them, with the reference
/// rows each group conditions on.
struct Cell {
    points: Vec<usize>,
    cond: Vec<usize>,
}

fn cells_of(model: &Model, coords: &Matrix<f64>) -> Vec<Cell> {
    let nb = model.graph.n_blocks();
    let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for r in 0..coords.rows() {
        by_block[parent_set_for_prediction(&model.partition, coords.row(r))].push(r);
    }
    by_block
        .into_iter()
        .enumerate()
        .filter(|(_, pts)| !pts.is_empty())
        .map(|(b, points)| {
            let own = &model.members()[b];
            // an empty cell borrows its parents' reference points
            let cond = if own.is_empty() {
                model.graph.parents(b).iter().flat_map(|&p| model.members()[p].iter().copied()).collect()
            } else {
                own.clone()
            };
            Cell { points, cond }
        })
        .collect()
}

/// Samples `v(ℓ*)` per factor from its Gaussian conditional on the
/// containing block's reference values, then `η` and `y`, for every
/// latent draw.
pub fn predict(model: &Model, draws: &Draws, coords: &Matrix<f64>, covariates: &Matrix<f64>, seed: u64) -> Result<Prediction> {
    let m = coords.rows();
    if coords.cols() != model.coords.cols() {
        return Err(Error::Invalid(format!("{} coordinates given, model uses {}", coords.cols(), model.coords.cols())));
    }
    if covariates.rows() != m || covariates.cols() != model.p() {
        return Err(Error::Invalid(format!(
            "covariates must be {m} × {}, got {} × {}",
            model.p(),
            covariates.rows(),
            covariates.cols()
        )));
    }
    let (q, k) = (model.q(), model.k());
    let cells = cells_of(model, coords);
    let jitter: Vec<f64> = JITTER.to_vec();
    let out: Vec<(Matrix<f64>, Matrix<f64>, Matrix<f64>)> = draws
        .v
        .par_iter()
        .enumerate()
        .map(|(t, v)| {
            let d = draws.v_index[t];
            let (beta, lambda, phi, gamma) = (&draws.beta[d], &draws.lambda[d], &draws.phi[d], &draws.gamma[d]);
            let mut rng = substream(seed, Group::Predict, t as u64, 0);
            let mut vs = Matrix::zeros(m, k);
            for g in &cells {
                let pts = Matrix::from_fn(g.points.len(), coords.cols(), |r, c| coords[(g.points[r], c)]);
                for h in 0..k {
                    let spec = CorrelationSpec { family: model.spec.corr, phi: phi[h] };
                    if g.cond.is_empty() {
                        for &r in &g.points {
                            vs[(r, h)] = rng.sample::<f64, _>(StandardNormal);
                        }
                        continue;
                    }
                    let rho = correlation_matrix(&spec, &model.coords, &g.cond, &g.cond);
                    let (chol, _) = Cholesky::with_jitter(&rho, &jitter).map_err(|e| Error::NotPositiveDefinite {
                        context: format!("prediction conditioning set, factor {h}"),
                        pivot: e.pivot,
                    })?;
                    let vc: Vec<f64> = g.cond.iter().map(|&r| v[(r, h)]).collect();
                    let alpha = chol.solve(&vc);
                    let cross = cross_correlation(&spec, &pts, &model.coords, &g.cond);
                    for (a, &r) in g.points.iter().enumerate() {
                        let c = cross.row(a);
                        let w = chol.solve_lower(c);
                        let var = (1.0 + JITTER[0] - dot(&w, &w)).max(0.0);
                        let mean = dot(c, &alpha);
                        vs[(r, h)] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            let eta = Matrix::from_fn(m, q, |r, j| {
                let xb: f64 = covariates.row(r).iter().zip(beta.row(j)).map(|(a, b)| a * b).sum();
                xb + dot(lambda.row(j), vs.row(r))
            });
            let mut y = Matrix::zeros(m, q);
            for r in 0..m {
                for (j, &f) in model.spec.families.iter().enumerate() {
                    y[(r, j)] = sample(f, eta[(r, j)], gamma[j], &mut rng);
                }
            }
            Ok((vs, eta, y))
        })
        .collect::<Result<_>>()?;
    let mut pred = Prediction::default();
    for (v, e, y) in out {
        pred.v.push(v);
        pred.eta.push(e);
        pred.y.push(y);
    }
    Ok(pred)
}

/// Draws of `η` at every row of the model's dataset: reference rows use the
/// sampled latent factors, rows outside the reference set are predicted.
pub fn fitted_eta(model: &Model, draws: &Draws, seed: u64) -> Result<Vec<Matrix<f64>>> {
    let data = &model.data;
    let (n, q) = (data.n(), model.q());
    let unobs = data.unobserved_rows();
    let coords = Matrix::from_fn(unobs.len(), data.d(), |r, c| data.coords[(unobs[r], c)]);
    let cov = Matrix::from_fn(unobs.len(), data.p(), |r, c| data.covariates[(unobs[r], c)]);
    let pred = predict(model, draws, &coords, &cov, seed)?;
    Ok(draws
        .v
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let d = draws.v_index[t];
            let (beta, lambda) = (&draws.beta[d], &draws.lambda[d]);
            let mut eta = Matrix::zeros(n, q);
            for (a, &row) in model.reference.iter().enumerate() {
                for j in 0..q {
                    let xb: f64 = model.x.row(a).iter().zip(beta.row(j)).map(|(x, b)| x * b).sum();
                    eta[(row, j)] = xb + dot(lambda.row(j), v.row(a));
                }
            }
            for (a, &row) in unobs.iter().enumerate() {
                for j in 0..q {
                    eta[(row, j)] = pred.eta[t][(a, j)];
                }
            }
            eta
        })
        .collect())
}
