//! Correlation functions, coregionalization and per-factor block conditionals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::mesh::MeshGraph;
use crate::scalar::Real;

/// Diagonal jitter added to every correlation matrix before factorization,
/// followed by a single larger retry.
pub const JITTER: [f64; 2] = [1e-8, 1e-6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CorrFamily {
    #[default]
    Exponential,
    /// Matérn with smoothness 3/2: `(1 + √3 φ d) exp(-√3 φ d)`.
    Matern32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationSpec<T> {
    pub family: CorrFamily,
    pub phi: T,
}

#[inline]
fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Correlation as a function of distance.
#[inline]
pub fn correlation_at<T: Real>(family: CorrFamily, phi: T, d: T) -> T {
    match family {
        CorrFamily::Exponential => (-phi * d).exp(),
        CorrFamily::Matern32 => {
            let s = T::lit(3f64.sqrt()) * phi * d;
            (T::one() + s) * (-s).exp()
        }
    }
}

pub fn correlation<T: Real>(spec: &CorrelationSpec<T>, a: &[f64], b: &[f64]) -> T {
    correlation_at(spec.family, spec.phi, T::lit(distance(a, b)))
}

/// `ρ(rows_a, rows_b)` over rows of `coords`.
pub fn correlation_matrix<T: Real>(
    spec: &CorrelationSpec<T>,
    coords: &Matrix<f64>,
    rows_a: &[usize],
    rows_b: &[usize],
) -> Matrix<T> {
    Matrix::from_fn(rows_a.len(), rows_b.len(), |r, c| {
        correlation(spec, coords.row(rows_a[r]), coords.row(rows_b[c]))
    })
}

/// Correlation between arbitrary points and rows of `coords`.
pub fn cross_correlation<T: Real>(
    spec: &CorrelationSpec<T>,
    points: &Matrix<f64>,
    coords: &Matrix<f64>,
    rows: &[usize],
) -> Matrix<T> {
    Matrix::from_fn(points.rows(), rows.len(), |r, c| correlation(spec, points.row(r), coords.row(rows[c])))
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum LatentFamily {
    #[default]
    Gaussian,
    /// Multivariate Student-t process with `nu > 2` degrees of freedom.
    StudentT { nu: f64 },
}

/// Coregionalization parameters: `w(ℓ) = Λ v(ℓ)` with independent factors.
#[derive(Clone, Debug, PartialEq)]
pub struct LmcParams<T> {
    /// `q × k` loadings.
    pub lambda: Matrix<T>,
    pub family: CorrFamily,
    /// Decay per factor.
    pub phi: Vec<T>,
    pub latent: LatentFamily,
}

impl<T: Real> LmcParams<T> {
    pub fn q(&self) -> usize {
        self.lambda.rows()
    }

    pub fn k(&self) -> usize {
        self.lambda.cols()
    }

    pub fn spec(&self, h: usize) -> CorrelationSpec<T> {
        CorrelationSpec { family: self.family, phi: self.phi[h] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.len() != self.k() {
            return Err(Error::Invalid(format!("{} decays for {} factors", self.phi.len(), self.k())));
        }
        if self.phi.iter().any(|&p| !(p > T::zero()) || !p.is_finite()) {
            return Err(Error::Invalid("decay parameters must be positive".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::NonFinite("loadings".into()));
        }
        if let LatentFamily::StudentT { nu } = self.latent {
            if !(nu > 2.0) {
                return Err(Error::Invalid("Student-t degrees of freedom must exceed 2".into()));
            }
        }
        // full column rank: ΛᵀΛ must factor with a clearly positive pivot
        let gram = self.lambda.t_matmul(&self.lambda);
        match Cholesky::new(&gram) {
            Ok(c) if (0..self.k()).all(|i| c.lower()[(i, i)] > T::lit(1e-10)) => Ok(()),
            _ => Err(Error::Invalid("loadings are rank deficient".into())),
        }
    }
}

/// `C(0) = ΛΛᵀ`.
pub fn cross_covariance_at_zero<T: Real>(p: &LmcParams<T>) -> Matrix<T> {
    p.lambda.matmul(&p.lambda.transpose())
}

/// Cross-correlation implied by a covariance matrix.
pub fn covariance_to_correlation<T: Real>(c: &Matrix<T>) -> Matrix<T> {
    let s: Vec<T> = (0..c.rows()).map(|i| c[(i, i)].sqrt()).collect();
    Matrix::from_fn(c.rows(), c.cols(), |i, j| if i == j { T::one() } else { c[(i, j)] / (s[i] * s[j]) })
}

/// Conditional moments of one factor on one block given its parent set.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorConditional<T> {
    /// `H = ρ_{i,[i]} ρ_{[i]}⁻¹`, shape `n_i × n_[i]`.
    pub h: Matrix<T>,
    /// Cholesky of `R = ρ_i − H ρ_{[i],i}`.
    pub r: Cholesky<T>,
    /// `ln det R`.
    pub r_logdet: T,
    /// Cholesky of `ρ_{[i]}`; `None` without parents.
    pub parent_corr: Option<Cholesky<T>>,
    /// Prior part of the block precision:
    /// `R_i⁻¹ + Σ_children H_{i→j}ᵀ R_j⁻¹ H_{i→j}`.
    pub precision: Matrix<T>,
}

/// Per-factor block conditionals over the whole mesh, factor-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockConditionals<T> {
    family: CorrFamily,
    phi: Vec<T>,
    /// `factors[h][block]`.
    factors: Vec<Vec<FactorConditional<T>>>,
    /// Column offset of each parent inside `[i]`, in parent order.
    parent_offsets: Vec<Vec<usize>>,
    parent_len: Vec<usize>,
}

fn factor_failure(block: usize, h: usize, pivot: usize) -> Error {
    Error::NotPositiveDefinite { context: format!("correlation of block {block}, factor {h}"), pivot }
}

fn parent_rows(g: &MeshGraph, members: &[Vec<usize>], i: usize) -> Vec<usize> {
    g.parents(i).iter().flat_map(|&p| members[p].iter().copied()).collect()
}

fn build_one<T: Real>(
    spec: &CorrelationSpec<T>,
    coords: &Matrix<f64>,
    own: &[usize],
    par: &[usize],
    block: usize,
    h: usize,
) -> Result<(Matrix<T>, Cholesky<T>, Option<Cholesky<T>>)> {
    let jitter: Vec<T> = JITTER.iter().map(|&j| T::lit(j)).collect();
    let rho_i = correlation_matrix(spec, coords, own, own);
    if par.is_empty() {
        let (r, _) = Cholesky::with_jitter(&rho_i, &jitter).map_err(|e| factor_failure(block, h, e.pivot))?;
        return Ok((Matrix::zeros(own.len(), 0), r, None));
    }
    let rho_p = correlation_matrix(spec, coords, par, par);
    let (cp, _) = Cholesky::with_jitter(&rho_p, &jitter).map_err(|e| factor_failure(block, h, e.pivot))?;
    let cross = correlation_matrix(spec, coords, par, own); // ρ_{[i],i}
    let x = cp.solve_matrix(&cross); // ρ_{[i]}⁻¹ ρ_{[i],i}
    let hm = x.transpose();
    let mut r = rho_i;
    let hc = hm.matmul(&cross);
    for a in 0..own.len() {
        for b in 0..own.len() {
            r[(a, b)] -= hc[(a, b)];
        }
    }
    r.symmetrize();
    let (rc, _) = Cholesky::with_jitter(&r, &jitter).map_err(|e| factor_failure(block, h, e.pivot))?;
    Ok((hm, rc, Some(cp)))
}

impl<T: Real> BlockConditionals<T> {
    /// Builds conditionals for every factor and block. `members[b]` lists the
    /// rows of `coords` that form block `b`.
    pub fn build(
        g: &MeshGraph,
        coords: &Matrix<f64>,
        members: &[Vec<usize>],
        family: CorrFamily,
        phi: &[T],
    ) -> Result<Self> {
        assert_eq!(g.n_blocks(), members.len(), "members do not match the graph");
        let mut parent_offsets = Vec::with_capacity(g.n_blocks());
        let mut parent_len = Vec::with_capacity(g.n_blocks());
        for i in 0..g.n_blocks() {
            let mut off = Vec::with_capacity(g.parents(i).len());
            let mut acc = 0;
            for &p in g.parents(i) {
                off.push(acc);
                acc += members[p].len();
            }
            parent_offsets.push(off);
            parent_len.push(acc);
        }
        let mut bc = Self { family, phi: phi.to_vec(), factors: Vec::new(), parent_offsets, parent_len };
        for h in 0..phi.len() {
            let f = bc.build_factor(g, coords, members, h, phi[h])?;
            bc.factors.push(f);
        }
        Ok(bc)
    }

    /// Conditionals of factor `h` under decay `phi`, without touching `self`.
    pub fn build_factor(
        &self,
        g: &MeshGraph,
        coords: &Matrix<f64>,
        members: &[Vec<usize>],
        h: usize,
        phi: T,
    ) -> Result<Vec<FactorConditional<T>>> {
        let spec = CorrelationSpec { family: self.family, phi };
        let parts: Vec<(Matrix<T>, Cholesky<T>, Option<Cholesky<T>>)> = (0..g.n_blocks())
            .into_par_iter()
            .map(|i| build_one(&spec, coords, &members[i], &parent_rows(g, members, i), i, h))
            .collect::<Result<_>>()?;
        let precision: Vec<Matrix<T>> = (0..g.n_blocks())
            .into_par_iter()
            .map(|i| {
                let mut p = parts[i].1.inverse();
                for &j in g.children(i) {
                    let (off, len) = self.parent_slot(g, j, i);
                    let hij = parts[j].0.submatrix(0, members[j].len(), off, len);
                    let w = parts[j].1.solve_lower_matrix(&hij);
                    p.add_assign_matrix(&w.t_matmul(&w));
                }
                p.symmetrize();
                p
            })
            .collect();
        Ok(parts
            .into_iter()
            .zip(precision)
            .map(|((hm, r, pc), precision)| FactorConditional {
                r_logdet: r.log_det(),
                h: hm,
                r,
                parent_corr: pc,
                precision,
            })
            .collect())
    }

    /// Swaps in a factor previously produced by [`Self::build_factor`].
    pub fn replace_factor(&mut self, h: usize, phi: T, f: Vec<FactorConditional<T>>) {
        self.factors[h] = f;
        self.phi[h] = phi;
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn phi(&self) -> &[T] {
        &self.phi
    }

    pub fn family(&self) -> CorrFamily {
        self.family
    }

    pub fn factor(&self, h: usize) -> &[FactorConditional<T>] {
        &self.factors[h]
    }

    #[inline]
    pub fn get(&self, h: usize, block: usize) -> &FactorConditional<T> {
        &self.factors[h][block]
    }

    /// Size of the parent set `[i]`.
    pub fn parent_len(&self, i: usize) -> usize {
        self.parent_len[i]
    }

    pub fn parent_offsets(&self, i: usize) -> &[usize] {
        &self.parent_offsets[i]
    }

    /// Column range `(offset, len)` of parent `p` inside `H_j`.
    pub fn parent_slot(&self, g: &MeshGraph, j: usize, p: usize) -> (usize, usize) {
        let pos = g.parents(j).iter().position(|&x| x == p).expect("not a parent");
        let off = self.parent_offsets[j][pos];
        let end = self.parent_offsets[j].get(pos + 1).copied().unwrap_or(self.parent_len[j]);
        (off, end - off)
    }
}
