//! Meshed latent process densities and block full conditionals.
//!
//! Block vectors are stored factor-major: entry `h * n_i + a` holds factor
//! `h` at the `a`-th location of the block.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernels::{BlockConditionals, FactorConditional, LatentFamily};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::mesh::MeshGraph;
use crate::outcomes::{fisher_eta, loglik, score_eta, Family};
use crate::samplers::Target;
use crate::scalar::{ln_gamma, Real};

/// Latent factor values at the reference locations (`n × k`).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState<T> {
    pub v: Matrix<T>,
}

impl<T: Real> LatentState<T> {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { v: Matrix::zeros(n, k) }
    }

    /// `w(ℓ) = Λ v(ℓ)` at every location, as an `n × q` matrix.
    pub fn project(&self, lambda: &Matrix<T>) -> Matrix<T> {
        self.v.matmul(&lambda.transpose())
    }
}

/// Everything about the mesh the latent densities need.
#[derive(Clone, Copy)]
pub struct MeshContext<'a, T> {
    pub graph: &'a MeshGraph,
    pub members: &'a [Vec<usize>],
    pub bc: &'a BlockConditionals<T>,
    pub latent: LatentFamily,
}

/// Observed outcomes linked to the latent factors through `η = offset + Λ v`.
#[derive(Clone, Copy)]
pub struct LinkedData<'a, T> {
    pub families: &'a [Family],
    /// `n × q`; entries under a false mask are ignored.
    pub y: &'a Matrix<T>,
    /// Row-major `n × q` observation mask.
    pub observed: &'a [bool],
    /// `n × q` fixed part of η (typically `x_jᵀ β_j`).
    pub offset: &'a Matrix<T>,
    pub gamma: &'a [T],
    /// `q × k` loadings.
    pub lambda: &'a Matrix<T>,
}

/// Factor-major block vector of `v`.
pub fn gather<T: Real>(v: &Matrix<T>, rows: &[usize]) -> Vec<T> {
    let k = v.cols();
    let mut out = Vec::with_capacity(rows.len() * k);
    for h in 0..k {
        out.extend(rows.iter().map(|&r| v[(r, h)]));
    }
    out
}

/// Writes a factor-major block vector back into `v`.
pub fn scatter<T: Real>(v: &mut Matrix<T>, rows: &[usize], x: &[T]) {
    let n = rows.len();
    for h in 0..v.cols() {
        for (a, &r) in rows.iter().enumerate() {
            v[(r, h)] = x[h * n + a];
        }
    }
}

fn parent_values<T: Real>(ctx: &MeshContext<'_, T>, v: &Matrix<T>, i: usize, h: usize) -> Vec<T> {
    ctx.graph.parents(i).iter().flat_map(|&p| ctx.members[p].iter().map(move |&r| v[(r, h)])).collect()
}

fn own_values<T: Real>(ctx: &MeshContext<'_, T>, v: &Matrix<T>, i: usize, h: usize) -> Vec<T> {
    ctx.members[i].iter().map(|&r| v[(r, h)]).collect()
}

/// `H v_[i]` for one factor.
fn conditional_mean<T: Real>(fc: &FactorConditional<T>, parents: &[T]) -> Vec<T> {
    if parents.is_empty() {
        vec![T::zero(); fc.h.rows()]
    } else {
        fc.h.mul_vec(parents)
    }
}

fn gaussian_logdensity<T: Real>(n: usize, logdet: T, quad: T) -> T {
    -T::half() * (T::from_usize_lossy(n) * T::ln_2pi() + logdet + quad)
}

/// Log-density of a conditional Student-t block with `d` coordinates, `p`
/// conditioning coordinates, parent quadratic form `b`, residual quadratic
/// form `c2` and residual scale determinant `logdet`.
pub fn t_logdensity<T: Real>(nu: T, p: usize, d: usize, b: T, logdet: T, c2: T) -> T {
    let (pf, df) = (T::from_usize_lossy(p), T::from_usize_lossy(d));
    let alpha = (nu + pf + df) * T::half();
    let big_b = b + nu - T::two();
    ln_gamma(alpha) - ln_gamma((nu + pf) * T::half()) - df * T::half() * T::lit(std::f64::consts::PI).ln()
        - T::half() * logdet
        - df * T::half() * big_b.ln()
        - alpha * (c2 / big_b).ln_1p()
}

/// `v_[i]ᵀ ρ_[i]⁻¹ v_[i]` summed over factors.
fn parent_quadratic<T: Real>(ctx: &MeshContext<'_, T>, v: &Matrix<T>, i: usize) -> T {
    (0..ctx.bc.k())
        .map(|h| match &ctx.bc.get(h, i).parent_corr {
            Some(c) => c.quad_form(&parent_values(ctx, v, i, h)),
            None => T::zero(),
        })
        .sum()
}

/// `ln π(v_i | v_[i])`.
pub fn block_conditional_logdensity<T: Real>(ctx: &MeshContext<'_, T>, v: &Matrix<T>, i: usize) -> T {
    let n = ctx.members[i].len();
    let k = ctx.bc.k();
    let mut logdet = T::zero();
    let mut quad = T::zero();
    for h in 0..k {
        let fc = ctx.bc.get(h, i);
        let m = conditional_mean(fc, &parent_values(ctx, v, i, h));
        let r: Vec<T> = own_values(ctx, v, i, h).iter().zip(&m).map(|(&a, &b)| a - b).collect();
        logdet += fc.r_logdet;
        quad += fc.r.quad_form(&r);
    }
    match ctx.latent {
        LatentFamily::Gaussian => gaussian_logdensity(n * k, logdet, quad),
        LatentFamily::StudentT { nu } => {
            let b = parent_quadratic(ctx, v, i);
            t_logdensity(T::lit(nu), k * ctx.bc.parent_len(i), k * n, b, logdet, quad)
        }
    }
}

/// `Σ_i ln π(v_i | v_[i])`, summed in block order.
pub fn joint_meshed_logdensity<T: Real>(ctx: &MeshContext<'_, T>, v: &Matrix<T>) -> T {
    let mut total = T::zero();
    for i in 0..ctx.graph.n_blocks() {
        total += block_conditional_logdensity(ctx, v, i);
    }
    total
}

/// Gaussian log-density of factor `h` alone.
pub fn factor_logdensity<T: Real>(ctx: &MeshContext<'_, T>, v: &Matrix<T>, h: usize) -> T {
    factor_logdensity_with(ctx.graph, ctx.members, ctx.bc.factor(h), v, h)
}

/// Gaussian log-density of factor `h` under the given conditionals, which
/// need not be the ones currently installed.
pub fn factor_logdensity_with<T: Real>(
    graph: &MeshGraph,
    members: &[Vec<usize>],
    conds: &[FactorConditional<T>],
    v: &Matrix<T>,
    h: usize,
) -> T {
    let mut total = T::zero();
    for i in 0..graph.n_blocks() {
        let fc = &conds[i];
        let par: Vec<T> = graph.parents(i).iter().flat_map(|&p| members[p].iter().map(|&r| v[(r, h)])).collect();
        let m = conditional_mean(fc, &par);
        let r: Vec<T> = members[i].iter().zip(&m).map(|(&row, &b)| v[(row, h)] - b).collect();
        total += gaussian_logdensity(r.len(), fc.r_logdet, fc.r.quad_form(&r));
    }
    total
}

/// Draws `v` block by block from the meshed Gaussian prior.
pub fn sample_meshed_prior<T: Real, R: Rng + ?Sized>(ctx: &MeshContext<'_, T>, n: usize, rng: &mut R) -> Matrix<T> {
    let k = ctx.bc.k();
    let mut v = Matrix::zeros(n, k);
    for i in 0..ctx.graph.n_blocks() {
        for h in 0..k {
            let fc = ctx.bc.get(h, i);
            let m = conditional_mean(fc, &parent_values(ctx, &v, i, h));
            let z: Vec<T> = (0..m.len()).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            let lz = fc.r.mul_lower(&z);
            for (a, &r) in ctx.members[i].iter().enumerate() {
                v[(r, h)] = m[a] + lz[a];
            }
        }
    }
    v
}

struct ParentTerm<'a, T> {
    mean: Vec<T>,
    fc: &'a FactorConditional<T>,
}

struct ChildFactor<'a, T> {
    /// `v_j − H_{[j]∖i} v_{[j]∖i}`: the child residual when `x = 0`.
    base: Vec<T>,
    /// `H_{i→j}`.
    h_ij: Matrix<T>,
    fc: &'a FactorConditional<T>,
    /// `v_[j]` with the slot of block `i` zeroed (Student-t only).
    z: Vec<T>,
}

struct ChildTerm<'a, T> {
    factors: Vec<ChildFactor<'a, T>>,
    offset: usize,
    n_child: usize,
    n_parents: usize,
}

struct Obs<T> {
    a: usize,
    j: usize,
    y: T,
    offset: T,
}

/// Full conditional of one block: parent term, child terms and data.
pub struct BlockTarget<'a, T: Real> {
    n: usize,
    k: usize,
    latent: LatentFamily,
    parent_b: T,
    n_parents: usize,
    parent: Vec<ParentTerm<'a, T>>,
    children: Vec<ChildTerm<'a, T>>,
    obs: Vec<Obs<T>>,
    lambda: Option<&'a Matrix<T>>,
    families: &'a [Family],
    gamma: &'a [T],
}

impl<'a, T: Real> BlockTarget<'a, T> {
    /// Freezes everything outside block `i` at the values in `v`.
    pub fn new(ctx: &MeshContext<'a, T>, v: &Matrix<T>, data: Option<&LinkedData<'a, T>>, i: usize) -> Self {
        let k = ctx.bc.k();
        let n = ctx.members[i].len();
        let parent = (0..k)
            .map(|h| {
                let fc = ctx.bc.get(h, i);
                ParentTerm { mean: conditional_mean(fc, &parent_values(ctx, v, i, h)), fc }
            })
            .collect();
        let student = matches!(ctx.latent, LatentFamily::StudentT { .. });
        let children = ctx
            .graph
            .children(i)
            .iter()
            .map(|&j| {
                let (off, len) = ctx.bc.parent_slot(ctx.graph, j, i);
                let nj = ctx.members[j].len();
                let factors = (0..k)
                    .map(|h| {
                        let fc = ctx.bc.get(h, j);
                        let mut z = parent_values(ctx, v, j, h);
                        for zz in &mut z[off..off + len] {
                            *zz = T::zero();
                        }
                        let m = conditional_mean(fc, &z);
                        let base = own_values(ctx, v, j, h).iter().zip(&m).map(|(&a, &b)| a - b).collect();
                        let h_ij = fc.h.submatrix(0, nj, off, len);
                        ChildFactor { base, h_ij, fc, z: if student { z } else { Vec::new() } }
                    })
                    .collect();
                ChildTerm { factors, offset: off, n_child: nj, n_parents: ctx.bc.parent_len(j) }
            })
            .collect();
        let mut obs = Vec::new();
        if let Some(d) = data {
            let q = d.families.len();
            for (a, &r) in ctx.members[i].iter().enumerate() {
                for j in 0..q {
                    if d.observed[r * q + j] {
                        obs.push(Obs { a, j, y: d.y[(r, j)], offset: d.offset[(r, j)] });
                    }
                }
            }
        }
        Self {
            n,
            k,
            latent: ctx.latent,
            parent_b: if student { parent_quadratic(ctx, v, i) } else { T::zero() },
            n_parents: ctx.bc.parent_len(i),
            parent,
            children,
            obs,
            lambda: data.map(|d| d.lambda),
            families: data.map_or(&[], |d| d.families),
            gamma: data.map_or(&[], |d| d.gamma),
        }
    }

    fn eta(&self, x: &[T], o: &Obs<T>) -> T {
        let lam = self.lambda.expect("observations imply loadings");
        let mut e = o.offset;
        for h in 0..self.k {
            e += lam[(o.j, h)] * x[h * self.n + o.a];
        }
        e
    }

    fn data_term(&self, x: &[T], grad: Option<&mut [T]>) -> T {
        let mut total = T::zero();
        if self.obs.is_empty() {
            return total;
        }
        match grad {
            None => {
                for o in &self.obs {
                    total += loglik(self.families[o.j], o.y, self.eta(x, o), self.gamma[o.j]);
                }
            }
            Some(g) => {
                let lam = self.lambda.expect("observations imply loadings");
                for o in &self.obs {
                    let e = self.eta(x, o);
                    let (f, gm) = (self.families[o.j], self.gamma[o.j]);
                    total += loglik(f, o.y, e, gm);
                    let s = score_eta(f, o.y, e, gm);
                    for h in 0..self.k {
                        g[h * self.n + o.a] += lam[(o.j, h)] * s;
                    }
                }
            }
        }
        total
    }

    fn child_residual(&self, cf: &ChildFactor<'_, T>, xh: &[T]) -> Vec<T> {
        let hx = cf.h_ij.mul_vec(xh);
        cf.base.iter().zip(&hx).map(|(&b, &m)| b - m).collect()
    }

    fn evaluate(&self, x: &[T], want_grad: bool) -> (T, Vec<T>) {
        assert_eq!(x.len(), self.n * self.k, "block dimension mismatch");
        let n = self.n;
        let mut grad = vec![T::zero(); if want_grad { n * self.k } else { 0 }];
        let mut total = T::zero();
        match self.latent {
            LatentFamily::Gaussian => {
                for (h, pt) in self.parent.iter().enumerate() {
                    let xh = &x[h * n..(h + 1) * n];
                    let r: Vec<T> = xh.iter().zip(&pt.mean).map(|(&a, &b)| a - b).collect();
                    let s = pt.fc.r.solve(&r);
                    total += gaussian_logdensity(n, pt.fc.r_logdet, dot(&r, &s));
                    if want_grad {
                        for (g, &sv) in grad[h * n..(h + 1) * n].iter_mut().zip(&s) {
                            *g -= sv;
                        }
                    }
                }
                for ct in &self.children {
                    for (h, cf) in ct.factors.iter().enumerate() {
                        let e = self.child_residual(cf, &x[h * n..(h + 1) * n]);
                        let s = cf.fc.r.solve(&e);
                        total += gaussian_logdensity(ct.n_child, cf.fc.r_logdet, dot(&e, &s));
                        if want_grad {
                            let up = cf.h_ij.t_mul_vec(&s);
                            for (g, &u) in grad[h * n..(h + 1) * n].iter_mut().zip(&up) {
                                *g += u;
                            }
                        }
                    }
                }
            }
            LatentFamily::StudentT { nu } => {
                let nu = T::lit(nu);
                // parent term
                let mut c2 = T::zero();
                let mut logdet = T::zero();
                let mut sol = Vec::with_capacity(self.k);
                for (h, pt) in self.parent.iter().enumerate() {
                    let xh = &x[h * n..(h + 1) * n];
                    let r: Vec<T> = xh.iter().zip(&pt.mean).map(|(&a, &b)| a - b).collect();
                    let s = pt.fc.r.solve(&r);
                    c2 += dot(&r, &s);
                    logdet += pt.fc.r_logdet;
                    sol.push(s);
                }
                let (p, d) = (self.k * self.n_parents, self.k * n);
                total += t_logdensity(nu, p, d, self.parent_b, logdet, c2);
                if want_grad {
                    let big_b = self.parent_b + nu - T::two();
                    let coef = (nu + T::from_usize_lossy(p + d)) / (big_b + c2);
                    for (h, s) in sol.iter().enumerate() {
                        for (g, &sv) in grad[h * n..(h + 1) * n].iter_mut().zip(s) {
                            *g -= coef * sv;
                        }
                    }
                }
                for ct in &self.children {
                    let (pj, dj) = (self.k * ct.n_parents, self.k * ct.n_child);
                    let mut b = T::zero();
                    let mut c2 = T::zero();
                    let mut logdet = T::zero();
                    let mut grad_b = Vec::new();
                    let mut grad_c2 = Vec::new();
                    for (h, cf) in ct.factors.iter().enumerate() {
                        let xh = &x[h * n..(h + 1) * n];
                        let mut z = cf.z.clone();
                        z[ct.offset..ct.offset + n].copy_from_slice(xh);
                        let pc = cf.fc.parent_corr.as_ref().expect("child has parents");
                        let pz = pc.solve(&z);
                        b += dot(&z, &pz);
                        let e = self.child_residual(cf, xh);
                        let s = cf.fc.r.solve(&e);
                        c2 += dot(&e, &s);
                        logdet += cf.fc.r_logdet;
                        if want_grad {
                            grad_b.push(pz[ct.offset..ct.offset + n].iter().map(|&u| T::two() * u).collect::<Vec<_>>());
                            grad_c2.push(cf.h_ij.t_mul_vec(&s).iter().map(|&u| -T::two() * u).collect::<Vec<_>>());
                        }
                    }
                    total += t_logdensity(nu, pj, dj, b, logdet, c2);
                    if want_grad {
                        let big_b = b + nu - T::two();
                        let alpha = (nu + T::from_usize_lossy(pj + dj)) * T::half();
                        let half_d = T::from_usize_lossy(dj) * T::half();
                        let denom = big_b * (big_b + c2);
                        for h in 0..self.k {
                            for a in 0..n {
                                let (gb, gc) = (grad_b[h][a], grad_c2[h][a]);
                                grad[h * n + a] -= half_d * gb / big_b + alpha * (big_b * gc - c2 * gb) / denom;
                            }
                        }
                    }
                }
            }
        }
        let data = if want_grad { self.data_term(x, Some(&mut grad)) } else { self.data_term(x, None) };
        (total + data, grad)
    }

    /// Information matrix of the full conditional in factor-major layout.
    pub fn information(&self, x: &[T]) -> Matrix<T> {
        let n = self.n;
        let dim = n * self.k;
        let mut f = Matrix::zeros(dim, dim);
        match self.latent {
            LatentFamily::Gaussian => {
                for (h, pt) in self.parent.iter().enumerate() {
                    for a in 0..n {
                        for b in 0..n {
                            f[(h * n + a, h * n + b)] = pt.fc.precision[(a, b)];
                        }
                    }
                }
            }
            LatentFamily::StudentT { nu } => {
                let nu = T::lit(nu);
                let scale = |p: usize, d: usize, b: T| {
                    let nup = nu + T::from_usize_lossy(p);
                    let df = T::from_usize_lossy(d);
                    (nup + df) / (nup + df + T::two()) * nup / (b + nu - T::two())
                };
                let sp = scale(self.k * self.n_parents, self.k * n, self.parent_b);
                for (h, pt) in self.parent.iter().enumerate() {
                    let ri = pt.fc.r.inverse();
                    for a in 0..n {
                        for b in 0..n {
                            f[(h * n + a, h * n + b)] = sp * ri[(a, b)];
                        }
                    }
                }
                for ct in &self.children {
                    let mut b = T::zero();
                    for (h, cf) in ct.factors.iter().enumerate() {
                        let mut z = cf.z.clone();
                        z[ct.offset..ct.offset + n].copy_from_slice(&x[h * n..(h + 1) * n]);
                        b += cf.fc.parent_corr.as_ref().expect("child has parents").quad_form(&z);
                    }
                    let sc = scale(self.k * ct.n_parents, self.k * ct.n_child, b);
                    for (h, cf) in ct.factors.iter().enumerate() {
                        let w = cf.fc.r.solve_lower_matrix(&cf.h_ij);
                        let wtw = w.t_matmul(&w);
                        for a in 0..n {
                            for bb in 0..n {
                                f[(h * n + a, h * n + bb)] += sc * wtw[(a, bb)];
                            }
                        }
                    }
                }
            }
        }
        if let Some(lam) = self.lambda {
            for o in &self.obs {
                let e = self.eta(x, o);
                let w = fisher_eta(self.families[o.j], e, self.gamma[o.j]);
                for h in 0..self.k {
                    let lh = lam[(o.j, h)] * w;
                    for h2 in 0..self.k {
                        f[(h * n + o.a, h2 * n + o.a)] += lh * lam[(o.j, h2)];
                    }
                }
            }
        }
        f.symmetrize();
        f
    }

    pub fn n_locations(&self) -> usize {
        self.n
    }
}

impl<T: Real> Target<T> for BlockTarget<'_, T> {
    fn dim(&self) -> usize {
        self.n * self.k
    }

    fn log_density(&self, x: &[T]) -> T {
        self.evaluate(x, false).0
    }

    fn log_density_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        self.evaluate(x, true)
    }

    fn fisher(&self, x: &[T]) -> Option<Matrix<T>> {
        Some(self.information(x))
    }
}

/// Log full conditional of block `i` at the current state.
pub fn full_conditional_logdensity<T: Real>(
    ctx: &MeshContext<'_, T>,
    v: &Matrix<T>,
    data: Option<&LinkedData<'_, T>>,
    i: usize,
) -> T {
    BlockTarget::new(ctx, v, data, i).log_density(&gather(v, &ctx.members[i]))
}

/// Gradient of the log full conditional in factor-major layout.
pub fn gradient_full_conditional<T: Real>(
    ctx: &MeshContext<'_, T>,
    v: &Matrix<T>,
    data: Option<&LinkedData<'_, T>>,
    i: usize,
) -> Vec<T> {
    BlockTarget::new(ctx, v, data, i).log_density_and_gradient(&gather(v, &ctx.members[i])).1
}

/// Information matrix `G⁻¹` of the full conditional.
pub fn fisher_full_conditional<T: Real>(
    ctx: &MeshContext<'_, T>,
    v: &Matrix<T>,
    data: Option<&LinkedData<'_, T>>,
    i: usize,
) -> Matrix<T> {
    BlockTarget::new(ctx, v, data, i).information(&gather(v, &ctx.members[i]))
}

/// Checks that an information matrix factors.
pub fn is_positive_definite<T: Real>(m: &Matrix<T>) -> bool {
    Cholesky::new(m).is_ok()
}
