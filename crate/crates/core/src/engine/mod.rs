//! MCMC driver for the coregionalized meshed model: regression and loadings,
//! nuisance parameters, decays, then a chromatic sweep over the latent
//! blocks.

mod predict;
pub mod regression;

pub use predict::{fitted_eta, predict, Prediction};

use std::time::Instant;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{BlockConditionals, CorrFamily, LatentFamily};
use crate::latent::{gather, joint_meshed_logdensity, factor_logdensity_with, scatter, BlockTarget, LinkedData, MeshContext};
use crate::linalg::Matrix;
use crate::mesh::{build_cubic_dag, build_partition, MeshGraph, Partition, PartitionSpec};
use crate::outcomes::{loglik, Family};
use crate::rng::{substream, Group};
use crate::samplers::{self, SamplerConfig, SamplerKind, SamplerState, StepNoise};
use crate::scalar::logistic;

use regression::{irls, NuisanceTarget, RegressionTarget};

/// Static description of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub families: Vec<Family>,
    /// Number of latent factors.
    pub k: usize,
    pub corr: CorrFamily,
    pub latent: LatentFamily,
    pub partition: PartitionSpec,
}

/// A dataset bound to a mesh over its reference set.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub data: Dataset,
    /// Dataset rows forming the reference set, ascending.
    pub reference: Vec<usize>,
    /// Reference coordinates, outcomes and covariates.
    pub coords: Matrix<f64>,
    pub y: Matrix<f64>,
    pub x: Matrix<f64>,
    /// Row-major `n × q` observation mask over the reference set.
    pub observed: Vec<bool>,
    /// Reference rows where each outcome is observed.
    pub obs_rows: Vec<Vec<usize>>,
    pub partition: Partition,
    pub graph: MeshGraph,
}

fn select_rows(m: &Matrix<f64>, rows: &[usize]) -> Matrix<f64> {
    Matrix::from_fn(rows.len(), m.cols(), |r, c| m[(rows[r], c)])
}

impl Model {
    pub fn new(data: Dataset, spec: ModelSpec) -> Result<Self> {
        data.validate()?;
        data.validate_families(&spec.families)?;
        let q = data.q();
        if spec.k == 0 || spec.k > q {
            return Err(Error::Config(format!("number of factors must lie in 1..={q}, got {}", spec.k)));
        }
        if let LatentFamily::StudentT { nu } = spec.latent {
            if !(nu > 2.0) {
                return Err(Error::Config("Student-t degrees of freedom must exceed 2".into()));
            }
            if spec.k != q {
                return Err(Error::Config("the Student-t latent process needs one factor per outcome".into()));
            }
        }
        let reference = data.reference_rows();
        let coords = select_rows(&data.coords, &reference);
        let y = select_rows(&data.y, &reference);
        let x = select_rows(&data.covariates, &reference);
        let n = reference.len();
        let observed: Vec<bool> = (0..n * q).map(|e| !y[(e / q, e % q)].is_nan()).collect();
        let obs_rows = (0..q).map(|j| (0..n).filter(|&r| observed[r * q + j]).collect()).collect();
        let partition = build_partition(&coords, &spec.partition)?;
        let graph = build_cubic_dag(partition.dims())?;
        debug_assert!(graph.coloring_is_valid());
        Ok(Self { spec, data, reference, coords, y, x, observed, obs_rows, partition, graph })
    }

    pub fn n(&self) -> usize {
        self.reference.len()
    }

    pub fn q(&self) -> usize {
        self.spec.families.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn members(&self) -> &[Vec<usize>] {
        self.partition.members()
    }

    /// Number of free loadings in row `j` (lower-triangular Λ).
    pub fn free_loadings(&self, j: usize) -> usize {
        (j + 1).min(self.k())
    }

    pub fn conditionals(&self, phi: &[f64]) -> Result<BlockConditionals<f64>> {
        BlockConditionals::build(&self.graph, &self.coords, self.members(), self.spec.corr, phi)
    }

    /// `X β_jᵀ` at every reference row.
    pub fn offsets(&self, beta: &Matrix<f64>) -> Matrix<f64> {
        self.x.matmul(&beta.transpose())
    }
}

/// Which parameter groups are updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateFlags {
    pub regression: bool,
    pub loadings: bool,
    pub nuisance: bool,
    pub phi: bool,
    pub latent: bool,
}

impl Default for UpdateFlags {
    fn default() -> Self {
        Self { regression: true, loadings: true, nuisance: true, phi: true, latent: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Priors {
    pub beta_sd: f64,
    pub lambda_sd: f64,
    /// Standard deviation of the normal prior on `ln γ`.
    pub log_gamma_sd: f64,
    /// Uniform prior bounds for every decay.
    pub phi_bounds: (f64, f64),
}

impl Default for Priors {
    fn default() -> Self {
        Self { beta_sd: 1.0, lambda_sd: 1.0, log_gamma_sd: 3.0, phi_bounds: (0.1, 10.0) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Latent draws are kept every `thin * latent_thin` iterations.
    pub latent_thin: usize,
    pub latent_sampler: SamplerConfig,
    pub regression_sampler: SamplerConfig,
    /// Random-walk settings shared by the nuisance and decay updates.
    pub scalar_sampler: SamplerConfig,
    pub updates: UpdateFlags,
    pub priors: Priors,
    pub seed: u64,
    /// Worker threads; `1` runs serially, `0` uses every available core.
    pub threads: usize,
    pub record_log_posterior: bool,
}

impl ChainConfig {
    /// Defaults with step-size adaptation confined to the burn-in.
    pub fn new(iterations: usize, burn_in: usize) -> Self {
        let mut latent = SamplerConfig::new(SamplerKind::Simpa);
        latent.da_horizon = burn_in;
        let mut regression = SamplerConfig::new(SamplerKind::Simpa);
        regression.da_horizon = burn_in;
        let mut scalar = SamplerConfig::new(SamplerKind::Rwm);
        scalar.da_horizon = burn_in;
        scalar.target_accept = 0.44;
        Self {
            iterations,
            burn_in,
            thin: 1,
            latent_thin: 1,
            latent_sampler: latent,
            regression_sampler: regression,
            scalar_sampler: scalar,
            updates: UpdateFlags::default(),
            priors: Priors::default(),
            seed: 1,
            threads: 0,
            record_log_posterior: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in > self.iterations {
            return Err(Error::Config(format!("burn-in {} exceeds the {} iterations", self.burn_in, self.iterations)));
        }
        if self.thin == 0 || self.latent_thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        let (lo, hi) = self.priors.phi_bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!("invalid decay bounds ({lo}, {hi})")));
        }
        if !(self.priors.beta_sd > 0.0 && self.priors.lambda_sd > 0.0 && self.priors.log_gamma_sd > 0.0) {
            return Err(Error::Config("prior standard deviations must be positive".into()));
        }
        for s in [&self.latent_sampler, &self.regression_sampler, &self.scalar_sampler] {
            s.validate().map_err(Error::Config)?;
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn n_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Current values of every unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// `q × p`.
    pub beta: Matrix<f64>,
    /// `q × k`, lower triangular.
    pub lambda: Matrix<f64>,
    pub phi: Vec<f64>,
    /// Nuisance per outcome; `NaN` where the family has none.
    pub gamma: Vec<f64>,
    /// `n × k` latent factors at the reference rows.
    pub v: Matrix<f64>,
}

/// Starting state: zero latent field, non-spatial GLM coefficients, unit
/// diagonal loadings, decays at the prior midpoint and moment-based
/// nuisance values.
pub fn initialize(model: &Model, cfg: &ChainConfig) -> ModelState {
    let (q, p, k, n) = (model.q(), model.p(), model.k(), model.n());
    let mut beta = Matrix::zeros(q, p);
    let mut gamma = vec![f64::NAN; q];
    for (j, &f) in model.spec.families.iter().enumerate() {
        let rows = &model.obs_rows[j];
        let y: Vec<f64> = rows.iter().map(|&r| model.y[(r, j)]).collect();
        let b = irls(f, &model.x, rows, &y, f.default_nuisance()).unwrap_or_else(|| vec![0.0; p]);
        beta.row_mut(j).copy_from_slice(&b);
        let m = y.len() as f64;
        gamma[j] = match f {
            Family::Gaussian => {
                let res: Vec<f64> = rows
                    .iter()
                    .zip(&y)
                    .map(|(&r, &yr)| yr - model.x.row(r).iter().zip(&b).map(|(a, c)| a * c).sum::<f64>())
                    .collect();
                let mean = res.iter().sum::<f64>() / m;
                let var = res.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            }
            Family::NegBinomial => {
                let mean = y.iter().sum::<f64>() / m;
                let var = y.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
                if mean > 0.0 {
                    ((var - mean) / (mean * mean)).max(0.01)
                } else {
                    f.default_nuisance()
                }
            }
            _ => f64::NAN,
        };
    }
    let lambda = Matrix::from_fn(q, k, |j, h| if j == h { 1.0 } else { 0.0 });
    let (lo, hi) = cfg.priors.phi_bounds;
    ModelState { beta, lambda, phi: vec![0.5 * (lo + hi); k], gamma, v: Matrix::zeros(n, k) }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub regression: f64,
    pub nuisance: f64,
    pub phi: f64,
    pub latent: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Draws {
    pub beta: Vec<Matrix<f64>>,
    pub lambda: Vec<Matrix<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    /// Latent draws, each paired with its index in the parameter draws.
    pub v: Vec<Matrix<f64>>,
    pub v_index: Vec<usize>,
    /// Joint log posterior at each draw, when recorded.
    pub log_posterior: Vec<f64>,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub regression_acceptance: Vec<f64>,
    /// `NaN` for outcomes without a nuisance parameter.
    pub nuisance_acceptance: Vec<f64>,
    pub phi_acceptance: Vec<f64>,
    pub block_acceptance: Vec<f64>,
    pub block_step_size: Vec<f64>,
    /// Mean diagonal of each block's preconditioner.
    pub block_precond_diag: Vec<f64>,
    pub timings: StageTimings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub draws: Draws,
    pub diagnostics: ChainDiagnostics,
    pub final_state: ModelState,
}

/// A running chain over a model.
pub struct Chain<'m> {
    model: &'m Model,
    cfg: ChainConfig,
    state: ModelState,
    bc: BlockConditionals<f64>,
    offset: Matrix<f64>,
    latent_st: Vec<SamplerState<f64>>,
    reg_st: Vec<SamplerState<f64>>,
    nuis_st: Vec<SamplerState<f64>>,
    phi_st: Vec<SamplerState<f64>>,
    iter: usize,
    timings: StageTimings,
}

impl<'m> Chain<'m> {
    pub fn new(model: &'m Model, cfg: ChainConfig) -> Result<Self> {
        let state = initialize(model, &cfg);
        Self::with_state(model, cfg, state)
    }

    /// Starts from a given state, e.g. known values with some update groups
    /// disabled.
    pub fn with_state(model: &'m Model, cfg: ChainConfig, state: ModelState) -> Result<Self> {
        cfg.validate()?;
        let (q, k, n) = (model.q(), model.k(), model.n());
        if state.beta.rows() != q
            || state.beta.cols() != model.p()
            || state.lambda.rows() != q
            || state.lambda.cols() != k
            || state.phi.len() != k
            || state.gamma.len() != q
            || state.v.rows() != n
            || state.v.cols() != k
        {
            return Err(Error::Invalid("state dimensions do not match the model".into()));
        }
        let (lo, hi) = cfg.priors.phi_bounds;
        if state.phi.iter().any(|&p| !(p > lo && p < hi)) {
            return Err(Error::Invalid(format!("decays must lie strictly inside ({lo}, {hi})")));
        }
        let bc = model.conditionals(&state.phi)?;
        let offset = model.offsets(&state.beta);
        let latent_st =
            model.members().iter().map(|m| SamplerState::new(&cfg.latent_sampler, m.len() * k)).collect();
        let reg_st = (0..q)
            .map(|j| SamplerState::new(&cfg.regression_sampler, model.p() + model.free_loadings(j)))
            .collect();
        let nuis_st = (0..q).map(|_| SamplerState::new(&cfg.scalar_sampler, 1)).collect();
        let phi_st = (0..k).map(|_| SamplerState::new(&cfg.scalar_sampler, 1)).collect();
        let chain =
            Self { model, cfg, state, bc, offset, latent_st, reg_st, nuis_st, phi_st, iter: 0, timings: Default::default() };
        let lp = chain.log_posterior();
        if !lp.is_finite() {
            return Err(Error::NonFinite(format!("joint density at initialization ({lp})")));
        }
        Ok(chain)
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn conditionals(&self) -> &BlockConditionals<f64> {
        &self.bc
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    fn ctx(&self) -> MeshContext<'_, f64> {
        MeshContext { graph: &self.model.graph, members: self.model.members(), bc: &self.bc, latent: self.model.spec.latent }
    }

    /// Joint log posterior up to a constant.
    pub fn log_posterior(&self) -> f64 {
        let m = self.model;
        let pr = &self.cfg.priors;
        let eta = self.state.v.matmul(&self.state.lambda.transpose());
        let mut total = joint_meshed_logdensity(&self.ctx(), &self.state.v);
        for (j, &f) in m.spec.families.iter().enumerate() {
            for &r in &m.obs_rows[j] {
                total += loglik(f, m.y[(r, j)], self.offset[(r, j)] + eta[(r, j)], self.state.gamma[j]);
            }
            if f.has_nuisance() {
                total -= 0.5 * (self.state.gamma[j].ln() / pr.log_gamma_sd).powi(2);
            }
            total -= 0.5 * self.state.beta.row(j).iter().map(|b| b * b).sum::<f64>() / pr.beta_sd.powi(2);
            total -=
                0.5 * self.state.lambda.row(j)[..m.free_loadings(j)].iter().map(|l| l * l).sum::<f64>() / pr.lambda_sd.powi(2);
        }
        total
    }

    /// One full iteration.
    pub fn step(&mut self) -> Result<()> {
        let start = Instant::now();
        if self.cfg.updates.regression || self.cfg.updates.loadings {
            let t = Instant::now();
            self.update_regression_and_loadings();
            self.timings.regression += t.elapsed().as_secs_f64();
        }
        if self.cfg.updates.nuisance {
            let t = Instant::now();
            self.update_nuisance();
            self.timings.nuisance += t.elapsed().as_secs_f64();
        }
        if self.cfg.updates.phi {
            let t = Instant::now();
            self.update_phi()?;
            self.timings.phi += t.elapsed().as_secs_f64();
        }
        if self.cfg.updates.latent {
            let t = Instant::now();
            self.update_latent();
            self.timings.latent += t.elapsed().as_secs_f64();
        }
        self.iter += 1;
        self.timings.total += start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Joint update of `(β_j, λ_[j,:])` for every outcome.
    pub fn update_regression_and_loadings(&mut self) {
        let m = self.model;
        let cfg = &self.cfg;
        let st = &self.state;
        let results: Vec<(Vec<f64>, Vec<f64>, SamplerState<f64>)> = (0..m.q())
            .into_par_iter()
            .map(|j| {
                let target = RegressionTarget {
                    family: m.spec.families[j],
                    gamma: st.gamma[j],
                    rows: &m.obs_rows[j],
                    j,
                    x: &m.x,
                    v: &st.v,
                    y: &m.y,
                    beta: st.beta.row(j),
                    lambda: st.lambda.row(j),
                    free_beta: cfg.updates.regression,
                    n_lambda: if cfg.updates.loadings { m.free_loadings(j) } else { 0 },
                    beta_prec: cfg.priors.beta_sd.powi(-2),
                    lambda_prec: cfg.priors.lambda_sd.powi(-2),
                };
                let mut s = self.reg_st[j].clone();
                let th = target.current();
                if th.is_empty() {
                    return (st.beta.row(j).to_vec(), st.lambda.row(j).to_vec(), s);
                }
                if s.precond.dim() != th.len() {
                    s = SamplerState::new(&cfg.regression_sampler, th.len());
                }
                let mut rng = substream(cfg.seed, Group::Regression, j as u64, self.iter as u64);
                let info = samplers::step(&cfg.regression_sampler, &mut s, &target, &th, &mut rng);
                let (b, l) = target.unpack(&info.x);
                (b, l, s)
            })
            .collect();
        for (j, (b, l, s)) in results.into_iter().enumerate() {
            self.state.beta.row_mut(j).copy_from_slice(&b);
            self.state.lambda.row_mut(j).copy_from_slice(&l);
            self.reg_st[j] = s;
        }
        self.offset = m.offsets(&self.state.beta);
    }

    /// Random-walk update of `ln γ_j` for families with a nuisance.
    pub fn update_nuisance(&mut self) {
        let m = self.model;
        let cfg = &self.cfg;
        let eta = self.state.v.matmul(&self.state.lambda.transpose());
        let results: Vec<Option<(f64, SamplerState<f64>)>> = (0..m.q())
            .into_par_iter()
            .map(|j| {
                let f = m.spec.families[j];
                if !f.has_nuisance() {
                    return None;
                }
                let rows = &m.obs_rows[j];
                let target = NuisanceTarget {
                    family: f,
                    rows,
                    y: &m.y,
                    j,
                    eta: rows.iter().map(|&r| self.offset[(r, j)] + eta[(r, j)]).collect(),
                    prior_sd: cfg.priors.log_gamma_sd,
                };
                let mut s = self.nuis_st[j].clone();
                let mut rng = substream(cfg.seed, Group::Nuisance, j as u64, self.iter as u64);
                let info = samplers::step(&cfg.scalar_sampler, &mut s, &target, &[self.state.gamma[j].ln()], &mut rng);
                Some((info.x[0].exp(), s))
            })
            .collect();
        for (j, r) in results.into_iter().enumerate() {
            if let Some((g, s)) = r {
                self.state.gamma[j] = g;
                self.nuis_st[j] = s;
            }
        }
    }

    fn latent_density_with_factor(&self, h: usize, conds: Option<&[crate::kernels::FactorConditional<f64>]>) -> f64 {
        let m = self.model;
        match (m.spec.latent, conds) {
            (LatentFamily::Gaussian, Some(c)) => factor_logdensity_with(&m.graph, m.members(), c, &self.state.v, h),
            (LatentFamily::Gaussian, None) => {
                factor_logdensity_with(&m.graph, m.members(), self.bc.factor(h), &self.state.v, h)
            }
            (LatentFamily::StudentT { .. }, None) => joint_meshed_logdensity(&self.ctx(), &self.state.v),
            (LatentFamily::StudentT { .. }, Some(c)) => {
                let mut bc = self.bc.clone();
                bc.replace_factor(h, self.bc.phi()[h], c.to_vec());
                let ctx = MeshContext { bc: &bc, ..self.ctx() };
                joint_meshed_logdensity(&ctx, &self.state.v)
            }
        }
    }

    /// Per-factor random walk on the logit of the rescaled decay.
    pub fn update_phi(&mut self) -> Result<()> {
        let m = self.model;
        let (lo, hi) = self.cfg.priors.phi_bounds;
        let log_jac = |s: f64| ((hi - lo) * s * (1.0 - s)).ln();
        for h in 0..m.k() {
            let mut rng = substream(self.cfg.seed, Group::Phi, h as u64, self.iter as u64);
            let noise = StepNoise::<f64>::draw(&mut rng, 1);
            let st = &mut self.phi_st[h];
            let s = (self.state.phi[h] - lo) / (hi - lo);
            let psi = (s / (1.0 - s)).ln();
            let psi_new = psi + st.log_scale.exp() * noise.u[0];
            let s_new = logistic(psi_new);
            let phi_new = lo + (hi - lo) * s_new;
            let mut log_alpha = f64::NEG_INFINITY;
            let mut proposal = None;
            if s_new > 0.0 && s_new < 1.0 {
                if let Ok(c) = self.bc.build_factor(&m.graph, &m.coords, m.members(), h, phi_new) {
                    let cur = self.latent_density_with_factor(h, None) + log_jac(s);
                    let new = self.latent_density_with_factor(h, Some(&c)) + log_jac(s_new);
                    log_alpha = new - cur;
                    proposal = Some(c);
                }
            }
            let st = &mut self.phi_st[h];
            let accept_prob = if log_alpha.is_nan() { 0.0 } else { log_alpha.exp().min(1.0) };
            st.iter += 1;
            if noise.v.ln() < log_alpha {
                if let Some(c) = proposal {
                    self.bc.replace_factor(h, phi_new, c);
                    self.state.phi[h] = phi_new;
                    st.accepted += 1;
                }
            }
            if self.cfg.scalar_sampler.dual_averaging && st.iter <= self.cfg.scalar_sampler.da_horizon {
                st.log_scale += (st.iter as f64).powf(-0.6) * (accept_prob - self.cfg.scalar_sampler.target_accept);
            }
        }
        Ok(())
    }

    fn block_update(&self, i: usize, ctx: &MeshContext<'_, f64>, linked: &LinkedData<'_, f64>) -> (Vec<f64>, SamplerState<f64>) {
        let target = BlockTarget::new(ctx, &self.state.v, Some(linked), i);
        let x = gather(&self.state.v, &self.model.members()[i]);
        let mut st = self.latent_st[i].clone();
        let mut rng = substream(self.cfg.seed, Group::Latent, i as u64, self.iter as u64);
        let info = samplers::step(&self.cfg.latent_sampler, &mut st, &target, &x, &mut rng);
        (info.x, st)
    }

    /// Chromatic sweep. With one thread, blocks are updated one at a time
    /// and written back immediately; otherwise each colour is updated
    /// concurrently against a frozen snapshot.
    pub fn update_latent(&mut self) {
        let m = self.model;
        let serial = self.cfg.threads == 1;
        for class in m.graph.color_classes() {
            let class: Vec<usize> = class.into_iter().filter(|&i| !m.members()[i].is_empty()).collect();
            if serial {
                for &i in &class {
                    let (x, st) = {
                        let linked = self.linked();
                        self.block_update(i, &self.ctx(), &linked)
                    };
                    scatter(&mut self.state.v, &m.members()[i], &x);
                    self.latent_st[i] = st;
                }
            } else {
                let results: Vec<(Vec<f64>, SamplerState<f64>)> = {
                    let linked = self.linked();
                    let ctx = self.ctx();
                    class.par_iter().map(|&i| self.block_update(i, &ctx, &linked)).collect()
                };
                for (&i, (x, st)) in class.iter().zip(results) {
                    scatter(&mut self.state.v, &m.members()[i], &x);
                    self.latent_st[i] = st;
                }
            }
        }
    }

    fn linked(&self) -> LinkedData<'_, f64> {
        LinkedData {
            families: &self.model.spec.families,
            y: &self.model.y,
            observed: &self.model.observed,
            offset: &self.offset,
            gamma: &self.state.gamma,
            lambda: &self.state.lambda,
        }
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let rate = |s: &SamplerState<f64>| s.acceptance_rate();
        ChainDiagnostics {
            regression_acceptance: self.reg_st.iter().map(rate).collect(),
            nuisance_acceptance: self
                .nuis_st
                .iter()
                .zip(&self.model.spec.families)
                .map(|(s, f)| if f.has_nuisance() { rate(s) } else { f64::NAN })
                .collect(),
            phi_acceptance: self.phi_st.iter().map(rate).collect(),
            block_acceptance: self.latent_st.iter().map(rate).collect(),
            block_step_size: self.latent_st.iter().map(|s| s.step_size()).collect(),
            block_precond_diag: self
                .latent_st
                .iter()
                .map(|s| {
                    let d = s.precond.dim();
                    if d == 0 {
                        f64::NAN
                    } else {
                        (0..d).map(|a| s.precond.m[(a, a)]).sum::<f64>() / d as f64
                    }
                })
                .collect(),
            timings: self.timings,
        }
    }

    fn run_inner(mut self) -> Result<ChainOutput> {
        let mut draws = Draws::default();
        let cfg = self.cfg.clone();
        for t in 0..cfg.iterations {
            self.step()?;
            if t < cfg.burn_in {
                continue;
            }
            let kept = t + 1 - cfg.burn_in;
            if !kept.is_multiple_of(cfg.thin) {
                continue;
            }
            let idx = draws.len();
            draws.beta.push(self.state.beta.clone());
            draws.lambda.push(self.state.lambda.clone());
            draws.phi.push(self.state.phi.clone());
            draws.gamma.push(self.state.gamma.clone());
            if (kept / cfg.thin).is_multiple_of(cfg.latent_thin) {
                draws.v.push(self.state.v.clone());
                draws.v_index.push(idx);
            }
            if cfg.record_log_posterior {
                draws.log_posterior.push(self.log_posterior());
            }
        }
        Ok(ChainOutput { draws, diagnostics: self.diagnostics(), final_state: self.state })
    }

    /// Runs every configured iteration and collects the retained draws.
    pub fn run(self) -> Result<ChainOutput> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| self.run_inner())
    }
}

/// Initializes and runs a chain.
pub fn run_chain(model: &Model, cfg: &ChainConfig) -> Result<ChainOutput> {
    Chain::new(model, cfg.clone())?.run()
}
