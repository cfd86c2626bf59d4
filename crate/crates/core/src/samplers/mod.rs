//! Block MCMC kernels: preconditioned MALA, simplified manifold MALA,
//! SiMPA (adaptive blending of the Fisher metric into a running
//! preconditioner) and random-walk Metropolis.
//!
//! Every kernel consumes the same [`StepNoise`], drawn in a fixed order, so
//! kernels that coincide mathematically also coincide bit for bit.

mod dual_averaging;

pub use dual_averaging::DualAveraging;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// A differentiable log-density.
pub trait Target<T: Real> {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[T]) -> T;
    fn log_density_and_gradient(&self, x: &[T]) -> (T, Vec<T>);
    /// Expected information (`G⁻¹`), when available.
    fn fisher(&self, _x: &[T]) -> Option<Matrix<T>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplerKind {
    Mala,
    SmMala,
    #[default]
    Simpa,
    Rwm,
}

impl SamplerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mala" => Some(Self::Mala),
            "smmala" | "sm-mala" => Some(Self::SmMala),
            "simpa" => Some(Self::Simpa),
            "rwm" => Some(Self::Rwm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mala => "mala",
            Self::SmMala => "smmala",
            Self::Simpa => "simpa",
            Self::Rwm => "rwm",
        }
    }

    pub fn default_target_accept(self) -> f64 {
        match self {
            Self::Rwm => 0.234,
            _ => 0.574,
        }
    }
}

/// Probability of adapting the preconditioner at iteration `m` (1-based).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdaptSchedule {
    /// `1` for `m ≤ t_bar`, then `(m − t_bar)^(−a)`.
    Decay { t_bar: usize, a: f64 },
    Always,
    Never,
}

impl AdaptSchedule {
    pub fn probability(self, m: usize) -> f64 {
        match self {
            Self::Decay { t_bar, a } => {
                if m <= t_bar {
                    1.0
                } else {
                    ((m - t_bar) as f64).powf(-a)
                }
            }
            Self::Always => 1.0,
            Self::Never => 0.0,
        }
    }
}

impl Default for AdaptSchedule {
    fn default() -> Self {
        Self::Decay { t_bar: 500, a: 1.0 / 3.0 }
    }
}

/// Step scaling: the drift uses `ε₁²/2` and the noise `ε₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// `ε₁ = ε₂ = ε` with ε from the sampler state.
    Adaptive,
    /// Fixed `(ε₁, ε₂)`, e.g. `(√2, 1)` for the Gibbs-equivalent update.
    Fixed { eps1: f64, eps2: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub eps0: f64,
    pub schedule: AdaptSchedule,
    /// Weight of the new metric in the preconditioner blend.
    pub kappa: f64,
    pub target_accept: f64,
    pub dual_averaging: bool,
    /// Updates after which ε freezes.
    pub da_horizon: usize,
    pub step_rule: StepRule,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind) -> Self {
        Self {
            kind,
            eps0: 0.1,
            schedule: AdaptSchedule::default(),
            kappa: 0.01,
            target_accept: kind.default_target_accept(),
            dual_averaging: true,
            da_horizon: 1000,
            step_rule: StepRule::Adaptive,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(format!("kappa must lie in (0, 1], got {}", self.kappa));
        }
        if let AdaptSchedule::Decay { a, .. } = self.schedule {
            if !(a > 0.0) {
                return Err(format!("adaptation decay exponent must be positive, got {a}"));
            }
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err("target acceptance must lie in (0, 1)".into());
        }
        if !(self.eps0 >= 0.0) {
            return Err("initial step size must be non-negative".into());
        }
        Ok(())
    }
}

/// Preconditioner `M` with its lower Cholesky factor `M^{1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Precond<T> {
    pub m: Matrix<T>,
    pub sqrt: Cholesky<T>,
}

impl<T: Real> Precond<T> {
    pub fn identity(d: usize) -> Self {
        Self { m: Matrix::identity(d), sqrt: Cholesky::from_lower(Matrix::identity(d)) }
    }

    pub fn from_matrix(m: Matrix<T>) -> Option<Self> {
        let sqrt = Cholesky::new(&m).ok()?;
        Some(Self { m, sqrt })
    }

    /// `G = F⁻¹` from an information matrix.
    pub fn from_fisher(f: &Matrix<T>) -> Option<Self> {
        let g = Cholesky::new(f).ok()?.inverse();
        Self::from_matrix(g)
    }

    /// `(1 − κ) M + κ G`, falling back to `κ/10` if the blend is not PD.
    pub fn blend(&self, g: &Matrix<T>, kappa: T) -> Option<Self> {
        let mix = |k: T| Self::from_matrix(self.m.blend(T::one() - k, g, k));
        mix(kappa).or_else(|| {
            log::debug!("preconditioner blend lost definiteness; retrying with a smaller weight");
            mix(kappa / T::lit(10.0))
        })
    }

    /// `M g`, computed as `S (Sᵀ g)`.
    pub fn apply(&self, g: &[T]) -> Vec<T> {
        let l = self.sqrt.lower();
        let st_g = l.t_mul_vec(g);
        l.lower_mul_vec(&st_g)
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }
}

/// Random inputs of one kernel step, always drawn as: adaptation coin `z`,
/// proposal normals `u`, acceptance uniform `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise<T> {
    pub z: f64,
    pub u: Vec<T>,
    pub v: f64,
}

impl<T: Real> StepNoise<T> {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        let z = rng.random::<f64>();
        let u = (0..dim).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        let v = rng.random::<f64>();
        Self { z, u, v }
    }
}

/// Per-block sampler state.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerState<T> {
    pub precond: Precond<T>,
    pub da: DualAveraging,
    eps: f64,
    /// Completed steps.
    pub iter: usize,
    pub accepted: usize,
    /// Log of the RWM scale.
    pub log_scale: f64,
}

impl<T: Real> SamplerState<T> {
    pub fn new(cfg: &SamplerConfig, dim: usize) -> Self {
        Self {
            precond: Precond::identity(dim),
            da: DualAveraging::new(cfg.eps0.max(f64::MIN_POSITIVE), cfg.target_accept, cfg.da_horizon),
            eps: cfg.eps0,
            iter: 0,
            accepted: 0,
            log_scale: cfg.eps0.max(f64::MIN_POSITIVE).ln(),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.eps
    }

    pub fn set_step_size(&mut self, eps: f64) {
        self.eps = eps;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iter == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iter as f64
        }
    }
}

/// Result of a single kernel step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo<T> {
    pub x: Vec<T>,
    pub accepted: bool,
    pub log_alpha: T,
    /// `min(1, α)`; zero for non-finite proposals.
    pub accept_prob: f64,
    pub adapted: bool,
}

#[derive(Clone, Copy, Debug)]
struct Scale<T> {
    drift: T,
    noise: T,
}

fn scale<T: Real>(cfg: &SamplerConfig, eps: f64) -> Scale<T> {
    match cfg.step_rule {
        StepRule::Adaptive => Scale { drift: T::lit(eps * eps * 0.5), noise: T::lit(eps) },
        StepRule::Fixed { eps1, eps2 } => Scale { drift: T::lit(eps1 * eps1 * 0.5), noise: T::lit(eps2) },
    }
}

fn langevin_mean<T: Real>(x: &[T], g: &[T], p: &Precond<T>, drift: T) -> Vec<T> {
    let mg = p.apply(g);
    x.iter().zip(&mg).map(|(&a, &b)| a + drift * b).collect()
}

/// `ln N(to; mean, noise² M)`.
pub fn log_q<T: Real>(to: &[T], mean: &[T], p: &Precond<T>, noise: T) -> T {
    let d = to.len();
    let r: Vec<T> = to.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let w = p.sqrt.solve_lower(&r);
    let quad: T = w.iter().map(|&a| a * a).sum::<T>() / (noise * noise);
    let df = T::from_usize_lossy(d);
    -T::half() * quad - p.sqrt.log_det_sqrt() - df * noise.ln() - T::half() * df * T::ln_2pi()
}

/// Metropolis–Hastings log ratio for a Langevin move `x → y` whose forward
/// proposal uses `fwd` and whose reverse proposal uses `bwd`.
pub fn log_acceptance_ratio<T: Real>(
    target: &dyn Target<T>,
    x: &[T],
    y: &[T],
    fwd: &Precond<T>,
    bwd: &Precond<T>,
    drift: T,
    noise: T,
) -> T {
    let (lx, gx) = target.log_density_and_gradient(x);
    let (ly, gy) = target.log_density_and_gradient(y);
    ratio(lx, &gx, ly, &gy, x, y, fwd, bwd, drift, noise)
}

#[allow(clippy::too_many_arguments)]
fn ratio<T: Real>(
    lx: T,
    gx: &[T],
    ly: T,
    gy: &[T],
    x: &[T],
    y: &[T],
    fwd: &Precond<T>,
    bwd: &Precond<T>,
    drift: T,
    noise: T,
) -> T {
    let fwd_mean = langevin_mean(x, gx, fwd, drift);
    let bwd_mean = langevin_mean(y, gy, bwd, drift);
    ly - lx + log_q(x, &bwd_mean, bwd, noise) - log_q(y, &fwd_mean, fwd, noise)
}

fn all_finite<T: Real>(x: &[T]) -> bool {
    x.iter().all(|v| v.is_finite())
}

enum Reverse<'a, T> {
    /// Reverse move uses the forward preconditioner.
    Same,
    /// Reverse move uses the metric at the proposal, optionally blended into
    /// a running preconditioner with weight κ.
    Metric { base: Option<(&'a Precond<T>, T)> },
}

struct Move<T> {
    info: StepInfo<T>,
    reverse: Option<Precond<T>>,
    blew_up: bool,
}

fn langevin<T: Real>(
    target: &dyn Target<T>,
    x: &[T],
    fwd: &Precond<T>,
    reverse: Reverse<'_, T>,
    s: Scale<T>,
    noise: &StepNoise<T>,
) -> Move<T> {
    let (lx, gx) = target.log_density_and_gradient(x);
    let mean = langevin_mean(x, &gx, fwd, s.drift);
    let su = fwd.sqrt.mul_lower(&noise.u);
    let y: Vec<T> = mean.iter().zip(&su).map(|(&m, &e)| m + s.noise * e).collect();
    let reject = |blew_up: bool| Move {
        info: StepInfo { x: x.to_vec(), accepted: false, log_alpha: T::neg_infinity(), accept_prob: 0.0, adapted: false },
        reverse: None,
        blew_up,
    };
    if !all_finite(&y) {
        return reject(true);
    }
    let (ly, gy) = target.log_density_and_gradient(&y);
    if !ly.is_finite() || !all_finite(&gy) {
        return reject(true);
    }
    let bwd_owned;
    let bwd = match reverse {
        Reverse::Same => fwd,
        Reverse::Metric { base } => {
            let g = target.fisher(&y).and_then(|f| Cholesky::new(&f).ok().map(|c| c.inverse()));
            let p = match (g, base) {
                (Some(g), None) => Precond::from_matrix(g),
                (Some(g), Some((m, kappa))) => m.blend(&g, kappa),
                (None, _) => None,
            };
            match p {
                Some(p) => {
                    bwd_owned = p;
                    &bwd_owned
                }
                None => return reject(false),
            }
        }
    };
    let log_alpha = ratio(lx, &gx, ly, &gy, x, &y, fwd, bwd, s.drift, s.noise);
    let accept_prob = if log_alpha.is_nan() { 0.0 } else { log_alpha.to_f64_lossy().exp().min(1.0) };
    let accepted = noise.v.ln() < log_alpha.to_f64_lossy();
    let reverse = if std::ptr::eq(bwd, fwd) { None } else { Some(bwd.clone()) };
    Move {
        info: StepInfo { x: if accepted { y } else { x.to_vec() }, accepted, log_alpha, accept_prob, adapted: false },
        reverse,
        blew_up: false,
    }
}

fn finish<T: Real>(cfg: &SamplerConfig, st: &mut SamplerState<T>, info: &StepInfo<T>, blew_up: bool) {
    st.iter += 1;
    if info.accepted {
        st.accepted += 1;
    }
    if blew_up {
        log::debug!("non-finite proposal rejected; halving the step size");
        st.da.halve();
        st.eps *= 0.5;
    }
    if cfg.dual_averaging && matches!(cfg.step_rule, StepRule::Adaptive) && !st.da.is_frozen() {
        st.eps = st.da.update(info.accept_prob);
    }
}

/// Preconditioned MALA with the state's fixed `M`.
pub fn mala_step<T: Real>(
    cfg: &SamplerConfig,
    st: &mut SamplerState<T>,
    target: &dyn Target<T>,
    x: &[T],
    noise: &StepNoise<T>,
) -> StepInfo<T> {
    let mv = langevin(target, x, &st.precond, Reverse::Same, scale(cfg, st.eps), noise);
    finish(cfg, st, &mv.info, mv.blew_up);
    mv.info
}

/// Simplified manifold MALA: `M = G(x)` forward and `G(y)` in reverse.
/// Falls back to a MALA step when the metric is unavailable.
pub fn smmala_step<T: Real>(
    cfg: &SamplerConfig,
    st: &mut SamplerState<T>,
    target: &dyn Target<T>,
    x: &[T],
    noise: &StepNoise<T>,
) -> StepInfo<T> {
    let fwd = target.fisher(x).and_then(|f| Cholesky::new(&f).ok().map(|c| c.inverse())).and_then(Precond::from_matrix);
    let Some(fwd) = fwd else {
        log::debug!("metric unavailable; falling back to MALA");
        return mala_step(cfg, st, target, x, noise);
    };
    let mv = langevin(target, x, &fwd, Reverse::Metric { base: None }, scale(cfg, st.eps), noise);
    finish(cfg, st, &mv.info, mv.blew_up);
    mv.info
}

/// One SiMPA step. With probability γ_m the metric at the current point is
/// blended into the preconditioner for the forward move, the metric at the
/// proposal for the reverse move, and the state keeps the reverse blend on
/// acceptance or the forward blend on rejection. Otherwise a fixed-`M` MALA
/// step is taken.
pub fn simpa_step<T: Real>(
    cfg: &SamplerConfig,
    st: &mut SamplerState<T>,
    target: &dyn Target<T>,
    x: &[T],
    noise: &StepNoise<T>,
) -> StepInfo<T> {
    let gamma_m = cfg.schedule.probability(st.iter + 1);
    if !(noise.z < gamma_m) {
        return mala_step(cfg, st, target, x, noise);
    }
    let kappa = T::lit(cfg.kappa);
    let g = target.fisher(x).and_then(|f| Cholesky::new(&f).ok().map(|c| c.inverse()));
    let fwd = g.and_then(|g| st.precond.blend(&g, kappa));
    let Some(fwd) = fwd else {
        log::debug!("forward blend unavailable; taking a fixed-preconditioner step");
        return mala_step(cfg, st, target, x, noise);
    };
    let current = st.precond.clone();
    let mv = langevin(target, x, &fwd, Reverse::Metric { base: Some((&current, kappa)) }, scale(cfg, st.eps), noise);
    let mut info = mv.info;
    info.adapted = true;
    st.precond = match (info.accepted, mv.reverse) {
        (true, Some(rev)) => rev,
        _ => fwd,
    };
    finish(cfg, st, &info, mv.blew_up);
    info
}

/// Random-walk Metropolis with an adaptive isotropic scale.
pub fn rwm_step<T: Real>(
    cfg: &SamplerConfig,
    st: &mut SamplerState<T>,
    target: &dyn Target<T>,
    x: &[T],
    noise: &StepNoise<T>,
) -> StepInfo<T> {
    let s = T::lit(st.log_scale.exp());
    let y: Vec<T> = x.iter().zip(&noise.u).map(|(&a, &u)| a + s * u).collect();
    let lx = target.log_density(x);
    let ly = if all_finite(&y) { target.log_density(&y) } else { T::neg_infinity() };
    // symmetric proposal: the q-ratio is identically one
    let log_alpha = if ly.is_nan() { T::neg_infinity() } else { ly - lx };
    let accept_prob = log_alpha.to_f64_lossy().exp().min(1.0);
    let accepted = noise.v.ln() < log_alpha.to_f64_lossy();
    st.iter += 1;
    if accepted {
        st.accepted += 1;
    }
    if cfg.dual_averaging && st.iter <= cfg.da_horizon {
        // Robbins–Monro on the log scale
        let rate = (st.iter as f64).powf(-0.6);
        st.log_scale += rate * (accept_prob - cfg.target_accept);
    }
    StepInfo { x: if accepted { y } else { x.to_vec() }, accepted, log_alpha, accept_prob, adapted: false }
}

/// Dispatches one step of the configured kernel, drawing fresh noise.
pub fn step<T: Real, R: Rng + ?Sized>(
    cfg: &SamplerConfig,
    st: &mut SamplerState<T>,
    target: &dyn Target<T>,
    x: &[T],
    rng: &mut R,
) -> StepInfo<T> {
    let noise = StepNoise::draw(rng, x.len());
    step_with_noise(cfg, st, target, x, &noise)
}

pub fn step_with_noise<T: Real>(
    cfg: &SamplerConfig,
    st: &mut SamplerState<T>,
    target: &dyn Target<T>,
    x: &[T],
    noise: &StepNoise<T>,
) -> StepInfo<T> {
    match cfg.kind {
        SamplerKind::Mala => mala_step(cfg, st, target, x, noise),
        SamplerKind::SmMala => smmala_step(cfg, st, target, x, noise),
        SamplerKind::Simpa => simpa_step(cfg, st, target, x, noise),
        SamplerKind::Rwm => rwm_step(cfg, st, target, x, noise),
    }
}
