//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the
//! terminal. Exits non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use meshgp::engine::{initialize, run_chain, Chain, ChainConfig, Draws, Model, ModelSpec};
use meshgp::io::output::diagnose;
use meshgp::io::{simulate, Design, Truth};
use meshgp::kernels::{correlation, BlockConditionals, CorrFamily, CorrelationSpec, LatentFamily, JITTER};
use meshgp::latent::{block_conditional_logdensity, gather, joint_meshed_logdensity, scatter, BlockTarget, LinkedData, MeshContext};
use meshgp::linalg::Matrix;
use meshgp::mesh::{build_cubic_dag, MeshGraph, PartitionSpec};
use meshgp::metrics::omega_corr;
use meshgp::outcomes::{fisher_eta, loglik, sample, score_eta, Family};
use meshgp::rng::{substream, Group};
use meshgp::samplers::{step, step_with_noise, AdaptSchedule, SamplerConfig, SamplerKind, SamplerState, StepNoise, StepRule, Target};
use meshgp::Dataset;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Correlation over `rows` with the library's jitter on the diagonal.
fn dense_corr(spec: &CorrelationSpec<f64>, coords: &Matrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |a, b| {
        correlation(spec, coords.row(rows[a]), coords.row(rows[b])) + if a == b { JITTER[0] } else { 0.0 }
    })
}

fn gauss_logpdf(cov: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let ch = cov.clone().cholesky().expect("dense covariance is PD");
    let logdet = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = r.dot(&ch.solve(r));
    -0.5 * (r.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

fn random_coords(r: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix<f64> {
    Matrix::from_fn(n, d, |_, _| r.random::<f64>())
}

fn lower_loadings(r: &mut ChaCha8Rng, q: usize, k: usize) -> Matrix<f64> {
    Matrix::from_fn(q, k, |j, h| match j.cmp(&h) {
        std::cmp::Ordering::Equal => r.random_range(0.5..1.5),
        std::cmp::Ordering::Greater => r.random_range(-1.0..1.0),
        std::cmp::Ordering::Less => 0.0,
    })
}

/// Criterion 1: meshed joint density on a full-parent DAG or a single block equals
/// the dense Gaussian density.
fn c1_full_dag_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(100 + seed);
        let n = 40;
        let coords = random_coords(&mut r, n, 2);
        // exponential keeps the dense oracle well conditioned
        let family = CorrFamily::Exponential;
        let phi = r.random_range(1.0..10.0);
        let v = Matrix::from_fn(n, 1, |_, _| normal(&mut r));
        let spec = CorrelationSpec { family, phi };
        let all: Vec<usize> = (0..n).collect();
        let dense = gauss_logpdf(&dense_corr(&spec, &coords, &all), &DVector::from_column_slice(v.as_slice()));
        let full: Vec<Vec<usize>> = (0..5).map(|b| (0..b).collect()).collect();
        for parents in [full, vec![vec![]]] {
            let m = parents.len();
            let g = MeshGraph::from_parents(parents).unwrap();
            let members: Vec<Vec<usize>> = (0..m).map(|b| (b * n / m..(b + 1) * n / m).collect()).collect();
            let bc = BlockConditionals::build(&g, &coords, &members, family, &[phi]).unwrap();
            let ctx = MeshContext { graph: &g, members: &members, bc: &bc, latent: LatentFamily::Gaussian };
            worst = worst.max((joint_meshed_logdensity(&ctx, &v) - dense).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(worst < 1e-8 && secs < 1.0, format!("max |meshed - dense| = {worst:.2e} over 40 cases (exponential), {secs:.3}s"))
}

/// `KL(N(0, Σ) ‖ mesh)`. Every block conditional carries the exact
/// conditional covariance given its parent set, so `tr(QΣ) = n` and the
/// divergence reduces to `½ (Σ_i ln det R_i − ln det Σ)`.
fn kl_to_mesh(sigma: &DMatrix<f64>, g: &MeshGraph, bc: &BlockConditionals<f64>) -> f64 {
    let ld_sigma = 2.0 * sigma.clone().cholesky().unwrap().l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let ld_mesh: f64 = (0..g.n_blocks()).map(|i| bc.get(0, i).r_logdet).sum();
    0.5 * (ld_mesh - ld_sigma)
}

/// Criterion 2: coarsening a nested partition never increases the divergence from
/// the dense process.
fn c2_nested_kl() -> Outcome {
    let t0 = Instant::now();
    let mut ok = true;
    let mut min_gap = f64::INFINITY;
    let n = 60;
    for seed in 0..10u64 {
        let mut r = rng(200 + seed);
        // jittered grid: sorted, with no near-coincident pairs
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + r.random_range(0.1..0.9)) / n as f64).collect();
        let coords = Matrix::from_vec(n, 1, xs);
        // neighbours correlate at about 0.75 to 0.9, keeping Σ well conditioned
        let phi = r.random_range(30.0..60.0);
        // the 1D exponential process is Markov, which makes both meshes exact
        let spec = CorrelationSpec { family: CorrFamily::Matern32, phi };
        let all: Vec<usize> = (0..n).collect();
        let sigma = dense_corr(&spec, &coords, &all);
        let kl = |cuts: &[usize]| {
            let members: Vec<Vec<usize>> = cuts.windows(2).map(|w| (w[0]..w[1]).collect()).collect();
            let g = build_cubic_dag(&[members.len()]).unwrap();
            let bc = BlockConditionals::build(&g, &coords, &members, CorrFamily::Matern32, &[phi]).unwrap();
            kl_to_mesh(&sigma, &g, &bc)
        };
        // the new cut sits a few points from the shared one, so the finer
        // mesh drops information the coarse one keeps
        let c = r.random_range(20..40usize);
        let s = r.random_range(1..=3usize);
        let (a, b) = (c - s, c + s);
        for (coarse, fine) in [(vec![0, c, n], vec![0, c, b, n]), (vec![0, c, n], vec![0, a, c, n])] {
            let (kc, kf) = (kl(&coarse), kl(&fine));
            min_gap = min_gap.min(kf - kc);
            ok &= kf - kc > 1e-12;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(ok && secs < 1.0, format!("min KL(fine) - KL(coarse) = {min_gap:.3e} over 20 pairs (Matern 3/2), {secs:.3}s"))
}

/// Random data on a 2×2 mesh with every outcome observed.
struct Blocks {
    coords: Matrix<f64>,
    g: MeshGraph,
    members: Vec<Vec<usize>>,
}

fn two_by_two(r: &mut ChaCha8Rng, per_cell: impl Fn(&mut ChaCha8Rng) -> usize) -> Blocks {
    let g = build_cubic_dag(&[2, 2]).unwrap();
    let mut pts = Vec::new();
    let mut members = vec![Vec::new(); 4];
    for cx in 0..2 {
        for cy in 0..2 {
            let b = g.block_at(&[cx, cy]).unwrap();
            for _ in 0..per_cell(r) {
                members[b].push(pts.len());
                pts.push(vec![0.5 * (cx as f64 + r.random::<f64>()), 0.5 * (cy as f64 + r.random::<f64>())]);
            }
        }
    }
    Blocks { coords: Matrix::from_rows(&pts), g, members }
}

/// Criterion 3: with a Gaussian likelihood the modified SM-MALA step is an exact
/// Gibbs draw, so every acceptance ratio is one.
fn c3_gibbs_equivalence() -> Outcome {
    let mut r = rng(300);
    let (k, q) = (5, 5);
    let b = two_by_two(&mut r, |_| 5);
    let n = b.coords.rows();
    let phi: Vec<f64> = (0..k).map(|_| r.random_range(1.0..5.0)).collect();
    let bc = BlockConditionals::build(&b.g, &b.coords, &b.members, CorrFamily::Exponential, &phi).unwrap();
    let ctx = MeshContext { graph: &b.g, members: &b.members, bc: &bc, latent: LatentFamily::Gaussian };
    let lambda = lower_loadings(&mut r, q, k);
    let gamma = vec![0.5; q];
    let families = vec![Family::Gaussian; q];
    let y = Matrix::from_fn(n, q, |_, _| normal(&mut r));
    let observed = vec![true; n * q];
    let offset = Matrix::zeros(n, q);
    let data = LinkedData { families: &families, y: &y, observed: &observed, offset: &offset, gamma: &gamma, lambda: &lambda };
    let mut cfg = SamplerConfig::new(SamplerKind::SmMala);
    cfg.step_rule = StepRule::Fixed { eps1: std::f64::consts::SQRT_2, eps2: 1.0 };
    cfg.dual_averaging = false;
    let mut states: Vec<SamplerState<f64>> = b.members.iter().map(|m| SamplerState::new(&cfg, m.len() * k)).collect();
    let mut v = Matrix::zeros(n, k);
    let mut worst: f64 = 0.0;
    for it in 0..100u64 {
        for i in 0..4 {
            let target = BlockTarget::new(&ctx, &v, Some(&data), i);
            let x = gather(&v, &b.members[i]);
            let info = step(&cfg, &mut states[i], &target, &x, &mut substream(3, Group::Test, i as u64, it));
            worst = worst.max(info.log_alpha.abs());
            scatter(&mut v, &b.members[i], &info.x);
        }
    }
    outcome(worst < 1e-8, format!("max |log alpha| = {worst:.2e} over 100 sweeps of 4 blocks (k = q = 5, n = {n})"))
}

/// Middle block of a three-block line with Poisson data.
struct LineFixture {
    g: MeshGraph,
    members: Vec<Vec<usize>>,
    bc: BlockConditionals<f64>,
    lambda: Matrix<f64>,
    y: Matrix<f64>,
    observed: Vec<bool>,
    offset: Matrix<f64>,
    gamma: Vec<f64>,
    families: Vec<Family>,
    v: Matrix<f64>,
}

fn line_fixture(r: &mut ChaCha8Rng, per: usize, k: usize, families: Vec<Family>) -> LineFixture {
    let q = families.len();
    let n = 3 * per;
    let mut xs: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    xs.sort_by(f64::total_cmp);
    let coords = Matrix::from_vec(n, 1, xs);
    let g = build_cubic_dag(&[3]).unwrap();
    let members: Vec<Vec<usize>> = (0..3).map(|b| (b * per..(b + 1) * per).collect()).collect();
    let phi: Vec<f64> = (0..k).map(|_| r.random_range(1.0..8.0)).collect();
    let bc = BlockConditionals::build(&g, &coords, &members, CorrFamily::Exponential, &phi).unwrap();
    let lambda = lower_loadings(r, q, k);
    let v = Matrix::from_fn(n, k, |_, _| normal(r));
    let gamma: Vec<f64> = families
        .iter()
        .map(|f| match f {
            Family::Gaussian => r.random_range(0.3..2.0),
            Family::NegBinomial => r.random_range(0.1..2.0),
            _ => f64::NAN,
        })
        .collect();
    let w = v.matmul(&lambda.transpose());
    let y = Matrix::from_fn(n, q, |row, j| sample(families[j], w[(row, j)], gamma[j], r));
    LineFixture {
        g,
        members,
        bc,
        lambda,
        y,
        observed: vec![true; n * q],
        offset: Matrix::zeros(n, q),
        gamma,
        families,
        v,
    }
}

impl LineFixture {
    fn target(&self, latent: LatentFamily, i: usize) -> BlockTarget<'_, f64> {
        let ctx = MeshContext { graph: &self.g, members: &self.members, bc: &self.bc, latent };
        let data = LinkedData {
            families: &self.families,
            y: &self.y,
            observed: &self.observed,
            offset: &self.offset,
            gamma: &self.gamma,
            lambda: &self.lambda,
        };
        BlockTarget::new(&ctx, &self.v, Some(&data), i)
    }
}

fn same_path(a: &SamplerConfig, b: &SamplerConfig, target: &dyn Target<f64>, x0: &[f64]) -> (bool, usize, Vec<f64>) {
    let (mut sa, mut sb) = (SamplerState::new(a, x0.len()), SamplerState::new(b, x0.len()));
    let (mut xa, mut xb) = (x0.to_vec(), x0.to_vec());
    let mut accepted = 0;
    for m in 0..1000u64 {
        let noise = StepNoise::draw(&mut substream(4, Group::Test, 0, m), x0.len());
        let ia = step_with_noise(a, &mut sa, target, &xa, &noise);
        let ib = step_with_noise(b, &mut sb, target, &xb, &noise);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&ia.x) != bits(&ib.x) || ia.accepted != ib.accepted || sa.step_size().to_bits() != sb.step_size().to_bits() {
            return (false, m as usize, xa);
        }
        accepted += usize::from(ia.accepted);
        (xa, xb) = (ia.x, ib.x);
    }
    (true, accepted, xa)
}

/// Criterion 4: siMPA reduces to MALA without adaptation and to SM-MALA with full
/// adaptation, step for step.
fn c4_path_identity() -> Outcome {
    let mut r = rng(400);
    let fx = line_fixture(&mut r, 6, 2, vec![Family::Poisson, Family::Poisson]);
    let target = fx.target(LatentFamily::Gaussian, 1);
    let x0 = gather(&fx.v, &fx.members[1]);
    let mut never = SamplerConfig::new(SamplerKind::Simpa);
    never.schedule = AdaptSchedule::Never;
    let mala = SamplerConfig { kind: SamplerKind::Mala, ..never.clone() };
    let mut always = SamplerConfig::new(SamplerKind::Simpa);
    always.schedule = AdaptSchedule::Always;
    always.kappa = 1.0;
    let smmala = SamplerConfig { kind: SamplerKind::SmMala, ..always.clone() };
    let (ok_a, acc_a, end_a) = same_path(&never, &mala, &target, &x0);
    let (ok_b, acc_b, end_b) = same_path(&always, &smmala, &target, &x0);
    // the two reductions must be genuinely different kernels
    let distinct = end_a != end_b;
    let describe = |ok: bool, n: usize| if ok { format!("identical ({n} accepted)") } else { format!("diverged at step {n}") };
    outcome(
        ok_a && ok_b && distinct,
        format!(
            "vs MALA: {}; vs SM-MALA: {}; 1000 steps each; paths distinct: {distinct}",
            describe(ok_a, acc_a),
            describe(ok_b, acc_b)
        ),
    )
}

/// Criterion 5: the multivariate conditional of `w = Λ v` on a block equals the sum
/// of per-factor conditionals plus the Jacobian of `Λ`.
fn c5_lmc_factorization() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let mut r = rng(500 + case);
        let k = r.random_range(1..=3usize);
        let q = k;
        let b = two_by_two(&mut r, |r| r.random_range(1..=8));
        let n = b.coords.rows();
        let family = if case % 2 == 0 { CorrFamily::Exponential } else { CorrFamily::Matern32 };
        let phi: Vec<f64> = (0..k).map(|_| r.random_range(2.0..10.0)).collect();
        let bc = BlockConditionals::build(&b.g, &b.coords, &b.members, family, &phi).unwrap();
        let ctx = MeshContext { graph: &b.g, members: &b.members, bc: &bc, latent: LatentFamily::Gaussian };
        let lambda = lower_loadings(&mut r, q, k);
        let v = Matrix::from_fn(n, k, |_, _| normal(&mut r));
        let i = r.random_range(0..4usize);
        let lib = block_conditional_logdensity(&ctx, &v, i);
        let log_det_lambda: f64 = (0..k).map(|h| lambda[(h, h)].abs().ln()).sum();
        let lib_w = lib - b.members[i].len() as f64 * log_det_lambda;
        // dense q-variate joint over parents then own rows, outcome-major
        let par: Vec<usize> = b.g.parents(i).iter().flat_map(|&p| b.members[p].iter().copied()).collect();
        let rows: Vec<usize> = par.iter().chain(&b.members[i]).copied().collect();
        let m = rows.len();
        let corr: Vec<DMatrix<f64>> =
            phi.iter().map(|&p| dense_corr(&CorrelationSpec { family, phi: p }, &b.coords, &rows)).collect();
        let cov = DMatrix::from_fn(m * q, m * q, |a, c| {
            let (ja, ra, jc, rc) = (a / m, a % m, c / m, c % m);
            (0..k).map(|h| lambda[(ja, h)] * lambda[(jc, h)] * corr[h][(ra, rc)]).sum()
        });
        let w = v.matmul(&lambda.transpose());
        let wv = DVector::from_fn(m * q, |a, _| w[(rows[a % m], a / m)]);
        let np = par.len();
        let pidx: Vec<usize> = (0..m * q).filter(|a| a % m < np).collect();
        let oidx: Vec<usize> = (0..m * q).filter(|a| a % m >= np).collect();
        let sub = |ri: &[usize], ci: &[usize]| DMatrix::from_fn(ri.len(), ci.len(), |a, c| cov[(ri[a], ci[c])]);
        let (cpp, cop, coo) = (sub(&pidx, &pidx), sub(&oidx, &pidx), sub(&oidx, &oidx));
        let wp = DVector::from_fn(pidx.len(), |a, _| wv[pidx[a]]);
        let wo = DVector::from_fn(oidx.len(), |a, _| wv[oidx[a]]);
        let dense = if np == 0 {
            gauss_logpdf(&coo, &wo)
        } else {
            let ch = cpp.cholesky().unwrap();
            let mean = &cop * ch.solve(&wp);
            let cond = &coo - &cop * ch.solve(&cop.transpose());
            gauss_logpdf(&((&cond + cond.transpose()) * 0.5), &(wo - mean))
        };
        worst = worst.max((dense - lib_w).abs());
    }
    outcome(worst < 1e-8, format!("max |q-variate - per-factor sum| = {worst:.2e} over 200 random blocks"))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Criterion 6: analytic scores against central differences; information matrices
/// symmetric positive definite.
fn c6_gradients() -> Outcome {
    let families = [Family::Gaussian, Family::Poisson, Family::Bernoulli, Family::Binomial { trials: 10 }, Family::NegBinomial];
    let h = 1e-5;
    let mut r = rng(600);
    let mut worst_scalar: f64 = 0.0;
    let mut fisher_ok = true;
    for &f in &families {
        for _ in 0..1000 {
            let eta: f64 = r.random_range(-3.0..3.0);
            let gamma = match f {
                Family::Gaussian => r.random_range(0.3..2.0),
                Family::NegBinomial => r.random_range(0.1..2.0),
                _ => f64::NAN,
            };
            let y = sample(f, eta, gamma, &mut r);
            let fd = (loglik(f, y, eta + h, gamma) - loglik(f, y, eta - h, gamma)) / (2.0 * h);
            worst_scalar = worst_scalar.max(rel_err(score_eta(f, y, eta, gamma), fd));
            let fi = fisher_eta(f, eta, gamma);
            fisher_ok &= fi.is_finite() && fi > 0.0;
        }
    }
    let mut worst_block: f64 = 0.0;
    let mut blocks = 0;
    for &f in &families {
        for latent in [LatentFamily::Gaussian, LatentFamily::StudentT { nu: 5.0 }] {
            for _ in 0..100 {
                let fx = line_fixture(&mut r, 4, 2, vec![f, f]);
                let i = r.random_range(0..3usize);
                let target = fx.target(latent, i);
                let x = gather(&fx.v, &fx.members[i]);
                let (_, g) = target.log_density_and_gradient(&x);
                for (c, &gc) in g.iter().enumerate() {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[c] += h;
                    xm[c] -= h;
                    let fd = (target.log_density(&xp) - target.log_density(&xm)) / (2.0 * h);
                    worst_block = worst_block.max(rel_err(gc, fd));
                }
                let info = target.fisher(&x).expect("block targets expose their information");
                let scale = (0..info.rows()).map(|a| info[(a, a)].abs()).fold(1.0, f64::max);
                fisher_ok &= info.max_asymmetry() <= 1e-12 * scale && meshgp::latent::is_positive_definite(&info);
                blocks += 1;
            }
        }
    }
    outcome(
        worst_scalar < 1e-5 && worst_block < 1e-5 && fisher_ok,
        format!(
            "max rel. err {worst_scalar:.2e} (5000 outcome points), {worst_block:.2e} ({blocks} block states); information symmetric PD: {fisher_ok}"
        ),
    )
}

fn draw_bits(d: &Draws) -> Vec<u64> {
    let mats = d.beta.iter().chain(&d.lambda).chain(&d.v).flat_map(|m| m.as_slice().iter());
    let vecs = d.phi.iter().chain(&d.gamma).flat_map(|v| v.iter());
    mats.chain(vecs).chain(&d.log_posterior).map(|x| x.to_bits()).chain(d.v_index.iter().map(|&i| i as u64)).collect()
}

/// Criterion 7: serial and eight-worker chromatic sweeps give bit-identical chains.
fn c7_chromatic_determinism() -> Outcome {
    let (data, _) = simulate(Design::PoissonGrid { grid: 20 }, 7).unwrap();
    let spec = ModelSpec {
        families: vec![Family::Poisson; 2],
        k: 2,
        corr: CorrFamily::Exponential,
        latent: LatentFamily::Gaussian,
        partition: PartitionSpec::equal(vec![10, 10]),
    };
    let model = Model::new(data, spec).unwrap();
    let run = |threads: usize| {
        let mut cfg = ChainConfig::new(60, 20);
        cfg.threads = threads;
        cfg.seed = 77;
        cfg.record_log_posterior = true;
        run_chain(&model, &cfg).unwrap()
    };
    let (serial, parallel) = (run(1), run(8));
    let same = draw_bits(&serial.draws) == draw_bits(&parallel.draws)
        && serial.final_state.v.as_slice().iter().zip(parallel.final_state.v.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(
        same && !serial.draws.is_empty(),
        format!(
            "{} blocks in {} colors, {} draws: {}",
            model.graph.n_blocks(),
            model.graph.n_colors(),
            serial.draws.len(),
            if same { "bit-identical" } else { "chains differ" }
        ),
    )
}

fn poisson_grid_model(grid: usize, seed: u64) -> (Model, Truth) {
    let (data, truth): (Dataset, Truth) = simulate(Design::PoissonGrid { grid }, seed).unwrap();
    let per_axis = ((grid * grid) as f64 / 25.0).sqrt().round() as usize;
    let spec = ModelSpec {
        families: vec![Family::Poisson; 2],
        k: 2,
        corr: CorrFamily::Exponential,
        latent: LatentFamily::Gaussian,
        partition: PartitionSpec::equal(vec![per_axis, per_axis]),
    };
    (Model::new(data, spec).unwrap(), truth)
}

fn sample_sd(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Criterion 8: bivariate Poisson on a 40×40 grid.
fn c8_bivariate_poisson() -> Outcome {
    let t0 = Instant::now();
    let (model, truth) = poisson_grid_model(40, 8);
    let mut cfg = ChainConfig::new(6000, 1000);
    cfg.latent_thin = 10;
    cfg.seed = 8;
    let fit = run_chain(&model, &cfg).unwrap();
    let rep = diagnose(&model, &fit.draws, Some(&truth), cfg.seed, fit.diagnostics.timings.total).unwrap();
    let corr = omega_corr(&fit.draws.lambda).unwrap()[(0, 1)];
    let cov95 = rep.coverage.as_ref().and_then(|c| c.iter().find(|(l, _)| *l == 0.95)).map_or(f64::NAN, |c| c.1);
    let mut beats = true;
    let mut errs = Vec::new();
    for j in 0..2 {
        let eta: Vec<f64> = truth.test_entries().iter().filter(|e| e.1 == j).map(|&(r, _)| truth.eta[(r, j)]).collect();
        let (rm, sd) = (rep.rmspe_eta[j].unwrap_or(f64::INFINITY), sample_sd(&eta));
        beats &= rm < sd;
        errs.push(format!("{rm:.3} < {sd:.3}"));
    }
    let pass = (corr + 0.65).abs() <= 0.15 && (0.85..=0.99).contains(&cov95) && beats;
    outcome(
        pass,
        format!(
            "corr {corr:.3} (truth -0.65), 95% coverage {cov95:.3}, RMSPE vs SD {}, {:.0}s",
            errs.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

/// Criterion 9: ten binary outcomes from three factors.
fn c9_multivariate_binary() -> Outcome {
    let t0 = Instant::now();
    let (data, truth) = simulate(Design::Binary { n: 900, q: 10, k: 3 }, 9).unwrap();
    let spec = ModelSpec {
        families: vec![Family::Bernoulli; 10],
        k: 3,
        corr: CorrFamily::Exponential,
        latent: LatentFamily::Gaussian,
        partition: PartitionSpec::equal(vec![6, 6]),
    };
    let model = Model::new(data, spec).unwrap();
    let mut cfg = ChainConfig::new(10000, 5000);
    cfg.latent_thin = 10;
    cfg.seed = 9;
    let fit = run_chain(&model, &cfg).unwrap();
    let rep = diagnose(&model, &fit.draws, Some(&truth), cfg.seed, fit.diagnostics.timings.total).unwrap();
    let aucs: Vec<f64> = rep.auc.iter().flatten().copied().collect();
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len().max(1) as f64;
    let frob = rep.omega_frobenius.unwrap_or(f64::INFINITY);
    outcome(
        aucs.len() == 10 && mean_auc >= 0.80 && frob <= 2.5,
        format!("mean test AUC {mean_auc:.3}, Frobenius error {frob:.3}, {:.0}s", t0.elapsed().as_secs_f64()),
    )
}

/// Criterion 10: latent ESS per second with hyperparameters fixed at the truth.
fn c10_sampler_efficiency() -> Outcome {
    let (model, truth) = poisson_grid_model(40, 10);
    let rate = |kind: SamplerKind| {
        let mut cfg = ChainConfig::new(2500, 500);
        cfg.seed = 10;
        cfg.latent_sampler.kind = kind;
        cfg.updates.regression = false;
        cfg.updates.loadings = false;
        cfg.updates.nuisance = false;
        cfg.updates.phi = false;
        let mut state = initialize(&model, &cfg);
        state.beta = truth.beta.clone();
        state.lambda = truth.lambda.clone();
        state.phi = truth.phi.clone();
        let out = Chain::with_state(&model, cfg.clone(), state).unwrap().run().unwrap();
        let secs = out.diagnostics.timings.latent;
        let rep = diagnose(&model, &out.draws, None, cfg.seed, secs).unwrap();
        rep.ess.iter().find(|e| e.0 == "latent_median").map_or(0.0, |e| e.2)
    };
    let (simpa, mala, smmala) = (rate(SamplerKind::Simpa), rate(SamplerKind::Mala), rate(SamplerKind::SmMala));
    outcome(
        simpa > mala && simpa > smmala,
        format!("median latent ESS/s: SiMPA {simpa:.1}, MALA {mala:.1}, SM-MALA {smmala:.1}"),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test` passes libtest flags; a bare number selects one criterion
    let only: Option<usize> = args.iter().skip(1).find_map(|a| a.parse().ok());
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("meshed density equals dense density on a full DAG", c1_full_dag_oracle),
        ("coarser nested partition is closer in KL", c2_nested_kl),
        ("modified SM-MALA is a Gibbs draw for Gaussian data", c3_gibbs_equivalence),
        ("SiMPA reduces to MALA and SM-MALA", c4_path_identity),
        ("LMC conditional factorizes over factors", c5_lmc_factorization),
        ("scores match finite differences", c6_gradients),
        ("chromatic sweep is deterministic across workers", c7_chromatic_determinism),
        ("bivariate Poisson reproduction", c8_bivariate_poisson),
        ("multivariate binary reproduction", c9_multivariate_binary),
        ("SiMPA is the most efficient latent sampler", c10_sampler_efficiency),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {:>2}: {} | {name} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
