//! Fit directories: manifest, per-group draw tables and diagnostics.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::{fitted_eta, ChainOutput, Draws, Model, StageTimings};
use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::io::simulate::Truth;
use crate::io::table::{read_matrix, write_matrix};
use crate::linalg::Matrix;
use crate::metrics::{auc, coverage, crps_from_samples, ess, maep, omega_corr, rmspe, DiagnosticsReport, Interval};
use crate::outcomes::{sample, Family};
use crate::rng::{substream, Group};

pub const MANIFEST: &str = "manifest.txt";
/// Levels at which interval coverage is reported.
pub const COVERAGE_LEVELS: [f64; 5] = [0.5, 0.8, 0.9, 0.95, 0.99];

fn stack(rows: &[Vec<f64>]) -> Matrix<f64> {
    let c = rows.first().map_or(0, Vec::len);
    Matrix::from_fn(rows.len(), c, |r, j| rows[r][j])
}

fn flat(m: &[Matrix<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|x| x.as_slice().to_vec()).collect()
}

fn beta_names(model: &Model) -> Vec<String> {
    let d = &model.data;
    (0..model.q())
        .flat_map(|j| d.covariate_names.iter().map(move |c| format!("beta[{},{c}]", d.outcome_name(j))))
        .collect()
}

fn lambda_names(model: &Model) -> Vec<String> {
    (0..model.q()).flat_map(|j| (0..model.k()).map(move |h| format!("lambda[{},{}]", j + 1, h + 1))).collect()
}

fn phi_names(model: &Model) -> Vec<String> {
    (1..=model.k()).map(|h| format!("phi[{h}]")).collect()
}

fn gamma_names(model: &Model) -> Vec<String> {
    (0..model.q()).map(|j| format!("gamma[{}]", model.data.outcome_name(j))).collect()
}

fn latent_names(model: &Model) -> Vec<String> {
    let mut h = vec!["draw".to_string()];
    h.extend((0..model.n()).flat_map(|r| (1..=model.k()).map(move |f| format!("v[{},{f}]", r + 1))));
    h
}

/// Writes the draw tables.
pub fn write_draws(dir: &Path, model: &Model, draws: &Draws) -> Result<()> {
    write_matrix(&dir.join("draws_beta.csv"), &beta_names(model), &stack(&flat(&draws.beta)))?;
    write_matrix(&dir.join("draws_lambda.csv"), &lambda_names(model), &stack(&flat(&draws.lambda)))?;
    write_matrix(&dir.join("draws_phi.csv"), &phi_names(model), &stack(&draws.phi))?;
    write_matrix(&dir.join("draws_gamma.csv"), &gamma_names(model), &stack(&draws.gamma))?;
    let latent: Vec<Vec<f64>> = draws
        .v
        .iter()
        .zip(&draws.v_index)
        .map(|(v, &i)| std::iter::once(i as f64).chain(v.as_slice().iter().copied()).collect())
        .collect();
    write_matrix(&dir.join("draws_latent.csv"), &latent_names(model), &stack(&latent))?;
    if !draws.log_posterior.is_empty() {
        let lp = Matrix::from_vec(draws.log_posterior.len(), 1, draws.log_posterior.clone());
        write_matrix(&dir.join("draws_log_posterior.csv"), &["log_posterior".to_string()], &lp)?;
    }
    Ok(())
}

fn read_table(dir: &Path, name: &str, cols: usize) -> Result<Matrix<f64>> {
    let (header, m) = read_matrix(&dir.join(name))?;
    if header.len() != cols {
        return Err(Error::Config(format!("{name}: expected {cols} columns, found {}", header.len())));
    }
    Ok(m)
}

/// Reads draw tables written by [`write_draws`].
pub fn read_draws(dir: &Path, model: &Model) -> Result<Draws> {
    let (q, k, p, n) = (model.q(), model.k(), model.p(), model.n());
    let rows = |m: &Matrix<f64>| (0..m.rows()).map(|r| m.row(r).to_vec()).collect::<Vec<_>>();
    let beta = read_table(dir, "draws_beta.csv", q * p)?;
    let lambda = read_table(dir, "draws_lambda.csv", q * k)?;
    let phi = read_table(dir, "draws_phi.csv", k)?;
    let gamma = read_table(dir, "draws_gamma.csv", q)?;
    let latent = read_table(dir, "draws_latent.csv", 1 + n * k)?;
    let lp_path = dir.join("draws_log_posterior.csv");
    let log_posterior = if lp_path.exists() { read_matrix(&lp_path)?.1.into_vec() } else { Vec::new() };
    Ok(Draws {
        beta: rows(&beta).into_iter().map(|r| Matrix::from_vec(q, p, r)).collect(),
        lambda: rows(&lambda).into_iter().map(|r| Matrix::from_vec(q, k, r)).collect(),
        phi: rows(&phi),
        gamma: rows(&gamma),
        v: (0..latent.rows()).map(|r| Matrix::from_vec(n, k, latent.row(r)[1..].to_vec())).collect(),
        v_index: (0..latent.rows()).map(|r| latent[(r, 0)] as usize).collect(),
        log_posterior,
    })
}

/// Manifest: the full config echo followed by `info.` keys describing the
/// mesh and the run.
pub fn write_manifest(dir: &Path, cfg: &RunConfig, model: &Model, out: &ChainOutput) -> Result<()> {
    let mut s = String::from("# meshgp run manifest; usable as a config file\n");
    s.push_str(&cfg.echo());
    let sizes: Vec<usize> = {
        let mut v: Vec<usize> = model.members().iter().map(Vec::len).collect();
        v.sort_unstable();
        v
    };
    let t = &out.diagnostics.timings;
    let _ = writeln!(s, "info.version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "info.reference_locations = {}", model.n());
    let _ = writeln!(s, "info.blocks = {}", model.graph.n_blocks());
    let _ = writeln!(s, "info.colors = {}", model.graph.n_colors());
    let _ = writeln!(
        s,
        "info.block_size = min {} median {} max {}",
        sizes.first().unwrap_or(&0),
        sizes.get(sizes.len() / 2).unwrap_or(&0),
        sizes.last().unwrap_or(&0)
    );
    let _ = writeln!(s, "info.draws = {}", out.draws.len());
    let _ = writeln!(s, "info.latent_draws = {}", out.draws.v.len());
    for (name, v) in
        [("regression", t.regression), ("nuisance", t.nuisance), ("phi", t.phi), ("latent", t.latent), ("total", t.total)]
    {
        let _ = writeln!(s, "info.seconds_{name} = {v}");
    }
    std::fs::write(dir.join(MANIFEST), s)?;
    Ok(())
}

/// Stage timings recorded in a manifest.
pub fn read_timings(cfg: &RunConfig) -> StageTimings {
    let g = |k: &str| cfg.get(&format!("info.seconds_{k}")).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    StageTimings { regression: g("regression"), nuisance: g("nuisance"), phi: g("phi"), latent: g("latent"), total: g("total") }
}

fn column(m: &[Matrix<f64>], r: usize, c: usize) -> Vec<f64> {
    m.iter().map(|x| x[(r, c)]).collect()
}

/// Recomputes every diagnostic from draws. Held-out metrics need `truth`.
/// `seconds` is the sampling wall-clock used for ESS per second.
pub fn diagnose(model: &Model, draws: &Draws, truth: Option<&Truth>, seed: u64, seconds: f64) -> Result<DiagnosticsReport> {
    let mut rep = DiagnosticsReport::default();
    let (q, k, p) = (model.q(), model.k(), model.p());
    let mut push_ess = |name: String, x: Vec<f64>| {
        if let Ok(e) = ess(&x) {
            rep.ess.push((name, e.value, e.value / seconds));
        }
    };
    if draws.len() >= crate::metrics::MIN_ESS_DRAWS {
        for j in 0..q {
            for c in 0..p {
                push_ess(format!("beta[{},{}]", j + 1, c + 1), column(&draws.beta, j, c));
            }
            for h in 0..model.free_loadings(j) {
                push_ess(format!("lambda[{},{}]", j + 1, h + 1), column(&draws.lambda, j, h));
            }
            if model.spec.families[j].has_nuisance() {
                push_ess(format!("gamma[{}]", j + 1), draws.gamma.iter().map(|g| g[j]).collect());
            }
        }
        for h in 0..k {
            push_ess(format!("phi[{}]", h + 1), draws.phi.iter().map(|f| f[h]).collect());
        }
    }
    if draws.v.len() >= crate::metrics::MIN_ESS_DRAWS {
        let mut all: Vec<f64> = (0..model.n())
            .flat_map(|r| (0..k).map(move |h| (r, h)))
            .filter_map(|(r, h)| ess(&column(&draws.v, r, h)).ok().map(|e| e.value))
            .collect();
        if !all.is_empty() {
            all.sort_by(f64::total_cmp);
            let med = all[all.len() / 2];
            rep.ess.push(("latent_median".into(), med, med / seconds));
        }
    }
    if !draws.is_empty() {
        let oc = omega_corr(&draws.lambda)?;
        if let Some(t) = truth {
            if t.omega_corr.rows() == q {
                rep.omega_frobenius = Some(oc.frobenius_distance(&t.omega_corr));
            }
        }
        rep.omega_corr = Some(oc);
    }
    let Some(t) = truth else { return Ok(rep) };
    if t.eta.rows() != model.data.n() || t.eta.cols() != q {
        return Err(Error::Invalid("truth does not match the dataset".into()));
    }
    if draws.v.is_empty() {
        return Ok(rep);
    }
    let eta = fitted_eta(model, draws, seed)?;
    let mut rng = substream(seed, Group::Predict, u64::MAX, 0);
    let entries = t.test_entries();
    let mut pooled_draws = Vec::with_capacity(entries.len());
    let mut pooled_truth = Vec::with_capacity(entries.len());
    for j in 0..q {
        let fam: Family = model.spec.families[j];
        let rows: Vec<usize> = entries.iter().filter(|e| e.1 == j).map(|e| e.0).collect();
        let (mut mean_eta, mut true_eta, mut mean_y, mut true_y, mut crps, mut prob) =
            (vec![], vec![], vec![], vec![], vec![], vec![]);
        for &r in &rows {
            let e: Vec<f64> = eta.iter().map(|m| m[(r, j)]).collect();
            let yd: Vec<f64> = e
                .iter()
                .zip(&draws.v_index)
                .map(|(&x, &d)| sample(fam, x, draws.gamma[d][j], &mut rng))
                .collect();
            mean_eta.push(e.iter().sum::<f64>() / e.len() as f64);
            true_eta.push(t.eta[(r, j)]);
            mean_y.push(yd.iter().sum::<f64>() / yd.len() as f64);
            true_y.push(t.y[(r, j)]);
            prob.push(e.iter().map(|&x| fam.mean(x)).sum::<f64>() / e.len() as f64);
            if yd.len() >= 2 {
                crps.push(crps_from_samples(&yd, t.y[(r, j)])?);
            }
            pooled_draws.push(e);
            pooled_truth.push(t.eta[(r, j)]);
        }
        rep.rmspe_eta.push(rmspe(&mean_eta, &true_eta));
        rep.maep_eta.push(maep(&mean_eta, &true_eta));
        rep.rmspe_y.push(rmspe(&mean_y, &true_y));
        rep.maep_y.push(maep(&mean_y, &true_y));
        rep.crps_y.push(if crps.is_empty() { None } else { Some(crps.iter().sum::<f64>() / crps.len() as f64) });
        rep.auc.push(match fam {
            Family::Bernoulli => auc(&prob, &true_y.iter().map(|&y| y > 0.5).collect::<Vec<_>>()),
            _ => None,
        });
    }
    rep.coverage = coverage(&pooled_draws, &pooled_truth, &COVERAGE_LEVELS, Interval::Central)?
        .map(|c| COVERAGE_LEVELS.iter().copied().zip(c).collect());
    Ok(rep)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x}"))
}

/// `(metric, index, value)` rows of a report.
pub fn report_rows(rep: &DiagnosticsReport) -> Vec<(String, String, String)> {
    let mut rows = Vec::new();
    for (name, e, es) in &rep.ess {
        rows.push(("ess".into(), name.clone(), format!("{e}")));
        rows.push(("ess_per_second".into(), name.clone(), format!("{es}")));
    }
    for (metric, vals) in [
        ("rmspe_eta", &rep.rmspe_eta),
        ("maep_eta", &rep.maep_eta),
        ("rmspe_y", &rep.rmspe_y),
        ("maep_y", &rep.maep_y),
        ("crps_y", &rep.crps_y),
        ("auc", &rep.auc),
    ] {
        for (j, v) in vals.iter().enumerate() {
            rows.push((metric.into(), format!("{}", j + 1), opt(*v)));
        }
    }
    if let Some(c) = &rep.coverage {
        for (l, v) in c {
            rows.push(("coverage_eta".into(), format!("{l}"), format!("{v}")));
        }
    }
    if let Some(o) = &rep.omega_corr {
        for a in 0..o.rows() {
            for b in 0..o.cols() {
                rows.push(("omega_corr".into(), format!("{},{}", a + 1, b + 1), format!("{}", o[(a, b)])));
            }
        }
    }
    if let Some(f) = rep.omega_frobenius {
        rows.push(("omega_frobenius".into(), String::new(), format!("{f}")));
    }
    rows
}

/// Writes `diagnostics.txt` (key = value) and `diagnostics.csv`.
pub fn write_diagnostics(dir: &Path, rep: &DiagnosticsReport) -> Result<()> {
    let rows = report_rows(rep);
    let mut txt = String::new();
    for (m, i, v) in &rows {
        if i.is_empty() {
            let _ = writeln!(txt, "{m} = {v}");
        } else {
            let _ = writeln!(txt, "{m}[{i}] = {v}");
        }
    }
    std::fs::write(dir.join("diagnostics.txt"), txt)?;
    let mut w = csv::Writer::from_path(dir.join("diagnostics.csv"))?;
    w.write_record(["metric", "index", "value"])?;
    for (m, i, v) in &rows {
        w.write_record([m, i, v])?;
    }
    w.flush()?;
    Ok(())
}

/// A fitted model read back from its output directory.
pub struct Fit {
    pub config: RunConfig,
    pub model: Model,
    pub draws: Draws,
}

pub fn load_fit(dir: &Path) -> Result<Fit> {
    let config = RunConfig::load(&dir.join(MANIFEST), &[])?;
    let data = crate::io::table::load_csv(&config.data, config.schema)?;
    let model = Model::new(data, config.model.clone())?;
    let draws = read_draws(dir, &model)?;
    Ok(Fit { config, model, draws })
}

/// Reads prediction locations: coordinate columns then the fit's covariates
/// (without the intercept, which is added as for the training data).
pub fn read_locations(path: &Path, fit: &Fit) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let (header, m) = read_matrix(path)?;
    let d = fit.model.data.d();
    let names = &fit.model.data.covariate_names;
    let implicit = fit.config.schema.intercept && !header.iter().any(|h| h == "intercept");
    let p_file = names.len() - usize::from(implicit);
    if header.len() != d + p_file {
        return Err(Error::Data {
            line: 1,
            msg: format!("expected {d} coordinate and {p_file} covariate columns, found {} columns", header.len()),
        });
    }
    if let Some(r) = (0..m.rows()).find(|&r| m.row(r).iter().any(|v| !v.is_finite())) {
        return Err(Error::Data { line: r + 2, msg: "missing or non-finite value".into() });
    }
    let coords = Matrix::from_fn(m.rows(), d, |r, c| m[(r, c)]);
    let off = usize::from(implicit);
    let x = Matrix::from_fn(m.rows(), names.len(), |r, c| if c < off { 1.0 } else { m[(r, d + c - off)] });
    Ok((coords, x))
}

/// Per location and outcome: posterior mean and central 95% interval of
/// the linear predictor and of the outcome.
pub fn write_predictions(path: &Path, fit: &Fit, coords: &Matrix<f64>, pred: &crate::engine::Prediction) -> Result<()> {
    let data = &fit.model.data;
    let mut header: Vec<String> = data.coord_names.clone();
    for j in 0..data.q() {
        let o = data.outcome_name(j);
        for s in ["eta_mean", "eta_q025", "eta_q975", "y_mean", "y_q025", "y_q975"] {
            header.push(format!("{o}_{s}"));
        }
    }
    let summarize = |d: &[Matrix<f64>], r: usize, j: usize| -> [f64; 3] {
        let mut x: Vec<f64> = d.iter().map(|m| m[(r, j)]).collect();
        x.sort_by(f64::total_cmp);
        if x.is_empty() {
            return [f64::NAN; 3];
        }
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        [mean, crate::metrics::quantile(&x, 0.025), crate::metrics::quantile(&x, 0.975)]
    };
    let rows: Vec<Vec<f64>> = (0..coords.rows())
        .map(|r| {
            let mut row = coords.row(r).to_vec();
            for j in 0..data.q() {
                row.extend(summarize(&pred.eta, r, j));
                row.extend(summarize(&pred.y, r, j));
            }
            row
        })
        .collect();
    write_matrix(path, &header, &Matrix::from_fn(rows.len(), header.len(), |r, c| rows[r][c]))
}
