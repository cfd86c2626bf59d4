use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use meshgp::engine::{predict, run_chain, Model};
use meshgp::io::output::{self, load_fit, read_locations, read_timings, write_predictions};
use meshgp::io::{load_csv, read_truth, simulate, write_csv, write_truth, Design, RunConfig};

#[derive(Parser)]
#[command(name = "meshgp", version, about = "Spatial factor models for multivariate non-Gaussian data on a cubic mesh")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignName {
    PoissonGrid,
    Binary,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a dataset with known truth and a matching config.
    Simulate {
        #[arg(long, value_enum)]
        design: DesignName,
        /// Sites per axis (poisson-grid).
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Number of sites (binary).
        #[arg(long, default_value_t = 2500)]
        n: usize,
        /// Number of outcomes (binary).
        #[arg(long, default_value_t = 10)]
        q: usize,
        /// Number of factors (binary).
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a chain and write draws, manifest and diagnostics.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, as key=value. Repeatable.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior predictive summaries at new locations.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        locations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Recompute diagnostics of a fit, optionally against known truth.
    Diagnose {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Simulate { design, grid, n, q, k, seed, out } => {
            let design = match design {
                DesignName::PoissonGrid => Design::PoissonGrid { grid },
                DesignName::Binary => Design::Binary { n, q, k },
            };
            cmd_simulate(design, seed, &out)
        }
        Cmd::Fit { config, set, out } => cmd_fit(&config, &set, &out),
        Cmd::Predict { fit, locations, out, seed } => cmd_predict(&fit, &locations, &out, seed),
        Cmd::Diagnose { fit, truth } => cmd_diagnose(&fit, truth.as_deref()),
    }
}

fn cmd_simulate(design: Design, seed: u64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let (data, truth) = simulate(design, seed)?;
    write_csv(&out.join("data.csv"), &data)?;
    write_truth(out, &truth)?;
    let (k, n) = match design {
        Design::PoissonGrid { grid } => (2, grid * grid),
        Design::Binary { n, k, .. } => (k, n),
    };
    // about 25 sites per block
    let per_axis = ((n as f64 / 25.0).sqrt().round() as usize).max(1);
    let families: Vec<&str> = design.families().iter().map(|f| f.name()).collect();
    let cfg = format!(
        "data = data.csv\ntruth = .\ncoords = 2\nfamilies = {}\nk = {k}\npartition = {per_axis},{per_axis}\n\
         iterations = 2000\nburn_in = 1000\nlatent_thin = 10\nseed = {seed}\n",
        families.join(",")
    );
    std::fs::write(out.join("config.txt"), cfg)?;
    info!("{}: {} sites, {} outcomes written to {}", design.name(), data.n(), data.q(), out.display());
    Ok(())
}

fn cmd_fit(config: &Path, set: &[String], out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config, set)?;
    let data = load_csv(&cfg.data, cfg.schema).with_context(|| format!("loading {}", cfg.data.display()))?;
    let model = Model::new(data, cfg.model.clone())?;
    info!(
        "{} reference locations, {} blocks in {} colors, {} iterations",
        model.n(),
        model.graph.n_blocks(),
        model.graph.n_colors(),
        cfg.chain.iterations
    );
    let truth = cfg.truth.as_deref().map(read_truth).transpose()?;
    let start = Instant::now();
    let fit = run_chain(&model, &cfg.chain)?;
    info!("sampling took {:.1}s", start.elapsed().as_secs_f64());
    std::fs::create_dir_all(out)?;
    output::write_manifest(out, &cfg, &model, &fit)?;
    output::write_draws(out, &model, &fit.draws)?;
    let rep = output::diagnose(&model, &fit.draws, truth.as_ref(), cfg.chain.seed, fit.diagnostics.timings.total)?;
    output::write_diagnostics(out, &rep)?;
    let d = &fit.diagnostics;
    let mean = |v: &[f64]| v.iter().filter(|x| x.is_finite()).sum::<f64>() / v.len().max(1) as f64;
    info!(
        "mean acceptance: latent {:.3}, regression {:.3}, phi {:.3}",
        mean(&d.block_acceptance),
        mean(&d.regression_acceptance),
        mean(&d.phi_acceptance)
    );
    info!("{} draws written to {}", fit.draws.len(), out.display());
    Ok(())
}

fn cmd_predict(fit_dir: &Path, locations: &Path, out: &Path, seed: u64) -> Result<()> {
    let fit = load_fit(fit_dir)?;
    let (coords, x) = read_locations(locations, &fit)?;
    if fit.draws.v.is_empty() && coords.rows() > 0 {
        bail!("the fit has no latent draws to predict from");
    }
    let pred = predict(&fit.model, &fit.draws, &coords, &x, seed)?;
    write_predictions(out, &fit, &coords, &pred)?;
    info!("{} locations predicted from {} draws", coords.rows(), pred.eta.len());
    Ok(())
}

fn cmd_diagnose(fit_dir: &Path, truth: Option<&Path>) -> Result<()> {
    let fit = load_fit(fit_dir)?;
    let truth_dir = truth.map(Path::to_path_buf).or_else(|| fit.config.truth.clone());
    let truth = truth_dir.as_deref().map(read_truth).transpose()?;
    let seconds = read_timings(&fit.config).total;
    let rep = output::diagnose(&fit.model, &fit.draws, truth.as_ref(), fit.config.chain.seed, seconds)?;
    output::write_diagnostics(fit_dir, &rep)?;
    for (m, i, v) in output::report_rows(&rep) {
        if i.is_empty() {
            println!("{m} = {v}");
        } else {
            println!("{m}[{i}] = {v}");
        }
    }
    Ok(())
}
