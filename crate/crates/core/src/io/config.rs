//! Flat `key = value` run configuration with `#` comments.
//!
//! Keys under `info.` are informational (written to manifests) and are
//! accepted without being interpreted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::engine::{ChainConfig, ModelSpec};
use crate::error::{Error, Result};
use crate::io::table::Schema;
use crate::kernels::{CorrFamily, LatentFamily};
use crate::mesh::{BreakMode, PartitionSpec};
use crate::outcomes::Family;
use crate::samplers::{AdaptSchedule, SamplerKind};

/// Every recognized key with its default; `None` marks a required key.
const KEYS: &[(&str, Option<&str>)] = &[
    ("data", None),
    ("coords", None),
    ("families", None),
    ("k", None),
    ("partition", None),
    ("iterations", None),
    ("burn_in", None),
    ("partition_mode", Some("equal")),
    ("corr", Some("exponential")),
    ("latent", Some("gaussian")),
    ("intercept", Some("true")),
    ("sampler", Some("simpa")),
    ("regression_sampler", Some("simpa")),
    ("thin", Some("1")),
    ("latent_thin", Some("1")),
    ("seed", Some("1")),
    ("threads", Some("0")),
    ("eps0", Some("0.1")),
    ("kappa", Some("0.01")),
    ("adapt_tbar", Some("500")),
    ("adapt_exponent", Some("0.3333333333333333")),
    ("target_accept", Some("0.574")),
    ("phi_low", Some("0.1")),
    ("phi_high", Some("10")),
    ("beta_sd", Some("1")),
    ("lambda_sd", Some("1")),
    ("log_gamma_sd", Some("3")),
    ("update_regression", Some("true")),
    ("update_loadings", Some("true")),
    ("update_nuisance", Some("true")),
    ("update_phi", Some("true")),
    ("update_latent", Some("true")),
    ("record_log_posterior", Some("false")),
    ("truth", Some("")),
];

/// Parsed configuration with the raw values kept for echoing.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub data: PathBuf,
    pub schema: Schema,
    pub model: ModelSpec,
    pub chain: ChainConfig,
    /// Directory holding a simulation's ground truth, if any.
    pub truth: Option<PathBuf>,
}

fn split_line(line: &str, no: usize) -> Result<Option<(String, String)>> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let (k, v) = body.split_once('=').ok_or_else(|| Error::Config(format!("line {no}: expected key = value")))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

fn known(key: &str) -> bool {
    key.starts_with("info.") || KEYS.iter().any(|(k, _)| *k == key)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

impl RunConfig {
    /// Parses config text; `overrides` are `key=value` strings applied on top.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if let Some((k, v)) = split_line(line, i + 1)? {
                if !known(&k) {
                    return Err(Error::Config(format!("unknown key {k:?} on line {}", i + 1)));
                }
                values.insert(k, v);
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let k = k.trim().to_string();
            if !known(&k) {
                return Err(Error::Config(format!("unknown key {k:?} in override")));
            }
            values.insert(k, v.trim().to_string());
        }
        for (k, default) in KEYS {
            match default {
                None if !values.contains_key(*k) => return Err(Error::Config(format!("missing required key {k:?}"))),
                Some(d) => {
                    values.entry(k.to_string()).or_insert_with(|| d.to_string());
                }
                None => {}
            }
        }
        Self::build(values)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text, overrides)?;
        if let Some(dir) = path.parent() {
            c.resolve_paths(dir);
        }
        Ok(c)
    }

    fn build(values: BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| values[k].as_str();
        let families: Vec<Family> = get("families").split(',').map(Family::parse).collect::<Result<_>>()?;
        let coords: usize = parse_num("coords", get("coords"))?;
        let breaks: Vec<usize> = parse_list("partition", get("partition"))?;
        let mode = match get("partition_mode") {
            "equal" => BreakMode::EqualSpacing,
            "quantile" => BreakMode::Quantile,
            m => return Err(Error::Config(format!("partition_mode: unknown mode {m:?}"))),
        };
        let corr = match get("corr") {
            "exponential" => CorrFamily::Exponential,
            "matern32" => CorrFamily::Matern32,
            c => return Err(Error::Config(format!("corr: unknown family {c:?}"))),
        };
        let latent = match get("latent") {
            "gaussian" => LatentFamily::Gaussian,
            s => match s.strip_prefix("student:") {
                Some(nu) => LatentFamily::StudentT { nu: parse_num("latent", nu)? },
                None => return Err(Error::Config(format!("latent: expected gaussian or student:NU, got {s:?}"))),
            },
        };
        let model = ModelSpec {
            families: families.clone(),
            k: parse_num("k", get("k"))?,
            corr,
            latent,
            partition: PartitionSpec { breaks_per_axis: breaks, mode },
        };
        let kind = |key: &str| {
            SamplerKind::parse(get(key)).ok_or_else(|| Error::Config(format!("{key}: unknown sampler {:?}", get(key))))
        };
        let mut chain = ChainConfig::new(parse_num("iterations", get("iterations"))?, parse_num("burn_in", get("burn_in"))?);
        chain.thin = parse_num("thin", get("thin"))?;
        chain.latent_thin = parse_num("latent_thin", get("latent_thin"))?;
        chain.seed = parse_num("seed", get("seed"))?;
        chain.threads = parse_num("threads", get("threads"))?;
        let schedule =
            AdaptSchedule::Decay { t_bar: parse_num("adapt_tbar", get("adapt_tbar"))?, a: parse_num("adapt_exponent", get("adapt_exponent"))? };
        for (s, key) in [(&mut chain.latent_sampler, "sampler"), (&mut chain.regression_sampler, "regression_sampler")] {
            s.kind = kind(key)?;
            s.eps0 = parse_num("eps0", get("eps0"))?;
            s.kappa = parse_num("kappa", get("kappa"))?;
            s.schedule = schedule;
            s.target_accept = parse_num("target_accept", get("target_accept"))?;
        }
        chain.priors.phi_bounds = (parse_num("phi_low", get("phi_low"))?, parse_num("phi_high", get("phi_high"))?);
        chain.priors.beta_sd = parse_num("beta_sd", get("beta_sd"))?;
        chain.priors.lambda_sd = parse_num("lambda_sd", get("lambda_sd"))?;
        chain.priors.log_gamma_sd = parse_num("log_gamma_sd", get("log_gamma_sd"))?;
        chain.updates.regression = parse_bool("update_regression", get("update_regression"))?;
        chain.updates.loadings = parse_bool("update_loadings", get("update_loadings"))?;
        chain.updates.nuisance = parse_bool("update_nuisance", get("update_nuisance"))?;
        chain.updates.phi = parse_bool("update_phi", get("update_phi"))?;
        chain.updates.latent = parse_bool("update_latent", get("update_latent"))?;
        chain.record_log_posterior = parse_bool("record_log_posterior", get("record_log_posterior"))?;
        chain.validate()?;
        let truth = match get("truth") {
            "" => None,
            t => Some(PathBuf::from(t)),
        };
        Ok(Self {
            data: PathBuf::from(get("data")),
            schema: Schema { coords, outcomes: families.len(), intercept: parse_bool("intercept", get("intercept"))? },
            model,
            chain,
            truth,
            values,
        })
    }

    /// All settings, defaults included, as config text (no `info.` keys).
    pub fn echo(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !k.starts_with("info."))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Resolves relative `data` and `truth` paths against `base` and makes
    /// them absolute.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &Path| {
            let p = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
            std::path::absolute(&p).unwrap_or(p)
        };
        self.data = fix(&self.data);
        self.values.insert("data".into(), self.data.display().to_string());
        if let Some(t) = &self.truth {
            let t = fix(t);
            self.values.insert("truth".into(), t.display().to_string());
            self.truth = Some(t);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}
