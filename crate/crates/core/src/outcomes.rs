//! Outcome families: log-density, score and expected information in the
//! linear predictor η.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};

use crate::error::{Error, Result};
use crate::scalar::{ln_gamma, logistic, softplus, Real};

/// Range to which η is clamped inside every exponential.
pub const ETA_CLAMP: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Mean η, standard deviation γ.
    Gaussian,
    /// Mean e^η.
    Poisson,
    /// Logit link.
    Bernoulli,
    /// Logit link with a fixed number of trials.
    Binomial { trials: u32 },
    /// Mean μ = e^η, variance μ + τμ² with τ = γ.
    NegBinomial,
}

impl Family {
    pub fn has_nuisance(self) -> bool {
        matches!(self, Family::Gaussian | Family::NegBinomial)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
            Family::Bernoulli => "bernoulli",
            Family::Binomial { .. } => "binomial",
            Family::NegBinomial => "negbinomial",
        }
    }

    /// Parses `gaussian`, `poisson`, `bernoulli`, `binomial:N`, `negbinomial`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "gaussian" | "normal" => Family::Gaussian,
            "poisson" => Family::Poisson,
            "bernoulli" | "binary" => Family::Bernoulli,
            "negbinomial" | "negbin" => Family::NegBinomial,
            _ => match s.strip_prefix("binomial:") {
                Some(n) => Family::Binomial {
                    trials: n.parse().map_err(|_| Error::Config(format!("bad trial count in {s:?}")))?,
                },
                None => return Err(Error::Config(format!("unknown family {s:?}"))),
            },
        })
    }

    pub fn label(self) -> String {
        match self {
            Family::Binomial { trials } => format!("binomial:{trials}"),
            f => f.name().to_string(),
        }
    }

    /// Rejects observations outside the family's support.
    pub fn check_support(self, y: f64) -> Result<()> {
        let count = y >= 0.0 && y.fract() == 0.0;
        let ok = match self {
            Family::Gaussian => y.is_finite(),
            Family::Poisson | Family::NegBinomial => count && y.is_finite(),
            Family::Bernoulli => y == 0.0 || y == 1.0,
            Family::Binomial { trials } => count && y <= trials as f64,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfSupport { family: self.name(), value: y })
        }
    }

    /// Mean of y given η.
    pub fn mean<T: Real>(self, eta: T) -> T {
        match self {
            Family::Gaussian => eta,
            Family::Poisson | Family::NegBinomial => clamp(eta).exp(),
            Family::Bernoulli => logistic(eta),
            Family::Binomial { trials } => T::lit(trials as f64) * logistic(eta),
        }
    }

    /// Default nuisance value for families that have one.
    pub fn default_nuisance(self) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::NegBinomial => 0.5,
            _ => f64::NAN,
        }
    }
}

#[inline]
fn clamp<T: Real>(eta: T) -> T {
    let c = T::lit(ETA_CLAMP);
    eta.max(-c).min(c)
}

fn ln_factorial<T: Real>(y: T) -> T {
    ln_gamma(y + T::one())
}

/// `ln(r + e^η)` without overflow.
#[inline]
fn ln_r_plus_mu<T: Real>(r: T, eta: T) -> T {
    let lr = r.ln();
    lr + softplus(eta - lr)
}

/// `ln dF(y | η, γ)`.
pub fn loglik<T: Real>(family: Family, y: T, eta: T, gamma: T) -> T {
    match family {
        Family::Gaussian => {
            let z = (y - eta) / gamma;
            -T::half() * T::ln_2pi() - gamma.ln() - T::half() * z * z
        }
        Family::Poisson => {
            let e = clamp(eta);
            y * e - e.exp() - ln_factorial(y)
        }
        Family::Bernoulli => y * eta - softplus(eta),
        Family::Binomial { trials } => {
            let n = T::lit(trials as f64);
            ln_gamma(n + T::one()) - ln_factorial(y) - ln_factorial(n - y) + y * eta - n * softplus(eta)
        }
        Family::NegBinomial => {
            let e = clamp(eta);
            let r = gamma.recip();
            ln_gamma(y + r) - ln_gamma(r) - ln_factorial(y) + r * r.ln() + y * e - (r + y) * ln_r_plus_mu(r, e)
        }
    }
}

/// `∂/∂η ln dF(y | η, γ)`.
pub fn score_eta<T: Real>(family: Family, y: T, eta: T, gamma: T) -> T {
    match family {
        Family::Gaussian => (y - eta) / (gamma * gamma),
        Family::Poisson => y - clamp(eta).exp(),
        Family::Bernoulli => y - logistic(eta),
        Family::Binomial { trials } => y - T::lit(trials as f64) * logistic(eta),
        Family::NegBinomial => {
            let e = clamp(eta);
            let r = gamma.recip();
            // r (y − μ) / (r + μ) = y − (r + y) μ / (r + μ)
            let frac = logistic(e - r.ln());
            y - (r + y) * frac
        }
    }
}

/// Expected information `−E[∂²/∂η² ln dF]`.
pub fn fisher_eta<T: Real>(family: Family, eta: T, gamma: T) -> T {
    match family {
        Family::Gaussian => (gamma * gamma).recip(),
        Family::Poisson => clamp(eta).exp(),
        Family::Bernoulli => {
            let m = logistic(eta);
            m * (T::one() - m)
        }
        Family::Binomial { trials } => {
            let m = logistic(eta);
            T::lit(trials as f64) * m * (T::one() - m)
        }
        Family::NegBinomial => {
            let e = clamp(eta);
            let mu = e.exp();
            mu / (T::one() + gamma * mu)
        }
    }
}

/// Draws `y ~ F(η, γ)`.
pub fn sample<R: Rng + ?Sized>(family: Family, eta: f64, gamma: f64, rng: &mut R) -> f64 {
    match family {
        Family::Gaussian => eta + gamma * rng.sample::<f64, _>(rand_distr::StandardNormal),
        Family::Poisson => poisson(family.mean(eta), rng),
        Family::Bernoulli => f64::from(u8::from(rng.random::<f64>() < logistic(eta))),
        Family::Binomial { trials } => Binomial::new(u64::from(trials), logistic(eta))
            .map(|b| b.sample(rng) as f64)
            .unwrap_or(0.0),
        Family::NegBinomial => {
            let mu = family.mean(eta);
            let r = 1.0 / gamma;
            let lam = Gamma::new(r, mu / r).map(|g| g.sample(rng)).unwrap_or(mu);
            poisson(lam, rng)
        }
    }
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda > 1e12 {
        // normal approximation far beyond any realistic count
        let n = Normal::new(lambda, lambda.sqrt()).expect("finite moments");
        return n.sample(rng).round().max(0.0);
    }
    Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ALL: [Family; 5] =
        [Family::Gaussian, Family::Poisson, Family::Bernoulli, Family::Binomial { trials: 8 }, Family::NegBinomial];

    #[test]
    fn loglik_examples() {
        let lg: f64 = loglik(Family::Gaussian, 0.0, 0.0, 1.0);
        assert!((lg + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let lp: f64 = loglik(Family::Poisson, 0.0, 0.0, f64::NAN);
        assert!((lp + 1.0).abs() < 1e-15);
        let lb: f64 = loglik(Family::Bernoulli, 1.0, 0.0, f64::NAN);
        assert!((lb - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_eta(Family::Poisson, 0.0f64, 0.0, 1.0), -1.0);
        assert_eq!(score_eta(Family::Gaussian, 1.3f64, 1.3, 0.7), 0.0);
        assert_eq!(score_eta(Family::Binomial { trials: 8 }, 4.0f64, 0.0, 1.0), 0.0);
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_eta(Family::Gaussian, 0.3f64, 1.0), 1.0);
        assert_eq!(fisher_eta(Family::Bernoulli, 0.0f64, 1.0), 0.25);
        assert_eq!(fisher_eta(Family::Poisson, 0.0f64, 1.0), 1.0);
    }

    #[test]
    fn fisher_matches_score_variance_by_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (family, draws) in ALL.iter().zip([200_000, 1_000_000, 200_000, 200_000, 200_000]) {
            let (eta, gamma) = (0.0, 0.8);
            let s: Vec<f64> =
                (0..draws).map(|_| score_eta(*family, sample(*family, eta, gamma, &mut rng), eta, gamma).powi(2)).collect();
            let m = s.iter().sum::<f64>() / draws as f64;
            let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (v / draws as f64).sqrt();
            let f = fisher_eta(*family, eta, gamma);
            assert!((m - f).abs() < 3.0 * se + 1e-12, "{family:?}: {m} vs {f} (se {se})");
        }
    }

    #[test]
    fn finite_for_large_eta() {
        for &f in &ALL {
            for &eta in &[-30.0f64, 30.0, -1e3, 1e3] {
                let y = if matches!(f, Family::Bernoulli) { 1.0 } else { 3.0 };
                assert!(loglik(f, y, eta, 0.5).is_finite(), "{f:?} {eta}");
                assert!(score_eta(f, y, eta, 0.5).is_finite());
                let fi = fisher_eta(f, eta, 0.5);
                assert!(fi >= 0.0);
                if eta.abs() <= 30.0 {
                    assert!(fi > 0.0);
                }
            }
        }
    }

    #[test]
    fn support_checks() {
        assert!(Family::Poisson.check_support(-1.0).is_err());
        assert!(Family::Poisson.check_support(1.5).is_err());
        assert!(Family::Binomial { trials: 8 }.check_support(9.0).is_err());
        assert!(Family::Binomial { trials: 8 }.check_support(8.0).is_ok());
        assert!(Family::Bernoulli.check_support(0.5).is_err());
        assert!(Family::Gaussian.check_support(-3.2).is_ok());
    }

    #[test]
    fn parse_round_trip() {
        for &f in &ALL {
            assert_eq!(Family::parse(&f.label()).unwrap(), f);
        }
        assert!(Family::parse("gamma").is_err());
    }

    #[test]
    fn negbinomial_normalizes() {
        let (eta, tau) = (1.1f64, 0.6);
        let total: f64 = (0..2000).map(|y| loglik(Family::NegBinomial, y as f64, eta, tau).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        let mean: f64 = (0..2000).map(|y| y as f64 * loglik(Family::NegBinomial, y as f64, eta, tau).exp()).sum();
        assert!((mean - eta.exp()).abs() < 1e-8);
    }
}
