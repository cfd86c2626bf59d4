//! Dual-averaging step-size adaptation (Nesterov's scheme as used by NUTS).

/// Step-size controller. After `horizon` updates the step size freezes at
/// the averaged iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    m: usize,
    horizon: usize,
}

impl DualAveraging {
    pub fn new(eps0: f64, target: f64, horizon: usize) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            m: 0,
            horizon,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn is_frozen(&self) -> bool {
        self.m >= self.horizon
    }

    /// Feeds one acceptance probability; returns the new step size.
    pub fn update(&mut self, accept_prob: f64) -> f64 {
        if self.is_frozen() {
            return self.step_size();
        }
        let a = if accept_prob.is_finite() { accept_prob.clamp(0.0, 1.0) } else { 0.0 };
        self.m += 1;
        let m = self.m as f64;
        let w = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - a);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let eta = m.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
        if self.is_frozen() {
            self.log_eps = self.log_eps_bar;
        }
        self.step_size()
    }

    /// Halves the current step size (used when a proposal blows up).
    pub fn halve(&mut self) {
        self.log_eps -= std::f64::consts::LN_2;
        self.mu -= std::f64::consts::LN_2;
    }
}
