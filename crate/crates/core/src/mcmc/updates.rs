use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{log_likelihood_with, LikelihoodCache, Model, ModelState};
use crate::error::Result;
use crate::linalg::{cholesky, normal_logpdf};
use crate::priors::{inclusion_probability, ConsistencyPrior, CorrelationMode, GammaVector};

/// Random-walk step size tuned toward a target acceptance rate during
/// burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStep {
    pub log_step: f64,
    pub target: f64,
    accepted: u64,
    proposed: u64,
    window_accepted: u32,
    window_proposed: u32,
    rounds: u32,
}

impl AdaptiveStep {
    pub fn new(step: f64, target: f64) -> Self {
        Self {
            log_step: step.ln(),
            target,
            accepted: 0,
            proposed: 0,
            window_accepted: 0,
            window_proposed: 0,
            rounds: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.window_proposed += 1;
        if accepted {
            self.accepted += 1;
            self.window_accepted += 1;
        }
    }

    /// Moves the log step by a shrinking amount toward the target rate.
    pub fn adapt(&mut self) {
        if self.window_proposed == 0 {
            return;
        }
        self.rounds += 1;
        let rate = f64::from(self.window_accepted) / f64::from(self.window_proposed);
        let delta = (1.0 / f64::from(self.rounds).sqrt()).min(0.1);
        self.log_step += if rate > self.target { delta } else { -delta };
        self.log_step = self.log_step.clamp(-12.0, 4.0);
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn reset_counts(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Prior precision of `b | γ, σ²`.
fn b_prior_precision(model: &Model, gamma: &GammaVector, sigma2: f64) -> DMatrix<f64> {
    let d = model.spike_slab.scales(gamma);
    match model.spike_slab.correlation {
        CorrelationMode::Identity => {
            DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|v| 1.0 / (v * v))))
        }
        CorrelationMode::Zellner { g } => {
            let k = &model.ztz;
            DMatrix::from_fn(d.len(), d.len(), |i, j| k[(i, j)] / (d[i] * d[j] * g * sigma2))
        }
    }
}

/// Mean and precision factor of the normal full conditional of `(μ, b)`.
pub fn conditional_mu_b(
    model: &Model,
    cache: &LikelihoodCache,
    state: &ModelState,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let mut prec = cache.precision.clone();
    for i in 0..model.n_mu {
        prec[(i, i)] += 1.0 / model.mu_prior_var;
    }
    if model.p > 0 {
        let pb = b_prior_precision(model, &state.gamma, state.sigma2);
        let mut block = prec.view_mut((model.n_mu, model.n_mu), (model.p, model.p));
        block += pb;
    }
    let chol = cholesky(prec, "(mu, b) posterior precision")?;
    let mean = chol.solve(&cache.shift);
    Ok((mean, chol))
}

pub fn update_mu_b<R: Rng + ?Sized>(
    model: &Model,
    cache: &LikelihoodCache,
    state: &mut ModelState,
    rng: &mut R,
) -> Result<()> {
    let (mean, chol) = conditional_mu_b(model, cache, state)?;
    let e = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // precision = L Lᵀ, so Lᵀ⁻¹ e has covariance precision⁻¹
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&e)
        .expect("cholesky factor is invertible");
    state.set_theta(&(mean + dev));
    Ok(())
}

/// Log prior odds plus log density ratio for `γ_ℓ = 1` against `γ_ℓ = 0`,
/// holding the other indicators and `b` fixed.
pub fn gamma_log_odds(model: &Model, state: &ModelState, l: usize) -> f64 {
    let ss = &model.spike_slab;
    let pi = inclusion_probability(state.pi_cons, model.p).expect("validated prior");
    let prior = pi.ln() - (-pi).ln_1p();
    let psi = ss.psi[l];
    let bl = state.b[l];
    let lik = match ss.correlation {
        CorrelationMode::Identity => normal_logpdf(bl, ss.c * psi) - normal_logpdf(bl, psi),
        CorrelationMode::Zellner { g } => {
            let d = ss.scales(&state.gamma);
            let k = &model.ztz;
            let cross: f64 = (0..model.p)
                .filter(|j| *j != l)
                .map(|j| k[(l, j)] * state.b[j] / d[j])
                .sum();
            let u1 = bl / (ss.c * psi);
            let u0 = bl / psi;
            let dq = 2.0 * cross * (u1 - u0) + k[(l, l)] * (u1 * u1 - u0 * u0);
            -ss.c.ln() - 0.5 * dq / (g * state.sigma2)
        }
    };
    prior + lik
}

pub fn update_gamma<R: Rng + ?Sized>(model: &Model, state: &mut ModelState, rng: &mut R) {
    for l in 0..model.p {
        let lo = gamma_log_odds(model, state, l);
        let prob = 1.0 / (1.0 + (-lo).exp());
        state.gamma.0[l] = rng.random::<f64>() < prob;
    }
}

/// Metropolis step on `log τ`. Replaces the cache when the move is accepted.
pub fn update_tau<R: Rng + ?Sized>(
    model: &Model,
    cache: &mut LikelihoodCache,
    state: &mut ModelState,
    step: &mut AdaptiveStep,
    rng: &mut R,
) -> Result<bool> {
    let theta = state.theta();
    let current = state.tau;
    let proposal = current * (step.step() * rng.sample::<f64, _>(StandardNormal)).exp();
    let prior_new = model.tau_prior.log_density(proposal);
    if !prior_new.is_finite() || proposal <= 0.0 {
        step.record(false);
        return Ok(false);
    }
    let chols = LikelihoodCache::factors(model, proposal)?;
    let log_new = log_likelihood_with(&chols, model, &theta) + prior_new + proposal.ln();
    let log_old = cache.log_likelihood(model, &theta)
        + model.tau_prior.log_density(current)
        + current.ln();
    let accept = rng.random::<f64>().ln() < log_new - log_old;
    step.record(accept);
    if accept {
        *cache = LikelihoodCache::new(model, proposal)?;
        state.tau = proposal;
    }
    Ok(accept)
}

/// Shape and rate of the inverse-gamma full conditional of `σ²`, or `None`
/// outside Zellner mode.
pub fn sigma2_conditional(model: &Model, state: &ModelState) -> Option<(f64, f64)> {
    let CorrelationMode::Zellner { g } = model.spike_slab.correlation else {
        return None;
    };
    let d = model.spike_slab.scales(&state.gamma);
    let u = DVector::from_fn(model.p, |i, _| state.b[i] / d[i]);
    let q = (&model.ztz * &u).dot(&u);
    let (a0, b0) = model.spike_slab.sigma2_prior.shape_rate();
    Some((0.5 * model.p as f64 + a0, 0.5 * q / g + b0))
}

pub fn update_sigma2<R: Rng + ?Sized>(model: &Model, state: &mut ModelState, rng: &mut R) {
    let Some((shape, rate)) = sigma2_conditional(model, state) else {
        return;
    };
    if !(rate > 0.0) {
        // b = 0 exactly under the scale-invariant prior: log-uniform on a wide range
        let log_s2 = rng.random_range(-20.0_f64..20.0);
        state.sigma2 = log_s2.exp();
        return;
    }
    let gamma = Gamma::new(shape, 1.0).expect("positive shape");
    let x: f64 = gamma.sample(rng);
    state.sigma2 = rate / x.max(f64::MIN_POSITIVE);
}

/// Log of the Beta prior times the Bernoulli likelihood of `γ` at
/// `π_cons`, without normalizing constants.
pub fn pi_cons_log_target(prior: ConsistencyPrior, gamma: &GammaVector, pi_cons: f64) -> f64 {
    let ConsistencyPrior::Beta { alpha, beta } = prior else {
        return 0.0;
    };
    if !(pi_cons > 0.0 && pi_cons < 1.0) {
        return f64::NEG_INFINITY;
    }
    let p = gamma.0.len() as f64;
    let k = gamma.active() as f64;
    // 1 − π = π_cons^{1/p}
    let log_keep = pi_cons.ln() / p;
    let log_incl = (-log_keep.exp_m1()).ln();
    (alpha - 1.0) * pi_cons.ln() + (beta - 1.0) * (-pi_cons).ln_1p() + k * log_incl + (p - k) * log_keep
}

/// Metropolis step on `logit π_cons`.
pub fn update_pi_cons<R: Rng + ?Sized>(
    model: &Model,
    state: &mut ModelState,
    step: &mut AdaptiveStep,
    rng: &mut R,
) -> bool {
    if !matches!(model.consistency, ConsistencyPrior::Beta { .. }) {
        return false;
    }
    let cur = state.pi_cons;
    let eta = (cur / (1.0 - cur)).ln() + step.step() * rng.sample::<f64, _>(StandardNormal);
    let prop = 1.0 / (1.0 + (-eta).exp());
    if !(prop > 0.0 && prop < 1.0) {
        step.record(false);
        return false;
    }
    // Jacobian of the logit transform: π(1 − π)
    let jac = |x: f64| x.ln() + (-x).ln_1p();
    let log_new = pi_cons_log_target(model.consistency, &state.gamma, prop) + jac(prop);
    let log_old = pi_cons_log_target(model.consistency, &state.gamma, cur) + jac(cur);
    let accept = rng.random::<f64>().ln() < log_new - log_old;
    step.record(accept);
    if accept {
        state.pi_cons = prop;
    }
    accept
}
