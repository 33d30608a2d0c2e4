//! Gibbs-style sampler for the inconsistency model under the spike-and-slab
//! prior.
//!
//! The study random effects are integrated out, so the likelihood is
//! `y ~ N(Xμ + Zb, Σ + Δ(τ))` with block-diagonal covariance. One sweep is:
//! joint conjugate draw of `(μ, b)`, componentwise `γ`, random-walk
//! Metropolis on `log τ`, conjugate `σ²` (Zellner mode), and Metropolis on
//! `logit π_cons` (Beta mode).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, mvn_logpdf_chol, rank};
use crate::network::EvidenceNetwork;
use crate::placement::InconsistencySpec;
use crate::priors::{
    inclusion_probability, ConsistencyPrior, CorrelationMode, GammaVector, SpikeSlabConfig,
};

pub mod pilot;
mod updates;

pub use updates::{
    conditional_mu_b, gamma_log_odds, pi_cons_log_target, sigma2_conditional, update_gamma,
    update_mu_b, update_pi_cons, update_sigma2, update_tau, AdaptiveStep,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TauPrior {
    HalfNormal { scale: f64 },
    Uniform { upper: f64 },
    /// Heterogeneity held at a known value; no `τ` step is taken.
    Fixed { value: f64 },
}

impl Default for TauPrior {
    fn default() -> Self {
        TauPrior::HalfNormal { scale: 1.0 }
    }
}

impl TauPrior {
    pub fn validate(self) -> Result<()> {
        match self {
            TauPrior::HalfNormal { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(Error::domain(format!("half-normal scale must be positive, got {scale}")))
            }
            TauPrior::Uniform { upper } if !(upper > 0.0 && upper.is_finite()) => {
                Err(Error::domain(format!("uniform upper bound must be positive, got {upper}")))
            }
            TauPrior::Fixed { value } if !(value >= 0.0 && value.is_finite()) => {
                Err(Error::domain(format!("fixed tau must be non-negative, got {value}")))
            }
            _ => Ok(()),
        }
    }

    /// Log density up to a constant, `-inf` outside the support.
    pub fn log_density(self, tau: f64) -> f64 {
        match self {
            TauPrior::HalfNormal { scale } if tau >= 0.0 => -0.5 * (tau / scale).powi(2),
            TauPrior::Uniform { upper } if (0.0..upper).contains(&tau) => 0.0,
            TauPrior::Fixed { value } if tau == value => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn fixed_value(self) -> Option<f64> {
        match self {
            TauPrior::Fixed { value } => Some(value),
            _ => None,
        }
    }

    fn initial(self, chain: usize) -> f64 {
        let spread = 0.1 * (1 + chain % 4) as f64;
        match self {
            TauPrior::Fixed { value } => value,
            TauPrior::HalfNormal { scale } => spread * scale.min(1.0),
            TauPrior::Uniform { upper } => spread * upper / 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    /// Total sweeps per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thin: usize,
    pub tau_prior: TauPrior,
    /// Variance of the independent normal prior on each basic contrast.
    pub mu_prior_var: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 2,
            iterations: 300_000,
            burn_in: 50_000,
            seed: 20_230_501,
            thin: 1,
            tau_prior: TauPrior::default(),
            mu_prior_var: 1e4,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::domain("at least one chain is required"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::domain(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::domain("thinning must be at least 1"));
        }
        if !(self.mu_prior_var > 0.0 && self.mu_prior_var.is_finite()) {
            return Err(Error::domain("mu prior variance must be positive"));
        }
        if self.draws_per_chain() == 0 {
            return Err(Error::domain("thinning leaves no draws"));
        }
        self.tau_prior.validate()
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Current values of all sampled quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub mu: DVector<f64>,
    pub b: DVector<f64>,
    pub gamma: GammaVector,
    pub tau: f64,
    /// Zellner scale; 1 and untouched in identity mode.
    pub sigma2: f64,
    /// Current prior consistency probability; constant in fixed mode.
    pub pi_cons: f64,
}

impl ModelState {
    pub fn theta(&self) -> DVector<f64> {
        let mut t = DVector::zeros(self.mu.len() + self.b.len());
        t.rows_mut(0, self.mu.len()).copy_from(&self.mu);
        t.rows_mut(self.mu.len(), self.b.len()).copy_from(&self.b);
        t
    }

    pub(crate) fn set_theta(&mut self, theta: &DVector<f64>) {
        let k = self.mu.len();
        self.mu.copy_from(&theta.rows(0, k));
        self.b.copy_from(&theta.rows(k, self.b.len()));
    }
}

/// Everything the sampler needs, precomputed from the network and the
/// inconsistency spec.
#[derive(Debug, Clone)]
pub struct Model {
    pub n_mu: usize,
    pub p: usize,
    pub(crate) y_blocks: Vec<DVector<f64>>,
    /// Rows of `[X | Z]` per study.
    pub(crate) w_blocks: Vec<DMatrix<f64>>,
    pub(crate) sigma_blocks: Vec<DMatrix<f64>>,
    pub(crate) ztz: DMatrix<f64>,
    pub spike_slab: SpikeSlabConfig,
    pub consistency: ConsistencyPrior,
    pub tau_prior: TauPrior,
    pub mu_prior_var: f64,
}

impl Model {
    pub fn new(
        net: &EvidenceNetwork,
        x: &DMatrix<f64>,
        z: &DMatrix<f64>,
        spike_slab: SpikeSlabConfig,
        consistency: ConsistencyPrior,
        tau_prior: TauPrior,
        mu_prior_var: f64,
    ) -> Result<Self> {
        let n = net.n_contrasts();
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::dim(format!(
                "network has {n} contrasts, X has {} rows, Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        let p = z.ncols();
        if spike_slab.p() != p {
            return Err(Error::dim(format!(
                "{} spike sds for {p} factors",
                spike_slab.p()
            )));
        }
        spike_slab.validate()?;
        consistency.validate()?;
        tau_prior.validate()?;
        let w = concat_columns(x, z);
        if rank(&w) != w.ncols() {
            return Err(Error::domain("[X | Z] is not of full column rank"));
        }
        let ztz = z.transpose() * z;
        let y = net.y();
        let mut y_blocks = Vec::new();
        let mut w_blocks = Vec::new();
        for (start, len) in net.study_ranges() {
            y_blocks.push(y.rows(start, len).into_owned());
            w_blocks.push(w.rows(start, len).into_owned());
        }
        Ok(Self {
            n_mu: x.ncols(),
            p,
            y_blocks,
            w_blocks,
            sigma_blocks: net.sigma.blocks.clone(),
            ztz,
            spike_slab,
            consistency,
            tau_prior,
            mu_prior_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.n_mu + self.p
    }

    pub fn zellner_g(&self) -> Option<f64> {
        match self.spike_slab.correlation {
            CorrelationMode::Zellner { g } => Some(g),
            CorrelationMode::Identity => None,
        }
    }

    /// Marginal log likelihood of `y` given `(μ, b)` and `τ`.
    pub fn log_likelihood(&self, theta: &DVector<f64>, tau: f64) -> Result<f64> {
        let cache = LikelihoodCache::new(self, tau)?;
        Ok(cache.log_likelihood(self, theta))
    }

    fn initial_state(&self, chain: usize, rng: &mut impl Rng, fixed: Option<&GammaVector>) -> ModelState {
        let pi_cons = self.consistency.mean();
        let gamma = match fixed {
            Some(g) => g.clone(),
            None => {
                let pi = inclusion_probability(pi_cons, self.p.max(1)).unwrap_or(0.5);
                GammaVector((0..self.p).map(|_| rng.random::<f64>() < pi).collect())
            }
        };
        ModelState {
            mu: DVector::zeros(self.n_mu),
            b: DVector::zeros(self.p),
            gamma,
            tau: self.tau_prior.initial(chain),
            sigma2: 1.0,
            pi_cons,
        }
    }
}

/// Random-effects covariance of one study: `τ²` on the diagonal, `τ²/2`
/// between contrasts sharing the baseline arm.
pub fn heterogeneity_block(k: usize, tau: f64) -> DMatrix<f64> {
    let t2 = tau * tau;
    DMatrix::from_fn(k, k, |i, j| if i == j { t2 } else { 0.5 * t2 })
}

fn concat_columns(x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(x.nrows(), x.ncols() + z.ncols());
    w.columns_mut(0, x.ncols()).copy_from(x);
    w.columns_mut(x.ncols(), z.ncols()).copy_from(z);
    w
}

/// Per-study factorizations of `Σ_s + Δ_s(τ)` and the data precision terms
/// `Σ W_sᵀ V_s⁻¹ W_s`, `Σ W_sᵀ V_s⁻¹ y_s`, all valid for one `τ`.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    pub tau: f64,
    chols: Vec<Cholesky<f64, Dyn>>,
    pub(crate) precision: DMatrix<f64>,
    pub(crate) shift: DVector<f64>,
}

impl LikelihoodCache {
    pub fn new(model: &Model, tau: f64) -> Result<Self> {
        let chols = Self::factors(model, tau)?;
        let d = model.dim();
        let mut precision = DMatrix::zeros(d, d);
        let mut shift = DVector::zeros(d);
        for ((chol, w), y) in chols.iter().zip(&model.w_blocks).zip(&model.y_blocks) {
            let vw = chol.solve(w);
            precision += w.transpose() * &vw;
            shift += vw.transpose() * y;
        }
        Ok(Self {
            tau,
            chols,
            precision,
            shift,
        })
    }

    fn factors(model: &Model, tau: f64) -> Result<Vec<Cholesky<f64, Dyn>>> {
        model
            .sigma_blocks
            .iter()
            .map(|s| cholesky(s + heterogeneity_block(s.nrows(), tau), "study covariance"))
            .collect()
    }

    pub fn log_likelihood(&self, model: &Model, theta: &DVector<f64>) -> f64 {
        log_likelihood_with(&self.chols, model, theta)
    }
}

fn log_likelihood_with(chols: &[Cholesky<f64, Dyn>], model: &Model, theta: &DVector<f64>) -> f64 {
    chols
        .iter()
        .zip(&model.w_blocks)
        .zip(&model.y_blocks)
        .map(|((chol, w), y)| mvn_logpdf_chol(&(y - w * theta), chol))
        .sum()
}

/// Post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub p: usize,
    pub n_draws: usize,
    /// `n_draws × p` indicators, row-major.
    pub gammas: Vec<u8>,
    /// `n_draws × p`, row-major.
    pub b: Vec<f64>,
    pub tau: Vec<f64>,
    /// Empty outside Zellner mode.
    pub sigma2: Vec<f64>,
    /// Empty outside Beta mode.
    pub pi_cons: Vec<f64>,
    pub mu_mean: Vec<f64>,
    pub mu_sd: Vec<f64>,
    pub tau_acceptance: Option<f64>,
    pub pi_cons_acceptance: Option<f64>,
}

impl ChainOutput {
    pub fn gamma(&self, draw: usize) -> &[u8] {
        &self.gammas[draw * self.p..(draw + 1) * self.p]
    }

    pub fn b_draw(&self, draw: usize) -> &[f64] {
        &self.b[draw * self.p..(draw + 1) * self.p]
    }

    /// Trace of `b_ℓ`.
    pub fn b_series(&self, factor: usize) -> Vec<f64> {
        (0..self.n_draws).map(|t| self.b[t * self.p + factor]).collect()
    }

    pub fn gamma_series(&self, factor: usize) -> Vec<f64> {
        (0..self.n_draws)
            .map(|t| f64::from(self.gammas[t * self.p + factor]))
            .collect()
    }

    /// Delimited trace: iteration, γ bitstring, b, τ and the optional scales.
    pub fn trace_csv(&self, labels: &[String], burn_in: usize, thin: usize) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_owned(), "gamma".to_owned()];
        header.extend(labels.iter().map(|l| format!("b[{l}]")));
        header.push("tau".into());
        if !self.sigma2.is_empty() {
            header.push("sigma2".into());
        }
        if !self.pi_cons.is_empty() {
            header.push("pi_cons".into());
        }
        w.write_record(&header)?;
        for t in 0..self.n_draws {
            let mut rec = vec![
                (burn_in + (t + 1) * thin).to_string(),
                self.gamma(t).iter().map(|g| if *g == 1 { '1' } else { '0' }).collect(),
            ];
            rec.extend(self.b_draw(t).iter().map(f64::to_string));
            rec.push(self.tau[t].to_string());
            if !self.sigma2.is_empty() {
                rec.push(self.sigma2[t].to_string());
            }
            if !self.pi_cons.is_empty() {
                rec.push(self.pi_cons[t].to_string());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SsifsOutcome {
    /// No inconsistency factor can be placed (for example a tree network).
    ConsistentByConstruction,
    Chains(Vec<ChainOutput>),
}

/// RNG of chain `k`: the master seed with stream `k`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

pub fn run_ssifs(
    net: &EvidenceNetwork,
    x: &DMatrix<f64>,
    spec: &InconsistencySpec,
    spike_slab: &SpikeSlabConfig,
    consistency: ConsistencyPrior,
    mcfg: &McmcConfig,
) -> Result<SsifsOutcome> {
    mcfg.validate()?;
    if spec.p() == 0 {
        return Ok(SsifsOutcome::ConsistentByConstruction);
    }
    let model = Model::new(
        net,
        x,
        &spec.z,
        spike_slab.clone(),
        consistency,
        mcfg.tau_prior,
        mcfg.mu_prior_var,
    )?;
    run_model(&model, mcfg, None).map(SsifsOutcome::Chains)
}

/// Runs all chains concurrently; output is ordered by chain index.
pub fn run_model(
    model: &Model,
    mcfg: &McmcConfig,
    fixed_gamma: Option<&GammaVector>,
) -> Result<Vec<ChainOutput>> {
    mcfg.validate()?;
    if let Some(g) = fixed_gamma {
        if g.0.len() != model.p {
            return Err(Error::dim("fixed gamma has the wrong length"));
        }
    }
    (0..mcfg.chains)
        .into_par_iter()
        .map(|k| run_chain(model, mcfg, k, fixed_gamma))
        .collect()
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::Numerical { message, .. } => Error::Numerical {
            message,
            iteration: Some(iteration),
        },
        other => other,
    }
}

/// One chain, sequentially. `fixed_gamma` pins the indicators (pilot runs).
pub fn run_chain(
    model: &Model,
    mcfg: &McmcConfig,
    chain: usize,
    fixed_gamma: Option<&GammaVector>,
) -> Result<ChainOutput> {
    const ADAPT_EVERY: usize = 50;

    let mut rng = chain_rng(mcfg.seed, chain);
    let mut state = model.initial_state(chain, &mut rng, fixed_gamma);
    let mut cache = LikelihoodCache::new(model, state.tau)?;
    let mut tau_step = AdaptiveStep::new(0.5, 0.44);
    let mut pi_step = AdaptiveStep::new(0.5, 0.44);
    let zellner = model.zellner_g().is_some();
    let beta_mode = matches!(model.consistency, ConsistencyPrior::Beta { .. }) && fixed_gamma.is_none();
    let tau_free = model.tau_prior.fixed_value().is_none();

    let n = mcfg.draws_per_chain();
    let p = model.p;
    let mut out = ChainOutput {
        chain,
        seed: mcfg.seed,
        p,
        n_draws: 0,
        gammas: Vec::with_capacity(n * p),
        b: Vec::with_capacity(n * p),
        tau: Vec::with_capacity(n),
        sigma2: Vec::with_capacity(if zellner { n } else { 0 }),
        pi_cons: Vec::with_capacity(if beta_mode { n } else { 0 }),
        mu_mean: Vec::new(),
        mu_sd: Vec::new(),
        tau_acceptance: None,
        pi_cons_acceptance: None,
    };
    let mut mu_sum = DVector::zeros(model.n_mu);
    let mut mu_sumsq = DVector::zeros(model.n_mu);

    for it in 0..mcfg.iterations {
        update_mu_b(model, &cache, &mut state, &mut rng).map_err(|e| at_iteration(e, it))?;
        if fixed_gamma.is_none() {
            update_gamma(model, &mut state, &mut rng);
        }
        if tau_free {
            update_tau(model, &mut cache, &mut state, &mut tau_step, &mut rng)
                .map_err(|e| at_iteration(e, it))?;
        }
        if zellner {
            update_sigma2(model, &mut state, &mut rng);
        }
        if beta_mode {
            update_pi_cons(model, &mut state, &mut pi_step, &mut rng);
        }

        if it < mcfg.burn_in {
            if (it + 1) % ADAPT_EVERY == 0 {
                tau_step.adapt();
                pi_step.adapt();
            }
            if it + 1 == mcfg.burn_in {
                tau_step.reset_counts();
                pi_step.reset_counts();
            }
            continue;
        }
        if (it - mcfg.burn_in + 1) % mcfg.thin != 0 {
            continue;
        }
        out.n_draws += 1;
        out.gammas.extend(state.gamma.0.iter().map(|g| u8::from(*g)));
        out.b.extend(state.b.iter());
        out.tau.push(state.tau);
        if zellner {
            out.sigma2.push(state.sigma2);
        }
        if beta_mode {
            out.pi_cons.push(state.pi_cons);
        }
        mu_sum += &state.mu;
        mu_sumsq += state.mu.component_mul(&state.mu);
        if !state.tau.is_finite() || state.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                message: "non-finite draw".into(),
                iteration: Some(it),
            });
        }
    }

    let m = out.n_draws as f64;
    out.mu_mean = mu_sum.iter().map(|s| s / m).collect();
    out.mu_sd = mu_sum
        .iter()
        .zip(mu_sumsq.iter())
        .map(|(s, q)| (q / m - (s / m).powi(2)).max(0.0).sqrt())
        .collect();
    if tau_free {
        out.tau_acceptance = Some(tau_step.rate());
    }
    if beta_mode {
        out.pi_cons_acceptance = Some(pi_step.rate());
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
