//! Fixture loaders and independent reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use nma_inconsistency::network::{load_network_from_str, EvidenceNetwork};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn read(rel: &str) -> String {
    let path = fixture_dir().join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

pub fn smoking() -> EvidenceNetwork {
    load_network_from_str(
        &read("smoking/contrasts.csv"),
        None,
        Some(&read("smoking/arms.csv")),
        Some("A"),
    )
    .expect("smoking fixture loads")
}

/// Erectile dysfunction fixture, when present.
pub fn erectile() -> Option<EvidenceNetwork> {
    let dir = fixture_dir().join("erectile");
    let contrasts = std::fs::read_to_string(dir.join("contrasts.csv")).ok()?;
    Some(load_network_from_str(&contrasts, None, None, Some("Placebo")).expect("erectile fixture loads"))
}

pub const TRIANGLES: [(&str, f64); 3] = [
    ("triangle_b0.csv", 0.0),
    ("triangle_b05.csv", 0.5),
    ("triangle_b10.csv", 1.0),
];

pub fn triangle(file: &str) -> EvidenceNetwork {
    load_network_from_str(&read(&format!("synthetic/{file}")), None, None, Some("A")).expect("triangle loads")
}

/// Dense `Σ + Δ(τ)` rebuilt from the network's per-study blocks.
pub fn dense_total_covariance(net: &EvidenceNetwork, tau: f64) -> DMatrix<f64> {
    let n = net.n_contrasts();
    let mut v = DMatrix::zeros(n, n);
    for ((start, len), block) in net.study_ranges().into_iter().zip(&net.sigma.blocks) {
        for i in 0..len {
            for j in 0..len {
                let het = if i == j { tau * tau } else { tau * tau / 2.0 };
                v[(start + i, start + j)] = block[(i, j)] + het;
            }
        }
    }
    v
}

/// Gaussian posterior of `(μ, b)` for fixed prior variances, by direct
/// inversion. Returns mean and covariance.
pub fn gaussian_posterior(
    y: &DVector<f64>,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    prior_vars: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let vi = v.clone().try_inverse().expect("V invertible");
    let mut prec = w.transpose() * &vi * w;
    for (i, pv) in prior_vars.iter().enumerate() {
        prec[(i, i)] += 1.0 / pv;
    }
    let cov = prec.try_inverse().expect("posterior precision invertible");
    let mean = &cov * (w.transpose() * vi * y);
    (mean, cov)
}

pub fn hstack(x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(x.nrows(), x.ncols() + z.ncols());
    w.columns_mut(0, x.ncols()).copy_from(x);
    w.columns_mut(x.ncols(), z.ncols()).copy_from(z);
    w
}

/// `P(b_last > 0)` under the Gaussian posterior.
pub fn prob_positive(mean: &DVector<f64>, cov: &DMatrix<f64>, index: usize) -> f64 {
    let sd = cov[(index, index)].sqrt();
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(-mean[index] / sd)
}

/// Two-sided Kolmogorov–Smirnov statistic of a sample against a CDF.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// CDF on `(0, 1)` of an unnormalized log density, by composite Simpson
/// quadrature on a fine grid and linear interpolation between nodes.
pub struct QuadratureCdf {
    grid: Vec<f64>,
    cum: Vec<f64>,
}

impl QuadratureCdf {
    pub fn new(log_density: impl Fn(f64) -> f64, nodes: usize) -> Self {
        let n = nodes + nodes % 2;
        let h = 1.0 / n as f64;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let logs: Vec<f64> = grid
            .iter()
            .map(|x| if *x <= 0.0 || *x >= 1.0 { f64::NEG_INFINITY } else { log_density(*x) })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let f: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        // Simpson on each pair of intervals, split evenly for the midpoint
        let mut cum = vec![0.0; n + 1];
        for k in (0..n).step_by(2) {
            let pair = h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
            let left = h / 2.0 * (f[k] + f[k + 1]);
            let right = h / 2.0 * (f[k + 1] + f[k + 2]);
            let scale = pair / (left + right).max(f64::MIN_POSITIVE);
            cum[k + 1] = cum[k] + left * scale;
            cum[k + 2] = cum[k] + pair;
        }
        let total = cum[n];
        for c in &mut cum {
            *c /= total;
        }
        Self { grid, cum }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let h = self.grid[1];
        let i = ((x / h) as usize).min(self.grid.len() - 2);
        let t = (x - self.grid[i]) / h;
        self.cum[i] + t * (self.cum[i + 1] - self.cum[i])
    }
}

pub mod checks {
    //! Sampler checks parameterized by run length, so the quick tests and the
    //! acceptance suite share one implementation.

    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, InverseGamma};

    use nma_inconsistency::design::build_x;
    use nma_inconsistency::mcmc::{
        chain_rng, run_model, sigma2_conditional, update_pi_cons, update_sigma2, AdaptiveStep,
        ChainOutput, McmcConfig, Model, ModelState, TauPrior,
    };
    use nma_inconsistency::network::EvidenceNetwork;
    use nma_inconsistency::oracle::enumerate_exact;
    use nma_inconsistency::placement::{place, PlacementMethod};
    use nma_inconsistency::posterior::{pip, posterior_model_probs};
    use nma_inconsistency::priors::{
        historical_consistency_prior, psi_from_threshold, ConsistencyPrior, CorrelationMode,
        GammaVector, Sigma2Prior, SpikeSlabConfig,
    };

    use super::{dense_total_covariance, gaussian_posterior, hstack, ks_statistic, prob_positive, QuadratureCdf};

    pub const V_MU: f64 = 1e4;

    pub fn identity_slab(p: usize) -> SpikeSlabConfig {
        let psi = psi_from_threshold(0.2, 10.0).unwrap();
        SpikeSlabConfig::new(10.0, 0.2, vec![psi; p], CorrelationMode::Identity, Sigma2Prior::Jeffreys).unwrap()
    }

    pub fn lu_ades_model(net: &EvidenceNetwork, ss: SpikeSlabConfig, cprior: ConsistencyPrior, tau: TauPrior) -> Model {
        let x = build_x(net).unwrap().matrix;
        let spec = place(net, PlacementMethod::LuAdes).unwrap();
        Model::new(net, &x, &spec.z, ss, cprior, tau, V_MU).unwrap()
    }

    fn fixed_state(model: &Model, gamma: Vec<bool>, b: Vec<f64>, pi_cons: f64) -> ModelState {
        ModelState {
            mu: DVector::zeros(model.n_mu),
            b: DVector::from_vec(b),
            gamma: GammaVector(gamma),
            tau: 0.1,
            sigma2: 1.0,
            pi_cons,
        }
    }

    /// KS distance between repeated σ² updates at a frozen `(b, γ)` and the
    /// inverse-gamma conditional derived by hand.
    pub fn sigma2_ks(net: &EvidenceNetwork, draws: usize, seed: u64) -> f64 {
        let (a0, b0) = (1e-3, 1e-3);
        let psi = psi_from_threshold(0.2, 10.0).unwrap();
        let g = net.n_contrasts() as f64;
        let ss = SpikeSlabConfig::new(
            10.0,
            0.2,
            vec![psi],
            CorrelationMode::Zellner { g },
            Sigma2Prior::InverseGamma { shape: a0, scale: b0 },
        )
        .unwrap();
        let model = lu_ades_model(net, ss, ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.1 });
        let z = place(net, PlacementMethod::LuAdes).unwrap().z;
        let ztz = z.column(0).norm_squared();
        let b = 0.37;
        let mut state = fixed_state(&model, vec![true], vec![b], 0.5);
        // b ~ N(0, g σ² (cψ)² / zᵀz) gives IG(a0 + 1/2, b0 + b² zᵀz / (2 g (cψ)²))
        let shape = a0 + 0.5;
        let rate = b0 + b * b * ztz / (2.0 * g * (10.0 * psi).powi(2));
        let (s, r) = sigma2_conditional(&model, &state).unwrap();
        assert!((s - shape).abs() < 1e-12 && (r - rate).abs() < 1e-12 * rate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample: Vec<f64> = (0..draws)
            .map(|_| {
                update_sigma2(&model, &mut state, &mut rng);
                state.sigma2
            })
            .collect();
        let ig = InverseGamma::new(shape, rate).unwrap();
        ks_statistic(&mut sample, |x| ig.cdf(x))
    }

    /// KS distance of a long Metropolis run on `π_cons` (p = 1, γ fixed) from
    /// a quadrature CDF of its target. Worst of γ = 0 and γ = 1.
    pub fn pi_cons_ks(net: &EvidenceNetwork, steps: usize, seed: u64) -> f64 {
        let prior = historical_consistency_prior();
        let ConsistencyPrior::Beta { alpha, beta } = prior else { unreachable!() };
        let model = lu_ades_model(net, identity_slab(1), prior, TauPrior::Fixed { value: 0.1 });
        let mut worst: f64 = 0.0;
        for active in [false, true] {
            // p = 1: P(γ = 1) = 1 − π_cons
            let target = |x: f64| {
                let lik = if active { (1.0 - x).ln() } else { x.ln() };
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() + lik
            };
            let oracle = QuadratureCdf::new(target, 200_000);
            let mut state = fixed_state(&model, vec![active], vec![0.0], 0.5);
            let mut step = AdaptiveStep::new(0.5, 0.44);
            let mut rng = chain_rng(seed, usize::from(active));
            let burn = steps / 10;
            let thin = 10;
            let mut sample = Vec::with_capacity(steps / thin);
            for it in 0..steps {
                update_pi_cons(&model, &mut state, &mut step, &mut rng);
                if it < burn {
                    if (it + 1) % 50 == 0 {
                        step.adapt();
                    }
                } else if (it - burn) % thin == 0 {
                    sample.push(state.pi_cons);
                }
            }
            worst = worst.max(ks_statistic(&mut sample, |x| oracle.cdf(x)));
        }
        worst
    }

    pub fn fixed_tau_config(iterations: usize, burn_in: usize, seed: u64, tau: f64) -> McmcConfig {
        McmcConfig {
            chains: 2,
            iterations,
            burn_in,
            seed,
            thin: 1,
            tau_prior: TauPrior::Fixed { value: tau },
            mu_prior_var: V_MU,
        }
    }

    /// Largest gap between sampled and exact joint frequencies of
    /// `(γ, sign b)` on a p = 1 network with fixed τ.
    pub fn joint_sign_gap(net: &EvidenceNetwork, tau: f64, mcfg: &McmcConfig) -> f64 {
        let ss = identity_slab(1);
        let cprior = ConsistencyPrior::Fixed { pi_cons: 0.5 };
        let model = lu_ades_model(net, ss.clone(), cprior, TauPrior::Fixed { value: tau });
        let chains = run_model(&model, mcfg, None).unwrap();
        let x = build_x(net).unwrap().matrix;
        let z = place(net, PlacementMethod::LuAdes).unwrap().z;
        let exact = enumerate_exact(net, &x, &z, &ss, cprior, tau, V_MU).unwrap();
        let w = hstack(&x, &z);
        let v = dense_total_covariance(net, tau);
        let y = net.y();
        let mut worst: f64 = 0.0;
        for g in [0usize, 1] {
            let d = ss.scales(&GammaVector(vec![g == 1]))[0];
            let mut vars = vec![V_MU; x.ncols()];
            vars.push(d * d);
            let (mean, cov) = gaussian_posterior(&y, &v, &w, &vars);
            let up = prob_positive(&mean, &cov, x.ncols());
            let pg = exact.probability(g as u64);
            for positive in [false, true] {
                let expected = pg * if positive { up } else { 1.0 - up };
                let (hits, total) = count(&chains, |gamma, b| {
                    usize::from(gamma[0]) == g && (b[0] > 0.0) == positive
                });
                worst = worst.max((hits as f64 / total as f64 - expected).abs());
            }
        }
        worst
    }

    fn count(chains: &[ChainOutput], pred: impl Fn(&[u8], &[f64]) -> bool) -> (usize, usize) {
        let mut hits = 0;
        let mut total = 0;
        for c in chains {
            for t in 0..c.n_draws {
                total += 1;
                if pred(c.gamma(t), c.b_draw(t)) {
                    hits += 1;
                }
            }
        }
        (hits, total)
    }

    pub struct OracleComparison {
        pub max_model_gap: f64,
        pub pips: Vec<f64>,
        pub rhat_max: f64,
    }

    /// Sampled model probabilities against exact enumeration at fixed τ,
    /// identity correlation and π_cons = 0.5.
    pub fn oracle_comparison(net: &EvidenceNetwork, tau: f64, mcfg: &McmcConfig) -> OracleComparison {
        let x = build_x(net).unwrap().matrix;
        let spec = place(net, PlacementMethod::LuAdes).unwrap();
        let ss = identity_slab(spec.p());
        let cprior = ConsistencyPrior::Fixed { pi_cons: 0.5 };
        let exact = enumerate_exact(net, &x, &spec.z, &ss, cprior, tau, mcfg.mu_prior_var).unwrap();
        let model = Model::new(net, &x, &spec.z, ss, cprior, TauPrior::Fixed { value: tau }, mcfg.mu_prior_var).unwrap();
        let chains = run_model(&model, mcfg, None).unwrap();
        let table = posterior_model_probs(&chains).unwrap();
        let max_model_gap = exact
            .models
            .iter()
            .map(|m| (m.probability - table.probability(m.id)).abs())
            .fold(0.0, f64::max);
        let pips = pip(&chains).unwrap().iter().map(|p| p.pip).collect();
        let labels = spec.labels.clone();
        let rhat_max = nma_inconsistency::posterior::convergence(&chains, &labels)
            .iter()
            .filter_map(|c| c.rhat)
            .fold(1.0, f64::max);
        OracleComparison {
            max_model_gap,
            pips,
            rhat_max,
        }
    }
}
