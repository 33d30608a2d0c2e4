use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::design::build_x;
use crate::network::{load_network, ContrastRecord};
use crate::placement::{place, PlacementMethod};
use crate::priors::{psi_from_threshold, Sigma2Prior};

fn triangle(ys: [f64; 3], se: f64) -> EvidenceNetwork {
    let recs: Vec<ContrastRecord> = [("1", "A", "B", ys[0]), ("2", "A", "C", ys[1]), ("3", "B", "C", ys[2])]
        .iter()
        .map(|(s, a, b, y)| ContrastRecord {
            study: (*s).into(),
            t1: (*a).into(),
            t2: (*b).into(),
            y: *y,
            se,
        })
        .collect();
    load_network(&recs, &[], &[], Some("A")).unwrap()
}

fn model_for(net: &EvidenceNetwork, ss: SpikeSlabConfig, cprior: ConsistencyPrior, tau: TauPrior, v_mu: f64) -> Model {
    let x = build_x(net).unwrap().matrix;
    let z = if ss.p() == 0 {
        DMatrix::zeros(net.n_contrasts(), 0)
    } else {
        place(net, PlacementMethod::LuAdes).unwrap().z
    };
    Model::new(net, &x, &z, ss, cprior, tau, v_mu).unwrap()
}

fn identity(p: usize, c: f64) -> SpikeSlabConfig {
    let psi = psi_from_threshold(0.2, c).unwrap();
    SpikeSlabConfig::new(c, 0.2, vec![psi; p], CorrelationMode::Identity, Sigma2Prior::Jeffreys).unwrap()
}

fn state(model: &Model, gamma: Vec<bool>, b: Vec<f64>) -> ModelState {
    ModelState {
        mu: DVector::zeros(model.n_mu),
        b: DVector::from_vec(b),
        gamma: GammaVector(gamma),
        tau: model.tau_prior.fixed_value().unwrap_or(0.2),
        sigma2: 1.0,
        pi_cons: model.consistency.mean(),
    }
}

fn gls(w: &DMatrix<f64>, v: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let vi = v.clone().try_inverse().unwrap();
    let a = w.transpose() * &vi * w;
    a.try_inverse().unwrap() * w.transpose() * vi * y
}

#[test]
fn heterogeneity_blocks_are_positive_definite() {
    for k in 1..6 {
        for tau in [1e-3, 0.1, 1.0, 7.0] {
            let m = heterogeneity_block(k, tau);
            let eig = m.symmetric_eigenvalues();
            assert!(eig.iter().all(|e| *e > 0.0), "k={k} tau={tau}");
            // eigenvalues τ²/2 (k − 1 times) and τ²(k + 1)/2
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((min - tau * tau / 2.0).abs() < 1e-12 * (1.0 + tau * tau) || k == 1);
        }
    }
}

#[test]
fn flat_limit_reproduces_gls() {
    // four studies so the consistency model is overdetermined
    let recs: Vec<ContrastRecord> = [("1", "A", "B", 0.5), ("2", "A", "C", 0.2), ("3", "B", "C", -0.1), ("4", "A", "B", 0.45)]
        .iter()
        .map(|(s, a, b, y)| ContrastRecord { study: (*s).into(), t1: (*a).into(), t2: (*b).into(), y: *y, se: 0.2 })
        .collect();
    let net = load_network(&recs, &[], &[], Some("A")).unwrap();
    let ss = SpikeSlabConfig::new(10.0, 0.2, vec![], CorrelationMode::Identity, Sigma2Prior::Jeffreys).unwrap();
    let model = model_for(&net, ss, ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.0 }, 1e14);
    let cache = LikelihoodCache::new(&model, 0.0).unwrap();
    let st = state(&model, vec![], vec![]);
    let (mean, _) = conditional_mu_b(&model, &cache, &st).unwrap();
    let x = build_x(&net).unwrap().matrix;
    let expect = gls(&x, &net.sigma.to_dense(), &net.y());
    assert!((mean - expect).amax() < 1e-6);
}

#[test]
fn slab_only_matches_gls_on_augmented_design() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let model = model_for(&net, identity(1, 1e6), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.1 }, 1e14);
    let cache = LikelihoodCache::new(&model, 0.1).unwrap();
    let st = state(&model, vec![true], vec![0.0]);
    let (mean, _) = conditional_mu_b(&model, &cache, &st).unwrap();
    let x = build_x(&net).unwrap().matrix;
    let z = place(&net, PlacementMethod::LuAdes).unwrap().z;
    let w = concat_columns(&x, &z);
    let v = crate::oracle::total_covariance(&net, 0.1);
    let expect = gls(&w, &v, &net.y());
    assert!((&mean - &expect).amax() < 1e-6, "{mean} vs {expect}");
}

#[test]
fn zero_data_gives_zero_mean() {
    let net = triangle([0.0, 0.0, 0.0], 0.2);
    let model = model_for(&net, identity(1, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.1 }, 1e4);
    let cache = LikelihoodCache::new(&model, 0.1).unwrap();
    let (mean, _) = conditional_mu_b(&model, &cache, &state(&model, vec![false], vec![0.0])).unwrap();
    assert!(mean.amax() < 1e-15);
}

#[test]
fn gamma_odds_at_reference_points() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let model = model_for(&net, identity(1, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.3 }, TauPrior::Fixed { value: 0.0 }, 1e4);
    let pi = 0.7f64;
    let prior = (pi / (1.0 - pi)).ln();
    let at = |b: f64| gamma_log_odds(&model, &state(&model, vec![false], vec![b]), 0);
    assert!((at(0.0) - (prior - 10f64.ln())).abs() < 1e-12);
    assert!((at(0.2) - prior).abs() < 1e-10);
    assert!((at(-0.2) - prior).abs() < 1e-10);
    assert!(at(10.0) > 50.0);
}

#[test]
fn zellner_odds_match_direct_density_ratio() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let mut ss = identity(1, 10.0);
    ss.correlation = CorrelationMode::Zellner { g: 3.0 };
    let model = model_for(&net, ss.clone(), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.0 }, 1e4);
    let mut st = state(&model, vec![false], vec![0.17]);
    st.sigma2 = 0.4;
    let z = place(&net, PlacementMethod::LuAdes).unwrap().z;
    let dens = |on: bool| {
        let cov = crate::priors::prior_b_covariance(&ss, &GammaVector(vec![on]), &z, 0.4).unwrap();
        crate::linalg::mvn_logpdf(&st.b, &cov).unwrap()
    };
    let pi = inclusion_probability(0.5, 1).unwrap();
    let expect = (pi / (1.0 - pi)).ln() + dens(true) - dens(false);
    assert!((gamma_log_odds(&model, &st, 0) - expect).abs() < 1e-10);
}

#[test]
fn rejected_tau_move_leaves_state_alone() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let model = model_for(&net, identity(1, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Uniform { upper: 1e-3 }, 1e4);
    let mut st = state(&model, vec![false], vec![0.0]);
    st.tau = 9e-4;
    let mut cache = LikelihoodCache::new(&model, st.tau).unwrap();
    let mut step = AdaptiveStep::new(50.0, 0.44);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rejected = 0;
    for _ in 0..200 {
        let before = st.tau;
        if !update_tau(&model, &mut cache, &mut st, &mut step, &mut rng).unwrap() {
            assert_eq!(st.tau, before);
            assert_eq!(cache.tau, before);
            rejected += 1;
        }
    }
    assert!(rejected > 100);
}

#[test]
fn sigma2_conditional_scales_with_b() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let mut ss = identity(1, 10.0);
    ss.correlation = CorrelationMode::Zellner { g: 3.0 };
    let model = model_for(&net, ss, ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.0 }, 1e4);
    let (shape, rate) = sigma2_conditional(&model, &state(&model, vec![false], vec![0.3])).unwrap();
    assert_eq!(shape, 0.5);
    // ZᵀZ = 1 for the single loop factor on one row
    let psi = model.spike_slab.psi[0];
    assert!((rate - 0.5 * (0.3 / psi).powi(2) / 3.0).abs() < 1e-12);
    let (_, rate2) = sigma2_conditional(&model, &state(&model, vec![false], vec![0.6])).unwrap();
    assert!((rate2 / rate - 4.0).abs() < 1e-12);
    let idm = model_for(&net, identity(1, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.0 }, 1e4);
    assert!(sigma2_conditional(&idm, &state(&idm, vec![false], vec![0.3])).is_none());
}

#[test]
fn pi_cons_moves_up_when_all_factors_are_off() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let prior = ConsistencyPrior::Beta { alpha: 2.0, beta: 2.0 };
    let model = model_for(&net, identity(1, 10.0), prior, TauPrior::Fixed { value: 0.0 }, 1e4);
    let mut st = state(&model, vec![false], vec![0.0]);
    let mut step = AdaptiveStep::new(0.8, 0.44);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sum = 0.0;
    let n = 20_000;
    for _ in 0..n {
        update_pi_cons(&model, &mut st, &mut step, &mut rng);
        sum += st.pi_cons;
    }
    // Beta(3, 2) posterior, mean 0.6
    assert!(sum / n as f64 > 0.55);

    let fixed = model_for(&net, identity(1, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::Fixed { value: 0.0 }, 1e4);
    let mut st = state(&fixed, vec![false], vec![0.0]);
    assert!(!update_pi_cons(&fixed, &mut st, &mut step, &mut rng));
    assert_eq!(st.pi_cons, 0.5);
}

#[test]
fn chains_are_reproducible_and_distinct() {
    let net = triangle([0.5, 0.2, 0.6], 0.2);
    let model = model_for(&net, identity(1, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.5 }, TauPrior::HalfNormal { scale: 1.0 }, 1e4);
    let cfg = McmcConfig {
        chains: 2,
        iterations: 3_000,
        burn_in: 500,
        seed: 11,
        thin: 2,
        ..McmcConfig::default()
    };
    let a = run_model(&model, &cfg, None).unwrap();
    let b = run_model(&model, &cfg, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].n_draws, 1_250);
    assert_ne!(a[0].b, a[1].b);
    let serial = run_chain(&model, &cfg, 1, None).unwrap();
    assert_eq!(serial, a[1]);
}

#[test]
fn tree_network_short_circuits() {
    let recs: Vec<ContrastRecord> = [("1", "A", "B"), ("2", "A", "C")]
        .iter()
        .map(|(s, a, b)| ContrastRecord { study: (*s).into(), t1: (*a).into(), t2: (*b).into(), y: 0.1, se: 0.2 })
        .collect();
    let net = load_network(&recs, &[], &[], Some("A")).unwrap();
    let x = build_x(&net).unwrap().matrix;
    let spec = place(&net, PlacementMethod::LuAdes).unwrap();
    let out = run_ssifs(&net, &x, &spec, &identity(0, 10.0), ConsistencyPrior::Fixed { pi_cons: 0.5 }, &McmcConfig::default()).unwrap();
    assert_eq!(out, SsifsOutcome::ConsistentByConstruction);
}

#[test]
fn config_validation() {
    let bad = McmcConfig { burn_in: 10, iterations: 10, ..McmcConfig::default() };
    assert!(bad.validate().is_err());
    assert!(McmcConfig { chains: 0, ..McmcConfig::default() }.validate().is_err());
    assert!(McmcConfig { thin: 0, ..McmcConfig::default() }.validate().is_err());
    assert_eq!(McmcConfig::default().draws_per_chain(), 250_000);
}
