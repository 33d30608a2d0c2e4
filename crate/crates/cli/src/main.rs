use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nma_inconsistency::config::{AnalysisConfig, CorrelationChoice, GSetting, PsiMode};
use nma_inconsistency::design::build_x;
use nma_inconsistency::graph::{find_bridges, independent_loops, ComparisonGraph};
use nma_inconsistency::mcmc::{run_model, McmcConfig, Model, TauPrior};
use nma_inconsistency::network::{load_network_from_str, prune_disconnected, EvidenceNetwork};
use nma_inconsistency::oracle::{enumerate_exact, MAX_ORACLE_FACTORS};
use nma_inconsistency::pipeline::analyze;
use nma_inconsistency::placement::{place, PlacementMethod};
use nma_inconsistency::posterior::posterior_model_probs;
use nma_inconsistency::priors::ConsistencyPrior;
use nma_inconsistency::Error;

#[derive(Parser)]
#[command(name = "nma-incon", version, about = "Inconsistency detection for network meta-analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place inconsistency factors, sample, and write a report.
    Analyze(Box<AnalyzeArgs>),
    /// Show the network structure and the Z matrix without sampling.
    Structure(StructureArgs),
    /// Compare sampled model probabilities with exact enumeration.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Contrast-level data: study,t1,t2,y,se
    #[arg(long)]
    data: Option<PathBuf>,
    /// Within-study covariances: study,row,col,cov
    #[arg(long)]
    cov: Option<PathBuf>,
    /// Arm-level standard errors: study,treatment,se_arm
    #[arg(long)]
    arms: Option<PathBuf>,
    /// Reference treatment (default: first id in lexicographic order)
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TOML settings; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<PlacementMethod>,
    #[arg(long, value_parser = ["identity", "zellner"])]
    correlation: Option<String>,
    /// "auto" (number of contrasts) or a positive value
    #[arg(long)]
    g: Option<String>,
    #[arg(long, conflicts_with = "pi_cons_beta")]
    pi_cons: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"])]
    pi_cons_beta: Option<Vec<f64>>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_parser = ["auto", "pilot"])]
    psi: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    thin: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "ssifs-out")]
    out: PathBuf,
    /// Also write per-chain traces
    #[arg(long)]
    traces: bool,
    /// Print the resolved configuration and exit
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct StructureArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_method, default_value = "lu-ades")]
    method: PlacementMethod,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_method, default_value = "lu-ades")]
    method: PlacementMethod,
    /// Heterogeneity sd shared by the oracle and the sampler
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    pi_cons: f64,
    #[arg(long, default_value_t = 0.2)]
    omega: f64,
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    #[arg(long, default_value_t = 2)]
    chains: usize,
    #[arg(long, default_value_t = 300_000)]
    iters: usize,
    #[arg(long, default_value_t = 50_000)]
    burnin: usize,
    #[arg(long, default_value_t = McmcConfig::default().seed)]
    seed: u64,
}

fn parse_method(s: &str) -> Result<PlacementMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(*a),
        Command::Structure(a) => cmd_structure(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if !err.is_validation() => 3,
        _ => 2,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", path.display()))
}

/// Loads the network and keeps the component containing the reference.
fn load(args: &DataArgs) -> Result<(EvidenceNetwork, Vec<String>)> {
    let Some(data) = &args.data else {
        return Err(Error::Config("--data is required".into()).into());
    };
    let contrasts = read(data)?;
    let cov = args.cov.as_deref().map(read).transpose()?;
    let arms = args.arms.as_deref().map(read).transpose()?;
    let net = load_network_from_str(&contrasts, cov.as_deref(), arms.as_deref(), args.reference.as_deref())
        .with_context(|| format!("loading {}", data.display()))?;
    Ok(prune_disconnected(&net)?)
}

fn resolve_config(a: &AnalyzeArgs) -> Result<AnalysisConfig> {
    let mut cfg = match &a.config {
        Some(p) => AnalysisConfig::from_toml_str(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => AnalysisConfig::default(),
    };
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(c) = &a.correlation {
        cfg.prior.correlation = if c == "zellner" {
            CorrelationChoice::Zellner
        } else {
            CorrelationChoice::Identity
        };
    }
    if let Some(g) = &a.g {
        cfg.prior.g = g.parse::<GSetting>()?;
    }
    if let Some(p) = a.pi_cons {
        cfg.consistency = ConsistencyPrior::Fixed { pi_cons: p };
    }
    if let Some(ab) = &a.pi_cons_beta {
        cfg.consistency = ConsistencyPrior::Beta { alpha: ab[0], beta: ab[1] };
    }
    if let Some(v) = a.omega {
        cfg.prior.omega = v;
    }
    if let Some(v) = a.c {
        cfg.prior.c = v;
    }
    if let Some(p) = &a.psi {
        cfg.prior.psi = if p == "pilot" { PsiMode::Pilot } else { PsiMode::Auto };
    }
    if let Some(v) = a.chains {
        cfg.mcmc.chains = v;
    }
    if let Some(v) = a.iters {
        cfg.mcmc.iterations = v;
    }
    if let Some(v) = a.burnin {
        cfg.mcmc.burn_in = v;
    }
    if let Some(v) = a.seed {
        cfg.mcmc.seed = v;
    }
    if let Some(v) = a.thin {
        cfg.mcmc.thin = v;
    }
    if let Some(r) = &a.data.reference {
        cfg.reference = Some(r.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    data: Option<String>,
    cov: Option<String>,
    arms: Option<String>,
    config_file: Option<String>,
    method: PlacementMethod,
    seed: u64,
    removed_treatments: &'a [String],
    config: &'a AnalysisConfig,
    started_unix: u64,
    finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    if a.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let started = unix_now();
    let (net, removed) = load(&a.data)?;
    let mut analysis = analyze(&net, &cfg)?;
    if !removed.is_empty() {
        analysis
            .report
            .notes
            .push(format!("treatments disconnected from the reference were removed: {}", removed.join(", ")));
    }

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let path = a.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    write("report.json", &analysis.report.to_json()?)?;
    write("pips.csv", &analysis.report.pips_csv()?)?;
    write("model_table.csv", &analysis.report.model_table_csv()?)?;
    if a.traces && !analysis.chains.is_empty() {
        let dir = a.out.join("traces");
        fs::create_dir_all(&dir)?;
        for c in &analysis.chains {
            let text = c.trace_csv(&analysis.spec.labels, cfg.mcmc.burn_in, cfg.mcmc.thin)?;
            fs::write(dir.join(format!("chain-{}.csv", c.chain + 1)), text)?;
        }
    }
    let manifest = Manifest {
        tool: "nma-incon",
        version: env!("CARGO_PKG_VERSION"),
        data: path_string(&a.data.data),
        cov: path_string(&a.data.cov),
        arms: path_string(&a.data.arms),
        config_file: path_string(&a.config),
        method: cfg.method,
        seed: cfg.mcmc.seed,
        removed_treatments: &removed,
        config: &cfg,
        started_unix: started,
        finished_unix: unix_now(),
    };
    write("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;

    let r = &analysis.report;
    println!("method: {}  factors: {}", r.method, r.p);
    match (&r.po_consistency, &r.evidence) {
        (Some(po), Some(ev)) => {
            println!("P(consistent) = {:.4}  odds(consistent) = {po}  ({ev})", r.consistent_prob);
            for f in &r.factors {
                println!("  {:<28} PIP {:.4} (mcse {:.4})", f.label, f.pip, f.mcse);
            }
            if !r.converged {
                println!("warning: some chains have not converged (split R-hat > 1.05)");
            }
        }
        _ => println!("consistent by construction: no inconsistency factor can be placed"),
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_structure(a: StructureArgs) -> Result<()> {
    let (net, removed) = load(&a.data)?;
    let graph = ComparisonGraph::from_network(&net);
    let ids: Vec<&str> = net.treatments.iter().map(|t| t.id.as_str()).collect();
    println!("treatments: {} (reference {})", ids.join(", "), net.reference().id);
    println!("studies: {}  contrasts: {}  comparisons: {}", net.n_studies(), net.n_contrasts(), graph.n_edges());
    if !removed.is_empty() {
        println!("removed (disconnected): {}", removed.join(", "));
    }
    let bridges = find_bridges(&graph);
    println!("bridges: {}", bridges.len());
    for e in &bridges {
        println!("  {}", net.pair_label(*e));
    }
    let loops = independent_loops(&graph);
    println!("independent loops: {}", loops.len());
    for l in &loops.loops {
        let path: Vec<&str> = l.nodes.iter().map(|n| net.treatment_id(*n)).collect();
        println!("  {} (closed by {})", path.join("-"), net.pair_label(l.distinguishing));
    }
    let spec = place(&net, a.method)?;
    println!("method {}: {} factor(s)", spec.method, spec.p());
    for label in &spec.labels {
        println!("  {label}");
    }
    for note in &spec.notes {
        println!("note: {note}");
    }
    println!();
    print!("{}", spec.to_csv(&net));
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let (net, _) = load(&a.data)?;
    let spec = place(&net, a.method)?;
    if spec.p() == 0 {
        bail!(Error::NotApplicable("no inconsistency factor can be placed".into()));
    }
    if spec.p() > MAX_ORACLE_FACTORS {
        return Err(Error::Domain(format!(
            "{} factors; exact enumeration supports at most {MAX_ORACLE_FACTORS}",
            spec.p()
        ))
        .into());
    }
    let mut cfg = AnalysisConfig::default();
    cfg.prior.omega = a.omega;
    cfg.prior.c = a.c;
    cfg.consistency = ConsistencyPrior::Fixed { pi_cons: a.pi_cons };
    cfg.validate()?;
    let x = build_x(&net)?.matrix;
    let ss = cfg.threshold_spike_slab(spec.p(), net.n_contrasts())?;
    let mcfg = McmcConfig {
        chains: a.chains,
        iterations: a.iters,
        burn_in: a.burnin,
        seed: a.seed,
        thin: 1,
        tau_prior: TauPrior::Fixed { value: a.tau },
        mu_prior_var: cfg.mcmc.mu_prior_var,
    };
    let exact = enumerate_exact(&net, &x, &spec.z, &ss, cfg.consistency, a.tau, mcfg.mu_prior_var)?;
    let model = Model::new(&net, &x, &spec.z, ss, cfg.consistency, mcfg.tau_prior, mcfg.mu_prior_var)?;
    let chains = run_model(&model, &mcfg, None)?;
    let table = posterior_model_probs(&chains)?;
    println!("tau fixed at {}; {} factor(s): {}", a.tau, spec.p(), spec.labels.join(", "));
    println!("{:>6} {:>12} {:>10} {:>10} {:>10}", "model", "gamma", "exact", "sampled", "abs diff");
    let mut worst = 0.0f64;
    for m in &exact.models {
        let s = table.probability(m.id);
        let d = (m.probability - s).abs();
        worst = worst.max(d);
        println!("{:>6} {:>12} {:>10.4} {:>10.4} {:>10.4}", m.id, m.gamma, m.probability, s, d);
    }
    println!("max abs diff {worst:.4}");
    Ok(())
}
