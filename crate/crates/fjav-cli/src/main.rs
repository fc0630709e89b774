//! `fjav` — experiment runner for resilient distributed averaging.
//!
//! Every command reads a JSON experiment config and writes CSV (or an edge list)
//! to `--out`/`out` or stdout. Runs are deterministic given `(config, seed)`.
//!
//! Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 validation FAIL.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fjav::config::{CurveAxis, ExperimentConfig, MisbehavingSelect, ProtocolSpec};
use fjav::dynamics::{MisbehaviorModel, PriorModel, Protocol};
use fjav::error::Error;
use fjav::experiments;
use fjav::graphs::Network;
use fjav::netdesign::{connectivity_sweep, DesignObjective, KPolicy};

#[derive(Parser)]
#[command(
    name = "fjav",
    version,
    about = "Resilient distributed averaging: competition-based protocol simulator and analyzer"
)]
struct Cli {
    /// Path to the JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output path (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured graph and write it as an edge list.
    Generate,
    /// Analytic error curve(s) over the λ grid, with λ*.
    ErrorCurve,
    /// Simulate all configured protocols on identical worlds.
    Compare,
    /// Validate the closed-form error against the Monte Carlo simulator.
    McValidate,
    /// Connectivity sweep over a graph family.
    Sweep,
    /// Controllability-index curve over λ.
    Gramian,
    /// Greedy almost-regular edge pruning with the matching baseline.
    Prune,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Graph(_) | Error::Io(_)
        | Error::Json(_) => ExitCode::from(1),
        Error::Singular(_)
        | Error::IllConditioned { .. }
        | Error::NotConverged(_)
        | Error::Numerical(_)
        | Error::Infeasible(_) => ExitCode::from(2),
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(config_path)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    let mut output = String::new();
    let code = match cli.command {
        Command::Generate => cmd_generate(&config, &mut output)?,
        Command::ErrorCurve => cmd_error_curve(&config, &mut output)?,
        Command::Compare => cmd_compare(&config, &mut output)?,
        Command::McValidate => cmd_mc_validate(&config, &mut output)?,
        Command::Sweep => cmd_sweep(&config, &mut output)?,
        Command::Gramian => cmd_gramian(&config, &mut output)?,
        Command::Prune => cmd_prune(&config, &mut output)?,
    };

    let out_path = cli
        .out
        .clone()
        .or_else(|| config.out.as_ref().map(PathBuf::from));
    match out_path {
        Some(path) => fs::write(&path, output)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(output.as_bytes())?;
        }
    }
    Ok(code)
}

/// The configured network with its misbehaving nodes marked.
fn build_world(config: &ExperimentConfig) -> Result<(Network, PriorModel, MisbehaviorModel), Error> {
    let net = config.build_network()?;
    let prior = config.prior.build(&net)?;
    let mis = config.misbehavior.build(net.n_misbehaving(), config.seed)?;
    Ok((net, prior, mis))
}

fn cmd_generate(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let net = config.build_network()?;
    let mut buf = Vec::new();
    fjav::io::write_edge_list(&net, &mut buf)?;
    out.push_str(&String::from_utf8(buf).expect("edge list is utf-8"));
    Ok(ExitCode::SUCCESS)
}

fn push_curve(out: &mut String, curve: &experiments::ErrorCurve, axis: Option<&str>) {
    for p in &curve.points {
        let prefix = match (axis, curve.sweep_value) {
            (Some(_), Some(v)) => format!("{v},"),
            _ => String::new(),
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{prefix}{},{},{},{},{},{},{}\n",
            p.lambda,
            p.e_v,
            p.e_n,
            p.e_total,
            opt(p.e_deception),
            opt(p.e_consensus),
            curve.lambda_star
        ));
    }
}

fn cmd_error_curve(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let (net, prior, mis) = build_world(config)?;
    let header = "lambda,e_v,e_n,e_total,e_deception,e_consensus,lambda_star";
    match &config.sweep {
        None => {
            out.push_str(header);
            out.push('\n');
            let curve = experiments::error_curve(&net, &prior, &mis, config.lambda_grid)?;
            push_curve(out, &curve, None);
        }
        Some(sweep) => {
            let axis_name = match sweep.axis {
                CurveAxis::D => "d",
                CurveAxis::Q => "q",
                CurveAxis::M => "m",
            };
            out.push_str(&format!("{axis_name},{header}\n"));
            match sweep.axis {
                CurveAxis::D => {
                    let q = config.misbehavior.q.unwrap_or(0.0);
                    let curves = experiments::error_curve_d_sweep(
                        &net,
                        &prior,
                        q,
                        &sweep.values,
                        config.lambda_grid,
                    )?;
                    for curve in &curves {
                        push_curve(out, curve, Some(axis_name));
                    }
                }
                CurveAxis::Q => {
                    for &q in &sweep.values {
                        let d = config.misbehavior.d.unwrap_or(0.0);
                        let mis_q = MisbehaviorModel::scaled(net.n_misbehaving(), d, q)?;
                        let mut curve =
                            experiments::error_curve(&net, &prior, &mis_q, config.lambda_grid)?;
                        curve.sweep_value = Some(q);
                        push_curve(out, &curve, Some(axis_name));
                    }
                }
                CurveAxis::M => {
                    let base = config.build_network()?;
                    let all_regular = if base.n_misbehaving() == 0 {
                        base
                    } else {
                        fjav::graphs::generate(&config.graph)?
                    };
                    for &value in &sweep.values {
                        let m = value as usize;
                        let marked = MisbehavingSelect {
                            ids: vec![],
                            random: Some(m),
                        }
                        .apply(&all_regular, config.seed)?;
                        let prior_m = config.prior.build(&marked)?;
                        let mis_m = config.misbehavior.build(m, config.seed)?;
                        let mut curve = experiments::error_curve(
                            &marked,
                            &prior_m,
                            &mis_m,
                            config.lambda_grid,
                        )?;
                        curve.sweep_value = Some(value);
                        push_curve(out, &curve, Some(axis_name));
                    }
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn resolve_protocols(
    config: &ExperimentConfig,
    net: &Network,
    prior: &PriorModel,
) -> Result<Vec<Protocol>, Error> {
    let specs: Vec<ProtocolSpec> = match (&config.protocols, &config.protocol) {
        (Some(list), _) => list.clone(),
        (None, Some(single)) => vec![single.clone()],
        (None, None) => vec![
            ProtocolSpec::Consensus,
            ProtocolSpec::Fj {
                lambda: fjav::config::LambdaSpec::Named("auto".into()),
            },
            ProtocolSpec::Wmsr { f: 1 },
            ProtocolSpec::Saba,
        ],
    };
    let auto = if specs.iter().any(|s| s.needs_auto_lambda()) {
        Some(experiments::auto_lambda(
            net,
            prior,
            config.design_v,
            config.lambda_grid,
        )?)
    } else {
        None
    };
    specs.iter().map(|s| s.resolve(auto)).collect()
}

fn cmd_compare(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let (net, prior, mis) = build_world(config)?;
    let protocols = resolve_protocols(config, &net, &prior)?;
    let horizon = config.horizon.unwrap_or(100);
    let result = experiments::compare_protocols(
        &net,
        &protocols,
        &prior,
        &mis,
        horizon,
        config.trials,
        config.seed,
    )?;
    out.push_str("k,protocol,cost\n");
    for series in &result.series {
        for (k, cost) in series.mean_cost.iter().enumerate() {
            out.push_str(&format!("{k},{},{cost}\n", series.name));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_mc_validate(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let (net, prior, mis) = build_world(config)?;
    let lambdas = config
        .lambdas
        .clone()
        .unwrap_or_else(|| vec![0.1, 0.3, 0.5, 0.8, 1.0]);
    let horizon = config.horizon.unwrap_or(500);
    let checks = experiments::mc_validate(
        &net,
        &prior,
        &mis,
        &lambdas,
        horizon,
        config.trials,
        config.seed,
    )?;
    out.push_str("lambda,analytic,mc_mean,mc_std_error,z_score,verdict\n");
    let mut failed = false;
    for check in &checks {
        let verdict = if check.z_score > 4.0 { "FAIL" } else { "ok" };
        failed |= check.z_score > 4.0;
        out.push_str(&format!(
            "{},{},{},{},{},{verdict}\n",
            check.lambda, check.analytic, check.mc_mean, check.mc_std_error, check.z_score
        ));
    }
    Ok(if failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn study_objective(config: &ExperimentConfig) -> Result<(fjav::config::StudySection, DesignObjective), Error> {
    let study = config
        .study
        .clone()
        .ok_or_else(|| Error::Config("this command needs a `study` section".into()))?;
    let objective = DesignObjective {
        kind: study.kind,
        lambda: study.lambda,
        prior: config.prior.clone(),
        d: study.d,
        q: study.q,
        k_policy: study.k_policy,
    };
    Ok((study, objective))
}

fn cmd_sweep(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let (study, objective) = study_objective(config)?;
    let family = study
        .family
        .ok_or_else(|| Error::Config("sweep needs study.family".into()))?;
    if study.densities.is_empty() {
        return Err(Error::Config("sweep needs study.densities".into()));
    }
    let policy = study
        .policy
        .unwrap_or(fjav::netdesign::AttackerPolicy::WorstCase);
    let rows = connectivity_sweep(
        family,
        config.graph.n,
        &study.densities,
        policy,
        &objective,
        study.seeds,
        config.seed,
    )?;
    out.push_str("density_or_step,objective_kind,mean,stderr\n");
    let kind = match objective.kind {
        fjav::netdesign::ObjectiveKind::ConsensusError => "consensus_error",
        fjav::netdesign::ObjectiveKind::GramianTrace => "gramian_trace",
    };
    for row in &rows {
        out.push_str(&format!(
            "{},{kind},{},{}\n",
            row.density, row.mean, row.std_error
        ));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gramian(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let (net, _, _) = build_world(config)?;
    if net.n_misbehaving() == 0 {
        return Err(Error::Config(
            "gramian needs misbehaving nodes (they drive the input matrix)".into(),
        ));
    }
    let k_policy = config
        .study
        .as_ref()
        .map(|s| s.k_policy)
        .unwrap_or(KPolicy::Reachability);
    let lambdas = config
        .lambdas
        .clone()
        .unwrap_or_else(|| (0..20).map(|i| 0.95 * i as f64 / 19.0).collect());
    let points = experiments::gramian_curve(&net, &lambdas, k_policy)?;
    out.push_str("lambda,K,trace\n");
    for p in &points {
        out.push_str(&format!("{},{},{}\n", p.lambda, p.k_steps, p.trace));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_prune(config: &ExperimentConfig, out: &mut String) -> Result<ExitCode, Error> {
    let (study, objective) = study_objective(config)?;
    let net = fjav::graphs::generate(&config.graph)?;
    let max_removals = study.max_removals.unwrap_or(net.n() / 2);
    let result = experiments::prune_study(&net, &objective, max_removals)?;
    out.push_str("step,edge_u,edge_v,value\n");
    out.push_str(&format!("0,,,{}\n", result.trace.initial_value));
    for (i, step) in result.trace.steps.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            step.edge.0,
            step.edge.1,
            step.value
        ));
    }
    match (result.matching_baseline, &result.matching_infeasible) {
        (Some(value), _) => out.push_str(&format!("matching_baseline,,,{value}\n")),
        (None, Some(msg)) => out.push_str(&format!("matching_baseline,,,{msg:?}\n")),
        (None, None) => {}
    }
    Ok(ExitCode::SUCCESS)
}
