use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use admcap::aggregation::{build_aggregate_mdp, build_epsilon_partition, build_total_job_partition, lift_policy};
use admcap::elimination::{check_assumptions, reduced_action_stats, write_trace, CostRegime};
use admcap::evaluation::{
    absolute_gap, always_serve_policy, matched_action_percentage, myopic_policy, simulate, SimConfig,
};
use admcap::experiment::{
    emit_table, read_results, run_experiment, write_policy_csv, ExperimentSpec, MethodKind, ModelSpec, TableKind,
};
use admcap::lp::Tolerances;
use admcap::model::{ModelConfig, State};
use admcap::solve::{
    build_dual_lp, policy_gain, relative_value_iteration, solve_with_lp, Policy, RviOptions, Solution,
};
use admcap::space::{build_instance, MdpInstance};
use admcap::{Error, Result};

#[derive(Parser)]
#[command(name = "admcap", version, about = "Admission control and capacity allocation MDP toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate states and actions and report the instance size.
    Build {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_eliminate: bool,
    },
    /// Solve an instance exactly.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        /// DLP, RLP or RVI. Defaults to RLP, or DLP with --no-eliminate.
        #[arg(long)]
        method: Option<MethodKind>,
        #[arg(long)]
        no_eliminate: bool,
        /// Seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Also export the dual LP in free MPS format.
        #[arg(long)]
        mps: Option<PathBuf>,
    },
    /// Compare action counts with and without elimination.
    EliminateStats {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Solve an aggregate model and evaluate the lifted policy.
    Aggregate {
        #[command(flatten)]
        model: ModelArgs,
        /// TOTJOB or EPS.
        #[arg(long, default_value = "TOTJOB")]
        method: MethodKind,
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Exact gains of the benchmark heuristics.
    Heuristic {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "MP,AP")]
        method: Vec<MethodKind>,
        #[arg(long)]
        ap_reject_overflow: bool,
    },
    /// Monte-Carlo evaluation of a policy.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// RVI (optimal), TOTJOB, MP or AP.
        #[arg(long, default_value = "RVI")]
        method: MethodKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        warmup: u64,
        #[arg(long, default_value_t = 900_000)]
        horizon: u64,
        #[arg(long, default_value_t = 30)]
        batches: usize,
        #[arg(long)]
        ap_reject_overflow: bool,
    },
    /// Run a grid experiment from a spec file.
    Experiment {
        /// Experiment spec (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Defaults to output_dir from the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the method list of the experiment file.
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<MethodKind>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Runs DLP in place of RLP.
        #[arg(long)]
        no_eliminate: bool,
        /// Also write sizes, gains, elimination or aggregation tables.
        #[arg(long, value_delimiter = ',')]
        table: Vec<TableKind>,
        /// Tabulate an existing results.csv instead of running.
        #[arg(long)]
        from_results: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Domain(_) | Error::Contract(_) => 2,
        Error::Resource { .. } => 3,
        Error::Timeout { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_model(path: &Path) -> Result<ModelConfig> {
    ModelSpec::load(path)?.config()
}

fn out_file(dir: &Option<PathBuf>, name: &str) -> Result<Option<BufWriter<File>>> {
    match dir {
        None => Ok(None),
        Some(d) => {
            fs::create_dir_all(d)?;
            Ok(Some(BufWriter::new(File::create(d.join(name))?)))
        }
    }
}

fn limit(secs: Option<f64>) -> Result<Option<Duration>> {
    secs.map(|s| {
        Duration::try_from_secs_f64(s)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| Error::Config(format!("time limit must be a positive number of seconds, got {s}")))
    })
    .transpose()
}

fn describe(inst: &MdpInstance) {
    let c = &inst.config;
    println!(
        "model K={} A={} M={} lambda={} costs={},{},{},{}",
        c.horizon,
        c.max_arrivals,
        c.capacity,
        c.arrival_rate,
        c.costs.overtime,
        c.costs.rejection,
        c.costs.early_high,
        c.costs.early_low
    );
    println!("states={}", inst.num_states());
    println!("feasible_actions={}", inst.stats.feasible_actions);
    println!("actions={}", inst.num_actions());
    println!("eliminated={}", inst.eliminated);
    println!("build_secs={:.3}", inst.stats.build_secs);
    println!("memory_bytes={}", inst.stats.memory_bytes);
    for n in &inst.stats.notes {
        println!("note: {n}");
    }
}

fn solve_exact(inst: &MdpInstance, method: MethodKind, time_limit: Option<Duration>) -> Result<Solution> {
    match method {
        MethodKind::Rvi => relative_value_iteration(&inst.mdp, &RviOptions { time_limit, ..RviOptions::default() }),
        _ => solve_with_lp(&inst.mdp, &Tolerances { time_limit, ..Tolerances::default() }),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Build { model, no_eliminate } => {
            let cfg = load_model(&model.config)?;
            let inst = build_instance(&cfg, !no_eliminate)?;
            describe(&inst);
            if let Some(w) = out_file(&model.out, "instance.txt")? {
                inst.write_dump(w)?;
            }
        }
        Command::Solve { model, method, no_eliminate, time_limit, mps } => {
            let cfg = load_model(&model.config)?;
            let method = method.unwrap_or(if no_eliminate { MethodKind::Dlp } else { MethodKind::Rlp });
            let eliminate = match method {
                MethodKind::Dlp | MethodKind::Rvi => false,
                MethodKind::Rlp => !no_eliminate,
                other => return Err(Error::Config(format!("solve supports DLP, RLP and RVI, not {other}"))),
            };
            let inst = build_instance(&cfg, eliminate)?;
            describe(&inst);
            if let Some(path) = mps {
                build_dual_lp(&inst.mdp).to_sparse().write_mps("ADMCAP", BufWriter::new(File::create(path)?))?;
            }
            let sol = solve_exact(&inst, method, limit(time_limit)?)?;
            println!("method={method}");
            println!("gain={:.10}", sol.gain);
            println!("iterations={}", sol.stats.iterations);
            println!("solve_secs={:.3}", sol.stats.elapsed.as_secs_f64());
            if let Some(w) = out_file(&model.out, "policy.csv")? {
                write_policy_csv(&inst, &sol.policy, w)?;
            }
            if let Some(mut w) = out_file(&model.out, "bias.csv")? {
                writeln!(w, "state,h")?;
                for (s, h) in sol.bias.iter().enumerate() {
                    writeln!(w, "{s},{h}")?;
                }
            }
        }
        Command::EliminateStats { model } => {
            let cfg = load_model(&model.config)?;
            println!("regime={}", CostRegime::classify(&cfg));
            for a in check_assumptions(&cfg) {
                println!("assumption violated: {a}");
            }
            let full = build_instance(&cfg, false)?;
            let reduced = build_instance(&cfg, true)?;
            let st = reduced_action_stats(&full, &reduced)?;
            println!("states={}", full.num_states());
            println!("dlp_actions={}", st.total_before);
            println!("rlp_actions={}", st.total_after);
            println!("ratio={:.4}", st.ratio);
            println!("dlp_memory_bytes={}", st.memory_before);
            println!("rlp_memory_bytes={}", st.memory_after);
            if let Some(w) = out_file(&model.out, "elimination.txt")? {
                write_trace(&full, w)?;
            }
        }
        Command::Aggregate { model, method, epsilon, gamma, time_limit } => {
            let cfg = load_model(&model.config)?;
            let inst = build_instance(&cfg, false)?;
            let partition = match method {
                MethodKind::Totjob => build_total_job_partition(&inst, gamma)?,
                MethodKind::Eps => build_epsilon_partition(&inst.mdp, epsilon)?,
                other => return Err(Error::Config(format!("aggregate supports TOTJOB and EPS, not {other}"))),
            };
            let opts = RviOptions { time_limit: limit(time_limit)?, ..RviOptions::default() };
            let agg = build_aggregate_mdp(&inst.mdp, &partition)?;
            let sol = relative_value_iteration(&agg, &opts)?;
            let lifted = lift_policy(&sol.policy, &partition)?;
            let gain = policy_gain(&inst.mdp, &lifted)?;
            let opt = relative_value_iteration(&inst.mdp, &opts)?;
            println!("states={}", inst.num_states());
            println!("meta_states={}", partition.len());
            println!("aggregate_actions={}", agg.num_actions());
            println!("aggregate_gain={:.6}", sol.gain);
            println!("lifted_gain={gain:.6}");
            println!("optimal_gain={:.6}", opt.gain);
            match absolute_gap(gain, opt.gain) {
                Some(ag) => println!("AG={ag:.4}"),
                None => println!("AG=NA"),
            }
            println!("MAP={:.4}", matched_action_percentage(&lifted, &opt.policy)?);
            for d in &partition.diagnostics {
                println!("note: {d}");
            }
            if let Some(w) = out_file(&model.out, "partition.txt")? {
                partition.write_dump(w)?;
            }
            if let Some(w) = out_file(&model.out, "policy.csv")? {
                write_policy_csv(&inst, &lifted, w)?;
            }
        }
        Command::Heuristic { model, method, ap_reject_overflow } => {
            let cfg = load_model(&model.config)?;
            let inst = build_instance(&cfg, false)?;
            let opt = relative_value_iteration(&inst.mdp, &RviOptions::default())?;
            println!("optimal_gain={:.6}", opt.gain);
            for m in method {
                let policy = heuristic_policy(&inst, m, ap_reject_overflow)?;
                let gain = policy_gain(&inst.mdp, &policy)?;
                let ag = absolute_gap(gain, opt.gain).map_or("NA".to_string(), |v| format!("{v:.4}"));
                let map = matched_action_percentage(&policy, &opt.policy)?;
                println!("{m} gain={gain:.6} AG={ag} MAP={map:.4}");
                if let Some(w) = out_file(&model.out, &format!("policy-{}.csv", m.name().to_lowercase()))? {
                    write_policy_csv(&inst, &policy, w)?;
                }
            }
        }
        Command::Simulate { model, method, seed, warmup, horizon, batches, ap_reject_overflow } => {
            let cfg = load_model(&model.config)?;
            let inst = build_instance(&cfg, false)?;
            let policy = match method {
                MethodKind::Rvi | MethodKind::Dlp | MethodKind::Rlp => {
                    relative_value_iteration(&inst.mdp, &RviOptions::default())?.policy
                }
                MethodKind::Totjob => {
                    let p = build_total_job_partition(&inst, 0.0)?;
                    let agg = build_aggregate_mdp(&inst.mdp, &p)?;
                    lift_policy(&relative_value_iteration(&agg, &RviOptions::default())?.policy, &p)?
                }
                other => heuristic_policy(&inst, other, ap_reject_overflow)?,
            };
            let sim = simulate(&inst, &policy, &SimConfig { seed, warmup, horizon, initial: State::empty(), batches })?;
            println!("method={method}");
            println!("seed={seed}");
            println!("mean={:.6}", sim.mean);
            println!("half_width={:.6}", sim.half_width);
            println!("periods={}", sim.periods);
            if let Some(mut w) = out_file(&model.out, "batches.csv")? {
                writeln!(w, "batch,mean")?;
                for (i, m) in sim.batch_means.iter().enumerate() {
                    writeln!(w, "{i},{m}")?;
                }
            }
        }
        Command::Experiment { config, out, method, seed, time_limit, no_eliminate, table, from_results } => {
            let (rows, dir) = match from_results {
                Some(path) => {
                    let dir = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
                    (read_results(&path)?, dir)
                }
                None => {
                    let mut spec = ExperimentSpec::load(&config)?;
                    if let Some(m) = method {
                        spec.methods = m;
                    }
                    if no_eliminate {
                        for m in spec.methods.iter_mut().filter(|m| **m == MethodKind::Rlp) {
                            *m = MethodKind::Dlp;
                        }
                    }
                    if let Some(s) = seed {
                        spec.seed = s;
                    }
                    if let Some(t) = time_limit {
                        spec.time_limit_secs = t;
                    }
                    let dir = out.unwrap_or_else(|| PathBuf::from(&spec.output_dir));
                    let res = run_experiment(&spec, &dir)?;
                    println!("rows={}", res.rows.len());
                    println!("results={}", res.csv_path.display());
                    println!("log={}", res.log_path.display());
                    (res.rows, dir)
                }
            };
            for kind in table {
                let text = emit_table(&rows, kind)?;
                let name = format!("table-{}.csv", format!("{kind:?}").to_lowercase());
                fs::create_dir_all(&dir)?;
                fs::write(dir.join(&name), &text)?;
                println!("table={}", dir.join(name).display());
            }
        }
    }
    Ok(())
}

fn heuristic_policy(inst: &MdpInstance, method: MethodKind, reject_overflow: bool) -> Result<Policy> {
    match method {
        MethodKind::Mp => Ok(myopic_policy(&inst.mdp)),
        MethodKind::Ap => Ok(always_serve_policy(inst, reject_overflow)),
        other => Err(Error::Config(format!("{other} is not a heuristic (expected MP or AP)"))),
    }
}
