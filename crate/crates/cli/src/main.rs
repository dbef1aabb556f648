use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use llcg::config::ExperimentConfig;
use llcg::graph::{gen_sbm, load_graph, save_graph, SbmParams, DEFAULT_NOISE};
use llcg::metrics::measure_sampling_bias;
use llcg::model::{run_gradcheck, Arch, GRADCHECK_ARCHS};
use llcg::partition::{format_assignment, partition_greedy, partition_random};
use llcg::report::{compare, summarize, summary_table};
use llcg::sim::{format_csv, parse_csv, run_experiment, RunOptions};
use llcg::Error;

/// Largest relative error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-5;
const GRADCHECK_NODES: [usize; 3] = [10, 30, 50];

#[derive(Parser)]
#[command(name = "llcg", version, about = "Distributed GNN training laboratory")]
struct Cli {
    /// Seed for generation, partitioning, initialization and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(short = 'o', long, global = true)]
    out: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Random,
    Greedy,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model graph.
    Gen {
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 250)]
        per_block: usize,
        #[arg(long, default_value_t = 0.05)]
        p_in: f64,
        #[arg(long, default_value_t = 0.005)]
        p_out: f64,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_NOISE)]
        noise: f64,
    },
    /// Partition a graph file across machines.
    Partition {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        method: Method,
        #[arg(long, default_value_t = 4)]
        parts: usize,
    },
    /// Run every strategy listed in a config file.
    Train {
        config: PathBuf,
        /// Write the effective configuration to stdout and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        /// Restrict to one architecture, e.g. `G,G`.
        #[arg(long)]
        arch: Option<String>,
        /// Restrict to one graph size.
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Merge round logs and summarize them.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

/// A failure with its exit code: 2 for bad input, 1 for runtime failure.
struct Failure {
    code: u8,
    msg: String,
}

fn usage(e: impl ToString) -> Failure {
    Failure {
        code: 2,
        msg: e.to_string(),
    }
}

fn runtime(e: impl ToString) -> Failure {
    Failure {
        code: 1,
        msg: e.to_string(),
    }
}

fn flag_name(field: &str) -> &str {
    match field {
        "p_intra" => "--p-in",
        "p_inter" => "--p-out",
        "per_block" => "--per-block",
        "feature_dim" => "--dim",
        "blocks" => "--blocks",
        "noise" => "--noise",
        other => other,
    }
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var("LLCG_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("LLCG_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_gen(
    cli: &Cli,
    blocks: usize,
    per_block: usize,
    p_in: f64,
    p_out: f64,
    dim: usize,
    noise: f64,
) -> Result<(), Failure> {
    let out = cli.out.as_ref().ok_or_else(|| usage("gen needs an output file (-o)"))?;
    let params = SbmParams {
        blocks,
        per_block,
        p_intra: p_in,
        p_inter: p_out,
        feature_dim: dim,
        noise,
        seed: cli.seed.unwrap_or(1),
    };
    let graph = gen_sbm(&params).map_err(|e| match e {
        Error::InvalidArgument { field, msg } => usage(format!("invalid value for {}: {msg}", flag_name(field))),
        e => usage(e),
    })?;
    save_graph(&graph, out).map_err(runtime)?;
    if !cli.quiet {
        println!(
            "nodes {} edges {} blocks {blocks} per_block {per_block} feature_dim {dim}",
            graph.num_nodes(),
            graph.num_edges()
        );
    }
    Ok(())
}

fn cmd_partition(cli: &Cli, graph: &Path, method: Method, parts: usize) -> Result<(), Failure> {
    let g = load_graph(graph).map_err(usage)?;
    let seed = cli.seed.unwrap_or(0);
    let partition = match method {
        Method::Random => partition_random(&g, parts, seed),
        Method::Greedy => partition_greedy(&g, parts, seed),
    }
    .map_err(usage)?;
    let text = format_assignment(&partition);
    match &cli.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    if !cli.quiet {
        let s = partition.stats();
        eprintln!(
            "edge_cut {} of {} (ratio {:.4}) balance {:.4} boundary_nodes {:?} part_sizes {:?}",
            s.edge_cut, s.total_edges, s.cut_ratio, s.balance, s.boundary_nodes, s.part_sizes
        );
    }
    Ok(())
}

fn cmd_train(cli: &Cli, config: &Path, dump: bool) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(usage)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if dump {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    cfg.check_paths().map_err(usage)?;
    let threads = threads()?;
    let graph = cfg.build_graph().map_err(usage)?;
    let partition = cfg.build_partition(&graph).map_err(usage)?;
    let init = cfg.model.init(&graph).map_err(usage)?;
    std::fs::create_dir_all(&cfg.output).map_err(|e| runtime(format!("{}: {e}", cfg.output.display())))?;
    write_file(&cfg.output.join("config.ini"), &cfg.to_text())?;

    if cfg.metrics.bias_samples > 0 {
        let mut csv = String::from("machine,bias_sq,variance,samples\n");
        for p in 0..partition.num_parts() {
            let local_train = partition.local(p).graph.train_nodes().len();
            if local_train == 0 {
                continue;
            }
            let batch = cfg.metrics.bias_batch.min(local_train);
            let r = measure_sampling_bias(
                &partition,
                p,
                &init,
                cfg.train.fanout,
                batch,
                cfg.metrics.bias_samples,
                cfg.train.seed,
            )
            .map_err(runtime)?;
            csv.push_str(&format!("{},{},{},{}\n", r.machine, r.bias_sq, r.variance, r.samples));
        }
        write_file(&cfg.output.join("sampling_bias.csv"), &csv)?;
    }

    let options = RunOptions {
        threads,
        observer: None,
    };
    for &strategy in &cfg.strategies {
        let plan = cfg.plan(strategy);
        let logs = run_experiment(&graph, &partition, &plan, &init, &options)
            .map_err(|e| runtime(format!("{strategy}: {e}")))?;
        write_file(&cfg.output.join(format!("{strategy}.csv")), &format_csv(&logs))?;
        if !cli.quiet {
            let s = summarize(strategy.name(), &logs).map_err(runtime)?;
            println!(
                "{strategy}: rounds {} val_acc {:.4} test_acc {:.4} bytes {} plateau_grad {:.4e}",
                s.rounds, s.final_val_acc, s.final_test_acc, s.total_bytes, s.plateau_grad_norm_sq
            );
        }
    }
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, arch: Option<&str>, nodes: Option<usize>, step: f64) -> Result<(), Failure> {
    let archs: Vec<Arch> = match arch {
        Some(a) => vec![a.parse().map_err(usage)?],
        None => GRADCHECK_ARCHS
            .iter()
            .map(|a| a.parse().expect("built-in arch"))
            .collect(),
    };
    let sizes: Vec<usize> = match nodes {
        Some(n) => vec![n],
        None => GRADCHECK_NODES.to_vec(),
    };
    let seed = cli.seed.unwrap_or(0);
    let mut worst: Option<(f64, String)> = None;
    for &n in &sizes {
        let cases = run_gradcheck(&archs, n, step, seed).map_err(usage)?;
        for case in cases {
            let r = &case.report;
            let (layer, row, col) = r.worst;
            let line = format!(
                "arch {:<4} nodes {:>3}: max relative error {:.3e} at matrix {layer} [{row}, {col}] (analytic {:.6e}, numeric {:.6e}), {} checked, {} skipped at kinks",
                case.arch.to_string(),
                case.nodes,
                r.max_relative_error,
                r.analytic,
                r.numeric,
                r.checked,
                r.skipped
            );
            if !cli.quiet {
                println!("{line}");
            }
            let err = if r.max_relative_error.is_nan() {
                f64::INFINITY
            } else {
                r.max_relative_error
            };
            if worst.as_ref().is_none_or(|(w, _)| err > *w) {
                worst = Some((err, line));
            }
        }
    }
    match worst {
        Some((err, line)) if err > GRADCHECK_TOLERANCE => Err(runtime(format!(
            "gradcheck failed (tolerance {GRADCHECK_TOLERANCE:e}); worst case: {line}"
        ))),
        _ => {
            if !cli.quiet {
                println!("gradcheck passed (tolerance {GRADCHECK_TOLERANCE:e})");
            }
            Ok(())
        }
    }
}

fn cmd_report(cli: &Cli, paths: &[PathBuf]) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let logs = parse_csv(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if logs.is_empty() {
            return Err(usage(format!("{}: no rounds logged", path.display())));
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        runs.push((name, logs));
    }
    let cmp = compare(&runs).map_err(usage)?;
    for w in &cmp.warnings {
        eprintln!("warning: {w}");
    }
    match &cli.out {
        Some(path) => {
            write_file(path, &cmp.csv)?;
            if !cli.quiet {
                print!("{}", summary_table(&cmp.summaries));
            }
        }
        None => {
            print!("{}", cmp.csv);
            if !cli.quiet {
                eprint!("{}", summary_table(&cmp.summaries));
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Gen {
            blocks,
            per_block,
            p_in,
            p_out,
            dim,
            noise,
        } => cmd_gen(cli, *blocks, *per_block, *p_in, *p_out, *dim, *noise),
        Command::Partition { graph, method, parts } => cmd_partition(cli, graph, *method, *parts),
        Command::Train { config, dump_config } => cmd_train(cli, config, *dump_config),
        Command::Gradcheck { arch, nodes, step } => cmd_gradcheck(cli, arch.as_deref(), *nodes, *step),
        Command::Report { logs } => cmd_report(cli, logs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
