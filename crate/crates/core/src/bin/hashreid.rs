use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hashreid::bench::{run_bench, BenchConfig};
use hashreid::dataset::{
    generate_synthetic, load_embeddings, load_embeddings_csv, save_embeddings, split_per_identity, EmbeddingSet,
};
use hashreid::hamming::{encode_set, load_codes, rank_all, save_codes};
use hashreid::metrics::{evaluate, EvalOptions};
use hashreid::model::{load_checkpoint, save_checkpoint};
use hashreid::parallel::max_threads;
use hashreid::selftest::{self, SelftestOptions};
use hashreid::solver::{format_history, train, TrainConfig};

#[derive(Parser)]
#[command(name = "hashreid", version, about = "Learn binary Hamming codes over embeddings and search them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the alternating optimization and write a checkpoint plus loss history.
    Train(Box<TrainArgs>),
    /// Encode an embedding file into packed codes with a trained checkpoint.
    Encode(EncodeArgs),
    /// Print the nearest gallery items for every query code.
    Query(QueryArgs),
    /// CMC and mAP of query codes against gallery codes.
    Eval(EvalArgs),
    /// Time packed Hamming scans against float64 Euclidean scans.
    Bench(BenchArgs),
    /// Run the built-in verification battery.
    Selftest(SelftestArgs),
    /// Write synthetic clustered embeddings.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Format {
    #[default]
    Emb1,
    Csv,
}

#[derive(Args)]
struct TrainArgs {
    /// Training embeddings.
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss history to write (one line per outer iteration).
    #[arg(long)]
    history: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args, Default)]
struct ConfigOverrides {
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    bits: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    inner_iters: Option<String>,
    #[arg(long)]
    outer_iters: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    k1: Option<String>,
    #[arg(long)]
    adapter_depth: Option<String>,
    #[arg(long)]
    adapter_width: Option<String>,
    #[arg(long)]
    dcc_sweeps: Option<String>,
    #[arg(long)]
    full_batch: Option<String>,
    #[arg(long)]
    converge_tol: Option<String>,
    #[arg(long)]
    converge_patience: Option<String>,
}

impl ConfigOverrides {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("seed", &self.seed),
            ("bits", &self.bits),
            ("alpha", &self.alpha),
            ("lr", &self.lr),
            ("weight_decay", &self.weight_decay),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("mu", &self.mu),
            ("nu", &self.nu),
            ("eta", &self.eta),
            ("lambda", &self.lambda),
            ("sigma", &self.sigma),
            ("inner_iters", &self.inner_iters),
            ("outer_iters", &self.outer_iters),
            ("p", &self.p),
            ("k1", &self.k1),
            ("adapter_depth", &self.adapter_depth),
            ("adapter_width", &self.adapter_width),
            ("dcc_sweeps", &self.dcc_sweeps),
            ("full_batch", &self.full_batch),
            ("converge_tol", &self.converge_tol),
            ("converge_patience", &self.converge_patience),
        ]
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_rank: usize,
    /// Query and gallery are the same item list; drop each query's own entry.
    #[arg(long)]
    self_match: bool,
    #[arg(long)]
    json: bool,
    /// Reserved: camera-aware junk removal (code files carry no camera ids).
    #[arg(long)]
    camera_filter: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2048)]
    bits: usize,
    #[arg(long, default_value_t = 100_000)]
    n_gallery: usize,
    #[arg(long, default_value_t = 10)]
    n_query: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Also time a multi-threaded scan (capped by DVHN_THREADS).
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Negative control: corrupt one analytic gradient.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    num_ids: usize,
    #[arg(long, default_value_t = 20)]
    per_id: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.15)]
    spread: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output file (the training split when --query-out/--gallery-out are given).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "gallery_out")]
    query_out: Option<PathBuf>,
    #[arg(long, requires = "query_out")]
    gallery_out: Option<PathBuf>,
    #[arg(long, default_value_t = 14)]
    train_per_id: usize,
    #[arg(long, default_value_t = 2)]
    query_per_id: usize,
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<hashreid::Error> for Failure {
    fn from(e: hashreid::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path) -> CmdResult {
    if !path.is_file() {
        return Err(Failure::usage(format!("input not found: {}", path.display())));
    }
    Ok(())
}

fn load_set(path: &Path, format: Format) -> Result<EmbeddingSet, Failure> {
    require_file(path)?;
    Ok(match format {
        Format::Emb1 => load_embeddings(path)?,
        Format::Csv => load_embeddings_csv(path)?,
    })
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        require_file(path)?;
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for (key, value) in args.overrides.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    let data = load_set(&args.input, args.format)?;
    info!(
        "training on {} rows, {} identities, width {}",
        data.len(),
        data.num_ids(),
        data.dim()
    );
    let out = train(&data, &cfg)?;
    save_checkpoint(&args.out, &out.params, &out.classifier)?;
    write_text(&args.history, &format_history(&out.history))?;
    println!(
        "trained {} outer iterations; checkpoint {}, history {}",
        out.history.len(),
        args.out.display(),
        args.history.display()
    );
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> CmdResult {
    require_file(&args.checkpoint)?;
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let data = load_set(&args.input, args.format)?;
    let expected = params.dims().input;
    if data.dim() != expected {
        return Err(Failure::usage(format!(
            "dimension mismatch: embeddings have width {}, checkpoint expects {expected}",
            data.dim()
        )));
    }
    let codes = encode_set(&params, &data)?;
    save_codes(&codes, &args.out)?;
    println!("encoded {} items at {} bits into {}", codes.len(), codes.bits(), args.out.display());
    Ok(())
}

fn cmd_query(args: QueryArgs) -> CmdResult {
    require_file(&args.gallery)?;
    require_file(&args.query)?;
    let gallery = load_codes(&args.gallery)?;
    let queries = load_codes(&args.query)?;
    if queries.is_empty() {
        return Err(Failure::usage(format!("no query codes in {}", args.query.display())));
    }
    if queries.bits() != gallery.bits() {
        return Err(Failure::usage(format!(
            "code length mismatch: query {} bits, gallery {} bits",
            queries.bits(),
            gallery.bits()
        )));
    }
    let lists = rank_all(&queries, &gallery, Some(args.top_k), false, max_threads())?;
    let mut out = String::new();
    for list in lists {
        out.push_str(&format!("{}:", list.query_index));
        for (i, d) in list.indices.iter().zip(&list.distances) {
            out.push_str(&format!(" {i}({d})"));
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    if args.camera_filter {
        return Err(Failure::usage(
            "--camera-filter is reserved: code files carry no camera ids",
        ));
    }
    require_file(&args.query)?;
    require_file(&args.gallery)?;
    let queries = load_codes(&args.query)?;
    let gallery = load_codes(&args.gallery)?;
    if queries.bits() != gallery.bits() {
        return Err(Failure::usage(format!(
            "code length mismatch: query {} bits, gallery {} bits",
            queries.bits(),
            gallery.bits()
        )));
    }
    let report = evaluate(
        &queries,
        &gallery,
        args.max_rank,
        EvalOptions {
            exclude_self: args.self_match,
            threads: max_threads(),
        },
    )?;
    if args.json {
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        print!("{report}");
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let report = run_bench(&BenchConfig {
        bits: args.bits,
        n_gallery: args.n_gallery,
        n_query: args.n_query,
        seed: args.seed,
        repeats: args.repeats,
        threads: if args.parallel { max_threads() } else { 1 },
    })?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{report}");
    }
    if !report.orderings_identical {
        return Err(Failure {
            code: 1,
            message: "packed and float scans produced different orderings".into(),
        });
    }
    Ok(())
}

fn cmd_selftest(args: SelftestArgs) -> CmdResult {
    let opts = match args.inject_fault.as_deref() {
        None => SelftestOptions::default(),
        Some("gradient") => SelftestOptions { perturb_gradient: true },
        Some(other) => return Err(Failure::usage(format!("unknown fault {other:?}"))),
    };
    let results = selftest::run(opts);
    let mut failed = Vec::new();
    for r in &results {
        if r.passed {
            println!("{:<10} pass", r.name);
        } else {
            println!("{:<10} FAIL  {}", r.name, r.detail);
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("failed groups: {}", failed.join(", ")),
        })
    }
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let set = generate_synthetic(args.num_ids, args.per_id, args.dim, args.spread, args.seed)?;
    match (&args.query_out, &args.gallery_out) {
        (Some(q), Some(g)) => {
            let (train, query, gallery) = split_per_identity(&set, args.train_per_id, args.query_per_id)?;
            save_embeddings(&train, &args.out)?;
            save_embeddings(&query, q)?;
            save_embeddings(&gallery, g)?;
            println!(
                "wrote {} train, {} query, {} gallery rows",
                train.len(),
                query.len(),
                gallery.len()
            );
        }
        _ => {
            save_embeddings(&set, &args.out)?;
            println!("wrote {} rows to {}", set.len(), args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(*a),
        Command::Encode(a) => cmd_encode(a),
        Command::Query(a) => cmd_query(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Selftest(a) => cmd_selftest(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
