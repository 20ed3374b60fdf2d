use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use novelcat_core::clustering::{parse_assignments_csv, similarity_features_from};
use novelcat_core::pipeline::{cluster_and_score, stack_for_clustering, ClusterCount};
use novelcat_core::trainer::{loss_trace_csv, TrainingData};
use novelcat_core::{
    generate_synthetic, load_checkpoint, read_embedding_file, run_all, save_checkpoint, split_accuracy, train,
    write_embedding_file, EmbeddingSet, ErrorKind, EvalReport, RunConfig, SyntheticData, TrainState,
};

const EXIT_BAD_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "novelcat",
    version,
    about = "Category discovery over pre-extracted embeddings"
)]
struct Cli {
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labeled/unlabeled/class-embedding triple.
    GenSynthetic {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the projectors and write a checkpoint.
    Train {
        #[command(flatten)]
        data: TrainInputs,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        dump_graph: bool,
    },
    /// Cluster `D_S ∪ D_U` with a trained checkpoint.
    Cluster {
        #[command(flatten)]
        data: ClusterInputs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        k: KArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score an assignments CSV against the unlabeled ground truth.
    Eval {
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        /// Number of known classes; read from --class-emb when omitted.
        #[arg(long)]
        known: Option<usize>,
        #[arg(long)]
        class_emb: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Elbow scan of the cluster count with a trained checkpoint.
    EstimateK {
        #[command(flatten)]
        data: ClusterInputs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train, cluster and score in one go.
    RunAll {
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long)]
        class_emb: Option<PathBuf>,
        /// Generate the inputs instead of reading them.
        #[arg(long)]
        synthetic: bool,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        k: KArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        dump_graph: bool,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    known: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
}

#[derive(Args, Debug)]
struct TrainInputs {
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    class_emb: PathBuf,
}

#[derive(Args, Debug)]
struct ClusterInputs {
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    class_emb: PathBuf,
}

#[derive(Args, Debug)]
struct KArgs {
    /// Total cluster count. Defaults to the class count of the unlabeled truth.
    #[arg(long, conflicts_with = "estimate_k")]
    k_total: Option<usize>,
    /// Pick the cluster count with the elbow rule.
    #[arg(long)]
    estimate_k: bool,
    #[arg(long, requires = "estimate_k")]
    k_min: Option<usize>,
    #[arg(long, requires = "estimate_k")]
    k_max: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    gcn_layers: Option<usize>,
    #[arg(long)]
    margin_alpha: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    learn_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    context_vectors_m: Option<usize>,
    /// Use the literal hinge signs for the margin and triplet losses.
    #[arg(long)]
    losses_as_printed: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> RunConfig {
        let mut c = RunConfig::default();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            seed,
            knn_k,
            gcn_layers,
            margin_alpha,
            temperature,
            learn_rate,
            batch_size,
            epochs,
            context_vectors_m
        );
        if self.hidden_dim.is_some() {
            c.hidden_dim = self.hidden_dim;
        }
        c.losses_as_printed = self.losses_as_printed;
        c
    }
}

impl KArgs {
    fn resolve(&self, known: usize, samples: usize) -> ClusterCount {
        if self.estimate_k {
            let k_min = self.k_min.unwrap_or(known.max(1));
            let k_max = self.k_max.unwrap_or((4 * known).max(k_min)).min(samples);
            ClusterCount::Elbow { k_min, k_max }
        } else if let Some(k) = self.k_total {
            ClusterCount::Fixed(k)
        } else {
            ClusterCount::FromTruth
        }
    }
}

fn count_echo(count: ClusterCount) -> String {
    match count {
        ClusterCount::FromTruth => "k_total=truth\nestimate_k=false\n".to_string(),
        ClusterCount::Fixed(k) => format!("k_total={k}\nestimate_k=false\n"),
        ClusterCount::Elbow { k_min, k_max } => format!("estimate_k=true\nk_min={k_min}\nk_max={k_max}\n"),
    }
}

fn read_set(path: &Path, role: &str) -> Result<EmbeddingSet> {
    read_embedding_file(path).with_context(|| format!("embed_io: reading {role} set {}", path.display()))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Prints the resolved settings and writes them next to the outputs.
fn echo_config(dir: &Path, text: &str) -> Result<()> {
    print!("{text}");
    write_text(dir, "config.txt", text)
}

fn synth_echo(s: &SynthArgs, seed: u64) -> String {
    format!(
        "synthetic_classes={}\nsynthetic_known={}\nsynthetic_per_class={}\nsynthetic_dim={}\nsynthetic_separation={}\nsynthetic_seed={seed}\n",
        s.classes, s.known, s.per_class, s.dim, s.separation
    )
}

fn generate(s: &SynthArgs, seed: u64) -> Result<SyntheticData> {
    generate_synthetic(s.classes, s.known, s.per_class, s.dim, s.separation, seed)
        .context("embed_io: generating synthetic data")
}

fn write_synthetic(dir: &Path, data: &SyntheticData) -> Result<()> {
    for (set, name) in [
        (&data.labeled, "labeled.gvle"),
        (&data.unlabeled, "unlabeled.gvle"),
        (&data.class_embeddings, "class_emb.gvle"),
    ] {
        write_embedding_file(set, dir.join(name)).with_context(|| format!("embed_io: writing {name}"))?;
    }
    Ok(())
}

fn print_report(dir: Option<&Path>, report: &EvalReport) -> Result<()> {
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = dir {
        write_text(dir, "report.txt", &text)?;
        write_text(dir, "report.csv", &report.to_csv())?;
    }
    Ok(())
}

fn write_training(dir: &Path, state: &TrainState, dump_graph: Option<&novelcat_core::SemanticGraph>) -> Result<()> {
    save_checkpoint(state, dir.join("checkpoint.gvlp")).context("trainer: writing checkpoint")?;
    write_text(dir, "loss_trace.csv", &loss_trace_csv(&state.trace))?;
    if let Some(g) = dump_graph {
        write_text(dir, "graph.csv", &g.adjacency_csv())?;
    }
    Ok(())
}

fn cmd_train(data: &TrainInputs, config: &ConfigArgs, out_dir: &Path, dump_graph: bool) -> Result<()> {
    let config = config.resolve();
    let labeled = read_set(&data.labeled, "labeled")?;
    let class_emb = read_set(&data.class_emb, "class embedding")?;
    ensure_dir(out_dir)?;
    echo_config(out_dir, &config.to_kv_string())?;
    let state = train(&labeled, &class_emb, &config).context("trainer")?;
    let graph = if dump_graph {
        Some(TrainingData::new(&labeled, &class_emb, config.knn_k)?.graph)
    } else {
        None
    };
    write_training(out_dir, &state, graph.as_ref())?;
    if let Some(last) = state.trace.last() {
        println!("final_loss: {:.6}", last.l_tot);
    }
    Ok(())
}

struct Featurized {
    features: novelcat_core::Matrix,
    constraint: Vec<i32>,
    unlabeled: EmbeddingSet,
    known: usize,
    seed: u64,
}

fn featurize(data: &ClusterInputs, checkpoint: &Path, seed: Option<u64>) -> Result<Featurized> {
    let state =
        load_checkpoint(checkpoint).with_context(|| format!("trainer: reading checkpoint {}", checkpoint.display()))?;
    let labeled = read_set(&data.labeled, "labeled")?;
    let unlabeled = read_set(&data.unlabeled, "unlabeled")?;
    let class_emb = read_set(&data.class_emb, "class embedding")?;
    let td = TrainingData::new(&labeled, &class_emb, state.config.knn_k).context("semantic_graph")?;
    let (x, constraint) = stack_for_clustering(&labeled, &unlabeled).context("clustering")?;
    let features = similarity_features_from(&x, &state.params, &td.graph, &td.h0).context("clustering")?;
    Ok(Featurized {
        features,
        constraint,
        unlabeled,
        known: class_emb.len(),
        seed: seed.unwrap_or(state.config.seed),
    })
}

fn cmd_cluster(data: &ClusterInputs, checkpoint: &Path, k: &KArgs, seed: Option<u64>, out_dir: &Path) -> Result<()> {
    let f = featurize(data, checkpoint, seed)?;
    ensure_dir(out_dir)?;
    let count = k.resolve(f.known, f.features.rows());
    echo_config(out_dir, &format!("seed={}\n{}", f.seed, count_echo(count)))?;
    let (clusters, k_used, elbow, report) =
        cluster_and_score(&f.features, &f.constraint, &f.unlabeled, f.known, count, f.seed).context("clustering")?;
    println!("k_total: {k_used}");
    write_text(out_dir, "assignments.csv", &clusters.to_csv())?;
    if let Some(e) = elbow {
        write_text(out_dir, "inertia.csv", &e.to_csv())?;
    }
    if let Some(r) = report {
        print_report(Some(out_dir), &r)?;
    }
    Ok(())
}

fn cmd_eval(
    assignments: &Path,
    unlabeled: &Path,
    known: Option<usize>,
    class_emb: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(assignments)
        .with_context(|| format!("evaluation: reading assignments {}", assignments.display()))?;
    let rows = parse_assignments_csv(&text).with_context(|| format!("evaluation: {}", assignments.display()))?;
    let unlabeled = read_set(unlabeled, "unlabeled")?;
    let known = match (known, class_emb) {
        (Some(k), _) => k,
        (None, Some(p)) => read_set(p, "class embedding")?.len(),
        (None, None) => bail!(novelcat_core::Error::InvalidArgument(
            "eval needs --known or --class-emb".into()
        )),
    };
    let free: Vec<usize> = rows.iter().filter(|r| !r.1).map(|r| r.0).collect();
    let labels = unlabeled
        .labels()
        .ok_or_else(|| novelcat_core::Error::InvalidArgument("unlabeled set carries no ground truth".into()))?;
    if free.len() != labels.len() {
        bail!(novelcat_core::Error::ShapeMismatch {
            context: "evaluation: free assignments vs unlabeled rows".into(),
            expected: labels.len().to_string(),
            found: free.len().to_string(),
        });
    }
    let truth = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            usize::try_from(l).map_err(|_| novelcat_core::Error::LabelOutOfRange {
                offset: i,
                label: l.into(),
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = split_accuracy(&free, &truth, known).context("evaluation")?;
    report.check_invariants().context("evaluation")?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
    }
    print_report(out_dir, &report)
}

fn cmd_estimate_k(
    data: &ClusterInputs,
    checkpoint: &Path,
    k_min: Option<usize>,
    k_max: Option<usize>,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<()> {
    let f = featurize(data, checkpoint, seed)?;
    ensure_dir(out_dir)?;
    let k_min = k_min.unwrap_or(f.known.max(1));
    let k_max = k_max.unwrap_or((4 * f.known).max(k_min)).min(f.features.rows());
    echo_config(out_dir, &format!("seed={}\nk_min={k_min}\nk_max={k_max}\n", f.seed))?;
    let est = novelcat_core::estimate_k(&f.features, &f.constraint, k_min, k_max, f.seed).context("clustering")?;
    write_text(out_dir, "inertia.csv", &est.to_csv())?;
    println!("k_total: {}", est.k);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run_all(
    labeled: Option<&Path>,
    unlabeled: Option<&Path>,
    class_emb: Option<&Path>,
    synthetic: bool,
    synth: &SynthArgs,
    config: &ConfigArgs,
    k: &KArgs,
    out_dir: &Path,
    dump_graph: bool,
) -> Result<()> {
    let config = config.resolve();
    ensure_dir(out_dir)?;
    let (labeled, unlabeled, class_emb, mut echo) = if synthetic {
        let data = generate(synth, config.seed)?;
        write_synthetic(out_dir, &data)?;
        (
            data.labeled,
            data.unlabeled,
            data.class_embeddings,
            synth_echo(synth, config.seed),
        )
    } else {
        let need = |p: Option<&Path>, flag: &str| {
            p.map(Path::to_path_buf)
                .ok_or_else(|| novelcat_core::Error::InvalidArgument(format!("{flag} is required without --synthetic")))
        };
        let l = read_set(&need(labeled, "--labeled")?, "labeled")?;
        let u = read_set(&need(unlabeled, "--unlabeled")?, "unlabeled")?;
        let c = read_set(&need(class_emb, "--class-emb")?, "class embedding")?;
        (l, u, c, String::new())
    };
    let known = class_emb.len();
    let count = k.resolve(known, labeled.len() + unlabeled.len());
    echo.push_str(&config.to_kv_string());
    echo.push_str(&count_echo(count));
    echo_config(out_dir, &echo)?;

    let out = run_all(&labeled, &unlabeled, &class_emb, &config, count).context("pipeline")?;
    write_training(out_dir, &out.state, dump_graph.then_some(&out.graph))?;
    write_text(out_dir, "assignments.csv", &out.clusters.to_csv())?;
    if let Some(e) = &out.elbow {
        write_text(out_dir, "inertia.csv", &e.to_csv())?;
    }
    println!("k_total: {}", out.k);
    match &out.report {
        Some(r) => print_report(Some(out_dir), r)?,
        None => println!("no ground truth in the unlabeled set; report skipped"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic { synth, seed, out_dir } => {
            let seed = seed.unwrap_or(0);
            ensure_dir(out_dir)?;
            echo_config(out_dir, &synth_echo(synth, seed))?;
            write_synthetic(out_dir, &generate(synth, seed)?)
        }
        Command::Train {
            data,
            config,
            out_dir,
            dump_graph,
        } => cmd_train(data, config, out_dir, *dump_graph),
        Command::Cluster {
            data,
            checkpoint,
            k,
            seed,
            out_dir,
        } => cmd_cluster(data, checkpoint, k, *seed, out_dir),
        Command::Eval {
            assignments,
            unlabeled,
            known,
            class_emb,
            out_dir,
        } => cmd_eval(assignments, unlabeled, *known, class_emb.as_deref(), out_dir.as_deref()),
        Command::EstimateK {
            data,
            checkpoint,
            k_min,
            k_max,
            seed,
            out_dir,
        } => cmd_estimate_k(data, checkpoint, *k_min, *k_max, *seed, out_dir),
        Command::RunAll {
            labeled,
            unlabeled,
            class_emb,
            synthetic,
            synth,
            config,
            k,
            out_dir,
            dump_graph,
        } => cmd_run_all(
            labeled.as_deref(),
            unlabeled.as_deref(),
            class_emb.as_deref(),
            *synthetic,
            synth,
            config,
            k,
            out_dir,
            *dump_graph,
        ),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<novelcat_core::Error>())
        .map(novelcat_core::Error::kind);
    match kind {
        Some(ErrorKind::Numeric) => EXIT_NUMERIC,
        Some(ErrorKind::Invariant) => EXIT_INVARIANT,
        // I/O and parse failures outside the core are input problems too.
        Some(ErrorKind::BadInput) | None => EXIT_BAD_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: configuring thread pool: {e}");
            return ExitCode::from(EXIT_BAD_INPUT);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
