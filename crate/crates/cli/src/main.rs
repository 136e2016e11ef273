//! `mtnn`: command-line front end for the merge tree neural network pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mtnn::groundtruth::{load_table, pairwise_table, save_table, DistanceTable};
use mtnn::mergetree::{build_join_tree, load_trees, save_trees, simplify, MergeTree};
use mtnn::mtnn::{load_model, Activation, Attention, Encoder, ModelConfig, Mtnn, TreeInput};
use mtnn::pipeline::{
    attention_csv, benchmark, evaluate, export_attention, make_pairs, mds, sample_pairs,
    split_trees, train, TrainConfig,
};
use mtnn::scalarfield::{generate, load_fields, normalize_field, save_fields, EnsembleKind, EnsembleSpec};

#[derive(Parser, Debug)]
#[command(name = "mtnn", version, about = "Merge tree neural networks at desk scale")]
struct Cli {
    /// Seed for every random decision of the run.
    #[arg(long, global = true, env = "MTNN_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scalar-field ensemble.
    GenData(GenData),
    /// Build and simplify join trees from scalar fields.
    BuildTrees(BuildTrees),
    /// Compute the pairwise interleaving distance table.
    GroundTruth(GroundTruth),
    /// Train a model on the training split.
    Train(Train),
    /// Evaluate a trained model on held-out pairs.
    Eval(Eval),
    /// Time exact distances against model inference.
    Bench(Bench),
    /// Embed a distance table in 2D with classical MDS.
    Mds(Mds),
    /// Export per-node attention and topological weights.
    Attention(AttentionCmd),
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long, default_value = "gauss2d")]
    kind: EnsembleKind,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// `ROWSxCOLS` for gauss2d, a length for rand1d.
    #[arg(long, default_value = "32x32")]
    grid: String,
    /// Inclusive bump count range `MIN,MAX` (gauss2d).
    #[arg(long)]
    blobs: Option<String>,
    /// Amplitude range `LO,HI`.
    #[arg(long, allow_hyphen_values = true)]
    amplitude: Option<String>,
    /// Bump width range `LO,HI` as fractions of the shorter side (gauss2d).
    #[arg(long)]
    width: Option<String>,
    /// How far bumps travel over the ensemble (gauss2d).
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BuildTrees {
    #[arg(long = "in")]
    input: PathBuf,
    /// Persistence threshold on normalized fields.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GroundTruth {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    dists: PathBuf,
    /// Directory for checkpoints, the split, the loss curve and the config.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.0005)]
    wd: f64,
    #[arg(long, default_value = "gin")]
    encoder: String,
    #[arg(long, default_value = "topological")]
    attention: String,
    #[arg(long, default_value = "relu")]
    ntn_activation: String,
    /// Subsample the training pairs to at most this many.
    #[arg(long)]
    max_pairs: Option<usize>,
    #[arg(long, default_value_t = 10)]
    checkpoint_every: usize,
}

#[derive(Args, Debug)]
struct Eval {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    dists: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Split file written by `train`; its test trees are evaluated. Without
    /// it every pair of the tree file is evaluated (cross-ensemble use).
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct Bench {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    /// Restrict the sample to the test trees of this split file.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Accepted for symmetry with `eval`; timings always run on one thread.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug)]
struct Mds {
    #[arg(long)]
    dists: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AttentionCmd {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated tree ids; all trees when omitted.
    #[arg(long)]
    ids: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn range<T: std::str::FromStr>(what: &str, s: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!(mtnn::Error::Config(format!("{what} must be `LO,HI`, got {s:?}")));
    }
    let p = |t: &str| {
        t.parse::<T>()
            .map_err(|_| mtnn::Error::Config(format!("{what}: bad value {t:?}")))
    };
    Ok((p(parts[0])?, p(parts[1])?))
}

fn grid(kind: EnsembleKind, s: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| mtnn::Error::Config(format!("bad grid {s:?}")))?;
    let want = match kind {
        EnsembleKind::Gauss2d => 2,
        EnsembleKind::Rand1d => 1,
    };
    if dims.len() != want {
        bail!(mtnn::Error::Config(format!("{} needs a {want}D grid, got {s:?}", kind.name())));
    }
    Ok(dims)
}

/// Writes `lines` as `key value` pairs next to an output.
fn echo_config(path: &Path, lines: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in lines {
        writeln!(text, "{k} {v}").unwrap();
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config");
    PathBuf::from(s)
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn gen_data(seed: u64, a: &GenData) -> Result<()> {
    let dims = grid(a.kind, &a.grid)?;
    let mut spec = match a.kind {
        EnsembleKind::Gauss2d => EnsembleSpec::gauss2d(a.count, dims[0], dims[1], seed),
        EnsembleKind::Rand1d => EnsembleSpec::rand1d(a.count, dims[0], seed),
    };
    if let Some(b) = &a.blobs {
        spec.blobs = range("blobs", b)?;
    }
    if let Some(x) = &a.amplitude {
        spec.amplitude = range("amplitude", x)?;
    }
    if let Some(x) = &a.width {
        spec.width = range("width", x)?;
    }
    if let Some(d) = a.drift {
        spec.drift = d;
    }
    let fields = generate(&spec)?;
    save_fields(&fields, &a.out)?;
    echo_config(
        &sidecar(&a.out),
        &[
            ("command", "gen-data".into()),
            ("kind", spec.kind.name().into()),
            ("count", spec.count.to_string()),
            ("grid", a.grid.clone()),
            ("seed", seed.to_string()),
            ("blobs", format!("{},{}", spec.blobs.0, spec.blobs.1)),
            ("amplitude", format!("{},{}", spec.amplitude.0, spec.amplitude.1)),
            ("width", format!("{},{}", spec.width.0, spec.width.1)),
            ("drift", spec.drift.to_string()),
            ("out", show(&a.out)),
        ],
    )?;
    eprintln!("wrote {} fields to {}", fields.len(), a.out.display());
    Ok(())
}

fn build_trees(seed: u64, a: &BuildTrees) -> Result<()> {
    let fields = load_fields(&a.input)?;
    let trees = fields
        .iter()
        .map(|f| simplify(&build_join_tree(&normalize_field(f)), a.tau))
        .collect::<mtnn::Result<Vec<_>>>()?;
    save_trees(&trees, &a.out)?;
    let sizes: Vec<usize> = trees.iter().map(MergeTree::len).collect();
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
    echo_config(
        &sidecar(&a.out),
        &[
            ("command", "build-trees".into()),
            ("in", show(&a.input)),
            ("tau", a.tau.to_string()),
            ("seed", seed.to_string()),
            ("out", show(&a.out)),
        ],
    )?;
    eprintln!(
        "wrote {} trees to {} (nodes: mean {:.1}, min {}, max {})",
        trees.len(),
        a.out.display(),
        mean,
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0)
    );
    Ok(())
}

fn ground_truth(seed: u64, a: &GroundTruth) -> Result<()> {
    let trees = load_trees(&a.trees)?;
    let start = Instant::now();
    let table = pairwise_table(&trees, a.workers)?;
    save_table(&table, &a.out)?;
    echo_config(
        &sidecar(&a.out),
        &[
            ("command", "ground-truth".into()),
            ("trees", show(&a.trees)),
            ("workers", a.workers.to_string()),
            ("seed", seed.to_string()),
            ("out", show(&a.out)),
        ],
    )?;
    eprintln!(
        "wrote {0}x{0} table to {1} in {2:.2}s (norm {3:e})",
        table.len(),
        a.out.display(),
        start.elapsed().as_secs_f64(),
        table.norm
    );
    Ok(())
}

fn load_inputs(trees: &[MergeTree]) -> Result<Vec<TreeInput>> {
    Ok(trees.iter().map(TreeInput::new).collect::<mtnn::Result<_>>()?)
}

fn write_split(path: &Path, trees: &[MergeTree], train: &[usize], test: &[usize]) -> Result<()> {
    let mut text = String::new();
    for &i in train {
        writeln!(text, "train {}", trees[i].source_id).unwrap();
    }
    for &i in test {
        writeln!(text, "test {}", trees[i].source_id).unwrap();
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Test-tree positions from a split file.
fn read_test_split(path: &Path, trees: &[MergeTree]) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut test = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] => {}
            ["train", _] => {}
            ["test", id] => match trees.iter().position(|t| t.source_id == *id) {
                Some(i) => test.push(i),
                None => bail!(mtnn::Error::Data(format!("split lists unknown tree {id}"))),
            },
            _ => bail!(mtnn::Error::Parse {
                line: k + 1,
                msg: format!("bad split line {line:?}"),
            }),
        }
    }
    Ok(test)
}

fn train_cmd(seed: u64, a: &Train) -> Result<()> {
    let trees = load_trees(&a.trees)?;
    let table = load_table(&a.dists)?;
    table.check_ids(&trees)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let model_cfg = ModelConfig {
        encoder: a.encoder.parse::<Encoder>()?,
        attention: a.attention.parse::<Attention>()?,
        ntn_activation: a.ntn_activation.parse::<Activation>()?,
        seed,
        ..ModelConfig::default()
    };
    let tcfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        weight_decay: a.wd,
        seed,
        checkpoint_every: a.checkpoint_every,
        checkpoint_dir: Some(a.out_dir.clone()),
        checkpoint_meta: vec![("target_norm".into(), format!("{:e}", table.norm))],
    };
    tcfg.validate()?;
    let (train_idx, test_idx) = split_trees(trees.len(), seed)?;
    write_split(&a.out_dir.join("split.txt"), &trees, &train_idx, &test_idx)?;
    let pairs = make_pairs(&train_idx, &table, a.max_pairs.map(|m| (m, seed)))?;
    let inputs = load_inputs(&trees)?;

    let mut echo: Vec<(&str, String)> = vec![
        ("command", "train".into()),
        ("trees", show(&a.trees)),
        ("dists", show(&a.dists)),
        ("seed", seed.to_string()),
        ("train_trees", train_idx.len().to_string()),
        ("test_trees", test_idx.len().to_string()),
        ("train_pairs", pairs.len().to_string()),
        ("target_norm", format!("{:e}", table.norm)),
        ("checkpoint_every", a.checkpoint_every.to_string()),
    ];
    let model_pairs = model_cfg.to_pairs();
    let train_pairs = tcfg.to_pairs();
    for (k, v) in model_pairs.iter().chain(&train_pairs) {
        echo.push((k.as_str(), v.clone()));
    }
    echo_config(&a.out_dir.join("config.txt"), &echo)?;

    let start = Instant::now();
    let model = Mtnn::init(model_cfg)?;
    let mut curve = String::from("epoch,loss\n");
    let result = train(model, &inputs, &pairs, &tcfg, |s| {
        writeln!(curve, "{},{:e}", s.epoch, s.loss).unwrap();
        eprintln!(
            "epoch {:4}  loss {:.6e}  ({:.1}s)",
            s.epoch,
            s.loss,
            start.elapsed().as_secs_f64()
        );
    })?;
    fs::write(a.out_dir.join("loss.csv"), curve).context("writing loss curve")?;
    eprintln!(
        "trained on {} pairs in {:.1}s; final loss {:.6e}",
        pairs.len(),
        start.elapsed().as_secs_f64(),
        result.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_mtnn(path: &Path) -> Result<(Mtnn, Option<f64>)> {
    let (cfg, params, ck) = load_model(path)?;
    let norm = ck.config_value("target_norm").and_then(|v| v.parse().ok());
    Ok((Mtnn::new(cfg, params)?, norm))
}

fn eval_cmd(seed: u64, a: &Eval) -> Result<()> {
    let trees = load_trees(&a.trees)?;
    let mut table: DistanceTable = load_table(&a.dists)?;
    table.check_ids(&trees)?;
    let (model, norm) = load_mtnn(&a.model)?;
    if let Some(c) = norm {
        table = table.with_norm(c)?;
    }
    let members: Vec<usize> = match &a.split {
        Some(p) => read_test_split(p, &trees)?,
        None => (0..trees.len()).collect(),
    };
    let pairs = make_pairs(&members, &table, None)?;
    let inputs = load_inputs(&trees)?;
    let start = Instant::now();
    let mut report = evaluate(&model, &inputs, &pairs, a.workers)?;
    let secs = start.elapsed().as_secs_f64();
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    report.meta = vec![
        ("model".into(), show(&a.model)),
        ("trees".into(), show(&a.trees)),
        ("dists".into(), show(&a.dists)),
        ("target_norm".into(), format!("{:e}", table.norm)),
        ("workers".into(), a.workers.to_string()),
        ("model_seconds".into(), format!("{secs:e}")),
        ("seed".into(), seed.to_string()),
    ];
    for (k, v) in model.config.to_pairs() {
        report.meta.push((k, v));
    }
    fs::write(a.out_dir.join("report.txt"), report.to_text()).context("writing report")?;
    let ids: Vec<String> = trees.iter().map(|t| t.source_id.clone()).collect();
    fs::write(a.out_dir.join("residuals.csv"), report.residuals_csv(&ids))
        .context("writing residuals")?;
    echo_config(
        &a.out_dir.join("config.txt"),
        &[
            ("command", "eval".into()),
            ("trees", show(&a.trees)),
            ("dists", show(&a.dists)),
            ("model", show(&a.model)),
            ("split", a.split.as_deref().map(show).unwrap_or_else(|| "all".into())),
            ("workers", a.workers.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    println!("mse {:e}", report.mse);
    println!("mse_scaled {:e}", report.mse_scaled);
    Ok(())
}

fn bench_cmd(seed: u64, a: &Bench) -> Result<()> {
    let trees = load_trees(&a.trees)?;
    let (model, _) = load_mtnn(&a.model)?;
    let members: Vec<usize> = match &a.split {
        Some(p) => read_test_split(p, &trees)?,
        None => (0..trees.len()).collect(),
    };
    let sample = sample_pairs(&members, a.pairs, seed);
    if sample.len() < a.pairs {
        bail!(mtnn::Error::Data(format!(
            "only {} pairs available, {} requested",
            sample.len(),
            a.pairs
        )));
    }
    let inputs = load_inputs(&trees)?;
    let report = benchmark(&model, &trees, &inputs, &sample)?;
    fs::write(&a.out, report.to_text()).with_context(|| format!("writing {}", a.out.display()))?;
    echo_config(
        &sidecar(&a.out),
        &[
            ("command", "bench".into()),
            ("trees", show(&a.trees)),
            ("model", show(&a.model)),
            ("pairs", a.pairs.to_string()),
            ("threads", "1".into()),
            ("seed", seed.to_string()),
        ],
    )?;
    print!("{}", report.to_text());
    Ok(())
}

fn mds_cmd(seed: u64, a: &Mds) -> Result<()> {
    let table = load_table(&a.dists)?;
    let n = table.len();
    let normalized: Vec<f64> = table.raw.iter().map(|d| d / table.norm).collect();
    let result = mds(&normalized, n)?;
    fs::write(&a.out, result.to_csv(&table.ids))
        .with_context(|| format!("writing {}", a.out.display()))?;
    echo_config(
        &sidecar(&a.out),
        &[
            ("command", "mds".into()),
            ("dists", show(&a.dists)),
            ("seed", seed.to_string()),
        ],
    )?;
    eprintln!(
        "embedded {n} items; leading eigenvalues {:e}, {:e}",
        result.eigenvalues[0], result.eigenvalues[1]
    );
    Ok(())
}

fn attention_cmd(seed: u64, a: &AttentionCmd) -> Result<()> {
    let trees = load_trees(&a.trees)?;
    let (model, _) = load_mtnn(&a.model)?;
    let chosen: Vec<&MergeTree> = match &a.ids {
        None => trees.iter().collect(),
        Some(list) => list
            .split(',')
            .map(|id| {
                trees
                    .iter()
                    .find(|t| t.source_id == id.trim())
                    .ok_or_else(|| mtnn::Error::Data(format!("unknown tree {id}")))
            })
            .collect::<mtnn::Result<_>>()?,
    };
    let inputs = chosen
        .iter()
        .map(|t| TreeInput::new(t))
        .collect::<mtnn::Result<Vec<_>>>()?;
    let rows = export_attention(&model, &inputs)?;
    fs::write(&a.out, attention_csv(&rows)).with_context(|| format!("writing {}", a.out.display()))?;
    echo_config(
        &sidecar(&a.out),
        &[
            ("command", "attention".into()),
            ("trees", show(&a.trees)),
            ("model", show(&a.model)),
            ("ids", a.ids.clone().unwrap_or_else(|| "all".into())),
            ("seed", seed.to_string()),
        ],
    )?;
    eprintln!("wrote {} node rows to {}", rows.len(), a.out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::GenData(a) => gen_data(seed, a),
        Command::BuildTrees(a) => build_trees(seed, a),
        Command::GroundTruth(a) => ground_truth(seed, a),
        Command::Train(a) => train_cmd(seed, a),
        Command::Eval(a) => eval_cmd(seed, a),
        Command::Bench(a) => bench_cmd(seed, a),
        Command::Mds(a) => mds_cmd(seed, a),
        Command::Attention(a) => attention_cmd(seed, a),
    }
}

/// Configuration problems count as usage errors; everything else is a data
/// error.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mtnn::Error>() {
        Some(mtnn::Error::Config(_)) | Some(mtnn::Error::Argument(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
