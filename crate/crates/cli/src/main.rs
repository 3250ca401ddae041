//! Command-line driver: synthetic data generation, boundary training,
//! evaluation and the coverage-fraction ball ablation.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

mod config;
mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use elidecide_core::{
    aniso_k4, ball_from_cf, balls_to_boundary_set, compute_centroid, evaluate, generate,
    load_boundaries, load_dataset, project_dataset, save_boundaries, save_dataset,
    substream, train_boundaries, train_projection_head, BallBoundary, BoundarySet,
    ClusterSpec, EmbeddingVector, EvalReport, LabeledDataset, Matrix, MixConfig,
    NegativeStrategy, ProjectionHead, ScenarioSidecar, SclConfig, TrainConfig,
};

use config::{resolve, resolve_clone, FileConfig};
use manifest::RunManifest;

const CF_GRID: [f64; 6] = [0.8, 0.9, 0.95, 0.975, 0.9875, 1.0];

#[derive(Parser)]
#[command(
    name = "elidecide",
    version,
    about = "Ellipsoid decision boundaries for open-world classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic cluster datasets as EMBD files plus a spec sidecar
    GenSynth(GenSynthArgs),
    /// Train per-class ellipsoid boundaries on train/val EMBD data
    Train(TrainArgs),
    /// Evaluate a trained model on a test EMBD file
    Eval(EvalArgs),
    /// Sweep coverage-fraction ball baselines against a trained model
    AblateBall(AblateArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Named scenario (currently: aniso-k4)
    #[arg(long)]
    scenario: Option<String>,
    /// JSON file with {"known": [...], "open": [...]} cluster specs
    #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
    spec: Option<PathBuf>,
    /// Output directory for train/val/test EMBD files
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file with the same keys as the flags
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory containing train.embd and val.embd
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Output model path (JSON)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Contrastive refinement epochs for the projection head (0 = off)
    #[arg(long)]
    scl_epochs: Option<usize>,
    /// Maximum boundary-training epochs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Boundary learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Contraction penalty strength
    #[arg(long)]
    beta: Option<f64>,
    /// Known samples mixed per pseudo-open sample
    #[arg(long)]
    mix_p: Option<usize>,
    /// Dirichlet concentration for mixture weights
    #[arg(long)]
    mix_alpha: Option<f64>,
    /// Negative-loss strategy: elidecide, adb, clab or adbgen
    #[arg(long)]
    neg_loss: Option<String>,
    /// Rescale pseudo-open mixtures to the unit sphere
    #[arg(long)]
    renormalize_mixtures: bool,
    /// Apply each negative only to its nearest class
    #[arg(long)]
    nearest_class_only: bool,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained model JSON
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Test EMBD file, or a directory containing test.embd
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Report destination (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Known-class ratio recorded in the report
    #[arg(long)]
    kcr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Projection head sidecar for raw-form test data
    #[arg(long, value_name = "PATH")]
    head: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Directory containing train.embd and test.embd
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Trained ellipsoid model to compare against
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Table destination (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::AblateBall(args) => cmd_ablate_ball(args),
    };
    if let Err(message) = result {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

type CmdResult = Result<(), String>;

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Deserialize)]
struct SpecFile {
    known: Vec<ClusterSpec>,
    open: Vec<ClusterSpec>,
}

fn cmd_gen_synth(args: GenSynthArgs) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = resolve(args.seed, file.seed, 0);
    let scenario = resolve_clone(args.scenario.clone(), file.scenario.clone(), String::new());

    let (known, open, scenario_name) = if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read spec {}: {e}", path.display()))?;
        let spec: SpecFile =
            serde_json::from_str(&text).map_err(|e| format!("bad spec file: {e}"))?;
        (spec.known, spec.open, format!("spec:{}", path.display()))
    } else {
        match scenario.as_str() {
            "aniso-k4" => {
                let (known, open) = aniso_k4(seed);
                (known, open, "aniso-k4".to_string())
            }
            "" => return Err("one of --scenario or --spec is required".into()),
            other => return Err(format!("unknown scenario '{other}'")),
        }
    };

    let splits = generate(&known, &open, seed).map_err(fail)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;

    let mut manifest = RunManifest::new("gen-synth", seed);
    manifest.set("scenario", scenario_name.clone());
    manifest.set("seed", seed);
    for (name, data) in [
        ("train.embd", &splits.train),
        ("val.embd", &splits.val),
        ("test.embd", &splits.test),
    ] {
        let path = args.out.join(name);
        save_dataset(data, &path).map_err(fail)?;
        manifest.output(&path);
    }

    let sidecar = ScenarioSidecar { known, open, seed };
    let sidecar_path = args.out.join("spec.json");
    std::fs::write(
        &sidecar_path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(fail)?;
    manifest.output(&sidecar_path);
    manifest.write(&args.out.join("manifest.json")).map_err(fail)?;
    Ok(())
}

/// Loads an EMBD file and, for raw-form data, projects and normalizes it
/// through the given head (identity when none).
fn load_final_form(path: &Path, head: Option<&ProjectionHead>) -> Result<LabeledDataset, String> {
    let data = load_dataset(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if data.final_form {
        return Ok(data);
    }
    let identity;
    let head = match head {
        Some(h) => h,
        None => {
            identity = ProjectionHead::identity(data.n);
            &identity
        }
    };
    project_dataset(&data, head).map_err(fail)
}

fn head_to_json(head: &ProjectionHead) -> String {
    let fmt = |v: f64| format!("{v:.16e}");
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\"version\":1,\"in_dim\":{},\"out_dim\":{},\"weight\":[",
        head.in_dim(),
        head.out_dim()
    );
    for i in 0..head.weight.rows() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, v) in head.weight.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt(*v));
        }
        out.push(']');
    }
    out.push_str("],\"bias\":[");
    for (j, v) in head.bias.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&fmt(*v));
    }
    out.push_str("]}");
    out
}

#[derive(Deserialize)]
struct HeadFile {
    version: u32,
    #[allow(dead_code)]
    in_dim: usize,
    #[allow(dead_code)]
    out_dim: usize,
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn head_from_json(text: &str) -> Result<ProjectionHead, String> {
    let doc: HeadFile = serde_json::from_str(text).map_err(|e| format!("bad head file: {e}"))?;
    if doc.version != 1 {
        return Err(format!("unsupported head version {}", doc.version));
    }
    let weight = Matrix::from_rows(&doc.weight).map_err(fail)?;
    ProjectionHead::new(weight, doc.bias).map_err(fail)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = resolve(args.seed, file.seed, 0);
    let scl_epochs = resolve(args.scl_epochs, file.scl_epochs, 0);
    let epochs = resolve(args.epochs, file.epochs, 100);
    let batch_size = resolve(args.batch_size, file.batch_size, 64);
    let lr = resolve(args.lr, file.lr, 1e-3);
    let beta = resolve(args.beta, file.beta, 0.5);
    let mix_p = resolve(args.mix_p, file.mix_p, 3);
    let mix_alpha = resolve(args.mix_alpha, file.mix_alpha, 0.6);
    let neg_loss =
        resolve_clone(args.neg_loss.clone(), file.neg_loss.clone(), "elidecide".to_string());
    let renormalize = args.renormalize_mixtures
        || file.renormalize_mixtures.unwrap_or(false);
    let nearest_only = args.nearest_class_only || file.nearest_class_only.unwrap_or(false);
    let strategy: NegativeStrategy = neg_loss.parse().map_err(fail)?;

    let train_path = args.data.join("train.embd");
    let val_path = args.data.join("val.embd");
    let raw_train = load_dataset(&train_path)
        .map_err(|e| format!("{}: {e}", train_path.display()))?;
    let raw_val =
        load_dataset(&val_path).map_err(|e| format!("{}: {e}", val_path.display()))?;

    let mut head_sidecar: Option<ProjectionHead> = None;
    let (train, val) = if scl_epochs > 0 {
        let scl_cfg = SclConfig {
            epochs: scl_epochs,
            batch_size,
            ..SclConfig::default()
        };
        let mut rng = substream(seed, "scl");
        let outcome = train_projection_head(
            &raw_train,
            ProjectionHead::identity(raw_train.n),
            &scl_cfg,
            &mut rng,
        )
        .map_err(fail)?;
        let train = project_dataset(&raw_train, &outcome.head).map_err(fail)?;
        let val = project_dataset(&raw_val, &outcome.head).map_err(fail)?;
        head_sidecar = Some(outcome.head);
        (train, val)
    } else if !raw_train.final_form {
        let head = ProjectionHead::identity(raw_train.n);
        (
            project_dataset(&raw_train, &head).map_err(fail)?,
            project_dataset(&raw_val, &head).map_err(fail)?,
        )
    } else {
        (raw_train, raw_val)
    };

    let cfg = TrainConfig {
        boundary_lr: lr,
        beta,
        epochs,
        batch_size,
        mix: MixConfig {
            p: mix_p,
            alpha: mix_alpha,
            renormalize,
        },
        seed,
        strategy,
        nearest_class_only: nearest_only,
        ..TrainConfig::default()
    };
    let outcome = train_boundaries(&train, &val, &cfg).map_err(fail)?;

    for (k, sv) in outcome.min_singular_values.iter().enumerate() {
        if *sv <= 1e-10 {
            eprintln!(
                "warning: class {k} boundary matrix is near singular \
                 (min singular value {sv:.3e})"
            );
        }
    }
    if outcome.diagnostics.near_singular_clamps > 0 {
        eprintln!(
            "note: {} gradient evaluations clamped at near-zero radius",
            outcome.diagnostics.near_singular_clamps
        );
    }

    save_boundaries(&outcome.boundaries, &args.out).map_err(fail)?;

    let log_path = args.out.with_extension("log.jsonl");
    let mut log_text = String::new();
    for record in &outcome.log {
        log_text.push_str(&serde_json::to_string(record).expect("record serializes"));
        log_text.push('\n');
    }
    std::fs::write(&log_path, log_text).map_err(fail)?;

    let mut manifest = RunManifest::new("train", seed);
    manifest.input(&train_path);
    manifest.input(&val_path);
    manifest.output(&args.out);
    manifest.output(&log_path);
    manifest.set("seed", seed);
    manifest.set("scl_epochs", scl_epochs);
    manifest.set("epochs", epochs);
    manifest.set("batch_size", batch_size);
    manifest.set("lr", lr);
    manifest.set("beta", beta);
    manifest.set("mix_p", mix_p);
    manifest.set("mix_alpha", mix_alpha);
    manifest.set("neg_loss", strategy.name());
    manifest.set("renormalize_mixtures", renormalize);
    manifest.set("nearest_class_only", nearest_only);
    manifest.set("clab_skipped_anchors", outcome.clab_skipped_anchors);
    if let Some(best) = outcome.best_epoch {
        manifest.set("best_epoch", best as u64);
    }

    if let Some(head) = head_sidecar {
        let head_path = args.out.with_extension("head.json");
        std::fs::write(&head_path, head_to_json(&head)).map_err(fail)?;
        manifest.output(&head_path);
    }
    manifest
        .write(&args.out.with_extension("manifest.json"))
        .map_err(fail)?;
    Ok(())
}

fn test_data_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("test.embd")
    } else {
        data.to_path_buf()
    }
}

fn load_model_and_test(
    model_path: &Path,
    data: &Path,
    head: Option<&Path>,
) -> Result<(BoundarySet, LabeledDataset), String> {
    let bs =
        load_boundaries(model_path).map_err(|e| format!("{}: {e}", model_path.display()))?;
    let head = match head {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read head {}: {e}", path.display()))?;
            Some(head_from_json(&text)?)
        }
        None => {
            let sidecar = model_path.with_extension("head.json");
            if sidecar.exists() {
                let text = std::fs::read_to_string(&sidecar)
                    .map_err(|e| format!("cannot read head {}: {e}", sidecar.display()))?;
                Some(head_from_json(&text)?)
            } else {
                None
            }
        }
    };
    let test = load_final_form(&test_data_path(data), head.as_ref())?;
    if test.n != bs.dim() {
        return Err(format!(
            "model dimension {} does not match data dimension {}",
            bs.dim(),
            test.n
        ));
    }
    Ok((bs, test))
}

fn write_or_print(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(fail),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = resolve(args.seed, file.seed, 0);
    let kcr = resolve(args.kcr, file.kcr, 1.0);
    let format = resolve(
        args.format,
        file.format.as_deref().map(parse_format).transpose()?,
        OutputFormat::Json,
    );

    let (bs, test) = load_model_and_test(&args.model, &args.data, args.head.as_deref())?;
    let report = evaluate(&bs, &test).map_err(fail)?;

    let text = match format {
        OutputFormat::Json => report.to_json(kcr, seed),
        OutputFormat::Csv => format!("{kcr},{seed},{},{}", report.macro_f1, report.accuracy),
    };
    write_or_print(args.out.as_deref(), &text)?;

    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new("eval", seed);
        manifest.input(&args.model);
        manifest.input(&test_data_path(&args.data));
        manifest.output(out);
        manifest.set("seed", seed);
        manifest.set("kcr", kcr);
        manifest.set("format", format_name(format));
        manifest
            .write(&out.with_extension("manifest.json"))
            .map_err(fail)?;
    }
    Ok(())
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(format!("unknown format '{other}' (expected json|csv)")),
    }
}

fn format_name(f: OutputFormat) -> &'static str {
    match f {
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    }
}

fn cmd_ablate_ball(args: AblateArgs) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = resolve(args.seed, file.seed, 0);
    let format = resolve(
        args.format,
        file.format.as_deref().map(parse_format).transpose()?,
        OutputFormat::Json,
    );

    let train_path = args.data.join("train.embd");
    let train = load_final_form(&train_path, None)?;
    let (bs, test) = load_model_and_test(&args.model, &args.data, None)?;
    if train.n != bs.dim() {
        return Err(format!(
            "model dimension {} does not match data dimension {}",
            bs.dim(),
            train.n
        ));
    }

    let groups = train.class_indices();
    let mut centroids = Vec::with_capacity(groups.len());
    for (k, group) in groups.iter().enumerate() {
        let rows: Vec<&[f64]> = group
            .iter()
            .map(|i| train.samples[*i].embedding.values.as_slice())
            .collect();
        let centroid = compute_centroid(&rows).map_err(|e| format!("class {k}: {e}"))?;
        centroids.push(centroid);
    }

    struct Row {
        kind: &'static str,
        cf: Option<f64>,
        macro_f1: f64,
        accuracy: f64,
    }
    let mut rows = Vec::with_capacity(CF_GRID.len() + 1);
    for cf in CF_GRID {
        let balls: Vec<BallBoundary> = groups
            .iter()
            .zip(&centroids)
            .enumerate()
            .map(|(k, (group, centroid))| {
                let samples: Vec<EmbeddingVector> = group
                    .iter()
                    .map(|i| train.samples[*i].embedding.clone())
                    .collect();
                ball_from_cf(&samples, centroid, cf).map_err(|e| format!("class {k}: {e}"))
            })
            .collect::<Result<_, String>>()?;
        let ball_set = balls_to_boundary_set(balls).map_err(fail)?;
        let report = evaluate(&ball_set, &test).map_err(fail)?;
        rows.push(Row {
            kind: "ball",
            cf: Some(cf),
            macro_f1: report.macro_f1,
            accuracy: report.accuracy,
        });
    }
    let ellipsoid_report: EvalReport = evaluate(&bs, &test).map_err(fail)?;
    rows.push(Row {
        kind: "ellipsoid",
        cf: None,
        macro_f1: ellipsoid_report.macro_f1,
        accuracy: ellipsoid_report.accuracy,
    });

    let text = match format {
        OutputFormat::Json => {
            let mut out = String::from("{\"rows\":[");
            for (i, row) in rows.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match row.cf {
                    Some(cf) => {
                        let _ = write!(
                            out,
                            "{{\"boundary\":\"{}\",\"cf\":{cf},\"macro_f1\":{},\"accuracy\":{}}}",
                            row.kind, row.macro_f1, row.accuracy
                        );
                    }
                    None => {
                        let _ = write!(
                            out,
                            "{{\"boundary\":\"{}\",\"macro_f1\":{},\"accuracy\":{}}}",
                            row.kind, row.macro_f1, row.accuracy
                        );
                    }
                }
            }
            out.push_str("]}");
            out
        }
        OutputFormat::Csv => {
            let mut out = String::new();
            for row in &rows {
                let cf = row.cf.map(|c| c.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{cf},{},{}", row.kind, row.macro_f1, row.accuracy);
            }
            out
        }
    };
    write_or_print(args.out.as_deref(), &text)?;

    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new("ablate-ball", seed);
        manifest.input(&train_path);
        manifest.input(&args.model);
        manifest.input(&test_data_path(&args.data));
        manifest.output(out);
        manifest.set("seed", seed);
        manifest.set("format", format_name(format));
        manifest.set("cf_grid", CF_GRID.to_vec());
        manifest
            .write(&out.with_extension("manifest.json"))
            .map_err(fail)?;
    }
    Ok(())
}
