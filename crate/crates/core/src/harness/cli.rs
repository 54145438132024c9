//! Command-line entry point.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::eval::{diagnose, evaluate, evaluate_augmented, DiagnosticsConfig, EvalMode};
use super::synthetic::{generate_synthetic, GeneratorConfig, ValueModel};
use super::train::{train, TrainConfig};
use super::verify::{run_suite, Suite};
use crate::bundling::{augment, mine_corpus, topk_bundle, HeuristicTables, MiningConfig, SamplingConfig};
use crate::data::{read_bundles, read_instances, write_bundles, write_instances, Dataset, InstanceBundle, QaInstance};
use crate::error::{Error, Result};
use crate::losses::{LossSpec, LossVariant};
use crate::scorer::{CompatMode, Model};

#[derive(Debug, Parser)]
#[command(name = "bundle-ce", version, about = "Contrastive estimation over instance bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic comparison dataset (train/ and dev/ splits)
    Generate(GenerateArgs),
    /// Cluster lexically similar questions into bundles
    Mine(MineArgs),
    /// Bundle each question with rule-generated contrast questions
    Augment(AugmentArgs),
    /// Bundle each question with sampled negative answers
    SampleNegatives(SampleArgs),
    /// Train a scorer
    Train(TrainArgs),
    /// Evaluate a scorer
    Eval(EvalArgs),
    /// Entropy10 and Top-2 ratio of a scorer's answer posterior
    Diagnose(DiagnoseArgs),
    /// Run a property suite
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 500)]
    n_dev: usize,
    #[arg(long, default_value_t = 12)]
    entities: usize,
    #[arg(long, default_value_t = 8)]
    attributes: usize,
    #[arg(long, default_value_t = 1)]
    value_min: u32,
    #[arg(long, default_value_t = 20)]
    value_max: u32,
    #[arg(long, default_value_t = 0)]
    distractors_min: usize,
    #[arg(long, default_value_t = 2)]
    distractors_max: usize,
    #[arg(long, default_value = "ranked", value_parser = ["ranked", "uniform"])]
    value_model: String,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long, default_value_t = 4)]
    max_cluster_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file replacing the built-in antonym and verb tables
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.9)]
    nucleus_p: f64,
    #[arg(long, default_value_t = 2)]
    nucleus_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Every field is optional so a `--config` file can supply it; flags win.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    bundles: Option<PathBuf>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    compat: Option<String>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    ul_per_token: Option<bool>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn merged_with(self, file: TrainArgs) -> TrainArgs {
        TrainArgs {
            config: None,
            data: self.data.or(file.data),
            bundles: self.bundles.or(file.bundles),
            loss: self.loss.or(file.loss),
            compat: self.compat.or(file.compat),
            alpha1: self.alpha1.or(file.alpha1),
            alpha2: self.alpha2.or(file.alpha2),
            lambda1: self.lambda1.or(file.lambda1),
            lambda2: self.lambda2.or(file.lambda2),
            ul_per_token: self.ul_per_token.or(file.ul_per_token),
            lr: self.lr.or(file.lr),
            epochs: self.epochs.or(file.epochs),
            seed: self.seed.or(file.seed),
            init_model: self.init_model.or(file.init_model),
            out: self.out.or(file.out),
        }
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let variant = match &self.loss {
            Some(s) => s.parse::<LossVariant>()?,
            None => d.loss.variant,
        };
        let compat = match &self.compat {
            Some(s) => s.parse::<CompatMode>()?,
            None => d.loss.compat,
        };
        let loss = LossSpec {
            variant,
            compat,
            alpha1: self.alpha1.unwrap_or(d.loss.alpha1),
            alpha2: self.alpha2.unwrap_or(d.loss.alpha2),
            lambda1: self.lambda1.unwrap_or(d.loss.lambda1),
            lambda2: self.lambda2.unwrap_or(d.loss.lambda2),
            ul_per_token: self.ul_per_token.unwrap_or(d.loss.ul_per_token),
        };
        let cfg = TrainConfig {
            loss,
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Instances file; answered by greedy decoding when no bundles are given
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    bundles: Option<PathBuf>,
    #[arg(long, default_value = "independent", value_parser = ["independent", "joint"])]
    mode: String,
    #[arg(long, default_value = "ln")]
    compat: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Bundle each --data question with a generated contrast question
    #[arg(long, conflicts_with = "bundles", requires = "data")]
    augment_at_test: bool,
    /// JSON file replacing the built-in antonym and verb tables
    #[arg(long, requires = "augment_at_test")]
    tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    nucleus_p: f64,
    #[arg(long, default_value_t = 1)]
    nucleus_steps: usize,
    #[arg(long, default_value_t = 40)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = ["lemma", "decomposition", "shift", "assignment", "gradients", "all"])]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on user error, 2 on internal error.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Aborted(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Generate(a) => cmd_generate(a),
        Command::Mine(a) => {
            let cfg = MiningConfig {
                jaccard_threshold: a.threshold,
                max_cluster_size: a.max_cluster_size,
            };
            cfg.validate()?;
            let bundles = mine_corpus(&read_instances(&a.input)?, &cfg);
            write_bundles(&a.out, &bundles)?;
            eprintln!("{} bundles", bundles.len());
            Ok(0)
        }
        Command::Augment(a) => {
            let tables = match &a.tables {
                Some(p) => HeuristicTables::load(p)?,
                None => HeuristicTables::builtin().clone(),
            };
            let bundles = augment(&read_instances(&a.input)?, &tables);
            write_bundles(&a.out, &bundles)?;
            eprintln!("{} bundles", bundles.len());
            Ok(0)
        }
        Command::SampleNegatives(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Diagnose(a) => {
            let model = Model::load(&a.model)?;
            let cfg = DiagnosticsConfig {
                nucleus_p: a.nucleus_p,
                nucleus_steps: a.nucleus_steps,
                attempts: a.samples,
                seed: a.seed,
            };
            let diag = diagnose(&model.params, &model.vocab, &read_instances(&a.data)?, &cfg)?;
            let json = serde_json::to_string(&diag)?;
            match &a.out {
                Some(p) => std::fs::write(p, json)?,
                None => println!("{json}"),
            }
            Ok(0)
        }
        Command::Verify(a) => {
            let suite: Suite = a.suite.parse()?;
            let results = run_suite(suite, a.seed)?;
            for r in &results {
                println!("{r}");
            }
            Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<i32> {
    let cfg = GeneratorConfig {
        seed: a.seed,
        n_train_bundles: a.n_train,
        n_dev_bundles: a.n_dev,
        entity_pool_size: a.entities,
        attribute_pool_size: a.attributes,
        value_min: a.value_min,
        value_max: a.value_max,
        distractors_min: a.distractors_min,
        distractors_max: a.distractors_max,
        value_model: if a.value_model == "uniform" {
            ValueModel::Uniform
        } else {
            ValueModel::Ranked
        },
    };
    let data = generate_synthetic(&cfg)?;
    for (name, split) in [("train", &data.train), ("dev", &data.dev)] {
        let dir = a.out.join(name);
        std::fs::create_dir_all(&dir)?;
        write_instances(&dir.join("instances.jsonl"), &split.instances)?;
        write_bundles(&dir.join("bundles.jsonl"), &split.bundles)?;
    }
    Ok(0)
}

fn cmd_sample(a: SampleArgs) -> Result<i32> {
    let cfg = SamplingConfig {
        k: a.k,
        nucleus_p: a.nucleus_p,
        nucleus_steps: a.nucleus_steps,
        seed: a.seed,
    };
    cfg.validate()?;
    let model = Model::load(&a.model)?;
    let mut bundles = Vec::new();
    let stderr = std::io::stderr();
    for inst in read_instances(&a.input)? {
        match topk_bundle(&model, &inst, &cfg)? {
            Some(b) => bundles.push(b),
            None => writeln!(stderr.lock(), "no negative found for {}", inst.id)?,
        }
    }
    write_bundles(&a.out, &bundles)?;
    Ok(0)
}

fn load_dataset(data: Option<&Path>, bundles: Option<&Path>) -> Result<Dataset> {
    let instances: Vec<QaInstance> = match data {
        Some(p) => read_instances(p)?,
        None => vec![],
    };
    let bundles: Vec<InstanceBundle> = match bundles {
        Some(p) => read_bundles(p)?,
        None => vec![],
    };
    Ok(Dataset::from_parts(instances, bundles))
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let a = match &a.config {
        Some(p) => {
            let file: TrainArgs = serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            a.merged_with(file)
        }
        None => a,
    };
    let data_path = a.data.clone().ok_or_else(|| Error::Config("--data is required".into()))?;
    let out = a.out.clone().ok_or_else(|| Error::Config("--out is required".into()))?;
    let cfg = a.train_config()?;
    let data = load_dataset(Some(&data_path), a.bundles.as_deref())?;
    let init = a.init_model.as_deref().map(Model::load).transpose()?;
    let outcome = train(&cfg, &data, None, init)?;
    outcome.model.save(&out)?;
    for rec in &outcome.history {
        println!("{}", serde_json::to_string(rec)?);
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ReportFile {
    em: f64,
    f1: f64,
    consistency: f64,
    entropy10_mean: f64,
    top2_ratio_mean: f64,
    n: crate::metrics::Counts,
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    if a.data.is_none() && a.bundles.is_none() {
        return Err(Error::Config("eval needs --data or --bundles".into()));
    }
    let model = Model::load(&a.model)?;
    let data = load_dataset(a.data.as_deref(), a.bundles.as_deref())?;
    let mode: EvalMode = a.mode.parse()?;
    let compat: CompatMode = a.compat.parse()?;
    let result = if a.augment_at_test {
        let tables = match &a.tables {
            Some(p) => HeuristicTables::load(p)?,
            None => HeuristicTables::builtin().clone(),
        };
        evaluate_augmented(&model.params, &model.vocab, &data.instances, &tables, mode, compat)?
    } else {
        evaluate(&model.params, &model.vocab, &data, mode, compat)?
    };
    let diag_instances: Vec<QaInstance> = if data.bundles.is_empty() {
        data.instances.clone()
    } else {
        data.bundles.iter().flat_map(InstanceBundle::gold_instances).collect()
    };
    let diag = diagnose(
        &model.params,
        &model.vocab,
        &diag_instances,
        &DiagnosticsConfig {
            seed: a.seed,
            ..Default::default()
        },
    )?;
    let report = ReportFile {
        em: result.report.em,
        f1: result.report.f1,
        consistency: result.report.consistency,
        entropy10_mean: diag.entropy10,
        top2_ratio_mean: diag.top2_ratio,
        n: result.report.n,
    };
    let json = serde_json::to_string(&report)?;
    match &a.report {
        Some(p) => std::fs::write(p, &json)?,
        None => println!("{json}"),
    }
    if let Some(p) = &a.predictions {
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        for pred in &result.predictions {
            serde_json::to_writer(&mut w, pred)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(0)
}
