//! Command-line front end: corpus generation, training, pruning,
//! localization, editing, bias evaluation, and the full sweep/report
//! pipeline, each as a thin wrapper over the library.
//!
//! Every command is deterministic given its flags, config file, and seeds.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use contrastive_edit::biaseval::{PMethod, WeatSpec};
use contrastive_edit::cda::{build_dataset, Category};
use contrastive_edit::edit::{interpolate_extrapolate, mask_switch, prune_edit};
use contrastive_edit::error::{Error, ErrorClass, Result};
use contrastive_edit::localize::{localization_report, localize, GroupRule, LocalizationSpec};
use contrastive_edit::pipeline::{
    builtin_bias_spec, builtin_toy_vocab, builtin_toy_weat, model_weat, PipelineConfig,
};
use contrastive_edit::report::write_report;
use contrastive_edit::store::{Checkpoint, MaskSet};
use contrastive_edit::subnetwork::{name_matches, run_imp, PruningConfig, SubnetworkRecord};
use contrastive_edit::sweep::{run_sweep, SweepConfig};
use contrastive_edit::toytrain::{
    generate_corpus, train, Direction, ToyCorpus, ToyModel, ToyTrainer, ToyVocab, TrainConfig,
};

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "contrastive-edit",
    version,
    about = "Localize and edit property-encoding weights relative to a reference checkpoint"
)]
struct Cli {
    /// JSON config file for the subcommand (TrainConfig, PruningConfig,
    /// SweepConfig, ...); flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for sweep artifacts and reports.
    #[arg(long, global = true, env = "CONTRASTIVE_EDIT_WORKSPACE", default_value = "workspace")]
    workspace: PathBuf,

    /// Worker threads for the sweep (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Report output format: `csv` for tables only, `svg` to add charts.
    #[arg(long, global = true, value_enum, default_value_t = Format::Svg)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Stereo,
    Anti,
    Neutral,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Direction {
        match d {
            DirectionArg::Stereo => Direction::Stereo,
            DirectionArg::Anti => Direction::Anti,
            DirectionArg::Neutral => Direction::Neutral,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CdaSide {
    Stereo,
    Anti,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Interpolate,
    Extrapolate,
    Prune,
    MaskSwitch,
}

#[derive(Clone, Copy, ValueEnum)]
enum PMethodArg {
    Exhaustive,
    MonteCarlo,
}

#[derive(Subcommand)]
enum Command {
    /// Counterfactually augment a text file toward one bias direction.
    Cda {
        /// Input text, one sentence per line.
        input: PathBuf,
        /// Which direction the output dataset realizes.
        #[arg(long, value_enum)]
        direction: CdaSide,
        /// Bias specification JSON (defaults to the built-in gender pairs).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic toy corpus.
    GenCorpus {
        #[arg(long, value_enum)]
        direction: DirectionArg,
        #[arg(long, default_value_t = 4000)]
        sentences: usize,
        #[arg(long, default_value_t = 0.2)]
        neutral_fraction: f64,
        #[arg(long, default_value_t = 8)]
        window: usize,
        /// Vocabulary JSON (defaults to the built-in toy vocabulary).
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the toy model on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Starting checkpoint; a fresh initialization when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Embedding width for a fresh initialization.
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Iterative magnitude pruning over a corpus, emitting per-round masks.
    Imp {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output directory for masks and records.csv (default:
        /// <workspace>/imp).
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Compute a localization mask from a target/reference subnetwork pair.
    Localize {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        target_mask: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        reference_mask: PathBuf,
        /// LocalizationSpec JSON (defaults to mask-based).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Apply an editing strategy to a target checkpoint.
    Edit {
        #[arg(long)]
        target: PathBuf,
        /// Reference checkpoint (interpolate/extrapolate only).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Localization mask (or, for mask-switch, the reference
        /// subnetwork's pruning mask).
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the WEAT on a toy checkpoint.
    Weat {
        #[arg(long)]
        checkpoint: PathBuf,
        /// WEAT word-list JSON (defaults to the built-in toy test).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PMethodArg::Exhaustive)]
        method: PMethodArg,
        /// Monte Carlo sample count.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Monte Carlo seed.
        #[arg(long, default_value_t = 0)]
        p_seed: u64,
    },
    /// Run (or resume) the full experiment sweep, then write reports.
    Sweep,
    /// Regenerate report tables and charts from an existing sweep CSV.
    Report {
        /// Sweep CSV (default: <workspace>/sweep.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::BadInputFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn config_or_default<T: DeserializeOwned + Default>(config: &Option<PathBuf>) -> Result<T> {
    match config {
        Some(path) => read_json(path),
        None => Ok(T::default()),
    }
}

fn load_vocab(path: &Option<PathBuf>) -> Result<ToyVocab> {
    match path {
        Some(path) => ToyVocab::load(path),
        None => Ok(builtin_toy_vocab()),
    }
}

/// Training + pruning settings for the `imp` subcommand; defaults mirror
/// the pipeline's IMP stage (gentle fine-tunes).
#[derive(Deserialize)]
#[serde(default)]
struct ImpConfig {
    train: TrainConfig,
    pruning: PruningConfig,
}

impl Default for ImpConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        ImpConfig {
            train: TrainConfig { lr: pipeline.imp_lr, ..pipeline.train },
            pruning: pipeline.pruning,
        }
    }
}

/// Component grouping for localization reports: the toy model's layout when
/// the tensor names match it, otherwise one component per tensor.
fn grouping_rules(layout: &Checkpoint) -> Vec<GroupRule> {
    let toy = vec![
        GroupRule { pattern: "embedding.weight".into(), component: "embedding".into(), layer: 0 },
        GroupRule { pattern: "hidden.*".into(), component: "hidden".into(), layer: 1 },
        GroupRule { pattern: "output.*".into(), component: "output".into(), layer: 2 },
    ];
    let all_match = layout
        .tensors
        .keys()
        .all(|name| toy.iter().any(|rule| name_matches(&rule.pattern, name)));
    if all_match {
        toy
    } else {
        layout
            .tensors
            .keys()
            .map(|name| GroupRule { pattern: name.clone(), component: name.clone(), layer: 0 })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Command bodies
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<String> {
    use std::fmt::Write as _;
    let mut out = String::new();
    if let Some(jobs) = cli.jobs {
        // Ignore the error if a pool already exists (e.g. repeated calls in
        // one process during tests); determinism does not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Cda { input, direction, spec, output } => {
            let spec = match spec {
                Some(path) => read_json(&path)?,
                None => builtin_bias_spec(),
            };
            let direction = match direction {
                CdaSide::Stereo => Category::Stereo,
                CdaSide::Anti => Category::Anti,
            };
            let text = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let (sentences, stats) = build_dataset(text.lines(), &spec, direction)?;
            let mut dataset = String::new();
            for tokens in &sentences {
                dataset.push_str(&tokens.join(" "));
                dataset.push('\n');
            }
            fs::write(&output, dataset).map_err(|e| Error::io(&output, e))?;
            let _ = writeln!(out, "{}", serde_json::to_string(&stats).expect("stats serialize"));
        }
        Command::GenCorpus { direction, sentences, neutral_fraction, window, vocab, output } => {
            let vocab = load_vocab(&vocab)?;
            let corpus = generate_corpus(
                &vocab,
                direction.into(),
                sentences,
                neutral_fraction,
                window,
                cli.seed.unwrap_or(0),
            )?;
            corpus.save(&output, &vocab)?;
            let _ = writeln!(out, "wrote {} sentences -> {}", corpus.sentences.len(), output.display());
        }
        Command::Train { corpus, init, dim, vocab, output } => {
            let vocab = load_vocab(&vocab)?;
            let corpus = ToyCorpus::load(&corpus, &vocab)?;
            let mut cfg: TrainConfig = config_or_default(&cli.config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let model = match init {
                Some(path) => ToyModel::from_checkpoint(Checkpoint::load(path)?)?,
                None => ToyModel::init(vocab.len(), dim, cfg.seed)?,
            };
            let (trained, eval_loss) = train(&model, &corpus, &vocab, &cfg)?;
            trained.checkpoint().save(&output)?;
            let _ = writeln!(out, "steps,{}", cfg.steps);
            let _ = writeln!(out, "eval_loss,{eval_loss}");
            let _ = writeln!(out, "checkpoint,{}", output.display());
        }
        Command::Imp { corpus, init, dim, vocab, outdir } => {
            let vocab = load_vocab(&vocab)?;
            let corpus = ToyCorpus::load(&corpus, &vocab)?;
            let mut cfg: ImpConfig = config_or_default(&cli.config)?;
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            let init = match init {
                Some(path) => Checkpoint::load(path)?,
                None => ToyModel::init(vocab.len(), dim, cfg.train.seed)?.into_checkpoint(),
            };
            let trainer = ToyTrainer::new(vocab, corpus, cfg.train)?;
            let records = run_imp(&trainer, &init, &cfg.pruning)?;
            let outdir = outdir.unwrap_or_else(|| cli.workspace.join("imp"));
            fs::create_dir_all(&outdir).map_err(|e| Error::io(&outdir, e))?;
            let mut csv = String::from(SubnetworkRecord::CSV_HEADER);
            csv.push('\n');
            for record in &records {
                record.mask.save(outdir.join(format!("round{}.mask", record.round)))?;
                csv.push_str(&record.csv_row());
                csv.push('\n');
            }
            let records_path = outdir.join("records.csv");
            fs::write(&records_path, &csv).map_err(|e| Error::io(&records_path, e))?;
            out.push_str(&csv);
        }
        Command::Localize { target, target_mask, reference, reference_mask, spec, output } => {
            let spec: LocalizationSpec = match spec {
                Some(path) => read_json(&path)?,
                None => LocalizationSpec::MaskBased { rule: Default::default() },
            };
            let target = Checkpoint::load(target)?;
            let reference = Checkpoint::load(reference)?;
            let m_t = MaskSet::load(target_mask)?;
            let m_r = MaskSet::load(reference_mask)?;
            let b = localize(&spec, &target, &m_t, &reference, &m_r)?;
            b.save(&output)?;
            let _ = writeln!(out, "component,layer,selected_count,group_elements,selected_pct");
            for row in localization_report(&b, &target, &grouping_rules(&target))? {
                let _ = writeln!(out, 
                    "{},{},{},{},{}",
                    row.component, row.layer, row.selected_count, row.group_elements, row.selected_pct
                );
            }
        }
        Command::Edit { target, reference, mask, strategy, alpha, output } => {
            let target = Checkpoint::load(target)?;
            let need = |opt: Option<PathBuf>, what: &str| {
                opt.ok_or_else(|| Error::InvalidConfig {
                    reason: format!("this strategy requires --{what}"),
                })
            };
            let edited = match strategy {
                StrategyArg::Interpolate | StrategyArg::Extrapolate => {
                    let alpha = alpha.ok_or_else(|| Error::InvalidConfig {
                        reason: "interpolate/extrapolate require --alpha".into(),
                    })?;
                    let interpolating = (0.0..=1.0).contains(&alpha);
                    if matches!(strategy, StrategyArg::Interpolate) != interpolating {
                        return Err(Error::AlphaOutOfRange {
                            alpha,
                            strategy: if interpolating { "extrapolate" } else { "interpolate" }
                                .into(),
                            expected: if interpolating { "outside [0, 1]" } else { "[0, 1]" }
                                .into(),
                        });
                    }
                    let reference = Checkpoint::load(need(reference, "reference")?)?;
                    let b = MaskSet::load(need(mask, "mask")?)?;
                    interpolate_extrapolate(&target, &reference, &b, alpha)?
                }
                StrategyArg::Prune => {
                    let b = MaskSet::load(need(mask, "mask")?)?;
                    prune_edit(&target, &b)?
                }
                StrategyArg::MaskSwitch => {
                    let m_r = MaskSet::load(need(mask, "mask")?)?;
                    mask_switch(&target, &m_r)?
                }
            };
            edited.save(&output)?;
            let _ = writeln!(out, 
                "edit_strategy,{}",
                edited.metadata.get("edit_strategy").map(String::as_str).unwrap_or("?")
            );
            let _ = writeln!(out, "checkpoint,{}", output.display());
        }
        Command::Weat { checkpoint, spec, vocab, method, samples, p_seed } => {
            let vocab = load_vocab(&vocab)?;
            let spec: WeatSpec = match spec {
                Some(path) => WeatSpec::load(path)?,
                None => builtin_toy_weat(),
            };
            let method = match method {
                PMethodArg::Exhaustive => PMethod::Exhaustive,
                PMethodArg::MonteCarlo => PMethod::MonteCarlo { n: samples, seed: p_seed },
            };
            let ckpt = Checkpoint::load(checkpoint)?;
            let result = model_weat(&ckpt, &vocab, &spec, method)?;
            let _ = writeln!(out, "layer,effect_size,p_value");
            for (layer, (effect, p)) in
                result.per_layer_effect.iter().zip(&result.per_layer_p).enumerate()
            {
                let _ = writeln!(out, "{layer},{effect},{p}");
            }
            let _ = writeln!(out, "avg,{},", result.avg_effect);
        }
        Command::Sweep => {
            let cfg: SweepConfig = config_or_default(&cli.config)?;
            let outcome = run_sweep(&cfg, &cli.workspace)?;
            let _ = writeln!(out, 
                "sweep: {} computed, {} reused, {} errored -> {}",
                outcome.computed,
                outcome.reused,
                outcome.errored,
                outcome.csv_path.display()
            );
            let report = write_report(
                &outcome.csv_path,
                &cli.workspace.join("report"),
                cli.format == Format::Svg,
            )?;
            for file in &report.files {
                let _ = writeln!(out, "report: {}", file.display());
            }
        }
        Command::Report { input } => {
            let input = input.unwrap_or_else(|| cli.workspace.join("sweep.csv"));
            let report = write_report(
                &input,
                &cli.workspace.join("report"),
                cli.format == Format::Svg,
            )?;
            for file in &report.files {
                let _ = writeln!(out, "report: {}", file.display());
            }
        }
    }
    Ok(out)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version arrive as "errors" but are successes.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(output) => {
            // Tolerate a closed stdout (e.g. piped into `head`).
            use std::io::Write;
            let _ = std::io::stdout().write_all(output.as_bytes());
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(match err.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Internal => 3,
            });
        }
    }
}
