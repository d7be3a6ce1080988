//! The experiment sweep: edit every (seed, sparsity, direction, strategy,
//! α-or-k) cell, score it with the WEAT and an eval-loss delta, and append
//! one CSV row per cell.
//!
//! Determinism and resumability are the design constraints. Cells enumerate
//! in the configuration's list order; every already-present row (keyed by
//! its first six columns) is reused verbatim; the file is rewritten
//! atomically, so re-running a finished sweep is byte-identical. A cell
//! failure is recorded in the row's `error` column and the sweep continues.
//!
//! The target/reference pair of a cell are the two directions' *subnetwork*
//! checkpoints at matched sparsity — the masked initialization re-fine-tuned
//! with pruned coordinates frozen — so pruned weights contribute exactly 0
//! to every edit. `uninformed` rows use the union-of-supports sampling mode
//! with the same budget mask-based localization would get in that cell, as
//! the matched random control for interpolation edits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biaseval::{PMethod, WeatSpec};
use crate::edit::interpolate_extrapolate;
use crate::error::{Error, Result};
use crate::localize::{localize, mask_based, KAmount, LocalizationSpec};
use crate::pipeline::{
    builtin_toy_vocab, builtin_toy_weat, model_weat, run_seed_pipeline, subnet_checkpoint,
    DirectionArtifacts, PipelineConfig, SeedArtifacts,
};
use crate::store::{Checkpoint, MaskSet};
use crate::subnetwork::{mask_ones, SubnetworkRecord, TrainerInterface};
use crate::toytrain::{Direction, ToyCorpus, ToyTrainer, ToyVocab, TrainConfig};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Localization strategies the sweep can exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Symmetric difference of the two subnetwork supports; sweeps α.
    MaskBased,
    /// Top-k absolute weight differences on the intersection; sweeps k at a
    /// fixed α=0.5 (the k-sensitivity axis is k, half-way interpolation).
    ValueBased,
    /// Seeded random selection with the mask-based budget; sweeps α.
    Uninformed,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::MaskBased => "mask_based",
            StrategyKind::ValueBased => "value_based",
            StrategyKind::Uninformed => "uninformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Interpolation/extrapolation coefficients for mask-based and
    /// uninformed cells.
    pub alphas: Vec<f64>,
    /// Fractions of the intersection support for value-based cells.
    pub k_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Sparsity levels; each must match a pruning round of the pipeline's
    /// schedule.
    pub sparsity_levels: Vec<f64>,
    pub strategies: Vec<StrategyKind>,
    pub pipeline: PipelineConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alphas: vec![-10.0, -5.0, -2.0, -1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 5.0, 10.0],
            k_fractions: vec![0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: vec![0, 1, 2, 3],
            sparsity_levels: vec![0.1, 0.2, 0.3, 0.4],
            strategies: vec![
                StrategyKind::MaskBased,
                StrategyKind::ValueBased,
                StrategyKind::Uninformed,
            ],
            pipeline: PipelineConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("alphas", self.alphas.is_empty()),
            ("k_fractions", self.k_fractions.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("sparsity_levels", self.sparsity_levels.is_empty()),
            ("strategies", self.strategies.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidConfig { reason: format!("{name} must be nonempty") });
            }
        }
        for (i, seed) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(seed) {
                return Err(Error::InvalidConfig { reason: format!("duplicate seed {seed}") });
            }
        }
        if let Some(a) = self.alphas.iter().find(|a| !a.is_finite()) {
            return Err(Error::NonFiniteAlpha { alpha: *a });
        }
        if let Some(k) = self.k_fractions.iter().find(|k| !(0.0..=1.0).contains(*k)) {
            return Err(Error::InvalidFraction { value: *k });
        }
        if let Some(s) = self.sparsity_levels.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::InvalidFraction { value: *s });
        }
        self.pipeline.validate()
    }
}

// ---------------------------------------------------------------------------
// Workspace layout
// ---------------------------------------------------------------------------

/// File locations for one seed's cached pipeline artifacts.
#[derive(Debug, Clone)]
pub struct SeedPaths {
    pub dir: PathBuf,
}

impl SeedPaths {
    pub fn new(workspace: &Path, seed: u64) -> Self {
        SeedPaths { dir: workspace.join("seeds").join(format!("seed_{seed}")) }
    }

    pub fn init(&self) -> PathBuf {
        self.dir.join("init.ckpt")
    }

    pub fn corpus(&self, direction: Direction) -> PathBuf {
        self.dir.join(format!("{}.corpus.txt", direction.as_str()))
    }

    pub fn full(&self, direction: Direction) -> PathBuf {
        self.dir.join(format!("{}.full.ckpt", direction.as_str()))
    }

    pub fn records(&self, direction: Direction) -> PathBuf {
        self.dir.join(format!("{}.records.csv", direction.as_str()))
    }

    pub fn mask(&self, direction: Direction, round: usize) -> PathBuf {
        self.dir.join(format!("{}.round{round}.mask", direction.as_str()))
    }
}

fn opposite(direction: Direction) -> Direction {
    match direction {
        Direction::Stereo => Direction::Anti,
        Direction::Anti => Direction::Stereo,
        Direction::Neutral => Direction::Neutral,
    }
}

fn save_artifacts(paths: &SeedPaths, vocab: &ToyVocab, art: &SeedArtifacts) -> Result<()> {
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    art.init.save(paths.init())?;
    for dir_art in [&art.stereo, &art.anti] {
        let d = dir_art.direction;
        dir_art.corpus.save(&paths.corpus(d), vocab)?;
        dir_art.full.save(paths.full(d))?;
        let mut csv = String::from(SubnetworkRecord::CSV_HEADER);
        csv.push('\n');
        for record in &dir_art.records {
            record.mask.save(paths.mask(d, record.round))?;
            csv.push_str(&record.csv_row());
            csv.push('\n');
        }
        let path = paths.records(d);
        fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn load_records(paths: &SeedPaths, direction: Direction, init: &Checkpoint) -> Result<Vec<SubnetworkRecord>> {
    let path = paths.records(direction);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |reason: String| Error::BadInputFile { path: path.clone(), reason };
    let mut lines = text.lines();
    if lines.next() != Some(SubnetworkRecord::CSV_HEADER) {
        return Err(bad("missing records header".into()));
    }
    let rewind_ref = format!("{:016x}", init.fingerprint());
    let mut records = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let parse_err = |what: &str| bad(format!("unparseable {what} in '{line}'"));
        let round: usize = fields[0].parse().map_err(|_| parse_err("round"))?;
        let record = SubnetworkRecord {
            round,
            mask: MaskSet::load(paths.mask(direction, round))?,
            sparsity: fields[1].parse().map_err(|_| parse_err("sparsity"))?,
            rewind_ckpt_ref: rewind_ref.clone(),
            subnet_eval: fields[2].parse().map_err(|_| parse_err("subnet_eval"))?,
            full_eval: fields[3].parse().map_err(|_| parse_err("full_eval"))?,
            winning_ticket: fields[4].parse().map_err(|_| parse_err("winning_ticket"))?,
        };
        if record.round != records.len() + 1 {
            return Err(bad(format!("rounds out of order at '{line}'")));
        }
        records.push(record);
    }
    Ok(records)
}

fn load_direction(
    paths: &SeedPaths,
    vocab: &ToyVocab,
    cfg: &PipelineConfig,
    seed: u64,
    direction: Direction,
    init: &Checkpoint,
) -> Result<DirectionArtifacts> {
    let corpus_path = paths.corpus(direction);
    let corpus = ToyCorpus::load(&corpus_path, vocab)?;
    if corpus.direction != direction {
        return Err(Error::BadInputFile {
            path: corpus_path,
            reason: format!(
                "corpus is {} but this slot holds the {} direction",
                corpus.direction.as_str(),
                direction.as_str()
            ),
        });
    }
    let imp_cfg = TrainConfig { seed, lr: cfg.imp_lr, ..cfg.train };
    let trainer = ToyTrainer::new(vocab.clone(), corpus.clone(), imp_cfg)?;
    let full = Checkpoint::load(paths.full(direction))?;
    let full_eval = trainer.evaluate(&full)?;
    let records = load_records(paths, direction, init)?;
    Ok(DirectionArtifacts { direction, corpus, trainer, full, full_eval, records })
}

/// Load a seed's cached artifacts from the workspace, or run the pipeline
/// and cache them. A partial cache (any expected file missing) is rebuilt
/// wholesale.
pub fn ensure_seed_artifacts(
    workspace: &Path,
    vocab: &ToyVocab,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<SeedArtifacts> {
    let paths = SeedPaths::new(workspace, seed);
    let mut expected = vec![paths.init()];
    for d in [Direction::Stereo, Direction::Anti] {
        expected.extend([paths.corpus(d), paths.full(d), paths.records(d)]);
        for round in 1..=cfg.pruning.rounds {
            expected.push(paths.mask(d, round));
        }
    }
    if expected.iter().all(|p| p.is_file()) {
        let init = Checkpoint::load(paths.init())?;
        let stereo = load_direction(&paths, vocab, cfg, seed, Direction::Stereo, &init)?;
        let anti = load_direction(&paths, vocab, cfg, seed, Direction::Anti, &init)?;
        return Ok(SeedArtifacts { seed, init, stereo, anti });
    }
    let art = run_seed_pipeline(vocab, cfg, seed)?;
    save_artifacts(&paths, vocab, &art)?;
    Ok(art)
}

// ---------------------------------------------------------------------------
// Cells and rows
// ---------------------------------------------------------------------------

pub const SWEEP_CSV_HEADER: &str = "seed,sparsity,direction,strategy,alpha,k_fraction,\
effect_layer0,effect_layer1,avg_effect,p_layer0,p_layer1,eval_loss_delta,error";

/// One sweep coordinate. `alpha` is empty only in principle — every current
/// strategy pins it (value-based edits run at α=1) — but the column stays
/// optional so the schema is self-describing.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    seed: u64,
    sparsity: f64,
    direction: Direction,
    strategy: StrategyKind,
    alpha: Option<f64>,
    k_fraction: Option<f64>,
}

impl Cell {
    /// The first six CSV columns — the row's identity for resume purposes.
    fn key(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.seed,
            self.sparsity,
            self.direction.as_str(),
            self.strategy.as_str(),
            self.alpha.map(|a| a.to_string()).unwrap_or_default(),
            self.k_fraction.map(|k| k.to_string()).unwrap_or_default(),
        )
    }
}

fn enumerate_cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &sparsity in &cfg.sparsity_levels {
            for direction in [Direction::Stereo, Direction::Anti] {
                for &strategy in &cfg.strategies {
                    match strategy {
                        StrategyKind::MaskBased | StrategyKind::Uninformed => {
                            for &alpha in &cfg.alphas {
                                cells.push(Cell {
                                    seed,
                                    sparsity,
                                    direction,
                                    strategy,
                                    alpha: Some(alpha),
                                    k_fraction: None,
                                });
                            }
                        }
                        StrategyKind::ValueBased => {
                            for &k in &cfg.k_fractions {
                                cells.push(Cell {
                                    seed,
                                    sparsity,
                                    direction,
                                    strategy,
                                    alpha: Some(0.5),
                                    k_fraction: Some(k),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

struct CellMetrics {
    effects: Vec<f64>,
    avg_effect: f64,
    ps: Vec<f64>,
    eval_loss_delta: f64,
}

/// Error text must not break the CSV shape.
fn sanitize(message: &str) -> String {
    message.replace(['\n', '\r'], " ").replace(',', ";")
}

fn format_row(cell: &Cell, outcome: &Result<CellMetrics>) -> String {
    match outcome {
        Ok(m) => format!(
            "{},{},{},{},{},{},{},",
            cell.key(),
            m.effects[0],
            m.effects[1],
            m.avg_effect,
            m.ps[0],
            m.ps[1],
            m.eval_loss_delta
        ),
        Err(e) => format!("{},,,,,,,{}", cell.key(), sanitize(&e.to_string())),
    }
}

/// Re-derived subnetwork checkpoints, keyed by (direction, round), shared by
/// every cell of a seed.
struct SubnetCache<'a> {
    art: &'a SeedArtifacts,
    steps: usize,
    cache: BTreeMap<(&'static str, usize), Checkpoint>,
}

impl<'a> SubnetCache<'a> {
    fn get(&mut self, direction: Direction, sparsity: f64) -> Result<(Checkpoint, &'a SubnetworkRecord)> {
        let dir_art = self.art.direction(direction)?;
        let record = dir_art.record_at(sparsity)?;
        let key = (direction.as_str(), record.round);
        if !self.cache.contains_key(&key) {
            let subnet = subnet_checkpoint(&self.art.init, &dir_art.trainer, record, self.steps)?;
            self.cache.insert(key, subnet);
        }
        Ok((self.cache[&key].clone(), record))
    }
}

fn evaluate_cell(
    cell: &Cell,
    art: &SeedArtifacts,
    subnets: &mut SubnetCache,
    vocab: &ToyVocab,
    weat_spec: &WeatSpec,
) -> Result<CellMetrics> {
    let (target, t_rec) = subnets.get(cell.direction, cell.sparsity)?;
    let (reference, r_rec) = subnets.get(opposite(cell.direction), cell.sparsity)?;
    let spec = match cell.strategy {
        StrategyKind::MaskBased => LocalizationSpec::MaskBased { rule: Default::default() },
        StrategyKind::ValueBased => LocalizationSpec::ValueBased {
            k: KAmount::Fraction(cell.k_fraction.expect("value_based cells carry k")),
        },
        StrategyKind::Uninformed => {
            let budget = mask_ones(&mask_based(&t_rec.mask, &r_rec.mask)?);
            LocalizationSpec::UninformedIpEp { budget, seed: cell.seed }
        }
    };
    let b = localize(&spec, &target, &t_rec.mask, &reference, &r_rec.mask)?;
    let alpha = cell.alpha.expect("every strategy pins alpha");
    let edited = interpolate_extrapolate(&target, &reference, &b, alpha)?;
    let weat = model_weat(&edited, vocab, weat_spec, PMethod::Exhaustive)?;
    let trainer = &art.direction(cell.direction)?.trainer;
    let eval_loss_delta = trainer.evaluate(&edited)? - t_rec.subnet_eval;
    Ok(CellMetrics {
        effects: weat.per_layer_effect,
        avg_effect: weat.avg_effect,
        ps: weat.per_layer_p,
        eval_loss_delta,
    })
}

// ---------------------------------------------------------------------------
// The runner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepOutcome {
    pub csv_path: PathBuf,
    /// Cells computed this run.
    pub computed: usize,
    /// Rows reused verbatim from a previous run.
    pub reused: usize,
    /// Rows (reused or computed) whose error column is set.
    pub errored: usize,
}

fn read_existing_rows(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rows = BTreeMap::new();
    if !path.is_file() {
        return Ok(rows);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines().skip(1) {
        let key: Vec<&str> = line.splitn(7, ',').collect();
        if key.len() == 7 {
            rows.insert(key[..6].join(","), line.to_string());
        }
    }
    Ok(rows)
}

/// Run (or resume) the sweep into `workspace`, producing
/// `workspace/sweep.csv`. Returns counts of computed/reused/errored rows.
///
/// Seeds run in parallel; rows are assembled in canonical order regardless
/// of scheduling. A seed whose pipeline fails contributes rows that all
/// carry that error, and the sweep continues with the other seeds.
pub fn run_sweep(cfg: &SweepConfig, workspace: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    fs::create_dir_all(workspace).map_err(|e| Error::io(workspace, e))?;
    let csv_path = workspace.join("sweep.csv");
    let existing = read_existing_rows(&csv_path)?;
    let vocab = builtin_toy_vocab();
    let weat_spec = builtin_toy_weat();

    let cells = enumerate_cells(cfg);
    let per_seed: Vec<(u64, Vec<&Cell>)> = cfg
        .seeds
        .iter()
        .map(|&seed| (seed, cells.iter().filter(|c| c.seed == seed).collect()))
        .collect();

    let seed_outputs: Vec<(Vec<String>, usize)> = per_seed
        .par_iter()
        .map(|(seed, seed_cells)| {
            let mut lines = Vec::with_capacity(seed_cells.len());
            let mut computed = 0;
            let pending: Vec<&&Cell> =
                seed_cells.iter().filter(|c| !existing.contains_key(&c.key())).collect();
            // Training is the expensive part; skip it when every row of the
            // seed is already on disk.
            let art = if pending.is_empty() {
                None
            } else {
                Some(ensure_seed_artifacts(workspace, &vocab, &cfg.pipeline, *seed))
            };
            let mut subnets = match &art {
                Some(Ok(art)) => Some(SubnetCache {
                    art,
                    steps: cfg.pipeline.pruning.steps_per_round,
                    cache: BTreeMap::new(),
                }),
                _ => None,
            };
            for cell in seed_cells {
                if let Some(row) = existing.get(&cell.key()) {
                    lines.push(row.clone());
                    continue;
                }
                computed += 1;
                let outcome = match (&art, &mut subnets) {
                    (Some(Ok(art)), Some(subnets)) => {
                        evaluate_cell(cell, art, subnets, &vocab, &weat_spec)
                    }
                    (Some(Err(e)), _) => Err(Error::InvalidConfig {
                        reason: format!("seed pipeline failed: {e}"),
                    }),
                    _ => unreachable!("artifacts exist whenever cells are pending"),
                };
                lines.push(format_row(cell, &outcome));
            }
            (lines, computed)
        })
        .collect();

    let mut text = String::from(SWEEP_CSV_HEADER);
    text.push('\n');
    let mut computed = 0;
    let mut errored = 0;
    let mut reused = 0;
    for (lines, seed_computed) in &seed_outputs {
        computed += seed_computed;
        for line in lines {
            // Sanitized error messages contain no commas, so the error
            // column is exactly the 13th field.
            if line.split(',').nth(12).is_some_and(|f| !f.is_empty()) {
                errored += 1;
            }
            text.push_str(line);
            text.push('\n');
        }
        reused += lines.len() - seed_computed;
    }

    let tmp = workspace.join("sweep.csv.tmp");
    fs::write(&tmp, &text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &csv_path).map_err(|e| Error::io(&csv_path, e))?;
    Ok(SweepOutcome { csv_path, computed, reused, errored })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::builtin_toy_vocab;
    use crate::subnetwork::PruningConfig;

    fn tiny_sweep_config() -> SweepConfig {
        SweepConfig {
            alphas: vec![0.0, 0.5, 1.0],
            k_fractions: vec![0.5],
            seeds: vec![0, 1],
            sparsity_levels: vec![0.1, 0.2],
            strategies: vec![
                StrategyKind::MaskBased,
                StrategyKind::ValueBased,
                StrategyKind::Uninformed,
            ],
            pipeline: PipelineConfig {
                n_sentences: 240,
                dim: 8,
                train: TrainConfig { steps: 60, batch: 8, ..TrainConfig::default() },
                pruning: PruningConfig {
                    rounds: 2,
                    steps_per_round: 40,
                    ..PipelineConfig::default().pruning
                },
                ..PipelineConfig::default()
            },
        }
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        let mut cfg = SweepConfig::default();
        cfg.seeds = vec![1, 2, 1];
        assert!(cfg.validate().is_err());
        cfg = SweepConfig { alphas: vec![], ..SweepConfig::default() };
        assert!(cfg.validate().is_err());
        cfg = SweepConfig { alphas: vec![f64::NAN], ..SweepConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::NonFiniteAlpha { .. })));
        cfg = SweepConfig { k_fractions: vec![1.5], ..SweepConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidFraction { .. })));
    }

    #[test]
    fn cell_enumeration_is_canonical() {
        let cfg = tiny_sweep_config();
        let cells = enumerate_cells(&cfg);
        // 2 seeds × 2 sparsities × 2 directions × (3 + 3 + 1) cells.
        assert_eq!(cells.len(), 2 * 2 * 2 * 7);
        assert_eq!(cells[0].key(), "0,0.1,stereo,mask_based,0,");
        assert_eq!(cells[3].key(), "0,0.1,stereo,value_based,0.5,0.5");
        assert_eq!(cells[4].key(), "0,0.1,stereo,uninformed,0,");
        // Keys are unique.
        let mut keys: Vec<String> = cells.iter().map(Cell::key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), cells.len());
    }

    #[test]
    fn sweep_runs_resumes_and_reproduces() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = tmp.path();
        let cfg = tiny_sweep_config();

        let first = run_sweep(&cfg, ws).unwrap();
        assert_eq!(first.computed, 56);
        assert_eq!(first.reused, 0);
        assert_eq!(first.errored, 0);
        let text = fs::read_to_string(&first.csv_path).unwrap();
        assert_eq!(text.lines().count(), 57);
        assert!(text.starts_with(SWEEP_CSV_HEADER));

        // Re-run: everything reused, byte-identical output.
        let second = run_sweep(&cfg, ws).unwrap();
        assert_eq!(second.computed, 0);
        assert_eq!(second.reused, 56);
        assert_eq!(fs::read_to_string(&second.csv_path).unwrap(), text);

        // Drop a third of the rows; resume recomputes exactly those and the
        // file comes back byte-identical.
        let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| i % 3 != 2).map(|(_, l)| l).collect();
        let dropped = 57 - kept.len();
        fs::write(ws.join("sweep.csv"), kept.join("\n") + "\n").unwrap();
        let third = run_sweep(&cfg, ws).unwrap();
        assert_eq!(third.computed, dropped);
        assert_eq!(fs::read_to_string(&third.csv_path).unwrap(), text);
    }

    #[test]
    fn alpha_zero_rows_match_the_unedited_subnetwork() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = tmp.path();
        let cfg = tiny_sweep_config();
        run_sweep(&cfg, ws).unwrap();
        let text = fs::read_to_string(ws.join("sweep.csv")).unwrap();

        let vocab = builtin_toy_vocab();
        let art = ensure_seed_artifacts(ws, &vocab, &cfg.pipeline, 0).unwrap();
        let record = art.stereo.record_at(0.2).unwrap();
        let subnet = subnet_checkpoint(
            &art.init,
            &art.stereo.trainer,
            record,
            cfg.pipeline.pruning.steps_per_round,
        )
        .unwrap();
        let weat =
            model_weat(&subnet, &vocab, &builtin_toy_weat(), PMethod::Exhaustive).unwrap();

        let row = text
            .lines()
            .find(|l| l.starts_with("0,0.2,stereo,mask_based,0,,"))
            .expect("alpha=0 row present");
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[8], weat.avg_effect.to_string());
        assert_eq!(fields[12], "");
        // The identity edit leaves eval loss unchanged.
        assert_eq!(fields[11], "0");
    }

    #[test]
    fn unreachable_sparsity_is_recorded_not_fatal() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = tmp.path();
        let mut cfg = tiny_sweep_config();
        cfg.seeds = vec![0];
        cfg.sparsity_levels = vec![0.1, 0.9];
        cfg.strategies = vec![StrategyKind::MaskBased];
        cfg.alphas = vec![0.0, 1.0];

        let outcome = run_sweep(&cfg, ws).unwrap();
        assert_eq!(outcome.computed, 8);
        assert_eq!(outcome.errored, 4);
        let text = fs::read_to_string(ws.join("sweep.csv")).unwrap();
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 13, "row shape holds: {line}");
            if fields[1] == "0.9" {
                assert!(fields[12].contains("no pruning round"), "{line}");
                assert!(fields[6].is_empty());
            } else {
                assert!(fields[12].is_empty());
            }
        }
    }

    #[test]
    fn workspace_artifacts_cache_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = tmp.path();
        let cfg = tiny_sweep_config();
        let vocab = builtin_toy_vocab();

        let built = ensure_seed_artifacts(ws, &vocab, &cfg.pipeline, 0).unwrap();
        let loaded = ensure_seed_artifacts(ws, &vocab, &cfg.pipeline, 0).unwrap();
        assert_eq!(built.init.to_bytes(), loaded.init.to_bytes());
        assert_eq!(built.stereo.full.to_bytes(), loaded.stereo.full.to_bytes());
        assert_eq!(built.anti.corpus.sentences, loaded.anti.corpus.sentences);
        assert_eq!(built.stereo.records.len(), loaded.stereo.records.len());
        for (b, l) in built.stereo.records.iter().zip(&loaded.stereo.records) {
            assert_eq!(b.round, l.round);
            assert_eq!(b.sparsity.to_bits(), l.sparsity.to_bits());
            assert_eq!(b.subnet_eval.to_bits(), l.subnet_eval.to_bits());
            assert_eq!(b.winning_ticket, l.winning_ticket);
            assert_eq!(b.rewind_ckpt_ref, l.rewind_ckpt_ref);
            assert_eq!(b.mask.to_checkpoint().to_bytes(), l.mask.to_checkpoint().to_bytes());
        }
        assert_eq!(built.stereo.full_eval.to_bits(), loaded.stereo.full_eval.to_bits());

        // A damaged cache (missing file) is rebuilt, not trusted.
        fs::remove_file(SeedPaths::new(ws, 0).mask(Direction::Anti, 2)).unwrap();
        let rebuilt = ensure_seed_artifacts(ws, &vocab, &cfg.pipeline, 0).unwrap();
        assert_eq!(rebuilt.init.to_bytes(), built.init.to_bytes());
        assert!(SeedPaths::new(ws, 0).mask(Direction::Anti, 2).is_file());
    }
}
