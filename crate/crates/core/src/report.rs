//! Turn sweep CSVs into summary tables and SVG line charts.
//!
//! Everything here is plain post-processing: parse the sweep's rows, fold
//! seeds into mean ± sample standard deviation per coordinate, compute
//! monotonicity statistics (Spearman rank correlation of the WEAT effect
//! against α), and emit per-figure CSVs plus deterministic SVG charts. The
//! charts embed their data as XML comments so a diff of the artifact shows
//! the numbers that moved, not just path coordinates.
//!
//! Monotonicity is reported both raw and *oriented*: an edit sweep is "doing
//! its job" when the effect moves from the target's unedited value toward
//! the reference's, so each (seed, sparsity, direction, strategy) cell is
//! signed by `sign(reference α=0 effect − target α=0 effect)`. Oriented
//! Spearman near +1 means the edit walks toward the reference regardless of
//! which direction played target.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sweep::{StrategyKind, SWEEP_CSV_HEADER};
use crate::toytrain::Direction;

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Metric columns of a successful sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMetrics {
    pub effects: [f64; 2],
    pub avg_effect: f64,
    pub ps: [f64; 2],
    pub eval_loss_delta: f64,
}

/// One parsed sweep row; `metrics` and `error` are mutually exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub sparsity: f64,
    pub direction: Direction,
    pub strategy: StrategyKind,
    pub alpha: Option<f64>,
    pub k_fraction: Option<f64>,
    pub metrics: Option<RowMetrics>,
    pub error: Option<String>,
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "stereo" => Some(Direction::Stereo),
        "anti" => Some(Direction::Anti),
        "neutral" => Some(Direction::Neutral),
        _ => None,
    }
}

fn parse_strategy(s: &str) -> Option<StrategyKind> {
    match s {
        "mask_based" => Some(StrategyKind::MaskBased),
        "value_based" => Some(StrategyKind::ValueBased),
        "uninformed" => Some(StrategyKind::Uninformed),
        _ => None,
    }
}

/// Parse the full text of a sweep CSV. `origin` is only used in error
/// messages.
pub fn parse_sweep_csv(text: &str, origin: &Path) -> Result<Vec<SweepRow>> {
    let bad = |reason: String| Error::BadInputFile { path: origin.to_path_buf(), reason };
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_CSV_HEADER) {
        return Err(bad("missing or unrecognized sweep header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(bad(format!("line {lineno}: expected 13 fields, got {}", fields.len())));
        }
        let num = |idx: usize, what: &str| -> Result<f64> {
            fields[idx]
                .parse()
                .map_err(|_| bad(format!("line {lineno}: unparseable {what} '{}'", fields[idx])))
        };
        let opt_num = |idx: usize, what: &str| -> Result<Option<f64>> {
            if fields[idx].is_empty() { Ok(None) } else { num(idx, what).map(Some) }
        };
        let metrics = if fields[12].is_empty() {
            Some(RowMetrics {
                effects: [num(6, "effect_layer0")?, num(7, "effect_layer1")?],
                avg_effect: num(8, "avg_effect")?,
                ps: [num(9, "p_layer0")?, num(10, "p_layer1")?],
                eval_loss_delta: num(11, "eval_loss_delta")?,
            })
        } else {
            None
        };
        rows.push(SweepRow {
            seed: fields[0]
                .parse()
                .map_err(|_| bad(format!("line {lineno}: unparseable seed '{}'", fields[0])))?,
            sparsity: num(1, "sparsity")?,
            direction: parse_direction(fields[2])
                .ok_or_else(|| bad(format!("line {lineno}: unknown direction '{}'", fields[2])))?,
            strategy: parse_strategy(fields[3])
                .ok_or_else(|| bad(format!("line {lineno}: unknown strategy '{}'", fields[3])))?,
            alpha: opt_num(4, "alpha")?,
            k_fraction: opt_num(5, "k_fraction")?,
            metrics,
            error: if fields[12].is_empty() { None } else { Some(fields[12].to_string()) },
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Ranks with ties sharing their average position (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties (i.e. Pearson on
/// the rank vectors, which stays exact when ties are present). `None` when
/// undefined: fewer than two points, length mismatch, or a constant side.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Mean and *sample* standard deviation; a single observation has deviation
/// zero by convention (there is nothing to disagree with).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Map a finite f64 to bits that sort in numeric order, so float-valued
/// coordinates can key a BTreeMap.
fn sort_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 0 { b | (1 << 63) } else { !b }
}

fn direction_index(d: Direction) -> u8 {
    match d {
        Direction::Stereo => 0,
        Direction::Anti => 1,
        Direction::Neutral => 2,
    }
}

fn strategy_index(s: StrategyKind) -> u8 {
    match s {
        StrategyKind::MaskBased => 0,
        StrategyKind::ValueBased => 1,
        StrategyKind::Uninformed => 2,
    }
}

fn opposite(d: Direction) -> Direction {
    match d {
        Direction::Stereo => Direction::Anti,
        Direction::Anti => Direction::Stereo,
        Direction::Neutral => Direction::Neutral,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

struct SummaryGroup {
    sparsity: f64,
    direction: Direction,
    strategy: StrategyKind,
    alpha: Option<f64>,
    k_fraction: Option<f64>,
    effects: Vec<f64>,
    deltas: Vec<f64>,
}

type SummaryKey = (u64, u8, u8, Option<u64>, Option<u64>);

fn summary_groups(rows: &[SweepRow]) -> BTreeMap<SummaryKey, SummaryGroup> {
    let mut groups: BTreeMap<SummaryKey, SummaryGroup> = BTreeMap::new();
    for row in rows {
        let Some(m) = &row.metrics else { continue };
        let key = (
            sort_bits(row.sparsity),
            direction_index(row.direction),
            strategy_index(row.strategy),
            row.alpha.map(sort_bits),
            row.k_fraction.map(sort_bits),
        );
        let group = groups.entry(key).or_insert_with(|| SummaryGroup {
            sparsity: row.sparsity,
            direction: row.direction,
            strategy: row.strategy,
            alpha: row.alpha,
            k_fraction: row.k_fraction,
            effects: Vec::new(),
            deltas: Vec::new(),
        });
        group.effects.push(m.avg_effect);
        group.deltas.push(m.eval_loss_delta);
    }
    groups
}

pub const SUMMARY_CSV_HEADER: &str = "sparsity,direction,strategy,alpha,k_fraction,n,\
mean_avg_effect,std_avg_effect,mean_eval_loss_delta,std_eval_loss_delta";

fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for group in summary_groups(rows).values() {
        let (me, se) = mean_std(&group.effects);
        let (md, sd) = mean_std(&group.deltas);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            group.sparsity,
            group.direction.as_str(),
            group.strategy.as_str(),
            fmt_opt(group.alpha),
            fmt_opt(group.k_fraction),
            group.effects.len(),
            me,
            se,
            md,
            sd
        );
    }
    out
}

pub const MONOTONICITY_CSV_HEADER: &str =
    "seed,sparsity,direction,strategy,n_alphas,spearman,oriented_spearman";

/// Per-cell monotonicity rows plus a per-strategy aggregate. Only α-sweeping
/// strategies participate (value-based cells vary k, not α).
fn monotonicity_csvs(rows: &[SweepRow]) -> (String, String) {
    type CellKey = (u64, u64, u8, u8);
    let mut cells: BTreeMap<CellKey, Vec<(f64, f64)>> = BTreeMap::new();
    let mut meta: BTreeMap<CellKey, (f64, Direction, StrategyKind)> = BTreeMap::new();
    let mut zero_effect: BTreeMap<CellKey, f64> = BTreeMap::new();
    for row in rows {
        if !matches!(row.strategy, StrategyKind::MaskBased | StrategyKind::Uninformed) {
            continue;
        }
        let (Some(m), Some(alpha)) = (&row.metrics, row.alpha) else { continue };
        let key = (
            row.seed,
            sort_bits(row.sparsity),
            direction_index(row.direction),
            strategy_index(row.strategy),
        );
        cells.entry(key).or_default().push((alpha, m.avg_effect));
        meta.entry(key).or_insert((row.sparsity, row.direction, row.strategy));
        if alpha == 0.0 {
            zero_effect.insert(key, m.avg_effect);
        }
    }

    let mut out = String::from(MONOTONICITY_CSV_HEADER);
    out.push('\n');
    let mut by_strategy: BTreeMap<u8, (StrategyKind, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (key, points) in &mut cells {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite alphas"));
        let alphas: Vec<f64> = points.iter().map(|p| p.0).collect();
        let effects: Vec<f64> = points.iter().map(|p| p.1).collect();
        let rho = spearman(&alphas, &effects);
        let (sparsity, direction, strategy) = meta[key];
        // Which way should the effect move? Toward the reference, i.e. the
        // opposite direction's unedited (α = 0) subnetwork.
        let opposite_key = (key.0, key.1, direction_index(opposite(direction)), key.3);
        let orientation = match (zero_effect.get(key), zero_effect.get(&opposite_key)) {
            (Some(t0), Some(r0)) if r0 != t0 => Some(if r0 > t0 { 1.0 } else { -1.0 }),
            _ => None,
        };
        let oriented = match (rho, orientation) {
            (Some(r), Some(o)) => Some(r * o),
            _ => None,
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            key.0,
            sparsity,
            direction.as_str(),
            strategy.as_str(),
            points.len(),
            fmt_opt(rho),
            fmt_opt(oriented)
        );
        let entry = by_strategy
            .entry(strategy_index(strategy))
            .or_insert((strategy, Vec::new(), Vec::new()));
        if let Some(r) = rho {
            entry.1.push(r);
        }
        if let Some(o) = oriented {
            entry.2.push(o);
        }
    }

    let mut agg = String::from("strategy,n_cells,mean_spearman,mean_oriented_spearman");
    agg.push('\n');
    for (strategy, rhos, oriented) in by_strategy.values() {
        let mean = |v: &Vec<f64>| {
            if v.is_empty() { String::new() } else { (v.iter().sum::<f64>() / v.len() as f64).to_string() }
        };
        let _ = writeln!(
            agg,
            "{},{},{},{}",
            strategy.as_str(),
            rhos.len(),
            mean(rhos),
            mean(oriented)
        );
    }
    (out, agg)
}

// ---------------------------------------------------------------------------
// Figure tables
// ---------------------------------------------------------------------------

/// Mean effect of the *unedited* subnetworks (any strategy's α = 0 rows —
/// the identity edit is strategy-independent) per sparsity and direction.
fn fig_effect_vs_sparsity(rows: &[SweepRow]) -> String {
    let mut unedited: BTreeMap<(u64, u64, u8), f64> = BTreeMap::new();
    let mut display: BTreeMap<(u64, u8), (f64, Direction)> = BTreeMap::new();
    for row in rows {
        let (Some(m), Some(alpha)) = (&row.metrics, row.alpha) else { continue };
        if alpha != 0.0 {
            continue;
        }
        let cell = (row.seed, sort_bits(row.sparsity), direction_index(row.direction));
        unedited.entry(cell).or_insert(m.avg_effect);
        display.entry((cell.1, cell.2)).or_insert((row.sparsity, row.direction));
    }
    let mut grouped: BTreeMap<(u64, u8), Vec<f64>> = BTreeMap::new();
    for ((_, s, d), effect) in &unedited {
        grouped.entry((*s, *d)).or_default().push(*effect);
    }
    let mut out = String::from("sparsity,direction,n,mean_effect,std_effect");
    out.push('\n');
    for (key, effects) in &grouped {
        let (sparsity, direction) = display[key];
        let (mean, std) = mean_std(effects);
        let _ = writeln!(out, "{},{},{},{},{}", sparsity, direction.as_str(), effects.len(), mean, std);
    }
    out
}

fn fig_effect_vs_alpha(rows: &[SweepRow]) -> String {
    let mut out = String::from("sparsity,direction,strategy,alpha,n,mean_effect,std_effect");
    out.push('\n');
    for group in summary_groups(rows).values() {
        if !matches!(group.strategy, StrategyKind::MaskBased | StrategyKind::Uninformed) {
            continue;
        }
        let Some(alpha) = group.alpha else { continue };
        let (mean, std) = mean_std(&group.effects);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            group.sparsity,
            group.direction.as_str(),
            group.strategy.as_str(),
            alpha,
            group.effects.len(),
            mean,
            std
        );
    }
    out
}

fn fig_effect_vs_k(rows: &[SweepRow]) -> String {
    let mut out = String::from("sparsity,direction,k_fraction,n,mean_effect,std_effect");
    out.push('\n');
    for group in summary_groups(rows).values() {
        if group.strategy != StrategyKind::ValueBased {
            continue;
        }
        let Some(k) = group.k_fraction else { continue };
        let (mean, std) = mean_std(&group.effects);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            group.sparsity,
            group.direction.as_str(),
            k,
            group.effects.len(),
            mean,
            std
        );
    }
    out
}

// ---------------------------------------------------------------------------
// SVG line charts
// ---------------------------------------------------------------------------

/// One polyline of a chart; points must already be in drawing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" { "0".into() } else { s.to_string() }
}

/// Render a fixed-size (640×400) line chart. The output is deterministic:
/// same inputs, same bytes. Each series' data is embedded as an XML comment
/// so the artifact diffs meaningfully.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 64.0;
    const MR: f64 = 18.0;
    const MT: f64 = 38.0;
    const MB: f64 = 50.0;
    let pw = W - ML - MR;
    let ph = H - MT - MB;

    let points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x0, mut x1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y0, mut y1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (xpad, ypad) = ((x1 - x0) * 0.05, (y1 - y0) * 0.05);
    let (x0, x1, y0, y1) = (x0 - xpad, x1 + xpad, y0 - ypad, y1 + ypad);
    let sx = |x: f64| ML + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MT + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    for s in series {
        let data: Vec<String> = s.points.iter().map(|(x, y)| format!("{x},{y}")).collect();
        let _ = writeln!(svg, "<!-- {}: {} -->", s.label.replace("--", "-"), data.join("; "));
    }
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        ML + pw / 2.0,
        xml_escape(title)
    );

    // Axes, ticks, labels.
    let _ = writeln!(
        svg,
        "<line x1=\"{ML:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        MT + ph,
        ML + pw,
        MT + ph
    );
    let _ = writeln!(svg, "<line x1=\"{ML:.2}\" y1=\"{MT:.2}\" x2=\"{ML:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", MT + ph);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (tx, ty) = (sx(xv), sy(yv));
        let _ = writeln!(svg, "<line x1=\"{tx:.2}\" y1=\"{:.2}\" x2=\"{tx:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", MT + ph, MT + ph + 5.0);
        let _ = writeln!(
            svg,
            "<text x=\"{tx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            MT + ph + 18.0,
            fmt_tick(xv)
        );
        let _ = writeln!(svg, "<line x1=\"{:.2}\" y1=\"{ty:.2}\" x2=\"{ML:.2}\" y2=\"{ty:.2}\" stroke=\"black\"/>", ML - 5.0);
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            ML - 8.0,
            ty + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        ML + pw / 2.0,
        H - 10.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        MT + ph / 2.0,
        MT + ph / 2.0,
        xml_escape(y_label)
    );

    // A reference line at y = 0 when it is in range: effects change sign and
    // the crossing is the interesting part.
    if y0 < 0.0 && 0.0 < y1 {
        let zy = sy(0.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{ML:.2}\" y1=\"{zy:.2}\" x2=\"{:.2}\" y2=\"{zy:.2}\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>",
            ML + pw
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> =
                s.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            );
        }
        for (x, y) in &s.points {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(*x),
                sy(*y)
            );
        }
        let ly = MT + 14.0 + i as f64 * 16.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            ML + 10.0,
            ly - 4.0,
            ML + 30.0,
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>",
            ML + 36.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// Everything `write_report` produced, in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub files: Vec<PathBuf>,
}

fn sparsity_tag(s: f64) -> String {
    s.to_string().replace('.', "p").replace('-', "m")
}

/// Distinct sparsity values among metric-bearing rows, ascending.
fn sparsity_levels(rows: &[SweepRow]) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::new();
    for row in rows {
        if row.metrics.is_some() && !levels.iter().any(|&x| x == row.sparsity) {
            levels.push(row.sparsity);
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    levels
}

fn chart_series<F>(rows: &[SweepRow], mut select: F) -> Vec<(String, Vec<(f64, f64)>)>
where
    F: FnMut(&SummaryGroup) -> Option<(String, f64)>,
{
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for group in summary_groups(rows).values() {
        let Some((label, x)) = select(group) else { continue };
        let (mean, _) = mean_std(&group.effects);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push((x, mean)),
            None => series.push((label, vec![(x, mean)])),
        }
    }
    for (_, pts) in &mut series {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    }
    series
}

/// Read `sweep_csv`, write summary/monotonicity/figure CSVs (and SVG charts
/// when `emit_svg`) into `out_dir`. Deterministic: re-running on the same
/// sweep produces byte-identical artifacts.
pub fn write_report(sweep_csv: &Path, out_dir: &Path, emit_svg: bool) -> Result<ReportFiles> {
    let text = fs::read_to_string(sweep_csv).map_err(|e| Error::io(sweep_csv, e))?;
    let rows = parse_sweep_csv(&text, sweep_csv)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut files = Vec::new();
    let mut emit = |name: String, content: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        files.push(path);
        Ok(())
    };

    let (mono, mono_agg) = monotonicity_csvs(&rows);
    emit("summary.csv".into(), summary_csv(&rows))?;
    emit("monotonicity.csv".into(), mono)?;
    emit("monotonicity_summary.csv".into(), mono_agg)?;
    emit("fig_effect_vs_sparsity.csv".into(), fig_effect_vs_sparsity(&rows))?;
    emit("fig_effect_vs_alpha.csv".into(), fig_effect_vs_alpha(&rows))?;
    emit("fig_effect_vs_k.csv".into(), fig_effect_vs_k(&rows))?;

    if emit_svg {
        // Unedited-subnetwork effect against sparsity, one line per direction.
        let sparsity_chart = chart_series(&rows, |g| {
            if g.alpha == Some(0.0) {
                Some((g.direction.as_str().to_string(), g.sparsity))
            } else {
                None
            }
        });
        // The α = 0 rows of mask-based and uninformed cells duplicate each
        // other (identity edit); collapse them by direction label.
        let mut dedup: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for (label, pts) in sparsity_chart {
            match dedup.iter_mut().find(|(l, _)| *l == label) {
                Some((_, existing)) => {
                    for p in pts {
                        if !existing.iter().any(|q| q.0 == p.0) {
                            existing.push(p);
                        }
                    }
                }
                None => dedup.push((label, pts)),
            }
        }
        for (_, pts) in &mut dedup {
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        }
        if dedup.iter().any(|(_, p)| !p.is_empty()) {
            let series: Vec<Series> =
                dedup.into_iter().map(|(label, points)| Series { label, points }).collect();
            emit(
                "fig_effect_vs_sparsity.svg".into(),
                line_chart("Unedited subnetwork effect vs sparsity", "sparsity", "WEAT effect size", &series),
            )?;
        }

        for level in sparsity_levels(&rows) {
            let tag = sparsity_tag(level);
            let alpha_series = chart_series(&rows, |g| {
                if g.sparsity == level
                    && matches!(g.strategy, StrategyKind::MaskBased | StrategyKind::Uninformed)
                {
                    g.alpha.map(|a| {
                        (format!("{} {}", g.direction.as_str(), g.strategy.as_str()), a)
                    })
                } else {
                    None
                }
            });
            if alpha_series.iter().any(|(_, p)| !p.is_empty()) {
                let series: Vec<Series> = alpha_series
                    .into_iter()
                    .map(|(label, points)| Series { label, points })
                    .collect();
                emit(
                    format!("fig_effect_vs_alpha_s{tag}.svg"),
                    line_chart(
                        &format!("Effect vs alpha at sparsity {level}"),
                        "alpha",
                        "WEAT effect size",
                        &series,
                    ),
                )?;
            }

            let k_series = chart_series(&rows, |g| {
                if g.sparsity == level && g.strategy == StrategyKind::ValueBased {
                    g.k_fraction.map(|k| (g.direction.as_str().to_string(), k))
                } else {
                    None
                }
            });
            if k_series.iter().any(|(_, p)| !p.is_empty()) {
                let series: Vec<Series> =
                    k_series.into_iter().map(|(label, points)| Series { label, points }).collect();
                emit(
                    format!("fig_effect_vs_k_s{tag}.svg"),
                    line_chart(
                        &format!("Value-based effect vs k at sparsity {level}"),
                        "k fraction",
                        "WEAT effect size",
                        &series,
                    ),
                )?;
            }
        }
    }

    Ok(ReportFiles { files })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_of_strictly_increasing_series_is_one() {
        let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let ys = [-1.3, -0.2, 0.1, 0.4, 2.0];
        assert_eq!(spearman(&xs, &ys), Some(1.0));
        let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
        assert_eq!(spearman(&xs, &neg), Some(-1.0));
    }

    #[test]
    fn spearman_matches_the_rank_formula_on_a_permutation() {
        // Permutation ranks: d² sums to 16, so ρ = 1 − 6·16/(5·24) = 0.2.
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [3.0, 1.0, 4.0, 5.0, 2.0];
        let d2: f64 = [(1.0f64 - 3.0), (2.0 - 1.0), (3.0 - 4.0), (4.0 - 5.0), (5.0 - 2.0)]
            .iter()
            .map(|d| d * d)
            .sum();
        let formula = 1.0 - 6.0 * d2 / (5.0 * (25.0 - 1.0));
        let got = spearman(&xs, &ys).unwrap();
        assert!((got - formula).abs() < 1e-12, "{got} vs {formula}");
        assert!((got - 0.2).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        // rx = [1.5, 1.5, 3], ry = [1, 2, 3] → Pearson on ranks = √3/2.
        let got = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((got - 3.0f64.sqrt() / 2.0).abs() < 1e-12, "{got}");
        // Identical tie patterns correlate perfectly.
        assert_eq!(spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 20.0, 40.0]), Some(1.0));
    }

    #[test]
    fn spearman_degenerate_inputs_are_none() {
        assert_eq!(spearman(&[1.0], &[2.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert_eq!(spearman(&[7.0, 7.0], &[1.0, 2.0]), None);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn mean_std_conventions() {
        let (m, s) = mean_std(&[4.25]);
        assert_eq!((m, s), (4.25, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    // -- parsing ------------------------------------------------------------

    fn row_line(
        seed: u64,
        sparsity: f64,
        direction: &str,
        strategy: &str,
        alpha: &str,
        k: &str,
        avg: f64,
        delta: f64,
    ) -> String {
        format!("{seed},{sparsity},{direction},{strategy},{alpha},{k},{avg},{avg},{avg},0.5,0.5,{delta},")
    }

    fn synthetic_csv() -> String {
        let mut text = String::from(SWEEP_CSV_HEADER);
        text.push('\n');
        // Two seeds with identical values so aggregate numbers stay exact.
        for seed in [0u64, 1] {
            for (direction, sign) in [("stereo", 1.0), ("anti", -1.0)] {
                for (alpha, effect) in [(0.0, 1.0), (0.5, 0.0), (1.0, -1.0)] {
                    text.push_str(&row_line(
                        seed,
                        0.1,
                        direction,
                        "mask_based",
                        &alpha.to_string(),
                        "",
                        sign * effect,
                        0.0,
                    ));
                    text.push('\n');
                    // Uninformed edits barely move.
                    text.push_str(&row_line(
                        seed,
                        0.1,
                        direction,
                        "uninformed",
                        &alpha.to_string(),
                        "",
                        sign * (1.0 - 0.1 * alpha),
                        0.0,
                    ));
                    text.push('\n');
                }
                for k in [0.25, 0.75] {
                    text.push_str(&row_line(
                        seed,
                        0.1,
                        direction,
                        "value_based",
                        "0.5",
                        &k.to_string(),
                        sign * (1.0 - k),
                        0.0,
                    ));
                    text.push('\n');
                }
            }
        }
        text.push_str("1,0.1,stereo,mask_based,2,,,,,,,,boom; went wrong\n");
        text
    }

    #[test]
    fn parse_round_trips_fields_and_error_rows() {
        let rows = parse_sweep_csv(&synthetic_csv(), Path::new("test.csv")).unwrap();
        assert_eq!(rows.len(), 2 * 2 * (3 * 2 + 2) + 1);
        let first = &rows[0];
        assert_eq!(first.seed, 0);
        assert_eq!(first.direction, Direction::Stereo);
        assert_eq!(first.strategy, StrategyKind::MaskBased);
        assert_eq!(first.alpha, Some(0.0));
        assert_eq!(first.k_fraction, None);
        assert_eq!(first.metrics.as_ref().unwrap().avg_effect, 1.0);
        let last = rows.last().unwrap();
        assert!(last.metrics.is_none());
        assert_eq!(last.error.as_deref(), Some("boom; went wrong"));

        for broken in [
            "not,a,header\n1,2,3\n",
            &format!("{SWEEP_CSV_HEADER}\n1,0.1,stereo\n"),
            &format!("{SWEEP_CSV_HEADER}\n1,0.1,sideways,mask_based,0,,1,1,1,0.5,0.5,0,\n"),
            &format!("{SWEEP_CSV_HEADER}\n1,0.1,stereo,mask_based,zz,,1,1,1,0.5,0.5,0,\n"),
        ] {
            assert!(
                matches!(parse_sweep_csv(broken, Path::new("t.csv")), Err(Error::BadInputFile { .. })),
                "{broken:?} should fail"
            );
        }
    }

    #[test]
    fn report_tables_aggregate_and_orient() {
        let tmp = tempfile::tempdir().unwrap();
        let csv = tmp.path().join("sweep.csv");
        fs::write(&csv, synthetic_csv()).unwrap();
        let out = tmp.path().join("report");
        let report = write_report(&csv, &out, true).unwrap();

        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.starts_with(SUMMARY_CSV_HEADER));
        // Both seeds agree, so mean is the value and std is exactly zero.
        assert!(summary.contains("0.1,stereo,mask_based,0,,2,1,0,0,0"), "{summary}");
        assert!(summary.contains("0.1,anti,mask_based,1,,2,1,0,0,0"), "{summary}");
        assert!(summary.contains("0.1,stereo,value_based,0.5,0.25,2,0.75,0,0,0"), "{summary}");

        let mono = fs::read_to_string(out.join("monotonicity.csv")).unwrap();
        // Stereo walks 1 → −1 (decreasing: ρ = −1) toward an anti reference
        // that sits below it, so the oriented value is +1; anti mirrors it.
        assert!(mono.contains("0,0.1,stereo,mask_based,3,-1,1"), "{mono}");
        assert!(mono.contains("0,0.1,anti,mask_based,3,1,1"), "{mono}");
        assert!(mono.contains("1,0.1,stereo,uninformed,3,-1,1"), "{mono}");

        let agg = fs::read_to_string(out.join("monotonicity_summary.csv")).unwrap();
        assert!(agg.contains("mask_based,4,0,1"), "{agg}");

        let fig3 = fs::read_to_string(out.join("fig_effect_vs_sparsity.csv")).unwrap();
        assert!(fig3.contains("0.1,stereo,2,1,0"), "{fig3}");
        assert!(fig3.contains("0.1,anti,2,-1,0"), "{fig3}");

        let fig5 = fs::read_to_string(out.join("fig_effect_vs_k.csv")).unwrap();
        assert!(fig5.contains("0.1,anti,0.75,2,-0.25,0"), "{fig5}");

        let svg = fs::read_to_string(out.join("fig_effect_vs_alpha_s0p1.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<!-- stereo mask_based: 0,1; 0.5,0; 1,-1 -->"), "{svg}");
        assert!(svg.contains("<polyline"));
        assert!(report.files.iter().any(|p| p.ends_with("fig_effect_vs_sparsity.svg")));
        assert!(report.files.iter().any(|p| p.ends_with("fig_effect_vs_k_s0p1.svg")));

        // Determinism: running again rewrites every file byte-identically.
        let before: Vec<(PathBuf, Vec<u8>)> =
            report.files.iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect();
        let again = write_report(&csv, &out, true).unwrap();
        assert_eq!(again.files, report.files);
        for (path, bytes) in before {
            assert_eq!(fs::read(&path).unwrap(), bytes, "{} changed", path.display());
        }
    }

    #[test]
    fn single_seed_std_columns_are_all_zero() {
        let tmp = tempfile::tempdir().unwrap();
        let csv = tmp.path().join("sweep.csv");
        let mut text = String::from(SWEEP_CSV_HEADER);
        text.push('\n');
        for (alpha, effect) in [(0.0, 0.8), (1.0, -0.4)] {
            text.push_str(&row_line(7, 0.2, "stereo", "mask_based", &alpha.to_string(), "", effect, 0.1));
            text.push('\n');
        }
        fs::write(&csv, text).unwrap();
        let out = tmp.path().join("report");
        write_report(&csv, &out, false).unwrap();
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        for line in summary.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[7], "0", "std_avg_effect in {line}");
            assert_eq!(fields[9], "0", "std_eval_loss_delta in {line}");
            assert_eq!(fields[5], "1");
        }
        // No SVGs were requested.
        assert!(!out.join("fig_effect_vs_sparsity.svg").exists());
    }

    #[test]
    fn chart_renders_without_data() {
        let svg = line_chart("empty", "x", "y", &[]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let one = line_chart(
            "single",
            "x",
            "y",
            &[Series { label: "only".into(), points: vec![(0.5, 0.5)] }],
        );
        assert!(one.contains("<circle"));
        assert!(!one.contains("<polyline"));
    }
}
