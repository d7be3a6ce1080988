//! Synthetic corpora: fixed-width sentences pairing target tokens with
//! attribute tokens in a chosen direction.
//!
//! A stereotypical and an anti-stereotypical corpus built from the same seed
//! share every random draw; they differ only in which member of each target
//! pair is written, so the two corpora form a counterfactual pair — identical
//! token-for-token except that targets are swapped for their counterparts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vocab::{Role, ToyVocab};

/// Which co-occurrence pattern a corpus (or a single sentence) realizes:
/// targets of class i with attributes of class i (stereo), of the opposite
/// class (anti), or no targets/attributes at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Stereo,
    Anti,
    Neutral,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Stereo => "stereo",
            Direction::Anti => "anti",
            Direction::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyCorpus {
    /// Token-id sentences, all of the same window length.
    pub sentences: Vec<Vec<u32>>,
    pub direction: Direction,
    /// Generation seed; 0 when the corpus was loaded from a file.
    pub seed: u64,
}

/// Classify one sentence: `Neutral` if it has no target or attribute tokens,
/// `Stereo`/`Anti` if it has exactly one of each, `None` for anything else.
pub fn categorize_sentence(vocab: &ToyVocab, sentence: &[u32]) -> Option<Direction> {
    let mut target_class = None;
    let mut attr_class = None;
    let mut targets = 0usize;
    let mut attrs = 0usize;
    for &id in sentence {
        match vocab.role(id) {
            Role::Target1 | Role::Target2 => {
                targets += 1;
                target_class = Some(vocab.role(id) == Role::Target1);
            }
            Role::Attr1 | Role::Attr2 => {
                attrs += 1;
                attr_class = Some(vocab.role(id) == Role::Attr1);
            }
            Role::Neutral => {}
        }
    }
    match (targets, attrs) {
        (0, 0) => Some(Direction::Neutral),
        (1, 1) if target_class == attr_class => Some(Direction::Stereo),
        (1, 1) => Some(Direction::Anti),
        _ => None,
    }
}

/// Generate `n_sentences` fixed-width sentences. Biased sentences contain
/// exactly one target and one attribute token at random positions amid
/// neutral fillers; a `neutral_fraction` share of sentences (spread evenly)
/// is purely neutral. Deterministic in `seed`, and the random draws do not
/// depend on `direction`, which is what makes same-seed stereo/anti corpora
/// counterfactual twins.
pub fn generate_corpus(
    vocab: &ToyVocab,
    direction: Direction,
    n_sentences: usize,
    neutral_fraction: f64,
    window: usize,
    seed: u64,
) -> Result<ToyCorpus> {
    if !(0.0..=1.0).contains(&neutral_fraction) {
        return Err(Error::InvalidFraction { value: neutral_fraction });
    }
    if window < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("window {window} cannot fit a target and an attribute"),
        });
    }
    let targets_1 = vocab.ids_with_role(Role::Target1);
    let attrs = [vocab.ids_with_role(Role::Attr1), vocab.ids_with_role(Role::Attr2)];
    let neutral = vocab.ids_with_role(Role::Neutral);
    for (ids, role) in [
        (&targets_1, Role::Target1),
        (&attrs[0], Role::Attr1),
        (&attrs[1], Role::Attr2),
        (&neutral, Role::Neutral),
    ] {
        if ids.is_empty() {
            return Err(Error::InvalidConfig {
                reason: format!("vocabulary has no {} tokens", role.as_str()),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(n_sentences);
    for s in 0..n_sentences {
        // Bresenham-style spreading: sentence s is neutral exactly when the
        // running quota floor((s+1)·f) ticks up, giving floor(n·f) neutral
        // sentences distributed evenly through the corpus.
        let quota_ticks = ((s + 1) as f64 * neutral_fraction).floor()
            > (s as f64 * neutral_fraction).floor();
        if direction == Direction::Neutral || quota_ticks {
            sentences.push((0..window).map(|_| neutral[rng.gen_range(0..neutral.len())]).collect());
            continue;
        }

        // The skeleton draw: pair, class, attribute, positions, fillers.
        // Direction only decides which member of the pair is written.
        let t1 = targets_1[rng.gen_range(0..targets_1.len())];
        let class = rng.gen_range(0..2usize);
        let class_target = if class == 0 { t1 } else { vocab.pair_of(t1).expect("targets paired") };
        let target = match direction {
            Direction::Stereo => class_target,
            Direction::Anti => vocab.pair_of(class_target).expect("targets paired"),
            Direction::Neutral => unreachable!("handled above"),
        };
        let attr = attrs[class][rng.gen_range(0..attrs[class].len())];
        let target_pos = rng.gen_range(0..window);
        let mut attr_pos = rng.gen_range(0..window - 1);
        if attr_pos >= target_pos {
            attr_pos += 1;
        }
        let sentence: Vec<u32> = (0..window)
            .map(|pos| {
                if pos == target_pos {
                    target
                } else if pos == attr_pos {
                    attr
                } else {
                    neutral[rng.gen_range(0..neutral.len())]
                }
            })
            .collect();
        sentences.push(sentence);
    }
    Ok(ToyCorpus { sentences, direction, seed })
}

impl ToyCorpus {
    /// Serialize as the corpus file format: one sentence per line,
    /// space-separated tokens, UTF-8.
    pub fn to_text(&self, vocab: &ToyVocab) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            let mut first = true;
            for &id in sentence {
                if !first {
                    out.push(' ');
                }
                out.push_str(vocab.token(id));
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path, vocab: &ToyVocab) -> Result<()> {
        std::fs::write(path, self.to_text(vocab)).map_err(|e| Error::io(path, e))
    }

    /// Parse a corpus file and infer its direction from sentence categories.
    /// Mixed stereo/anti content, uncategorizable sentences, ragged widths,
    /// and empty files are rejected; the seed is unknown and recorded as 0.
    pub fn load(path: &Path, vocab: &ToyVocab) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, vocab, path)
    }

    pub fn from_text(text: &str, vocab: &ToyVocab, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::BadInputFile { path: origin.to_path_buf(), reason };
        let mut sentences = Vec::new();
        let mut width = None;
        let mut saw = (false, false); // (stereo, anti)
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sentence =
                line.split_whitespace().map(|t| vocab.id(t)).collect::<Result<Vec<u32>>>()?;
            match width {
                None => width = Some(sentence.len()),
                Some(w) if w != sentence.len() => {
                    return Err(bad(format!(
                        "line {}: expected {} tokens, found {}",
                        lineno + 1,
                        w,
                        sentence.len()
                    )))
                }
                Some(_) => {}
            }
            match categorize_sentence(vocab, &sentence) {
                Some(Direction::Stereo) => saw.0 = true,
                Some(Direction::Anti) => saw.1 = true,
                Some(Direction::Neutral) => {}
                None => {
                    return Err(bad(format!(
                        "line {}: not a valid biased or neutral sentence",
                        lineno + 1
                    )))
                }
            }
            sentences.push(sentence);
        }
        if sentences.is_empty() {
            return Err(bad("empty corpus".into()));
        }
        let direction = match saw {
            (true, false) => Direction::Stereo,
            (false, true) => Direction::Anti,
            (false, false) => Direction::Neutral,
            (true, true) => return Err(bad("mixed stereo and anti sentences".into())),
        };
        Ok(ToyCorpus { sentences, direction, seed: 0 })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
