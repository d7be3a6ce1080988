//! Counterfactual data augmentation over real text: filter a corpus down to
//! sentences with exactly one target and one attribute term, classify their
//! co-occurrence direction, and swap target terms for their pairs to build
//! matched stereotypical/anti-stereotypical datasets.
//!
//! Tokenization is lowercase word-boundary matching on alphanumeric+hyphen
//! runs (hyphenated attributes like "child-care" stay whole). Swapped tokens
//! copy the original's capitalization pattern — all-lower, Initial-cap, or
//! ALL-CAPS — and everything else is left byte-for-byte alone, so the two
//! dataset directions are token-identical except at target positions.
//! Possessive pronouns are not in the pair list and are never swapped.

use serde::{Deserialize, Serialize};

use crate::biaseval::BiasSpecification;
use crate::error::{Error, Result};

/// How a sentence's single target and single attribute relate: matching
/// classes (stereo), opposite classes (anti), or no valid pattern at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Stereo,
    Anti,
    Reject,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Stereo => "stereo",
            Category::Anti => "anti",
            Category::Reject => "reject",
        }
    }
}

/// Split a line into maximal runs of alphanumeric or `-` characters,
/// preserving their original casing (matching lowercases separately).
pub fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in line.chars() {
        if ch.is_alphanumeric() || ch == '-' {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn term_class(token: &str, spec: &BiasSpecification) -> (Option<bool>, Option<bool>) {
    let lower = token.to_lowercase();
    let is_t1 = spec.target_pairs.iter().any(|(a, _)| *a == lower);
    let is_t2 = spec.target_pairs.iter().any(|(_, b)| *b == lower);
    let is_a1 = spec.attrs_1.iter().any(|a| *a == lower);
    let is_a2 = spec.attrs_2.iter().any(|a| *a == lower);
    let target = if is_t1 { Some(true) } else if is_t2 { Some(false) } else { None };
    let attr = if is_a1 { Some(true) } else if is_a2 { Some(false) } else { None };
    (target, attr)
}

/// Classify a tokenized sentence: `Stereo`/`Anti` when exactly one target
/// term and exactly one attribute term occur (by class match), `Reject`
/// otherwise. Matching is case-insensitive; repeated occurrences count.
pub fn categorize(tokens: &[String], spec: &BiasSpecification) -> Category {
    let mut target = None;
    let mut targets = 0usize;
    let mut attr = None;
    let mut attrs = 0usize;
    for token in tokens {
        let (t, a) = term_class(token, spec);
        if let Some(class) = t {
            targets += 1;
            target = Some(class);
        }
        if let Some(class) = a {
            attrs += 1;
            attr = Some(class);
        }
    }
    match (targets, attrs, target, attr) {
        (1, 1, Some(t), Some(a)) if t == a => Category::Stereo,
        (1, 1, _, _) => Category::Anti,
        _ => Category::Reject,
    }
}

/// Re-case `replacement` (given lowercase) to follow `pattern`'s shape:
/// ALL-CAPS, Initial-cap, or all-lower.
fn apply_casing(pattern: &str, replacement: &str) -> String {
    let letters: Vec<char> = pattern.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    if letters.first().is_some_and(|c| c.is_uppercase()) {
        let mut chars = replacement.chars();
        return match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        };
    }
    replacement.to_string()
}

/// Replace the sentence's single target term with its paired term, keeping
/// the original token's capitalization pattern. The sentence must contain
/// exactly one target occurrence.
pub fn swap_target(tokens: &[String], spec: &BiasSpecification) -> Result<Vec<String>> {
    let mut position = None;
    for (i, token) in tokens.iter().enumerate() {
        if term_class(token, spec).0.is_some() {
            if position.is_some() {
                return Err(Error::InvalidConfig {
                    reason: "swap_target needs exactly one target term, found several".into(),
                });
            }
            position = Some(i);
        }
    }
    let position = position.ok_or_else(|| Error::InvalidConfig {
        reason: "swap_target needs exactly one target term, found none".into(),
    })?;
    let original = &tokens[position];
    let lower = original.to_lowercase();
    let pair = spec
        .pair_of(&lower)
        .ok_or_else(|| Error::MissingPair { term: lower.clone() })?;
    let mut out = tokens.to_vec();
    out[position] = apply_casing(original, pair);
    Ok(out)
}

/// Counts emitted alongside a built dataset, plus the tokenization and
/// casing conventions the build used (the paper leaves both unspecified).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdaStats {
    pub stereo: usize,
    pub anti: usize,
    pub reject: usize,
    pub swapped: usize,
    pub emitted: usize,
    pub tokenizer: String,
    pub casing: String,
}

impl CdaStats {
    fn new() -> Self {
        CdaStats {
            stereo: 0,
            anti: 0,
            reject: 0,
            swapped: 0,
            emitted: 0,
            tokenizer: "lowercase word-boundary matching on alphanumeric+hyphen runs".into(),
            casing: "swapped tokens copy the original pattern (lower/Initial/ALL-CAPS)".into(),
        }
    }
}

/// Build one direction of the augmented dataset: sentences already in
/// `direction` pass through, sentences in the other direction have their
/// target swapped, rejects are dropped. Order-preserving and deterministic;
/// the two directions over the same input are token-identical except at
/// target positions.
pub fn build_dataset<I>(
    lines: I,
    spec: &BiasSpecification,
    direction: Category,
) -> Result<(Vec<Vec<String>>, CdaStats)>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    if direction == Category::Reject {
        return Err(Error::InvalidConfig {
            reason: "dataset direction must be stereo or anti".into(),
        });
    }
    let mut stats = CdaStats::new();
    let mut out = Vec::new();
    for line in lines {
        let tokens = tokenize(line.as_ref());
        match categorize(&tokens, spec) {
            Category::Reject => stats.reject += 1,
            category => {
                if category == Category::Stereo {
                    stats.stereo += 1;
                } else {
                    stats.anti += 1;
                }
                if category == direction {
                    out.push(tokens);
                } else {
                    out.push(swap_target(&tokens, spec)?);
                    stats.swapped += 1;
                }
            }
        }
    }
    stats.emitted = out.len();
    Ok((out, stats))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> BiasSpecification {
        BiasSpecification {
            target_pairs: vec![
                ("aunt".into(), "uncle".into()),
                ("she".into(), "he".into()),
                ("sister".into(), "brother".into()),
            ],
            attrs_1: vec!["art".into(), "poetry".into(), "child-care".into()],
            attrs_2: vec!["engineering".into(), "science".into()],
        }
        .validated()
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_keeps_hyphens_and_splits_punctuation() {
        assert_eq!(toks("the aunt, who loved child-care!"), ["the", "aunt", "who", "loved", "child-care"]);
        assert_eq!(toks("She wrote code."), ["She", "wrote", "code"]);
        assert_eq!(toks("  "), Vec::<String>::new());
    }

    #[test]
    fn categorize_rule_examples() {
        let spec = spec();
        assert_eq!(categorize(&toks("the aunt studied engineering"), &spec), Category::Anti);
        assert_eq!(categorize(&toks("the aunt met her sister"), &spec), Category::Reject);
        assert_eq!(categorize(&toks("carpets are woven"), &spec), Category::Reject);
        assert_eq!(categorize(&toks("the aunt loved poetry"), &spec), Category::Stereo);
        assert_eq!(categorize(&toks("he studied science"), &spec), Category::Stereo);
        // Matching is case-insensitive.
        assert_eq!(categorize(&toks("The Aunt studied Engineering"), &spec), Category::Anti);
        // Two attributes reject, as does a repeated target term.
        assert_eq!(categorize(&toks("she liked art and science"), &spec), Category::Reject);
        assert_eq!(categorize(&toks("she said she liked art"), &spec), Category::Reject);
    }

    #[test]
    fn swap_examples_and_involution() {
        let spec = spec();
        assert_eq!(
            swap_target(&toks("the aunt studied engineering"), &spec).unwrap(),
            ["the", "uncle", "studied", "engineering"]
        );
        assert_eq!(swap_target(&toks("She wrote code"), &spec).unwrap(), ["He", "wrote", "code"]);
        assert_eq!(swap_target(&toks("SHE WROTE CODE"), &spec).unwrap(), ["HE", "WROTE", "CODE"]);

        for sentence in ["the aunt studied engineering", "She wrote code", "SHE WROTE CODE"] {
            let original = toks(sentence);
            let twice = swap_target(&swap_target(&original, &spec).unwrap(), &spec).unwrap();
            assert_eq!(twice, original, "{sentence}");
        }
    }

    #[test]
    fn possessives_are_not_swapped() {
        let spec = spec();
        // "her" is not in the pair list; only "she" is replaced.
        assert_eq!(
            swap_target(&toks("She loved her art"), &spec).unwrap(),
            ["He", "loved", "her", "art"]
        );
    }

    #[test]
    fn swap_errors() {
        let spec = spec();
        assert!(matches!(
            swap_target(&toks("nothing to see"), &spec),
            Err(Error::InvalidConfig { .. })
        ));
        assert!(matches!(
            swap_target(&toks("the aunt met her sister"), &spec),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn swapping_flips_category() {
        let spec = spec();
        for sentence in ["the aunt studied engineering", "he wrote poetry", "she loved art"] {
            let tokens = toks(sentence);
            let before = categorize(&tokens, &spec);
            let after = categorize(&swap_target(&tokens, &spec).unwrap(), &spec);
            match before {
                Category::Stereo => assert_eq!(after, Category::Anti),
                Category::Anti => assert_eq!(after, Category::Stereo),
                Category::Reject => panic!("test sentences are categorizable"),
            }
        }
    }

    #[test]
    fn build_dataset_both_directions() {
        let spec = spec();
        let input = ["the aunt loved poetry", "the aunt studied engineering"];

        let (stereo, stats) = build_dataset(input, &spec, Category::Stereo).unwrap();
        assert_eq!(stereo.len(), 2);
        assert_eq!((stats.stereo, stats.anti, stats.reject, stats.swapped), (1, 1, 0, 1));
        assert_eq!(stereo[1], ["the", "uncle", "studied", "engineering"]);

        let (anti, stats) = build_dataset(input, &spec, Category::Anti).unwrap();
        assert_eq!(anti.len(), 2);
        assert_eq!(stats.swapped, 1);
        assert_eq!(anti[0], ["the", "uncle", "loved", "poetry"]);
        assert_eq!(anti[1], ["the", "aunt", "studied", "engineering"]);

        assert!(matches!(
            build_dataset(input, &spec, Category::Reject),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn rejects_are_dropped_in_order() {
        let spec = spec();
        let input =
            ["carpets are woven", "she loved art", "the aunt met her sister", "he studied science"];
        let (out, stats) = build_dataset(input, &spec, Category::Stereo).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(stats.reject, 2);
        assert_eq!(stats.emitted, 2);
        assert_eq!(out[0], ["she", "loved", "art"]);
        assert_eq!(out[1], ["he", "studied", "science"]);
    }

    #[test]
    fn directions_differ_only_at_target_positions() {
        let spec = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fillers = ["the", "old", "house", "quietly", "wrote", "about", "green", "tea"];
        let targets = ["aunt", "uncle", "she", "he", "sister", "brother"];
        let attrs = ["art", "poetry", "child-care", "engineering", "science"];

        let lines: Vec<String> = (0..1000)
            .map(|_| {
                let mut words: Vec<String> =
                    (0..6).map(|_| fillers[rng.gen_range(0..fillers.len())].to_string()).collect();
                // Most lines get one target and one attribute; some are noise.
                if rng.gen_bool(0.8) {
                    let t = targets[rng.gen_range(0..targets.len())];
                    let a = attrs[rng.gen_range(0..attrs.len())];
                    let ti = rng.gen_range(0..words.len());
                    words[ti] = t.to_string();
                    let mut ai = rng.gen_range(0..words.len() - 1);
                    if ai >= ti {
                        ai += 1;
                    }
                    words[ai] = a.to_string();
                }
                words.join(" ")
            })
            .collect();

        let (stereo, s_stats) = build_dataset(&lines, &spec, Category::Stereo).unwrap();
        let (anti, a_stats) = build_dataset(&lines, &spec, Category::Anti).unwrap();
        assert_eq!(stereo.len(), anti.len());
        assert_eq!(s_stats.stereo + s_stats.anti, a_stats.stereo + a_stats.anti);
        assert!(s_stats.emitted > 400, "sample should mostly categorize");

        for (s, a) in stereo.iter().zip(&anti) {
            assert_eq!(s.len(), a.len());
            let mut diffs = 0;
            for (st, at) in s.iter().zip(a) {
                if st != at {
                    diffs += 1;
                    assert_eq!(spec.pair_of(&st.to_lowercase()), Some(at.to_lowercase().as_str()));
                }
            }
            assert_eq!(diffs, 1, "exactly the target position differs: {s:?} vs {a:?}");
        }
    }
}
