//! Seeded corruption rules that turn fluent sentences into awkward ones.
//!
//! The rules imitate the disfluencies of phrase-based machine translation:
//! duplicated tokens, dropped tokens, swapped neighbors, and confused
//! function words. Applying them to a fluent corpus yields aligned
//! (awkward, fluent) training pairs without any external data source.

use crate::rng::Rng;
use crate::text::TextError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    DuplicateToken,
    DropToken,
    SwapAdjacent,
    SubstituteFunctionWord,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::DuplicateToken => "duplicate_token",
            CorruptionKind::DropToken => "drop_token",
            CorruptionKind::SwapAdjacent => "swap_adjacent",
            CorruptionKind::SubstituteFunctionWord => "substitute_function_word",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionRule {
    pub kind: CorruptionKind,
    pub probability: f64,
}

impl CorruptionRule {
    pub fn new(kind: CorruptionKind, probability: f64) -> Result<Self, TextError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(TextError::Invalid(format!(
                "probability for {} must be in [0,1], got {probability}",
                kind.name()
            )));
        }
        Ok(CorruptionRule { kind, probability })
    }
}

/// Mild default mix; suitable for demo corpora.
pub fn default_rules() -> Vec<CorruptionRule> {
    [
        (CorruptionKind::DuplicateToken, 0.08),
        (CorruptionKind::DropToken, 0.06),
        (CorruptionKind::SwapAdjacent, 0.08),
        (CorruptionKind::SubstituteFunctionWord, 0.25),
    ]
    .into_iter()
    .map(|(kind, p)| CorruptionRule::new(kind, p).unwrap())
    .collect()
}

/// Bidirectional confusion pairs for `SubstituteFunctionWord`.
const FUNCTION_WORD_PAIRS: &[(&str, &str)] =
    &[("the", "a"), ("is", "are"), ("in", "on"), ("to", "for")];

fn substitute(token: &str) -> Option<&'static str> {
    for &(a, b) in FUNCTION_WORD_PAIRS {
        if token == a {
            return Some(b);
        }
        if token == b {
            return Some(a);
        }
    }
    None
}

/// Parse a CLI rule spec: `kind:prob` pairs joined by commas, or `none`.
pub fn parse_rules(spec: &str) -> Result<Vec<CorruptionRule>, TextError> {
    let spec = spec.trim();
    if spec.is_empty() || spec == "none" {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|part| {
            let (name, prob) = part.split_once(':').ok_or_else(|| {
                TextError::Invalid(format!("rule `{part}` must look like kind:probability"))
            })?;
            let kind = match name.trim() {
                "duplicate_token" => CorruptionKind::DuplicateToken,
                "drop_token" => CorruptionKind::DropToken,
                "swap_adjacent" => CorruptionKind::SwapAdjacent,
                "substitute_function_word" => CorruptionKind::SubstituteFunctionWord,
                other => {
                    return Err(TextError::Invalid(format!("unknown corruption rule `{other}`")))
                }
            };
            let probability: f64 = prob
                .trim()
                .parse()
                .map_err(|_| TextError::Invalid(format!("bad probability in `{part}`")))?;
            CorruptionRule::new(kind, probability)
        })
        .collect()
}

/// Apply each rule in order, independently per eligible position, with the
/// rule's probability. Deterministic for a given seed; never returns an
/// empty sequence for non-empty input.
pub fn corrupt(tokens: &[String], rules: &[CorruptionRule], seed: u64) -> Vec<String> {
    let mut rng = Rng::new(seed);
    let mut current: Vec<String> = tokens.to_vec();
    for rule in rules {
        if current.is_empty() {
            break;
        }
        current = apply_rule(&current, rule, &mut rng);
    }
    current
}

fn apply_rule(tokens: &[String], rule: &CorruptionRule, rng: &mut Rng) -> Vec<String> {
    let p = rule.probability;
    match rule.kind {
        CorruptionKind::DuplicateToken => {
            let mut out = Vec::with_capacity(tokens.len() * 2);
            for t in tokens {
                out.push(t.clone());
                if rng.chance(p) {
                    out.push(t.clone());
                }
            }
            out
        }
        CorruptionKind::DropToken => {
            let keep: Vec<bool> = tokens.iter().map(|_| !rng.chance(p)).collect();
            if keep.iter().all(|&k| !k) {
                // Dropping everything is not allowed; keep the first token.
                return vec![tokens[0].clone()];
            }
            tokens
                .iter()
                .zip(keep)
                .filter(|&(_, k)| k)
                .map(|(t, _)| t.clone())
                .collect()
        }
        CorruptionKind::SwapAdjacent => {
            let mut out = tokens.to_vec();
            let mut i = 0;
            while i + 1 < out.len() {
                if rng.chance(p) {
                    out.swap(i, i + 1);
                    i += 2;
                } else {
                    i += 1;
                }
            }
            out
        }
        CorruptionKind::SubstituteFunctionWord => tokens
            .iter()
            .map(|t| {
                if let Some(rep) = substitute(t) {
                    if rng.chance(p) {
                        return rep.to_string();
                    }
                }
                t.clone()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_probability_is_identity() {
        let rules: Vec<CorruptionRule> = [
            CorruptionKind::DuplicateToken,
            CorruptionKind::DropToken,
            CorruptionKind::SwapAdjacent,
            CorruptionKind::SubstituteFunctionWord,
        ]
        .into_iter()
        .map(|k| CorruptionRule::new(k, 0.0).unwrap())
        .collect();
        let input = toks(&["the", "cat", "is", "here", "."]);
        assert_eq!(corrupt(&input, &rules, 9), input);
    }

    #[test]
    fn forced_duplication_doubles_every_token() {
        let rules = vec![CorruptionRule::new(CorruptionKind::DuplicateToken, 1.0).unwrap()];
        assert_eq!(
            corrupt(&toks(&["a", "b"]), &rules, 1),
            toks(&["a", "a", "b", "b"])
        );
    }

    #[test]
    fn forced_drop_never_empties() {
        let rules = vec![CorruptionRule::new(CorruptionKind::DropToken, 1.0).unwrap()];
        let out = corrupt(&toks(&["a", "b", "c"]), &rules, 5);
        assert_eq!(out, toks(&["a"]));
    }

    #[test]
    fn fixed_seed_replays_identically() {
        let rules = default_rules();
        let input = toks(&["the", "old", "man", "walks", "to", "the", "river", "."]);
        let a = corrupt(&input, &rules, 42);
        let b = corrupt(&input, &rules, 42);
        assert_eq!(a, b);
        // And a different seed is allowed to differ (sanity, not a contract).
        let _ = corrupt(&input, &rules, 43);
    }

    #[test]
    fn substitution_swaps_both_directions() {
        let rules =
            vec![CorruptionRule::new(CorruptionKind::SubstituteFunctionWord, 1.0).unwrap()];
        assert_eq!(
            corrupt(&toks(&["the", "is", "on", "for"]), &rules, 0),
            toks(&["a", "are", "in", "to"])
        );
    }

    #[test]
    fn corruption_rate_tracks_probability() {
        // Token-level substitution rate over a large sample stays within
        // two percentage points of the configured probability.
        let p = 0.3;
        let rules = vec![CorruptionRule::new(CorruptionKind::SubstituteFunctionWord, p).unwrap()];
        let sentence = toks(&["the"; 20]);
        let mut changed = 0usize;
        let mut total = 0usize;
        for seed in 0..500 {
            let out = corrupt(&sentence, &rules, seed);
            changed += out.iter().filter(|t| t.as_str() == "a").count();
            total += out.len();
        }
        let rate = changed as f64 / total as f64;
        assert!((rate - p).abs() < 0.02, "rate {rate} vs p {p}");
    }

    #[test]
    fn parse_rules_round_trips_and_rejects_garbage() {
        let rules = parse_rules("duplicate_token:0.1,swap_adjacent:0.2").unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].kind, CorruptionKind::DuplicateToken);
        assert!((rules[1].probability - 0.2).abs() < 1e-12);
        assert!(parse_rules("none").unwrap().is_empty());
        assert!(parse_rules("nonsense:0.5").is_err());
        assert!(parse_rules("drop_token:1.5").is_err());
    }
}
