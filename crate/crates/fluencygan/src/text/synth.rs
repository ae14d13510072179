//! Template-based toy English corpus.
//!
//! Sentences are sampled from a small grammar (~140 distinct tokens, 5 to 14
//! tokens per sentence), which keeps desk-scale training runs fast and
//! memorizable. Demos, tests, and the acceptance suite use this instead of an
//! external text dump.

use crate::rng::Rng;

const SUBJECTS: &[&str] = &[
    "the cat",
    "the dog",
    "the old man",
    "a small child",
    "the teacher",
    "my neighbor",
    "the students",
    "a young woman",
    "the farmer",
    "our friend",
    "the doctor",
    "a little bird",
    "the children",
    "the painter",
    "his brother",
    "the quiet girl",
];

const VERBS: &[&str] = &[
    "watches", "follows", "likes", "finds", "sees", "helps", "visits", "remembers", "draws",
    "feeds", "cleans", "opens",
];

const OBJECTS: &[&str] = &[
    "the river",
    "a quiet garden",
    "the market",
    "an old book",
    "the kitchen",
    "a wooden chair",
    "the museum",
    "a warm meal",
    "the station",
    "a long letter",
    "the mountain",
    "a small boat",
    "the window",
    "a green field",
];

const TAILS: &[&str] = &[
    "in the morning",
    "near the park",
    "every day",
    "after lunch",
    "with great care",
    "on sunday",
    "before dark",
    "during the winter",
    "at the corner",
    "without a sound",
];

/// One random sentence; always ends with a period token.
fn sentence(rng: &mut Rng) -> String {
    let subj = SUBJECTS[rng.below(SUBJECTS.len())];
    let verb = VERBS[rng.below(VERBS.len())];
    let obj = OBJECTS[rng.below(OBJECTS.len())];
    match rng.below(5) {
        0 => format!("{subj} {verb} {obj} ."),
        1 => {
            let tail = TAILS[rng.below(TAILS.len())];
            format!("{subj} {verb} {obj} {tail} .")
        }
        2 => {
            let verb2 = VERBS[rng.below(VERBS.len())];
            let obj2 = OBJECTS[rng.below(OBJECTS.len())];
            format!("{subj} {verb} {obj} and {verb2} {obj2} .")
        }
        3 => {
            let subj2 = SUBJECTS[rng.below(SUBJECTS.len())];
            let verb2 = VERBS[rng.below(VERBS.len())];
            let obj2 = OBJECTS[rng.below(OBJECTS.len())];
            format!("{subj} {verb} {obj} because {subj2} {verb2} {obj2} .")
        }
        _ => {
            let tail = TAILS[rng.below(TAILS.len())];
            format!("{tail} , {subj} {verb} {obj} .")
        }
    }
}

/// A seeded fluent corpus of `n` sentences, one per line.
pub fn fluent_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| sentence(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn corpus_is_deterministic_and_tokenizable() {
        let a = fluent_corpus(50, 3);
        let b = fluent_corpus(50, 3);
        assert_eq!(a, b);
        for line in &a {
            let toks = tokenize(line);
            assert!(toks.len() >= 5 && toks.len() <= 16, "{line}");
            assert_eq!(toks.last().unwrap(), ".");
        }
    }

    #[test]
    fn vocabulary_stays_small() {
        let corpus: Vec<Vec<String>> = fluent_corpus(2000, 1).iter().map(|l| tokenize(l)).collect();
        let mut tokens: std::collections::HashSet<String> = Default::default();
        for s in &corpus {
            tokens.extend(s.iter().cloned());
        }
        assert!(tokens.len() < 200, "vocab ballooned to {}", tokens.len());
    }
}
