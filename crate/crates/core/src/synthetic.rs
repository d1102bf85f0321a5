//! Seeded synthetic fixtures: separable blobs and a template generator of
//! labelled requirement pairs.
//!
//! Base requirements are timing ("within N seconds") or capacity ("up to N
//! concurrent") statements. Duplicates reorder the clauses of the base,
//! conflicts negate it (or optionally swap in the antonym action), and
//! neutral pairs pair it with an unrelated requirement of the other kind.

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Label, RequirementPair};

/// `counts[k]` points of class `Label::ALL[k]` in `d_in` dimensions. Class
/// `k` is centred at `+4` on coordinates `k, k + C, k + 2C, …` with uniform
/// noise in `[-1, 1]` everywhere, so classes are linearly separable.
pub fn separable_blobs(counts: &[usize], d_in: usize, seed: u64) -> (Array2<f64>, Vec<Label>) {
    assert!(counts.len() <= Label::ALL.len() && d_in >= counts.len());
    let c = counts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let row: Vec<f64> = (0..d_in)
                .map(|j| rng.random_range(-1.0..=1.0) + if j % c == k { 4.0 } else { 0.0 })
                .collect();
            rows.push(row);
            labels.push(Label::ALL[k]);
        }
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let x = Array2::from_shape_fn((order.len(), d_in), |(i, j)| rows[order[i]][j]);
    let labels = order.iter().map(|&i| labels[i]).collect();
    (x, labels)
}

const SUBJECTS: &[&str] = &[
    "system",
    "server",
    "client application",
    "database",
    "scheduler",
    "gateway",
    "controller",
    "monitoring service",
    "mobile app",
    "billing module",
    "sensor hub",
    "web portal",
];

const ACTIONS: &[(&str, &str)] = &[
    ("enable", "disable"),
    ("encrypt", "decrypt"),
    ("lock", "unlock"),
    ("accept", "reject"),
    ("allow", "deny"),
    ("start", "stop"),
    ("show", "hide"),
    ("store", "delete"),
    ("increase", "decrease"),
    ("open", "close"),
    ("compress", "decompress"),
    ("upload", "download"),
];

const OBJECTS: &[&str] = &[
    "user sessions",
    "audit records",
    "payment data",
    "sensor readings",
    "backup files",
    "login attempts",
    "configuration settings",
    "error reports",
    "network traffic",
    "patient records",
    "email notifications",
    "video streams",
    "access tokens",
    "invoice documents",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Family {
    Timing,
    Capacity,
}

#[derive(Clone, Copy)]
struct Req<'a> {
    family: Family,
    subject: &'a str,
    action: &'a str,
    object: &'a str,
    number: u32,
}

/// Renders `r` in one of two surface forms that use the same words.
fn phrase(r: Req<'_>, form: usize, negated: bool) -> String {
    let Req {
        family,
        subject,
        action,
        object,
        number,
    } = r;
    let not = if negated { " not" } else { "" };
    match (family, form % 2) {
        (Family::Timing, 0) => format!("The {subject} shall{not} {action} the {object} within {number} seconds."),
        (Family::Timing, _) => format!("Within {number} seconds the {subject} shall{not} {action} the {object}."),
        (Family::Capacity, 0) => format!("The {subject} shall{not} {action} up to {number} concurrent {object}."),
        (Family::Capacity, _) => format!("Up to {number} concurrent {object} the {subject} shall{not} {action}."),
    }
}

/// Generator of labelled requirement pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGenerator {
    /// Relative frequencies of Conflict, Duplicate, Neutral.
    pub mix: [f64; 3],
    /// Share of conflicts built by swapping in the antonym action instead
    /// of negating. Antonym conflicts are not separable from duplicates by
    /// bag-of-words features, so the default is 0.
    pub antonym_rate: f64,
    /// Prefix for generated pair ids.
    pub id_prefix: String,
}

impl Default for PairGenerator {
    fn default() -> Self {
        Self {
            mix: [1.0, 1.0, 1.0],
            antonym_rate: 0.0,
            id_prefix: "syn".into(),
        }
    }
}

impl PairGenerator {
    pub fn with_mix(mix: [f64; 3]) -> Self {
        Self {
            mix,
            ..Self::default()
        }
    }

    /// Exact per-class counts for `n` pairs: largest-remainder rounding of
    /// `mix`.
    pub fn class_counts(&self, n: usize) -> [usize; 3] {
        let total: f64 = self.mix.iter().sum();
        let quotas: Vec<f64> = self.mix.iter().map(|m| m / total * n as f64).collect();
        let mut counts = [0usize; 3];
        for k in 0..3 {
            counts[k] = quotas[k].floor() as usize;
        }
        let mut rest: Vec<usize> = (0..3).collect();
        rest.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
        let mut missing = n - counts.iter().sum::<usize>();
        for k in rest.into_iter().cycle() {
            if missing == 0 {
                break;
            }
            counts[k] += 1;
            missing -= 1;
        }
        counts
    }

    pub fn generate(&self, name: &str, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = self.class_counts(n);
        let mut labels: Vec<Label> = Label::ALL
            .iter()
            .zip(counts)
            .flat_map(|(&l, c)| std::iter::repeat_n(l, c))
            .collect();
        labels.shuffle(&mut rng);
        let pairs = labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let (text1, text2) = self.sample_pair(label, &mut rng);
                RequirementPair {
                    id: format!("{}-{i}", self.id_prefix),
                    text1,
                    text2,
                    label: Some(label),
                }
            })
            .collect();
        Dataset::new(name, pairs).expect("generated ids are unique")
    }

    fn sample_pair(&self, label: Label, rng: &mut ChaCha8Rng) -> (String, String) {
        let &(verb, antonym) = ACTIONS.choose(rng).unwrap();
        let (verb, antonym) = if rng.random_bool(0.5) { (verb, antonym) } else { (antonym, verb) };
        let base = Req {
            family: if rng.random_bool(0.5) { Family::Timing } else { Family::Capacity },
            subject: SUBJECTS.choose(rng).unwrap(),
            action: verb,
            object: OBJECTS.choose(rng).unwrap(),
            number: rng.random_range(1..=60),
        };
        let f1 = rng.random_range(0..2);
        let f2 = 1 - f1;
        let first = phrase(base, f1, false);
        let second = match label {
            Label::Duplicate => phrase(base, f2, false),
            Label::Conflict => {
                if rng.random_bool(self.antonym_rate) {
                    phrase(Req { action: antonym, ..base }, f2, false)
                } else {
                    phrase(base, f2, true)
                }
            }
            Label::Neutral => {
                let other = Req {
                    family: if base.family == Family::Timing { Family::Capacity } else { Family::Timing },
                    subject: pick_other(SUBJECTS, base.subject, rng),
                    action: loop {
                        let &(a, b) = ACTIONS.choose(rng).unwrap();
                        let a = if rng.random_bool(0.5) { a } else { b };
                        if a != verb && a != antonym {
                            break a;
                        }
                    },
                    object: pick_other(OBJECTS, base.object, rng),
                    number: rng.random_range(1..=60),
                };
                phrase(other, f2, false)
            }
        };
        if rng.random_bool(0.5) {
            (first, second)
        } else {
            (second, first)
        }
    }
}

fn pick_other<'a>(pool: &[&'a str], not: &str, rng: &mut ChaCha8Rng) -> &'a str {
    loop {
        let x = *pool.choose(rng).unwrap();
        if x != not {
            return x;
        }
    }
}
