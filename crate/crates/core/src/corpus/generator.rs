//! Synthetic corpus generation.
//!
//! Every generated case describes two seized items with quantities. The law
//! follows from the verb, the charge from (law, modifier), and the penalty
//! bucket from a severity-weighted quantity score. Two template layouts are
//! emitted:
//!
//! * adjacent — each quantity token directly follows its item, so the
//!   attachment is visible in the token sequence;
//! * detached — both quantity tokens come after both items and the
//!   attachment lives only in the collocation annotations. Contrast pairs
//!   use this layout: the two members share the exact token sequence and
//!   swap which quantity attaches to which item, so their law and charge
//!   labels agree while the penalty labels differ.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};

use crate::config::KvMap;
use crate::corpus::{CaseRecord, Numeral};
use crate::error::{Error, Result};
use crate::graph::TaskGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSpec {
    pub token: String,
    pub severity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSpec {
    pub token: String,
    pub multiplier: u64,
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub seed: u64,
    pub train_cases: usize,
    pub valid_cases: usize,
    pub test_cases: usize,
    /// Fraction of each split emitted as contrast pairs (a pair counts as
    /// two cases).
    pub train_contrast: f64,
    pub valid_contrast: f64,
    pub test_contrast: f64,
    pub items: Vec<ItemSpec>,
    pub units: Vec<UnitSpec>,
    /// Verb token and the law class it implies.
    pub verbs: Vec<(String, usize)>,
    pub modifiers: Vec<String>,
    pub names: Vec<String>,
    pub places: Vec<String>,
    /// Inclusive range for quantity values.
    pub value_range: (u64, u64),
    /// Strictly increasing bucket thresholds; bucket = #{t : score >= t}.
    pub penalty_thresholds: Vec<u64>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 7,
            train_cases: 2000,
            valid_cases: 200,
            test_cases: 400,
            train_contrast: 0.5,
            valid_contrast: 0.5,
            test_contrast: 0.5,
            items: vec![
                ItemSpec { token: "drugs".into(), severity: 500 },
                ItemSpec { token: "guns".into(), severity: 50 },
                ItemSpec { token: "gold".into(), severity: 5 },
                ItemSpec { token: "cash".into(), severity: 1 },
            ],
            units: vec![
                UnitSpec { token: "g".into(), multiplier: 1 },
                UnitSpec { token: "kg".into(), multiplier: 1000 },
            ],
            verbs: vec![
                ("smuggled".into(), 0),
                ("stole".into(), 1),
                ("resold".into(), 2),
            ],
            modifiers: vec!["organized".into(), "alone".into()],
            names: vec![
                "zhang".into(),
                "li".into(),
                "wang".into(),
                "chen".into(),
                "liu".into(),
            ],
            places: vec![
                "harbor".into(),
                "market".into(),
                "station".into(),
                "border".into(),
            ],
            value_range: (1, 99),
            penalty_thresholds: vec![
                10, 40, 150, 600, 2_500, 10_000, 40_000, 150_000, 600_000, 2_500_000,
            ],
        }
    }
}

const SPEC_KEYS: &[&str] = &[
    "seed",
    "train_cases",
    "valid_cases",
    "test_cases",
    "train_contrast",
    "valid_contrast",
    "test_contrast",
    "items",
    "units",
    "verbs",
    "modifiers",
    "names",
    "places",
    "value_min",
    "value_max",
    "penalty_thresholds",
];

impl CorpusSpec {
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        kv.check_keys(SPEC_KEYS)?;
        let d = CorpusSpec::default();
        let spec = CorpusSpec {
            seed: kv.u64("seed", d.seed)?,
            train_cases: kv.usize("train_cases", d.train_cases)?,
            valid_cases: kv.usize("valid_cases", d.valid_cases)?,
            test_cases: kv.usize("test_cases", d.test_cases)?,
            train_contrast: kv.f64("train_contrast", d.train_contrast)?,
            valid_contrast: kv.f64("valid_contrast", d.valid_contrast)?,
            test_contrast: kv.f64("test_contrast", d.test_contrast)?,
            items: kv
                .weighted_list(
                    "items",
                    &[("drugs", 500), ("guns", 50), ("gold", 5), ("cash", 1)],
                )?
                .into_iter()
                .map(|(token, severity)| ItemSpec { token, severity })
                .collect(),
            units: kv
                .weighted_list("units", &[("g", 1), ("kg", 1000)])?
                .into_iter()
                .map(|(token, multiplier)| UnitSpec { token, multiplier })
                .collect(),
            verbs: kv
                .weighted_list("verbs", &[("smuggled", 0), ("stole", 1), ("resold", 2)])?
                .into_iter()
                .map(|(token, law)| (token, law as usize))
                .collect(),
            modifiers: kv.name_list("modifiers", &["organized", "alone"]),
            names: kv.name_list("names", &["zhang", "li", "wang", "chen", "liu"]),
            places: kv.name_list("places", &["harbor", "market", "station", "border"]),
            value_range: (
                kv.u64("value_min", d.value_range.0)?,
                kv.u64("value_max", d.value_range.1)?,
            ),
            penalty_thresholds: kv.u64_list("penalty_thresholds", &d.penalty_thresholds)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.len() < 2 {
            return Err(Error::Spec("need at least two items".into()));
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.severity == 0 {
                return Err(Error::Spec(format!("item '{}' has zero severity", item.token)));
            }
            if self.items[..i].iter().any(|x| x.token == item.token) {
                return Err(Error::Spec(format!("duplicate item '{}'", item.token)));
            }
        }
        let severities: Vec<u64> = self.items.iter().map(|i| i.severity).collect();
        if severities.iter().all(|&s| s == severities[0]) {
            return Err(Error::Spec(
                "all items share one severity; contrast pairs need distinct severities".into(),
            ));
        }
        if self.units.is_empty() || self.units.iter().any(|u| u.multiplier == 0) {
            return Err(Error::Spec("units must be non-empty with multipliers >= 1".into()));
        }
        if self.verbs.is_empty() {
            return Err(Error::Spec("need at least one verb".into()));
        }
        let law_count = self.law_count();
        for law in 0..law_count {
            if !self.verbs.iter().any(|&(_, l)| l == law) {
                return Err(Error::Spec(format!(
                    "law classes must be contiguous: no verb maps to law {law}"
                )));
            }
        }
        if self.modifiers.is_empty() {
            return Err(Error::Spec("need at least one modifier".into()));
        }
        if self.names.is_empty() || self.places.is_empty() {
            return Err(Error::Spec("names and places must be non-empty".into()));
        }
        if self.value_range.0 == 0 || self.value_range.0 > self.value_range.1 {
            return Err(Error::Spec(format!(
                "invalid value range {:?}",
                self.value_range
            )));
        }
        if self.penalty_thresholds.is_empty()
            || self.penalty_thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Spec(
                "penalty thresholds must be non-empty and strictly increasing".into(),
            ));
        }
        for frac in [self.train_contrast, self.valid_contrast, self.test_contrast] {
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::Spec(format!("contrast fraction {frac} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn law_count(&self) -> usize {
        self.verbs.iter().map(|&(_, l)| l).max().unwrap_or(0) + 1
    }

    pub fn charge_count(&self) -> usize {
        self.law_count() * self.modifiers.len()
    }

    pub fn penalty_count(&self) -> usize {
        self.penalty_thresholds.len() + 1
    }

    /// The task graph this generator's labels live in.
    pub fn task_graph(&self) -> TaskGraph {
        TaskGraph::default_ljp(self.law_count(), self.charge_count(), self.penalty_count())
    }

    pub fn penalty_bucket(&self, score: u64) -> usize {
        self.penalty_thresholds.iter().filter(|&&t| score >= t).count()
    }
}

pub struct CorpusBundle {
    pub train: Vec<CaseRecord>,
    pub valid: Vec<CaseRecord>,
    pub test: Vec<CaseRecord>,
}

/// One sampled case before rendering.
struct Draft {
    name: usize,
    verb: usize,
    modifier: usize,
    item_a: usize,
    item_b: usize,
    value_a: u64,
    unit_a: usize,
    value_b: u64,
    unit_b: usize,
    place: usize,
}

impl Draft {
    fn sample(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Self {
        let item_a = rng.gen_range(0..spec.items.len());
        let mut item_b = rng.gen_range(0..spec.items.len() - 1);
        if item_b >= item_a {
            item_b += 1;
        }
        Draft {
            name: rng.gen_range(0..spec.names.len()),
            verb: rng.gen_range(0..spec.verbs.len()),
            modifier: rng.gen_range(0..spec.modifiers.len()),
            item_a,
            item_b,
            value_a: rng.gen_range(spec.value_range.0..=spec.value_range.1),
            unit_a: rng.gen_range(0..spec.units.len()),
            value_b: rng.gen_range(spec.value_range.0..=spec.value_range.1),
            unit_b: rng.gen_range(0..spec.units.len()),
            place: rng.gen_range(0..spec.places.len()),
        }
    }

    /// Severity-weighted score. With `swapped`, quantity A attaches to item B
    /// and vice versa.
    fn score(&self, spec: &CorpusSpec, swapped: bool) -> u64 {
        let sev_a = spec.items[self.item_a].severity;
        let sev_b = spec.items[self.item_b].severity;
        let mag_a = self.value_a * spec.units[self.unit_a].multiplier;
        let mag_b = self.value_b * spec.units[self.unit_b].multiplier;
        if swapped {
            sev_a * mag_b + sev_b * mag_a
        } else {
            sev_a * mag_a + sev_b * mag_b
        }
    }

    fn labels(&self, spec: &CorpusSpec, swapped: bool) -> BTreeMap<String, usize> {
        let law = spec.verbs[self.verb].1;
        let charge = law * spec.modifiers.len() + self.modifier;
        let penalty = spec.penalty_bucket(self.score(spec, swapped));
        [
            ("law".to_string(), law),
            ("charge".to_string(), charge),
            ("penalty".to_string(), penalty),
        ]
        .into_iter()
        .collect()
    }

    fn qty_token(&self, spec: &CorpusSpec, which: Qty) -> String {
        match which {
            Qty::A => format!("{}{}", self.value_a, spec.units[self.unit_a].token),
            Qty::B => format!("{}{}", self.value_b, spec.units[self.unit_b].token),
        }
    }
}

#[derive(Clone, Copy)]
enum Qty {
    A,
    B,
}

/// Adjacent layout: attachment is readable from token order.
/// `[name, modifier, verb, itemA, qtyA, and, itemB, qtyB, at, place]`
fn render_adjacent(spec: &CorpusSpec, d: &Draft) -> CaseRecord {
    let tokens: Vec<String> = vec![
        spec.names[d.name].clone(),
        spec.modifiers[d.modifier].clone(),
        spec.verbs[d.verb].0.clone(),
        spec.items[d.item_a].token.clone(),
        d.qty_token(spec, Qty::A),
        "and".into(),
        spec.items[d.item_b].token.clone(),
        d.qty_token(spec, Qty::B),
        "at".into(),
        spec.places[d.place].clone(),
    ];
    CaseRecord {
        tokens,
        numerals: vec![
            Numeral { pos: 4, value: d.value_a as i64, unit: spec.units[d.unit_a].token.clone() },
            Numeral { pos: 7, value: d.value_b as i64, unit: spec.units[d.unit_b].token.clone() },
        ],
        collocations: vec![(2, 3), (2, 6), (4, 3), (7, 6)],
        labels: d.labels(spec, false),
    }
}

/// Detached layout: quantities trail both items, so attachment exists only
/// in the collocations.
/// `[name, modifier, verb, itemA, and, itemB, weighing, qtyA, qtyB, at, place]`
fn render_detached(spec: &CorpusSpec, d: &Draft, swapped: bool) -> CaseRecord {
    let tokens: Vec<String> = vec![
        spec.names[d.name].clone(),
        spec.modifiers[d.modifier].clone(),
        spec.verbs[d.verb].0.clone(),
        spec.items[d.item_a].token.clone(),
        "and".into(),
        spec.items[d.item_b].token.clone(),
        "weighing".into(),
        d.qty_token(spec, Qty::A),
        d.qty_token(spec, Qty::B),
        "at".into(),
        spec.places[d.place].clone(),
    ];
    let (target_a, target_b) = if swapped { (5, 3) } else { (3, 5) };
    CaseRecord {
        tokens,
        numerals: vec![
            Numeral { pos: 7, value: d.value_a as i64, unit: spec.units[d.unit_a].token.clone() },
            Numeral { pos: 8, value: d.value_b as i64, unit: spec.units[d.unit_b].token.clone() },
        ],
        collocations: vec![(2, 3), (2, 5), (7, target_a), (8, target_b)],
        labels: d.labels(spec, swapped),
    }
}

/// Draw a draft whose normal and swapped attachments land in different
/// penalty buckets.
fn sample_contrast_draft(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Result<Draft> {
    for _ in 0..10_000 {
        let d = Draft::sample(spec, rng);
        if spec.items[d.item_a].severity == spec.items[d.item_b].severity {
            continue;
        }
        let normal = spec.penalty_bucket(d.score(spec, false));
        let swapped = spec.penalty_bucket(d.score(spec, true));
        if normal != swapped {
            return Ok(d);
        }
    }
    Err(Error::Spec(
        "could not sample a contrast pair with differing penalty buckets; \
         thresholds are too coarse for the item severities"
            .into(),
    ))
}

fn generate_split(spec: &CorpusSpec, count: usize, contrast: f64, rng: &mut ChaCha8Rng) -> Result<Vec<CaseRecord>> {
    let pairs = ((count as f64 * contrast) / 2.0).floor() as usize;
    let singles = count - 2 * pairs;
    let mut out = Vec::with_capacity(count);
    for _ in 0..pairs {
        let d = sample_contrast_draft(spec, rng)?;
        out.push(render_detached(spec, &d, false));
        out.push(render_detached(spec, &d, true));
    }
    for _ in 0..singles {
        let d = Draft::sample(spec, rng);
        out.push(render_adjacent(spec, &d));
    }
    Ok(out)
}

/// Deterministic under `spec.seed`: the same spec yields the same corpus.
/// Contrast pairs occupy the front of each split as consecutive records.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<CorpusBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(CorpusBundle {
        train: generate_split(spec, spec.train_cases, spec.train_contrast, &mut rng)?,
        valid: generate_split(spec, spec.valid_cases, spec.valid_contrast, &mut rng)?,
        test: generate_split(spec, spec.test_cases, spec.test_contrast, &mut rng)?,
    })
}
