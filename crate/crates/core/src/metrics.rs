//! Interaction metrics: timing agreement (TAI), category F1 (CAS),
//! preference-summary cosine (PSC) and normalized questionnaire score (IQA).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{CategorySet, InteractionRecord, IqaRatings, PreferenceCategory, Split, LIKERT_MAX};
use crate::text::{fnv1a, tokenize, Lexicon, Pole};

pub const EMBED_DIM: usize = 64;
/// Coordinates `0..10` are reserved for (category, pole) keyword counts.
const DEDICATED: usize = 2 * PreferenceCategory::COUNT;
const EMBED_SEED: u64 = 0x5eed_7e47;

/// Fraction of records whose decision matches the user's welcomeness.
pub fn tai(records: &[InteractionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("TAI of an empty record list"));
    }
    let agree = records.iter().filter(|r| r.agrees()).count();
    Ok(agree as f64 / records.len() as f64)
}

/// F1 between predicted and true category sets.
pub fn cas(predicted: CategorySet, truth: CategorySet) -> f64 {
    match (predicted.is_empty(), truth.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let hit = predicted.intersection(truth).len() as f64;
            2.0 * hit / (predicted.len() + truth.len()) as f64
        }
    }
}

/// Deterministic bag-of-tokens embedding. Lexicon keywords count toward a
/// dedicated coordinate per (category, pole); other tokens hash into the
/// remaining buckets.
#[derive(Debug, Clone, Default)]
pub struct Embedder {
    lexicon: Lexicon,
}

impl Embedder {
    pub fn new(lexicon: Lexicon) -> Self {
        Embedder { lexicon }
    }

    /// Bucket a token lands in.
    pub fn bucket(&self, token: &str) -> usize {
        match self.lexicon.lookup(token) {
            Some(e) => 2 * e.category.index() + usize::from(e.pole == Pole::Low),
            None => DEDICATED + (fnv1a(EMBED_SEED, token.as_bytes()) % (EMBED_DIM - DEDICATED) as u64) as usize,
        }
    }

    pub fn embed(&self, text: &str) -> Result<[f64; EMBED_DIM]> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut v = [0.0; EMBED_DIM];
        for t in &tokens {
            v[self.bucket(t)] += 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        Ok(v)
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let (x, y) = (self.embed(a)?, self.embed(b)?);
        Ok(x.iter().zip(&y).map(|(p, q)| p * q).sum())
    }
}

/// Embedding under the default lexicon.
pub fn embed(text: &str) -> Result<[f64; EMBED_DIM]> {
    Embedder::default().embed(text)
}

/// Cosine similarity of generated and reference preference descriptions.
pub fn psc(generated: &str, reference: &str) -> Result<f64> {
    Embedder::default().similarity(generated, reference)
}

/// Mean of `(r - 1) / 4` over the five items.
pub fn iqa(ratings: &IqaRatings) -> Result<f64> {
    if let Some(r) = ratings.iter().find(|r| !(1..=LIKERT_MAX).contains(r)) {
        return Err(Error::invalid(format!("IQA rating {r} outside 1..=5")));
    }
    let sum: f64 = ratings.iter().map(|r| f64::from(r - 1) / 4.0).sum();
    Ok(sum / ratings.len() as f64)
}

/// Metric means over a group of records. PSC and IQA average only over
/// records that carry the needed fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub n: usize,
    pub cas: Option<f64>,
    pub psc: Option<f64>,
    pub tai: Option<f64>,
    pub iqa: Option<f64>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    agree: usize,
    cas: f64,
    psc: (f64, usize),
    iqa: (f64, usize),
}

impl Acc {
    fn add(&mut self, r: &InteractionRecord, embedder: &Embedder) {
        self.n += 1;
        self.agree += usize::from(r.agrees());
        self.cas += cas(r.active_categories_pred, r.active_categories_true);
        if let Ok(s) = embedder.similarity(&r.generated_preference_text, &r.preference_text) {
            self.psc.0 += s;
            self.psc.1 += 1;
        }
        if let Some(Ok(q)) = r.iqa_ratings.as_ref().map(iqa) {
            self.iqa.0 += q;
            self.iqa.1 += 1;
        }
    }

    fn values(&self) -> MetricValues {
        let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        MetricValues {
            n: self.n,
            cas: mean((self.cas, self.n)),
            psc: mean(self.psc),
            tai: mean((self.agree as f64, self.n)),
            iqa: mean(self.iqa),
        }
    }
}

fn values_of<'a>(records: impl IntoIterator<Item = &'a InteractionRecord>, embedder: &Embedder) -> MetricValues {
    let mut acc = Acc::default();
    records.into_iter().for_each(|r| acc.add(r, embedder));
    acc.values()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub overall: MetricValues,
    pub per_period: Vec<MetricValues>,
    /// Means over each persona's last `last_k` opportunities.
    pub last_k: usize,
    pub window: MetricValues,
}

impl MetricsReport {
    pub fn n_interactions(&self) -> usize {
        self.overall.n
    }
}

fn in_split(r: &InteractionRecord, split: Split) -> bool {
    split == Split::All || r.split == split
}

/// Aggregate records of one split into overall, per-period and last-K
/// window values.
pub fn aggregate(
    records: &[InteractionRecord],
    period_count: u32,
    split: Split,
    last_k: usize,
) -> Result<MetricsReport> {
    let embedder = Embedder::default();
    let selected: Vec<&InteractionRecord> = records.iter().filter(|r| in_split(r, split)).collect();
    if selected.is_empty() {
        return Err(Error::invalid(format!("no records in split {split:?}")));
    }
    if let Some(r) = selected.iter().find(|r| r.period_index >= period_count) {
        return Err(Error::invalid(format!(
            "record period {} outside 0..{period_count}",
            r.period_index
        )));
    }
    let mut periods: Vec<Acc> = (0..period_count).map(|_| Acc::default()).collect();
    for r in &selected {
        periods[r.period_index as usize].add(r, &embedder);
    }
    // A persona's window is its last `last_k` opportunities overall; the
    // split filter applies within the window.
    let mut horizon: BTreeMap<&str, u32> = BTreeMap::new();
    for r in records {
        let e = horizon.entry(r.persona_id.as_str()).or_insert(0);
        *e = (*e).max(r.opportunity_index + 1);
    }
    let window = values_of(
        selected.iter().copied().filter(|r| {
            let end = horizon[r.persona_id.as_str()];
            r.opportunity_index as usize + last_k >= end as usize
        }),
        &embedder,
    );
    Ok(MetricsReport {
        split,
        overall: values_of(selected.iter().copied(), &embedder),
        per_period: periods.iter().map(Acc::values).collect(),
        last_k,
        window,
    })
}

pub const CSV_HEADER: &str = "split,period,cas,psc,tai,iqa,n";

fn split_key(s: Split) -> &'static str {
    match s {
        Split::Seen => "seen",
        Split::Unseen => "unseen",
        Split::All => "all",
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_row(split: Split, period: &str, v: &MetricValues) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        split_key(split),
        period,
        cell(v.cas),
        cell(v.psc),
        cell(v.tai),
        cell(v.iqa),
        v.n
    )
}

/// Flat table: one row per period, then `all` and the `last<K>` window.
pub fn to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for (p, v) in r.per_period.iter().enumerate() {
            out.push_str(&csv_row(r.split, &p.to_string(), v));
            out.push('\n');
        }
        out.push_str(&csv_row(r.split, "all", &r.overall));
        out.push('\n');
        out.push_str(&csv_row(r.split, &format!("last{}", r.last_k), &r.window));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use PreferenceCategory::*;

    fn set(cs: &[PreferenceCategory]) -> CategorySet {
        cs.iter().copied().collect()
    }

    #[test]
    fn cas_examples() {
        assert_eq!(cas(set(&[Scheduling, CommunicationStyle]), set(&[Scheduling, Autonomy])), 0.5);
        assert_eq!(cas(set(&[Autonomy]), set(&[Autonomy])), 1.0);
        assert_eq!(cas(set(&[]), set(&[Scheduling])), 0.0);
        assert_eq!(cas(set(&[]), set(&[])), 1.0);
    }

    #[test]
    fn iqa_examples() {
        assert_eq!(iqa(&[5; 5]).unwrap(), 1.0);
        assert_eq!(iqa(&[1; 5]).unwrap(), 0.0);
        assert_eq!(iqa(&[3; 5]).unwrap(), 0.5);
        assert!(iqa(&[3, 3, 6, 3, 3]).is_err());
    }

    #[test]
    fn embedding_is_normalized_and_order_free() {
        let a = embed("keep it brief please").unwrap();
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-9);
        assert_eq!(a, embed("please brief it keep").unwrap());
        assert!(embed("  ").is_err());
        assert!((psc("brief", "concise").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psc("brief", "detailed").unwrap(), 0.0);
    }
}
