//! Simulation protocols: strategy comparison over persona pools, persona
//! scaling sweeps and long-horizon stability runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptation::{SessionState, Strategy};
use crate::codec;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricValues, MetricsReport};
use crate::model::{ActivationModel, ModelConfig};
use crate::persona::{generate_personas, generate_schedule, PersonaProfile, DEFAULT_MIX, TIME_SLOTS};
use crate::schema::{ActivityContext, ActivityType, InteractionRecord, Split};
use crate::steering::SteeringConfig;
use crate::templates::{self, TEMPLATES_PER_TYPE};
use crate::text::fnv1a;
use crate::user_sim::{reflect, targets, EpisodicMemory, UserBackend};

/// Opportunities per horizon window.
pub const HORIZON_WINDOW: u32 = 10;
/// Windows at the end of a horizon run used for the stability statistic.
pub const STABILITY_WINDOWS: usize = 25;
/// Upper bound on personas used to center the readout.
const CENTERING_PERSONAS: usize = 50;

fn d_personas() -> usize {
    1000
}
fn d_opportunities() -> u32 {
    100
}
fn d_periods() -> u32 {
    10
}
fn d_strategies() -> Vec<Strategy> {
    vec![Strategy::Static, Strategy::Icl, Strategy::Steering]
}
fn d_seen() -> f64 {
    0.75
}
fn d_seeds() -> Vec<u64> {
    vec![1]
}
fn d_last_k() -> usize {
    20
}
fn d_block() -> usize {
    10
}
fn d_mix() -> [f64; ActivityType::COUNT] {
    DEFAULT_MIX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "d_personas")]
    pub personas: usize,
    #[serde(default = "d_opportunities")]
    pub opportunities: u32,
    /// Reporting periods: an even partition of the opportunity sequence.
    #[serde(default = "d_periods")]
    pub periods: u32,
    #[serde(default = "d_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "d_seen")]
    pub seen_fraction: f64,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_last_k")]
    pub last_k: usize,
    #[serde(default = "d_block")]
    pub block_size: usize,
    #[serde(default = "d_mix")]
    pub target_mix: [f64; ActivityType::COUNT],
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub steering: SteeringConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            personas: d_personas(),
            opportunities: d_opportunities(),
            periods: d_periods(),
            strategies: d_strategies(),
            seen_fraction: d_seen(),
            seeds: d_seeds(),
            last_k: d_last_k(),
            block_size: d_block(),
            target_mix: d_mix(),
            model: ModelConfig::default(),
            steering: SteeringConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.personas == 0 {
            return Err(Error::validation("personas", "must be at least 1"));
        }
        if self.periods == 0 || self.opportunities == 0 || self.opportunities % self.periods != 0 {
            return Err(Error::validation(
                "opportunities",
                format!("{} is not divisible into {} periods", self.opportunities, self.periods),
            ));
        }
        if !(self.seen_fraction > 0.0 && self.seen_fraction < 1.0) {
            return Err(Error::validation("seen_fraction", "must lie strictly between 0 and 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::validation("strategies", "at least one strategy is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "at least one seed is required"));
        }
        self.model.validate()?;
        self.steering.validate()
    }

    /// First 12 hex digits of the SHA-256 of the canonical config encoding.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(codec::canonical_json(&v).as_bytes());
        hex::encode(digest)[..12].to_owned()
    }
}

/// Seeded 75/25-style split of each activity type's templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSplit {
    seen: Vec<bool>,
}

impl TemplateSplit {
    pub fn new(seed: u64, seen_fraction: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, b"template-split"));
        let per_type = ((TEMPLATES_PER_TYPE as f64 * seen_fraction).round() as usize)
            .clamp(1, TEMPLATES_PER_TYPE - 1);
        let mut seen = vec![false; templates::template_count() as usize];
        for t in ActivityType::ALL {
            let mut slots: Vec<usize> = (0..TEMPLATES_PER_TYPE).collect();
            slots.shuffle(&mut rng);
            for s in &slots[..per_type] {
                seen[templates::template_id(t, *s) as usize] = true;
            }
        }
        TemplateSplit { seen }
    }

    pub fn is_seen(&self, template_id: u32) -> bool {
        self.seen[template_id as usize]
    }

    pub fn templates(&self, t: ActivityType, split: Split) -> Vec<u32> {
        (0..TEMPLATES_PER_TYPE)
            .map(|s| templates::template_id(t, s))
            .filter(|id| match split {
                Split::Seen => self.is_seen(*id),
                Split::Unseen => !self.is_seen(*id),
                Split::All => true,
            })
            .collect()
    }
}

/// Mean ground-truth descriptor per (activity type, time slot) over a pool.
pub fn population_prior(personas: &[PersonaProfile]) -> Result<Vec<[f64; 5]>> {
    if personas.is_empty() {
        return Err(Error::invalid("population prior needs at least one persona"));
    }
    let n = personas.len() as f64;
    let mut table = Vec::with_capacity(ActivityType::COUNT * TIME_SLOTS as usize);
    for t in ActivityType::ALL {
        for slot in 0..TIME_SLOTS {
            let mut sum = [0.0; 5];
            for p in personas {
                let tg = targets(&p.preference_profile, t, slot);
                sum.iter_mut().zip(tg).for_each(|(s, x)| *s += x);
            }
            table.push(sum.map(|s| s / n));
        }
    }
    Ok(table)
}

/// Build the population model: readout centered over seen-template
/// descriptions and a prior table from `calibration` personas.
pub fn calibrated_model(
    config: &ModelConfig,
    calibration: &[PersonaProfile],
    split: &TemplateSplit,
) -> Result<ActivationModel> {
    let mut model = ActivationModel::new(config.clone())?;
    let mut texts = Vec::new();
    for p in calibration.iter().take(CENTERING_PERSONAS) {
        let d = &p.demographics;
        let trait_word = d.traits.first().map_or("busy", String::as_str);
        for id in 0..templates::template_count() {
            if split.is_seen(id) {
                texts.push(templates::render_description(id, &d.occupation_category, trait_word));
            }
        }
    }
    model.calibrate_centers(texts.iter().map(String::as_str))?;
    model.set_prior(population_prior(calibration)?)?;
    Ok(model)
}

/// Draw a persona's opportunity sequence from its weekly schedule.
pub fn opportunities(
    persona: &PersonaProfile,
    seed: u64,
    config: &ExperimentConfig,
    split: &TemplateSplit,
) -> Result<Vec<(Split, ActivityContext)>> {
    let week = generate_schedule(persona, seed, &config.target_mix)?;
    let acts: Vec<&ActivityContext> = week.iter().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, format!("opps:{}", persona.id).as_bytes()));
    let d = &persona.demographics;
    let mut out = Vec::with_capacity(config.opportunities as usize);
    for _ in 0..config.opportunities {
        let base = *acts.choose(&mut rng).expect("schedules are non-empty");
        let s = if rng.random_bool(config.seen_fraction) { Split::Seen } else { Split::Unseen };
        let id = *split
            .templates(base.activity_type, s)
            .choose(&mut rng)
            .expect("every type has templates on both sides");
        let trait_word = d.traits.choose(&mut rng).map_or("busy", String::as_str);
        let mut ctx = base.clone();
        ctx.template_id = id;
        ctx.description = templates::render_description(id, &d.occupation_category, trait_word);
        out.push((s, ctx));
    }
    Ok(out)
}

/// Records of one persona under one strategy, plus strength bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaRun {
    pub records: Vec<InteractionRecord>,
    pub max_alpha: f64,
    pub alpha_violations: usize,
    pub final_alphas: [f64; 5],
}

/// Run one persona through its opportunity sequence.
#[allow(clippy::too_many_arguments)]
pub fn run_persona(
    model: &ActivationModel,
    persona: &PersonaProfile,
    contexts: &[(Split, ActivityContext)],
    strategy: Strategy,
    config: &ExperimentConfig,
    user: &dyn UserBackend,
) -> Result<PersonaRun> {
    let mut session = SessionState::new(persona.id.clone(), strategy, model, config.steering)?;
    let mut memory = EpisodicMemory::new(config.block_size)?;
    let k = contexts.len() as u32;
    let mut max_alpha: f64 = 0.0;
    let mut alpha_violations = 0;
    let mut block_start = 0;
    for (i, (split, ctx)) in contexts.iter().enumerate() {
        let resp = session.respond(model, ctx)?;
        let j = user.judge(persona, &memory, ctx, resp.decision, &resp.descriptor, &resp.response_text)?;
        let record = InteractionRecord {
            persona_id: persona.id.clone(),
            opportunity_index: i as u32,
            period_index: i as u32 * config.periods / k,
            split: *split,
            activity: ctx.clone(),
            assistant_decision: resp.decision,
            user_welcome: j.welcome,
            response_text: resp.response_text,
            response_descriptor: resp.descriptor,
            active_categories_true: j.active_categories,
            active_categories_pred: resp.predicted_categories,
            preference_text: j.preference_text,
            generated_preference_text: resp.generated_preference_text,
            iqa_ratings: Some(j.iqa_ratings),
            feedback: j.feedback,
        };
        session = session.observe(record, model)?;
        for a in session.alphas() {
            max_alpha = max_alpha.max(a);
            if !(0.0..=config.steering.alpha_max).contains(&a) {
                alpha_violations += 1;
            }
        }
        if session.history.len() - block_start == config.block_size {
            memory = reflect(&memory, &session.history[block_start..])?;
            block_start = session.history.len();
        }
    }
    Ok(PersonaRun {
        final_alphas: session.alphas(),
        records: session.history,
        max_alpha,
        alpha_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub reports: Vec<MetricsReport>,
    pub max_alpha: f64,
    pub alpha_violations: usize,
}

impl StrategyReport {
    pub fn report(&self, split: Split) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.split == split)
    }
}

/// All output of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub strategies: Vec<StrategyReport>,
    #[serde(skip)]
    pub records: BTreeMap<Strategy, Vec<InteractionRecord>>,
}

impl SeedRun {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }
}

fn split_reports(records: &[InteractionRecord], config: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for split in [Split::Seen, Split::Unseen, Split::All] {
        match metrics::aggregate(records, config.periods, split, config.last_k) {
            Ok(r) => out.push(r),
            Err(_) if split != Split::All => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Evaluate every configured strategy on `eval` personas with a model
/// calibrated on `calibration` personas.
pub fn evaluate(
    config: &ExperimentConfig,
    seed: u64,
    eval: &[PersonaProfile],
    calibration: &[PersonaProfile],
    user: &dyn UserBackend,
) -> Result<SeedRun> {
    let split = TemplateSplit::new(seed, config.seen_fraction);
    let model = calibrated_model(&config.model, calibration, &split)?;
    let contexts: Vec<Vec<(Split, ActivityContext)>> = eval
        .par_iter()
        .map(|p| opportunities(p, seed, config, &split))
        .collect::<Result<_>>()?;
    let mut strategies = Vec::new();
    let mut records = BTreeMap::new();
    for &strategy in &config.strategies {
        let runs: Vec<PersonaRun> = eval
            .par_iter()
            .zip(contexts.par_iter())
            .map(|(p, ctx)| run_persona(&model, p, ctx, strategy, config, user))
            .collect::<Result<_>>()?;
        let max_alpha = runs.iter().map(|r| r.max_alpha).fold(0.0, f64::max);
        let alpha_violations = runs.iter().map(|r| r.alpha_violations).sum();
        let recs: Vec<InteractionRecord> = runs.into_iter().flat_map(|r| r.records).collect();
        strategies.push(StrategyReport {
            strategy,
            reports: split_reports(&recs, config)?,
            max_alpha,
            alpha_violations,
        });
        records.insert(strategy, recs);
    }
    Ok(SeedRun {
        seed,
        strategies,
        records,
    })
}

/// The comparison protocol for one seed: the pool both calibrates the
/// population model and is evaluated.
pub fn run_seed(config: &ExperimentConfig, seed: u64, user: &dyn UserBackend) -> Result<SeedRun> {
    config.validate()?;
    let pool = generate_personas(config.personas, seed)?;
    evaluate(config, seed, &pool, &pool, user)
}

pub fn run(config: &ExperimentConfig, user: &dyn UserBackend) -> Result<Vec<SeedRun>> {
    config.seeds.iter().map(|s| run_seed(config, *s, user)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub count: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub split: Split,
    pub values: MetricValues,
}

/// Recalibrate the population prior on pools of increasing size and
/// evaluate a fixed pool of `base.personas` personas.
pub fn scaling_sweep(
    base: &ExperimentConfig,
    counts: &[usize],
    user: &dyn UserBackend,
) -> Result<Vec<ScalingRow>> {
    base.validate()?;
    if counts.is_empty() || counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] == 0 {
        return Err(Error::invalid("persona counts must be positive and strictly ascending"));
    }
    let largest = *counts.last().expect("non-empty");
    let mut rows = Vec::new();
    for &seed in &base.seeds {
        let eval = generate_personas(base.personas, seed)?;
        let calibration = generate_personas(largest, seed ^ 0xca1b)?;
        for &count in counts {
            let run = evaluate(base, seed, &eval, &calibration[..count], user)?;
            for s in &run.strategies {
                for split in [Split::Seen, Split::Unseen] {
                    if let Some(r) = s.report(split) {
                        rows.push(ScalingRow {
                            count,
                            seed,
                            strategy: s.strategy,
                            split,
                            values: r.window,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Per-window series of a long steering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSeries {
    pub seed: u64,
    pub windows: Vec<MetricValues>,
    /// Max minus min TAI window mean over the last windows.
    pub tai_spread: f64,
    pub max_alpha: f64,
    pub alpha_violations: usize,
}

/// Windowed metrics for a steering run of `config.opportunities`
/// opportunities per persona.
pub fn horizon_run(config: &ExperimentConfig, seed: u64, user: &dyn UserBackend) -> Result<HorizonSeries> {
    let mut cfg = config.clone();
    cfg.strategies = vec![Strategy::Steering];
    if cfg.opportunities % HORIZON_WINDOW != 0 {
        return Err(Error::validation(
            "opportunities",
            format!("must be a multiple of {HORIZON_WINDOW}"),
        ));
    }
    cfg.periods = cfg.opportunities / HORIZON_WINDOW;
    cfg.validate()?;
    let run = run_seed(&cfg, seed, user)?;
    let s = run.strategy(Strategy::Steering).expect("steering was run");
    let all = s.report(Split::All).expect("all split is always reported");
    let windows = all.per_period.clone();
    let tail: Vec<f64> = windows
        .iter()
        .rev()
        .take(STABILITY_WINDOWS)
        .filter_map(|w| w.tai)
        .collect();
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HorizonSeries {
        seed,
        windows,
        tai_spread: if tail.is_empty() { 0.0 } else { max - min },
        max_alpha: s.max_alpha,
        alpha_violations: s.alpha_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub template_version: String,
    pub config: ExperimentConfig,
    pub records: usize,
}

/// Write one seed's outputs under `<root>/<config-hash>-s<seed>/`.
pub fn write_run(root: &Path, config: &ExperimentConfig, run: &SeedRun, with_records: bool) -> Result<PathBuf> {
    let dir = root.join(format!("{}-s{}", config.hash(), run.seed));
    let manifest = Manifest {
        config_hash: config.hash(),
        seed: run.seed,
        template_version: templates::TEMPLATE_VERSION.to_owned(),
        config: config.clone(),
        records: run.records.values().map(Vec::len).sum(),
    };
    codec::atomic_write(&dir.join("manifest.json"), codec::to_line(&manifest).as_bytes())?;
    codec::atomic_write(&dir.join("report.json"), codec::to_line(run).as_bytes())?;
    for s in &run.strategies {
        let csv = metrics::to_csv(&s.reports);
        codec::atomic_write(&dir.join(format!("metrics_{}.csv", s.strategy)), csv.as_bytes())?;
    }
    if with_records {
        for (strategy, recs) in &run.records {
            codec::atomic_write(
                &dir.join(format!("records_{strategy}.jsonl")),
                codec::encode_lines(recs).as_bytes(),
            )?;
        }
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_split_keeps_both_sides_per_type() {
        let s = TemplateSplit::new(3, 0.75);
        for t in ActivityType::ALL {
            assert_eq!(s.templates(t, Split::Seen).len(), 6);
            assert_eq!(s.templates(t, Split::Unseen).len(), 2);
        }
        assert_eq!(s, TemplateSplit::new(3, 0.75));
    }

    #[test]
    fn config_validation_and_hash() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        let h = c.hash();
        assert_eq!(h.len(), 12);
        c.opportunities = 105;
        assert!(c.validate().is_err());
        assert_ne!(c.hash(), h);
    }
}
