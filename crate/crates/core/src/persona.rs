//! Seeded persona pools and week-long activity schedules.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::schema::{
    ActivityContext, ActivityType, ContextOverride, Demographics, PreferenceProfile,
    PreferenceRules,
};
use crate::templates::{self, TEMPLATES_PER_TYPE};
use crate::text::fnv1a;

/// Waking day starts at 06:00.
pub const WAKE_START_MINUTE: u32 = 6 * 60;
/// Sixteen waking hours.
pub const WAKING_MINUTES: u32 = 16 * 60;
/// Number of time-of-day slots the waking day is divided into.
pub const TIME_SLOTS: u32 = 10;
pub const DAYS: usize = 7;
const GRID_MINUTES: u32 = 5;

/// Concentration of the per-persona Dirichlet jitter around the target mix.
const MIX_CONCENTRATION: f64 = 20.0;
const MIX_JITTER: f64 = 0.3;

pub const AGE_RANGES: [(&str, f64); 6] = [
    ("18-24", 0.12),
    ("25-34", 0.18),
    ("35-44", 0.17),
    ("45-54", 0.16),
    ("55-64", 0.16),
    ("65+", 0.21),
];

pub const GENDERS: [(&str, f64); 3] = [("female", 0.51), ("male", 0.47), ("nonbinary", 0.02)];

pub const OCCUPATIONS: [(&str, f64); 12] = [
    ("office worker", 0.14),
    ("nurse", 0.08),
    ("teacher", 0.08),
    ("software engineer", 0.07),
    ("retail clerk", 0.09),
    ("construction worker", 0.07),
    ("student", 0.10),
    ("retiree", 0.13),
    ("small business owner", 0.06),
    ("driver", 0.06),
    ("chef", 0.05),
    ("homemaker", 0.07),
];

pub const EDUCATIONS: [(&str, f64); 5] = [
    ("less than high school", 0.08),
    ("high school", 0.28),
    ("some college", 0.20),
    ("bachelor degree", 0.30),
    ("graduate degree", 0.14),
];

pub const REGIONS: [(&str, f64); 4] = [
    ("northeast", 0.17),
    ("midwest", 0.21),
    ("south", 0.38),
    ("west", 0.24),
];

pub const TRAITS: [&str; 20] = [
    "cheerful", "organized", "curious", "reserved", "energetic", "patient", "anxious",
    "ambitious", "easygoing", "meticulous", "creative", "practical", "sociable", "independent",
    "frugal", "spontaneous", "disciplined", "forgetful", "calm", "talkative",
];

/// Default activity mix, indexed like [`ActivityType::ALL`].
pub const DEFAULT_MIX: [f64; ActivityType::COUNT] =
    [0.236, 0.172, 0.141, 0.101, 0.090, 0.080, 0.110, 0.070];

/// A synthetic persona with its hidden ground-truth preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub id: String,
    #[serde(flatten)]
    pub demographics: Demographics,
    pub preference_profile: PreferenceProfile,
}

/// Time-of-day slot for an activity starting at `start_minute`.
pub fn time_slot(start_minute: u32) -> u32 {
    let offset = start_minute.saturating_sub(WAKE_START_MINUTE);
    (offset * TIME_SLOTS / WAKING_MINUTES).min(TIME_SLOTS - 1)
}

fn pick<'a, R: Rng>(rng: &mut R, table: &[(&'a str, f64)]) -> &'a str {
    let dist = WeightedIndex::new(table.iter().map(|(_, w)| *w)).expect("static weights");
    table[dist.sample(rng)].0
}

fn persona_rng(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv1a(seed, key.as_bytes()))
}

/// Sample ground-truth preferences.
pub fn sample_preferences<R: Rng>(rng: &mut R) -> PreferenceProfile {
    let weights = std::array::from_fn(|_| rng.random::<f64>());
    let n_slots = rng.random_range(2..=7);
    let mut acceptable_periods: Vec<u32> =
        index::sample(rng, TIME_SLOTS as usize, n_slots)
            .into_iter()
            .map(|i| i as u32)
            .collect();
    acceptable_periods.sort_unstable();
    let ask_first = rng.random_bool(0.5);
    let autonomy_threshold = *[20.0, 50.0, 100.0, 200.0].choose(rng).expect("non-empty");
    let brevity = rng.random_range(1..=3);
    let mut types = ActivityType::ALL;
    types.shuffle(rng);
    let domain_ranking = types[..3].to_vec();
    types.shuffle(rng);
    let n_overrides = rng.random_range(0..=2);
    let context_overrides = types[..n_overrides]
        .iter()
        .map(|t| ContextOverride {
            activity_type: *t,
            welcome: rng.random_bool(0.5),
        })
        .collect();
    PreferenceProfile {
        weights,
        rules: PreferenceRules {
            acceptable_periods,
            ask_first,
            autonomy_threshold,
            brevity,
            domain_ranking,
            context_overrides,
        },
    }
}

fn sample_persona(seed: u64, i: usize) -> PersonaProfile {
    let id = format!("P{i:04}");
    let mut rng = persona_rng(seed, &format!("persona:{id}"));
    let n_traits = rng.random_range(2..=5);
    let traits = TRAITS
        .choose_multiple(&mut rng, n_traits)
        .map(|t| (*t).to_owned())
        .collect();
    let demographics = Demographics {
        age_range: pick(&mut rng, &AGE_RANGES).to_owned(),
        gender: pick(&mut rng, &GENDERS).to_owned(),
        occupation_category: pick(&mut rng, &OCCUPATIONS).to_owned(),
        education: pick(&mut rng, &EDUCATIONS).to_owned(),
        region: pick(&mut rng, &REGIONS).to_owned(),
        traits,
    };
    PersonaProfile {
        id,
        demographics,
        preference_profile: sample_preferences(&mut rng),
    }
}

/// Generate `count` personas. Persona `i` depends only on `(seed, i)`, so
/// smaller pools are prefixes of larger ones.
pub fn generate_personas(count: usize, seed: u64) -> Result<Vec<PersonaProfile>> {
    if count == 0 {
        return Err(Error::invalid("persona count must be at least 1"));
    }
    Ok((0..count).map(|i| sample_persona(seed, i)).collect())
}

fn check_mix(mix: &[f64; ActivityType::COUNT]) -> Result<()> {
    if mix.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("target mix entries must be finite and non-negative"));
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("target mix sums to {total}, expected 1")));
    }
    Ok(())
}

fn persona_mix<R: Rng>(rng: &mut R, target: &[f64; ActivityType::COUNT]) -> [f64; ActivityType::COUNT] {
    let mut draw = [0.0; ActivityType::COUNT];
    for (d, t) in draw.iter_mut().zip(target) {
        if *t > 0.0 {
            *d = Gamma::new(MIX_CONCENTRATION * t, 1.0)
                .expect("positive shape")
                .sample(rng);
        }
    }
    let total: f64 = draw.iter().sum();
    std::array::from_fn(|i| {
        let jitter = if total > 0.0 { draw[i] / total } else { target[i] };
        (1.0 - MIX_JITTER) * target[i] + MIX_JITTER * jitter
    })
}

/// Seven days of non-overlapping activities covering the waking day.
pub fn generate_schedule(
    persona: &PersonaProfile,
    seed: u64,
    target_mix: &[f64; ActivityType::COUNT],
) -> Result<Vec<Vec<ActivityContext>>> {
    check_mix(target_mix)?;
    let mut rng = persona_rng(seed, &format!("schedule:{}", persona.id));
    let mix = persona_mix(&mut rng, target_mix);
    let type_dist = WeightedIndex::new(mix).map_err(|e| Error::invalid(e.to_string()))?;
    let units = (WAKING_MINUTES / GRID_MINUTES) as usize;
    let d = &persona.demographics;
    let mut week = Vec::with_capacity(DAYS);
    for day in 0..DAYS {
        let n = rng.random_range(8..=14);
        let mut cuts: Vec<usize> = index::sample(&mut rng, units - 1, n - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.push(units);
        let mut start = 0;
        let mut acts = Vec::with_capacity(n);
        for end in cuts {
            let t = ActivityType::ALL[type_dist.sample(&mut rng)];
            let slot = rng.random_range(0..TEMPLATES_PER_TYPE);
            let id = templates::template_id(t, slot);
            let trait_word = d.traits.choose(&mut rng).map_or("busy", String::as_str);
            let start_minute = WAKE_START_MINUTE + start as u32 * GRID_MINUTES;
            acts.push(ActivityContext {
                activity_type: t,
                day: day as u8,
                period_index: time_slot(start_minute),
                start_minute,
                duration_minutes: (end - start) as u32 * GRID_MINUTES,
                description: templates::render_description(id, &d.occupation_category, trait_word),
                template_id: id,
            });
            start = end;
        }
        week.push(acts);
    }
    Ok(week)
}

/// One persona's week, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSchedule {
    pub persona_id: String,
    pub days: Vec<Vec<ActivityContext>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePool {
    pub seed: u64,
    pub personas: Vec<PersonaProfile>,
    pub schedules: BTreeMap<String, Vec<Vec<ActivityContext>>>,
}

impl SchedulePool {
    pub fn generate(
        personas: Vec<PersonaProfile>,
        seed: u64,
        target_mix: &[f64; ActivityType::COUNT],
    ) -> Result<Self> {
        let mut schedules = BTreeMap::new();
        for p in &personas {
            schedules.insert(p.id.clone(), generate_schedule(p, seed, target_mix)?);
        }
        Ok(SchedulePool {
            seed,
            personas,
            schedules,
        })
    }

    pub fn schedule_lines(&self) -> Vec<PersonaSchedule> {
        self.schedules
            .iter()
            .map(|(id, days)| PersonaSchedule {
                persona_id: id.clone(),
                days: days.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub activity_type: ActivityType,
    pub share: f64,
    pub target: f64,
    /// Absolute deviation in percentage points.
    pub deviation_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub shares: Vec<TypeShare>,
    pub max_deviation_pp: f64,
    pub tolerance_pp: f64,
    pub pass: bool,
}

impl DistributionReport {
    pub fn share(&self, t: ActivityType) -> f64 {
        self.shares[t.index()].share
    }
}

/// Compare per-type time shares across all schedules with `target_mix`.
pub fn validate_distribution<'a>(
    schedules: impl IntoIterator<Item = &'a Vec<Vec<ActivityContext>>>,
    target_mix: &[f64; ActivityType::COUNT],
    tolerance_pp: f64,
) -> Result<DistributionReport> {
    let mut minutes = [0u64; ActivityType::COUNT];
    for week in schedules {
        for a in week.iter().flatten() {
            minutes[a.activity_type.index()] += u64::from(a.duration_minutes);
        }
    }
    let total: u64 = minutes.iter().sum();
    if total == 0 {
        return Err(Error::invalid("schedule pool is empty"));
    }
    let shares: Vec<TypeShare> = ActivityType::ALL
        .iter()
        .map(|t| {
            let share = minutes[t.index()] as f64 / total as f64;
            let target = target_mix[t.index()];
            TypeShare {
                activity_type: *t,
                share,
                target,
                deviation_pp: (share - target).abs() * 100.0,
            }
        })
        .collect();
    let max_deviation_pp = shares.iter().map(|s| s.deviation_pp).fold(0.0, f64::max);
    Ok(DistributionReport {
        shares,
        max_deviation_pp,
        tolerance_pp,
        pass: max_deviation_pp <= tolerance_pp,
    })
}

/// Persona line as accepted by [`import_personas`]: the preference profile
/// may be absent.
#[derive(Deserialize)]
struct ImportedPersona {
    id: String,
    #[serde(flatten)]
    demographics: Demographics,
    preference_profile: Option<PreferenceProfile>,
}

fn check_field(id: &str, field: &str, value: &str, allowed: &[(&str, f64)]) -> Result<()> {
    if allowed.iter().any(|(v, _)| *v == value) {
        Ok(())
    } else {
        Err(Error::validation(
            format!("{id}.{field}"),
            format!("unknown value `{value}`"),
        ))
    }
}

/// Read personas from a line-delimited file, synthesizing preference
/// profiles deterministically from `(id, seed)` where absent.
pub fn import_personas(path: &Path, seed: u64) -> Result<Vec<PersonaProfile>> {
    let raw: Vec<ImportedPersona> = codec::read_lines(path)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for p in raw {
        if !seen.insert(p.id.clone()) {
            return Err(Error::validation("id", format!("duplicate persona id `{}`", p.id)));
        }
        let d = &p.demographics;
        check_field(&p.id, "age_range", &d.age_range, &AGE_RANGES)?;
        check_field(&p.id, "gender", &d.gender, &GENDERS)?;
        check_field(&p.id, "occupation_category", &d.occupation_category, &OCCUPATIONS)?;
        check_field(&p.id, "education", &d.education, &EDUCATIONS)?;
        check_field(&p.id, "region", &d.region, &REGIONS)?;
        if !(2..=5).contains(&d.traits.len()) {
            return Err(Error::validation(
                format!("{}.traits", p.id),
                format!("{} traits, expected 2 to 5", d.traits.len()),
            ));
        }
        let preference_profile = match p.preference_profile {
            Some(pp) => {
                pp.validate(TIME_SLOTS)?;
                pp
            }
            None => sample_preferences(&mut persona_rng(seed, &format!("imported:{}", p.id))),
        };
        out.push(PersonaProfile {
            id: p.id,
            demographics: p.demographics,
            preference_profile,
        });
    }
    Ok(out)
}
