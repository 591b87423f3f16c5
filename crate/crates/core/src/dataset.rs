//! Population-level dataset tuples: persona, activity, active categories,
//! preference description and preferred response.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::persona::{generate_schedule, PersonaProfile};
use crate::schema::{ActivityType, CategorySet, DatasetTuple, Decision, PreferenceCategory};
use crate::templates;
use crate::text::fnv1a;
use crate::user_sim::{targets, EpisodicMemory, UserBackend};

/// Build up to `per_persona` tuples for each persona from its schedule.
pub fn generate_dataset(
    personas: &[PersonaProfile],
    seed: u64,
    target_mix: &[f64; ActivityType::COUNT],
    per_persona: usize,
    user: &dyn UserBackend,
) -> Result<Vec<DatasetTuple>> {
    let per: Vec<Vec<DatasetTuple>> = personas
        .par_iter()
        .map(|p| persona_tuples(p, seed, target_mix, per_persona, user))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn persona_tuples(
    persona: &PersonaProfile,
    seed: u64,
    target_mix: &[f64; ActivityType::COUNT],
    per_persona: usize,
    user: &dyn UserBackend,
) -> Result<Vec<DatasetTuple>> {
    let week = generate_schedule(persona, seed, target_mix)?;
    let acts: Vec<_> = week.into_iter().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, format!("tuples:{}", persona.id).as_bytes()));
    let mut picks = index::sample(&mut rng, acts.len(), per_persona.min(acts.len())).into_vec();
    picks.sort_unstable();
    let memory = EpisodicMemory::new(1)?;
    let profile = &persona.preference_profile;
    let mut out = Vec::with_capacity(picks.len());
    for i in picks {
        let ctx = &acts[i];
        let t = ctx.activity_type;
        let target = targets(profile, t, ctx.period_index);
        let preferred = templates::render_response(&target, t);
        let j = user.judge(persona, &memory, ctx, Decision::Intervene, &target, &preferred)?;
        let mut active = j.active_categories;
        if active.is_empty() {
            active = strongest(&profile.weights);
        }
        let category_preferences: BTreeMap<PreferenceCategory, String> = active
            .iter()
            .map(|c| (c, templates::preference_sentence(c, target[c.index()], t)))
            .collect();
        let preference_description = if j.preference_text.trim().is_empty() {
            category_preferences.values().cloned().collect::<Vec<_>>().join(" ")
        } else {
            j.preference_text
        };
        out.push(DatasetTuple {
            persona_id: persona.id.clone(),
            demographics: persona.demographics.clone(),
            activity: ctx.clone(),
            active_categories: active,
            preference_description,
            category_preferences,
            preferred_response: j.preferred_response,
        });
    }
    Ok(out)
}

fn strongest(weights: &[f64; 5]) -> CategorySet {
    let k = (0..5)
        .max_by(|a, b| weights[*a].total_cmp(&weights[*b]).then(b.cmp(a)))
        .expect("five weights");
    [PreferenceCategory::ALL[k]].into_iter().collect()
}
