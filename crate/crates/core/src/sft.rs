//! Two-phase supervised fine-tuning export.
//!
//! Phase 1 pairs each input with a single active category and its
//! preference sentence. Phase 2 pairs it with the full category set,
//! preference description and preferred response.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::Result;
use crate::schema::{CategorySet, DatasetTuple, PreferenceCategory};

pub const INPUT_TEMPLATE_VERSION: &str = "sft-input-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Example {
    pub persona_id: String,
    pub input: String,
    pub category: PreferenceCategory,
    pub label: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Target {
    pub active_categories: CategorySet,
    pub preference_description: String,
    pub preferred_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Example {
    pub persona_id: String,
    pub input: String,
    pub target: Phase2Target,
    pub tuple: DatasetTuple,
}

fn clock(minute: u32) -> String {
    let (h, m) = (minute / 60, minute % 60);
    let (h12, suffix) = match h {
        0 => (12, "AM"),
        1..=11 => (h, "AM"),
        12 => (12, "PM"),
        _ => (h - 12, "PM"),
    };
    format!("{h12}:{m:02} {suffix}")
}

/// Model input for a tuple: persona and activity, no preference content.
pub fn render_input(t: &DatasetTuple) -> String {
    let d = &t.demographics;
    let a = &t.activity;
    format!(
        "Persona {}: age {}, {}, {}, {}, {} region. Traits: {}.\nActivity (day {}, {} to {}): {}",
        t.persona_id,
        d.age_range,
        d.gender,
        d.occupation_category,
        d.education,
        d.region,
        d.traits.join(", "),
        a.day,
        clock(a.start_minute),
        clock(a.start_minute + a.duration_minutes),
        a.description
    )
}

pub fn phase1_examples(tuples: &[DatasetTuple]) -> Result<Vec<Phase1Example>> {
    let mut out = Vec::new();
    for t in tuples {
        t.validate()?;
        let input = render_input(t);
        for c in t.active_categories.iter() {
            let target = t
                .category_preferences
                .get(&c)
                .cloned()
                .unwrap_or_else(|| t.preference_description.clone());
            out.push(Phase1Example {
                persona_id: t.persona_id.clone(),
                input: input.clone(),
                category: c,
                label: c.label().to_owned(),
                target,
            });
        }
    }
    Ok(out)
}

pub fn phase2_examples(tuples: &[DatasetTuple]) -> Result<Vec<Phase2Example>> {
    tuples
        .iter()
        .map(|t| {
            t.validate()?;
            Ok(Phase2Example {
                persona_id: t.persona_id.clone(),
                input: render_input(t),
                target: Phase2Target {
                    active_categories: t.active_categories,
                    preference_description: t.preference_description.clone(),
                    preferred_response: t.preferred_response.clone(),
                },
                tuple: t.clone(),
            })
        })
        .collect()
}

/// Write phase-1 examples, one per line. Returns the line count.
pub fn export_phase1(tuples: &[DatasetTuple], path: &Path) -> Result<usize> {
    let ex = phase1_examples(tuples)?;
    codec::atomic_write(path, codec::encode_lines(&ex).as_bytes())?;
    Ok(ex.len())
}

/// Write phase-2 examples, one per line. Returns the line count.
pub fn export_phase2(tuples: &[DatasetTuple], path: &Path) -> Result<usize> {
    let ex = phase2_examples(tuples)?;
    codec::atomic_write(path, codec::encode_lines(&ex).as_bytes())?;
    Ok(ex.len())
}
