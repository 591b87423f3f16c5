//! Simulated users. The oracle judges interventions against a persona's
//! hidden preference profile; [`remote`] asks an OpenAI-compatible
//! endpoint to role-play the persona instead.

pub mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persona::PersonaProfile;
use crate::schema::{
    Action, ActivityContext, ActivityType, CategorySet, Decision, Feedback, InteractionRecord,
    IqaRatings, PreferenceCategory, PreferenceProfile, Welcome,
};
use crate::templates;

/// Ratings below this count as a violation.
pub const VIOLATION_BELOW: u8 = 3;
/// Deviation scale applied to categories flagged by the latest reflection.
pub const TIGHTENED_SCALE: f64 = 1.1;

/// Whether an intervention in this activity and time slot is welcome.
pub fn is_welcome(profile: &PreferenceProfile, t: ActivityType, slot: u32) -> bool {
    match profile.override_for(t) {
        Some(o) => o.welcome,
        None => profile.rules.acceptable_periods.contains(&slot),
    }
}

/// Ideal behavior descriptor for this persona in this context.
pub fn targets(profile: &PreferenceProfile, t: ActivityType, slot: u32) -> [f64; 5] {
    let r = &profile.rules;
    let scheduling = if is_welcome(profile, t, slot) { 1.0 } else { 0.0 };
    let domain = profile
        .domain_rank(t)
        .map_or(0.0, |rank| 1.0 - rank as f64 / 3.0);
    let autonomy = if r.ask_first { 1.0 } else { 0.3 };
    let style = f64::from(r.brevity) / 3.0;
    let context = if profile.override_for(t).is_some() { 1.0 } else { 0.5 };
    [scheduling, domain, autonomy, style, context]
}

/// Likert satisfaction for a descriptor deviation.
pub fn satisfaction(deviation: f64, scale: f64) -> u8 {
    let d = (deviation.abs() * scale).min(1.0);
    (1.0 + 4.0 * (1.0 - d)).round().clamp(1.0, 5.0) as u8
}

/// Categories the user weighs heavily regardless of the interaction.
pub fn salient_categories(profile: &PreferenceProfile) -> CategorySet {
    PreferenceCategory::ALL
        .into_iter()
        .filter(|c| profile.weights[c.index()] >= 0.5)
        .collect()
}

/// Preference description for a set of categories at the given behavior
/// levels.
pub fn describe(categories: CategorySet, levels: &[f64; 5], t: ActivityType) -> String {
    categories
        .iter()
        .map(|c| templates::preference_sentence(c, levels[c.index()], t))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block_index: u32,
    pub violations: [u32; 5],
    pub helpful: [u32; 5],
    pub summary_text: String,
}

/// Reflection-style memory: one summary per completed block of records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodicMemory {
    pub block_size: usize,
    pub summaries: Vec<BlockSummary>,
}

impl EpisodicMemory {
    pub fn new(block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::invalid("block size must be positive"));
        }
        Ok(EpisodicMemory {
            block_size,
            summaries: Vec::new(),
        })
    }

    /// Categories violated in at least half of the latest block.
    pub fn tightened(&self) -> CategorySet {
        let Some(last) = self.summaries.last() else {
            return CategorySet::EMPTY;
        };
        PreferenceCategory::ALL
            .into_iter()
            .filter(|c| 2 * last.violations[c.index()] as usize >= self.block_size)
            .collect()
    }
}

/// Summarize one completed block into memory.
pub fn reflect(memory: &EpisodicMemory, block: &[InteractionRecord]) -> Result<EpisodicMemory> {
    if block.len() != memory.block_size {
        return Err(Error::invalid(format!(
            "reflection block has {} records, expected {}",
            block.len(),
            memory.block_size
        )));
    }
    let mut violations = [0u32; 5];
    let mut helpful = [0u32; 5];
    for r in block {
        if let Some(f) = &r.feedback {
            for (c, s) in &f.satisfaction {
                if *s < VIOLATION_BELOW {
                    violations[c.index()] += 1;
                } else if *s >= 4 {
                    helpful[c.index()] += 1;
                }
            }
        }
    }
    let list = |counts: &[u32; 5]| {
        let parts: Vec<String> = PreferenceCategory::ALL
            .iter()
            .filter(|c| counts[c.index()] > 0)
            .map(|c| format!("{} ({})", c.key(), counts[c.index()]))
            .collect();
        if parts.is_empty() {
            "none".to_owned()
        } else {
            parts.join(", ")
        }
    };
    let block_index = memory.summaries.len() as u32;
    let summary_text = format!(
        "block {block_index}: disruptive {}; helpful {}",
        list(&violations),
        list(&helpful)
    );
    let mut next = memory.clone();
    next.summaries.push(BlockSummary {
        block_index,
        violations,
        helpful,
        summary_text,
    });
    Ok(next)
}

/// Everything a simulated user reports about one opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserJudgment {
    pub welcome: Welcome,
    /// Absent when the assistant stayed silent.
    pub feedback: Option<Feedback>,
    pub active_categories: CategorySet,
    pub preference_text: String,
    pub preferred_response: String,
    pub iqa_ratings: IqaRatings,
}

/// A source of user judgments.
pub trait UserBackend: Sync {
    fn judge(
        &self,
        persona: &PersonaProfile,
        memory: &EpisodicMemory,
        context: &ActivityContext,
        decision: Decision,
        descriptor: &[f64; 5],
        response_text: &str,
    ) -> Result<UserJudgment>;
}

/// Rule-based simulated user driven by the persona's preference profile.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleUser;

impl OracleUser {
    pub fn judge(
        &self,
        persona: &PersonaProfile,
        memory: &EpisodicMemory,
        context: &ActivityContext,
        decision: Decision,
        descriptor: &[f64; 5],
    ) -> Result<UserJudgment> {
        if let Some((i, b)) = descriptor
            .iter()
            .enumerate()
            .find(|(_, b)| !b.is_finite() || !(0.0..=1.0).contains(*b))
        {
            return Err(Error::invalid(format!("descriptor[{i}] = {b} outside [0,1]")));
        }
        let profile = &persona.preference_profile;
        let t = context.activity_type;
        let slot = context.period_index;
        let welcome = is_welcome(profile, t, slot);
        let target = targets(profile, t, slot);
        let tightened = memory.tightened();
        let mut active = salient_categories(profile);

        let (feedback, iqa_ratings) = match decision {
            Decision::Silent => {
                let timing = if welcome { 1 } else { 5 };
                (None, [timing, 5, 3, 3, 3])
            }
            Decision::Intervene => {
                let s: [u8; 5] = std::array::from_fn(|k| {
                    let scale = if tightened.contains(PreferenceCategory::ALL[k]) {
                        TIGHTENED_SCALE
                    } else {
                        1.0
                    };
                    satisfaction(descriptor[k] - target[k], scale)
                });
                let min = s.iter().copied().min().unwrap_or(5);
                let action = if !welcome {
                    Action::Reject
                } else if min >= VIOLATION_BELOW {
                    Action::Accept
                } else {
                    Action::Ignore
                };
                let mut satisfaction_map = BTreeMap::new();
                let mut text = BTreeMap::new();
                for c in PreferenceCategory::ALL {
                    let k = c.index();
                    satisfaction_map.insert(c, s[k]);
                    if s[k] < VIOLATION_BELOW {
                        active.insert(c);
                        let raise = target[k] > descriptor[k];
                        text.insert(c, templates::feedback_phrase(c, raise).to_owned());
                    }
                }
                use PreferenceCategory::*;
                let iqa = [
                    if welcome { 5 } else { 1 },
                    s[Scheduling.index()],
                    s[DomainPrioritization.index()],
                    s[ContextAdaptation.index()],
                    s[Autonomy.index()],
                ];
                let feedback = Feedback {
                    action,
                    satisfaction: satisfaction_map,
                    text,
                };
                (Some(feedback), iqa)
            }
        };
        Ok(UserJudgment {
            welcome: Welcome::from_bool(welcome),
            feedback,
            active_categories: active,
            preference_text: describe(active, &target, t),
            preferred_response: templates::render_response(&target, t),
            iqa_ratings,
        })
    }
}

impl UserBackend for OracleUser {
    fn judge(
        &self,
        persona: &PersonaProfile,
        memory: &EpisodicMemory,
        context: &ActivityContext,
        decision: Decision,
        descriptor: &[f64; 5],
        _response_text: &str,
    ) -> Result<UserJudgment> {
        OracleUser::judge(self, persona, memory, context, decision, descriptor)
    }
}
