//! Core domain vocabulary: preference categories, feedback, interaction
//! records and dataset tuples, plus the canonical record line format.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec;
use crate::error::{Error, Result};

/// Likert ceiling used for satisfaction and IQA items.
pub const LIKERT_MAX: u8 = 5;

/// The five preference dimensions. Discriminants are the stable indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceCategory {
    Scheduling = 0,
    DomainPrioritization = 1,
    Autonomy = 2,
    CommunicationStyle = 3,
    ContextAdaptation = 4,
}

impl PreferenceCategory {
    pub const COUNT: usize = 5;

    pub const ALL: [PreferenceCategory; 5] = [
        PreferenceCategory::Scheduling,
        PreferenceCategory::DomainPrioritization,
        PreferenceCategory::Autonomy,
        PreferenceCategory::CommunicationStyle,
        PreferenceCategory::ContextAdaptation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case identifier used on the wire.
    pub fn key(self) -> &'static str {
        match self {
            Self::Scheduling => "scheduling",
            Self::DomainPrioritization => "domain_prioritization",
            Self::Autonomy => "autonomy",
            Self::CommunicationStyle => "communication_style",
            Self::ContextAdaptation => "context_adaptation",
        }
    }

    /// Human-readable label.
    pub fn label(self) -> &'static str {
        match self {
            Self::Scheduling => "Scheduling Preference",
            Self::DomainPrioritization => "Domain Prioritization",
            Self::Autonomy => "Autonomy Level",
            Self::CommunicationStyle => "Communication Style",
            Self::ContextAdaptation => "Context Adaptation",
        }
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == s)
    }
}

impl fmt::Display for PreferenceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// A subset of the five categories, stored as a bitmask.
///
/// Serialized as a sorted list of category keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CategorySet(u8);

impl CategorySet {
    pub const EMPTY: CategorySet = CategorySet(0);

    pub fn all() -> Self {
        CategorySet(0b1_1111)
    }

    pub fn insert(&mut self, c: PreferenceCategory) {
        self.0 |= 1 << c.index();
    }

    pub fn contains(self, c: PreferenceCategory) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: CategorySet) -> CategorySet {
        CategorySet(self.0 | other.0)
    }

    pub fn intersection(self, other: CategorySet) -> CategorySet {
        CategorySet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = PreferenceCategory> {
        PreferenceCategory::ALL
            .into_iter()
            .filter(move |c| self.contains(*c))
    }
}

impl FromIterator<PreferenceCategory> for CategorySet {
    fn from_iter<I: IntoIterator<Item = PreferenceCategory>>(iter: I) -> Self {
        let mut s = CategorySet::EMPTY;
        for c in iter {
            s.insert(c);
        }
        s
    }
}

impl Serialize for CategorySet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for CategorySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let items = Vec::<PreferenceCategory>::deserialize(d)?;
        Ok(items.into_iter().collect())
    }
}

/// The eight activity types of the activity pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityType {
    Productivity = 0,
    Health = 1,
    Cooking = 2,
    Entertainment = 3,
    Transport = 4,
    Cleaning = 5,
    Social = 6,
    Misc = 7,
}

impl ActivityType {
    pub const COUNT: usize = 8;

    pub const ALL: [ActivityType; 8] = [
        ActivityType::Productivity,
        ActivityType::Health,
        ActivityType::Cooking,
        ActivityType::Entertainment,
        ActivityType::Transport,
        ActivityType::Cleaning,
        ActivityType::Social,
        ActivityType::Misc,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::Productivity => "productivity",
            Self::Health => "health",
            Self::Cooking => "cooking",
            Self::Entertainment => "entertainment",
            Self::Transport => "transport",
            Self::Cleaning => "cleaning",
            Self::Social => "social",
            Self::Misc => "misc",
        }
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.key() == s)
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One scheduled activity, which doubles as a proactive opportunity context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityContext {
    pub activity_type: ActivityType,
    pub day: u8,
    /// Time-of-day slot of the activity start.
    pub period_index: u32,
    pub start_minute: u32,
    pub duration_minutes: u32,
    pub description: String,
    /// Index into the activity template bank the description came from.
    pub template_id: u32,
}

/// Per-activity-type rule that overrides the period-based timing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextOverride {
    pub activity_type: ActivityType,
    pub welcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRules {
    /// Time-of-day slots in which interventions are welcome.
    pub acceptable_periods: Vec<u32>,
    pub ask_first: bool,
    /// Amount above which confirmation is expected (in currency units).
    pub autonomy_threshold: f64,
    /// 1 = detailed, 3 = terse.
    pub brevity: u8,
    /// Most important activity types first.
    pub domain_ranking: Vec<ActivityType>,
    pub context_overrides: Vec<ContextOverride>,
}

/// A persona's hidden ground-truth preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub weights: [f64; 5],
    pub rules: PreferenceRules,
}

impl PreferenceProfile {
    pub fn validate(&self, periods: u32) -> Result<()> {
        for (i, w) in self.weights.iter().enumerate() {
            if !(0.0..=1.0).contains(w) {
                return Err(Error::validation(
                    format!("preference_profile.weights[{i}]"),
                    format!("{w} outside [0,1]"),
                ));
            }
        }
        let r = &self.rules;
        if let Some(p) = r.acceptable_periods.iter().find(|p| **p >= periods) {
            return Err(Error::validation(
                "preference_profile.rules.acceptable_periods",
                format!("period {p} outside 0..{periods}"),
            ));
        }
        if !(1..=3).contains(&r.brevity) {
            return Err(Error::validation(
                "preference_profile.rules.brevity",
                format!("{} outside 1..=3", r.brevity),
            ));
        }
        let mut seen = [false; ActivityType::COUNT];
        for t in &r.domain_ranking {
            if std::mem::replace(&mut seen[t.index()], true) {
                return Err(Error::validation(
                    "preference_profile.rules.domain_ranking",
                    format!("activity type {t} ranked twice"),
                ));
            }
        }
        Ok(())
    }

    /// Rank of `t` in the domain ranking, if listed.
    pub fn domain_rank(&self, t: ActivityType) -> Option<usize> {
        self.rules.domain_ranking.iter().position(|x| *x == t)
    }

    pub fn override_for(&self, t: ActivityType) -> Option<ContextOverride> {
        self.rules
            .context_overrides
            .iter()
            .copied()
            .find(|o| o.activity_type == t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Reject,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Intervene,
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Welcome {
    Welcome,
    Unwelcome,
}

impl Welcome {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Welcome::Welcome
        } else {
            Welcome::Unwelcome
        }
    }

    pub fn is_welcome(self) -> bool {
        self == Welcome::Welcome
    }
}

/// Whether an activity template was part of population calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Seen,
    Unseen,
    All,
}

/// User feedback after one proactive interaction.
///
/// The satisfaction map may be partial: absent categories carry no signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub action: Action,
    #[serde(default)]
    pub satisfaction: BTreeMap<PreferenceCategory, u8>,
    #[serde(default)]
    pub text: BTreeMap<PreferenceCategory, String>,
}

impl Feedback {
    pub fn new(action: Action) -> Self {
        Feedback {
            action,
            satisfaction: BTreeMap::new(),
            text: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (c, s) in &self.satisfaction {
            if !(1..=LIKERT_MAX).contains(s) {
                return Err(Error::validation(
                    format!("feedback.satisfaction.{c}"),
                    format!("{s} outside 1..=5"),
                ));
            }
        }
        for c in self.text.keys() {
            if !self.satisfaction.contains_key(c) {
                return Err(Error::validation(
                    format!("feedback.text.{c}"),
                    "text given for a category without a satisfaction rating",
                ));
            }
        }
        Ok(())
    }

    /// Attach free text that names no category to the lowest-rated category
    /// (lowest index on ties). Dropped when nothing was rated.
    pub fn attach_uncategorized_text(&mut self, text: impl Into<String>) {
        let target = self
            .satisfaction
            .iter()
            .min_by_key(|(c, s)| (**s, c.index()))
            .map(|(c, _)| *c);
        if let Some(c) = target {
            let text = text.into();
            self.text
                .entry(c)
                .and_modify(|t| {
                    t.push(' ');
                    t.push_str(&text);
                })
                .or_insert(text);
        }
    }

    pub fn min_satisfaction(&self) -> Option<u8> {
        self.satisfaction.values().copied().min()
    }
}

/// Five IQA items: timing appropriateness, freedom from intrusion, content
/// value, contextual relevance, autonomy respect.
pub type IqaRatings = [u8; 5];

/// One proactive opportunity and everything observed about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub persona_id: String,
    pub opportunity_index: u32,
    /// Reporting period: a uniform partition of the opportunity sequence.
    pub period_index: u32,
    pub split: Split,
    pub activity: ActivityContext,
    pub assistant_decision: Decision,
    pub user_welcome: Welcome,
    /// Empty exactly when the assistant stayed silent.
    pub response_text: String,
    pub response_descriptor: [f64; 5],
    pub active_categories_true: CategorySet,
    pub active_categories_pred: CategorySet,
    /// Reference preference description stated by the user.
    pub preference_text: String,
    /// Preference summary produced by the assistant.
    #[serde(default)]
    pub generated_preference_text: String,
    #[serde(default)]
    pub iqa_ratings: Option<IqaRatings>,
    #[serde(default)]
    pub feedback: Option<Feedback>,
}

impl InteractionRecord {
    pub fn validate(&self) -> Result<()> {
        let silent = self.assistant_decision == Decision::Silent;
        if silent != self.response_text.is_empty() {
            return Err(Error::validation(
                "response_text",
                "must be empty exactly when the decision is silent",
            ));
        }
        for (i, b) in self.response_descriptor.iter().enumerate() {
            if !b.is_finite() || !(0.0..=1.0).contains(b) {
                return Err(Error::validation(
                    format!("response_descriptor[{i}]"),
                    format!("{b} outside [0,1]"),
                ));
            }
        }
        if let Some(r) = &self.iqa_ratings {
            if let Some((i, x)) = r.iter().enumerate().find(|(_, x)| !(1..=LIKERT_MAX).contains(x)) {
                return Err(Error::validation(
                    format!("iqa_ratings[{i}]"),
                    format!("{x} outside 1..=5"),
                ));
            }
        }
        if let Some(f) = &self.feedback {
            f.validate()?;
        }
        Ok(())
    }

    pub fn agrees(&self) -> bool {
        matches!(
            (self.assistant_decision, self.user_welcome),
            (Decision::Intervene, Welcome::Welcome) | (Decision::Silent, Welcome::Unwelcome)
        )
    }
}

/// Canonical single-line encoding of a record (no trailing newline).
pub fn serialize_record(record: &InteractionRecord) -> String {
    codec::to_line(record)
}

/// Decode and validate one record line.
pub fn parse_record(line: &str) -> Result<InteractionRecord> {
    let r: InteractionRecord = codec::from_line(line)?;
    r.validate()?;
    Ok(r)
}

/// Demographic attributes of a persona. They condition routines and
/// language, never preferences directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age_range: String,
    pub gender: String,
    pub occupation_category: String,
    pub education: String,
    pub region: String,
    pub traits: Vec<String>,
}

/// One population-level training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTuple {
    pub persona_id: String,
    pub demographics: Demographics,
    pub activity: ActivityContext,
    pub active_categories: CategorySet,
    pub preference_description: String,
    /// One sentence per active category.
    #[serde(default)]
    pub category_preferences: BTreeMap<PreferenceCategory, String>,
    pub preferred_response: String,
}

impl DatasetTuple {
    pub fn validate(&self) -> Result<()> {
        if self.active_categories.is_empty() {
            return Err(Error::validation("active_categories", "must be non-empty"));
        }
        if self.preference_description.trim().is_empty() {
            return Err(Error::validation("preference_description", "must be non-empty"));
        }
        if self.preferred_response.trim().is_empty() {
            return Err(Error::validation("preferred_response", "must be non-empty"));
        }
        Ok(())
    }
}
