//! Study sessions as a pure state machine over an event log.
//!
//! Every mutation is an [`Event`]; [`StudySession::apply`] is the only
//! transition function and is used both live and on replay.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use steerbench_core::adaptation::{Response, SessionState, Strategy};
use steerbench_core::experiment::{calibrated_model, opportunities, ExperimentConfig, TemplateSplit};
use steerbench_core::metrics::{aggregate, MetricsReport};
use steerbench_core::model::{ActivationModel, ModelConfig};
use steerbench_core::persona::generate_personas;
use steerbench_core::schema::{
    Action, CategorySet, Decision, Feedback, InteractionRecord, PreferenceCategory, Split, Welcome,
};
use steerbench_core::steering::SteeringConfig;
use steerbench_core::templates::feedback_phrase;
use steerbench_core::text::fnv1a;
use steerbench_core::user_sim::{EpisodicMemory, OracleUser, VIOLATION_BELOW};

use crate::error::ServiceError;
use crate::storyboard::{self, Storyboard, SESSION_LENGTH};

/// Study arm. V never adapts, A adapts after every rating, C adapts only on
/// odd-numbered interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    V,
    A,
    C,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::V, Condition::A, Condition::C];

    /// Whether interaction `index` (0-based) is served and updated adaptively.
    pub fn adapts_at(self, index: usize) -> bool {
        match self {
            Condition::V => false,
            Condition::A => true,
            Condition::C => index % 2 == 0,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::V => "V",
            Condition::A => "A",
            Condition::C => "C",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Paired forced choice between a baseline and a pre-adapted response.
    Detection,
    #[default]
    Adaptation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    A,
    B,
}

/// Participant feedback on one interaction.
///
/// `aspects` follows the questionnaire order: timing, intrusiveness,
/// content value, contextual relevance, autonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub interaction_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspects: Option<[u8; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub texts: BTreeMap<PreferenceCategory, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        condition: Condition,
        mode: Mode,
        seed: u64,
        storyboards: Vec<u32>,
        /// Condition came from round-robin assignment.
        assigned: bool,
    },
    Feedback {
        body: FeedbackBody,
    },
    Questionnaire {
        ratings: [u8; 5],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionChoice {
    pub storyboard: u32,
    pub adapted_position: Position,
    pub chose_adapted: bool,
    pub explanation: String,
}

/// What the participant sees for one response. Strategy details stay
/// server-side so arms remain blind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseView {
    pub decision: Decision,
    pub text: String,
}

impl From<&Response> for ResponseView {
    fn from(r: &Response) -> Self {
        ResponseView {
            decision: r.decision,
            text: r.response_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryboardView {
    pub id: u32,
    pub activity_type: String,
    pub start_minute: u32,
    pub duration_minutes: u32,
    pub scene: String,
}

impl From<&Storyboard> for StoryboardView {
    fn from(s: &Storyboard) -> Self {
        StoryboardView {
            id: s.id,
            activity_type: s.activity_type.key().to_owned(),
            start_minute: s.start_minute,
            duration_minutes: s.duration_minutes,
            scene: s.scene.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Offer {
    Single {
        interaction_index: usize,
        storyboard: StoryboardView,
        response: ResponseView,
    },
    Pair {
        interaction_index: usize,
        storyboard: StoryboardView,
        a: ResponseView,
        b: ResponseView,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub applied: bool,
    pub alpha_snapshot: [f64; 5],
}

/// Model settings shared by all sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub model: ModelConfig,
    pub steering: SteeringConfig,
    pub calibration_personas: usize,
    pub calibration_seed: u64,
    /// Replace the calibrated prior table with one population-average row.
    pub baseline_weights: Option<[f64; 5]>,
    /// Synthetic participant whose feedback pre-warms the detection arm.
    pub prewarm_seed: u64,
    pub prewarm_events: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            model: ModelConfig::default(),
            steering: SteeringConfig::default(),
            calibration_personas: 200,
            calibration_seed: 0,
            baseline_weights: None,
            prewarm_seed: 7,
            prewarm_events: 5,
        }
    }
}

/// Frozen model plus the pre-warmed steering state for detection pairs.
#[derive(Debug)]
pub struct Engine {
    pub config: EngineConfig,
    pub model: ActivationModel,
    pub baseline: SessionState,
    pub prewarmed: SessionState,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, ServiceError> {
        config.steering.validate()?;
        let personas = generate_personas(config.calibration_personas.max(1), config.calibration_seed)?;
        let split = TemplateSplit::new(config.calibration_seed, 0.75);
        let mut model = calibrated_model(&config.model, &personas, &split)?;
        if let Some(w) = config.baseline_weights {
            let rows = model.calibration().prior.len();
            model.set_prior(vec![w; rows])?;
        }
        let baseline = SessionState::new("baseline", Strategy::Static, &model, config.steering)?;
        let prewarmed = prewarm(&model, &config)?;
        Ok(Engine {
            config,
            model,
            baseline,
            prewarmed,
        })
    }
}

/// Run a synthetic participant through a steering session until it has
/// given `prewarm_events` pieces of feedback.
fn prewarm(model: &ActivationModel, config: &EngineConfig) -> Result<SessionState, ServiceError> {
    let persona = generate_personas(1, config.prewarm_seed)?.remove(0);
    let exp = ExperimentConfig {
        opportunities: 500,
        periods: 1,
        model: config.model.clone(),
        steering: config.steering,
        ..ExperimentConfig::default()
    };
    let split = TemplateSplit::new(config.prewarm_seed, exp.seen_fraction);
    let contexts = opportunities(&persona, config.prewarm_seed, &exp, &split)?;
    let memory = EpisodicMemory::new(exp.block_size)?;
    let mut state = SessionState::new(persona.id.clone(), Strategy::Steering, model, config.steering)?;
    let mut given = 0;
    for (i, (split, ctx)) in contexts.into_iter().enumerate() {
        if given >= config.prewarm_events {
            break;
        }
        let resp = state.respond(model, &ctx)?;
        let j = OracleUser.judge(&persona, &memory, &ctx, resp.decision, &resp.descriptor)?;
        given += usize::from(j.feedback.is_some());
        let record = InteractionRecord {
            persona_id: persona.id.clone(),
            opportunity_index: i as u32,
            period_index: 0,
            split,
            activity: ctx,
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
        state = state.observe(record, model)?;
    }
    Ok(state)
}

/// Full state of one participant session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub id: String,
    pub condition: Condition,
    pub mode: Mode,
    pub seed: u64,
    pub assigned: bool,
    pub storyboards: Vec<u32>,
    pub cursor: usize,
    pub state: SessionState,
    /// Every rated interaction, adapted or not.
    pub records: Vec<InteractionRecord>,
    pub choices: Vec<DetectionChoice>,
    pub questionnaire: Option<[u8; 5]>,
    /// Number of events applied so far, including creation.
    pub events: u64,
}

fn invalid(field: &str, message: impl Into<String>) -> ServiceError {
    ServiceError::Invalid {
        field: field.to_owned(),
        message: message.into(),
    }
}

impl StudySession {
    /// Creation event for a new session; storyboards are drawn from `seed`.
    pub fn creation(id: String, condition: Condition, mode: Mode, seed: u64, assigned: bool) -> Event {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, b"storyboards"));
        Event::Created {
            id,
            condition,
            mode,
            seed,
            storyboards: storyboard::draw(&mut rng),
            assigned,
        }
    }

    pub fn create(engine: &Engine, event: &Event) -> Result<Self, ServiceError> {
        let Event::Created {
            id,
            condition,
            mode,
            seed,
            storyboards,
            assigned,
        } = event
        else {
            return Err(ServiceError::Corrupt("log does not start with a creation event".into()));
        };
        if storyboards.len() != SESSION_LENGTH || storyboards.iter().any(|s| storyboard::get(*s).is_none()) {
            return Err(ServiceError::Corrupt(format!("bad storyboard list for session {id}")));
        }
        let strategy = match (mode, condition) {
            (Mode::Adaptation, Condition::A | Condition::C) => Strategy::Steering,
            _ => Strategy::Static,
        };
        Ok(StudySession {
            id: id.clone(),
            condition: *condition,
            mode: *mode,
            seed: *seed,
            assigned: *assigned,
            storyboards: storyboards.clone(),
            cursor: 0,
            state: SessionState::new(id.clone(), strategy, &engine.model, engine.config.steering)?,
            records: Vec::new(),
            choices: Vec::new(),
            questionnaire: None,
            events: 1,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.cursor >= self.storyboards.len()
    }

    fn current(&self) -> Result<Storyboard, ServiceError> {
        let id = *self
            .storyboards
            .get(self.cursor)
            .ok_or_else(|| ServiceError::Conflict("all interactions are done".into()))?;
        storyboard::get(id).ok_or_else(|| ServiceError::Corrupt(format!("unknown storyboard {id}")))
    }

    /// Where the adapted response sits in detection pair `index`.
    pub fn adapted_position(&self, index: usize) -> Position {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, format!("position:{index}").as_bytes()));
        if rng.random_bool(0.5) {
            Position::A
        } else {
            Position::B
        }
    }

    fn adaptive_response(&self, engine: &Engine, sb: &Storyboard) -> Result<Response, ServiceError> {
        let ctx = sb.context();
        let state = if self.condition.adapts_at(self.cursor) {
            &self.state
        } else {
            &engine.baseline
        };
        Ok(state.respond(&engine.model, &ctx)?)
    }

    /// The current interaction. Pure: repeated calls return the same offer.
    pub fn offer(&self, engine: &Engine) -> Result<Offer, ServiceError> {
        let sb = self.current()?;
        let view = StoryboardView::from(&sb);
        match self.mode {
            Mode::Adaptation => Ok(Offer::Single {
                interaction_index: self.cursor,
                storyboard: view,
                response: ResponseView::from(&self.adaptive_response(engine, &sb)?),
            }),
            Mode::Detection => {
                let ctx = sb.context();
                let base = ResponseView::from(&engine.baseline.respond(&engine.model, &ctx)?);
                let adapted = ResponseView::from(&engine.prewarmed.respond(&engine.model, &ctx)?);
                let (a, b) = match self.adapted_position(self.cursor) {
                    Position::A => (adapted, base),
                    Position::B => (base, adapted),
                };
                Ok(Offer::Pair {
                    interaction_index: self.cursor,
                    storyboard: view,
                    a,
                    b,
                })
            }
        }
    }

    /// Check `event` against the current state without changing it.
    pub fn check(&self, event: &Event) -> Result<(), ServiceError> {
        match event {
            Event::Created { .. } => Err(ServiceError::Corrupt("duplicate creation event".into())),
            Event::Questionnaire { ratings } => {
                if !self.is_complete() {
                    return Err(ServiceError::Conflict(format!(
                        "questionnaire opens after interaction {}",
                        self.storyboards.len()
                    )));
                }
                if self.questionnaire.is_some() {
                    return Err(ServiceError::Conflict("questionnaire already submitted".into()));
                }
                check_ratings("ratings", ratings)
            }
            Event::Feedback { body } => {
                if self.is_complete() {
                    return Err(ServiceError::Conflict("all interactions are done".into()));
                }
                if body.interaction_index != self.cursor {
                    return Err(ServiceError::Conflict(format!(
                        "expected feedback for interaction {}, got {}",
                        self.cursor, body.interaction_index
                    )));
                }
                match self.mode {
                    Mode::Detection => {
                        if body.choice.is_none() {
                            return Err(invalid("choice", "required in detection mode"));
                        }
                        if !body.explanation.as_deref().is_some_and(|e| !e.trim().is_empty()) {
                            return Err(invalid("explanation", "required in detection mode"));
                        }
                        if let Some(a) = &body.aspects {
                            check_ratings("aspects", a)?;
                        }
                        Ok(())
                    }
                    Mode::Adaptation => {
                        let aspects = body.aspects.as_ref().ok_or_else(|| invalid("aspects", "required"))?;
                        check_ratings("aspects", aspects)
                    }
                }
            }
        }
    }

    /// Apply one event. Returns the feedback outcome for feedback events.
    pub fn apply(&mut self, engine: &Engine, event: &Event) -> Result<Option<FeedbackOutcome>, ServiceError> {
        match event {
            Event::Questionnaire { ratings } => {
                self.check(event)?;
                self.questionnaire = Some(*ratings);
                self.events += 1;
                Ok(None)
            }
            Event::Feedback { body } => {
                let outcome = self.apply_feedback(engine, body)?;
                self.events += 1;
                Ok(Some(outcome))
            }
            Event::Created { .. } => self.check(event).map(|_| None),
        }
    }

    fn apply_feedback(&mut self, engine: &Engine, body: &FeedbackBody) -> Result<FeedbackOutcome, ServiceError> {
        let sb = self.current()?;
        match self.mode {
            Mode::Detection => {
                self.check(&Event::Feedback { body: body.clone() })?;
                let adapted_position = self.adapted_position(self.cursor);
                self.choices.push(DetectionChoice {
                    storyboard: sb.id,
                    adapted_position,
                    chose_adapted: body.choice == Some(adapted_position),
                    explanation: body.explanation.clone().unwrap_or_default(),
                });
                self.cursor += 1;
                Ok(FeedbackOutcome {
                    applied: false,
                    alpha_snapshot: self.state.alphas(),
                })
            }
            Mode::Adaptation => {
                self.check(&Event::Feedback { body: body.clone() })?;
                let response = self.adaptive_response(engine, &sb)?;
                if response.decision == Decision::Intervene && body.action.is_none() {
                    return Err(invalid("action", "required when the assistant spoke"));
                }
                let record = build_record(&self.id, self.cursor, &sb, response, body);
                record.validate()?;
                let applied = self.condition.adapts_at(self.cursor);
                if applied {
                    let state = std::mem::replace(
                        &mut self.state,
                        SessionState::new(self.id.clone(), Strategy::Static, &engine.model, engine.config.steering)?,
                    );
                    self.state = state.observe(record.clone(), &engine.model)?;
                }
                self.records.push(record);
                self.cursor += 1;
                Ok(FeedbackOutcome {
                    applied,
                    alpha_snapshot: self.state.alphas(),
                })
            }
        }
    }

    /// Session metrics; `None` before any feedback.
    pub fn metrics(&self) -> Result<Option<MetricsReport>, ServiceError> {
        if self.records.is_empty() {
            return Ok(None);
        }
        let periods = self.storyboards.len() as u32;
        Ok(Some(aggregate(&self.records, periods, Split::All, periods as usize / 2)?))
    }
}

fn check_ratings(field: &str, ratings: &[u8; 5]) -> Result<(), ServiceError> {
    match ratings.iter().position(|r| !(1..=5).contains(r)) {
        Some(i) => Err(invalid(&format!("{field}[{i}]"), format!("{} outside 1..=5", ratings[i]))),
        None => Ok(()),
    }
}

/// Turn participant ratings into an interaction record.
///
/// Aspect ratings map onto categories as Scheduling = min(timing,
/// intrusiveness), domain = content value, context = relevance, autonomy =
/// autonomy. Communication style has no aspect and is only signaled through
/// text. Low-rated categories without text get a stock complaint pointing
/// away from what the response did.
pub fn build_record(
    session_id: &str,
    index: usize,
    sb: &Storyboard,
    response: Response,
    body: &FeedbackBody,
) -> InteractionRecord {
    use PreferenceCategory::*;
    let aspects = body.aspects.unwrap_or([3; 5]);
    let spoke = response.decision == Decision::Intervene;
    let mut rated = BTreeMap::new();
    rated.insert(Scheduling, aspects[0].min(aspects[1]));
    rated.insert(DomainPrioritization, aspects[2]);
    rated.insert(ContextAdaptation, aspects[3]);
    rated.insert(Autonomy, aspects[4]);

    let mut texts: BTreeMap<PreferenceCategory, String> = body
        .texts
        .iter()
        .filter(|(_, t)| !t.trim().is_empty())
        .map(|(c, t)| (*c, t.trim().to_owned()))
        .collect();
    for c in texts.keys() {
        rated.entry(*c).or_insert(VIOLATION_BELOW - 1);
    }
    let mut truth = CategorySet::EMPTY;
    for (c, s) in &rated {
        if *s < VIOLATION_BELOW {
            truth.insert(*c);
            let raise = response.descriptor[c.index()] < 0.5;
            texts.entry(*c).or_insert_with(|| feedback_phrase(*c, raise).to_owned());
        }
    }
    let preference_text = {
        let mut parts: Vec<&str> = body.texts.values().map(|t| t.trim()).filter(|t| !t.is_empty()).collect();
        if let Some(c) = body.comment.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
            parts.push(c);
        }
        parts.join(" ")
    };
    let (welcome, feedback) = if spoke {
        let action = body.action.unwrap_or(Action::Ignore);
        let mut fb = Feedback {
            action,
            satisfaction: rated,
            text: texts,
        };
        if let Some(c) = body.comment.as_deref().filter(|c| !c.trim().is_empty()) {
            fb.attach_uncategorized_text(c.trim());
        }
        (action != Action::Reject, Some(fb))
    } else {
        // Staying quiet was a mistake when its timing was rated poorly.
        (aspects[0] < VIOLATION_BELOW, None)
    };
    InteractionRecord {
        persona_id: session_id.to_owned(),
        opportunity_index: index as u32,
        period_index: index as u32,
        split: Split::Unseen,
        activity: sb.context(),
        assistant_decision: response.decision,
        user_welcome: Welcome::from_bool(welcome),
        response_text: response.response_text,
        response_descriptor: response.descriptor,
        active_categories_true: truth,
        active_categories_pred: response.predicted_categories,
        preference_text,
        generated_preference_text: response.generated_preference_text,
        iqa_ratings: Some(aspects),
        feedback,
    }
}
