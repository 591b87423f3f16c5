//! Per-user adaptation strategies layered on the population model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Embedder;
use crate::model::{ActivationModel, AssistantBackend, SteeringInjection};
use crate::schema::{Action, ActivityContext, CategorySet, Decision, InteractionRecord, PreferenceCategory};
use crate::steering::{extract_pairs, is_steering_signal, SteeringConfig, SteeringState};
use crate::templates;
use crate::user_sim::describe;

/// Number of past interactions retrieved into the ICL digest.
pub const ICL_TOP_K: usize = 5;
/// Minimum distance from 0.5 for a descriptor entry to count as a
/// predicted active category.
pub const PREDICTION_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Static,
    Icl,
    Steering,
    /// Preference optimization with weight updates; not available here.
    Dpo,
}

impl Strategy {
    pub fn key(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::Icl => "icl",
            Strategy::Steering => "steering",
            Strategy::Dpo => "dpo",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "static" => Ok(Strategy::Static),
            "icl" => Ok(Strategy::Icl),
            "steering" => Ok(Strategy::Steering),
            "dpo" => Ok(Strategy::Dpo),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

/// What the assistant does at one opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub decision: Decision,
    pub descriptor: [f64; 5],
    pub response_text: String,
    pub predicted_categories: CategorySet,
    pub generated_preference_text: String,
    /// Retrieved history rendered into the prompt (ICL only).
    pub digest: String,
    /// Whether a non-empty steering injection was applied.
    pub steered: bool,
}

/// One user's adaptation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub persona_id: String,
    pub strategy: Strategy,
    pub history: Vec<InteractionRecord>,
    pub steering: Option<SteeringState>,
}

fn digest_line(r: &InteractionRecord) -> String {
    let outcome = match r.feedback.as_ref().map(|f| f.action) {
        None => "stayed silent".to_owned(),
        Some(Action::Accept) => "accepted as timely".to_owned(),
        Some(Action::Reject) => "rejected, wait until later".to_owned(),
        Some(Action::Ignore) => "ignored".to_owned(),
    };
    let mut line = format!("[{}: {}", r.activity.description, outcome);
    if let Some(f) = &r.feedback {
        for t in f.text.values() {
            line.push_str("; ");
            line.push_str(t);
        }
    }
    line.push(']');
    line
}

impl SessionState {
    pub fn new(
        persona_id: impl Into<String>,
        strategy: Strategy,
        model: &ActivationModel,
        steering: SteeringConfig,
    ) -> Result<Self> {
        let steering = match strategy {
            Strategy::Dpo => {
                return Err(Error::NotImplemented("requires weight updates".into()));
            }
            Strategy::Steering => Some(SteeringState::for_encoder(model, steering)?),
            Strategy::Static | Strategy::Icl => None,
        };
        Ok(SessionState {
            persona_id: persona_id.into(),
            strategy,
            history: Vec::new(),
            steering,
        })
    }

    pub fn alphas(&self) -> [f64; 5] {
        self.steering.as_ref().map_or([0.0; 5], SteeringState::alphas)
    }

    /// Indices into `history` of the records retrieved for `context`, best
    /// first. Ties go to the more recent record.
    pub fn retrieve(&self, context: &ActivityContext, embedder: &Embedder) -> Vec<usize> {
        let Ok(query) = embedder.embed(&context.description) else {
            return Vec::new();
        };
        let mut scored: Vec<(usize, f64)> = self
            .history
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = embedder
                    .embed(&r.preference_text)
                    .map_or(0.0, |e| e.iter().zip(&query).map(|(a, b)| a * b).sum());
                (i, s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
        scored.into_iter().take(ICL_TOP_K).map(|(i, _)| i).collect()
    }

    fn digest(&self, context: &ActivityContext, model: &ActivationModel) -> String {
        if self.strategy != Strategy::Icl || self.history.is_empty() {
            return String::new();
        }
        let embedder = Embedder::new(model.config().lexicon.clone());
        self.retrieve(context, &embedder)
            .into_iter()
            .map(|i| digest_line(&self.history[i]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn respond(&self, model: &ActivationModel, context: &ActivityContext) -> Result<Response> {
        let injection = match &self.steering {
            Some(s) if self.strategy == Strategy::Steering => s.build_injection(),
            _ => SteeringInjection::default(),
        };
        let digest = self.digest(context, model);
        let g = model.generate(context, &digest, &injection)?;
        let prompt = ActivationModel::render_prompt(context, &digest);
        let mut predicted = model.config().lexicon.hits(&prompt);
        for c in PreferenceCategory::ALL {
            if (g.descriptor[c.index()] - 0.5).abs() >= PREDICTION_MARGIN {
                predicted.insert(c);
            }
        }
        let generated_preference_text = if predicted.is_empty() {
            templates::preference_sentence(
                PreferenceCategory::Scheduling,
                g.descriptor[0],
                context.activity_type,
            )
        } else {
            describe(predicted, &g.descriptor, context.activity_type)
        };
        Ok(Response {
            decision: g.decision,
            descriptor: g.descriptor,
            response_text: g.response_text,
            predicted_categories: predicted,
            generated_preference_text,
            digest,
            steered: !injection.is_empty(),
        })
    }

    /// Record an interaction and, for steering sessions, update the
    /// personalization state from its feedback.
    pub fn observe(mut self, record: InteractionRecord, model: &ActivationModel) -> Result<Self> {
        if record.persona_id != self.persona_id {
            return Err(Error::Contract(format!(
                "record for persona {} observed by session of {}",
                record.persona_id, self.persona_id
            )));
        }
        if let Some(state) = self.steering.take() {
            let tau = state.config.tau;
            let signal = record
                .feedback
                .as_ref()
                .is_some_and(|f| is_steering_signal(f, tau));
            let pairs = if signal && !record.response_text.trim().is_empty() {
                extract_pairs(&record, tau)?
            } else {
                Vec::new()
            };
            let signaled: CategorySet = pairs.iter().map(|p| p.category).collect();
            let updated = if pairs.is_empty() {
                state
            } else {
                state.update(&pairs, model)?
            };
            self.steering = Some(updated.decay(signaled));
        }
        self.history.push(record);
        Ok(self)
    }
}
