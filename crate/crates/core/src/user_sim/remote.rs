//! Simulated user backed by an OpenAI-compatible chat-completions endpoint.
//!
//! The model is asked to answer with one JSON object describing its
//! judgment. Replies that cannot be parsed are retried; transport failures
//! are not.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::persona::PersonaProfile;
use crate::schema::{
    Action, ActivityContext, CategorySet, Decision, Feedback, IqaRatings, PreferenceCategory,
    Welcome,
};

use super::{EpisodicMemory, UserBackend, UserJudgment};

pub const API_KEY_ENV: &str = "STEERBENCH_API_KEY";

fn default_key_env() -> String {
    API_KEY_ENV.to_owned()
}
fn default_timeout() -> u64 {
    30
}
fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Extra attempts after an unparseable reply.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub verbose: bool,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            verbose: false,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Judgment as the remote model is asked to phrase it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteVerdict {
    pub welcome: bool,
    #[serde(default)]
    pub action: Option<Action>,
    #[serde(default)]
    pub satisfaction: BTreeMap<PreferenceCategory, u8>,
    #[serde(default)]
    pub text: BTreeMap<PreferenceCategory, String>,
    pub active_categories: Vec<PreferenceCategory>,
    pub preference_text: String,
    pub preferred_response: String,
    pub iqa_ratings: IqaRatings,
}

impl RemoteVerdict {
    fn into_judgment(self, decision: Decision) -> std::result::Result<UserJudgment, String> {
        let feedback = match (decision, self.action) {
            (Decision::Silent, _) => None,
            (Decision::Intervene, None) => return Err("missing action for an intervention".into()),
            (Decision::Intervene, Some(action)) => {
                if !self.welcome && action == Action::Accept {
                    return Err("unwelcome intervention cannot be accepted".into());
                }
                let f = Feedback {
                    action,
                    satisfaction: self.satisfaction,
                    text: self.text,
                };
                f.validate().map_err(|e| e.to_string())?;
                Some(f)
            }
        };
        if let Some(r) = self.iqa_ratings.iter().find(|r| !(1..=5).contains(*r)) {
            return Err(format!("IQA rating {r} outside 1..=5"));
        }
        Ok(UserJudgment {
            welcome: Welcome::from_bool(self.welcome),
            feedback,
            active_categories: self.active_categories.into_iter().collect::<CategorySet>(),
            preference_text: self.preference_text,
            preferred_response: self.preferred_response,
            iqa_ratings: self.iqa_ratings,
        })
    }
}

const SYSTEM_PROMPT: &str = "You role-play the person described below and judge a proactive \
assistant. Reply with a single JSON object and nothing else, with keys: welcome (bool), \
action (accept|reject|ignore, omit if the assistant stayed silent), satisfaction (map from \
category to 1-5), text (map from category to a short complaint, only for ratings below 3), \
active_categories (list), preference_text, preferred_response, iqa_ratings (five integers \
1-5: timing appropriateness, freedom from intrusion, content value, contextual relevance, \
autonomy respect). Categories: scheduling, domain_prioritization, autonomy, \
communication_style, context_adaptation.";

/// Client for remote role-play judgments.
pub struct RemoteJudge {
    config: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl RemoteJudge {
    /// Build a client, reading the API key from the configured variable.
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteJudge {
            config,
            agent,
            api_key,
        }
    }

    fn request_body(
        &self,
        persona: &PersonaProfile,
        memory: &EpisodicMemory,
        context: &ActivityContext,
        decision: Decision,
        response_text: &str,
    ) -> Value {
        let d = &persona.demographics;
        let persona_text = format!(
            "Persona {}: {} {}, {}, {}, lives in the {}, traits: {}.",
            persona.id,
            d.age_range,
            d.gender,
            d.occupation_category,
            d.education,
            d.region,
            d.traits.join(", ")
        );
        let memory_text: Vec<&str> = memory
            .summaries
            .iter()
            .map(|s| s.summary_text.as_str())
            .collect();
        let assistant = match decision {
            Decision::Silent => "The assistant stayed silent.".to_owned(),
            Decision::Intervene => format!("The assistant said: \"{response_text}\""),
        };
        let user = format!(
            "Activity on day {} at minute {} ({} min): {}\nMemory: {}\n{}",
            context.day,
            context.start_minute,
            context.duration_minutes,
            context.description,
            if memory_text.is_empty() { "none".to_owned() } else { memory_text.join(" | ") },
            assistant
        );
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": format!("{SYSTEM_PROMPT}\n{persona_text}")},
                {"role": "user", "content": user},
            ],
        })
    }

    fn post(&self, body: &str) -> Result<String> {
        let endpoint = self.config.endpoint();
        let transport = |message: String| Error::Transport {
            endpoint: endpoint.clone(),
            message,
        };
        let mut req = self
            .agent
            .post(&endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        if self.config.verbose {
            tracing::debug!(endpoint = %endpoint, body, "remote judge request");
        }
        let mut resp = req.send(body).map_err(|e| transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| transport(e.to_string()))?;
        if self.config.verbose {
            tracing::debug!(endpoint = %endpoint, status = status.as_u16(), body = %text, "remote judge reply");
        }
        if !status.is_success() {
            return Err(transport(format!("HTTP {status}")));
        }
        Ok(text)
    }
}

/// Pull the verdict object out of a chat-completions reply body.
pub fn parse_reply(body: &str) -> std::result::Result<RemoteVerdict, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("reply is not JSON: {e}"))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or("reply has no choices[0].message.content")?;
    let trimmed = content
        .trim()
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    serde_json::from_str(trimmed).map_err(|e| format!("content is not a verdict: {e}"))
}

impl UserBackend for RemoteJudge {
    fn judge(
        &self,
        persona: &PersonaProfile,
        memory: &EpisodicMemory,
        context: &ActivityContext,
        decision: Decision,
        _descriptor: &[f64; 5],
        response_text: &str,
    ) -> Result<UserJudgment> {
        let body = self
            .request_body(persona, memory, context, decision, response_text)
            .to_string();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            let reply = self.post(&body)?;
            match parse_reply(&reply).and_then(|v| v.into_judgment(decision)) {
                Ok(j) => return Ok(j),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "unusable remote judgment");
                    last = e;
                }
            }
        }
        Err(Error::Protocol {
            endpoint: self.config.endpoint(),
            message: format!(
                "no usable judgment after {} attempts: {last}",
                self.config.max_retries + 1
            ),
        })
    }
}
