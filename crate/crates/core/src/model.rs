//! Seeded layered encoder standing in for the on-device language model.
//!
//! Text is mean-pooled into a first-layer state and pushed through `L - 1`
//! fixed random `tanh` layers. Steering offsets are added to layer states
//! during the forward pass. A five-way readout on the last layer gives the
//! behavior descriptor that drives the intervention decision and the
//! rendered response.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persona::TIME_SLOTS;
use crate::schema::{ActivityContext, ActivityType, Decision, PreferenceCategory};
use crate::templates;
use crate::text::{fnv1a, tokenize, Lexicon};

/// Probabilities are kept away from 0 and 1 before taking logits.
const PRIOR_CLAMP: f64 = 0.02;

fn default_layers() -> usize {
    6
}
fn default_dim() -> usize {
    64
}
fn default_seed() -> u64 {
    7
}
fn default_salience() -> f64 {
    4.0
}
fn default_gain() -> f64 {
    1.0
}
fn default_embedding_scale() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub lexicon: Lexicon,
    /// Embedding scale of lexicon keywords relative to ordinary tokens.
    #[serde(default = "default_salience")]
    pub salience: f64,
    #[serde(default = "default_gain")]
    pub readout_gain: f64,
    /// Standard deviation of ordinary token embeddings.
    #[serde(default = "default_embedding_scale")]
    pub embedding_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: default_layers(),
            hidden_dim: default_dim(),
            seed: default_seed(),
            lexicon: Lexicon::default(),
            salience: default_salience(),
            readout_gain: default_gain(),
            embedding_scale: default_embedding_scale(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::validation("model.layers", "need at least 2 layers"));
        }
        if self.hidden_dim < 8 {
            return Err(Error::validation("model.hidden_dim", "need at least 8 dimensions"));
        }
        if !(self.salience.is_finite() && self.salience > 0.0) {
            return Err(Error::validation("model.salience", "must be positive"));
        }
        if !(self.embedding_scale.is_finite() && self.embedding_scale > 0.0) {
            return Err(Error::validation("model.embedding_scale", "must be positive"));
        }
        if !(self.readout_gain.is_finite() && self.readout_gain > 0.0) {
            return Err(Error::validation("model.readout_gain", "must be positive"));
        }
        Ok(())
    }
}

/// Per-layer states `h_1..h_L` of one encoded text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub per_layer: Vec<Vec<f64>>,
}

impl ActivationTrace {
    /// State at 1-based layer `layer`.
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.per_layer[layer - 1]
    }

    pub fn last(&self) -> &[f64] {
        self.per_layer.last().expect("traces have at least two layers")
    }
}

/// Offsets added to layer states during a forward pass, keyed by 1-based
/// layer index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SteeringInjection {
    pub per_layer_offsets: BTreeMap<usize, Vec<f64>>,
}

impl SteeringInjection {
    pub fn is_empty(&self) -> bool {
        self.per_layer_offsets.is_empty()
    }
}

/// Output of one generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub decision: Decision,
    pub descriptor: [f64; 5],
    pub response_text: String,
}

/// Population-level calibration: readout centering over calibration
/// contexts and a prior descriptor per (activity type, time slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub centers: [f64; 5],
    /// Indexed by `activity_type * TIME_SLOTS + slot`.
    pub prior: Vec<[f64; 5]>,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            centers: [0.0; 5],
            prior: vec![[0.5; 5]; ActivityType::COUNT * TIME_SLOTS as usize],
        }
    }
}

impl Calibration {
    pub fn prior_for(&self, t: ActivityType, slot: u32) -> &[f64; 5] {
        &self.prior[t.index() * TIME_SLOTS as usize + slot.min(TIME_SLOTS - 1) as usize]
    }
}

/// Anything that maps text to per-layer activations.
pub trait ActivationEncoder {
    fn layers(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<ActivationTrace>;
}

/// Anything that decides and phrases a proactive intervention.
pub trait AssistantBackend {
    fn generate(
        &self,
        context: &ActivityContext,
        history_digest: &str,
        injection: &SteeringInjection,
    ) -> Result<Generation>;
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    (p / (1.0 - p)).ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The surrogate model: frozen weights plus a population calibration.
#[derive(Debug, Clone)]
pub struct ActivationModel {
    config: ModelConfig,
    /// `L - 1` row-major `d x d` matrices each.
    w: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    readout: Vec<Vec<f64>>,
    calibration: Calibration,
}

impl ActivationModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let scale = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(config.seed, b"weights"));
        let mut matrix = || -> Vec<f64> {
            (0..d * d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect()
        };
        let mut w = Vec::with_capacity(config.layers - 1);
        let mut u = Vec::with_capacity(config.layers - 1);
        for _ in 1..config.layers {
            w.push(matrix());
            u.push(matrix());
        }
        let mut model = ActivationModel {
            config,
            w,
            u,
            readout: Vec::new(),
            calibration: Calibration::default(),
        };
        let readout = PreferenceCategory::ALL
            .iter()
            .map(|c| {
                let kw = model.config.lexicon.canonical(*c).to_owned();
                let trace = model.encode(&kw).expect("keywords tokenize");
                let h = trace.last();
                let n = norm(h);
                h.iter().map(|x| x / n).collect()
            })
            .collect();
        model.readout = readout;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = calibration;
        self
    }

    /// Unit readout direction of category `c` on the last layer.
    pub fn readout_row(&self, c: PreferenceCategory) -> &[f64] {
        &self.readout[c.index()]
    }

    fn gaussian(&self, key: &[u8]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.config.seed, key));
        (0..self.config.hidden_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }

    /// Embedding of one token. Keywords share their category's canonical
    /// vector, negated for low-pole keywords and scaled by salience.
    pub fn token_embedding(&self, token: &str) -> Vec<f64> {
        match self.config.lexicon.lookup(token) {
            Some(e) => {
                let canonical = self.config.lexicon.canonical(e.category);
                let s = self.config.embedding_scale * self.config.salience * e.pole.sign();
                let mut key = b"kw:".to_vec();
                key.extend_from_slice(canonical.as_bytes());
                self.gaussian(&key).into_iter().map(|x| x * s).collect()
            }
            None => {
                let mut key = b"tok:".to_vec();
                key.extend_from_slice(token.as_bytes());
                let s = self.config.embedding_scale;
                self.gaussian(&key).into_iter().map(|x| x * s).collect()
            }
        }
    }

    fn first_layer(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid("text is empty after tokenization"));
        }
        let mut h = vec![0.0; self.config.hidden_dim];
        for t in &tokens {
            for (a, b) in h.iter_mut().zip(self.token_embedding(t)) {
                *a += b;
            }
        }
        let n = tokens.len() as f64;
        h.iter_mut().for_each(|x| *x /= n);
        Ok(h)
    }

    fn check_injection(&self, injection: &SteeringInjection) -> Result<()> {
        for (layer, v) in &injection.per_layer_offsets {
            if !(1..=self.config.layers).contains(layer) {
                return Err(Error::invalid(format!(
                    "injection layer {layer} outside 1..={}",
                    self.config.layers
                )));
            }
            if v.len() != self.config.hidden_dim || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "injection at layer {layer} must be {} finite values",
                    self.config.hidden_dim
                )));
            }
        }
        Ok(())
    }

    fn forward(&self, mut h1: Vec<f64>, injection: &SteeringInjection) -> ActivationTrace {
        let d = self.config.hidden_dim;
        if let Some(off) = injection.per_layer_offsets.get(&1) {
            h1.iter_mut().zip(off).for_each(|(a, b)| *a += b);
        }
        let mut per_layer = Vec::with_capacity(self.config.layers);
        per_layer.push(h1);
        for l in 1..self.config.layers {
            let prev = &per_layer[l - 1];
            let base = &per_layer[0];
            let (w, u) = (&self.w[l - 1], &self.u[l - 1]);
            let mut h: Vec<f64> = (0..d)
                .map(|i| {
                    let row = i * d;
                    (dot(&w[row..row + d], prev) + dot(&u[row..row + d], base)).tanh()
                })
                .collect();
            if let Some(off) = injection.per_layer_offsets.get(&(l + 1)) {
                h.iter_mut().zip(off).for_each(|(a, b)| *a += b);
            }
            per_layer.push(h);
        }
        ActivationTrace { per_layer }
    }

    /// Forward pass of `text` with `injection` applied.
    pub fn trace_with(&self, text: &str, injection: &SteeringInjection) -> Result<ActivationTrace> {
        self.check_injection(injection)?;
        Ok(self.forward(self.first_layer(text)?, injection))
    }

    /// Raw, uncentered readout projections of a last-layer state.
    pub fn projections(&self, last: &[f64]) -> [f64; 5] {
        std::array::from_fn(|k| dot(&self.readout[k], last))
    }

    /// Behavior descriptor for a last-layer state in a given context.
    pub fn readout(&self, last: &[f64], t: ActivityType, slot: u32) -> [f64; 5] {
        let proj = self.projections(last);
        let prior = self.calibration.prior_for(t, slot);
        let g = self.config.readout_gain;
        std::array::from_fn(|k| sigmoid(g * (proj[k] - self.calibration.centers[k]) + logit(prior[k])))
    }

    /// The text the model conditions on for an opportunity.
    pub fn render_prompt(context: &ActivityContext, history_digest: &str) -> String {
        if history_digest.trim().is_empty() {
            context.description.clone()
        } else {
            format!("{} {}", context.description, history_digest)
        }
    }

    /// Descriptor of arbitrary text in the context's activity type and slot.
    pub fn descriptor_for(
        &self,
        text: &str,
        context: &ActivityContext,
        injection: &SteeringInjection,
    ) -> Result<[f64; 5]> {
        let trace = self.trace_with(text, injection)?;
        Ok(self.readout(trace.last(), context.activity_type, context.period_index))
    }

    /// Recenter the readout over calibration texts, keeping the prior table.
    pub fn calibrate_centers<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let mut sum = [0.0; 5];
        let mut n = 0usize;
        for t in texts {
            let p = self.projections(self.encode(t)?.last());
            sum.iter_mut().zip(p).for_each(|(s, x)| *s += x);
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("no calibration texts"));
        }
        self.calibration.centers = sum.map(|s| s / n as f64);
        Ok(())
    }

    pub fn set_prior(&mut self, prior: Vec<[f64; 5]>) -> Result<()> {
        if prior.len() != ActivityType::COUNT * TIME_SLOTS as usize {
            return Err(Error::invalid("prior table has the wrong shape"));
        }
        self.calibration.prior = prior;
        Ok(())
    }
}

impl ActivationEncoder for ActivationModel {
    fn layers(&self) -> usize {
        self.config.layers
    }

    fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn encode(&self, text: &str) -> Result<ActivationTrace> {
        Ok(self.forward(self.first_layer(text)?, &SteeringInjection::default()))
    }
}

impl AssistantBackend for ActivationModel {
    fn generate(
        &self,
        context: &ActivityContext,
        history_digest: &str,
        injection: &SteeringInjection,
    ) -> Result<Generation> {
        let prompt = Self::render_prompt(context, history_digest);
        let descriptor = self.descriptor_for(&prompt, context, injection)?;
        let decision = if descriptor[PreferenceCategory::Scheduling.index()] >= 0.5 {
            Decision::Intervene
        } else {
            Decision::Silent
        };
        let response_text = match decision {
            Decision::Intervene => templates::render_response(&descriptor, context.activity_type),
            Decision::Silent => String::new(),
        };
        Ok(Generation {
            decision,
            descriptor,
            response_text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures;

    fn model() -> ActivationModel {
        ActivationModel::new(ModelConfig::default()).unwrap()
    }

    #[test]
    fn encode_is_deterministic_and_order_invariant() {
        let m = model();
        assert_eq!(m.encode("hello").unwrap(), m.encode("hello").unwrap());
        assert_eq!(m.encode("a b").unwrap(), m.encode("b a").unwrap());
        let t = m.encode("walking the dog").unwrap();
        assert_eq!(t.per_layer.len(), 6);
        for l in 2..=6 {
            assert!(t.layer(l).iter().all(|x| x.abs() < 1.0));
        }
        assert!(m.encode(" ,. ").is_err());
    }

    #[test]
    fn low_pole_keywords_mirror_the_canonical_keyword() {
        let m = model();
        let hi = m.encode("brief").unwrap();
        let lo = m.encode("detailed").unwrap();
        for l in 1..=6 {
            for (a, b) in hi.layer(l).iter().zip(lo.layer(l)) {
                assert!((a + b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_injection_is_the_base_model() {
        let m = model();
        let ctx = fixtures::activity();
        let a = m.generate(&ctx, "", &SteeringInjection::default()).unwrap();
        let b = m.descriptor_for(&ctx.description, &ctx, &SteeringInjection::default()).unwrap();
        assert_eq!(a.descriptor, b);
        assert_eq!(a.response_text.is_empty(), a.decision == Decision::Silent);
    }

    #[test]
    fn bad_injection_layers_are_rejected() {
        let m = model();
        let ctx = fixtures::activity();
        let mut inj = SteeringInjection::default();
        inj.per_layer_offsets.insert(7, vec![0.0; 64]);
        assert!(m.generate(&ctx, "", &inj).is_err());
        let mut inj = SteeringInjection::default();
        inj.per_layer_offsets.insert(2, vec![0.0; 3]);
        assert!(m.generate(&ctx, "", &inj).is_err());
    }

    #[test]
    fn last_layer_substitution_yields_the_target_readout() {
        let m = model();
        let ctx = fixtures::activity();
        let base = m.encode(&ctx.description).unwrap();
        let preferred = m.encode("keep it brief and ask-first").unwrap();
        let offset: Vec<f64> = preferred.last().iter().zip(base.last()).map(|(p, b)| p - b).collect();
        let mut inj = SteeringInjection::default();
        inj.per_layer_offsets.insert(6, offset);
        let got = m.generate(&ctx, "", &inj).unwrap().descriptor;
        let want = m.readout(preferred.last(), ctx.activity_type, ctx.period_index);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}
