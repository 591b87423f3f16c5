//! Feedback-driven per-category activation steering.
//!
//! Each category keeps running means of layer activations over preferred
//! (`+`) and rejected (`-`) texts. Their difference is the category's
//! steering direction; a bounded, decaying strength scales its
//! contribution at inference time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, ActivationEncoder, SteeringInjection};
use crate::schema::{Action, CategorySet, Feedback, InteractionRecord, PreferenceCategory};
use crate::templates::TIMING_FALLBACK;

/// Strengths below this are snapped to zero.
pub const ALPHA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub tau: u8,
    pub eta: f64,
    pub gamma: f64,
    pub alpha_max: f64,
    /// Number of layers to steer; `None` means `ceil(L / 4)`.
    #[serde(default)]
    pub select_layers: Option<usize>,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        SteeringConfig {
            tau: 3,
            eta: 0.25,
            gamma: 0.98,
            alpha_max: 1.0,
            select_layers: None,
        }
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::validation("steering.eta", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation("steering.gamma", "must lie in [0,1]"));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max.is_finite()) {
            return Err(Error::validation("steering.alpha_max", "must be positive"));
        }
        if self.select_layers == Some(0) {
            return Err(Error::validation("steering.select_layers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn layer_count(&self, layers: usize) -> usize {
        self.select_layers.unwrap_or(layers.div_ceil(4)).min(layers)
    }
}

/// Running statistics for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryState {
    /// Per-layer running mean of preferred-text activations.
    pub pos_mean: Vec<Vec<f64>>,
    pub neg_mean: Vec<Vec<f64>>,
    pub pos_count: u64,
    pub neg_count: u64,
    pub alpha: f64,
}

impl CategoryState {
    fn new(layers: usize, dim: usize) -> Self {
        CategoryState {
            pos_mean: vec![vec![0.0; dim]; layers],
            neg_mean: vec![vec![0.0; dim]; layers],
            pos_count: 0,
            neg_count: 0,
            alpha: 0.0,
        }
    }
}

/// A user's complete personalization state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringState {
    pub layers: usize,
    pub hidden_dim: usize,
    pub categories: Vec<CategoryState>,
    /// 1-based, ascending.
    pub selected_layers: Vec<usize>,
    pub config: SteeringConfig,
}

/// One preferred/rejected text pair for a category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub category: PreferenceCategory,
    pub negative_text: String,
    pub positive_text: String,
}

/// Whether feedback should trigger a steering update.
pub fn is_steering_signal(feedback: &Feedback, tau: u8) -> bool {
    matches!(feedback.action, Action::Reject | Action::Ignore)
        || feedback.satisfaction.values().any(|s| *s < tau)
}

/// Build contrastive pairs from a signaling record.
pub fn extract_pairs(record: &InteractionRecord, tau: u8) -> Result<Vec<ContrastivePair>> {
    let feedback = record
        .feedback
        .as_ref()
        .filter(|f| is_steering_signal(f, tau))
        .ok_or_else(|| Error::Contract("record carries no steering signal".into()))?;
    if record.response_text.trim().is_empty() {
        return Err(Error::Contract("steering pairs need a response text".into()));
    }
    let low: Vec<PreferenceCategory> = feedback
        .satisfaction
        .iter()
        .filter(|(_, s)| **s < tau)
        .map(|(c, _)| *c)
        .collect();
    let mut pairs: Vec<ContrastivePair> = low
        .iter()
        .filter_map(|c| {
            let text = feedback.text.get(c)?.trim();
            (!text.is_empty()).then(|| ContrastivePair {
                category: *c,
                negative_text: record.response_text.clone(),
                positive_text: text.to_owned(),
            })
        })
        .collect();
    if low.is_empty() && matches!(feedback.action, Action::Reject | Action::Ignore) {
        pairs.push(ContrastivePair {
            category: PreferenceCategory::Scheduling,
            negative_text: record.response_text.clone(),
            positive_text: TIMING_FALLBACK.to_owned(),
        });
    }
    Ok(pairs)
}

impl SteeringState {
    pub fn new(layers: usize, hidden_dim: usize, config: SteeringConfig) -> Result<Self> {
        config.validate()?;
        if layers == 0 || hidden_dim == 0 {
            return Err(Error::invalid("layers and hidden_dim must be positive"));
        }
        let m = config.layer_count(layers);
        Ok(SteeringState {
            layers,
            hidden_dim,
            categories: (0..PreferenceCategory::COUNT)
                .map(|_| CategoryState::new(layers, hidden_dim))
                .collect(),
            selected_layers: (1..=m).collect(),
            config,
        })
    }

    pub fn for_encoder(encoder: &impl ActivationEncoder, config: SteeringConfig) -> Result<Self> {
        Self::new(encoder.layers(), encoder.hidden_dim(), config)
    }

    pub fn category(&self, c: PreferenceCategory) -> &CategoryState {
        &self.categories[c.index()]
    }

    pub fn alphas(&self) -> [f64; 5] {
        std::array::from_fn(|k| self.categories[k].alpha)
    }

    /// `mu+ - mu-` at 1-based `layer`; zero while either side is empty.
    pub fn direction(&self, c: PreferenceCategory, layer: usize) -> Vec<f64> {
        let s = self.category(c);
        if s.pos_count == 0 || s.neg_count == 0 || !(1..=self.layers).contains(&layer) {
            return vec![0.0; self.hidden_dim];
        }
        s.pos_mean[layer - 1]
            .iter()
            .zip(&s.neg_mean[layer - 1])
            .map(|(p, n)| p - n)
            .collect()
    }

    fn layer_score(&self, layer: usize) -> f64 {
        PreferenceCategory::ALL
            .iter()
            .map(|c| norm(&self.direction(*c, layer)))
            .sum()
    }

    fn reselect_layers(&mut self) {
        let m = self.config.layer_count(self.layers);
        let mut ranked: Vec<(usize, f64)> =
            (1..=self.layers).map(|l| (l, self.layer_score(l))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut chosen: Vec<usize> = ranked.into_iter().take(m).map(|(l, _)| l).collect();
        chosen.sort_unstable();
        self.selected_layers = chosen;
    }

    /// Fold `pairs` into the running means, step the strength of every
    /// touched category once, and reselect layers.
    pub fn update(&self, pairs: &[ContrastivePair], encoder: &impl ActivationEncoder) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("update needs at least one pair"));
        }
        if encoder.layers() != self.layers || encoder.hidden_dim() != self.hidden_dim {
            return Err(Error::invalid(format!(
                "encoder shape {}x{} does not match state {}x{}",
                encoder.layers(),
                encoder.hidden_dim(),
                self.layers,
                self.hidden_dim
            )));
        }
        let mut next = self.clone();
        let mut touched = CategorySet::EMPTY;
        for p in pairs {
            if p.positive_text.trim().is_empty() || p.negative_text.trim().is_empty() {
                return Err(Error::invalid("contrastive texts must be non-empty"));
            }
            let pos = encoder.encode(&p.positive_text)?;
            let neg = encoder.encode(&p.negative_text)?;
            let s = &mut next.categories[p.category.index()];
            s.pos_count += 1;
            s.neg_count += 1;
            fold_mean(&mut s.pos_mean, &pos.per_layer, s.pos_count);
            fold_mean(&mut s.neg_mean, &neg.per_layer, s.neg_count);
            touched.insert(p.category);
        }
        for c in touched.iter() {
            let s = &mut next.categories[c.index()];
            s.alpha = (s.alpha + next.config.eta).min(next.config.alpha_max);
        }
        next.reselect_layers();
        Ok(next)
    }

    /// Geometric decay of every strength outside `signaled`.
    pub fn decay(&self, signaled: CategorySet) -> Self {
        let mut next = self.clone();
        for c in PreferenceCategory::ALL {
            if signaled.contains(c) {
                continue;
            }
            let s = &mut next.categories[c.index()];
            s.alpha *= next.config.gamma;
            if s.alpha < ALPHA_FLOOR {
                s.alpha = 0.0;
            }
        }
        next
    }

    /// Sum of strength-weighted unit directions on the selected layers.
    pub fn build_injection(&self) -> SteeringInjection {
        let mut inj = SteeringInjection::default();
        if self.categories.iter().all(|s| s.alpha == 0.0) {
            return inj;
        }
        for &layer in &self.selected_layers {
            let mut offset = vec![0.0; self.hidden_dim];
            let mut any = false;
            for c in PreferenceCategory::ALL {
                let alpha = self.category(c).alpha;
                if alpha == 0.0 {
                    continue;
                }
                let v = self.direction(c, layer);
                let n = norm(&v);
                if n == 0.0 {
                    continue;
                }
                offset.iter_mut().zip(&v).for_each(|(o, x)| *o += alpha * x / n);
                any = true;
            }
            if any {
                inj.per_layer_offsets.insert(layer, offset);
            }
        }
        inj
    }
}

fn fold_mean(mean: &mut [Vec<f64>], sample: &[Vec<f64>], count: u64) {
    let n = count as f64;
    for (m, x) in mean.iter_mut().zip(sample) {
        for (a, b) in m.iter_mut().zip(x) {
            *a += (b - *a) / n;
        }
    }
}
