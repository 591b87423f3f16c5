//! Population-to-individual personalization engine for proactive
//! assistants.
//!
//! A seeded persona and schedule simulator produces proactive opportunities,
//! a layered surrogate encoder decides whether and how to intervene, and
//! per-user activation steering adapts that behavior from feedback. The
//! [`metrics`] and [`experiment`] modules evaluate adaptation strategies
//! against a rule-based simulated user.

pub mod adaptation;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod persona;
pub mod schema;
pub mod sft;
pub mod steering;
pub mod templates;
pub mod text;
pub mod user_sim;

pub use error::{Error, Result};
