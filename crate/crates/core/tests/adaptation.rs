use steerbench_core::adaptation::*;
use steerbench_core::metrics::Embedder;
use steerbench_core::model::{ActivationModel, ModelConfig};
use steerbench_core::schema::*;
use steerbench_core::steering::SteeringConfig;
use steerbench_core::Error;

fn model() -> ActivationModel {
    ActivationModel::new(ModelConfig::default()).unwrap()
}

fn ctx(description: &str) -> ActivityContext {
    ActivityContext {
        activity_type: ActivityType::Productivity,
        day: 3,
        period_index: 4,
        start_minute: 800,
        duration_minutes: 45,
        description: description.into(),
        template_id: 2,
    }
}

fn record(i: u32, preference: &str, feedback: Option<Feedback>) -> InteractionRecord {
    let intervene = feedback.is_some();
    InteractionRecord {
        persona_id: "P0003".into(),
        opportunity_index: i,
        period_index: 0,
        split: Split::Seen,
        activity: ctx(&format!("productivity: task {i}")),
        assistant_decision: if intervene { Decision::Intervene } else { Decision::Silent },
        user_welcome: Welcome::Unwelcome,
        response_text: if intervene { format!("note {i}") } else { String::new() },
        response_descriptor: [0.6, 0.5, 0.5, 0.5, 0.5],
        active_categories_true: CategorySet::EMPTY,
        active_categories_pred: CategorySet::EMPTY,
        preference_text: preference.into(),
        generated_preference_text: String::new(),
        iqa_ratings: None,
        feedback,
    }
}

/// Brute force: score every record, then repeatedly take the best
/// remaining one, preferring later records on equal scores.
fn oracle_top5(history: &[InteractionRecord], query: &str) -> Vec<usize> {
    let e = Embedder::default();
    let q = e.embed(query).unwrap();
    let scores: Vec<f64> = history
        .iter()
        .map(|r| e.embed(&r.preference_text).map_or(0.0, |v| v.iter().zip(&q).map(|(a, b)| a * b).sum()))
        .collect();
    let mut left: Vec<usize> = (0..history.len()).collect();
    let mut out = Vec::new();
    while out.len() < 5 && !left.is_empty() {
        let mut best = left[0];
        for &i in &left {
            if scores[i] > scores[best] || (scores[i] == scores[best] && i > best) {
                best = i;
            }
        }
        out.push(best);
        left.retain(|&i| i != best);
    }
    out
}

#[test]
fn icl_retrieves_top_five_like_brute_force() {
    let m = model();
    let prefs = [
        "keep it brief at my desk",
        "budget review needs focus",
        "no reminders while cooking",
        "brief notes during the budget review",
        "",
        "desk work is important focus time",
        "ask-first before booking anything",
        "budget review budget review",
        "later please",
        "review notes brief",
        "review notes brief",
    ];
    let mut s = SessionState::new("P0003", Strategy::Icl, &m, SteeringConfig::default()).unwrap();
    for (i, p) in prefs.iter().enumerate() {
        s = s.observe(record(i as u32, p, None), &m).unwrap();
    }
    for q in ["productivity: budget review at the desk", "cooking: dinner", "zzz"] {
        let got = s.retrieve(&ctx(q), &Embedder::default());
        assert_eq!(got, oracle_top5(&s.history, q), "query {q}");
    }
    // Equal scores: the later duplicate wins.
    let got = s.retrieve(&ctx("review notes brief"), &Embedder::default());
    assert_eq!(&got[..2], &[10, 9]);
}

#[test]
fn icl_with_empty_history_matches_static() {
    let m = model();
    let c = ctx("productivity: quarterly planning");
    let st = SessionState::new("P0003", Strategy::Static, &m, SteeringConfig::default()).unwrap();
    let icl = SessionState::new("P0003", Strategy::Icl, &m, SteeringConfig::default()).unwrap();
    let (a, b) = (st.respond(&m, &c).unwrap(), icl.respond(&m, &c).unwrap());
    assert_eq!(a, b);
    assert!(b.digest.is_empty());
}

#[test]
fn icl_digest_reports_outcomes_and_feedback() {
    let m = model();
    let mut fb = Feedback::new(Action::Reject);
    fb.satisfaction.insert(PreferenceCategory::Scheduling, 1);
    fb.text.insert(PreferenceCategory::Scheduling, "wait until later".into());
    let s = SessionState::new("P0003", Strategy::Icl, &m, SteeringConfig::default())
        .unwrap()
        .observe(record(0, "budget review later", Some(fb)), &m)
        .unwrap();
    let r = s.respond(&m, &ctx("productivity: budget review")).unwrap();
    assert_eq!(r.digest, "[productivity: task 0: rejected, wait until later; wait until later]");
    assert!(r.predicted_categories.contains(PreferenceCategory::Scheduling));
}

#[test]
fn steering_session_with_zero_strength_matches_static() {
    let m = model();
    let c = ctx("productivity: inbox cleanup");
    let st = SessionState::new("P0003", Strategy::Static, &m, SteeringConfig::default()).unwrap();
    let sv = SessionState::new("P0003", Strategy::Steering, &m, SteeringConfig::default()).unwrap();
    let (a, b) = (st.respond(&m, &c).unwrap(), sv.respond(&m, &c).unwrap());
    assert_eq!(a, b);
    assert!(!b.steered);
}

#[test]
fn rejection_steers_and_static_ignores_it() {
    let m = model();
    let fb = Feedback::new(Action::Reject);
    let steer = SessionState::new("P0003", Strategy::Steering, &m, SteeringConfig::default())
        .unwrap()
        .observe(record(0, "later", Some(fb.clone())), &m)
        .unwrap();
    assert_eq!(steer.alphas(), [0.25, 0.0, 0.0, 0.0, 0.0]);
    let c = ctx("productivity: inbox cleanup");
    let base = SessionState::new("P0003", Strategy::Static, &m, SteeringConfig::default()).unwrap();
    let before = base.respond(&m, &c).unwrap();
    let after = steer.respond(&m, &c).unwrap();
    assert!(after.steered);
    assert!(after.descriptor[0] < before.descriptor[0], "{} vs {}", after.descriptor[0], before.descriptor[0]);

    let stat = base.observe(record(0, "later", Some(fb)), &m).unwrap();
    assert!(stat.steering.is_none());
    assert_eq!(stat.history.len(), 1);
    assert_eq!(stat.respond(&m, &c).unwrap(), before);
}

#[test]
fn accept_with_full_marks_only_decays() {
    let m = model();
    let mut s = SessionState::new("P0003", Strategy::Steering, &m, SteeringConfig::default())
        .unwrap()
        .observe(record(0, "later", Some(Feedback::new(Action::Reject))), &m)
        .unwrap();
    let mut fb = Feedback::new(Action::Accept);
    for c in PreferenceCategory::ALL {
        fb.satisfaction.insert(c, 5);
    }
    s = s.observe(record(1, "fine", Some(fb)), &m).unwrap();
    assert!((s.alphas()[0] - 0.25 * 0.98).abs() < 1e-15);
}

#[test]
fn foreign_records_and_dpo_are_refused() {
    let m = model();
    let s = SessionState::new("P0003", Strategy::Static, &m, SteeringConfig::default()).unwrap();
    let mut r = record(0, "x", None);
    r.persona_id = "P9999".into();
    assert!(matches!(s.observe(r, &m), Err(Error::Contract(_))));
    assert!(matches!(
        SessionState::new("P0003", Strategy::Dpo, &m, SteeringConfig::default()),
        Err(Error::NotImplemented(_))
    ));
    assert_eq!("steering".parse::<Strategy>().unwrap(), Strategy::Steering);
    assert!("rlhf".parse::<Strategy>().is_err());
}
