use std::collections::BTreeMap;

use steerbench_core::codec;
use steerbench_core::persona::{generate_personas, DEFAULT_MIX};
use steerbench_core::schema::*;
use steerbench_core::sft::*;
use steerbench_core::user_sim::OracleUser;

/// A morning-hygiene tuple in the shape of the worked example: timing,
/// communication style and context adaptation are active.
fn hygiene_tuple() -> DatasetTuple {
    use PreferenceCategory::*;
    let mut prefs = BTreeMap::new();
    prefs.insert(Scheduling, "Hold non-urgent prompts until I finish getting ready.".to_owned());
    prefs.insert(CommunicationStyle, "One short line is enough in the morning.".to_owned());
    prefs.insert(ContextAdaptation, "Bathroom time is private, so keep it voice-free.".to_owned());
    DatasetTuple {
        persona_id: "P042".into(),
        demographics: Demographics {
            age_range: "25-34".into(),
            gender: "female".into(),
            occupation_category: "healthcare".into(),
            education: "bachelor degree".into(),
            region: "midwest".into(),
            traits: vec!["punctual".into(), "private".into()],
        },
        activity: ActivityContext {
            activity_type: ActivityType::Health,
            day: 0,
            period_index: 0,
            start_minute: 390,
            duration_minutes: 25,
            description: "health: brushing teeth and showering before work".into(),
            template_id: 8,
        },
        active_categories: [Scheduling, CommunicationStyle, ContextAdaptation].into_iter().collect(),
        preference_description: "Wait until I'm done getting ready, and keep any note to a single quiet line.".into(),
        category_preferences: prefs,
        preferred_response: "(after 6:55) Morning! Your first meeting moved to 9:30.".into(),
    }
}

#[test]
fn input_rendering_carries_persona_and_activity_only() {
    let t = hygiene_tuple();
    let input = render_input(&t);
    assert!(input.starts_with("Persona P042: age 25-34, female, healthcare"));
    assert!(input.contains("6:30 AM to 6:55 AM"));
    assert!(input.contains("brushing teeth"));
    assert!(!input.contains("single quiet line"));
    assert!(!input.contains("meeting moved"));
}

#[test]
fn phase_one_emits_one_example_per_active_category() {
    let ex = phase1_examples(&[hygiene_tuple()]).unwrap();
    let cats: Vec<_> = ex.iter().map(|e| e.category).collect();
    use PreferenceCategory::*;
    assert_eq!(cats, vec![Scheduling, CommunicationStyle, ContextAdaptation]);
    assert_eq!(ex[0].label, Scheduling.label());
    assert_eq!(ex[1].target, "One short line is enough in the morning.");
    assert!(ex.iter().all(|e| e.input == ex[0].input && e.persona_id == "P042"));
}

#[test]
fn phase_two_carries_full_target() {
    let t = hygiene_tuple();
    let ex = phase2_examples(std::slice::from_ref(&t)).unwrap();
    assert_eq!(ex.len(), 1);
    assert_eq!(ex[0].target.active_categories, t.active_categories);
    assert_eq!(ex[0].target.preferred_response, t.preferred_response);
    assert_eq!(ex[0].tuple, t);
}

#[test]
fn exports_write_one_line_per_example() {
    let tmp = tempfile::tempdir().unwrap();
    let personas = generate_personas(5, 2).unwrap();
    let mut tuples = steerbench_core::dataset::generate_dataset(&personas, 2, &DEFAULT_MIX, 4, &OracleUser).unwrap();
    tuples.push(hygiene_tuple());
    let p1 = tmp.path().join("phase1.jsonl");
    let p2 = tmp.path().join("phase2.jsonl");
    let n1 = export_phase1(&tuples, &p1).unwrap();
    let n2 = export_phase2(&tuples, &p2).unwrap();
    let expected: usize = tuples.iter().map(|t| t.active_categories.len()).sum();
    assert_eq!(n1, expected);
    assert_eq!(n2, tuples.len());
    let back: Vec<Phase2Example> = codec::read_lines(&p2).unwrap();
    assert_eq!(back.last().unwrap().tuple, hygiene_tuple());
    let back1: Vec<Phase1Example> = codec::read_lines(&p1).unwrap();
    assert_eq!(back1.len(), n1);
}

#[test]
fn empty_input_gives_empty_file() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("empty.jsonl");
    assert_eq!(export_phase1(&[], &p).unwrap(), 0);
    assert_eq!(std::fs::read(&p).unwrap(), b"");
}

#[test]
fn incomplete_tuples_are_refused() {
    let mut t = hygiene_tuple();
    t.active_categories = CategorySet::EMPTY;
    assert!(phase1_examples(&[t]).is_err());
    let mut t = hygiene_tuple();
    t.preferred_response = " ".into();
    assert!(phase2_examples(&[t]).is_err());
}
