use proptest::prelude::*;
use steerbench_core::persona::generate_personas;
use steerbench_core::schema::*;
use steerbench_core::user_sim::*;

fn ctx(t: usize, slot: u32) -> ActivityContext {
    ActivityContext {
        activity_type: ActivityType::ALL[t],
        day: 0,
        period_index: slot,
        start_minute: 360 + slot * 96,
        duration_minutes: 30,
        description: "misc: errands".into(),
        template_id: 60,
    }
}

proptest! {
    #[test]
    fn judgments_follow_the_decision_rules(
        persona in 0usize..40,
        t in 0usize..8,
        slot in 0u32..10,
        descriptor in prop::array::uniform5(0.0f64..=1.0),
        intervene in any::<bool>(),
    ) {
        let p = &generate_personas(40, 17).unwrap()[persona];
        let memory = EpisodicMemory::new(10).unwrap();
        let decision = if intervene { Decision::Intervene } else { Decision::Silent };
        let j = OracleUser.judge(p, &memory, &ctx(t, slot), decision, &descriptor).unwrap();
        let welcome = is_welcome(&p.preference_profile, ActivityType::ALL[t], slot);
        prop_assert_eq!(j.welcome.is_welcome(), welcome);
        let target = targets(&p.preference_profile, ActivityType::ALL[t], slot);
        match j.feedback {
            None => {
                prop_assert!(!intervene);
                prop_assert_eq!(j.iqa_ratings, [if welcome { 1 } else { 5 }, 5, 3, 3, 3]);
            }
            Some(fb) => {
                prop_assert!(intervene);
                let s: Vec<u8> = PreferenceCategory::ALL.iter().map(|c| fb.satisfaction[c]).collect();
                for (k, sk) in s.iter().enumerate() {
                    let d = (descriptor[k] - target[k]).abs().min(1.0);
                    let expected = (1.0 + 4.0 * (1.0 - d)).round() as u8;
                    prop_assert_eq!(*sk, expected);
                    let c = PreferenceCategory::ALL[k];
                    prop_assert_eq!(fb.text.contains_key(&c), *sk < 3);
                    if *sk < 3 {
                        prop_assert!(j.active_categories.contains(c));
                    }
                }
                let min = *s.iter().min().unwrap();
                let action = if !welcome { Action::Reject } else if min >= 3 { Action::Accept } else { Action::Ignore };
                prop_assert_eq!(fb.action, action);
                prop_assert_eq!(j.iqa_ratings[0], if welcome { 5 } else { 1 });
            }
        }
        for c in PreferenceCategory::ALL {
            if p.preference_profile.weights[c.index()] >= 0.5 {
                prop_assert!(j.active_categories.contains(c));
            }
        }
    }
}

#[test]
fn out_of_range_descriptor_is_refused() {
    let p = &generate_personas(1, 1).unwrap()[0];
    let memory = EpisodicMemory::new(10).unwrap();
    let bad = [0.5, 1.5, 0.5, 0.5, 0.5];
    assert!(OracleUser.judge(p, &memory, &ctx(0, 0), Decision::Intervene, &bad).is_err());
    assert!(EpisodicMemory::new(0).is_err());
}
