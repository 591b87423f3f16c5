//! Versioned text templates: activity descriptions, assistant responses
//! rendered from behavior descriptors, and preference sentences.
//!
//! Activity and response templates deliberately avoid lexicon keywords so
//! that preference vocabulary only enters the system through what users
//! say.

use crate::schema::{ActivityType, PreferenceCategory};

pub const TEMPLATE_VERSION: &str = "templates-v1";

/// Number of description templates per activity type.
pub const TEMPLATES_PER_TYPE: usize = 8;

const BANK: [[&str; TEMPLATES_PER_TYPE]; ActivityType::COUNT] = [
    [
        "answering email before the {occupation} shift",
        "planning the week's deadlines",
        "deep work session on a {occupation} project",
        "team video call about quarterly goals",
        "reviewing documents at the desk",
        "updating spreadsheets and budgets",
        "studying for a certification exam",
        "organizing files as a {trait} planner",
    ],
    [
        "morning hygiene routine with shower and grooming",
        "jogging around the neighborhood",
        "yoga and stretching at home",
        "taking daily medication with water",
        "gym workout with weights",
        "meditation and breathing exercises",
        "walking the dog after a {occupation} day",
        "getting ready for a doctor appointment",
    ],
    [
        "cooking breakfast eggs and toast",
        "meal prepping lunches for the week",
        "baking bread from scratch",
        "making dinner for the family",
        "trying a new recipe as a {trait} cook",
        "packing snacks for the day",
        "grilling vegetables on the patio",
        "brewing coffee and making oatmeal",
    ],
    [
        "watching a streaming series",
        "playing video games online",
        "reading a novel on the couch",
        "listening to a podcast episode",
        "watching a football match",
        "playing board games with the family",
        "browsing social media feeds",
        "practicing guitar as a {trait} musician",
    ],
    [
        "driving to the {occupation} workplace",
        "commuting by bus into town",
        "biking to the grocery store",
        "waiting at the train station",
        "picking up kids from school by car",
        "riding a rideshare to an appointment",
        "walking to the subway",
        "refueling the car at the gas station",
    ],
    [
        "doing laundry and folding clothes",
        "vacuuming the living room",
        "washing dishes after dinner",
        "tidying the kitchen counters",
        "scrubbing the bathroom",
        "taking out the trash and recycling",
        "watering plants and sweeping the porch",
        "decluttering the garage as a {trait} organizer",
    ],
    [
        "having coffee with a friend",
        "calling parents on the phone",
        "attending a neighborhood meetup",
        "family dinner conversation",
        "coaching a youth soccer team",
        "hosting friends for game night",
        "texting with coworkers from the {occupation} team",
        "volunteering at a community center",
    ],
    [
        "running errands at the post office",
        "paying bills online",
        "shopping for groceries",
        "fixing a leaky faucet",
        "sorting mail and paperwork",
        "booking a car repair",
        "gardening in the backyard",
        "researching a vacation trip as a {trait} traveler",
    ],
];

/// Total number of description templates.
pub fn template_count() -> u32 {
    (ActivityType::COUNT * TEMPLATES_PER_TYPE) as u32
}

/// Global template id for the `slot`-th template of `t`.
pub fn template_id(t: ActivityType, slot: usize) -> u32 {
    (t.index() * TEMPLATES_PER_TYPE + slot) as u32
}

/// Activity type a template id belongs to.
pub fn template_type(id: u32) -> ActivityType {
    ActivityType::ALL[id as usize / TEMPLATES_PER_TYPE]
}

/// Render an activity description from a template, conditioned on the
/// persona's occupation and one of its traits.
pub fn render_description(id: u32, occupation: &str, trait_word: &str) -> String {
    let t = template_type(id);
    let raw = BANK[t.index()][id as usize % TEMPLATES_PER_TYPE];
    let body = raw
        .replace("{occupation}", occupation)
        .replace("{trait}", trait_word);
    format!("{}: {}", t.key(), body)
}

fn suggestion(t: ActivityType) -> &'static str {
    match t {
        ActivityType::Productivity => "your next meeting starts in ten minutes",
        ActivityType::Health => "remember to drink some water",
        ActivityType::Cooking => "the oven timer has two minutes left",
        ActivityType::Entertainment => "a new episode of your show is out",
        ActivityType::Transport => "traffic is building on your route",
        ActivityType::Cleaning => "the dryer cycle just finished",
        ActivityType::Social => "a friend sent you a message",
        ActivityType::Misc => "a package arrives this afternoon",
    }
}

/// Render an assistant response by binning each descriptor entry.
pub fn render_response(descriptor: &[f64; 5], t: ActivityType) -> String {
    let [timing, domain, autonomy, style, context] = *descriptor;
    let opener = if timing >= 0.8 {
        "Hey, right this minute:"
    } else if timing >= 0.65 {
        "Hi there,"
    } else {
        "Whenever you have a moment,"
    };
    let framing = if domain >= 0.6 {
        format!("for your {} plans, here is what matters most:", t.key())
    } else if domain >= 0.4 {
        format!("a note on {}:", t.key())
    } else {
        "a side note:".to_owned()
    };
    let body = if style >= 0.6 {
        format!("{}.", suggestion(t))
    } else if style >= 0.4 {
        format!("{}, with a couple of pointers.", suggestion(t))
    } else {
        format!(
            "{}, followed by background, options, reasoning and step by step instructions.",
            suggestion(t)
        )
    };
    let control = if autonomy >= 0.6 {
        "Want me to take care of it?"
    } else if autonomy >= 0.4 {
        "I can set it up if you like."
    } else {
        "I have already taken care of it."
    };
    let tailoring = if context >= 0.6 {
        " Tailored to what you are doing at the moment."
    } else if context < 0.4 {
        " Same reminder as always."
    } else {
        ""
    };
    format!("{opener} {framing} {body} {control}{tailoring}")
}

/// One preference sentence for category `c` at behavior level `value`
/// (a target or a descriptor entry in `[0,1]`).
pub fn preference_sentence(c: PreferenceCategory, value: f64, t: ActivityType) -> String {
    let ty = t.key();
    match c {
        PreferenceCategory::Scheduling if value >= 0.5 => {
            format!("a timely heads-up during {ty} is welcome.")
        }
        PreferenceCategory::Scheduling => {
            format!("during {ty} keep quiet-hours and wait until later.")
        }
        PreferenceCategory::DomainPrioritization if value >= 0.5 => {
            format!("{ty} is a priority so focus there.")
        }
        PreferenceCategory::DomainPrioritization => {
            format!("{ty} suggestions are optional and unimportant.")
        }
        PreferenceCategory::Autonomy if value >= 0.5 => {
            "always ask-first and confirm before acting.".to_owned()
        }
        PreferenceCategory::Autonomy => "go-ahead and handle-it automatically.".to_owned(),
        PreferenceCategory::CommunicationStyle if value >= 5.0 / 6.0 => {
            "keep it brief and concise.".to_owned()
        }
        PreferenceCategory::CommunicationStyle if value >= 0.5 => {
            "keep it short but clear.".to_owned()
        }
        PreferenceCategory::CommunicationStyle => {
            "give detailed and thorough explanations.".to_owned()
        }
        PreferenceCategory::ContextAdaptation if value >= 0.75 => {
            format!("adapt to my surroundings during {ty}.")
        }
        PreferenceCategory::ContextAdaptation => {
            "consistent behavior regardless of activity is fine.".to_owned()
        }
    }
}

/// Complaint text for category `c`, asking for more (`raise`) or less of
/// the behavior.
pub fn feedback_phrase(c: PreferenceCategory, raise: bool) -> &'static str {
    match (c, raise) {
        (PreferenceCategory::Scheduling, true) => "give a timely heads-up",
        (PreferenceCategory::Scheduling, false) => "not now, keep quiet-hours and wait until later",
        (PreferenceCategory::DomainPrioritization, true) => "focus on what is a priority",
        (PreferenceCategory::DomainPrioritization, false) => "this is optional and unimportant",
        (PreferenceCategory::Autonomy, true) => "ask-first and confirm",
        (PreferenceCategory::Autonomy, false) => "go-ahead and handle-it automatically",
        (PreferenceCategory::CommunicationStyle, true) => "keep it brief and concise",
        (PreferenceCategory::CommunicationStyle, false) => "be more detailed and thorough",
        (PreferenceCategory::ContextAdaptation, true) => "adapt to my surroundings",
        (PreferenceCategory::ContextAdaptation, false) => "stay consistent regardless of activity",
    }
}

/// Positive example used when an intervention was rejected or ignored but
/// no category was rated below threshold.
pub const TIMING_FALLBACK: &str = "please wait until later and respect my quiet-hours";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Lexicon;

    #[test]
    fn template_ids_map_back_to_types() {
        for t in ActivityType::ALL {
            for slot in 0..TEMPLATES_PER_TYPE {
                assert_eq!(template_type(template_id(t, slot)), t);
            }
        }
        assert_eq!(template_count(), 64);
    }

    #[test]
    fn templates_and_responses_carry_no_preference_vocabulary() {
        let lex = Lexicon::default();
        for id in 0..template_count() {
            let d = render_description(id, "nurse", "cheerful");
            assert!(lex.hits(&d).is_empty(), "{d}");
        }
        for level in [0.0, 0.3, 0.45, 0.62, 0.7, 0.9] {
            for t in ActivityType::ALL {
                let r = render_response(&[level; 5], t);
                assert!(lex.hits(&r).is_empty(), "{r}");
            }
        }
    }

    #[test]
    fn preference_sentences_use_the_right_pole() {
        let lex = Lexicon::default();
        for c in PreferenceCategory::ALL {
            for v in [0.0, 1.0] {
                let s = preference_sentence(c, v, ActivityType::Cooking);
                let hits = lex.hits(&s);
                assert_eq!(hits.len(), 1, "{s}");
                assert!(hits.contains(c));
            }
            for raise in [true, false] {
                assert!(lex.hits(feedback_phrase(c, raise)).contains(c));
            }
        }
    }
}
