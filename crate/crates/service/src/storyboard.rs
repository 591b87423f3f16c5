//! The storyboard bank shown to study participants.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use steerbench_core::schema::{ActivityContext, ActivityType};
use steerbench_core::persona::time_slot;

/// Scenario bucket used for per-session quotas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Morning,
    Noon,
    Evening,
    Work,
    Leisure,
}

impl Tag {
    pub const ALL: [Tag; 5] = [Tag::Morning, Tag::Noon, Tag::Evening, Tag::Work, Tag::Leisure];
}

/// Interactions drawn per tag for one session.
pub const QUOTAS: [(Tag, usize); 5] = [
    (Tag::Morning, 3),
    (Tag::Noon, 1),
    (Tag::Evening, 2),
    (Tag::Work, 2),
    (Tag::Leisure, 2),
];

/// Interactions per session.
pub const SESSION_LENGTH: usize = 10;

/// Ids below this are reserved for the generated template bank.
pub const STORYBOARD_ID_BASE: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Storyboard {
    pub id: u32,
    pub tag: Tag,
    pub activity_type: ActivityType,
    pub start_minute: u32,
    pub duration_minutes: u32,
    pub scene: &'static str,
}

impl Storyboard {
    pub fn context(&self) -> ActivityContext {
        ActivityContext {
            activity_type: self.activity_type,
            day: 0,
            period_index: time_slot(self.start_minute),
            start_minute: self.start_minute,
            duration_minutes: self.duration_minutes,
            description: format!("{}: {}", self.activity_type, self.scene),
            template_id: STORYBOARD_ID_BASE + self.id,
        }
    }
}

use ActivityType::*;
use Tag::*;

#[rustfmt::skip]
const BANK: [(Tag, ActivityType, u32, u32, &str); 40] = [
    (Morning, Health, 390, 25, "showering and getting dressed"),
    (Morning, Cooking, 420, 20, "making coffee and toast"),
    (Morning, Health, 400, 30, "a run around the park"),
    (Morning, Transport, 465, 35, "driving to the office"),
    (Morning, Productivity, 450, 20, "checking the calendar for the day"),
    (Morning, Health, 375, 15, "taking vitamins with breakfast"),
    (Morning, Cleaning, 430, 15, "making the bed and tidying up"),
    (Morning, Social, 440, 15, "walking the kids to the bus stop"),
    (Morning, Transport, 480, 40, "riding the train downtown"),
    (Morning, Health, 410, 20, "stretching on the living room floor"),
    (Morning, Misc, 425, 10, "feeding the cat"),
    (Morning, Cooking, 395, 15, "packing a lunch box"),
    (Noon, Cooking, 720, 30, "eating lunch at the cafeteria"),
    (Noon, Social, 730, 45, "lunch with a coworker"),
    (Noon, Misc, 740, 20, "picking up a package at the post office"),
    (Noon, Health, 705, 30, "a midday walk outside"),
    (Evening, Cooking, 1110, 45, "making dinner for the family"),
    (Evening, Entertainment, 1200, 60, "watching a movie on the couch"),
    (Evening, Social, 1140, 40, "a video call with parents"),
    (Evening, Cleaning, 1170, 25, "washing the dishes"),
    (Evening, Health, 1260, 20, "getting ready for bed"),
    (Evening, Entertainment, 1230, 45, "reading a novel in bed"),
    (Evening, Transport, 1065, 35, "commuting home on the bus"),
    (Evening, Misc, 1125, 30, "grocery run after work"),
    (Work, Productivity, 570, 60, "writing a report at the desk"),
    (Work, Productivity, 600, 45, "a team meeting in the conference room"),
    (Work, Productivity, 840, 30, "answering messages between tasks"),
    (Work, Productivity, 900, 60, "presenting results to a client"),
    (Work, Productivity, 960, 40, "reviewing a coworker's draft"),
    (Work, Social, 810, 20, "a coffee chat with the manager"),
    (Work, Productivity, 630, 50, "planning next quarter's budget"),
    (Work, Transport, 990, 30, "driving to a site visit"),
    (Leisure, Entertainment, 660, 90, "a weekend hike with friends"),
    (Leisure, Entertainment, 1020, 60, "playing video games"),
    (Leisure, Social, 1080, 90, "a dinner party at a friend's place"),
    (Leisure, Cleaning, 600, 60, "weekend laundry and vacuuming"),
    (Leisure, Health, 540, 60, "a yoga class at the studio"),
    (Leisure, Cooking, 1000, 60, "baking bread on a slow afternoon"),
    (Leisure, Entertainment, 780, 120, "watching a ball game at the stadium"),
    (Leisure, Misc, 690, 45, "browsing a farmers market"),
];

/// All storyboards, ids `0..40`.
pub fn bank() -> Vec<Storyboard> {
    BANK.iter()
        .enumerate()
        .map(|(i, &(tag, activity_type, start_minute, duration_minutes, scene))| Storyboard {
            id: i as u32,
            tag,
            activity_type,
            start_minute,
            duration_minutes,
            scene,
        })
        .collect()
}

pub fn get(id: u32) -> Option<Storyboard> {
    bank().into_iter().find(|s| s.id == id)
}

/// Draw one session's storyboards: `QUOTAS` per tag, then shuffled.
pub fn draw<R: Rng>(rng: &mut R) -> Vec<u32> {
    let bank = bank();
    let mut out = Vec::with_capacity(SESSION_LENGTH);
    for (tag, n) in QUOTAS {
        let ids: Vec<u32> = bank.iter().filter(|s| s.tag == tag).map(|s| s.id).collect();
        out.extend(ids.choose_multiple(rng, n).copied());
    }
    out.shuffle(rng);
    out
}
