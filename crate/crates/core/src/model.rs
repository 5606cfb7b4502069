//! Domain types shared across the simulation engine: topics, personas,
//! scenarios, utterances, and the full dialogue record.

use serde::{Deserialize, Serialize};

/// Discussion topic for a dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topic {
    SafeSex,
    Abstinence,
    Consent,
}

impl Topic {
    pub const ALL: [Topic; 3] = [Topic::SafeSex, Topic::Abstinence, Topic::Consent];

    /// Human-readable topic name used inside prompts.
    pub fn name(&self) -> &'static str {
        match self {
            Topic::SafeSex => "safe sex",
            Topic::Abstinence => "abstinence",
            Topic::Consent => "consent",
        }
    }

    /// One-sentence definition of the topic, used inside prompts.
    pub fn description(&self) -> &'static str {
        match self {
            Topic::SafeSex => {
                "using condoms, birth control, and other methods to prevent pregnancy \
                 and sexually transmitted infections (STIs)"
            }
            Topic::Abstinence => {
                "refraining from or delaying sexual activities for a period of time"
            }
            Topic::Consent => {
                "both parties agree to the sexual activity and both parties are free \
                 to withdraw consent at any time"
            }
        }
    }

    pub fn parse(s: &str) -> Option<Topic> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "safe_sex" | "safesex" => Some(Topic::SafeSex),
            "abstinence" => Some(Topic::Abstinence),
            "consent" => Some(Topic::Consent),
            _ => None,
        }
    }
}

/// Category of teachable moment a scenario belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TeachableMoment {
    MajorLifeEvents,
    SocialMedia,
    MassMedia,
    EverydayOccurrences,
}

impl TeachableMoment {
    pub const ALL: [TeachableMoment; 4] = [
        TeachableMoment::MajorLifeEvents,
        TeachableMoment::SocialMedia,
        TeachableMoment::MassMedia,
        TeachableMoment::EverydayOccurrences,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TeachableMoment::MajorLifeEvents => "Major Life Events",
            TeachableMoment::SocialMedia => "Social Media",
            TeachableMoment::MassMedia => "Mass Media",
            TeachableMoment::EverydayOccurrences => "Everyday Occurrences",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            TeachableMoment::MajorLifeEvents => {
                "significant changes or milestones in the child's life, such as \
                 starting a new relationship, entering a new school, or puberty"
            }
            TeachableMoment::SocialMedia => {
                "content the child encounters, posts, or discusses on social media \
                 platforms"
            }
            TeachableMoment::MassMedia => {
                "scenes, storylines, or coverage in television, film, music, or news \
                 that the child is exposed to"
            }
            TeachableMoment::EverydayOccurrences => {
                "ordinary moments in daily life that naturally bring up the subject"
            }
        }
    }

    /// Non-exhaustive example triggers fed into the synthesis prompt.
    pub fn examples(&self) -> &'static str {
        match self {
            TeachableMoment::MajorLifeEvents => {
                "your child starts their first romantic relationship; your child is \
                 going to a school dance; your child begins puberty; a close friend \
                 of your child experiences a pregnancy scare; your child moves to a \
                 new school"
            }
            TeachableMoment::SocialMedia => {
                "your child shares a post about relationships; your child receives \
                 direct messages from a stranger; a trending challenge touches on \
                 dating; an influencer your child follows discusses their \
                 relationship"
            }
            TeachableMoment::MassMedia => {
                "a romantic scene appears in a movie you watch together; a news \
                 story covers consent; song lyrics your child plays reference sex; \
                 a TV storyline involves an unplanned pregnancy"
            }
            TeachableMoment::EverydayOccurrences => {
                "a conversation overheard at a family dinner; an advertisement for \
                 contraception; a question during a car ride; walking past the \
                 pharmacy aisle together"
            }
        }
    }

    pub fn parse(s: &str) -> Option<TeachableMoment> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "major_life_events" | "majorlifeevents" => Some(TeachableMoment::MajorLifeEvents),
            "social_media" | "socialmedia" => Some(TeachableMoment::SocialMedia),
            "mass_media" | "massmedia" => Some(TeachableMoment::MassMedia),
            "everyday_occurrences" | "everydayoccurrences" => {
                Some(TeachableMoment::EverydayOccurrences)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParentRole {
    Mother,
    Father,
}

impl ParentRole {
    pub fn name(&self) -> &'static str {
        match self {
            ParentRole::Mother => "mother",
            ParentRole::Father => "father",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParentAttitude {
    Traditional,
    Progressive,
}

impl ParentAttitude {
    pub fn name(&self) -> &'static str {
        match self {
            ParentAttitude::Traditional => "traditional",
            ParentAttitude::Progressive => "progressive",
        }
    }

    /// Attitude elaboration rendered into the planning prompt.
    pub fn description(&self) -> &'static str {
        match self {
            ParentAttitude::Traditional => {
                "You hold conservative views on sexuality and tend to emphasize \
                 values, caution, and boundaries when the subject comes up."
            }
            ParentAttitude::Progressive => {
                "You hold open views on sexuality and are comfortable discussing it \
                 directly, factually, and without judgment."
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParentPersona {
    pub role: ParentRole,
    pub attitude: ParentAttitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChildGender {
    Male,
    Female,
}

impl ChildGender {
    pub fn name(&self) -> &'static str {
        match self {
            ChildGender::Male => "male",
            ChildGender::Female => "female",
        }
    }

    /// How the parent refers to the child in prompts ("son" / "daughter").
    pub fn child_role(&self) -> &'static str {
        match self {
            ChildGender::Male => "son",
            ChildGender::Female => "daughter",
        }
    }
}

/// Child age bracket; ages 11-13 form the younger group, 14-18 the older.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    Y11_13,
    Y14_18,
}

impl AgeGroup {
    pub fn from_age(age: u8) -> Option<AgeGroup> {
        match age {
            11..=13 => Some(AgeGroup::Y11_13),
            14..=18 => Some(AgeGroup::Y14_18),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AgeGroup::Y11_13 => "11-13",
            AgeGroup::Y14_18 => "14-18",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChildAttitude {
    DismissiveResistant,
    SomewhatComfortable,
}

impl ChildAttitude {
    pub fn name(&self) -> &'static str {
        match self {
            ChildAttitude::DismissiveResistant => "dismissive or resistant",
            ChildAttitude::SomewhatComfortable => "somewhat comfortable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChildPersona {
    pub gender: ChildGender,
    pub age: u8,
    pub age_group: AgeGroup,
    pub attitude: ChildAttitude,
}

impl ChildPersona {
    /// Builds a persona, deriving the age group. Fails outside ages 11-18.
    pub fn new(gender: ChildGender, age: u8, attitude: ChildAttitude) -> Result<Self, String> {
        let age_group = AgeGroup::from_age(age)
            .ok_or_else(|| format!("child age {age} outside the supported range 11-18"))?;
        Ok(ChildPersona { gender, age, age_group, attitude })
    }
}

/// Where a scenario came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioSource {
    Synthetic,
    CrowdSourced,
}

/// Optional persona constraints attached to crowd-sourced scenarios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonaHints {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_role: Option<ParentRole>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_attitude: Option<ParentAttitude>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub child_gender: Option<ChildGender>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub child_age: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub child_attitude: Option<ChildAttitude>,
}

impl PersonaHints {
    pub fn is_empty(&self) -> bool {
        self.parent_role.is_none()
            && self.parent_attitude.is_none()
            && self.child_gender.is_none()
            && self.child_age.is_none()
            && self.child_attitude.is_none()
    }
}

/// A triggering situation for one or more dialogues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub topic: Topic,
    pub teachable_moment: TeachableMoment,
    pub description: String,
    pub source: ScenarioSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub persona_hints: Option<PersonaHints>,
    /// Unknown fields from older or newer writers, preserved on rewrite.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Scenario {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.description.trim().is_empty() {
            v.push(format!("scenario {}: description must be non-empty", self.id));
        }
        if let Some(p) = self.probability {
            if !(p > 0.0 && p <= 1.0) {
                v.push(format!("scenario {}: probability {p} outside (0, 1]", self.id));
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Parent,
    Child,
}

impl Speaker {
    pub fn label(&self) -> &'static str {
        match self {
            Speaker::Parent => "Parent",
            Speaker::Child => "Child",
        }
    }
}

/// One line of dialogue. `turn_index` is the 1-based exchange number; the
/// parent and child utterances of the same exchange share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub turn_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engagement_score: Option<u8>,
}

/// Pre-dialogue parent plan: what to address and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationPlan {
    pub specific_concern: String,
    pub approach: String,
    /// Weight this plan carried in the verbalized sample set it was drawn from.
    pub plan_probability: f64,
}

/// Why a dialogue ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    ModeratorStop,
    ConsecutiveDisengagement,
    MaxTurns,
}

/// Engagement bookkeeping for one child turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementTraceEntry {
    /// Mean of the engagement distribution when the score was sampled.
    pub mu: f64,
    /// Rating-derived estimate for this turn; absent for the first turn,
    /// which samples from the initial mean directly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_hat: Option<f64>,
    /// The discrete score actually sampled.
    pub score: u8,
}

/// Full transcript of one generated dialogue plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub scenario_id: String,
    pub parent_persona: ParentPersona,
    pub child_persona: ChildPersona,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<ConversationPlan>,
    pub utterances: Vec<Utterance>,
    pub termination: Termination,
    pub engagement_trace: Vec<EngagementTraceEntry>,
    pub rng_seed: u64,
    pub provider_tag: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Strips a leading "Parent:"/"Child:" label (and surrounding quotes) that
/// models sometimes emit despite instructions.
pub fn strip_speaker_labels(text: &str) -> String {
    let mut s = text.trim();
    for quote in ['"', '\u{201c}', '\u{2018}', '\''] {
        s = s.trim_start_matches(quote).trim_end_matches(|c: char| {
            c == quote || c == '\u{201d}' || c == '\u{2019}'
        });
    }
    let s = s.trim();
    let lowered = s.to_ascii_lowercase();
    for label in ["parent:", "child:", "mother:", "father:"] {
        if lowered.starts_with(label) {
            return s[label.len()..].trim().trim_start_matches('"').trim().to_string();
        }
    }
    s.to_string()
}

fn starts_with_label(text: &str) -> bool {
    let lowered = text.trim_start().to_ascii_lowercase();
    ["parent:", "child:", "mother:", "father:"]
        .iter()
        .any(|l| lowered.starts_with(l))
}

/// Checks every record invariant; returns one description per violation.
/// An empty list means the record is well-formed.
pub fn validate_record(record: &DialogueRecord) -> Vec<String> {
    let mut v = Vec::new();

    if record.utterances.is_empty() {
        v.push("utterances: list must be non-empty".to_string());
        return v;
    }

    if record.utterances[0].speaker != Speaker::Parent {
        v.push("ordering: first speaker must be Parent".to_string());
    }

    for (i, pair) in record.utterances.windows(2).enumerate() {
        if pair[0].speaker == pair[1].speaker {
            v.push(format!(
                "ordering: utterances {} and {} do not alternate speakers",
                i,
                i + 1
            ));
        }
    }

    for (i, u) in record.utterances.iter().enumerate() {
        if u.text.trim().is_empty() {
            v.push(format!("utterance {i}: text must be non-empty"));
        }
        if starts_with_label(&u.text) {
            v.push(format!("utterance {i}: embedded speaker label in text"));
        }
        let expected_turn = (i / 2 + 1) as u32;
        if u.turn_index != expected_turn {
            v.push(format!(
                "utterance {i}: turn_index {} but expected {expected_turn}",
                u.turn_index
            ));
        }
        match u.speaker {
            Speaker::Parent => {
                if u.engagement_score.is_some() {
                    v.push(format!(
                        "utterance {i}: engagement_score present on a Parent utterance"
                    ));
                }
            }
            Speaker::Child => {
                if let Some(e) = u.engagement_score {
                    if e > 3 {
                        v.push(format!("utterance {i}: engagement_score {e} outside [0, 3]"));
                    }
                }
            }
        }
    }

    let child_utterances: Vec<&Utterance> = record
        .utterances
        .iter()
        .filter(|u| u.speaker == Speaker::Child)
        .collect();
    let parent_count = record.utterances.len() - child_utterances.len();

    // The trace is either complete (engagement active) or empty (ablated).
    if record.engagement_trace.is_empty() {
        for (i, u) in record.utterances.iter().enumerate() {
            if u.speaker == Speaker::Child && u.engagement_score.is_some() {
                v.push(format!(
                    "utterance {i}: engagement_score present but engagement_trace is empty"
                ));
            }
        }
    } else {
        if record.engagement_trace.len() != child_utterances.len() {
            v.push(format!(
                "engagement_trace: length {} but {} child utterances",
                record.engagement_trace.len(),
                child_utterances.len()
            ));
        }
        for (i, u) in record.utterances.iter().enumerate() {
            if u.speaker == Speaker::Child && u.engagement_score.is_none() {
                v.push(format!("utterance {i}: missing engagement_score on a Child utterance"));
            }
        }
        for (t, (entry, u)) in record
            .engagement_trace
            .iter()
            .zip(child_utterances.iter())
            .enumerate()
        {
            if entry.score > 3 {
                v.push(format!("engagement_trace[{t}]: score {} outside [0, 3]", entry.score));
            }
            if let Some(e) = u.engagement_score {
                if e != entry.score {
                    v.push(format!(
                        "engagement_trace[{t}]: score {} disagrees with utterance score {e}",
                        entry.score
                    ));
                }
            }
        }
    }

    // Every termination we emit follows a child turn, so counts must match.
    if record.utterances.last().map(|u| u.speaker) == Some(Speaker::Child)
        && parent_count != child_utterances.len()
    {
        v.push(format!(
            "counts: {parent_count} parent vs {} child utterances after a child-final turn",
            child_utterances.len()
        ));
    }

    if AgeGroup::from_age(record.child_persona.age) != Some(record.child_persona.age_group) {
        v.push(format!(
            "child_persona: age {} inconsistent with age_group {:?}",
            record.child_persona.age, record.child_persona.age_group
        ));
    }

    if record.termination == Termination::ConsecutiveDisengagement {
        let scores: Vec<u8> = child_utterances
            .iter()
            .filter_map(|u| u.engagement_score)
            .collect();
        let n = scores.len();
        if n < 2 || scores[n - 1] != 0 || scores[n - 2] != 0 {
            v.push(
                "termination: ConsecutiveDisengagement but final two child scores are not both 0"
                    .to_string(),
            );
        }
    }

    v
}
