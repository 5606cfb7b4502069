//! The three role agents: parent (with planning), child (engagement
//! conditioned), and moderator (termination). Each is a stateless policy
//! over the provider gateway; all per-dialogue state lives in the
//! orchestrator.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engagement::{score_description, UtteranceRatings};
use crate::model::{
    strip_speaker_labels, ChildPersona, ConversationPlan, ParentPersona, Scenario, Speaker, Topic,
    Utterance,
};
use crate::prompts;
use crate::provider::{
    draw_without_replacement, find_json_object, ChatRequest, Gateway, ProviderError,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Per-run provider settings shared by every agent call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub model_tag: String,
    pub max_retries: u32,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings { model_tag: "default".to_string(), max_retries: 3 }
    }
}

impl AgentSettings {
    /// Builds a request carrying this agent's model tag and retry budget.
    pub fn request(&self, prompt: String, temperature: f64) -> ChatRequest {
        ChatRequest {
            system_prompt: prompt,
            user_messages: Vec::new(),
            temperature,
            model_tag: self.model_tag.clone(),
            max_retries: self.max_retries,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeratorVerdict {
    Continue,
    Stop,
}

/// Structured payload of a stop decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopReason {
    pub knowledge_point: String,
    pub parent_quote: String,
    pub child_quote: String,
    pub reflection_explanation: String,
    pub no_questions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeratorDecision {
    pub verdict: ModeratorVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<StopReason>,
}

impl ModeratorDecision {
    pub fn proceed() -> Self {
        ModeratorDecision { verdict: ModeratorVerdict::Continue, reason: None }
    }
}

/// Renders the transcript as labeled lines for prompt inclusion.
pub fn render_history(history: &[Utterance]) -> String {
    if history.is_empty() {
        return "(The conversation has not started yet. You speak first.)".to_string();
    }
    history
        .iter()
        .map(|u| format!("{}: {}", u.speaker.label(), u.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scenario_block(scenario: Option<&Scenario>) -> String {
    match scenario {
        Some(s) => format!("Here is the current situation: {}", s.description),
        None => String::new(),
    }
}

/// Generates up to `n` conversation plans from one verbalized-sampling call,
/// drawn without replacement by their self-assigned weights.
#[allow(clippy::too_many_arguments)]
pub fn plan_conversation<R: Rng>(
    parent: &ParentPersona,
    child: &ChildPersona,
    scenario: Option<&Scenario>,
    topic: Topic,
    n: usize,
    gateway: &Gateway,
    settings: &AgentSettings,
    rng: &mut R,
) -> Result<Vec<ConversationPlan>, AgentError> {
    let prompt = prompts::render(
        prompts::PARENT_PLANNING,
        &[
            ("parent_role", parent.role.name()),
            ("parent_attitude", parent.attitude.name()),
            ("parent_attitude_description", parent.attitude.description()),
            ("child_role", child.gender.child_role()),
            ("child_age", &child.age.to_string()),
            ("topic", topic.name()),
            ("scenario_block", &scenario_block(scenario)),
            ("num_dialogues_per_scenario", &n.to_string()),
        ],
    );
    let req = settings.request(prompt, 1.0);
    let set = gateway.verbalized_sample(&req, n)?;

    // every candidate must be a {specific_concern, approach} object
    for item in &set.items {
        let obj = item.response.as_object().ok_or_else(|| {
            ProviderError::MalformedSampleSet("plan candidate is not an object".to_string())
        })?;
        for key in ["specific_concern", "approach"] {
            obj.get(key)
                .and_then(|v| v.as_str())
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| {
                    ProviderError::MalformedSampleSet(format!("plan candidate missing '{key}'"))
                })?;
        }
    }

    let k = n.min(set.items.len());
    let drawn = draw_without_replacement(&set, k, rng)
        .map_err(ProviderError::MalformedSampleSet)?;
    Ok(drawn
        .into_iter()
        .map(|item| {
            let obj = item.response.as_object().expect("validated above");
            ConversationPlan {
                specific_concern: obj["specific_concern"].as_str().unwrap().to_string(),
                approach: obj["approach"].as_str().unwrap().to_string(),
                plan_probability: item.probability,
            }
        })
        .collect())
}

/// One parent utterance continuing (or opening) the dialogue.
#[allow(clippy::too_many_arguments)]
pub fn parent_turn(
    plan: Option<&ConversationPlan>,
    scenario: Option<&Scenario>,
    topic: Topic,
    parent: &ParentPersona,
    child: &ChildPersona,
    history: &[Utterance],
    gateway: &Gateway,
    settings: &AgentSettings,
    basic: bool,
) -> Result<Utterance, AgentError> {
    if let Some(last) = history.last() {
        if last.speaker != Speaker::Child {
            return Err(AgentError::Precondition(
                "parent_turn requires history to end with a child utterance".to_string(),
            ));
        }
    }
    let plan_block = match plan {
        Some(p) => format!(
            "Your conversation plan:\n- Specific concern: {}\n- Approach: {}",
            p.specific_concern, p.approach
        ),
        None => String::new(),
    };
    let template = if basic { prompts::PARENT_UTTERANCE_BASIC } else { prompts::PARENT_UTTERANCE };
    let prompt = prompts::render(
        template,
        &[
            ("parent_role", parent.role.name()),
            ("parent_attitude", parent.attitude.name()),
            ("child_role", child.gender.child_role()),
            ("child_gender", child.gender.name()),
            ("child_age", &child.age.to_string()),
            ("topic", topic.name()),
            ("dialogue_history", &render_history(history)),
            ("scenario_block", &scenario_block(scenario)),
            ("plan_block", &plan_block),
        ],
    );
    let text = gateway.complete(&settings.request(prompt, 1.0))?;
    Ok(Utterance {
        speaker: Speaker::Parent,
        text: strip_speaker_labels(&text),
        turn_index: (history.len() / 2 + 1) as u32,
        engagement_score: None,
    })
}

fn score_of(value: &serde_json::Value, key: &str) -> Option<f64> {
    let entry = value.get(key)?;
    entry.get("score").and_then(|s| s.as_f64()).or_else(|| entry.as_f64())
}

/// Issues both rating prompts for a parent utterance and parses the score
/// objects. Positive scores are clamped into [0, 1]; negative scores are
/// coerced to presence flags at a 0.5 threshold.
pub fn rate_parent_utterance(
    utterance: &Utterance,
    topic: Topic,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<UtteranceRatings, AgentError> {
    if utterance.speaker != Speaker::Parent {
        return Err(AgentError::Precondition(
            "rate_parent_utterance requires a Parent utterance".to_string(),
        ));
    }
    let subs = [("topic", topic.name()), ("parent_utterance", utterance.text.as_str())];
    let positive_prompt = prompts::render(prompts::RATING_POSITIVE, &subs);
    let negative_prompt = prompts::render(prompts::RATING_NEGATIVE, &subs);

    let parse_triple = |text: &str, keys: [&str; 3]| -> Option<(f64, f64, f64)> {
        let obj = find_json_object(text)?;
        Some((score_of(&obj, keys[0])?, score_of(&obj, keys[1])?, score_of(&obj, keys[2])?))
    };

    let attempts = settings.max_retries.max(1);
    let mut positive = None;
    let mut negative = None;
    let mut last_error = String::new();
    for _ in 0..attempts {
        if positive.is_none() {
            match gateway.complete(&settings.request(positive_prompt.clone(), 0.0)) {
                Ok(text) => {
                    positive = parse_triple(&text, ["openness", "caring", "empathy"]);
                    if positive.is_none() {
                        last_error = format!("unparseable positive ratings: {text}");
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        if negative.is_none() {
            match gateway.complete(&settings.request(negative_prompt.clone(), 0.0)) {
                Ok(text) => {
                    negative =
                        parse_triple(&text, ["hostility", "barrier_tone", "poor_communication"]);
                    if negative.is_none() {
                        last_error = format!("unparseable negative ratings: {text}");
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        if positive.is_some() && negative.is_some() {
            break;
        }
    }
    let (open, caring, empathy) = positive
        .ok_or_else(|| ProviderError::MalformedRatings(last_error.clone()))?;
    let (host, barrier, poor) =
        negative.ok_or_else(|| ProviderError::MalformedRatings(last_error.clone()))?;

    let clamp_positive = |name: &str, v: f64| {
        if !(0.0..=1.0).contains(&v) {
            tracing::warn!(rating = name, value = v, "positive rating outside [0,1]; clamping");
        }
        v.clamp(0.0, 1.0)
    };
    let coerce_flag = |v: f64| u8::from(v >= 0.5);

    Ok(UtteranceRatings {
        open_questions: clamp_positive("openness", open),
        caring: clamp_positive("caring", caring),
        empathy: clamp_positive("empathy", empathy),
        hostility: coerce_flag(host),
        barrier_tone: coerce_flag(barrier),
        poor_communication: coerce_flag(poor),
    })
}

/// One child utterance. With `engagement_score` present the full
/// engagement-conditioned template is used; without it (engagement ablated
/// or basic child) the persona-only template is rendered instead.
pub fn child_turn(
    topic: Topic,
    parent: &ParentPersona,
    child: &ChildPersona,
    history: &[Utterance],
    engagement_score: Option<u8>,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<Utterance, AgentError> {
    match history.last() {
        Some(last) if last.speaker == Speaker::Parent => {}
        _ => {
            return Err(AgentError::Precondition(
                "child_turn requires history to end with a parent utterance".to_string(),
            ))
        }
    }
    let prompt = match engagement_score {
        Some(e) => {
            let description = score_description(e).map_err(AgentError::Precondition)?;
            prompts::render(
                prompts::CHILD_UTTERANCE,
                &[
                    ("child_gender", child.gender.name()),
                    ("child_age", &child.age.to_string()),
                    ("parent_role", parent.role.name()),
                    ("topic", topic.name()),
                    ("dialogue_history", &render_history(history)),
                    ("engagement_description", description),
                    ("engagement_score", &e.to_string()),
                ],
            )
        }
        None => prompts::render(
            prompts::CHILD_UTTERANCE_BASIC,
            &[
                ("child_gender", child.gender.name()),
                ("child_age", &child.age.to_string()),
                ("child_attitude", child.attitude.name()),
                ("parent_role", parent.role.name()),
                ("topic", topic.name()),
                ("dialogue_history", &render_history(history)),
            ],
        ),
    };
    let text = gateway.complete(&settings.request(prompt, 1.0))?;
    Ok(Utterance {
        speaker: Speaker::Child,
        text: strip_speaker_labels(&text),
        turn_index: ((history.len() - 1) / 2 + 1) as u32,
        engagement_score,
    })
}

fn parse_stop_payload(value: &serde_json::Value) -> Option<StopReason> {
    let decision = value.get("decision")?.as_str()?;
    if !decision.trim_start().to_ascii_lowercase().starts_with("stop") {
        return None;
    }
    let points = value.get("parent_points")?;
    let reflections = value.get("child_reflections")?;
    let nonempty = |v: &serde_json::Value, key: &str| -> Option<String> {
        let s = v.get(key)?.as_str()?.trim().to_string();
        (!s.is_empty()).then_some(s)
    };
    Some(StopReason {
        knowledge_point: nonempty(points, "knowledge_point")?,
        parent_quote: nonempty(points, "parent_utterance")?,
        child_quote: nonempty(reflections, "child_utterance")?,
        reflection_explanation: nonempty(reflections, "explanation")?,
        no_questions: value.get("no_questions")?.as_str()?.to_string(),
    })
}

/// Termination check. Fails open: any provider error or unparseable reply
/// yields Continue, since a premature stop destroys a dialogue while one
/// extra exchange is recoverable.
pub fn moderate(
    history: &[Utterance],
    gateway: &Gateway,
    settings: &AgentSettings,
) -> ModeratorDecision {
    if history.len() < 2 {
        tracing::warn!("moderator invoked before a full exchange; continuing");
        return ModeratorDecision::proceed();
    }
    let prompt =
        prompts::render(prompts::MODERATOR, &[("dialogue_history", &render_history(history))]);
    let text = match gateway.complete(&settings.request(prompt, 0.0)) {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!(error = %e, "moderator call failed; continuing");
            return ModeratorDecision::proceed();
        }
    };
    let trimmed = text.trim().trim_matches('"');
    if trimmed.eq_ignore_ascii_case("continue") {
        return ModeratorDecision::proceed();
    }
    if let Some(payload) = find_json_object(&text).as_ref().and_then(parse_stop_payload) {
        return ModeratorDecision { verdict: ModeratorVerdict::Stop, reason: Some(payload) };
    }
    tracing::warn!(reply = %trimmed, "unparseable moderator reply; continuing");
    ModeratorDecision::proceed()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChildAttitude, ChildGender, ParentAttitude, ParentRole};
    use crate::provider::mock::MockProvider;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn personas() -> (ParentPersona, ChildPersona) {
        (
            ParentPersona { role: ParentRole::Mother, attitude: ParentAttitude::Progressive },
            ChildPersona::new(ChildGender::Female, 15, ChildAttitude::SomewhatComfortable)
                .unwrap(),
        )
    }

    fn gw(mock: MockProvider) -> Gateway {
        Gateway::new(Arc::new(mock))
    }

    fn parent_line(text: &str) -> Utterance {
        Utterance {
            speaker: Speaker::Parent,
            text: text.to_string(),
            turn_index: 1,
            engagement_score: None,
        }
    }

    fn child_line(text: &str) -> Utterance {
        Utterance {
            speaker: Speaker::Child,
            text: text.to_string(),
            turn_index: 1,
            engagement_score: Some(1),
        }
    }

    #[test]
    fn planning_happy_path() {
        let response = r#"[
            {"response": {"specific_concern": "c1", "approach": "a1"}, "probability": 0.5},
            {"response": {"specific_concern": "c2", "approach": "a2"}, "probability": 0.3},
            {"response": {"specific_concern": "c3", "approach": "a3"}, "probability": 0.2}
        ]"#;
        let gateway = gw(MockProvider::new().with_rule("generate a short reflection", &[response]));
        let (parent, child) = personas();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plans = plan_conversation(
            &parent, &child, None, Topic::Consent, 3, &gateway,
            &AgentSettings::default(), &mut rng,
        )
        .unwrap();
        assert_eq!(plans.len(), 3);
        let total: f64 = plans.iter().map(|p| p.plan_probability).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn planning_downsamples_extra_candidates() {
        let response = r#"[
            {"response": {"specific_concern": "c1", "approach": "a1"}, "probability": 0.2},
            {"response": {"specific_concern": "c2", "approach": "a2"}, "probability": 0.2},
            {"response": {"specific_concern": "c3", "approach": "a3"}, "probability": 0.2},
            {"response": {"specific_concern": "c4", "approach": "a4"}, "probability": 0.2},
            {"response": {"specific_concern": "c5", "approach": "a5"}, "probability": 0.2}
        ]"#;
        let gateway = gw(MockProvider::new().with_rule("generate a short reflection", &[response]));
        let (parent, child) = personas();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let plans = plan_conversation(
            &parent, &child, None, Topic::SafeSex, 3, &gateway,
            &AgentSettings::default(), &mut rng,
        )
        .unwrap();
        assert_eq!(plans.len(), 3);
        let mut concerns: Vec<&str> =
            plans.iter().map(|p| p.specific_concern.as_str()).collect();
        concerns.sort();
        concerns.dedup();
        assert_eq!(concerns.len(), 3, "plans must be distinct");
    }

    #[test]
    fn planning_rejects_missing_approach() {
        let response = r#"[{"response": {"specific_concern": "c1"}, "probability": 1.0}]"#;
        let gateway = gw(MockProvider::new().with_rule("generate a short reflection", &[response]));
        let (parent, child) = personas();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = plan_conversation(
            &parent, &child, None, Topic::SafeSex, 1, &gateway,
            &AgentSettings::default(), &mut rng,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            AgentError::Provider(ProviderError::MalformedSampleSet(_))
        ));
    }

    #[test]
    fn parent_turn_strips_labels_and_guards_alternation() {
        let gateway = gw(MockProvider::new().with_rule("responding to your child", &["Parent: Hey"]));
        let (parent, child) = personas();
        let u = parent_turn(
            None, None, Topic::Consent, &parent, &child, &[], &gateway,
            &AgentSettings::default(), false,
        )
        .unwrap();
        assert_eq!(u.text, "Hey");
        assert_eq!(u.turn_index, 1);
        assert_eq!(u.speaker, Speaker::Parent);

        let history = vec![parent_line("hi")];
        let err = parent_turn(
            None, None, Topic::Consent, &parent, &child, &history, &gateway,
            &AgentSettings::default(), false,
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::Precondition(_)));
    }

    #[test]
    fn ratings_clamp_and_coerce() {
        let positive = r#"{"openness": {"score": 1.3, "explanation": "x"},
                           "caring": {"score": 0.5, "explanation": "x"},
                           "empathy": {"score": 0.5, "explanation": "x"}}"#;
        let negative = r#"{"hostility": {"score": 0.7, "explanation": "x"},
                           "barrier_tone": {"score": 0.2, "explanation": "x"},
                           "poor_communication": {"score": 0, "explanation": "x"}}"#;
        let mock = MockProvider::new()
            .with_rule("rate the parent's conversation in three dimensions", &[positive])
            .with_rule("detect if the following are present", &[negative]);
        let gateway = gw(mock);
        let r = rate_parent_utterance(
            &parent_line("What do you think?"),
            Topic::Consent,
            &gateway,
            &AgentSettings::default(),
        )
        .unwrap();
        assert_eq!(r.open_questions, 1.0);
        assert_eq!(r.caring, 0.5);
        assert_eq!(r.hostility, 1);
        assert_eq!(r.barrier_tone, 0);
    }

    #[test]
    fn ratings_malformed_after_retries() {
        let mock = MockProvider::new()
            .strict()
            .with_rule("rate the parent's conversation in three dimensions", &["nonsense"])
            .with_rule("detect if the following are present", &["also nonsense"]);
        let gateway = gw(mock);
        let err = rate_parent_utterance(
            &parent_line("hello"),
            Topic::Consent,
            &gateway,
            &AgentSettings { model_tag: "default".into(), max_retries: 2 },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            AgentError::Provider(ProviderError::MalformedRatings(_))
        ));
    }

    #[test]
    fn child_turn_carries_score_and_guards_alternation() {
        let gateway = gw(MockProvider::new()
            .with_rule("reflective of how a child would actually speak", &["Child: nah"]));
        let (parent, child) = personas();
        let history = vec![parent_line("hi")];
        let u = child_turn(
            Topic::SafeSex, &parent, &child, &history, Some(0), &gateway,
            &AgentSettings::default(),
        )
        .unwrap();
        assert_eq!(u.text, "nah");
        assert_eq!(u.engagement_score, Some(0));

        let history = vec![parent_line("hi"), child_line("yo")];
        let err = child_turn(
            Topic::SafeSex, &parent, &child, &history, Some(1), &gateway,
            &AgentSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AgentError::Precondition(_)));
    }

    #[test]
    fn moderator_parses_continue_stop_and_fails_open() {
        let history = vec![parent_line("point made"), child_line("deep reflection")];
        let settings = AgentSettings::default();

        let gateway = gw(MockProvider::new()
            .with_rule("continue or stop", &["continue"]));
        assert_eq!(moderate(&history, &gateway, &settings).verdict, ModeratorVerdict::Continue);

        let stop = r#"{
            "decision": "stop: child reflected on knowledge points and has no questions",
            "parent_points": {"knowledge_point": "kp", "parent_utterance": "pq"},
            "child_reflections": {"knowledge_point": "kp", "parent_utterance": "pq",
                                  "child_utterance": "cq", "explanation": "ex"},
            "no_questions": "none found"
        }"#;
        let gateway = gw(MockProvider::new().with_rule("continue or stop", &[stop]));
        let d = moderate(&history, &gateway, &settings);
        assert_eq!(d.verdict, ModeratorVerdict::Stop);
        let reason = d.reason.unwrap();
        assert_eq!(reason.knowledge_point, "kp");
        assert_eq!(reason.child_quote, "cq");

        let gateway = gw(MockProvider::new().with_rule("continue or stop", &["%%garbled%%"]));
        assert_eq!(moderate(&history, &gateway, &settings).verdict, ModeratorVerdict::Continue);

        // stop object with an empty quote fails open too
        let bad_stop = r#"{"decision": "stop", "parent_points": {"knowledge_point": "",
            "parent_utterance": ""}, "child_reflections": {}, "no_questions": ""}"#;
        let gateway = gw(MockProvider::new().with_rule("continue or stop", &[bad_stop]));
        assert_eq!(moderate(&history, &gateway, &settings).verdict, ModeratorVerdict::Continue);
    }

    #[test]
    fn outputs_never_carry_labels_for_adversarial_mocks() {
        let adversarial = [
            "Parent: \"Hello there\"",
            "\"Parent: hi\"",
            "  Child:  nope",
            "Mother: dear",
            "plain response",
        ];
        for text in adversarial {
            let gateway =
                gw(MockProvider::new().with_rule("responding to your child", &[text]));
            let (parent, child) = personas();
            let u = parent_turn(
                None, None, Topic::Consent, &parent, &child, &[], &gateway,
                &AgentSettings::default(), false,
            )
            .unwrap();
            let lowered = u.text.to_ascii_lowercase();
            assert!(!lowered.starts_with("parent:"));
            assert!(!lowered.starts_with("child:"));
            assert!(!lowered.starts_with("mother:"));
        }
    }
}
