//! Deterministic scripted provider for offline runs and tests.
//!
//! Resolution order for completions: explicit rules (first substring match
//! wins, responses consumed in order, last one repeats), then the built-in
//! pipeline handler, which recognizes every prompt family the engine issues
//! and answers with deterministic hash-derived content. Everything is a pure
//! function of the prompt text, so identical runs are byte-identical.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{ChatRequest, EntailmentLabel, EntailmentVerdict, Provider, ProviderError};

#[derive(Debug, Clone)]
enum MockReply {
    Text(String),
    Fail(String),
}

#[derive(Debug, Clone)]
struct MockRule {
    matcher: String,
    replies: Vec<MockReply>,
}

#[derive(Debug, Clone)]
struct EntailRule {
    premise_contains: String,
    hypothesis_contains: String,
    label: EntailmentLabel,
    confidence: f64,
}

pub struct MockProvider {
    rules: Vec<MockRule>,
    calls: Mutex<HashMap<usize, usize>>,
    pipeline_default: bool,
    embedding_overrides: HashMap<String, Vec<f64>>,
    entail_rules: Vec<EntailRule>,
    identity_entailment: bool,
    tag: String,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        MockProvider {
            rules: Vec::new(),
            calls: Mutex::new(HashMap::new()),
            pipeline_default: true,
            embedding_overrides: HashMap::new(),
            entail_rules: Vec::new(),
            identity_entailment: false,
            tag: "mock".to_string(),
        }
    }

    /// Disables the built-in pipeline handler; unmatched prompts then fail.
    pub fn strict(mut self) -> Self {
        self.pipeline_default = false;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// Adds a rule answering prompts containing `matcher` with the given
    /// responses in sequence (the last repeats).
    pub fn with_rule(mut self, matcher: impl Into<String>, responses: &[&str]) -> Self {
        self.rules.push(MockRule {
            matcher: matcher.into(),
            replies: responses.iter().map(|r| MockReply::Text((*r).to_string())).collect(),
        });
        self
    }

    /// Adds a rule that fails `failures` times before succeeding with `text`.
    pub fn with_failing_rule(
        mut self,
        matcher: impl Into<String>,
        failures: usize,
        text: &str,
    ) -> Self {
        let mut replies =
            vec![MockReply::Fail("scripted transport failure".to_string()); failures];
        replies.push(MockReply::Text(text.to_string()));
        self.rules.push(MockRule { matcher: matcher.into(), replies });
        self
    }

    /// Pins the raw embedding returned for an exact input text.
    pub fn with_embedding(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.embedding_overrides.insert(text.into(), vector);
        self
    }

    pub fn with_entail_rule(
        mut self,
        premise_contains: impl Into<String>,
        hypothesis_contains: impl Into<String>,
        label: EntailmentLabel,
        confidence: f64,
    ) -> Self {
        self.entail_rules.push(EntailRule {
            premise_contains: premise_contains.into(),
            hypothesis_contains: hypothesis_contains.into(),
            label,
            confidence,
        });
        self
    }

    /// Identical premise and hypothesis resolve to Entailment.
    pub fn with_identity_entailment(mut self) -> Self {
        self.identity_entailment = true;
        self
    }

    /// Loads scripted rules from a fixture file. Schema:
    /// `{"rules": [{"match": "...", "responses": ["...", {"fail": "..."}]}],
    ///   "entail": [{"premise_contains": "...", "hypothesis_contains": "...",
    ///               "label": "Contradiction", "confidence": 0.9}],
    ///   "pipeline_default": true}`
    pub fn from_script_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read mock script {}: {e}", path.display()))?;
        Self::from_script_json(&text)
    }

    pub fn from_script_json(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum ScriptReply {
            Text(String),
            Fail { fail: String },
        }
        #[derive(Deserialize)]
        struct ScriptRule {
            #[serde(rename = "match")]
            matcher: String,
            responses: Vec<ScriptReply>,
        }
        #[derive(Deserialize)]
        struct ScriptEntail {
            premise_contains: String,
            hypothesis_contains: String,
            label: EntailmentLabel,
            #[serde(default = "default_confidence")]
            confidence: f64,
        }
        fn default_confidence() -> f64 {
            0.9
        }
        #[derive(Deserialize)]
        struct Script {
            #[serde(default)]
            rules: Vec<ScriptRule>,
            #[serde(default)]
            entail: Vec<ScriptEntail>,
            #[serde(default = "default_true")]
            pipeline_default: bool,
        }
        fn default_true() -> bool {
            true
        }

        let script: Script =
            serde_json::from_str(text).map_err(|e| format!("invalid mock script: {e}"))?;
        let mut mock = MockProvider::new();
        mock.pipeline_default = script.pipeline_default;
        for rule in script.rules {
            mock.rules.push(MockRule {
                matcher: rule.matcher,
                replies: rule
                    .responses
                    .into_iter()
                    .map(|r| match r {
                        ScriptReply::Text(t) => MockReply::Text(t),
                        ScriptReply::Fail { fail } => MockReply::Fail(fail),
                    })
                    .collect(),
            });
        }
        for e in script.entail {
            mock.entail_rules.push(EntailRule {
                premise_contains: e.premise_contains,
                hypothesis_contains: e.hypothesis_contains,
                label: e.label,
                confidence: e.confidence,
            });
        }
        Ok(mock)
    }
}

/// First 8 bytes of sha256 as a u64, the seed for all derived mock content.
fn hash64(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

fn pick<'a>(pool: &[&'a str], h: u64, salt: u64) -> &'a str {
    pool[((h.rotate_left((salt % 31) as u32)) % pool.len() as u64) as usize]
}

/// Parses the first integer following `marker` in `prompt`.
fn number_after(prompt: &str, marker: &str) -> Option<usize> {
    let idx = prompt.find(marker)? + marker.len();
    let rest = prompt[idx..].trim_start();
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn synthesis_response(prompt: &str, h: u64) -> String {
    let n = number_after(prompt, "topic, generate").unwrap_or(4).clamp(1, 24);
    let triggers = [
        "your child mentioned something a classmate said",
        "you noticed a change in your child's behavior",
        "a recent event at school reached you through another parent",
        "your child asked an unexpected question at dinner",
        "you came across something while tidying your child's room",
        "your child's friend group has been talking about relationships",
    ];
    let follow = [
        "You feel this is the right moment to have an honest conversation.",
        "You want to make sure they have accurate information before rumors fill the gap.",
        "You would rather they hear it from you than from the internet.",
        "You decide to bring it up before the moment passes.",
    ];
    let mut items = Vec::with_capacity(n);
    let weight_total: u64 = (1..=n as u64).sum();
    for i in 0..n {
        let hi = h.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(i as u64);
        let scenario = format!(
            "Recently, {} ({} variant {}). {} {}",
            pick(&triggers, hi, 3),
            "situation",
            hi % 1000,
            pick(&follow, hi, 7),
            "You plan to raise the subject gently and listen first."
        );
        let p = (n - i) as f64 / weight_total as f64;
        items.push(serde_json::json!({"probability": p, "scenario": scenario}));
    }
    serde_json::Value::Array(items).to_string()
}

fn planning_response(prompt: &str, h: u64) -> String {
    let n = number_after(prompt, "exactly").unwrap_or(3).clamp(1, 12);
    let concerns = [
        "You want them to understand they can always come to you without judgment",
        "You are worried they are getting incomplete information from friends",
        "You want them to know how to keep themselves safe",
        "You want to understand what they already know before adding anything",
    ];
    let approaches = [
        "You will open with a low-pressure question and let them steer at first",
        "You will share what you noticed, then ask for their take",
        "You will keep it short, factual, and warm, checking in as you go",
        "You will acknowledge the awkwardness up front and keep the door open",
    ];
    let weight_total: u64 = (1..=n as u64).sum();
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let hi = h.wrapping_mul(0xD1B54A32D192ED03).wrapping_add(i as u64);
        let p = (n - i) as f64 / weight_total as f64;
        items.push(serde_json::json!({
            "response": {
                "specific_concern": format!("{} (focus {}).", pick(&concerns, hi, 2), hi % 100),
                "approach": format!("{} (style {}).", pick(&approaches, hi, 5), hi % 97),
            },
            "probability": p,
        }));
    }
    serde_json::Value::Array(items).to_string()
}

fn parent_response(h: u64) -> String {
    let lines = [
        "Hey, got a minute? Something came up today and it made me think of you. \
         What have you heard about it at school?",
        "I wanted to check in about something I noticed. No pressure, I just want \
         to hear what you think first.",
        "Can I ask you something? I saw something today that I think is worth \
         talking about. What's your take?",
        "I know this might feel awkward, and that's okay. I just want to make sure \
         you have the real facts. What do you already know?",
        "That thing we saw earlier got me thinking. I'm wondering if we could talk \
         about it for a second. Am I off base bringing it up?",
    ];
    format!("{} ({})", pick(&lines, h, 11), h % 1000)
}

fn child_response(prompt: &str, h: u64) -> String {
    let level = if prompt.contains("highly disengaged") {
        0
    } else if prompt.contains("reluctant and minimally engaged") {
        1
    } else if prompt.contains("moderately engaged") {
        2
    } else if prompt.contains("openly engaged") {
        3
    } else {
        2 // engagement block absent (ablated child)
    };
    let pools: [&[&str]; 4] = [
        &["Whatever.", "Can we not do this right now.", "I don't wanna talk about it.", "Ugh, fine, whatever you say."],
        &["I guess.", "I mean, maybe. I dunno.", "Kinda heard about it already.", "Sure, I guess that's true."],
        &["Yeah, some kids were talking about that. What do you mean exactly?", "Okay yeah, that makes sense I think.", "I heard some of it but I'm not sure what's true.", "Honestly that tracks. Is that actually how it works?"],
        &["Okay actually I've been wondering about that. So how does it work?", "That's lowkey good to know. What should I do if it happens?", "Fr, that makes sense. I didn't know that part.", "Wait, really? Tell me more about that."],
    ];
    format!("{} ({})", pick(pools[level], h, 13), h % 997)
}

fn positive_ratings_response(h: u64) -> String {
    let score = |salt: u64| ((h.rotate_left(salt as u32) % 3) + 2) as f64 / 4.0; // 0.5..1.0
    serde_json::json!({
        "openness": {"score": score(3), "explanation": "derived"},
        "caring": {"score": score(9), "explanation": "derived"},
        "empathy": {"score": score(15), "explanation": "derived"},
    })
    .to_string()
}

fn negative_ratings_response(h: u64) -> String {
    let flag = |salt: u64| u8::from(h.rotate_left(salt as u32).is_multiple_of(23));
    serde_json::json!({
        "hostility": {"score": flag(5), "explanation": "derived"},
        "barrier_tone": {"score": flag(11), "explanation": "derived"},
        "poor_communication": {"score": flag(17), "explanation": "derived"},
    })
    .to_string()
}

fn moderator_response(prompt: &str, h: u64) -> String {
    let exchanges = prompt.matches("Parent:").count();
    if exchanges >= 4 && h.is_multiple_of(2) {
        serde_json::json!({
            "decision": "stop: child reflected on knowledge points and has no questions",
            "parent_points": {
                "knowledge_point": "a concrete safety practice the parent explained",
                "parent_utterance": "I just want to make sure you have the real facts.",
            },
            "child_reflections": {
                "knowledge_point": "a concrete safety practice the parent explained",
                "parent_utterance": "I just want to make sure you have the real facts.",
                "child_utterance": "That's lowkey good to know.",
                "explanation": "the child restated the practice in their own words",
            },
            "no_questions": "the child's last turn contains no questions or hedging",
        })
        .to_string()
    } else {
        "continue".to_string()
    }
}

fn screening_response(h: u64) -> String {
    let include = !h.is_multiple_of(4);
    serde_json::json!({
        "include": include,
        "rationale": if include {
            "the post describes a concrete parent-reported scenario in scope"
        } else {
            "the post does not describe a specific scenario"
        },
    })
    .to_string()
}

fn extraction_response(h: u64) -> String {
    format!(
        "Your child recently came to you after a situation with a classmate left \
         them unsettled (case {}). You have noticed them pulling away from the \
         usual conversations since then. You want to talk through what happened \
         and make sure they know how to handle it if it comes up again.",
        h % 10_000
    )
}

fn diversity_judge_response(h: u64) -> String {
    let s = |salt: u64| (h.rotate_left(salt as u32) % 5 + 1) as i64;
    let sit1 = s(2);
    let sit2 = s(4);
    let strat1 = s(6);
    let strat2 = s(8);
    let traj1 = s(10);
    let traj2 = s(12);
    serde_json::json!({
        "Quality_Score_Set1": s(14),
        "Diversity_Score_Set1": (sit1 + strat1 + traj1 + 1) / 3,
        "Quality_Score_Set2": s(16),
        "Diversity_Score_Set2": (sit2 + strat2 + traj2 + 1) / 3,
        "Situational_Coverage_Set1": sit1,
        "Situational_Coverage_Set2": sit2,
        "Parental_Strategy_Diversity_Set1": strat1,
        "Parental_Strategy_Diversity_Set2": strat2,
        "Dialogue_Trajectory_Diversity_Set1": traj1,
        "Dialogue_Trajectory_Diversity_Set2": traj2,
    })
    .to_string()
}

fn pipeline_response(prompt: &str) -> Option<String> {
    let h = hash64(prompt);
    if prompt.contains("You are a data generator") {
        Some(synthesis_response(prompt, h))
    } else if prompt.contains("generate a short reflection") {
        Some(planning_response(prompt, h))
    } else if prompt.contains("write a 3-4 sentence description") {
        Some(extraction_response(h))
    } else if prompt.contains("determine if the post should be included") {
        Some(screening_response(h))
    } else if prompt.contains("rate the parent's conversation in three dimensions") {
        Some(positive_ratings_response(h))
    } else if prompt.contains("detect if the following are present") {
        Some(negative_ratings_response(h))
    } else if prompt.contains("determine if a conversation should continue or stop") {
        Some(moderator_response(prompt, h))
    } else if prompt.contains("responding to your child") {
        Some(parent_response(h))
    } else if prompt.contains("reflective of how a child would actually speak") {
        Some(child_response(prompt, h))
    } else if prompt.contains("Score ONLY diversity") {
        Some(diversity_judge_response(h))
    } else if prompt.contains("Respond with EXACTLY one integer") {
        if prompt.contains("(1-3)") {
            Some(format!("{}", h % 3 + 1))
        } else {
            Some(format!("{}", h % 5 + 1))
        }
    } else {
        None
    }
}

impl Provider for MockProvider {
    fn complete_raw(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let prompt = req.full_prompt();
        for (idx, rule) in self.rules.iter().enumerate() {
            if prompt.contains(&rule.matcher) {
                let mut calls = self.calls.lock().expect("mock call counter poisoned");
                let count = calls.entry(idx).or_insert(0);
                let reply = rule.replies.get(*count).unwrap_or_else(|| {
                    rule.replies.last().expect("rule has at least one reply")
                });
                *count += 1;
                return match reply {
                    MockReply::Text(t) => Ok(t.clone()),
                    MockReply::Fail(msg) => Err(ProviderError::Unavailable(msg.clone())),
                };
            }
        }
        if self.pipeline_default {
            if let Some(text) = pipeline_response(&prompt) {
                return Ok(text);
            }
            return Ok("ok".to_string());
        }
        Err(ProviderError::Unavailable(format!(
            "no mock rule matches prompt: {}",
            &prompt[..prompt.len().min(120)]
        )))
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| {
                if let Some(v) = self.embedding_overrides.get(t) {
                    return v.clone();
                }
                // hash-derived pseudo-random direction, deterministic per text
                let mut h = hash64(t);
                (0..32)
                    .map(|_| {
                        h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                    })
                    .collect()
            })
            .collect())
    }

    fn entail(&self, premise: &str, hypothesis: &str) -> Result<EntailmentVerdict, ProviderError> {
        if self.identity_entailment && premise == hypothesis {
            return Ok(EntailmentVerdict { label: EntailmentLabel::Entailment, confidence: 1.0 });
        }
        for rule in &self.entail_rules {
            if premise.contains(&rule.premise_contains)
                && hypothesis.contains(&rule.hypothesis_contains)
            {
                return Ok(EntailmentVerdict { label: rule.label, confidence: rule.confidence });
            }
        }
        Ok(EntailmentVerdict { label: EntailmentLabel::Neutral, confidence: 0.5 })
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}
