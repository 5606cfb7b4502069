//! Hybrid scenario pipeline: verbalized-sampling synthesis per
//! (topic x teachable moment) cell, plus crowd-sourced post screening and
//! description extraction. Raw post text never survives into a Scenario.

use std::collections::HashMap;

use once_cell::sync::Lazy;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentSettings;
use crate::model::{
    ChildAttitude, ChildGender, ParentAttitude, ParentRole, PersonaHints, Scenario,
    ScenarioSource, TeachableMoment, Topic,
};
use crate::prompts;
use crate::provider::{Gateway, ProviderError};

/// Keyword lists used to pre-filter crowd-sourced posts, shipped as a
/// versioned asset.
const KEYWORD_ASSET: &str = include_str!("../assets/keywords.json");

static KEYWORDS: Lazy<HashMap<Topic, Vec<String>>> = Lazy::new(|| {
    let raw: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(KEYWORD_ASSET).expect("keyword asset parses");
    let mut map = HashMap::new();
    for topic in Topic::ALL {
        let key = format!("{topic:?}");
        let words = raw
            .get(&key)
            .and_then(|v| v.as_array())
            .expect("keyword asset lists every topic")
            .iter()
            .map(|w| w.as_str().expect("keyword is a string").to_string())
            .collect();
        map.insert(topic, words);
    }
    map
});

pub fn topic_keywords(topic: Topic) -> &'static [String] {
    &KEYWORDS[&topic]
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("extracted description leaks post text: {0}")]
    PostTextLeak(String),
}

/// Where a crowd-sourced post came from (style only; no live scraping).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostSource {
    RedditStyle,
    StackExchangeStyle,
}

/// One keyword-matched post awaiting screening and annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: String,
    pub source: PostSource,
    pub title: String,
    pub content: String,
    pub matched_keywords: Vec<String>,
    pub topic_candidates: Vec<Topic>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl PostRecord {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.content.trim().is_empty() {
            issues.push(format!("post {}: empty content", self.id));
        }
        for kw in &self.matched_keywords {
            let known = Topic::ALL
                .iter()
                .any(|t| topic_keywords(*t).iter().any(|k| k.eq_ignore_ascii_case(kw)));
            if !known {
                issues.push(format!("post {}: keyword {kw:?} not in the keyword asset", self.id));
            }
        }
        issues
    }
}

/// Human annotation of a screened post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post_id: String,
    pub include: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
    #[serde(default)]
    pub persona_hints: PersonaHints,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teachable_moment: Option<TeachableMoment>,
    #[serde(default)]
    pub notes: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.include && self.topic.is_none() {
            issues.push(format!("annotation {}: include without a topic", self.post_id));
        }
        issues
    }
}

fn topic_code(topic: Topic) -> &'static str {
    match topic {
        Topic::SafeSex => "ss",
        Topic::Abstinence => "ab",
        Topic::Consent => "co",
    }
}

fn moment_code(moment: TeachableMoment) -> &'static str {
    match moment {
        TeachableMoment::MajorLifeEvents => "mle",
        TeachableMoment::SocialMedia => "sm",
        TeachableMoment::MassMedia => "mm",
        TeachableMoment::EverydayOccurrences => "eo",
    }
}

/// Synthesizes `n` scenarios for one (topic, moment) cell via verbalized
/// sampling at temperature 0.8. All returned candidates are kept, with their
/// normalized self-estimated probabilities.
pub fn synthesize_scenarios(
    topic: Topic,
    moment: TeachableMoment,
    n: usize,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<Vec<Scenario>, PipelineError> {
    if n == 0 {
        return Err(PipelineError::Precondition("n must be >= 1".to_string()));
    }
    let prompt = prompts::render(
        prompts::SCENARIO_SYNTHESIS,
        &[
            ("topic", topic.name()),
            ("topic_description", topic.description()),
            ("n_samples", &n.to_string()),
            ("teachable_moment", moment.name()),
            ("teachable_moment_description", moment.description()),
            ("teachable_moment_examples", moment.examples()),
        ],
    );
    let req = settings.request(prompt, 0.8);
    let set = gateway.verbalized_sample_with_key(&req, n, "scenario")?;
    let scenarios = set
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let text = match &item.response {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            Scenario {
                id: format!("syn-{}-{}-{i:02}", topic_code(topic), moment_code(moment)),
                topic,
                teachable_moment: moment,
                description: text,
                source: ScenarioSource::Synthetic,
                probability: Some(item.probability),
                persona_hints: None,
                extra: serde_json::Map::new(),
            }
        })
        .collect();
    Ok(scenarios)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningVerdict {
    pub post_id: String,
    pub include: bool,
    pub rationale: String,
}

/// Screens each post with the inclusion-criteria prompt at temperature 0.
/// Unparseable or failed verdicts exclude the post (fail-closed: admitting
/// bad data is worse than losing a post). Results are sorted by post id.
pub fn screen_posts(
    posts: &[PostRecord],
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Vec<ScreeningVerdict> {
    let mut verdicts: Vec<ScreeningVerdict> = posts
        .iter()
        .map(|post| {
            let prompt = prompts::render(
                prompts::POST_SCREENING,
                &[("post_title", &post.title), ("post_content", &post.content)],
            );
            let req = settings.request(prompt, 0.0);
            let parsed = gateway.complete(&req).ok().and_then(|text| {
                let obj = crate::provider::find_json_object(&text)?;
                let include = obj.get("include")?.as_bool()?;
                let rationale = obj
                    .get("rationale")
                    .and_then(|v| v.as_str())
                    .unwrap_or("")
                    .to_string();
                Some((include, rationale))
            });
            match parsed {
                Some((include, rationale)) => {
                    ScreeningVerdict { post_id: post.id.clone(), include, rationale }
                }
                None => {
                    tracing::warn!(post_id = %post.id, "screening verdict unparseable; excluding");
                    ScreeningVerdict {
                        post_id: post.id.clone(),
                        include: false,
                        rationale: "excluded: screening verdict could not be parsed".to_string(),
                    }
                }
            }
        })
        .collect();
    verdicts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    verdicts
}

/// Recall of the screening pass against oracle labels: the fraction of
/// labeled-include posts the screener kept. None if no labeled positives.
pub fn screening_recall(
    verdicts: &[ScreeningVerdict],
    labels: &[(String, bool)],
) -> Option<f64> {
    let by_id: HashMap<&str, bool> =
        verdicts.iter().map(|v| (v.post_id.as_str(), v.include)).collect();
    let mut positives = 0u32;
    let mut hits = 0u32;
    for (id, should_include) in labels {
        if *should_include {
            positives += 1;
            if by_id.get(id.as_str()).copied().unwrap_or(false) {
                hits += 1;
            }
        }
    }
    (positives > 0).then(|| f64::from(hits) / f64::from(positives))
}

fn normalize_for_leak_scan(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_ascii_alphanumeric() || c.is_ascii_whitespace())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// True when any 20+ character run of the post body appears verbatim in the
/// description (after punctuation/whitespace normalization).
pub fn leaks_post_text(description: &str, post_content: &str) -> bool {
    let desc = normalize_for_leak_scan(description);
    let post = normalize_for_leak_scan(post_content);
    if post.len() < 20 {
        return false;
    }
    let bytes = post.as_bytes();
    (0..=bytes.len() - 20).any(|i| {
        // windows start at char boundaries by construction (ascii-only)
        desc.contains(&post[i..i + 20])
    })
}

/// Turns an included annotation into a CrowdSourced Scenario. Persona fields
/// the annotator left open are filled by seeded uniform draws and listed
/// under `random_filled` in the scenario's extra map. The post text itself is
/// never stored.
pub fn extract_scenario<R: Rng>(
    annotation: &AnnotationRecord,
    post: &PostRecord,
    gateway: &Gateway,
    settings: &AgentSettings,
    rng: &mut R,
) -> Result<Scenario, PipelineError> {
    if !annotation.include {
        return Err(PipelineError::Precondition(format!(
            "annotation {} is marked exclude",
            annotation.post_id
        )));
    }
    let topic = annotation.topic.ok_or_else(|| {
        PipelineError::Precondition(format!("annotation {} has no topic", annotation.post_id))
    })?;

    // fixed draw order keeps the rng stream aligned regardless of which
    // fields the annotator pinned
    let hints = &annotation.persona_hints;
    let mut random_filled = Vec::new();
    let drawn_role = if rng.gen::<bool>() { ParentRole::Mother } else { ParentRole::Father };
    let drawn_parent_attitude =
        if rng.gen::<bool>() { ParentAttitude::Traditional } else { ParentAttitude::Progressive };
    let drawn_gender = if rng.gen::<bool>() { ChildGender::Male } else { ChildGender::Female };
    let drawn_age = rng.gen_range(11u8..=18);
    let drawn_child_attitude = if rng.gen::<bool>() {
        ChildAttitude::DismissiveResistant
    } else {
        ChildAttitude::SomewhatComfortable
    };
    let drawn_moment = TeachableMoment::ALL[rng.gen_range(0..TeachableMoment::ALL.len())];

    let mut fill = |name: &'static str| random_filled.push(name.to_string());
    let role = hints.parent_role.unwrap_or_else(|| {
        fill("parent_role");
        drawn_role
    });
    let parent_attitude = hints.parent_attitude.unwrap_or_else(|| {
        fill("parent_attitude");
        drawn_parent_attitude
    });
    let gender = hints.child_gender.unwrap_or_else(|| {
        fill("child_gender");
        drawn_gender
    });
    let age = hints.child_age.unwrap_or_else(|| {
        fill("child_age");
        drawn_age
    });
    let child_attitude = hints.child_attitude.unwrap_or_else(|| {
        fill("child_attitude");
        drawn_child_attitude
    });
    let moment = annotation.teachable_moment.unwrap_or_else(|| {
        fill("teachable_moment");
        drawn_moment
    });

    let prompt = prompts::render(
        prompts::SCENARIO_EXTRACTION,
        &[
            ("topic", topic.name()),
            ("topic_description", topic.description()),
            ("post_title", &post.title),
            ("post_content", &post.content),
            ("parent_attitude", parent_attitude.description()),
            ("parent_role", role.name()),
            ("child_attitude", child_attitude.name()),
            ("child_age", &age.to_string()),
            ("child_gender", gender.name()),
            ("teachable_moment", moment.name()),
            ("notes", &annotation.notes),
        ],
    );
    let req = settings.request(prompt, 0.0);
    let description = gateway.complete(&req)?.trim().to_string();
    if leaks_post_text(&description, &post.content) {
        return Err(PipelineError::PostTextLeak(annotation.post_id.clone()));
    }

    let mut extra = serde_json::Map::new();
    if !random_filled.is_empty() {
        extra.insert(
            "random_filled".to_string(),
            serde_json::Value::Array(
                random_filled.into_iter().map(serde_json::Value::String).collect(),
            ),
        );
    }
    Ok(Scenario {
        id: format!("cs-{}", annotation.post_id),
        topic,
        teachable_moment: moment,
        description,
        source: ScenarioSource::CrowdSourced,
        probability: None,
        persona_hints: Some(PersonaHints {
            parent_role: Some(role),
            parent_attitude: Some(parent_attitude),
            child_gender: Some(gender),
            child_age: Some(age),
            child_attitude: Some(child_attitude),
        }),
        extra,
    })
}

/// Unweighted Cohen's kappa over two equal-length label sequences.
pub fn cohen_kappa<T: Eq + std::hash::Hash + Clone>(
    labels_a: &[T],
    labels_b: &[T],
) -> Result<f64, String> {
    if labels_a.len() != labels_b.len() {
        return Err(format!(
            "label lists differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        ));
    }
    if labels_a.is_empty() {
        return Err("label lists are empty".to_string());
    }
    let n = labels_a.len() as f64;
    let observed =
        labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as f64 / n;
    let mut marg_a: HashMap<&T, f64> = HashMap::new();
    let mut marg_b: HashMap<&T, f64> = HashMap::new();
    for a in labels_a {
        *marg_a.entry(a).or_default() += 1.0;
    }
    for b in labels_b {
        *marg_b.entry(b).or_default() += 1.0;
    }
    let expected: f64 = marg_a
        .iter()
        .map(|(cat, ca)| ca / n * marg_b.get(cat).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - expected).abs() < 1e-12 {
        // degenerate marginals: all mass on one cell
        return Ok(if observed >= 1.0 - 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((observed - expected) / (1.0 - expected))
}
