//! Evaluation harness: embedding diversity, pairwise LLM diversity judging
//! with swap randomization, single-integer realism/quality scoring,
//! contradiction rate, mistake-rate aggregation, and dataset statistics.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentSettings;
use crate::model::{DialogueRecord, Scenario, Speaker};
use crate::prompts;
use crate::provider::{find_json_object, EntailmentLabel, Gateway, ProviderError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Canonical transcript rendering used for embeddings and judge prompts:
/// speaker-tagged lines joined by newlines. Frozen so diversity numbers are
/// comparable across runs.
pub fn transcript_text(record: &DialogueRecord) -> String {
    record
        .utterances
        .iter()
        .map(|u| {
            let tag = match u.speaker {
                Speaker::Parent => "Parent",
                Speaker::Child => "Child",
            };
            format!("{tag}: {}", u.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Mean over unordered pairs of (1 - cosine similarity). Zero vectors are
/// rejected: cosine is undefined for them.
pub fn pairwise_cosine_diversity(vectors: &[Vec<f64>]) -> Result<f64, String> {
    if vectors.len() < 2 {
        return Err("need at least 2 vectors".to_string());
    }
    let mut total = 0.0;
    let mut pairs = 0u64;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let (a, b) = (&vectors[i], &vectors[j]);
            if a.len() != b.len() {
                return Err("vectors differ in dimension".to_string());
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err("zero vector has no cosine".to_string());
            }
            total += 1.0 - dot / (na * nb);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Embeds each dialogue transcript and averages pairwise (1 - cosine).
pub fn embedding_diversity(
    records: &[DialogueRecord],
    gateway: &Gateway,
) -> Result<f64, EvalError> {
    if records.len() < 2 {
        return Err(EvalError::Precondition("need at least 2 dialogues".to_string()));
    }
    let texts: Vec<String> = records.iter().map(transcript_text).collect();
    let vectors = gateway.embed(&texts)?;
    pairwise_cosine_diversity(&vectors).map_err(EvalError::Precondition)
}

/// Diversity scores one judge call assigns to one set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetScores {
    pub overall: u8,
    pub situational: u8,
    pub strategy: u8,
    pub trajectory: u8,
}

/// One judged comparison after un-swapping back to logical A/B order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub key: String,
    /// True when logical set A was shown to the judge as Set 2.
    pub swapped: bool,
    pub a: SetScores,
    pub b: SetScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub comparisons: Vec<ComparisonOutcome>,
    pub wins_a: usize,
    pub ties: usize,
    pub wins_b: usize,
    pub skips: usize,
    pub total: usize,
    pub mean_overall_a: f64,
    pub mean_overall_b: f64,
}

fn render_set(records: &[&DialogueRecord]) -> String {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| format!("--- Dialogue {} ---\n{}", i + 1, transcript_text(r)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn judge_int(value: Option<&serde_json::Value>, lo: i64, hi: i64) -> Option<u8> {
    let v = value?.as_i64()?;
    (lo..=hi).contains(&v).then_some(v as u8)
}

fn parse_set_scores(obj: &serde_json::Value, set: u8) -> Option<SetScores> {
    Some(SetScores {
        overall: judge_int(obj.get(format!("Diversity_Score_Set{set}")), 1, 5)?,
        situational: judge_int(obj.get(format!("Situational_Coverage_Set{set}")), 1, 5)?,
        strategy: judge_int(obj.get(format!("Parental_Strategy_Diversity_Set{set}")), 1, 5)?,
        trajectory: judge_int(obj.get(format!("Dialogue_Trajectory_Diversity_Set{set}")), 1, 5)?,
    })
}

/// One judged comparison: seeded coin decides prompt order, scores are mapped
/// back to logical A/B afterwards. None means the judge output was
/// unparseable and the comparison is skipped.
fn judge_one_comparison<R: Rng>(
    key: &str,
    group_a: &[&DialogueRecord],
    group_b: &[&DialogueRecord],
    rng: &mut R,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Option<ComparisonOutcome> {
    let swapped = rng.gen::<bool>();
    let (first, second) = if swapped { (group_b, group_a) } else { (group_a, group_b) };
    let prompt = prompts::render(
        prompts::JUDGE_DIVERSITY,
        &[("set1", &render_set(first)), ("set2", &render_set(second))],
    );
    let req = settings.request(prompt, 0.0);
    let text = gateway.complete(&req).ok()?;
    let obj = find_json_object(&text)?;
    let set1 = parse_set_scores(&obj, 1)?;
    let set2 = parse_set_scores(&obj, 2)?;
    let (a, b) = if swapped { (set2, set1) } else { (set1, set2) };
    Some(ComparisonOutcome { key: key.to_string(), swapped, a, b })
}

/// Judges corpus diversity of two record sets. Records are grouped by
/// scenario id and each shared scenario is one comparison; if the sets share
/// no scenario ids, the whole sets form a single comparison.
pub fn judge_diversity<R: Rng>(
    set_a: &[DialogueRecord],
    set_b: &[DialogueRecord],
    rng: &mut R,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<DiversityReport, EvalError> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(EvalError::Precondition("both dialogue sets must be non-empty".to_string()));
    }
    fn group(records: &[DialogueRecord]) -> BTreeMap<&str, Vec<&DialogueRecord>> {
        let mut m: BTreeMap<&str, Vec<&DialogueRecord>> = BTreeMap::new();
        for r in records {
            m.entry(r.scenario_id.as_str()).or_default().push(r);
        }
        m
    }
    let by_a = group(set_a);
    let by_b = group(set_b);
    let shared: Vec<&str> =
        by_a.keys().filter(|k| by_b.contains_key(*k)).copied().collect();

    let mut outcomes: Vec<Option<ComparisonOutcome>> = Vec::new();
    if shared.is_empty() {
        let all_a: Vec<&DialogueRecord> = set_a.iter().collect();
        let all_b: Vec<&DialogueRecord> = set_b.iter().collect();
        outcomes.push(judge_one_comparison("*", &all_a, &all_b, rng, gateway, settings));
    } else {
        for key in shared {
            outcomes.push(judge_one_comparison(
                key, &by_a[key], &by_b[key], rng, gateway, settings,
            ));
        }
    }

    let total = outcomes.len();
    let mut report = DiversityReport {
        comparisons: Vec::new(),
        wins_a: 0,
        ties: 0,
        wins_b: 0,
        skips: 0,
        total,
        mean_overall_a: 0.0,
        mean_overall_b: 0.0,
    };
    for outcome in outcomes {
        match outcome {
            Some(c) => {
                match c.a.overall.cmp(&c.b.overall) {
                    std::cmp::Ordering::Greater => report.wins_a += 1,
                    std::cmp::Ordering::Equal => report.ties += 1,
                    std::cmp::Ordering::Less => report.wins_b += 1,
                }
                report.mean_overall_a += f64::from(c.a.overall);
                report.mean_overall_b += f64::from(c.b.overall);
                report.comparisons.push(c);
            }
            None => report.skips += 1,
        }
    }
    let scored = report.comparisons.len();
    if scored > 0 {
        report.mean_overall_a /= scored as f64;
        report.mean_overall_b /= scored as f64;
    }
    Ok(report)
}

/// Strict single-integer judge parse: whitespace-tolerant, range-checked.
fn parse_single_integer(text: &str, lo: i64, hi: i64) -> Option<u8> {
    let v: i64 = text.trim().parse().ok()?;
    (lo..=hi).contains(&v).then_some(v as u8)
}

fn single_integer_judge(
    template: &str,
    record: &DialogueRecord,
    lo: i64,
    hi: i64,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<Option<u8>, EvalError> {
    if record.utterances.is_empty() {
        return Err(EvalError::Precondition("dialogue is empty".to_string()));
    }
    let prompt = prompts::render(template, &[("conversation", &transcript_text(record))]);
    let req = settings.request(prompt, 0.0);
    for _ in 0..settings.max_retries.max(1) {
        let text = gateway.complete(&req)?;
        if let Some(v) = parse_single_integer(&text, lo, hi) {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// Naturalness and coherence, each an integer in 1-3. None = unparseable
/// after retries; the caller tallies the skip.
pub fn score_realism(
    record: &DialogueRecord,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<Option<(u8, u8)>, EvalError> {
    let n = single_integer_judge(prompts::JUDGE_REALISM_NATURALNESS, record, 1, 3, gateway, settings)?;
    let c = single_integer_judge(prompts::JUDGE_REALISM_COHERENCE, record, 1, 3, gateway, settings)?;
    Ok(n.zip(c))
}

/// Warmth, informativeness, and engagement modeling, each an integer in 1-5.
pub fn score_quality(
    record: &DialogueRecord,
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<Option<(u8, u8, u8)>, EvalError> {
    let w = single_integer_judge(prompts::JUDGE_QUALITY_WARMTH, record, 1, 5, gateway, settings)?;
    let i = single_integer_judge(prompts::JUDGE_QUALITY_INFO, record, 1, 5, gateway, settings)?;
    let e = single_integer_judge(prompts::JUDGE_QUALITY_ENGAGE, record, 1, 5, gateway, settings)?;
    Ok(match (w, i, e) {
        (Some(w), Some(i), Some(e)) => Some((w, i, e)),
        _ => None,
    })
}

/// Corpus means over non-skipped dialogues, with the skip count reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub dimension_means: BTreeMap<String, f64>,
    pub scored: usize,
    pub skips: usize,
}

pub fn realism_summary(
    records: &[DialogueRecord],
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<ScoreSummary, EvalError> {
    let mut sums = (0.0f64, 0.0f64);
    let mut scored = 0;
    let mut skips = 0;
    for r in records {
        match score_realism(r, gateway, settings)? {
            Some((n, c)) => {
                sums.0 += f64::from(n);
                sums.1 += f64::from(c);
                scored += 1;
            }
            None => skips += 1,
        }
    }
    let mut means = BTreeMap::new();
    if scored > 0 {
        means.insert("naturalness".to_string(), sums.0 / scored as f64);
        means.insert("coherence".to_string(), sums.1 / scored as f64);
    }
    Ok(ScoreSummary { dimension_means: means, scored, skips })
}

pub fn quality_summary(
    records: &[DialogueRecord],
    gateway: &Gateway,
    settings: &AgentSettings,
) -> Result<ScoreSummary, EvalError> {
    let mut sums = (0.0f64, 0.0f64, 0.0f64);
    let mut scored = 0;
    let mut skips = 0;
    for r in records {
        match score_quality(r, gateway, settings)? {
            Some((w, i, e)) => {
                sums.0 += f64::from(w);
                sums.1 += f64::from(i);
                sums.2 += f64::from(e);
                scored += 1;
            }
            None => skips += 1,
        }
    }
    let mut means = BTreeMap::new();
    if scored > 0 {
        means.insert("warmth".to_string(), sums.0 / scored as f64);
        means.insert("informativeness".to_string(), sums.1 / scored as f64);
        means.insert("engagement_modeling".to_string(), sums.2 / scored as f64);
    }
    Ok(ScoreSummary { dimension_means: means, scored, skips })
}

/// Fraction of adjacent utterance pairs labeled Contradiction, with the
/// earlier utterance as premise.
pub fn contradiction_rate(
    record: &DialogueRecord,
    gateway: &Gateway,
) -> Result<f64, EvalError> {
    if record.utterances.len() < 2 {
        return Err(EvalError::Precondition(
            "contradiction rate needs at least 2 utterances".to_string(),
        ));
    }
    let mut contradictions = 0u64;
    let pairs = record.utterances.len() - 1;
    for pair in record.utterances.windows(2) {
        let verdict = gateway.entail(&pair[0].text, &pair[1].text)?;
        if verdict.label == EntailmentLabel::Contradiction {
            contradictions += 1;
        }
    }
    Ok(contradictions as f64 / pairs as f64)
}

/// Human-supplied per-dialogue mistake flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeLabels {
    pub dialogue_id: String,
    /// Giving too much information.
    pub tmi: bool,
    /// Not acknowledging the child's words.
    pub naw: bool,
    /// Attacking or blaming tone.
    pub atk: bool,
    /// Failing to suspend judgment.
    pub fsj: bool,
    /// Missing a teachable moment.
    pub mtm: bool,
    /// Not asking questions.
    pub naq: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistakeRates {
    pub tmi: f64,
    pub naw: f64,
    pub atk: f64,
    pub fsj: f64,
    pub mtm: f64,
    pub naq: f64,
    /// Mean of the six per-mistake rates.
    pub overall: f64,
}

pub fn mistake_rates(labels: &[MistakeLabels]) -> Result<MistakeRates, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Precondition("no mistake labels".to_string()));
    }
    let n = labels.len() as f64;
    let rate = |pick: fn(&MistakeLabels) -> bool| {
        labels.iter().filter(|l| pick(l)).count() as f64 / n
    };
    let r = MistakeRates {
        tmi: rate(|l| l.tmi),
        naw: rate(|l| l.naw),
        atk: rate(|l| l.atk),
        fsj: rate(|l| l.fsj),
        mtm: rate(|l| l.mtm),
        naq: rate(|l| l.naq),
        overall: 0.0,
    };
    let overall = (r.tmi + r.naw + r.atk + r.fsj + r.mtm + r.naq) / 6.0;
    Ok(MistakeRates { overall, ..r })
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Table-style corpus statistics. Averages are rounded to 2 decimals; all
/// count maps use stable (sorted) key ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStatistics {
    pub num_dialogues: usize,
    pub num_scenarios: usize,
    pub num_utterances: usize,
    pub avg_parent_utterance_words: f64,
    pub avg_child_utterance_words: f64,
    pub avg_dialogue_length_utterances: f64,
    pub parent_role_counts: BTreeMap<String, usize>,
    pub parent_attitude_counts: BTreeMap<String, usize>,
    pub child_age_group_counts: BTreeMap<String, usize>,
    pub child_gender_counts: BTreeMap<String, usize>,
    pub topic_counts: BTreeMap<String, usize>,
    pub teachable_moment_counts: BTreeMap<String, usize>,
    pub termination_counts: BTreeMap<String, usize>,
}

/// Computes corpus statistics from records alone plus the scenario file for
/// topic/teachable-moment attribution. Records whose scenario is absent are
/// counted under "unknown".
pub fn dataset_statistics(
    records: &[DialogueRecord],
    scenarios: &[Scenario],
) -> Result<DatasetStatistics, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Precondition("no dialogue records".to_string()));
    }
    let scenario_index: HashMap<&str, &Scenario> =
        scenarios.iter().map(|s| (s.id.as_str(), s)).collect();

    let mut parent_words = 0usize;
    let mut parent_utts = 0usize;
    let mut child_words = 0usize;
    let mut child_utts = 0usize;
    let mut stats = DatasetStatistics {
        num_dialogues: records.len(),
        num_scenarios: 0,
        num_utterances: 0,
        avg_parent_utterance_words: 0.0,
        avg_child_utterance_words: 0.0,
        avg_dialogue_length_utterances: 0.0,
        parent_role_counts: BTreeMap::new(),
        parent_attitude_counts: BTreeMap::new(),
        child_age_group_counts: BTreeMap::new(),
        child_gender_counts: BTreeMap::new(),
        topic_counts: BTreeMap::new(),
        teachable_moment_counts: BTreeMap::new(),
        termination_counts: BTreeMap::new(),
    };

    let mut scenario_ids: Vec<&str> = records.iter().map(|r| r.scenario_id.as_str()).collect();
    scenario_ids.sort_unstable();
    scenario_ids.dedup();
    stats.num_scenarios = scenario_ids.len();

    for r in records {
        stats.num_utterances += r.utterances.len();
        for u in &r.utterances {
            match u.speaker {
                Speaker::Parent => {
                    parent_utts += 1;
                    parent_words += word_count(&u.text);
                }
                Speaker::Child => {
                    child_utts += 1;
                    child_words += word_count(&u.text);
                }
            }
        }
        *stats
            .parent_role_counts
            .entry(r.parent_persona.role.name().to_string())
            .or_default() += 1;
        *stats
            .parent_attitude_counts
            .entry(r.parent_persona.attitude.name().to_string())
            .or_default() += 1;
        *stats
            .child_age_group_counts
            .entry(r.child_persona.age_group.name().to_string())
            .or_default() += 1;
        *stats
            .child_gender_counts
            .entry(r.child_persona.gender.name().to_string())
            .or_default() += 1;
        let (topic, moment) = match scenario_index.get(r.scenario_id.as_str()) {
            Some(s) => (s.topic.name().to_string(), s.teachable_moment.name().to_string()),
            None => ("unknown".to_string(), "unknown".to_string()),
        };
        *stats.topic_counts.entry(topic).or_default() += 1;
        *stats.teachable_moment_counts.entry(moment).or_default() += 1;
        *stats
            .termination_counts
            .entry(format!("{:?}", r.termination))
            .or_default() += 1;
    }

    stats.avg_parent_utterance_words =
        round2(if parent_utts == 0 { 0.0 } else { parent_words as f64 / parent_utts as f64 });
    stats.avg_child_utterance_words =
        round2(if child_utts == 0 { 0.0 } else { child_words as f64 / child_utts as f64 });
    stats.avg_dialogue_length_utterances =
        round2(stats.num_utterances as f64 / records.len() as f64);
    Ok(stats)
}
