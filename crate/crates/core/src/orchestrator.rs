//! Turn-by-turn dialogue loop and batch runner, wiring agents, engagement,
//! and termination, with every ablation switchable from config.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{
    self, AgentError, AgentSettings, ModeratorVerdict,
};
use crate::engagement::{
    estimate_from_ratings, init_state, sample_score, update_mean, EngagementParams,
};
use crate::model::{
    ChildAttitude, ChildGender, ChildPersona, ConversationPlan, DialogueRecord,
    EngagementTraceEntry, ParentAttitude, ParentPersona, ParentRole, Scenario, Termination,
    Utterance,
};
use crate::provider::Gateway;

/// Appendix-style ablation switches. `basic_parent` implies `no_planning`
/// and `basic_child` implies `no_engagement`; [`RunConfig::normalize`]
/// enforces both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_scenario: bool,
    pub no_planning: bool,
    pub no_engagement: bool,
    pub no_mu_max: bool,
    pub basic_parent: bool,
    pub basic_child: bool,
    pub no_moderator: bool,
}

impl AblationFlags {
    pub fn active(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.no_scenario {
            out.push("no_scenario");
        }
        if self.no_planning {
            out.push("no_planning");
        }
        if self.no_engagement {
            out.push("no_engagement");
        }
        if self.no_mu_max {
            out.push("no_mu_max");
        }
        if self.basic_parent {
            out.push("basic_parent");
        }
        if self.basic_child {
            out.push("basic_child");
        }
        if self.no_moderator {
            out.push("no_moderator");
        }
        out
    }
}

/// Which backend to build; credentials come from the named environment
/// variable only, never from the file itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script: Option<PathBuf>,
    },
    Remote {
        base_url: String,
        api_key_env: String,
        model_tag: String,
        embedding_model: String,
    },
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Mock { script: None }
    }
}

/// Declarative run configuration. Everything that affects outputs lives
/// here, so the config hash plus the master seed fully determines a mock
/// run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub topics: Vec<crate::model::Topic>,
    pub dialogues_per_scenario: usize,
    /// Ceiling on parent-child exchanges per dialogue.
    pub max_turns: u32,
    pub master_seed: u64,
    /// Scenarios synthesized per (topic, teachable moment) cell.
    pub scenarios_per_cell: usize,
    pub max_retries: u32,
    pub concurrency_limit: usize,
    pub engagement: EngagementParams,
    pub ablations: AblationFlags,
    pub provider: ProviderConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            topics: crate::model::Topic::ALL.to_vec(),
            dialogues_per_scenario: 3,
            max_turns: 10,
            master_seed: 42,
            scenarios_per_cell: 4,
            max_retries: 3,
            concurrency_limit: 1,
            engagement: EngagementParams::default(),
            ablations: AblationFlags::default(),
            provider: ProviderConfig::default(),
            audit_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.normalize();
        config.validate()?;
        Ok(config)
    }

    /// Resolves implied ablations.
    pub fn normalize(&mut self) {
        if self.ablations.basic_parent {
            self.ablations.no_planning = true;
        }
        if self.ablations.basic_child {
            self.ablations.no_engagement = true;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dialogues_per_scenario < 1 {
            return Err(ConfigError::Invalid("dialogues_per_scenario must be >= 1".into()));
        }
        if self.max_turns < 1 {
            return Err(ConfigError::Invalid("max_turns must be >= 1".into()));
        }
        if self.scenarios_per_cell < 1 {
            return Err(ConfigError::Invalid("scenarios_per_cell must be >= 1".into()));
        }
        if self.topics.is_empty() {
            return Err(ConfigError::Invalid("at least one topic must be enabled".into()));
        }
        self.engagement.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    /// Stable hash over the canonical JSON encoding of the config.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn agent_settings(&self) -> AgentSettings {
        let model_tag = match &self.provider {
            ProviderConfig::Mock { .. } => "mock-default".to_string(),
            ProviderConfig::Remote { model_tag, .. } => model_tag.clone(),
        };
        AgentSettings { model_tag, max_retries: self.max_retries }
    }
}

/// Sentinel dialogue index for the per-scenario stream (persona sampling and
/// plan drawing).
pub const SCENARIO_STREAM: u32 = u32::MAX;

/// Stable seed derivation: sha256 over the master seed, scenario id, and
/// dialogue index.
pub fn derive_seed(master_seed: u64, scenario_id: &str, dialogue_index: u32) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_be_bytes());
    hasher.update(scenario_id.as_bytes());
    hasher.update([0xff]);
    hasher.update(dialogue_index.to_be_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// A dialogue that could not be completed; kept out of the dataset and
/// written to quarantine instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueFailure {
    pub dialogue_id: String,
    pub scenario_id: String,
    pub error: String,
    pub rng_seed: u64,
    pub partial_utterances: Vec<Utterance>,
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub records: Vec<DialogueRecord>,
    pub failures: Vec<DialogueFailure>,
}

/// Samples personas uniformly over every dimension a hint does not pin.
/// Draws always happen in a fixed order so the stream stays aligned whether
/// or not hints are present.
pub fn sample_personas<R: Rng>(
    scenario: &Scenario,
    rng: &mut R,
) -> (ParentPersona, ChildPersona) {
    let hints = scenario.persona_hints.clone().unwrap_or_default();
    let role = if rng.gen::<bool>() { ParentRole::Mother } else { ParentRole::Father };
    let parent_attitude =
        if rng.gen::<bool>() { ParentAttitude::Traditional } else { ParentAttitude::Progressive };
    let gender = if rng.gen::<bool>() { ChildGender::Male } else { ChildGender::Female };
    let age = rng.gen_range(11u8..=18);
    let child_attitude = if rng.gen::<bool>() {
        ChildAttitude::DismissiveResistant
    } else {
        ChildAttitude::SomewhatComfortable
    };

    let parent = ParentPersona {
        role: hints.parent_role.unwrap_or(role),
        attitude: hints.parent_attitude.unwrap_or(parent_attitude),
    };
    let age = hints.child_age.filter(|a| (11..=18).contains(a)).unwrap_or(age);
    let child = ChildPersona::new(
        hints.child_gender.unwrap_or(gender),
        age,
        hints.child_attitude.unwrap_or(child_attitude),
    )
    .expect("age clamped to 11-18");
    (parent, child)
}

/// Runs one dialogue to termination. Provider failures abort it and return
/// the partial transcript for quarantine.
#[allow(clippy::too_many_arguments)]
pub fn run_dialogue(
    scenario: &Scenario,
    parent: &ParentPersona,
    child: &ChildPersona,
    plan: Option<&ConversationPlan>,
    config: &RunConfig,
    gateway: &Gateway,
    dialogue_id: &str,
    seed: u64,
) -> Result<DialogueRecord, DialogueFailure> {
    let settings = config.agent_settings();
    let ablations = &config.ablations;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let engagement_on = !ablations.no_engagement;
    let mut eng_state = engagement_on.then(|| {
        let mut s = init_state(child.attitude, config.engagement.clone(), &mut rng);
        if ablations.no_mu_max {
            // no ceiling: the mean may rise to the top of the scale
            s.mu_max = 3.0;
        }
        s
    });

    let scenario_for_prompts = (!ablations.no_scenario).then_some(scenario);
    let mut utterances: Vec<Utterance> = Vec::new();
    let mut trace: Vec<EngagementTraceEntry> = Vec::new();

    let fail = |utterances: &[Utterance], e: AgentError| DialogueFailure {
        dialogue_id: dialogue_id.to_string(),
        scenario_id: scenario.id.clone(),
        error: e.to_string(),
        rng_seed: seed,
        partial_utterances: utterances.to_vec(),
    };

    let mut termination = Termination::MaxTurns;
    for exchange in 1..=config.max_turns {
        let parent_utterance = agents::parent_turn(
            plan,
            scenario_for_prompts,
            scenario.topic,
            parent,
            child,
            &utterances,
            gateway,
            &settings,
            ablations.basic_parent,
        )
        .map_err(|e| fail(&utterances, e))?;
        utterances.push(parent_utterance);

        let score = if let Some(state) = eng_state.take() {
            // the first turn samples from the initial mean directly; ratings
            // begin steering the mean from the second exchange
            let (state_for_sample, e_hat) = if exchange == 1 {
                (state, None)
            } else {
                let last_parent = utterances.last().expect("just pushed");
                let ratings =
                    agents::rate_parent_utterance(last_parent, scenario.topic, gateway, &settings)
                        .map_err(|e| fail(&utterances, e))?;
                let e_hat = estimate_from_ratings(&ratings, &config.engagement);
                (update_mean(&state, e_hat), Some(e_hat))
            };
            let (e, next_state) = sample_score(&state_for_sample, &mut rng);
            trace.push(EngagementTraceEntry { mu: state_for_sample.mu, e_hat, score: e });
            eng_state = Some(next_state);
            Some(e)
        } else {
            None
        };

        let child_utterance = agents::child_turn(
            scenario.topic,
            parent,
            child,
            &utterances,
            score,
            gateway,
            &settings,
        )
        .map_err(|e| fail(&utterances, e))?;
        utterances.push(child_utterance);

        // disengagement first: this termination is owned by the engagement
        // module, not the moderator
        if engagement_on && trace.len() >= 2 {
            let n = trace.len();
            if trace[n - 1].score == 0 && trace[n - 2].score == 0 {
                termination = Termination::ConsecutiveDisengagement;
                break;
            }
        }

        // moderator cadence: from the second exchange on
        if !ablations.no_moderator && exchange >= 2 {
            let decision = agents::moderate(&utterances, gateway, &settings);
            if decision.verdict == ModeratorVerdict::Stop {
                termination = Termination::ModeratorStop;
                break;
            }
        }
    }

    Ok(DialogueRecord {
        id: dialogue_id.to_string(),
        scenario_id: scenario.id.clone(),
        parent_persona: *parent,
        child_persona: *child,
        plan: plan.cloned(),
        utterances,
        termination,
        engagement_trace: trace,
        rng_seed: seed,
        provider_tag: gateway.tag().to_string(),
        extra: serde_json::Map::new(),
    })
}

fn scenario_batch(
    scenario: &Scenario,
    config: &RunConfig,
    gateway: &Gateway,
) -> (Vec<DialogueRecord>, Vec<DialogueFailure>) {
    let n = config.dialogues_per_scenario;
    let settings = config.agent_settings();
    let mut scenario_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, &scenario.id, SCENARIO_STREAM));
    let (parent, child) = sample_personas(scenario, &mut scenario_rng);

    // one planning call per scenario, shared across its dialogues
    let plans: Vec<Option<ConversationPlan>> = if config.ablations.no_planning {
        vec![None; n]
    } else {
        match agents::plan_conversation(
            &parent,
            &child,
            (!config.ablations.no_scenario).then_some(scenario),
            scenario.topic,
            n,
            gateway,
            &settings,
            &mut scenario_rng,
        ) {
            Ok(plans) => {
                let mut slots: Vec<Option<ConversationPlan>> =
                    plans.into_iter().map(Some).collect();
                slots.resize(n, None);
                slots
            }
            Err(e) => {
                let failures = (0..n)
                    .map(|i| DialogueFailure {
                        dialogue_id: format!("{}-{i}", scenario.id),
                        scenario_id: scenario.id.clone(),
                        error: format!("planning failed: {e}"),
                        rng_seed: derive_seed(config.master_seed, &scenario.id, i as u32),
                        partial_utterances: Vec::new(),
                    })
                    .collect();
                return (Vec::new(), failures);
            }
        }
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        let dialogue_id = format!("{}-{i}", scenario.id);
        let seed = derive_seed(config.master_seed, &scenario.id, i as u32);
        let dialogue_gateway = match audit_gateway(gateway, config, &dialogue_id) {
            Some(g) => g,
            None => gateway.clone(),
        };
        match run_dialogue(
            scenario,
            &parent,
            &child,
            plan.as_ref(),
            config,
            &dialogue_gateway,
            &dialogue_id,
            seed,
        ) {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    (records, failures)
}

fn audit_gateway(gateway: &Gateway, config: &RunConfig, dialogue_id: &str) -> Option<Gateway> {
    let dir = config.audit_dir.as_ref()?;
    if std::fs::create_dir_all(dir).is_err() {
        return None;
    }
    let path = dir.join(format!("{dialogue_id}.audit.txt"));
    let file = std::fs::File::create(path).ok()?;
    Some(gateway.with_audit(Box::new(file)))
}

/// Runs every scenario's dialogues. Scenarios may execute concurrently up to
/// `concurrency_limit`; output order is scenario order then dialogue index
/// regardless of scheduling, and per-dialogue seeds make results independent
/// of execution order.
pub fn run_batch(
    scenarios: &[Scenario],
    config: &RunConfig,
    gateway: &Gateway,
) -> BatchOutcome {
    let per_scenario: Vec<(Vec<DialogueRecord>, Vec<DialogueFailure>)> =
        if config.concurrency_limit > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.concurrency_limit)
                .build()
                .expect("thread pool");
            pool.install(|| {
                use rayon::prelude::*;
                scenarios
                    .par_iter()
                    .map(|s| scenario_batch(s, config, gateway))
                    .collect()
            })
        } else {
            scenarios.iter().map(|s| scenario_batch(s, config, gateway)).collect()
        };

    let mut outcome = BatchOutcome::default();
    for (records, failures) in per_scenario {
        outcome.records.extend(records);
        outcome.failures.extend(failures);
    }
    outcome
}
