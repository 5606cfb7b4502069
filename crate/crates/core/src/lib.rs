//! Simulation engine for persona-conditioned parent-child conversations:
//! domain model, engagement dynamics, agent roles, provider gateway,
//! scenario pipeline, evaluation metrics, and persistence.

pub mod agents;
pub mod engagement;
pub mod eval;
pub mod model;
pub mod orchestrator;
pub mod persist;
pub mod prompts;
pub mod provider;
pub mod scenario;

pub use engagement::{EngagementParams, EngagementState, UtteranceRatings};
pub use model::{
    AgeGroup, ChildAttitude, ChildGender, ChildPersona, ConversationPlan, DialogueRecord,
    EngagementTraceEntry, ParentAttitude, ParentPersona, ParentRole, PersonaHints, Scenario,
    ScenarioSource, Speaker, TeachableMoment, Termination, Topic, Utterance,
};
pub use orchestrator::{AblationFlags, BatchOutcome, DialogueFailure, ProviderConfig, RunConfig};
pub use provider::{ChatRequest, Gateway, Provider, ProviderError};
