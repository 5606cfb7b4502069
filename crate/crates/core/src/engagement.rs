//! Heuristic engagement model for the child agent.
//!
//! Maintains a latent mean over a 4-level (0-3) engagement scale. Each turn
//! the parent's utterance is rated along weighted dimensions, the ratings are
//! mapped to an ideal-score estimate, the mean follows the estimate through
//! exponential smoothing (capped by a per-dialogue ceiling), and the discrete
//! score is a rounded Gaussian draw around the mean, clamped to move at most
//! two levels per turn.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::ChildAttitude;

/// Tunable constants of the engagement process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngagementParams {
    /// Smoothing coefficient pulling the mean toward the per-turn estimate.
    pub alpha: f64,
    /// Gaussian std-dev on the very first turn.
    pub sigma_first: f64,
    /// Gaussian std-dev on every later turn.
    pub sigma_rest: f64,
    /// Discrete score may move at most this many levels per turn.
    pub max_step: u8,
    /// Range the mean ceiling is drawn from for dismissive/resistant children.
    pub mu_max_range_dismissive: (f64, f64),
    /// Range the mean ceiling is drawn from for somewhat-comfortable children.
    pub mu_max_range_comfortable: (f64, f64),
    pub weight_open_questions: f64,
    pub weight_caring: f64,
    pub weight_empathy: f64,
    pub weight_hostility: f64,
    pub weight_barrier_tone: f64,
    pub weight_poor_communication: f64,
}

impl Default for EngagementParams {
    fn default() -> Self {
        EngagementParams {
            alpha: 0.3,
            sigma_first: 0.0,
            sigma_rest: 0.5,
            max_step: 2,
            mu_max_range_dismissive: (1.0, 1.8),
            mu_max_range_comfortable: (2.0, 2.8),
            weight_open_questions: 0.5,
            weight_caring: 0.25,
            weight_empathy: 0.25,
            weight_hostility: -0.33,
            weight_barrier_tone: -0.33,
            weight_poor_communication: -0.33,
        }
    }
}

impl EngagementParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if self.sigma_first < 0.0 || self.sigma_rest < 0.0 {
            return Err("sigma values must be >= 0".to_string());
        }
        let pos_sum = self.weight_open_questions + self.weight_caring + self.weight_empathy;
        if (pos_sum - 1.0).abs() > 1e-9 {
            return Err(format!("positive weights sum to {pos_sum}, expected 1.0"));
        }
        for (name, w) in [
            ("hostility", self.weight_hostility),
            ("barrier_tone", self.weight_barrier_tone),
            ("poor_communication", self.weight_poor_communication),
        ] {
            if w >= 0.0 {
                return Err(format!("negative weight {name} = {w} must be < 0"));
            }
        }
        Ok(())
    }
}

/// Ratings of one parent utterance. Positive dimensions are continuous in
/// [0, 1]; negative dimensions are presence flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRatings {
    pub open_questions: f64,
    pub caring: f64,
    pub empathy: f64,
    pub hostility: u8,
    pub barrier_tone: u8,
    pub poor_communication: u8,
}

impl UtteranceRatings {
    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in [
            ("open_questions", self.open_questions),
            ("caring", self.caring),
            ("empathy", self.empathy),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("positive rating {name} = {r} outside [0, 1]"));
            }
        }
        for (name, f) in [
            ("hostility", self.hostility),
            ("barrier_tone", self.barrier_tone),
            ("poor_communication", self.poor_communication),
        ] {
            if f > 1 {
                return Err(format!("flag {name} = {f} must be 0 or 1"));
            }
        }
        Ok(())
    }
}

/// Latent engagement state for one dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementState {
    /// Current mean of the engagement distribution.
    pub mu: f64,
    /// Per-dialogue ceiling on the mean.
    pub mu_max: f64,
    /// Last sampled discrete score, once at least one turn has been sampled.
    pub last_score: Option<u8>,
    /// Number of turns sampled so far.
    pub turn: u32,
    pub params: EngagementParams,
}

/// Draws the initial state: mean 0 (dismissive) or 1 (comfortable) with a
/// ceiling sampled uniformly from the attitude-specific range.
pub fn init_state<R: Rng>(
    attitude: ChildAttitude,
    params: EngagementParams,
    rng: &mut R,
) -> EngagementState {
    let (mu, range) = match attitude {
        ChildAttitude::DismissiveResistant => (0.0, params.mu_max_range_dismissive),
        ChildAttitude::SomewhatComfortable => (1.0, params.mu_max_range_comfortable),
    };
    let mu_max = rng.gen_range(range.0..range.1);
    EngagementState { mu, mu_max, last_score: None, turn: 0, params }
}

/// Maps weighted ratings onto the 0-3 engagement scale.
///
/// The signed weighted sum lives in [sum of negative weights, 1]; it is
/// shifted and scaled affinely onto [0, 1] and multiplied by 3, so all-good
/// ratings give 3 and all-bad give approximately 0.
pub fn estimate_from_ratings(r: &UtteranceRatings, params: &EngagementParams) -> f64 {
    let s = params.weight_open_questions * r.open_questions
        + params.weight_caring * r.caring
        + params.weight_empathy * r.empathy
        + params.weight_hostility * f64::from(r.hostility)
        + params.weight_barrier_tone * f64::from(r.barrier_tone)
        + params.weight_poor_communication * f64::from(r.poor_communication);
    3.0 * ((s + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Smoothed mean update: mu <- (1 - alpha) * mu + alpha * e_hat, with upward
/// moves capped at mu_max. Decreases are never blocked.
pub fn update_mean(state: &EngagementState, e_hat: f64) -> EngagementState {
    let mut next = state.clone();
    let candidate = (1.0 - state.params.alpha) * state.mu + state.params.alpha * e_hat;
    next.mu = if candidate > state.mu_max { state.mu_max } else { candidate };
    next
}

/// Round-half-up then clamp to the 0-3 scale and to within `max_step` of the
/// previous score.
pub fn discretize(x: f64, last_score: Option<u8>, max_step: u8) -> u8 {
    let rounded = (x + 0.5).floor();
    let mut e = rounded.clamp(0.0, 3.0) as i64;
    if let Some(last) = last_score {
        let last = i64::from(last);
        let step = i64::from(max_step);
        e = e.clamp(last - step, last + step).clamp(0, 3);
    }
    e as u8
}

/// Samples the discrete engagement score for the current turn and advances
/// the state. Sigma is `sigma_first` on turn 0 and `sigma_rest` afterwards.
pub fn sample_score<R: Rng>(state: &EngagementState, rng: &mut R) -> (u8, EngagementState) {
    let sigma = if state.turn == 0 { state.params.sigma_first } else { state.params.sigma_rest };
    let x = if sigma == 0.0 {
        state.mu
    } else {
        Normal::new(state.mu, sigma).expect("finite mean and positive sigma").sample(rng)
    };
    let e = discretize(x, state.last_score, state.params.max_step);
    let mut next = state.clone();
    next.last_score = Some(e);
    next.turn += 1;
    (e, next)
}

/// Behavioral description rendered into the child prompt for each level.
pub fn score_description(e: u8) -> Result<&'static str, String> {
    match e {
        0 => Ok("highly disengaged: you give curt, dismissive answers and want the \
                 conversation to end"),
        1 => Ok("reluctant and minimally engaged: you respond briefly and without \
                 much enthusiasm"),
        2 => Ok("moderately engaged: you respond thoughtfully and sometimes ask \
                 questions"),
        3 => Ok("openly engaged: you participate actively, share your own thoughts, \
                 and ask questions"),
        _ => Err(format!("engagement score {e} outside [0, 3]")),
    }
}
