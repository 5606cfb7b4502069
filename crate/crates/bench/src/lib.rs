//! Shared fixtures for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dialogsim::engagement::UtteranceRatings;
use dialogsim::model::{
    ChildAttitude, ChildGender, ChildPersona, DialogueRecord, ParentAttitude, ParentPersona,
    ParentRole, Speaker, Termination, Utterance,
};

pub fn random_ratings(rng: &mut ChaCha8Rng) -> UtteranceRatings {
    UtteranceRatings {
        open_questions: rng.gen_range(0.0..=1.0),
        caring: rng.gen_range(0.0..=1.0),
        empathy: rng.gen_range(0.0..=1.0),
        hostility: u8::from(rng.gen_bool(0.1)),
        barrier_tone: u8::from(rng.gen_bool(0.1)),
        poor_communication: u8::from(rng.gen_bool(0.1)),
    }
}

pub fn synthetic_record(id: usize, exchanges: usize, rng: &mut ChaCha8Rng) -> DialogueRecord {
    let words = ["talk", "listen", "school", "friend", "question", "today", "maybe", "okay"];
    let mut utterances = Vec::with_capacity(exchanges * 2);
    for turn in 0..exchanges {
        for speaker in [Speaker::Parent, Speaker::Child] {
            let len = rng.gen_range(5..30);
            let text: Vec<&str> =
                (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
            utterances.push(Utterance {
                speaker,
                text: text.join(" "),
                turn_index: (turn + 1) as u32,
                engagement_score: None,
            });
        }
    }
    DialogueRecord {
        id: format!("bench-{id}"),
        scenario_id: format!("s{}", id % 7),
        parent_persona: ParentPersona {
            role: ParentRole::Mother,
            attitude: ParentAttitude::Progressive,
        },
        child_persona: ChildPersona::new(
            ChildGender::Female,
            15,
            ChildAttitude::SomewhatComfortable,
        )
        .unwrap(),
        plan: None,
        utterances,
        termination: Termination::MaxTurns,
        engagement_trace: Vec::new(),
        rng_seed: id as u64,
        provider_tag: "bench".to_string(),
        extra: serde_json::Map::new(),
    }
}

pub fn record_corpus(n: usize, exchanges: usize) -> Vec<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n).map(|i| synthetic_record(i, exchanges, &mut rng)).collect()
}
