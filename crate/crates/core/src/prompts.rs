//! Versioned prompt templates and the placeholder renderer.
//!
//! Templates ship as text assets; placeholders use `<angle_bracket>` names
//! and are substituted literally. Unreplaced placeholders are left in place
//! (several templates contain angle-bracket prose that is not a placeholder).

pub const SCENARIO_SYNTHESIS: &str = include_str!("../prompts/scenario_synthesis.txt");
pub const SCENARIO_EXTRACTION: &str = include_str!("../prompts/scenario_extraction.txt");
pub const POST_SCREENING: &str = include_str!("../prompts/post_screening.txt");
pub const PARENT_PLANNING: &str = include_str!("../prompts/parent_planning.txt");
pub const PARENT_UTTERANCE: &str = include_str!("../prompts/parent_utterance.txt");
pub const PARENT_UTTERANCE_BASIC: &str = include_str!("../prompts/parent_utterance_basic.txt");
pub const RATING_POSITIVE: &str = include_str!("../prompts/rating_positive.txt");
pub const RATING_NEGATIVE: &str = include_str!("../prompts/rating_negative.txt");
pub const CHILD_UTTERANCE: &str = include_str!("../prompts/child_utterance.txt");
pub const CHILD_UTTERANCE_BASIC: &str = include_str!("../prompts/child_utterance_basic.txt");
pub const MODERATOR: &str = include_str!("../prompts/moderator.txt");
pub const JUDGE_DIVERSITY: &str = include_str!("../prompts/judge_diversity.txt");
pub const JUDGE_REALISM_NATURALNESS: &str =
    include_str!("../prompts/judge_realism_naturalness.txt");
pub const JUDGE_REALISM_COHERENCE: &str = include_str!("../prompts/judge_realism_coherence.txt");
pub const JUDGE_QUALITY_WARMTH: &str = include_str!("../prompts/judge_quality_warmth.txt");
pub const JUDGE_QUALITY_INFO: &str = include_str!("../prompts/judge_quality_info.txt");
pub const JUDGE_QUALITY_ENGAGE: &str = include_str!("../prompts/judge_quality_engage.txt");

/// Substitutes each `(name, value)` pair for `<name>` in the template.
pub fn render(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in substitutions {
        out = out.replace(&format!("<{name}>"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_all_occurrences() {
        let out = render("a <x> b <x> c <y>", &[("x", "1"), ("y", "2")]);
        assert_eq!(out, "a 1 b 1 c 2");
    }

    #[test]
    fn render_leaves_unknown_placeholders() {
        let out = render("keep <single integer from 1 to 3>", &[]);
        assert!(out.contains("<single integer from 1 to 3>"));
    }

    #[test]
    fn templates_carry_their_dispatch_markers() {
        assert!(SCENARIO_SYNTHESIS.contains("You are a data generator"));
        assert!(PARENT_PLANNING.contains("generate a short reflection"));
        assert!(PARENT_UTTERANCE.contains("responding to your child"));
        assert!(PARENT_UTTERANCE_BASIC.contains("responding to your child"));
        assert!(RATING_POSITIVE.contains("rate the parent's conversation in three dimensions"));
        assert!(RATING_NEGATIVE.contains("detect if the following are present"));
        assert!(CHILD_UTTERANCE.contains("reflective of how a child would actually speak"));
        assert!(CHILD_UTTERANCE_BASIC.contains("reflective of how a child would actually speak"));
        assert!(MODERATOR.contains("determine if a conversation should continue or stop"));
        assert!(POST_SCREENING.contains("determine if the post should be included"));
        assert!(SCENARIO_EXTRACTION.contains("write a 3-4 sentence description"));
        assert!(JUDGE_DIVERSITY.contains("Score ONLY diversity"));
        for t in [
            JUDGE_REALISM_NATURALNESS,
            JUDGE_REALISM_COHERENCE,
            JUDGE_QUALITY_WARMTH,
            JUDGE_QUALITY_INFO,
            JUDGE_QUALITY_ENGAGE,
        ] {
            assert!(t.contains("Respond with EXACTLY one integer"));
        }
        assert!(JUDGE_REALISM_NATURALNESS.contains("(1-3)"));
        assert!(JUDGE_QUALITY_WARMTH.contains("(1-5)"));
    }
}
