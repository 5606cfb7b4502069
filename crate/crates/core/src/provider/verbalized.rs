//! Parsing and weighted drawing for verbalized-sampling responses: a JSON
//! array of `{response, probability}` candidates with self-assigned weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prompt_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedSampleItem {
    /// Structured or plain-text candidate.
    pub response: serde_json::Value,
    /// Normalized weight in [0, 1]; the set's weights sum to 1.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedSampleSet {
    pub items: Vec<VerbalizedSampleItem>,
    pub source_prompt_hash: String,
}

impl VerbalizedSampleSet {
    /// Parses the first well-formed candidate array out of `text` (models
    /// often wrap the JSON in prose) and normalizes the weights to sum 1.
    pub fn from_response(text: &str, prompt: &str) -> Result<Self, String> {
        let raw = parse_sample_array(text)?;
        Self::from_items(raw, prompt)
    }

    pub fn from_items(
        raw: Vec<(serde_json::Value, f64)>,
        prompt: &str,
    ) -> Result<Self, String> {
        if raw.is_empty() {
            return Err("candidate array is empty".to_string());
        }
        for (_, p) in &raw {
            if !(0.0..=1.0).contains(p) || !p.is_finite() {
                return Err(format!("probability {p} outside [0, 1]"));
            }
        }
        let sum: f64 = raw.iter().map(|(_, p)| p).sum();
        if sum <= 0.0 {
            return Err("probabilities sum to zero".to_string());
        }
        if !(0.9..=1.1).contains(&sum) {
            tracing::warn!(sum, "verbalized sample probabilities far from 1.0; renormalizing");
        }
        let items = raw
            .into_iter()
            .map(|(response, p)| VerbalizedSampleItem { response, probability: p / sum })
            .collect();
        Ok(VerbalizedSampleSet { items, source_prompt_hash: prompt_hash(prompt) })
    }
}

/// Extracts the first JSON array of objects carrying `response` and
/// `probability` keys. Lenient on extra keys and surrounding prose, strict on
/// the two required keys.
pub fn parse_sample_array(text: &str) -> Result<Vec<(serde_json::Value, f64)>, String> {
    parse_sample_array_with_key(text, "response")
}

/// As [`parse_sample_array`], but the payload key is configurable (scenario
/// synthesis uses `scenario` rather than `response`).
pub fn parse_sample_array_with_key(
    text: &str,
    payload_key: &str,
) -> Result<Vec<(serde_json::Value, f64)>, String> {
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find('[') {
        let start = search_from + rel;
        if let Some(end) = matching_bracket(bytes, start) {
            let slice = &text[start..=end];
            if let Ok(serde_json::Value::Array(arr)) =
                serde_json::from_str::<serde_json::Value>(slice)
            {
                match extract_items(&arr, payload_key) {
                    Ok(items) if !items.is_empty() => return Ok(items),
                    _ => {}
                }
            }
        }
        search_from = start + 1;
    }
    Err(format!("no well-formed {{{payload_key}, probability}} array found"))
}

fn extract_items(
    arr: &[serde_json::Value],
    payload_key: &str,
) -> Result<Vec<(serde_json::Value, f64)>, String> {
    let mut out = Vec::with_capacity(arr.len());
    for item in arr {
        let obj = item.as_object().ok_or("array element is not an object")?;
        let response =
            obj.get(payload_key).ok_or_else(|| format!("missing '{payload_key}' key"))?.clone();
        let probability = obj
            .get("probability")
            .and_then(|v| v.as_f64())
            .ok_or("missing numeric 'probability' key")?;
        out.push((response, probability));
    }
    Ok(out)
}

/// Extracts the first well-formed JSON object embedded in `text`.
pub fn find_json_object(text: &str) -> Option<serde_json::Value> {
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find('{') {
        let start = search_from + rel;
        if let Some(end) = matching_bracket(bytes, start) {
            if let Ok(v @ serde_json::Value::Object(_)) =
                serde_json::from_str::<serde_json::Value>(&text[start..=end])
            {
                return Some(v);
            }
        }
        search_from = start + 1;
    }
    None
}

/// Finds the index of the bracket closing the one at `start`, skipping over
/// string literals.
fn matching_bracket(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Draws `k` distinct items sequentially, each with probability proportional
/// to the remaining weights.
pub fn draw_without_replacement<R: Rng>(
    set: &VerbalizedSampleSet,
    k: usize,
    rng: &mut R,
) -> Result<Vec<VerbalizedSampleItem>, String> {
    if k > set.items.len() {
        return Err(format!("cannot draw {k} from {} items", set.items.len()));
    }
    let mut remaining: Vec<(usize, f64)> =
        set.items.iter().enumerate().map(|(i, it)| (i, it.probability)).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let choice = if total <= 0.0 {
            // all residual weight is zero; fall back to uniform over the rest
            rng.gen_range(0..remaining.len())
        } else {
            let mut x = rng.gen_range(0.0..total);
            let mut chosen = remaining.len() - 1;
            for (pos, (_, w)) in remaining.iter().enumerate() {
                if x < *w {
                    chosen = pos;
                    break;
                }
                x -= w;
            }
            chosen
        };
        let (idx, _) = remaining.remove(choice);
        picked.push(set.items[idx].clone());
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_from(probs: &[f64]) -> VerbalizedSampleSet {
        let raw = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (serde_json::json!(format!("r{i}")), p))
            .collect();
        VerbalizedSampleSet::from_items(raw, "prompt").unwrap()
    }

    #[test]
    fn already_normalized_probs_are_unchanged() {
        let s = set_from(&[0.5, 0.3, 0.2]);
        let probs: Vec<f64> = s.items.iter().map(|i| i.probability).collect();
        assert_eq!(probs, vec![0.5, 0.3, 0.2]);
    }

    #[test]
    fn sum_above_one_is_renormalized() {
        let s = set_from(&[0.5, 0.3, 0.3]);
        let probs: Vec<f64> = s.items.iter().map(|i| i.probability).collect();
        for (got, want) in probs.iter().zip([5.0 / 11.0, 3.0 / 11.0, 3.0 / 11.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(parse_sample_array("no json here").is_err());
        assert!(parse_sample_array("[1, 2, 3]").is_err());
        assert!(parse_sample_array(r#"[{"response": "x"}]"#).is_err());
    }

    #[test]
    fn array_is_extracted_from_surrounding_prose() {
        let text = r#"Sure! Here you go:
[{"response": "a", "probability": 0.6, "note": "extra"}, {"response": {"k": 1}, "probability": 0.4}]
Hope that helps."#;
        let items = parse_sample_array(text).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].1, 0.6);
        assert!(items[1].0.is_object());
    }

    #[test]
    fn exhaustive_draw_is_a_permutation() {
        let s = set_from(&[0.5, 0.3, 0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let drawn = draw_without_replacement(&s, 3, &mut rng).unwrap();
        let mut texts: Vec<String> =
            drawn.iter().map(|i| i.response.as_str().unwrap().to_string()).collect();
        texts.sort();
        assert_eq!(texts, vec!["r0", "r1", "r2"]);
        assert!(draw_without_replacement(&s, 4, &mut rng).is_err());
    }

    #[test]
    fn degenerate_weights_always_pick_the_heavy_item() {
        let s = set_from(&[1.0, 0.0]);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let drawn = draw_without_replacement(&s, 1, &mut rng).unwrap();
            assert_eq!(drawn[0].response.as_str().unwrap(), "r0");
        }
    }

    #[test]
    fn empirical_draw_frequency_matches_weights() {
        let s = set_from(&[0.7, 0.2, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(424242);
        let n = 100_000;
        let mut first = 0usize;
        for _ in 0..n {
            let drawn = draw_without_replacement(&s, 1, &mut rng).unwrap();
            if drawn[0].response.as_str().unwrap() == "r0" {
                first += 1;
            }
        }
        let freq = first as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.01, "empirical frequency {freq}");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_preserves_argmax(
                probs in proptest::collection::vec(0.01f64..=1.0, 2..8)
            ) {
                // scale into a plausible raw range before normalization
                let sum: f64 = probs.iter().sum();
                let scaled: Vec<f64> = probs.iter().map(|p| p / sum).collect();
                let raw: Vec<(serde_json::Value, f64)> = scaled
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (serde_json::json!(i), p))
                    .collect();
                let argmax_before = scaled
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                let set = VerbalizedSampleSet::from_items(raw, "p").unwrap();
                let argmax_after = set
                    .items
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.probability.partial_cmp(&b.1.probability).unwrap())
                    .unwrap()
                    .0;
                prop_assert_eq!(argmax_before, argmax_after);
            }
        }
    }
}
