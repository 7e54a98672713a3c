use super::{AnnotationRequest, AnnotatorError};
use crate::textprep::{Label, LabelSet};

/// `[LABELS]` and `{TEXT}` are the substitution points.
pub const PROMPT_TEMPLATE: &str = "You will be given an Arabic review. Classify its sentiment as one of the following: [LABELS].\nRespond with ONLY ONE label from this list. No explanation is needed.\n\nReview: \"{TEXT}\"";

pub fn build_prompt(request: &AnnotationRequest) -> String {
    let labels = request.label_set.names().join(", ");
    PROMPT_TEMPLATE
        .replacen("[LABELS]", &labels, 1)
        .replacen("{TEXT}", &request.raw_text, 1)
}

fn strip_outer_punctuation(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || !c.is_alphanumeric())
}

/// Matches a model reply to one label: exact name first, then
/// case-insensitive after trimming whitespace and surrounding punctuation,
/// then a unique case-insensitive substring.
pub fn parse_label(raw_response: &str, label_set: &LabelSet) -> Result<Label, AnnotatorError> {
    let labels = label_set.labels();
    if let Some(l) = labels.iter().find(|l| l.name() == raw_response) {
        return Ok(*l);
    }
    let cleaned = strip_outer_punctuation(raw_response).to_lowercase();
    if let Some(l) = labels.iter().find(|l| l.name().to_lowercase() == cleaned) {
        return Ok(*l);
    }
    let lower = raw_response.to_lowercase();
    let mut hits = labels.iter().filter(|l| lower.contains(&l.name().to_lowercase()));
    match (hits.next(), hits.next()) {
        (Some(l), None) => Ok(*l),
        _ => Err(AnnotatorError::UnparseableResponse {
            raw_response: raw_response.to_owned(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str, labels: LabelSet) -> AnnotationRequest {
        AnnotationRequest {
            sample_id: "1".into(),
            raw_text: text.into(),
            label_set: labels,
        }
    }

    #[test]
    fn prompt_is_the_exact_template() {
        let p = build_prompt(&request("خدمة ممتازة", LabelSet::binary()));
        assert_eq!(
            p,
            "You will be given an Arabic review. Classify its sentiment as one of the following: Negative, Positive.\n\
             Respond with ONLY ONE label from this list. No explanation is needed.\n\
             \n\
             Review: \"خدمة ممتازة\""
        );
    }

    #[test]
    fn prompt_edge_cases() {
        assert!(build_prompt(&request("", LabelSet::binary())).ends_with("Review: \"\""));
        let p = build_prompt(&request("x", LabelSet::ternary()));
        assert!(p.contains("following: Negative, Neutral, Positive."));
        // placeholders inside the review are left alone
        assert!(build_prompt(&request("[LABELS]", LabelSet::binary())).ends_with("\"[LABELS]\""));
    }

    #[test]
    fn parse_rules_apply_in_order() {
        let b = LabelSet::binary();
        assert_eq!(parse_label("Positive", &b).unwrap(), Label::Positive);
        assert_eq!(parse_label(" negative.\n", &b).unwrap(), Label::Negative);
        assert_eq!(parse_label("\"POSITIVE\"", &b).unwrap(), Label::Positive);
        assert_eq!(parse_label("The label is Negative", &b).unwrap(), Label::Negative);
        assert!(matches!(
            parse_label("Positive or Negative", &b),
            Err(AnnotatorError::UnparseableResponse { raw_response }) if raw_response == "Positive or Negative"
        ));
        assert!(parse_label("", &b).is_err());
        assert!(parse_label("Neutral", &b).is_err());
        assert_eq!(parse_label("neutral", &LabelSet::ternary()).unwrap(), Label::Neutral);
    }
}
