//! The questionnaire pack shipped with the workbench.

use std::sync::OnceLock;

use crate::questionnaire::Pack;

pub const SAMPLE_PACK_SOURCE: &str = include_str!("../../../samples/headache.triagepack");

pub const SAMPLE_PACK_FILE: &str = "headache.triagepack";

pub fn sample_pack() -> &'static Pack {
    static PACK: OnceLock<Pack> = OnceLock::new();
    PACK.get_or_init(|| Pack::parse(SAMPLE_PACK_SOURCE.as_bytes()).expect("shipped pack is valid"))
}

/// Share of interviews starting in each symptom questionnaire.
pub fn default_complaint_mix() -> Vec<(String, f64)> {
    [
        ("headache-triage", 0.25),
        ("injury-triage", 0.25),
        ("abdominal-triage", 0.20),
        ("fever-triage", 0.15),
        ("breathing-triage", 0.15),
    ]
    .into_iter()
    .map(|(id, p)| (id.to_string(), p))
    .collect()
}
