use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ReasonerError;
use crate::jsontext::{extract_object, Recovery};
use crate::model::{RiskDimension, SuspicionLevel};

pub const DIMENSION_KEYS: [&str; 4] = [
    "a_transaction_patterns",
    "b_fund_flows",
    "c_associated_addresses",
    "d_temporal_behavioral_signs",
];

/// The structured answer a backend gives for one account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub suspicion_level: SuspicionLevel,
    pub a_transaction_patterns: RiskDimension,
    pub b_fund_flows: RiskDimension,
    pub c_associated_addresses: RiskDimension,
    pub d_temporal_behavioral_signs: RiskDimension,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub justification: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub gaps: String,
}

impl Verdict {
    pub fn dimensions(&self) -> [&RiskDimension; 4] {
        [
            &self.a_transaction_patterns,
            &self.b_fund_flows,
            &self.c_associated_addresses,
            &self.d_temporal_behavioral_signs,
        ]
    }

    /// Dimensions whose result reads as a finding rather than a clearance.
    pub fn risk_count(&self) -> usize {
        self.dimensions().iter().filter(|d| indicates_risk(&d.result)).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serialises")
    }
}

/// Whether a dimension result reports risk. Results that open with a
/// negation ("No ...", "None", "Not observed", "no activity") clear the dimension.
pub fn indicates_risk(result: &str) -> bool {
    let r = result.trim().trim_start_matches(['*', '-', ' ']).to_ascii_lowercase();
    if r.is_empty() {
        return false;
    }
    const CLEAR: [&str; 9] = ["no ", "no.", "no,", "none", "not ", "normal", "n/a", "nothing", "absent"];
    r != "no" && !CLEAR.iter().any(|p| r.starts_with(p))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedVerdict {
    pub verdict: Verdict,
    /// True when the object was only found after stripping fences or prose.
    pub repaired: bool,
}

fn labeled_line(raw: &str, label: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?im)^[\s*#-]*(justification|gaps)\**\s*:\**\s*(.+?)\s*$").expect("valid regex")
    });
    re.captures_iter(raw)
        .find(|c| c[1].eq_ignore_ascii_case(label))
        .map(|c| c[2].trim_matches(['"', '“', '”']).to_owned())
        .unwrap_or_default()
}

fn text_of(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn dimension(obj: &Map<String, Value>, key: &str) -> Result<RiskDimension, ReasonerError> {
    let block = obj
        .get(key)
        .ok_or_else(|| ReasonerError::schema(key, "missing dimension block"))?
        .as_object()
        .ok_or_else(|| ReasonerError::schema(key, "dimension block is not an object"))?;
    let result = block
        .get("result")
        .ok_or_else(|| ReasonerError::schema(&format!("{key}.result"), "missing"))?;
    Ok(RiskDimension::new(
        text_of(result),
        block.get("evidence").map(text_of).unwrap_or_default(),
    ))
}

pub fn parse_verdict(raw: &str) -> Result<ParsedVerdict, ReasonerError> {
    let (value, how) = extract_object(raw).ok_or_else(|| ReasonerError::UnparseableVerdict {
        excerpt: raw.chars().take(160).collect(),
    })?;
    let obj = value.as_object().expect("object");
    let level_raw = obj
        .get("suspicion_level")
        .ok_or_else(|| ReasonerError::schema("suspicion_level", "missing"))?;
    let level_text = text_of(level_raw);
    let suspicion_level = SuspicionLevel::parse(&level_text)
        .or_else(|_| level_from_prose(&level_text).ok_or(()))
        .map_err(|_| ReasonerError::schema("suspicion_level", &format!("unknown level `{level_text}`")))?;
    let justification = obj
        .get("justification")
        .map(text_of)
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| labeled_line(raw, "justification"));
    let gaps = obj
        .get("gaps")
        .map(text_of)
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| labeled_line(raw, "gaps"));
    Ok(ParsedVerdict {
        verdict: Verdict {
            suspicion_level,
            a_transaction_patterns: dimension(obj, DIMENSION_KEYS[0])?,
            b_fund_flows: dimension(obj, DIMENSION_KEYS[1])?,
            c_associated_addresses: dimension(obj, DIMENSION_KEYS[2])?,
            d_temporal_behavioral_signs: dimension(obj, DIMENSION_KEYS[3])?,
            justification,
            gaps,
        },
        repaired: how != Recovery::Clean,
    })
}

/// "Suspicion Level: High (strong evidence)" style values.
fn level_from_prose(text: &str) -> Option<SuspicionLevel> {
    let lower = text.to_ascii_lowercase();
    if lower.contains("no suspicion") {
        return Some(SuspicionLevel::NoSuspicion);
    }
    let words: Vec<&str> = lower.split(|c: char| !c.is_ascii_alphabetic()).filter(|w| !w.is_empty()).collect();
    let found: Vec<SuspicionLevel> = ["high", "medium", "low"]
        .iter()
        .filter(|l| words.contains(l))
        .filter_map(|l| SuspicionLevel::parse(l).ok())
        .collect();
    (found.len() == 1).then(|| found[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full(level: &str) -> String {
        let mut o = serde_json::json!({"suspicion_level": level});
        for k in DIMENSION_KEYS {
            o[k] = serde_json::json!({"result": "No anomaly", "evidence": ""});
        }
        o.to_string()
    }

    #[test]
    fn schema_instance() {
        let p = parse_verdict(&full("High")).unwrap();
        assert_eq!(p.verdict.suspicion_level, SuspicionLevel::High);
        assert!(!p.repaired);
        assert_eq!(p.verdict.dimensions().len(), 4);
    }

    #[test]
    fn lower_case_no_suspicion() {
        let p = parse_verdict(&full("no suspicion")).unwrap();
        assert_eq!(p.verdict.suspicion_level, SuspicionLevel::NoSuspicion);
        let p = parse_verdict(&full("Suspicion Level: medium")).unwrap();
        assert_eq!(p.verdict.suspicion_level, SuspicionLevel::Medium);
    }

    #[test]
    fn missing_dimension_is_named() {
        let mut v: Value = serde_json::from_str(&full("Low")).unwrap();
        v.as_object_mut().unwrap().remove("c_associated_addresses");
        match parse_verdict(&v.to_string()) {
            Err(ReasonerError::SchemaViolation { key, .. }) => assert_eq!(key, "c_associated_addresses"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_level_and_no_json() {
        assert!(matches!(parse_verdict(&full("Severe")), Err(ReasonerError::SchemaViolation { .. })));
        assert!(matches!(parse_verdict("I cannot help"), Err(ReasonerError::UnparseableVerdict { .. })));
    }

    #[test]
    fn fenced_output_with_prose() {
        let raw = format!(
            "Here is my analysis.\nJustification: received 12 transfers then dispersed.\nGaps: none checked\n```json\n{}\n```",
            full("High")
        );
        let p = parse_verdict(&raw).unwrap();
        assert!(p.repaired);
        assert_eq!(p.verdict.justification, "received 12 transfers then dispersed.");
        assert_eq!(p.verdict.gaps, "none checked");
    }

    #[test]
    fn risk_reading() {
        for clear in ["No anomalies", "none", "Not observed", "no activity", "N/A", ""] {
            assert!(!indicates_risk(clear), "{clear}");
        }
        for risky in ["Aggregation then dispersal", "Suspicious: burst", "Notable burst"] {
            assert!(indicates_risk(risky), "{risky}");
        }
    }

    fn arb_dim() -> impl Strategy<Value = RiskDimension> {
        ("[ -~]{0,40}", "[ -~]{0,40}").prop_map(|(r, e)| RiskDimension::new(r, e))
    }

    proptest! {
        #[test]
        fn round_trip(level in 0usize..4, a in arb_dim(), b in arb_dim(), c in arb_dim(), d in arb_dim(), j in "[ -~]{0,30}") {
            let v = Verdict {
                suspicion_level: SuspicionLevel::ALL[level],
                a_transaction_patterns: a,
                b_fund_flows: b,
                c_associated_addresses: c,
                d_temporal_behavioral_signs: d,
                justification: j.trim().to_string(),
                gaps: String::new(),
            };
            let back = parse_verdict(&v.to_json()).unwrap();
            prop_assert!(!back.repaired);
            prop_assert_eq!(back.verdict, v);
        }
    }
}
