//! Decision transcripts: a JSON array applied in order, each element either
//! `{"variable": name, "restriction": {...}}` or `{"retract": n}`, where `n`
//! is the 0-based position of the decision among the transcript's decision
//! entries (which is also its [`DecisionId`]).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DecisionId, Rejected, Restriction, Session, UnknownDecision};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TranscriptStep {
    Decide { variable: String, restriction: Restriction },
    Retract { retract: u64 },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("transcript is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("step {step}: {reason}")]
    Rejected { step: usize, reason: Rejected },
    #[error("step {step}: {reason}")]
    UnknownDecision { step: usize, reason: UnknownDecision },
    #[error("step {step}: recomputation did not finish within {timeout:?}")]
    Timeout { step: usize, timeout: Duration },
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptStep>, ReplayError> {
    Ok(serde_json::from_str(text)?)
}

/// Applies `steps`, waiting for each recomputation so every decision sees
/// Ready domains. Steps are numbered from 0 in errors.
pub fn replay(session: &Session, steps: &[TranscriptStep], timeout: Duration) -> Result<(), ReplayError> {
    for (step, s) in steps.iter().enumerate() {
        if !session.wait_idle(timeout) {
            return Err(ReplayError::Timeout { step, timeout });
        }
        match s {
            TranscriptStep::Decide { variable, restriction } => {
                session.post_decision(variable, *restriction).map_err(|reason| ReplayError::Rejected { step, reason })?;
            }
            TranscriptStep::Retract { retract } => {
                session
                    .retract_decision(DecisionId(*retract))
                    .map_err(|reason| ReplayError::UnknownDecision { step, reason })?;
            }
        }
    }
    if !session.wait_idle(timeout) {
        return Err(ReplayError::Timeout { step: steps.len(), timeout });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, M1};
    use crate::solver::Domain;

    const T: Duration = Duration::from_secs(10);

    #[test]
    fn parses_both_forms() {
        let steps = parse_transcript(
            r#"[{"variable":"HD","restriction":{"kind":"assign","value":1,"lo":null,"hi":null}},{"retract":0}]"#,
        )
        .unwrap();
        assert_eq!(
            steps,
            vec![
                TranscriptStep::Decide { variable: "HD".into(), restriction: Restriction::Assign(1) },
                TranscriptStep::Retract { retract: 0 }
            ]
        );
        assert!(parse_transcript(r#"[{"variable":"HD"}]"#).is_err());
    }

    #[test]
    fn replay_m1() {
        let s = Session::create(&parse_model(M1).unwrap()).unwrap();
        let steps = parse_transcript(r#"[{"variable":"HD","restriction":{"kind":"assign","value":1}}]"#).unwrap();
        replay(&s, &steps, T).unwrap();
        assert_eq!(s.state().values("GPS"), Some(&Domain::singleton(1)));

        let bad = parse_transcript(r#"[{"variable":"Basic","restriction":{"kind":"assign","value":1}}]"#).unwrap();
        match replay(&s, &bad, T) {
            Err(ReplayError::Rejected { step: 0, reason: Rejected::EmptyIntersection(_) }) => {}
            other => panic!("{other:?}"),
        }
        let bad = parse_transcript(r#"[{"retract":4}]"#).unwrap();
        assert!(matches!(replay(&s, &bad, T), Err(ReplayError::UnknownDecision { step: 0, .. })));
    }
}
