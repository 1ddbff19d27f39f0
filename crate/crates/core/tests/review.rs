use microspot_core::preprocess::WindowInterval;
use microspot_core::review::*;
use microspot_core::spotting::Detection;
use microspot_core::Error;

fn proposal(video: &str, start: usize, confidence: f64) -> Proposal {
    proposals_from_detections(&[Detection {
        window: WindowInterval {
            video_id: video.into(),
            index: 0,
            start,
            end: start + 100,
        },
        confidence,
    }])
    .remove(0)
}

fn record(id: &str, decision: Decision) -> FeedbackRecord {
    FeedbackRecord {
        proposal_id: id.into(),
        decision,
        timestamp: "2024-01-01T00:00:00Z".into(),
        annotator: "a".into(),
    }
}

#[test]
fn listing_is_confidence_descending_and_filtered() {
    let book = ProposalBook::new(vec![
        proposal("v", 0, 0.6),
        proposal("v", 200, 0.9),
        proposal("w", 0, 0.7),
    ])
    .unwrap();
    let ids: Vec<String> = book.list(None, None).into_iter().map(|p| p.id).collect();
    assert_eq!(ids, vec!["v:200", "w:0", "v:0"]);
    assert_eq!(book.list(Some("w"), None).len(), 1);
    assert!(ProposalBook::default().list(None, None).is_empty());
}

#[test]
fn decisions_are_terminal() {
    let mut book = ProposalBook::new(vec![proposal("v", 0, 0.6), proposal("v", 200, 0.9)]).unwrap();
    book.apply(&record("v:0", Decision::Accept)).unwrap();
    assert_eq!(book.get("v:0").unwrap().status, ProposalStatus::Accepted);
    assert!(book
        .list(None, Some(ProposalStatus::Pending))
        .iter()
        .all(|p| p.id != "v:0"));
    assert!(matches!(
        book.apply(&record("v:0", Decision::Reject)),
        Err(Error::Conflict(_))
    ));
    assert!(matches!(
        book.apply(&record("nope", Decision::Reject)),
        Err(Error::NotFound(_))
    ));
    assert_eq!(
        book.counts("v"),
        StatusCounts {
            pending: 1,
            accepted: 1,
            rejected: 0
        }
    );
}

#[test]
fn replay_reconstructs_statuses() {
    let fresh = || ProposalBook::new(vec![proposal("v", 0, 0.6), proposal("v", 200, 0.9)]).unwrap();
    let log = vec![
        record("v:200", Decision::Reject),
        record("v:0", Decision::Accept),
    ];
    let mut live = fresh();
    for r in &log {
        live.apply(r).unwrap();
    }
    let mut replayed = fresh();
    replayed.replay(&log).unwrap();
    assert_eq!(live, replayed);
}

#[test]
fn wire_format() {
    let json = serde_json::to_string(&record("v:0", Decision::Accept)).unwrap();
    assert_eq!(
        json,
        r#"{"proposal_id":"v:0","decision":"accept","timestamp":"2024-01-01T00:00:00Z","annotator":"a"}"#
    );
    let req: DecisionRequest =
        serde_json::from_str(r#"{"decision":"reject","annotator":"x"}"#).unwrap();
    assert_eq!(req.decision, Decision::Reject);
    assert!(serde_json::from_str::<DecisionRequest>(r#"{"decision":"maybe"}"#).is_err());
    assert_eq!(
        "rejected".parse::<ProposalStatus>().unwrap(),
        ProposalStatus::Rejected
    );
}

#[test]
fn feedback_log_reading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feedback.jsonl");
    assert!(read_feedback_log(&path).unwrap().is_empty());
    let lines: Vec<String> = [
        record("v:0", Decision::Accept),
        record("v:40", Decision::Reject),
    ]
    .iter()
    .map(|r| serde_json::to_string(r).unwrap())
    .collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert_eq!(read_feedback_log(&path).unwrap().len(), 2);
    std::fs::write(&path, "{not json}\n").unwrap();
    assert!(matches!(
        read_feedback_log(&path),
        Err(Error::Format { .. })
    ));
}
