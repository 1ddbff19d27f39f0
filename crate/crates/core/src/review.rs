//! Proposals shown to annotators, their decisions, and the wire types of the
//! review API.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::VideoFeatures;
use crate::network::TrainSample;
use crate::spotting::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalStatus {
    Pending,
    Accepted,
    Rejected,
}

impl FromStr for ProposalStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(ProposalStatus::Pending),
            "accepted" => Ok(ProposalStatus::Accepted),
            "rejected" => Ok(ProposalStatus::Rejected),
            other => Err(Error::Validation(format!("unknown status `{other}`"))),
        }
    }
}

impl fmt::Display for ProposalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalStatus::Pending => "pending",
            ProposalStatus::Accepted => "accepted",
            ProposalStatus::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn status(self) -> ProposalStatus {
        match self {
            Decision::Accept => ProposalStatus::Accepted,
            Decision::Reject => ProposalStatus::Rejected,
        }
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accept" => Ok(Decision::Accept),
            "reject" => Ok(Decision::Reject),
            other => Err(Error::Validation(format!(
                "decision must be accept or reject, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
    pub status: ProposalStatus,
}

/// One line of the feedback log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub proposal_id: String,
    pub decision: Decision,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub annotator: String,
}

pub fn proposal_id(video_id: &str, start: usize) -> String {
    format!("{video_id}:{start}")
}

/// Pending proposals, one per kept detection.
pub fn proposals_from_detections(kept: &[Detection]) -> Vec<Proposal> {
    kept.iter()
        .map(|d| Proposal {
            id: proposal_id(&d.window.video_id, d.window.start),
            video_id: d.window.video_id.clone(),
            start: d.window.start,
            end: d.window.end,
            confidence: d.confidence,
            status: ProposalStatus::Pending,
        })
        .collect()
}

/// All proposals with their current status.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalBook {
    proposals: Vec<Proposal>,
    index: HashMap<String, usize>,
}

impl ProposalBook {
    pub fn new(proposals: Vec<Proposal>) -> Result<Self> {
        let mut index = HashMap::with_capacity(proposals.len());
        for (i, p) in proposals.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate proposal id {}", p.id)));
            }
        }
        Ok(ProposalBook { proposals, index })
    }

    pub fn get(&self, id: &str) -> Option<&Proposal> {
        self.index.get(id).map(|&i| &self.proposals[i])
    }

    pub fn all(&self) -> &[Proposal] {
        &self.proposals
    }

    /// Fails with `NotFound` or `Conflict` if `id` cannot take a decision.
    pub fn check_pending(&self, id: &str) -> Result<()> {
        match self.get(id) {
            None => Err(Error::NotFound(format!("proposal {id}"))),
            Some(p) if p.status != ProposalStatus::Pending => Err(Error::Conflict(format!(
                "proposal {id} is already {}",
                p.status
            ))),
            Some(_) => Ok(()),
        }
    }

    pub fn apply(&mut self, record: &FeedbackRecord) -> Result<()> {
        self.check_pending(&record.proposal_id)?;
        let i = self.index[&record.proposal_id];
        self.proposals[i].status = record.decision.status();
        Ok(())
    }

    pub fn replay<'a>(
        &mut self,
        records: impl IntoIterator<Item = &'a FeedbackRecord>,
    ) -> Result<()> {
        records.into_iter().try_for_each(|r| self.apply(r))
    }

    /// Proposals matching the filters, most confident first, earlier start
    /// on ties.
    pub fn list(&self, video_id: Option<&str>, status: Option<ProposalStatus>) -> Vec<Proposal> {
        let mut out: Vec<Proposal> = self
            .proposals
            .iter()
            .filter(|p| video_id.is_none_or(|v| p.video_id == v))
            .filter(|p| status.is_none_or(|s| p.status == s))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.video_id.cmp(&b.video_id))
                .then(a.start.cmp(&b.start))
        });
        out
    }

    pub fn counts(&self, video_id: &str) -> StatusCounts {
        let mut c = StatusCounts::default();
        for p in self.proposals.iter().filter(|p| p.video_id == video_id) {
            match p.status {
                ProposalStatus::Pending => c.pending += 1,
                ProposalStatus::Accepted => c.accepted += 1,
                ProposalStatus::Rejected => c.rejected += 1,
            }
        }
        c
    }
}

/// Reads a JSON-lines feedback log. A missing file is an empty log.
pub fn read_feedback_log(path: &Path) -> Result<Vec<FeedbackRecord>> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut records = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::format("feedback log", path, format!("line {}: {e}", n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// Training set for retraining: every labelled window, with decided
/// proposals overriding the window's label. Accepted windows become
/// positives; rejected windows become negatives weighted by
/// `hard_negative_weight`.
pub fn feedback_training_set<'a>(
    features: &'a [VideoFeatures],
    book: &ProposalBook,
    hard_negative_weight: f64,
) -> Result<Vec<TrainSample<'a>>> {
    let mut overrides: HashMap<(&str, usize, usize), ProposalStatus> = HashMap::new();
    for p in book
        .all()
        .iter()
        .filter(|p| p.status != ProposalStatus::Pending)
    {
        overrides.insert((p.video_id.as_str(), p.start, p.end), p.status);
    }
    let mut used = 0;
    let mut samples = Vec::new();
    for video in features {
        for seq in &video.sequences {
            let key = (video.video_id.as_str(), seq.window.start, seq.window.end);
            let sample = crate::pipeline::sample(video, seq, 1.0)?;
            let sample = match overrides.get(&key) {
                Some(ProposalStatus::Accepted) => TrainSample {
                    label: true,
                    ..sample
                },
                Some(_) => TrainSample {
                    label: false,
                    weight: hard_negative_weight,
                    ..sample
                },
                None => sample,
            };
            used += usize::from(overrides.contains_key(&key));
            samples.push(sample);
        }
    }
    if used != overrides.len() {
        return Err(Error::Consistency(format!(
            "{} decided proposals do not match any feature window",
            overrides.len() - used
        )));
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub id: String,
    pub subject_id: String,
    pub fps: f64,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub proposals: StatusCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: Decision,
    #[serde(default)]
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVersion {
    pub version: u32,
    pub training_samples: usize,
    pub positive_samples: usize,
    /// Feedback records folded into this version's training set.
    pub feedback_records: usize,
    pub epochs: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub active: u32,
    pub versions: Vec<ModelVersion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
