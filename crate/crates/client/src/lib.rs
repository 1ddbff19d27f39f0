//! Thin async client for the annotation service. Requests and responses
//! use the service's own types from `microspot_core::review`.

use microspot_core::review::{
    Decision, DecisionRequest, ErrorBody, FeedbackRecord, ModelInfo, ModelVersion, Proposal,
    ProposalStatus, VideoSummary,
};
use reqwest::{Response, Url};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid service url {0}")]
    BadUrl(String),

    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),

    /// The service answered with a non-success status.
    #[error("service returned {status}: {message}")]
    Api { status: u16, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct ReviewClient {
    http: reqwest::Client,
    base: Url,
}

impl ReviewClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self> {
        let base = Url::parse(base).map_err(|e| ClientError::BadUrl(format!("{base}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::BadUrl(base.to_string()));
        }
        Ok(ReviewClient {
            http: reqwest::Client::new(),
            base,
        })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        url.path_segments_mut()
            .expect("checked in new")
            .pop_if_empty()
            .push("api")
            .extend(segments);
        url
    }

    pub async fn videos(&self) -> Result<Vec<VideoSummary>> {
        json(self.http.get(self.url(&["videos"])).send().await?).await
    }

    pub async fn proposals(
        &self,
        video_id: &str,
        status: Option<ProposalStatus>,
    ) -> Result<Vec<Proposal>> {
        let mut url = self.url(&["videos", video_id, "proposals"]);
        if let Some(status) = status {
            url.query_pairs_mut()
                .append_pair("status", &status.to_string());
        }
        json(self.http.get(url).send().await?).await
    }

    /// PNG bytes of a 0-based frame.
    pub async fn frame(&self, video_id: &str, index: usize) -> Result<Vec<u8>> {
        let url = self.url(&["videos", video_id, "frames", &index.to_string()]);
        let response = checked(self.http.get(url).send().await?).await?;
        Ok(response.bytes().await?.to_vec())
    }

    pub async fn decide(
        &self,
        proposal_id: &str,
        decision: Decision,
        annotator: &str,
    ) -> Result<FeedbackRecord> {
        let body = DecisionRequest {
            decision,
            annotator: annotator.to_string(),
        };
        let url = self.url(&["proposals", proposal_id, "decision"]);
        json(self.http.post(url).json(&body).send().await?).await
    }

    pub async fn retrain(&self) -> Result<ModelVersion> {
        json(self.http.post(self.url(&["retrain"])).send().await?).await
    }

    pub async fn model(&self) -> Result<ModelInfo> {
        json(self.http.get(self.url(&["model"])).send().await?).await
    }
}

async fn checked(response: Response) -> Result<Response> {
    let status = response.status();
    if status.is_success() {
        return Ok(response);
    }
    let text = response.text().await?;
    let message = serde_json::from_str::<ErrorBody>(&text)
        .map(|b| b.error)
        .unwrap_or(text);
    Err(ClientError::Api {
        status: status.as_u16(),
        message,
    })
}

async fn json<T: DeserializeOwned>(response: Response) -> Result<T> {
    Ok(checked(response).await?.json().await?)
}
