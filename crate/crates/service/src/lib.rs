//! HTTP annotation service.
//!
//! Serves spotted proposals and raw frames to a review front end, records
//! accept/reject decisions in an append-only log under the data directory,
//! and retrains the classifier from those decisions on request.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/videos` | video summaries with proposal counts |
//! | GET | `/api/videos/{id}/proposals?status=` | proposals, most confident first |
//! | GET | `/api/videos/{id}/frames/{index}` | 0-based frame as PNG |
//! | POST | `/api/proposals/{id}/decision` | `{"decision": "accept"}` |
//! | POST | `/api/retrain` | new model version |
//! | GET | `/api/model` | active version and history |

use std::future::Future;
use std::sync::Arc;

use microspot_core::config::ServiceParams;
use microspot_core::{Error, Result};

mod routes;
mod state;

pub use routes::{router, status_for, ApiError};
pub use state::{ServiceConfig, ServiceState, FEEDBACK_LOG, MODELS_DIR, PROPOSALS_FILE};

pub const PORT_ENV: &str = "MICROSPOT_PORT";
pub const DATA_DIR_ENV: &str = "MICROSPOT_DATA_DIR";

/// Overrides `params` from `MICROSPOT_PORT` and `MICROSPOT_DATA_DIR` when set.
pub fn apply_env(params: &mut ServiceParams) -> Result<()> {
    apply_vars(params, |key| std::env::var(key).ok())
}

/// [`apply_env`] over an arbitrary variable lookup.
pub fn apply_vars(params: &mut ServiceParams, var: impl Fn(&str) -> Option<String>) -> Result<()> {
    if let Some(port) = var(PORT_ENV) {
        params.port = port
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("{PORT_ENV}={port} is not a port number")))?;
    }
    if let Some(dir) = var(DATA_DIR_ENV) {
        params.data_dir = dir.into();
    }
    Ok(())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
