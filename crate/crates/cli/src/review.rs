use anyhow::{Context, Result};
use microspot_client::ReviewClient;
use microspot_core::review::{Decision, ProposalStatus};

use crate::args::{DecisionArg, ReviewAction, ReviewArgs, StatusArg};

fn print(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(args: &ReviewArgs) -> Result<()> {
    let client = ReviewClient::new(&args.url)?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        match &args.action {
            ReviewAction::Videos => print(&client.videos().await?),
            ReviewAction::Proposals { video, status } => {
                let status = status.map(|s| match s {
                    StatusArg::Pending => ProposalStatus::Pending,
                    StatusArg::Accepted => ProposalStatus::Accepted,
                    StatusArg::Rejected => ProposalStatus::Rejected,
                });
                print(&client.proposals(video, status).await?)
            }
            ReviewAction::Frame { video, index, out } => {
                let png = client.frame(video, *index).await?;
                std::fs::write(out, png).with_context(|| format!("writing {}", out.display()))
            }
            ReviewAction::Decide {
                proposal,
                decision,
                annotator,
            } => {
                let decision = match decision {
                    DecisionArg::Accept => Decision::Accept,
                    DecisionArg::Reject => Decision::Reject,
                };
                print(&client.decide(proposal, decision, annotator).await?)
            }
            ReviewAction::Retrain => print(&client.retrain().await?),
            ReviewAction::Model => print(&client.model().await?),
        }
    })
}
