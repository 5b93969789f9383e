pub mod agents;
pub mod governance;
pub mod harness;
pub mod ledger;
pub mod oracle;
pub mod staking;
pub mod types;
