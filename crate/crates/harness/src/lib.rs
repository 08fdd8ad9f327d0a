//! Campaign orchestration for few-pixel black-box attacks: per-image attack
//! runs under fresh budgets, aggregate metrics, the initialization ablation
//! and CSV/JSON/PNG reports.

pub mod campaign;
pub mod config;
pub mod error;
pub mod metrics;
pub mod report;

pub use campaign::{
    attack_image, run_ablation, run_ablation_images, run_campaign, run_images, AblationReport,
    CampaignReport, ImageResult,
};
pub use config::{AttackSettings, CampaignConfig, DatasetSource, InitMode, Method, ModelSource};
pub use error::{HarnessError, Result};
pub use metrics::{compute_metrics, Aggregates, ImageRecord, Reported, Status, TableRow};
