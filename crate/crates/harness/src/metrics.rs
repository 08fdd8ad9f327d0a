//! Per-image records and the aggregates reported for a campaign.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// Misclassified before any perturbation; not attacked.
    Skipped,
    Success,
    Failure,
    /// Scoring failed; excluded from aggregates.
    Errored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub index: usize,
    pub true_label: usize,
    pub clean_prediction: Option<usize>,
    pub status: Status,
    /// Budget consumed, including the mask charge.
    pub calls: u64,
    pub final_prediction: Option<usize>,
    pub mask_charge: u64,
    pub mask_fallback: bool,
    /// `x:y:r:g:b` tuples joined by `;`.
    pub perturbation: String,
    pub error: String,
}

impl ImageRecord {
    pub fn attacked(&self) -> bool {
        matches!(self.status, Status::Success | Status::Failure)
    }
}

/// Displayed as an integer or `N/A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reported(pub Option<u64>);

impl fmt::Display for Reported {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("N/A"),
        }
    }
}

/// `num / den` rounded half-up.
pub fn round_half_up(num: u64, den: u64) -> u64 {
    assert!(den > 0);
    ((2 * u128::from(num) + u128::from(den)) / (2 * u128::from(den))) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregates {
    pub images: usize,
    pub errored: usize,
    pub clean_correct: usize,
    pub attacked: usize,
    pub successes: usize,
    /// Scored images still classified correctly after their attack.
    pub correct_after: usize,
    pub calls_successful: u64,
    pub calls_all: u64,
    pub clean_accuracy_percent: Reported,
    pub accuracy_percent: Reported,
    pub mean_calls_successful: Reported,
    pub mean_calls_all: Reported,
}

pub fn compute_metrics(records: &[ImageRecord]) -> Result<Aggregates> {
    if records.is_empty() {
        return Err(HarnessError::EmptyRecords);
    }
    let scored: Vec<&ImageRecord> = records.iter().filter(|r| r.status != Status::Errored).collect();
    let clean_correct = scored.iter().filter(|r| r.status != Status::Skipped).count();
    let attacked = scored.iter().filter(|r| r.attacked()).count();
    let successes = scored.iter().filter(|r| r.status == Status::Success).count();
    let correct_after = scored.iter().filter(|r| r.status == Status::Failure).count();
    let calls_all: u64 = scored.iter().filter(|r| r.attacked()).map(|r| r.calls).sum();
    let calls_successful: u64 =
        scored.iter().filter(|r| r.status == Status::Success).map(|r| r.calls).sum();
    let n = scored.len() as u64;
    let percent = |k: usize| Reported((n > 0).then(|| round_half_up(100 * k as u64, n)));
    Ok(Aggregates {
        images: records.len(),
        errored: records.len() - scored.len(),
        clean_correct,
        attacked,
        successes,
        correct_after,
        calls_successful,
        calls_all,
        clean_accuracy_percent: percent(clean_correct),
        accuracy_percent: percent(correct_after),
        mean_calls_successful: Reported(
            (successes > 0).then(|| round_half_up(calls_successful, successes as u64)),
        ),
        // no attack needed means no calls spent
        mean_calls_all: Reported(Some(if attacked > 0 {
            round_half_up(calls_all, attacked as u64)
        } else {
            0
        })),
    })
}

pub const TABLE_HEADERS: [&str; 4] = [
    "Attack",
    "Network Accuracy (%)",
    "Mean Calls for Successful Attacks",
    "Mean Calls for All Attacks",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub attack: String,
    pub accuracy_percent: Reported,
    pub mean_calls_successful: Reported,
    pub mean_calls_all: Reported,
}

impl TableRow {
    pub fn from_aggregates(attack: impl Into<String>, a: &Aggregates) -> Self {
        Self {
            attack: attack.into(),
            accuracy_percent: a.accuracy_percent,
            mean_calls_successful: a.mean_calls_successful,
            mean_calls_all: a.mean_calls_all,
        }
    }

    /// The unattacked network.
    pub fn baseline(a: &Aggregates) -> Self {
        Self {
            attack: "None".into(),
            accuracy_percent: a.clean_accuracy_percent,
            mean_calls_successful: Reported(None),
            mean_calls_all: Reported(None),
        }
    }
}

/// Plain-text table with a header rule.
pub fn render_table(rows: &[TableRow]) -> String {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.attack.clone(),
                r.accuracy_percent.to_string(),
                r.mean_calls_successful.to_string(),
                r.mean_calls_all.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..4)
        .map(|c| cells.iter().map(|r| r[c].len()).chain([TABLE_HEADERS[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |row: [&str; 4]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(TABLE_HEADERS);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2], &c[3]]));
    }
    out
}
