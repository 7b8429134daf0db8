//! Per-epoch run logs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Label-free feature fit.
    Phase1,
    /// Task fit of the layers left unfrozen by phase 1.
    Phase2,
    /// Plain cross-entropy training (teachers and naive students).
    Task,
    Joint,
    Hinton,
    L2,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
            Phase::Task => "task",
            Phase::Joint => "joint",
            Phase::Hinton => "hinton",
            Phase::L2 => "l2",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// 1-based within its phase.
    pub epoch: usize,
    pub phase: Phase,
    /// Mean per-batch task objective (cross-entropy plus any baseline term).
    pub task_loss: Option<f64>,
    /// Mean per-batch sum of unweighted prior KL terms.
    pub kl_loss: Option<f64>,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: RunLog) {
        self.rows.extend(other.rows);
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    pub fn last_kl(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.kl_loss)
    }

    pub fn task_losses(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.task_loss).collect()
    }

    /// `epoch,phase,task_loss,kl_loss,test_accuracy`; a loss that does not
    /// apply to the phase is left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,phase,task_loss,kl_loss,test_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                r.epoch,
                r.phase.name(),
                cell(r.task_loss),
                cell(r.kl_loss),
                r.test_accuracy
            );
        }
        out
    }
}
