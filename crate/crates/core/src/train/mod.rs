//! Teacher training, feature-prior distillation and method comparison.
//!
//! Two-phase distillation first fits the student's mapped hidden layers to
//! the teacher's features by minimizing the GP KL divergence between batch
//! Gram matrices (no labels involved), then freezes those layers and trains
//! the rest on the task.

pub mod compare;
pub mod features;
pub mod fit;
pub mod log;
pub mod metrics;

use serde::{Deserialize, Serialize};

pub use compare::{compare_methods, compare_with_teacher, Comparison, ComparisonSetup};
pub use features::extract_features;
pub use fit::{
    combine_experts_fit, frozen_layers, hinton_fit, joint_fit, l2_fit, mean_prior_kl, naive_fit, phase1_feature_fit,
    phase1_objective, phase2_task_fit, run_mode, train_teacher, two_phase_fit, Fit, Teacher,
};
pub use log::{LogRow, Phase, RunLog};
pub use metrics::{evaluate, metrics_from_scores, MetricSummary, MetricsReport, RunMetrics};

use crate::data::{Dataset, FeatureCache, Split};
use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, OptimizerConfig};
use crate::prior::PriorConfig;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_PHASE1_EPOCHS: usize = 50;
pub const DEFAULT_PHASE2_EPOCHS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoPhase,
    Joint,
    Naive,
    HintonBaseline,
    L2Baseline,
}

impl Mode {
    /// Row order of comparison tables.
    pub const ALL: [Mode; 5] = [
        Mode::Naive,
        Mode::HintonBaseline,
        Mode::L2Baseline,
        Mode::TwoPhase,
        Mode::Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::TwoPhase => "two_phase",
            Mode::Joint => "joint",
            Mode::Naive => "naive",
            Mode::HintonBaseline => "hinton_baseline",
            Mode::L2Baseline => "l2_baseline",
        }
    }
}

/// Hyperparameters of one training run. Task-only training (teachers, naive
/// students, joint and baseline modes) runs for `phase2_epochs` with
/// `phase2_optimizer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainPlan {
    pub seed: u64,
    pub batch_size: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub phase1_optimizer: OptimizerConfig,
    pub phase2_optimizer: OptimizerConfig,
    pub prior: PriorConfig,
    pub mode: Mode,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: DEFAULT_BATCH_SIZE,
            phase1_epochs: DEFAULT_PHASE1_EPOCHS,
            phase2_epochs: DEFAULT_PHASE2_EPOCHS,
            phase1_optimizer: OptimizerConfig::default(),
            phase2_optimizer: OptimizerConfig::default(),
            prior: PriorConfig::default(),
            mode: Mode::TwoPhase,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        self.phase1_optimizer.validate()?;
        self.phase2_optimizer.validate()?;
        if self.mode == Mode::Joint && self.prior.alpha == 0.0 {
            // α = 0 is allowed for the joint ablation; check the rest
            let mut probe = self.prior.clone();
            probe.alpha = 1.0;
            probe.validate()
        } else {
            self.prior.validate()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }
}

/// One student layer attached to one teacher feature group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingEntry {
    pub student_layer: usize,
    pub teacher_group: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerGroupMapping {
    pub entries: Vec<MappingEntry>,
}

impl LayerGroupMapping {
    pub fn new(entries: Vec<(usize, u32)>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(student_layer, teacher_group)| MappingEntry {
                    student_layer,
                    teacher_group,
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Deepest mapped student layer.
    pub fn max_layer(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.student_layer).max()
    }

    /// Student layers must exist; groups must exist in the cache.
    pub fn validate(&self, student: &NetworkSpec, cache: &FeatureCache) -> Result<()> {
        for e in &self.entries {
            student.check_layer(e.student_layer)?;
            if cache.group(e.teacher_group).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "feature group {} is not in the cache",
                    e.teacher_group
                )));
            }
        }
        Ok(())
    }
}

/// A teacher's cached features, the student layers they constrain, and the
/// weight of its prior.
#[derive(Clone, Debug)]
pub struct Expert<'a> {
    pub cache: &'a FeatureCache,
    pub mapping: LayerGroupMapping,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct ExpertPriorSet<'a> {
    experts: Vec<Expert<'a>>,
}

impl<'a> ExpertPriorSet<'a> {
    pub fn new(experts: Vec<Expert<'a>>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::EmptyExpertSet);
        }
        if let Some(e) = experts.iter().find(|e| !(e.weight.is_finite() && e.weight > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "expert weight must be > 0, got {}",
                e.weight
            )));
        }
        Ok(Self { experts })
    }

    pub fn experts(&self) -> &[Expert<'a>] {
        &self.experts
    }
}

/// A dataset with its train/test split. The test rows are materialized once
/// for per-epoch evaluation.
#[derive(Clone, Debug)]
pub struct TrainData<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a Split,
    test: Dataset,
}

impl<'a> TrainData<'a> {
    pub fn new(dataset: &'a Dataset, split: &'a Split) -> Result<Self> {
        if let Some(&bad) = split.train.iter().chain(&split.test).find(|&&i| i >= dataset.len()) {
            return Err(Error::InvalidConfig(format!(
                "split index {bad} outside dataset of {} rows",
                dataset.len()
            )));
        }
        let test = dataset.subset(&split.test, format!("{}-test", dataset.name()))?;
        Ok(Self { dataset, split, test })
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    /// `k = 1, 2, 3`, capped at the class count.
    pub fn default_ks(&self) -> Vec<usize> {
        (1..=3.min(self.dataset.class_count())).collect()
    }
}
