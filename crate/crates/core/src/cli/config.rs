//! JSON experiment configuration.
//!
//! Unknown keys are rejected everywhere. Input widths and class counts are
//! taken from the data, so network sections only list hidden layers.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, load_idx, synth_blobs, synth_rings, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{Activation, NetworkSpec};
use crate::train::{LayerGroupMapping, Mode, TrainPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf, label_column: String },
    Synthetic(Synthetic),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum Synthetic {
    Blobs {
        n_per_class: usize,
        classes: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    },
    Rings {
        n_per_class: usize,
        classes: usize,
        noise: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<HiddenLayer>,
}

impl NetworkConfig {
    pub fn spec(&self, input: usize, classes: usize) -> Result<NetworkSpec> {
        let hidden: Vec<(usize, Activation)> = self.hidden.iter().map(|h| (h.width, h.activation)).collect();
        NetworkSpec::mlp(input, &hidden, classes)
    }

    /// Layer count including the output head.
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub hidden: Vec<HiddenLayer>,
    #[serde(default)]
    pub plan: TrainPlan,
}

impl TeacherConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            hidden: self.hidden.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertConfig {
    /// `FPNN` file of the expert's teacher.
    pub model: PathBuf,
    /// `FPFC` cache of that teacher's features on this experiment's data.
    pub features: PathBuf,
    pub mapping: LayerGroupMapping,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn default_test_fraction() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    pub teacher: TeacherConfig,
    pub student: NetworkConfig,
    #[serde(default)]
    pub plan: TrainPlan,
    #[serde(default)]
    pub mapping: LayerGroupMapping,
    /// Teacher layers written by `extract-features`; defaults to the mapped
    /// groups plus the logits layer.
    #[serde(default)]
    pub feature_layers: Option<Vec<usize>>,
    /// When present, `distill` combines these experts instead of using the
    /// experiment's own teacher.
    #[serde(default)]
    pub experts: Vec<ExpertConfig>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Top-k levels reported by `evaluate`; defaults to 1 through
    /// min(3, classes).
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Relative data paths resolve against `base` (the config's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Idx { images, labels } => {
                fix(images);
                fix(labels);
            }
            DataSource::Csv { path, .. } => fix(path),
            DataSource::Synthetic(_) => {}
        }
        for e in &mut self.experts {
            fix(&mut e.model);
            fix(&mut e.features);
        }
    }

    /// Every check that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        self.teacher.plan.validate()?;
        self.plan.validate()?;
        let teacher_depth = self.teacher.network().depth();
        let student_depth = self.student.depth();
        for h in self.teacher.hidden.iter().chain(&self.student.hidden) {
            if h.width == 0 {
                return Err(Error::InvalidSpec("hidden width must be ≥ 1".into()));
            }
        }
        let check = |layer: usize, depth: usize| {
            if layer >= depth {
                Err(Error::LayerOutOfRange {
                    index: layer,
                    layers: depth,
                })
            } else {
                Ok(())
            }
        };
        for e in &self.mapping.entries {
            check(e.student_layer, student_depth)?;
            check(e.teacher_group as usize, teacher_depth)?;
        }
        for &l in self.feature_layers.iter().flatten() {
            check(l, teacher_depth)?;
        }
        if let Some(layers) = &self.feature_layers {
            for e in &self.mapping.entries {
                if !layers.contains(&(e.teacher_group as usize)) {
                    return Err(Error::InvalidConfig(format!(
                        "mapping uses teacher group {} but feature_layers omits it",
                        e.teacher_group
                    )));
                }
            }
        }
        for (i, expert) in self.experts.iter().enumerate() {
            if !(expert.weight.is_finite() && expert.weight > 0.0) {
                return Err(Error::InvalidConfig(format!("expert {i} weight must be > 0")));
            }
            for e in &expert.mapping.entries {
                check(e.student_layer, student_depth)?;
            }
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.ks.iter().flatten().any(|&k| k == 0) {
            return Err(Error::InvalidConfig("ks must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn ks_for(&self, classes: usize) -> Vec<usize> {
        self.ks.clone().unwrap_or_else(|| (1..=classes.min(3)).collect())
    }

    /// Checks that need the loaded data: class counts and `k` values.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<()> {
        if let Some(&k) = self.ks.iter().flatten().find(|&&k| k > dataset.class_count()) {
            return Err(Error::InvalidConfig(format!(
                "k = {k} exceeds the {} classes",
                dataset.class_count()
            )));
        }
        if self.plan.mode == Mode::TwoPhase && self.experts.is_empty() {
            let frozen = self.mapping.max_layer().map_or(0, |m| m + 1);
            if frozen >= self.student.depth() {
                return Err(Error::AllLayersFrozen);
            }
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Idx { images, labels } => load_idx(images, labels),
            DataSource::Csv { path, label_column } => load_csv(path, label_column),
            DataSource::Synthetic(Synthetic::Blobs {
                n_per_class,
                classes,
                dim,
                separation,
                seed,
            }) => synth_blobs(*n_per_class, *classes, *dim, *separation, *seed),
            DataSource::Synthetic(Synthetic::Rings {
                n_per_class,
                classes,
                noise,
                seed,
            }) => synth_rings(*n_per_class, *classes, *noise, *seed),
        }
    }

    pub fn split(&self, dataset: &Dataset) -> Result<Split> {
        Split::new(dataset.len(), self.test_fraction, self.split_seed)
    }

    pub fn teacher_spec(&self, dataset: &Dataset) -> Result<NetworkSpec> {
        self.teacher.network().spec(dataset.dim(), dataset.class_count())
    }

    pub fn student_spec(&self, dataset: &Dataset) -> Result<NetworkSpec> {
        self.student.spec(dataset.dim(), dataset.class_count())
    }

    /// Layers `extract-features` writes.
    pub fn extraction_layers(&self) -> Vec<usize> {
        match &self.feature_layers {
            Some(layers) => layers.clone(),
            None => {
                let mut set: BTreeSet<usize> = self.mapping.entries.iter().map(|e| e.teacher_group as usize).collect();
                set.insert(self.teacher.network().depth() - 1);
                set.into_iter().collect()
            }
        }
    }
}
