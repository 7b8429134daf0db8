//! Training loops for every mode.
//!
//! All loops share one engine: per epoch, the train split is shuffled into
//! batches by `(seed, epoch)`, each batch's objective is taped, and one
//! optimizer step is taken on the trainable layers. Teacher feature rows are
//! picked by dataset index, so they always line up with the student batch.

use super::log::{LogRow, Phase, RunLog};
use super::metrics::{evaluate, RunMetrics};
use super::{ExpertPriorSet, LayerGroupMapping, Mode, TrainData, TrainPlan};
use crate::data::{epoch_batches, Dataset, FeatureCache};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{init_params, Model, NetworkSpec, NodeId, Optimizer, OptimizerConfig, Tape};
use crate::prior::{gram_kernel, FeatureMatrix, PriorConfig};

/// Mixed into the plan seed for the phase-1 batch stream.
const PHASE1_STREAM: u64 = 0x5048_4153_4531;

/// A trained model with its per-epoch log and final test metrics.
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: Model,
    pub log: RunLog,
    pub metrics: RunMetrics,
}

struct PriorTerm<'a> {
    layer: usize,
    teacher: &'a Matrix,
    weight: f64,
}

enum OutputTarget<'a> {
    Soft {
        teacher: &'a Matrix,
        temperature: f64,
        weight: f64,
    },
    L2 {
        teacher: &'a Matrix,
        weight: f64,
    },
}

struct Objective<'a> {
    task: bool,
    target: Option<OutputTarget<'a>>,
    priors: Vec<PriorTerm<'a>>,
    prior: &'a PriorConfig,
}

struct BatchValue {
    loss: NodeId,
    task: Option<f64>,
    kl: Option<f64>,
}

fn batch_objective(
    model: &Model,
    tape: &mut Tape,
    data: &Dataset,
    rows: &[usize],
    obj: &Objective,
) -> Result<BatchValue> {
    let x = data.inputs().select_rows(rows);
    let rec = model.forward(&x, Some(tape))?;
    let mut parts = Vec::with_capacity(obj.priors.len() + 1);

    let mut task = None;
    if obj.task {
        let labels: Vec<usize> = rows.iter().map(|&i| data.labels()[i]).collect();
        let logits = rec.logits_node().expect("taped forward");
        let mut t = tape.softmax_cross_entropy(logits, &labels)?;
        match &obj.target {
            Some(OutputTarget::Soft {
                teacher,
                temperature,
                weight,
            }) => {
                let soft = tape.soft_target(logits, &teacher.select_rows(rows), *temperature)?;
                // T² keeps the soft gradients on the scale of the hard ones
                let soft = tape.scale(soft, weight * temperature * temperature);
                t = tape.add(t, soft)?;
            }
            Some(OutputTarget::L2 { teacher, weight }) => {
                let l2 = tape.squared_distance(logits, &teacher.select_rows(rows))?;
                let l2 = tape.scale(l2, *weight);
                t = tape.add(t, l2)?;
            }
            None => {}
        }
        task = Some(tape.scalar(t)?);
        parts.push(t);
    }

    let mut kl = None;
    for term in &obj.priors {
        let teacher = FeatureMatrix::new(term.teacher.select_rows(rows))?;
        let kernel = gram_kernel(&teacher, obj.prior)?;
        let node = tape.gp_kl(rec.node(term.layer).expect("layer checked"), &kernel, obj.prior)?;
        *kl.get_or_insert(0.0) += tape.scalar(node)?;
        parts.push(tape.scale(node, term.weight));
    }

    let loss = tape
        .add_all(&parts)?
        .ok_or_else(|| Error::InvalidConfig("objective has no terms".into()))?;
    Ok(BatchValue { loss, task, kl })
}

struct Stage<'a> {
    phase: Phase,
    epochs: usize,
    optimizer: OptimizerConfig,
    trainable: Vec<bool>,
    seed: u64,
    objective: Objective<'a>,
}

fn run_stage(model: &mut Model, data: &TrainData, batch_size: usize, stage: &Stage, log: &mut RunLog) -> Result<()> {
    let mut opt = Optimizer::new(stage.optimizer.clone(), model);
    for epoch in 0..stage.epochs {
        let batches = epoch_batches(&data.split.train, batch_size, stage.seed, epoch as u64)?;
        let (mut task_sum, mut kl_sum) = (0.0, 0.0);
        for rows in &batches {
            let mut tape = Tape::new();
            let value = batch_objective(model, &mut tape, data.dataset, rows, &stage.objective)?;
            let total = tape.scalar(value.loss)?;
            if !total.is_finite() {
                return Err(Error::DivergedTraining(format!(
                    "{} epoch {}: loss is {total}",
                    stage.phase.name(),
                    epoch + 1
                )));
            }
            let grads = tape.backward(value.loss)?.for_model(model);
            opt.step(model, &grads, &stage.trainable)?;
            task_sum += value.task.unwrap_or(0.0);
            kl_sum += value.kl.unwrap_or(0.0);
        }
        let n = batches.len() as f64;
        let row = LogRow {
            epoch: epoch + 1,
            phase: stage.phase,
            task_loss: stage.objective.task.then_some(task_sum / n),
            kl_loss: (!stage.objective.priors.is_empty()).then_some(kl_sum / n),
            test_accuracy: evaluate(model, data.test_set(), &[1])?.accuracy,
        };
        log::debug!(
            "{} epoch {}: task {:?} kl {:?} acc {:.4}",
            stage.phase.name(),
            row.epoch,
            row.task_loss,
            row.kl_loss,
            row.test_accuracy
        );
        log.push(row);
    }
    Ok(())
}

fn finish(model: Model, log: RunLog, data: &TrainData) -> Result<Fit> {
    let metrics = evaluate(&model, data.test_set(), &data.default_ks())?;
    Ok(Fit { model, log, metrics })
}

fn check_network(spec: &NetworkSpec, dataset: &Dataset) -> Result<()> {
    if spec.input_width() != dataset.dim() {
        return Err(Error::DimensionMismatch(format!(
            "network takes {} inputs, data has {} columns",
            spec.input_width(),
            dataset.dim()
        )));
    }
    if spec.output_head() != dataset.class_count() {
        return Err(Error::DimensionMismatch(format!(
            "network has {} outputs, data has {} classes",
            spec.output_head(),
            dataset.class_count()
        )));
    }
    Ok(())
}

fn check_cache(cache: &FeatureCache, mapping: &LayerGroupMapping, student: &Model, dataset: &Dataset) -> Result<()> {
    if cache.rows() != dataset.len() {
        return Err(Error::BatchMismatch(format!(
            "feature cache has {} rows, dataset has {}",
            cache.rows(),
            dataset.len()
        )));
    }
    mapping.validate(student.spec(), cache)
}

fn prior_terms<'a>(cache: &'a FeatureCache, mapping: &LayerGroupMapping, weight: f64) -> Vec<PriorTerm<'a>> {
    mapping
        .entries
        .iter()
        .map(|e| PriorTerm {
            layer: e.student_layer,
            teacher: &cache.group(e.teacher_group).expect("mapping validated").values,
            weight,
        })
        .collect()
}

fn task_objective(prior: &PriorConfig) -> Objective<'_> {
    Objective {
        task: true,
        target: None,
        priors: Vec::new(),
        prior,
    }
}

/// Layers trained in phase 1 and frozen in phase 2: every layer up to the
/// deepest mapped one.
pub fn frozen_layers(mapping: &LayerGroupMapping) -> Vec<usize> {
    mapping.max_layer().map_or_else(Vec::new, |m| (0..=m).collect())
}

fn feature_stage<'a>(
    model: &mut Model,
    data: &TrainData,
    plan: &TrainPlan,
    priors: Vec<PriorTerm<'a>>,
    deepest: usize,
) -> Result<RunLog> {
    let stage = Stage {
        phase: Phase::Phase1,
        epochs: plan.phase1_epochs,
        optimizer: plan.phase1_optimizer.clone(),
        trainable: (0..model.layers().len()).map(|l| l <= deepest).collect(),
        seed: plan.seed ^ PHASE1_STREAM,
        objective: Objective {
            task: false,
            target: None,
            priors,
            prior: &plan.prior,
        },
    };
    let mut log = RunLog::default();
    run_stage(model, data, plan.batch_size, &stage, &mut log)?;
    Ok(log)
}

/// Phase 1: fits the mapped student layers to the teacher's feature groups by
/// minimizing the summed per-batch GP KL. Labels are never read.
pub fn phase1_feature_fit(
    student: Model,
    data: &TrainData,
    cache: &FeatureCache,
    mapping: &LayerGroupMapping,
    plan: &TrainPlan,
) -> Result<Fit> {
    plan.validate()?;
    check_cache(cache, mapping, &student, data.dataset)?;
    let mut model = student;
    let log = match mapping.max_layer() {
        None => RunLog::default(),
        Some(deepest) => feature_stage(&mut model, data, plan, prior_terms(cache, mapping, 1.0), deepest)?,
    };
    finish(model, log, data)
}

/// Mean over the first phase-1 epoch's batches of the summed KL terms, without
/// updating the model.
pub fn mean_prior_kl(
    model: &Model,
    data: &TrainData,
    cache: &FeatureCache,
    mapping: &LayerGroupMapping,
    plan: &TrainPlan,
) -> Result<f64> {
    check_cache(cache, mapping, model, data.dataset)?;
    if mapping.is_empty() {
        return Ok(0.0);
    }
    let obj = Objective {
        task: false,
        target: None,
        priors: prior_terms(cache, mapping, 1.0),
        prior: &plan.prior,
    };
    let batches = epoch_batches(&data.split.train, plan.batch_size, plan.seed ^ PHASE1_STREAM, 0)?;
    let mut sum = 0.0;
    for rows in &batches {
        let mut tape = Tape::new();
        sum += batch_objective(model, &mut tape, data.dataset, rows, &obj)?
            .kl
            .unwrap_or(0.0);
    }
    Ok(sum / batches.len() as f64)
}

/// Phase 2: cross-entropy training of every layer not in `frozen`.
pub fn phase2_task_fit(student: Model, data: &TrainData, plan: &TrainPlan, frozen: &[usize]) -> Result<Fit> {
    task_fit(student, data, plan, frozen, Phase::Phase2)
}

fn task_fit(student: Model, data: &TrainData, plan: &TrainPlan, frozen: &[usize], phase: Phase) -> Result<Fit> {
    plan.validate()?;
    check_network(student.spec(), data.dataset)?;
    for &l in frozen {
        student.spec().check_layer(l)?;
    }
    let trainable: Vec<bool> = (0..student.layers().len()).map(|l| !frozen.contains(&l)).collect();
    if !trainable.iter().any(|&t| t) {
        return Err(Error::AllLayersFrozen);
    }
    let stage = Stage {
        phase,
        epochs: plan.phase2_epochs,
        optimizer: plan.phase2_optimizer.clone(),
        trainable,
        seed: plan.seed,
        objective: task_objective(&plan.prior),
    };
    let mut model = student;
    let mut log = RunLog::default();
    run_stage(&mut model, data, plan.batch_size, &stage, &mut log)?;
    finish(model, log, data)
}

/// Plain cross-entropy training of the whole network.
pub fn naive_fit(student: Model, data: &TrainData, plan: &TrainPlan) -> Result<Fit> {
    task_fit(student, data, plan, &[], Phase::Task)
}

/// Trains a teacher from `init_params(spec, plan.seed)`.
pub fn train_teacher(data: &TrainData, spec: &NetworkSpec, plan: &TrainPlan) -> Result<Fit> {
    check_network(spec, data.dataset)?;
    naive_fit(init_params(spec, plan.seed), data, plan)
}

/// Phase 1 followed by phase 2 with the phase-1 layers frozen.
pub fn two_phase_fit(
    student: Model,
    data: &TrainData,
    cache: &FeatureCache,
    mapping: &LayerGroupMapping,
    plan: &TrainPlan,
) -> Result<Fit> {
    check_network(student.spec(), data.dataset)?;
    let first = phase1_feature_fit(student, data, cache, mapping, plan)?;
    let second = phase2_task_fit(first.model, data, plan, &frozen_layers(mapping))?;
    let mut log = first.log;
    log.extend(second.log);
    Ok(Fit { log, ..second })
}

/// Cross-entropy plus `α·Σ KL` per batch, all layers trainable.
pub fn joint_fit(
    student: Model,
    data: &TrainData,
    cache: &FeatureCache,
    mapping: &LayerGroupMapping,
    plan: &TrainPlan,
) -> Result<Fit> {
    plan.with_mode(Mode::Joint).validate()?;
    check_network(student.spec(), data.dataset)?;
    check_cache(cache, mapping, &student, data.dataset)?;
    let stage = Stage {
        phase: Phase::Joint,
        epochs: plan.phase2_epochs,
        optimizer: plan.phase2_optimizer.clone(),
        trainable: vec![true; student.layers().len()],
        seed: plan.seed,
        objective: Objective {
            task: true,
            target: None,
            priors: prior_terms(cache, mapping, plan.prior.alpha),
            prior: &plan.prior,
        },
    };
    let mut model = student;
    let mut log = RunLog::default();
    run_stage(&mut model, data, plan.batch_size, &stage, &mut log)?;
    finish(model, log, data)
}

fn check_logits(student: &Model, teacher_logits: &Matrix, dataset: &Dataset) -> Result<()> {
    if teacher_logits.rows() != dataset.len() {
        return Err(Error::BatchMismatch(format!(
            "teacher logits have {} rows, dataset has {}",
            teacher_logits.rows(),
            dataset.len()
        )));
    }
    if teacher_logits.cols() != student.spec().output_head() {
        return Err(Error::DimensionMismatch(format!(
            "student has {} logits, teacher has {}",
            student.spec().output_head(),
            teacher_logits.cols()
        )));
    }
    Ok(())
}

fn output_fit(student: Model, data: &TrainData, plan: &TrainPlan, target: OutputTarget, phase: Phase) -> Result<Fit> {
    plan.validate()?;
    check_network(student.spec(), data.dataset)?;
    let stage = Stage {
        phase,
        epochs: plan.phase2_epochs,
        optimizer: plan.phase2_optimizer.clone(),
        trainable: vec![true; student.layers().len()],
        seed: plan.seed,
        objective: Objective {
            task: true,
            target: Some(target),
            priors: Vec::new(),
            prior: &plan.prior,
        },
    };
    let mut model = student;
    let mut log = RunLog::default();
    run_stage(&mut model, data, plan.batch_size, &stage, &mut log)?;
    finish(model, log, data)
}

/// Cross-entropy plus `α·T²` times the soft-target cross-entropy against the
/// teacher's logits. Logit counts must match.
pub fn hinton_fit(student: Model, data: &TrainData, teacher_logits: &Matrix, plan: &TrainPlan) -> Result<Fit> {
    check_logits(&student, teacher_logits, data.dataset)?;
    let target = OutputTarget::Soft {
        teacher: teacher_logits,
        temperature: plan.prior.temperature,
        weight: plan.prior.alpha,
    };
    output_fit(student, data, plan, target, Phase::Hinton)
}

/// Cross-entropy plus `α` times the mean squared logit difference.
pub fn l2_fit(student: Model, data: &TrainData, teacher_logits: &Matrix, plan: &TrainPlan) -> Result<Fit> {
    check_logits(&student, teacher_logits, data.dataset)?;
    let target = OutputTarget::L2 {
        teacher: teacher_logits,
        weight: plan.prior.alpha,
    };
    output_fit(student, data, plan, target, Phase::L2)
}

fn expert_terms<'a>(experts: &ExpertPriorSet<'a>, student: &Model, dataset: &Dataset) -> Result<Vec<PriorTerm<'a>>> {
    let mut terms = Vec::new();
    for e in experts.experts() {
        check_cache(e.cache, &e.mapping, student, dataset)?;
        terms.extend(prior_terms(e.cache, &e.mapping, e.weight));
    }
    Ok(terms)
}

/// Phase-1 objective `Σ_j α_j·KL_j` on one batch.
pub fn phase1_objective(
    model: &Model,
    data: &Dataset,
    rows: &[usize],
    experts: &ExpertPriorSet,
    prior: &PriorConfig,
) -> Result<f64> {
    let obj = Objective {
        task: false,
        target: None,
        priors: expert_terms(experts, model, data)?,
        prior,
    };
    let mut tape = Tape::new();
    let value = batch_objective(model, &mut tape, data, rows, &obj)?;
    tape.scalar(value.loss)
}

/// Phase 1 against every expert's prior at once, then phase 2 with all
/// constrained layers frozen.
pub fn combine_experts_fit(
    student: Model,
    data: &TrainData,
    experts: &ExpertPriorSet,
    plan: &TrainPlan,
) -> Result<Fit> {
    plan.validate()?;
    check_network(student.spec(), data.dataset)?;
    let terms = expert_terms(experts, &student, data.dataset)?;
    let deepest = terms.iter().map(|t| t.layer).max();
    let mut model = student;
    let mut log = RunLog::default();
    let mut frozen = Vec::new();
    if let Some(deepest) = deepest {
        log = feature_stage(&mut model, data, plan, terms, deepest)?;
        frozen = (0..=deepest).collect();
    }
    let second = phase2_task_fit(model, data, plan, &frozen)?;
    log.extend(second.log);
    Ok(Fit { log, ..second })
}

/// Inputs shared by every distillation mode of one benchmark.
#[derive(Clone, Copy, Debug)]
pub struct Teacher<'a> {
    pub cache: &'a FeatureCache,
    pub mapping: &'a LayerGroupMapping,
    /// Cache group holding the teacher's logits (baselines only).
    pub logits_group: Option<u32>,
}

impl Teacher<'_> {
    fn logits(&self) -> Result<&Matrix> {
        let id = self
            .logits_group
            .ok_or_else(|| Error::InvalidConfig("baseline modes need the teacher's logits group".into()))?;
        self.cache
            .group(id)
            .map(|g| &g.values)
            .ok_or_else(|| Error::InvalidConfig(format!("feature group {id} is not in the cache")))
    }
}

/// Initializes a student from `plan.seed` and trains it in `plan.mode`.
pub fn run_mode(student: &NetworkSpec, data: &TrainData, teacher: Teacher, plan: &TrainPlan) -> Result<Fit> {
    let model = init_params(student, plan.seed);
    match plan.mode {
        Mode::Naive => naive_fit(model, data, plan),
        Mode::TwoPhase => two_phase_fit(model, data, teacher.cache, teacher.mapping, plan),
        Mode::Joint => joint_fit(model, data, teacher.cache, teacher.mapping, plan),
        Mode::HintonBaseline => hinton_fit(model, data, teacher.logits()?, plan),
        Mode::L2Baseline => l2_fit(model, data, teacher.logits()?, plan),
    }
}
