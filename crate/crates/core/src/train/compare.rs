//! Every distillation mode against the same teacher, over several seeds.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::features::extract_features;
use super::fit::{run_mode, train_teacher, Teacher};
use super::metrics::{MetricsReport, RunMetrics};
use super::{LayerGroupMapping, Mode, TrainData, TrainPlan};
use crate::error::{Error, Result};
use crate::nn::{Model, NetworkSpec};

#[derive(Clone, Debug)]
pub struct ComparisonSetup {
    pub teacher_spec: NetworkSpec,
    pub student_spec: NetworkSpec,
    pub teacher_plan: TrainPlan,
    /// Shared by all modes; `seed` and `mode` are overridden per run.
    pub plan: TrainPlan,
    pub mapping: LayerGroupMapping,
    pub seeds: Vec<u64>,
    /// Worker threads for the independent runs.
    pub jobs: usize,
}

impl ComparisonSetup {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "comparison needs at least 2 seeds, got {}",
                self.seeds.len()
            )));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::InvalidConfig("comparison seeds must be distinct".into()));
        }
        self.teacher_plan.validate()?;
        for mode in Mode::ALL {
            self.plan.with_mode(mode).validate()?;
        }
        for e in &self.mapping.entries {
            self.student_spec.check_layer(e.student_layer)?;
            self.teacher_spec.check_layer(e.teacher_group as usize)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub teacher: RunMetrics,
    /// In [`Mode::ALL`] order.
    pub rows: Vec<(Mode, MetricsReport)>,
}

impl Comparison {
    pub fn report(&self, mode: Mode) -> Option<&MetricsReport> {
        self.rows.iter().find(|(m, _)| *m == mode).map(|(_, r)| r)
    }

    /// `method,metric,mean,std_error,n_seeds`, six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,mean,std_error,n_seeds\n");
        for (mode, report) in &self.rows {
            for s in &report.summary {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{}",
                    mode.name(),
                    s.metric,
                    s.mean,
                    s.std_error,
                    report.per_seed.len()
                );
            }
        }
        out
    }

    /// One line per method: `mean ± stderr` of each metric.
    pub fn summary(&self) -> String {
        let mut out = format!("teacher: accuracy {:.4}\n", self.teacher.accuracy);
        for (mode, report) in &self.rows {
            let cells: Vec<String> = report
                .summary
                .iter()
                .map(|s| format!("{} {:.4} ± {:.4}", s.metric, s.mean, s.std_error))
                .collect();
            let _ = writeln!(out, "{:<16} {}", mode.name(), cells.join(", "));
        }
        out
    }
}

/// Trains the teacher with `setup.teacher_plan`, then compares all modes.
pub fn compare_methods(data: &TrainData, setup: &ComparisonSetup) -> Result<Comparison> {
    setup.validate()?;
    let teacher = train_teacher(data, &setup.teacher_spec, &setup.teacher_plan)?;
    compare_with_teacher(data, &teacher.model, teacher.metrics, setup)
}

/// Compares all modes against an already trained teacher.
pub fn compare_with_teacher(
    data: &TrainData,
    teacher: &Model,
    teacher_metrics: RunMetrics,
    setup: &ComparisonSetup,
) -> Result<Comparison> {
    setup.validate()?;
    let logits_layer = teacher.spec().depth() - 1;
    let mut layers: BTreeSet<usize> = setup.mapping.entries.iter().map(|e| e.teacher_group as usize).collect();
    layers.insert(logits_layer);
    let layers: Vec<usize> = layers.into_iter().collect();
    let cache = extract_features(teacher, data.dataset, &layers)?;
    let source = Teacher {
        cache: &cache,
        mapping: &setup.mapping,
        logits_group: Some(logits_layer as u32),
    };

    let runs: Vec<(Mode, u64)> = Mode::ALL
        .iter()
        .flat_map(|&m| setup.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let run = |&(mode, seed): &(Mode, u64)| -> Result<RunMetrics> {
        let plan = setup.plan.with_mode(mode).with_seed(seed);
        let fit = run_mode(&setup.student_spec, data, source, &plan)?;
        log::info!("{} seed {seed}: accuracy {:.4}", mode.name(), fit.metrics.accuracy);
        Ok(fit.metrics)
    };

    let jobs = setup.jobs.clamp(1, runs.len());
    let results: Vec<Result<RunMetrics>> = if jobs == 1 {
        runs.iter().map(run).collect()
    } else {
        let mut slots: Vec<Option<Result<RunMetrics>>> = (0..runs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    let runs = &runs;
                    let run = &run;
                    scope.spawn(move || {
                        (w..runs.len())
                            .step_by(jobs)
                            .map(|i| (i, run(&runs[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every run scheduled")).collect()
    };

    let mut per_mode: Vec<(Mode, Vec<(u64, RunMetrics)>)> = Mode::ALL.iter().map(|&m| (m, Vec::new())).collect();
    for ((mode, seed), result) in runs.iter().zip(results) {
        let metrics = result?;
        per_mode
            .iter_mut()
            .find(|(m, _)| m == mode)
            .expect("all modes listed")
            .1
            .push((*seed, metrics));
    }
    Ok(Comparison {
        teacher: teacher_metrics,
        rows: per_mode
            .into_iter()
            .map(|(m, runs)| (m, MetricsReport::from_runs(runs)))
            .collect(),
    })
}
