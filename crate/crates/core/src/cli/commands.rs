//! Subcommand implementations. Every output file is written atomically.

use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::{Cli, Command};
use crate::data::{read_cache_verified, write_cache, Dataset, FeatureCache, Split};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::{init_params, model_fingerprint, read_model, write_model, Model, NetworkSpec};
use crate::train::{
    combine_experts_fit, compare_with_teacher, evaluate, extract_features, run_mode, train_teacher, ComparisonSetup,
    Expert, ExpertPriorSet, MetricsReport, RunMetrics, Teacher, TrainData,
};

pub const TEACHER_MODEL: &str = "teacher.fpnn";
pub const TEACHER_METRICS: &str = "teacher_metrics.csv";
pub const FEATURES: &str = "features.fpfc";
pub const STUDENT_MODEL: &str = "student.fpnn";
pub const STUDENT_METRICS: &str = "student_metrics.csv";
pub const RUN_LOG: &str = "run_log.csv";
pub const EVALUATION: &str = "evaluation.csv";
pub const COMPARISON: &str = "comparison.csv";
pub const SUMMARY: &str = "summary.txt";

/// Loaded and validated experiment state shared by the subcommands.
struct Context {
    config: ExperimentConfig,
    out: PathBuf,
    dataset: Dataset,
    split: Split,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--config <path> is required".into()))?;
        let mut config = ExperimentConfig::load(path)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        let dataset = config.load_dataset()?;
        config.validate_against(&dataset)?;
        let split = config.split(&dataset)?;
        let out = cli
            .out
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Self {
            config,
            out,
            dataset,
            split,
        })
    }

    fn data(&self) -> Result<TrainData<'_>> {
        TrainData::new(&self.dataset, &self.split)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn teacher_spec(&self) -> Result<NetworkSpec> {
        self.config.teacher_spec(&self.dataset)
    }

    fn student_spec(&self) -> Result<NetworkSpec> {
        self.config.student_spec(&self.dataset)
    }

    /// Reads a model and checks it fits this experiment's data.
    fn read_model_for_data(&self, path: &Path) -> Result<Model> {
        let model = read_model(path)?;
        let spec = model.spec();
        if spec.input_width() != self.dataset.dim() || spec.output_head() != self.dataset.class_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} maps {} inputs to {} classes, data has {} columns and {} classes",
                path.display(),
                spec.input_width(),
                spec.output_head(),
                self.dataset.dim(),
                self.dataset.class_count()
            )));
        }
        Ok(model)
    }

    fn metrics(&self, model: &Model) -> Result<RunMetrics> {
        evaluate(
            model,
            self.data()?.test_set(),
            &self.config.ks_for(self.dataset.class_count()),
        )
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn metrics_csv(metrics: &RunMetrics) -> String {
    MetricsReport::from_runs(vec![(0, metrics.clone())]).to_csv()
}

fn train_teacher_cmd(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    let mut plan = ctx.config.teacher.plan.clone();
    if let Some(seed) = cli.seed_override {
        plan.seed = seed;
    }
    let fit = train_teacher(&ctx.data()?, &ctx.teacher_spec()?, &plan)?;
    write_model(&ctx.path(TEACHER_MODEL), &fit.model)?;
    let metrics = ctx.metrics(&fit.model)?;
    write_text(&ctx.path(TEACHER_METRICS), &metrics_csv(&metrics))?;
    println!("teacher accuracy {:.4}", metrics.accuracy);
    Ok(())
}

fn extract_cmd(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    let teacher = ctx.read_model_for_data(&ctx.path(TEACHER_MODEL))?;
    let cache = extract_features(&teacher, &ctx.dataset, &ctx.config.extraction_layers())?;
    write_cache(&ctx.path(FEATURES), &cache)?;
    println!(
        "wrote {} feature groups for {} examples",
        cache.groups().len(),
        cache.rows()
    );
    Ok(())
}

fn verified_cache(ctx: &Context, model: &Path, features: &Path) -> Result<FeatureCache> {
    let teacher = read_model(model)?;
    read_cache_verified(features, &ctx.dataset.fingerprint(), &model_fingerprint(&teacher))
}

fn distill_cmd(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    let data = ctx.data()?;
    let spec = ctx.student_spec()?;
    let mut plan = ctx.config.plan.clone();
    if let Some(seed) = cli.seed_override {
        plan.seed = seed;
    }
    let fit = if ctx.config.experts.is_empty() {
        let cache = verified_cache(&ctx, &ctx.path(TEACHER_MODEL), &ctx.path(FEATURES))?;
        let logits_group = Some((ctx.config.teacher.network().depth() - 1) as u32);
        let teacher = Teacher {
            cache: &cache,
            mapping: &ctx.config.mapping,
            logits_group,
        };
        run_mode(&spec, &data, teacher, &plan)?
    } else {
        let caches = ctx
            .config
            .experts
            .iter()
            .map(|e| verified_cache(&ctx, &e.model, &e.features))
            .collect::<Result<Vec<_>>>()?;
        let experts = ctx
            .config
            .experts
            .iter()
            .zip(&caches)
            .map(|(e, cache)| Expert {
                cache,
                mapping: e.mapping.clone(),
                weight: e.weight,
            })
            .collect();
        combine_experts_fit(
            init_params(&spec, plan.seed),
            &data,
            &ExpertPriorSet::new(experts)?,
            &plan,
        )?
    };
    write_model(&ctx.path(STUDENT_MODEL), &fit.model)?;
    write_text(&ctx.path(RUN_LOG), &fit.log.to_csv())?;
    let metrics = ctx.metrics(&fit.model)?;
    write_text(&ctx.path(STUDENT_METRICS), &metrics_csv(&metrics))?;
    println!("student accuracy {:.4}", metrics.accuracy);
    Ok(())
}

fn evaluate_cmd(cli: &Cli, model: Option<&Path>) -> Result<()> {
    let ctx = Context::new(cli)?;
    let path = model.map_or_else(|| ctx.path(STUDENT_MODEL), Path::to_path_buf);
    let model = ctx.read_model_for_data(&path)?;
    let metrics = ctx.metrics(&model)?;
    write_text(&ctx.path(EVALUATION), &metrics_csv(&metrics))?;
    print!("{}", metrics_csv(&metrics));
    Ok(())
}

fn compare_cmd(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    let mut teacher_plan = ctx.config.teacher.plan.clone();
    if let Some(seed) = cli.seed_override {
        teacher_plan.seed = seed;
    }
    let setup = ComparisonSetup {
        teacher_spec: ctx.teacher_spec()?,
        student_spec: ctx.student_spec()?,
        teacher_plan,
        plan: ctx.config.plan.clone(),
        mapping: ctx.config.mapping.clone(),
        seeds: ctx.config.seeds.clone(),
        jobs: cli.jobs,
    };
    setup.validate()?;
    let data = ctx.data()?;
    let teacher = train_teacher(&data, &setup.teacher_spec, &setup.teacher_plan)?;
    let comparison = compare_with_teacher(&data, &teacher.model, teacher.metrics, &setup)?;
    write_text(&ctx.path(COMPARISON), &comparison.to_csv())?;
    let summary = comparison.summary();
    write_text(&ctx.path(SUMMARY), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::InvalidConfig("--jobs must be ≥ 1".into()));
    }
    match &cli.command {
        Command::TrainTeacher => train_teacher_cmd(cli),
        Command::ExtractFeatures => extract_cmd(cli),
        Command::Distill => distill_cmd(cli),
        Command::Evaluate { model } => evaluate_cmd(cli, model.as_deref()),
        Command::Compare => compare_cmd(cli),
    }
}
