use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use resflu_core::data::{
    generate_synthetic, parse_dataset, partition, write_dataset, Attribute, AttributeValue, Dataset, PreparedSet,
    SplitProtocol, SynthConfig, ViewNoise,
};
use resflu_core::eval::cohort_eval;
use resflu_core::model::{init_model, train_with_observer, ResTcnModel, TrainError, TrainHistory};
use resflu_core::reasoning::{assess_flu, risk_from_rates, BiasPriors, FluAssessment};
use resflu_core::report::{BiasDirection, ReportDocument};

use crate::cli::{DiagnoseArgs, EvalArgs, SynthArgs, TrainArgs};
use crate::config::{parse_cohorts, AppConfig};
use crate::error::{Classify, CliError};

/// Model precision used for training and stored artifacts.
pub type Model = ResTcnModel<f32>;

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file = File::open(path).or_usage(format!("cannot open dataset {}", path.display()))?;
    let data = parse_dataset(BufReader::new(file)).or_usage(format!("invalid dataset {}", path.display()))?;
    if data.is_empty() {
        return Err(CliError::usage(format!("dataset {} has no samples", path.display())));
    }
    Ok(data)
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let file = File::open(path).or_usage(format!("cannot open model {}", path.display()))?;
    Model::load(BufReader::new(file)).or_usage(format!("invalid model artifact {}", path.display()))
}

pub fn load_report(path: &Path) -> Result<ReportDocument, CliError> {
    let file = File::open(path).or_usage(format!("cannot open report {}", path.display()))?;
    let report: ReportDocument =
        serde_json::from_reader(BufReader::new(file)).or_usage(format!("invalid report {}", path.display()))?;
    let problems = report.check_consistency();
    if !problems.is_empty() {
        return Err(CliError::usage(format!(
            "report {} is not self-consistent: {}",
            path.display(),
            problems.join("; ")
        )));
    }
    Ok(report)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).or_runtime(format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).or_runtime(format!("cannot write {}", path.display()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).or_runtime(format!("cannot write {}", path.display()))
}

/// `model.bin` → `model.history.json`.
pub fn default_history_path(out: &Path) -> PathBuf {
    out.with_extension("history.json")
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let config = AppConfig::load_optional(args.config.as_deref())?;
    let data_path = args
        .data
        .clone()
        .or_else(|| config.data.train.clone())
        .ok_or_else(|| CliError::usage("no training data: pass --data or set data.train in the config"))?;
    let dataset = read_dataset(&data_path)?;

    let model_config = config.model_config(dataset.n_classes());
    model_config.validate().or_usage("invalid model configuration")?;
    let mut train_config = config.train_config();
    if let Some(seed) = args.seed {
        train_config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        train_config.epochs = epochs;
    }
    train_config.validate().or_usage("invalid training configuration")?;

    let set = PreparedSet::from_dataset(&dataset, model_config.seq_len).or_usage("cannot preprocess dataset")?;
    let mut model: Model = init_model(&model_config, train_config.seed).or_usage("cannot build model")?;
    model.set_classes(dataset.classes.clone()).or_usage("class table")?;
    log::info!(
        "training on {} samples, {} classes, {} parameters, {} epochs",
        set.len(),
        dataset.n_classes(),
        model.param_count(),
        train_config.epochs
    );

    let total = train_config.epochs;
    let history_path = args.history.clone().unwrap_or_else(|| default_history_path(&args.out));
    let history = match train_with_observer(&mut model, &set, &train_config, |r| {
        if r.epoch == 1 || r.epoch == total || r.epoch % 10 == 0 {
            log::info!(
                "epoch {}/{total}: loss {:.4}, fusion accuracy {:.3}, mean fkd {:.4}",
                r.epoch,
                r.total_loss,
                r.fusion_accuracy,
                r.mean_fkd()
            );
        }
    }) {
        Ok(h) => h,
        Err(TrainError::Diverged { epoch, reason, history, .. }) => {
            write_json(&history_path, &history)?;
            return Err(CliError::runtime(format!("training diverged in epoch {epoch}: {reason}")));
        }
        Err(TrainError::EmptyTrainSet) => return Err(CliError::usage("training set is empty")),
        Err(TrainError::Model(e)) => return Err(CliError::Runtime(e.into())),
    };

    let file = File::create(&args.out).or_runtime(format!("cannot create {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    model.save(&mut w).or_runtime("cannot write model")?;
    w.flush().or_runtime("cannot write model")?;
    write_json(&history_path, &history)?;
    print_training_summary(&history, &args.out, &history_path);
    Ok(())
}

fn print_training_summary(history: &TrainHistory, out: &Path, history_path: &Path) {
    match history.epochs.last() {
        Some(last) => println!(
            "trained {} epochs: loss {:.4}, fusion train accuracy {:.3}",
            last.epoch, last.total_loss, last.fusion_accuracy
        ),
        None => println!("trained 0 epochs"),
    }
    println!("model: {}", out.display());
    println!("history: {}", history_path.display());
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let config = AppConfig::load_optional(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let data_path = args
        .data
        .clone()
        .or_else(|| config.data.test.clone())
        .ok_or_else(|| CliError::usage("no evaluation data: pass --data or set data.test in the config"))?;
    let dataset = read_dataset(&data_path)?;
    if dataset.n_classes() > model.config.n_classes {
        return Err(CliError::usage(format!(
            "model has {} classes but the data has {}",
            model.config.n_classes,
            dataset.n_classes()
        )));
    }
    let dataset = dataset.with_classes(&model.classes).or_usage("dataset classes do not match the model")?;

    let cohorts = match (&args.cohorts, &config.eval.cohorts) {
        (Some(list), _) => parse_cohorts(&list.split(',').collect::<Vec<_>>())?,
        (None, Some(list)) => parse_cohorts(list)?,
        (None, None) => Attribute::ALL.to_vec(),
    };
    let costs = config.costs(args.alpha, args.beta)?;
    let flu = match (args.p_cough, args.p_sneeze) {
        (Some(c), Some(s)) => Some((c, s)),
        (None, None) => None,
        _ => return Err(CliError::usage("--p-cough and --p-sneeze go together")),
    };

    let set = PreparedSet::from_dataset(&dataset, model.config.seq_len).or_usage("cannot preprocess dataset")?;
    let predictions = model.predict_set(&set).or_runtime("inference failed")?;
    let preds: Vec<usize> = predictions.iter().map(|p| p.rank1).collect();
    let attributes: Vec<_> = dataset.samples.iter().map(|s| s.attributes.clone()).collect();
    // the bias network needs every attribute; the table keeps the requested ones
    let cohort_report = cohort_eval(&preds, &set.labels, &attributes, model.config.n_classes, &Attribute::ALL)
        .or_runtime("evaluation failed")?;
    let mut report = ReportDocument::build(model.classes.clone(), &cohort_report, costs, &BiasPriors::default())
        .or_runtime("report construction failed")?;
    report.cohorts.retain(|row| cohorts.contains(&row.attribute));
    if let Some((c, s)) = flu {
        report = report.with_flu(c, s).or_usage("invalid symptom probability")?;
    }
    let problems = report.check_consistency();
    if !problems.is_empty() {
        return Err(CliError::runtime(format!("report failed its consistency check: {}", problems.join("; "))));
    }
    write_json(&args.report, &report)?;
    print_report(&report);
    println!("report: {}", args.report.display());
    Ok(())
}

fn print_report(report: &ReportDocument) {
    let b = &report.baseline;
    println!(
        "baseline: {} samples, accuracy {:.3}, sensitivity {:.3}, specificity {:.3}, risk {:.3}",
        b.metrics.samples, b.metrics.accuracy, b.metrics.sensitivity, b.metrics.specificity, b.risk.risk
    );
    for row in &report.cohorts {
        let name = format!("{}={}", row.attribute, row.value);
        match (&row.metrics, row.risk, row.bias_reliability, row.bias_risk, row.direction) {
            (Some(m), Some(risk), Some(rel), Some(bias), Some(dir)) => {
                let sign = match dir {
                    BiasDirection::Positive => "+",
                    BiasDirection::Negative => "-",
                    BiasDirection::Neutral => "=",
                };
                println!(
                    "  {name:<14} n={:<5} accuracy {:.3}  risk {:.3}  bias(rel) {rel:+.3}  bias(risk) {bias:+.3}  [{sign}]",
                    row.samples, m.accuracy, risk.risk
                );
            }
            _ => println!("  {name:<14} n=0     -"),
        }
    }
    if let Some(flu) = &report.flu {
        println!("flu: base {:.3}, risk-adjusted {:.3}", flu.p_flu_base, flu.p_flu_adjusted);
    }
}

/// Where the sensitivity and specificity behind a diagnosis came from.
fn diagnosis_rates(args: &DiagnoseArgs) -> Result<(Option<(f64, f64)>, String), CliError> {
    if let (Some(sens), Some(spec)) = (args.sens, args.spec) {
        return Ok((Some((sens, spec)), "given sensitivity and specificity".into()));
    }
    let Some(path) = &args.report else {
        return Ok((None, "no metrics source; model error not accounted for".into()));
    };
    let report = load_report(path)?;
    match &args.cohort {
        None => {
            let m = &report.baseline.metrics;
            Ok((Some((m.sensitivity, m.specificity)), format!("baseline of {}", path.display())))
        }
        Some(spec) => {
            let (attr, value) = parse_cohort_value(spec)?;
            let row =
                report.cohort(attr, &value).ok_or_else(|| CliError::usage(format!("report has no cohort {spec}")))?;
            let m = row.metrics.as_ref().ok_or_else(|| CliError::usage(format!("cohort {spec} has no samples")))?;
            Ok((Some((m.sensitivity, m.specificity)), format!("cohort {spec} of {}", path.display())))
        }
    }
}

/// `view=center` → (View, "center").
pub fn parse_cohort_value(spec: &str) -> Result<(Attribute, String), CliError> {
    let (attr, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("cohort must look like attribute=value, got `{spec}`")))?;
    let attr = parse_cohorts(&[attr])?[0];
    let value = AttributeValue::parse(attr, value.trim()).map_err(CliError::usage)?;
    Ok((attr, value.value_str().to_string()))
}

pub fn diagnose_assessment(args: &DiagnoseArgs) -> Result<(FluAssessment, String), CliError> {
    let config = AppConfig::default();
    let costs = config.costs(args.alpha, args.beta)?;
    let (rates, source) = diagnosis_rates(args)?;
    let risk = match rates {
        Some((sens, spec)) => risk_from_rates(costs, sens, spec).or_usage("invalid rates")?.risk,
        None => 0.0,
    };
    let flu = assess_flu(args.p_cough, args.p_sneeze, risk).or_usage("invalid symptom probability")?;
    Ok((flu, source))
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let (flu, source) = diagnose_assessment(args)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&flu).or_runtime("serialise")?);
        return Ok(());
    }
    println!("source: {source}");
    println!("risk: {:.3}", flu.risk);
    println!("flu base: {:.3}", flu.p_flu_base);
    println!("flu adjusted: {:.3}", flu.p_flu_adjusted);
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        n_classes: args.classes,
        samples_per_class: args.samples_per_class,
        frames: args.frames,
        noise: ViewNoise { left: args.sigma, center: args.sigma * args.center_mult, right: args.sigma },
        seed: args.seed,
        n_subjects: args.subjects,
    };
    config.validate().or_usage("invalid synthetic config")?;
    let data = generate_synthetic(&config).or_usage("cannot generate data")?;
    let (train, test) = match &args.test_out {
        None => (data, None),
        Some(path) => {
            let held: Vec<String> = (0..args.holdout_subjects).map(|i| format!("S{i:02}")).collect();
            let (train, test) = partition(&data, &SplitProtocol::BySubjects(held)).or_usage("cannot split")?;
            for (k, n) in test.class_counts().iter().enumerate() {
                if *n == 0 {
                    log::warn!("held-out subjects have no samples of class {}", test.classes[k]);
                }
            }
            (train, Some((path, test)))
        }
    };
    let write = |path: &Path, d: &Dataset| -> Result<(), CliError> {
        let file = File::create(path).or_runtime(format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        write_dataset(d, &mut w).or_runtime(format!("cannot write {}", path.display()))?;
        w.flush().or_runtime(format!("cannot write {}", path.display()))?;
        println!("{}: {} samples", path.display(), d.len());
        Ok(())
    };
    write(&args.out, &train)?;
    if let Some((path, test)) = test {
        write(path, &test)?;
    }
    Ok(())
}
