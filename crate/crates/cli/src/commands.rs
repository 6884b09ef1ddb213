use std::path::{Path, PathBuf};
use std::process::Command as Process;

use relabel_core::critic::CriticParams;
use relabel_core::embed::{classifier_accuracy, freeze_copy, pretrain as warm_up_networks, ExtractorParams};
use relabel_core::experiment::{initial_critic, initial_networks, run_pipeline, BlobFixture};
use relabel_core::io::{read_dataset, read_params, write_dataset, write_params};
use relabel_core::label::{GroundTruth, LabelState};
use relabel_core::trainer::{deploy_cleaning, derive_seed, finetune_classifier, streams};
use relabel_core::Error;
use serde_json::Value;

use crate::config::{parse_grid, with_param, ExperimentConfig, SweepSpec};
use crate::output::{self, ensure_dir};
use crate::{
    CleanArgs, CliError, DataArgs, EvalArgs, FinetuneArgs, GenerateArgs, Globals, RunArgs, SweepArgs,
    TrainPolicyArgs,
};

struct Data {
    train: LabelState,
    truth: Option<GroundTruth>,
    test: Option<(LabelState, GroundTruth)>,
}

impl Data {
    fn test_ref(&self) -> Option<(&LabelState, &GroundTruth)> {
        self.test.as_ref().map(|(s, t)| (s, t))
    }
}

fn load_config(g: &Globals) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    if g.out.is_some() {
        cfg.out = g.out.clone();
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.out
        .clone()
        .ok_or_else(|| CliError::Config("an output directory is required (--out)".into()))
}

fn check_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("input file {} does not exist", path.display())))
    }
}

fn load_labelled(path: &Path) -> Result<(LabelState, GroundTruth), CliError> {
    let ds = read_dataset(path)?;
    let truth = ds.truth.ok_or_else(|| {
        CliError::Config(format!("{} has no true_label column", path.display()))
    })?;
    Ok((ds.state, truth))
}

/// Training data from the config's CSV, or the generated fixture.
fn load_data(cfg: &ExperimentConfig) -> Result<Data, CliError> {
    match &cfg.train_data {
        Some(path) => {
            let ds = read_dataset(path)?;
            let test = cfg.test_data.as_deref().map(load_labelled).transpose()?;
            Ok(Data {
                train: ds.state,
                truth: ds.truth,
                test,
            })
        }
        None => {
            let fx = cfg.fixture.build()?;
            let test = match &cfg.test_data {
                Some(path) => Some(load_labelled(path)?),
                None => Some((fx.test, fx.test_truth)),
            };
            Ok(Data {
                train: fx.train,
                truth: Some(fx.train_truth),
                test,
            })
        }
    }
}

fn apply_data_flag(cfg: &mut ExperimentConfig, data: &DataArgs) {
    if let Some(path) = &data.data {
        cfg.train_data = Some(path.clone());
    }
}

fn apply_ablations(cfg: &mut ExperimentConfig, names: &[String]) -> Result<(), CliError> {
    for name in names {
        cfg.train.ablations.enable(name)?;
    }
    Ok(())
}

fn load_net(path: &Path, what: &str, inputs: usize) -> Result<relabel_core::mlp::Mlp, CliError> {
    check_file(path)?;
    let net = read_params(path)?;
    if net.input_dim() != inputs {
        return Err(CliError::Config(format!(
            "{what} checkpoint {} expects {} inputs, data has {inputs}",
            path.display(),
            net.input_dim()
        )));
    }
    Ok(net)
}

pub fn generate(g: &Globals, a: &GenerateArgs) -> Result<(), CliError> {
    let out = g
        .out
        .clone()
        .ok_or_else(|| CliError::Config("generate needs --out FILE".into()))?;
    let fixture = BlobFixture {
        classes: a.classes,
        per_class: a.per_class,
        test_per_class: a.test_per_class,
        dim: a.dim,
        separation: a.separation,
        sigma: a.sigma,
        noise: a.noise,
        rate: a.rate,
        seed: g.seed.unwrap_or(0),
    };
    let fx = fixture.build()?;
    write_dataset(&out, &fx.train, Some(&fx.train_truth), false)?;
    if let Some(test_out) = &a.test_out {
        write_dataset(test_out, &fx.test, Some(&fx.test_truth), false)?;
    }
    log::info!("wrote {} rows to {}", fx.train.len(), out.display());
    Ok(())
}

pub fn pretrain(g: &Globals, a: &DataArgs) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    apply_data_flag(&mut cfg, a);
    cfg.validate()?;
    if cfg.train.warmup_epochs == 0 {
        return Err(CliError::Config("pretrain needs warmup_epochs >= 1".into()));
    }
    let out = out_dir(&cfg)?;
    ensure_dir(&out)?;
    output::write_config(&out, &cfg)?;
    let data = load_data(&cfg)?;
    let (theta, psi) = initial_networks(&cfg.train, data.train.feature_dim(), data.train.num_classes());
    let sup = cfg
        .train
        .supervised(cfg.train.warmup_epochs, derive_seed(cfg.train.seed, streams::PRETRAIN));
    let (theta, psi, loss) = warm_up_networks(&theta, &psi, &data.train, &sup)?;
    write_params(out.join("extractor.ckpt"), &theta)?;
    write_params(out.join("classifier.ckpt"), &psi)?;
    output::write_series(&out.join("pretrain_loss.csv"), ["epoch", "loss"], &loss)?;
    Ok(())
}

pub fn train_policy(g: &Globals, a: &TrainPolicyArgs) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    apply_data_flag(&mut cfg, &a.data);
    apply_ablations(&mut cfg, &a.ablate)?;
    cfg.validate()?;
    check_file(&a.extractor)?;
    if let Some(c) = &a.critic {
        check_file(c)?;
    }
    let out = out_dir(&cfg)?;
    ensure_dir(&out)?;
    output::write_config(&out, &cfg)?;
    let data = load_data(&cfg)?;
    let theta: ExtractorParams = load_net(&a.extractor, "extractor", data.train.feature_dim())?;
    let phi: CriticParams = match &a.critic {
        Some(path) => load_net(path, "critic", cfg.train.n_bins)?,
        None => initial_critic(&cfg.train),
    };
    let omega = freeze_copy(&theta);
    let (theta, phi, metrics) =
        relabel_core::trainer::train_policy(&cfg.train, &data.train, theta, omega, phi)?;
    write_params(out.join("policy.ckpt"), &theta)?;
    write_params(out.join("critic.ckpt"), &phi)?;
    output::write_rewards(&out, &metrics.rewards)?;
    Ok(())
}

pub fn clean(g: &Globals, a: &CleanArgs) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    apply_data_flag(&mut cfg, &a.data);
    cfg.validate()?;
    check_file(&a.extractor)?;
    let out = out_dir(&cfg)?;
    ensure_dir(&out)?;
    output::write_config(&out, &cfg)?;
    let data = load_data(&cfg)?;
    let theta = load_net(&a.extractor, "extractor", data.train.feature_dim())?;
    let deployment = deploy_cleaning(&theta, &data.train, &cfg.train)?;
    write_dataset(
        out.join("cleaned.csv"),
        deployment.final_state(),
        data.truth.as_ref(),
        true,
    )?;
    if let Some(truth) = &data.truth {
        output::write_correction_accuracy(&out, &deployment.accuracy_trace(truth)?)?;
    }
    Ok(())
}

pub fn finetune(g: &Globals, a: &FinetuneArgs) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    cfg.train_data = Some(a.data.clone());
    if let Some(t) = &a.test {
        cfg.test_data = Some(t.clone());
    }
    cfg.validate()?;
    check_file(&a.classifier)?;
    let out = out_dir(&cfg)?;
    ensure_dir(&out)?;
    output::write_config(&out, &cfg)?;
    let cleaned = read_dataset(&a.data)?.state;
    let theta = load_net(&a.extractor, "extractor", cleaned.feature_dim())?;
    let psi = load_net(&a.classifier, "classifier", theta.output_dim())?;
    let test = a.test.as_deref().map(load_labelled).transpose()?;
    let sup = cfg
        .train
        .supervised(cfg.train.finetune_epochs, derive_seed(cfg.train.seed, streams::FINETUNE));
    let (theta, psi, report) = finetune_classifier(
        &theta,
        &psi,
        &cleaned,
        &sup,
        test.as_ref().map(|(s, t)| (s, t)),
    )?;
    write_params(out.join("extractor_finetuned.ckpt"), &theta)?;
    write_params(out.join("classifier_finetuned.ckpt"), &psi)?;
    output::write_series(&out.join("finetune_loss.csv"), ["epoch", "loss"], &report.loss_history)?;
    output::write_final(&out, report.test_accuracy, &cfg)?;
    Ok(())
}

/// Headline numbers of one full run.
struct Summary {
    test_accuracy: Option<f64>,
    final_correction_accuracy: Option<f64>,
}

fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    ensure_dir(out)?;
    output::write_config(out, cfg)?;
    let data = load_data(cfg)?;
    let result = run_pipeline(&cfg.train, &data.train, data.truth.as_ref(), data.test_ref())?;
    let m = &result.metrics;
    output::write_rewards(out, &m.rewards)?;
    output::write_correction_accuracy(out, &m.correction_accuracy)?;
    output::write_final(out, m.test_accuracy, cfg)?;
    write_params(out.join("extractor_pretrained.ckpt"), &result.pretrained)?;
    write_params(out.join("policy.ckpt"), &result.policy)?;
    write_params(out.join("critic.ckpt"), &result.phi)?;
    write_params(out.join("extractor.ckpt"), &result.theta)?;
    write_params(out.join("classifier.ckpt"), &result.psi)?;
    write_dataset(
        out.join("cleaned.csv"),
        result.deployment.final_state(),
        data.truth.as_ref(),
        true,
    )?;
    for (phase, secs) in &m.timings {
        log::info!("{phase}: {secs:.2}s");
    }
    Ok(Summary {
        test_accuracy: m.test_accuracy,
        final_correction_accuracy: m.correction_accuracy.last().copied(),
    })
}

pub fn run(g: &Globals, a: &RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    apply_data_flag(&mut cfg, &a.data);
    if let Some(t) = &a.test {
        cfg.test_data = Some(t.clone());
    }
    apply_ablations(&mut cfg, &a.ablate)?;
    cfg.sweep = None;
    cfg.validate()?;
    let out = out_dir(&cfg)?;
    let s = run_experiment(&cfg, &out)?;
    if let Some(acc) = s.test_accuracy {
        println!("test_accuracy {acc}");
    }
    if let Some(acc) = s.final_correction_accuracy {
        println!("correction_accuracy {acc}");
    }
    Ok(())
}

fn read_column(path: &Path, column: usize, last: bool) -> Result<Option<f64>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut value = None;
    for rec in rdr.records() {
        let rec = rec?;
        value = rec.get(column).filter(|v| !v.is_empty()).map(str::to_owned);
        if !last {
            break;
        }
    }
    value
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad number in {}: {e}", path.display())))
        })
        .transpose()
}

fn run_child(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    ensure_dir(out)?;
    let config_path = out.join("config.json");
    std::fs::write(&config_path, cfg.resolved_json())?;
    let status = Process::new(std::env::current_exe()?)
        .arg("run")
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(out)
        .status()?;
    match status.code() {
        Some(0) => {}
        Some(3) => {
            return Err(Error::Divergence(format!("grid point in {} diverged", out.display())).into())
        }
        other => {
            return Err(CliError::Config(format!(
                "grid point in {} failed with status {other:?}",
                out.display()
            )))
        }
    }
    let correction = out.join(output::CORRECTION_ACCURACY);
    Ok(Summary {
        test_accuracy: read_column(&out.join(output::FINAL), 0, false)?,
        final_correction_accuracy: if correction.is_file() {
            read_column(&correction, 1, true)?
        } else {
            None
        },
    })
}

fn grid_label(v: &Value) -> String {
    v.to_string()
}

pub fn sweep(g: &Globals, a: &SweepArgs) -> Result<(), CliError> {
    let mut cfg = load_config(g)?;
    let mut spec = cfg.sweep.take().unwrap_or(SweepSpec {
        param: String::new(),
        values: Vec::new(),
        seeds: vec![cfg.train.seed],
    });
    if let Some(p) = &a.param {
        spec.param = p.clone();
    }
    if let Some(v) = &a.values {
        spec.values = parse_grid(v)?;
    }
    if let Some(s) = &a.seeds {
        spec.seeds = s.clone();
    }
    if spec.param.is_empty() {
        return Err(CliError::Config("sweep needs a parameter (--param)".into()));
    }
    if spec.values.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    if spec.seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one seed".into()));
    }
    cfg.validate()?;
    let points = spec
        .values
        .iter()
        .map(|v| with_param(&cfg.train, &spec.param, v).map(|t| (v, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let out = out_dir(&cfg)?;
    ensure_dir(&out)?;
    let mut resolved = cfg.clone();
    resolved.sweep = Some(spec.clone());
    output::write_config(&out, &resolved)?;

    let mut w = csv::Writer::from_path(out.join(output::SWEEP))?;
    w.write_record(["param", "value", "seed", "final_accuracy", "correction_accuracy_final"])?;
    for (value, train) in &points {
        for &seed in &spec.seeds {
            let mut point = cfg.clone();
            point.train = train.clone();
            point.set_seed(seed);
            point.out = None;
            let dir = out
                .join("points")
                .join(format!("{}={}", spec.param, grid_label(value)))
                .join(format!("seed={seed}"));
            log::info!("sweep point {}={} seed {seed}", spec.param, grid_label(value));
            let s = if a.processes {
                run_child(&point, &dir)?
            } else {
                run_experiment(&point, &dir)?
            };
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                spec.param.clone(),
                grid_label(value),
                seed.to_string(),
                fmt(s.test_accuracy),
                fmt(s.final_correction_accuracy),
            ])?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn eval(g: &Globals, a: &EvalArgs) -> Result<(), CliError> {
    check_file(&a.data)?;
    let (state, truth) = load_labelled(&a.data)?;
    let theta = load_net(&a.extractor, "extractor", state.feature_dim())?;
    let psi = load_net(&a.classifier, "classifier", theta.output_dim())?;
    let acc = classifier_accuracy(&theta, &psi, &state, &truth.labels)?;
    println!("accuracy {acc}");
    if let Some(out) = &g.out {
        ensure_dir(out)?;
        let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
        w.write_record(["accuracy", "instances"])?;
        w.write_record([acc.to_string(), state.len().to_string()])?;
        w.flush()?;
    }
    Ok(())
}
