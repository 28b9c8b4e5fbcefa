use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use murmur_core::dataset::{
    class_counts, generate_synthetic, ingest_circor, ingest_manifest, read_embeddings, stratified_split,
    synthetic_embeddings, write_embedding_index, write_embeddings, Fold, MurmurLabel, PatientRecord,
    SplitAssignment, SyntheticSpec, DEFAULT_FRACTIONS,
};
use murmur_core::eval::{
    ensemble_two, read_predictions, write_predictions, MetricsReport, PatientRule, PredictionRecord, ReportFile,
};
use murmur_core::features::MelConfig;
use murmur_core::nn::{gradcheck, Checkpoint};
use murmur_core::train::{
    logmel_embeddings, predict_recordings, score_predictions, train_one, FeatureSource, FeatureStore, TrainConfig,
};
use murmur_core::Error;

use crate::{Cli, Command, DataArgs, FoldArg, GradBackbone, RuleArg};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Split { data, seed, out } => split(cli, data, *seed, out),
        Command::Featurize { data, out, index } => featurize(data, out, index.as_deref()),
        Command::Train {
            config,
            split,
            data,
            features,
            outdir,
        } => train(cli, config, split, data, features, outdir),
        Command::Evaluate {
            checkpoint,
            split,
            data,
            features,
            fold,
            rule,
            out,
            report,
        } => evaluate(cli, checkpoint, split, data, features, *fold, *rule, out, report.as_deref()),
        Command::Ensemble {
            runs_a,
            runs_b,
            runs_per_model,
            data,
            out,
            report,
        } => ensemble(cli, runs_a, runs_b, *runs_per_model, data, out, report.as_deref()),
        Command::Report { runs, out, name } => report(cli, runs, out.as_deref(), name),
        Command::Synth {
            out,
            patients_per_class,
            recordings_per_patient,
            seed,
            embeddings,
            dim,
            separation,
        } => synth(
            out,
            SyntheticSpec {
                patients_per_class: *patients_per_class,
                recordings_per_patient: *recordings_per_patient,
                seed: *seed,
            },
            embeddings.as_deref(),
            *dim,
            *separation,
        ),
        Command::Gradcheck { configs, seed, backbone } => grad(cli, *configs, *seed, *backbone),
    }
}

fn load_patients(data: &DataArgs) -> Result<Vec<PatientRecord>> {
    match (&data.data_dir, &data.manifest) {
        (Some(dir), None) => {
            let ingested = ingest_circor(dir)?;
            for w in &ingested.warnings {
                log::warn!("{w}");
            }
            Ok(ingested.patients)
        }
        (None, Some(manifest)) => Ok(ingest_manifest(manifest)?),
        _ => Err(CliError::Usage("give exactly one of --data-dir or --manifest".into())),
    }
}

enum Features {
    LogMel,
    Embeddings(PathBuf),
}

fn parse_features(s: &str) -> Result<Features> {
    match s.split_once(':') {
        None if s == "logmel" => Ok(Features::LogMel),
        Some(("embeddings", path)) if !path.is_empty() => Ok(Features::Embeddings(PathBuf::from(path))),
        _ => Err(CliError::Usage(format!(
            "--features must be `logmel` or `embeddings:PATH`, got {s:?}"
        ))),
    }
}

fn feature_source(features: &Features) -> Result<FeatureSource> {
    Ok(match features {
        Features::LogMel => FeatureSource::LogMel(MelConfig::default()),
        Features::Embeddings(path) => FeatureSource::Embeddings(read_embeddings(path)?),
    })
}

fn fold_of(f: FoldArg) -> Fold {
    match f {
        FoldArg::Train => Fold::Train,
        FoldArg::Validation => Fold::Validation,
        FoldArg::Test => Fold::Test,
    }
}

fn rule_of(r: RuleArg) -> PatientRule {
    match r {
        RuleArg::Decision => PatientRule::Decision,
        RuleArg::ProbAverage => PatientRule::ProbAverage,
    }
}

/// Patients assigned to any fold of `split`, after checking the split against
/// the dataset.
fn split_patients(split: &SplitAssignment, patients: Vec<PatientRecord>) -> Result<Vec<PatientRecord>> {
    split.validate(&patients)?;
    let wanted: std::collections::BTreeSet<&String> =
        split.train.iter().chain(&split.validation).chain(&split.test).collect();
    Ok(patients.into_iter().filter(|p| wanted.contains(&p.patient_id)).collect())
}

fn print_report(cli: &Cli, name: &str, report: &ReportFile) -> Result<()> {
    if cli.json {
        println!("{}", serde_json::to_string_pretty(report).map_err(Error::from)?);
    } else if !cli.quiet {
        print!("{}", report.table(name));
    }
    Ok(())
}

fn split(cli: &Cli, data: &DataArgs, seed: u64, out: &Path) -> Result<()> {
    let patients = load_patients(data)?;
    let split = stratified_split(&patients, seed, DEFAULT_FRACTIONS)?;
    split.write(out)?;
    let mut summary = BTreeMap::new();
    for (name, fold) in [("train", Fold::Train), ("validation", Fold::Validation), ("test", Fold::Test)] {
        let counts = class_counts(split.select(fold, &patients)?);
        summary.insert(name, counts);
    }
    if cli.json {
        let v: BTreeMap<&str, BTreeMap<&str, usize>> = summary
            .iter()
            .map(|(fold, c)| {
                let per: BTreeMap<&str, usize> =
                    MurmurLabel::ALL.iter().map(|l| (l.name(), c[l.index()])).collect();
                (*fold, per)
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    } else if !cli.quiet {
        println!("{:<10}  {:>7}  {:>7}  {:>6}  {:>5}", "fold", "Present", "Unknown", "Absent", "total");
        for name in ["train", "validation", "test"] {
            let c = summary[name];
            println!(
                "{name:<10}  {:>7}  {:>7}  {:>6}  {:>5}",
                c[0],
                c[1],
                c[2],
                c.iter().sum::<usize>()
            );
        }
    }
    Ok(())
}

fn featurize(data: &DataArgs, out: &Path, index: Option<&Path>) -> Result<()> {
    let patients = load_patients(data)?;
    let set = logmel_embeddings(&patients, MelConfig::default())?;
    write_embeddings(&set, out)?;
    if let Some(index) = index {
        write_embedding_index(&set, index)?;
    }
    log::info!("wrote {} segment vectors of dimension {} to {}", set.len(), set.dim(), out.display());
    Ok(())
}

fn train(cli: &Cli, config: &Path, split: &Path, data: &DataArgs, features: &str, outdir: &Path) -> Result<()> {
    let features = parse_features(features)?;
    let config = TrainConfig::load(config)?;
    let split = SplitAssignment::read(split)?;
    let patients = split_patients(&split, load_patients(data)?)?;
    let source = feature_source(&features)?;

    let store = FeatureStore::build(&patients, &source, config.augments())?;
    let result = train_one(&config, &split, &patients, &store)?;
    result.write(outdir)?;
    let config_path = outdir.join("config.txt");
    std::fs::write(&config_path, config.to_text()).map_err(|e| Error::Io {
        path: config_path.clone(),
        source: e,
    })?;
    log::info!(
        "best epoch {} (validation {:.4}); run written to {}",
        result.checkpoint.epoch,
        result.checkpoint.validation_metric,
        outdir.display()
    );
    print_report(cli, "test", &ReportFile::from(&result.test_report))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cli: &Cli,
    checkpoint: &Path,
    split: &Path,
    data: &DataArgs,
    features: &str,
    fold: FoldArg,
    rule: RuleArg,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<()> {
    let features = parse_features(features)?;
    let ck = Checkpoint::load(checkpoint)?;
    let split = SplitAssignment::read(split)?;
    let patients = split_patients(&split, load_patients(data)?)?;
    let source = feature_source(&features)?;
    let fold_patients = split.select(fold_of(fold), &patients)?;
    if fold_patients.is_empty() {
        return Err(Error::Precondition("requested fold is empty".into()).into());
    }
    let owned: Vec<PatientRecord> = fold_patients.iter().map(|p| (*p).clone()).collect();
    let store = FeatureStore::build(&owned, &source, false)?;
    let preds = predict_recordings(&ck.model, &store, &fold_patients)?;
    let report = score_predictions(&preds, &fold_patients, rule_of(rule))?;

    write_predictions(&preds, out)?;
    let file = ReportFile::from(&report);
    if let Some(path) = report_path {
        file.write(path)?;
    }
    print_report(cli, &rule_of(rule).to_string(), &file)
}

/// A run directory stands for the named file inside it.
fn resolve(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

fn ensemble(
    cli: &Cli,
    runs_a: &[PathBuf],
    runs_b: &[PathBuf],
    per_model: usize,
    data: &DataArgs,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<()> {
    for (side, runs) in [("--runs-a", runs_a), ("--runs-b", runs_b)] {
        if runs.len() != per_model {
            return Err(CliError::Usage(format!(
                "{side} needs {per_model} prediction sets, got {}",
                runs.len()
            )));
        }
    }
    let read = |paths: &[PathBuf]| -> Result<Vec<Vec<PredictionRecord>>> {
        paths
            .iter()
            .map(|p| Ok(read_predictions(resolve(p, "test_predictions.json"))?))
            .collect()
    };
    let a = read(runs_a)?;
    let b = read(runs_b)?;
    let patients = load_patients(data)?;
    let preds = ensemble_two(&a, &b)?;
    let scored: std::collections::BTreeSet<&str> = preds.iter().map(|p| p.patient_id.as_str()).collect();
    let fold: Vec<&PatientRecord> = patients.iter().filter(|p| scored.contains(p.patient_id.as_str())).collect();
    let report: MetricsReport = score_predictions(&preds, &fold, PatientRule::Decision)?;

    write_predictions(&preds, out)?;
    let file = ReportFile::from(&report);
    if let Some(path) = report_path {
        file.write(path)?;
    }
    print_report(cli, "ensemble", &file)
}

fn report(cli: &Cli, runs: &[PathBuf], out: Option<&Path>, name: &str) -> Result<()> {
    let reports = runs
        .iter()
        .map(|p| ReportFile::read(resolve(p, "report.json")))
        .collect::<murmur_core::Result<Vec<_>>>()?;
    let configs: Vec<(String, String)> = runs
        .iter()
        .filter(|p| p.is_dir())
        .filter_map(|p| {
            std::fs::read_to_string(p.join("config.txt"))
                .ok()
                .map(|c| (p.display().to_string(), c))
        })
        .collect();
    if let Some((first_dir, first)) = configs.first() {
        for (dir, c) in &configs[1..] {
            // Runs of one protocol differ only in their seed.
            let strip = |s: &str| s.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n");
            if strip(c) != strip(first) {
                log::warn!("{dir} was trained with a different config than {first_dir}");
            }
        }
    }
    let mean = ReportFile::mean(&reports)?;
    if let Some(out) = out {
        mean.write(out)?;
    }
    print_report(cli, name, &mean)
}

fn synth(out: &Path, spec: SyntheticSpec, embeddings: Option<&Path>, dim: usize, separation: f32) -> Result<()> {
    if embeddings.is_some() && dim < 3 {
        return Err(CliError::Usage("--dim must be at least 3".into()));
    }
    let patients = generate_synthetic(&spec, out)?;
    log::info!(
        "wrote {} patients ({} recordings each) to {}",
        patients.len(),
        spec.recordings_per_patient,
        out.display()
    );
    if let Some(path) = embeddings {
        let set = synthetic_embeddings(&patients, dim, separation, spec.seed)?;
        write_embeddings(&set, path)?;
        log::info!("wrote {} synthetic embeddings to {}", set.len(), path.display());
    }
    Ok(())
}

fn grad(cli: &Cli, configs: usize, seed: u64, backbone: GradBackbone) -> Result<()> {
    let with_hidden = match backbone {
        GradBackbone::Head => Some(false),
        GradBackbone::Mlp => Some(true),
        GradBackbone::Mixed => None,
    };
    let r = gradcheck(configs, seed, with_hidden)?;
    if cli.json {
        let v = serde_json::json!({
            "configs": r.cases.len(),
            "rejected": r.rejected,
            "max_rel_error": r.max_rel_error,
            "passed": r.passed(),
        });
        println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    } else if !cli.quiet {
        println!(
            "{} configurations ({} redrawn), max relative error {:.3e}",
            r.cases.len(),
            r.rejected,
            r.max_rel_error
        );
    }
    if r.passed() {
        Ok(())
    } else {
        Err(Error::Numerics(format!("max relative error {:.3e} exceeds 1e-4", r.max_rel_error)).into())
    }
}
