use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tristream_core::checks::{run_gradient_checks, GradScope};
use tristream_core::dataio::{
    default_class_names, load_dataset, load_sample_dir, prepare_splits, synthesize_gestures, write_dataset, Dataset,
    GestureSample, PreparedSplits, SynthConfig,
};
use tristream_core::model::{load_checkpoint, save_checkpoint, ModelInput, ThreeStreamModel};
use tristream_core::traineval::{
    compute_metrics, evaluate, fusion_margin, render_text, report, run_ablation, train_with, ConfusionMatrix,
    ReportFormat, TrainHistory, ABLATION_SUBSETS,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::SplitChoice;

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.tsv";
pub const ABLATION_FILE: &str = "ablation.tsv";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn synth(cfg: &SynthConfig, out: &Path) -> CliResult<()> {
    let ds = synthesize_gestures(cfg)?;
    let manifest = write_dataset(&ds, out)?;
    for (name, n) in ds.class_names.iter().zip(ds.class_counts()) {
        println!("{name}\t{n}");
    }
    println!("wrote {} samples to {}", manifest.len(), out.display());
    Ok(())
}

fn load_run_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let root = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Data("no dataset given: set `data` or pass --data".into()))?;
    let ds = load_dataset(root, cfg.geometry())?;
    match ds.frames_per_sample() {
        Some(t) if t == cfg.frames => Ok(ds),
        Some(t) => Err(CliError::Data(format!("dataset has {t} frames per sample, config expects {}", cfg.frames))),
        None => Err(CliError::Data("dataset is empty".into())),
    }
}

fn splits(cfg: &RunConfig, ds: &Dataset) -> CliResult<PreparedSplits> {
    Ok(prepare_splits(ds, &cfg.split_spec(), &cfg.augment_config(), cfg.seed)?)
}

fn accuracy_text(cm: &ConfusionMatrix) -> String {
    cm.accuracy().map_or("n/a".into(), |a| format!("{a:.2}%"))
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    create_dir(&cfg.out)?;
    cfg.echo(&cfg.out)?;
    let ds = load_run_dataset(cfg)?;
    let prepared = splits(cfg, &ds)?;
    let c = prepared.counts;
    println!(
        "samples: {} original, {} after flip; train {} ({} before augmentation), val {}, test {}",
        c.originals, c.after_flip, c.train, c.train_before_augment, c.val, c.test
    );

    let history_path = cfg.out.join(HISTORY_FILE);
    let (model, first_epoch, mut history) = match &cfg.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let mc = ckpt.model.config();
            if mc.classes != ds.num_classes() || mc.geometry != cfg.geometry() || mc.frames != cfg.frames {
                return Err(CliError::Data(format!(
                    "checkpoint {} does not match the dataset/config (classes, geometry or frames differ)",
                    path.display()
                )));
            }
            let history = match fs::read_to_string(&history_path) {
                Ok(text) => {
                    let mut h = TrainHistory::parse_tsv(&text)?;
                    h.records.retain(|r| r.epoch <= ckpt.epoch);
                    h
                }
                Err(_) => TrainHistory::default(),
            };
            (ckpt.model, ckpt.epoch, history)
        }
        None => (ThreeStreamModel::init(cfg.model_config(ds.num_classes())?, cfg.seed)?, 0, TrainHistory::default()),
    };

    let outcome = train_with(model, &prepared.train.samples, &prepared.val.samples, &cfg.train_config()?, first_epoch, |r| {
        let val = match (r.val_loss, r.val_accuracy) {
            (Some(l), Some(a)) => format!("\tval_loss {l:.4}\tval_acc {a:.2}"),
            _ => String::new(),
        };
        println!("epoch {}\tloss {:.4}\tacc {:.2}{val}", r.epoch, r.train_loss, r.train_accuracy);
    })?;
    let last_epoch = outcome.history.records.last().map_or(first_epoch, |r| r.epoch);
    history.records.extend(outcome.history.records.iter().cloned());
    history.save(&history_path)?;
    save_checkpoint(cfg.out.join(CHECKPOINT_FILE), &outcome.model, last_epoch)?;
    println!("stopped: {:?} after epoch {last_epoch}", outcome.stop);
    if let Some(best) = outcome.best_epoch {
        println!("kept parameters of epoch {best}");
    }
    if !prepared.test.is_empty() {
        println!("test accuracy: {}", accuracy_text(&evaluate(&outcome.model, &prepared.test.samples)?));
    }
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn confusion_tsv(cm: &ConfusionMatrix, names: &[String]) -> String {
    let mut out = format!("truth\\predicted\t{}\n", names.join("\t"));
    for (name, row) in names.iter().zip(cm.counts()) {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(out, "{name}\t{}", cells.join("\t")).expect("write to string");
    }
    out
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, split: SplitChoice, ablation: bool) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mc = ckpt.model.config().clone();
    let root = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Data("no dataset given: set `data` or pass --data".into()))?;
    let ds = load_dataset(root, mc.geometry)?;
    if ds.num_classes() != mc.classes {
        return Err(CliError::Data(format!(
            "checkpoint predicts {} classes, dataset has {}",
            mc.classes,
            ds.num_classes()
        )));
    }
    let prepared = match split {
        SplitChoice::All if !ablation => None,
        _ => Some(splits(cfg, &ds)?),
    };
    let samples: &[GestureSample] = match (split, &prepared) {
        (SplitChoice::All, _) => &ds.samples,
        (SplitChoice::Train, Some(p)) => &p.train.samples,
        (SplitChoice::Val, Some(p)) => &p.val.samples,
        (SplitChoice::Test, Some(p)) => &p.test.samples,
        _ => unreachable!("splits are prepared for every choice but All"),
    };
    if samples.is_empty() {
        return Err(CliError::Data("evaluation set is empty".into()));
    }
    let cm = evaluate(&ckpt.model, samples)?;
    let metrics = compute_metrics(&cm, &ds.class_names)?;
    create_dir(&cfg.out)?;
    cfg.echo(&cfg.out)?;
    write(&cfg.out.join(REPORT_TEXT_FILE), &render_text(&metrics))?;
    write(&cfg.out.join(REPORT_JSON_FILE), &report(&metrics, ReportFormat::Json)?)?;
    write(&cfg.out.join(CONFUSION_FILE), &confusion_tsv(&cm, &ds.class_names))?;
    print!("{}", render_text(&metrics));

    if let Some(p) = prepared.filter(|_| ablation) {
        println!("ablation (test accuracy, percent):");
        let rows = run_ablation(
            &mc,
            cfg.seed,
            &p.train.samples,
            &p.val.samples,
            &p.test.samples,
            &cfg.train_config()?,
            &ABLATION_SUBSETS,
            |row| println!("  streams {:?}\t{:.2}", row.streams, row.accuracy),
        )?;
        let mut text = String::from("streams\taccuracy\n");
        for r in &rows {
            let s: Vec<String> = r.streams.iter().map(usize::to_string).collect();
            writeln!(text, "{}\t{:.4}", s.join(","), r.accuracy).expect("write to string");
        }
        write(&cfg.out.join(ABLATION_FILE), &text)?;
        if let Some(m) = fusion_margin(&rows) {
            let verdict = if m >= -2.0 { "within 2 points of or above" } else { "more than 2 points below" };
            println!("fused model is {verdict} the best single stream ({m:+.2})");
        }
    }
    Ok(())
}

fn read_class_names(path: Option<&Path>, classes: usize) -> CliResult<Vec<String>> {
    let names: Vec<String> = match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => default_class_names(),
    };
    if names.len() < classes {
        return Err(CliError::Data(format!("{} class names for a {classes}-class model", names.len())));
    }
    Ok(names.into_iter().take(classes).collect())
}

pub fn predict(checkpoint: &Path, sample_dir: &Path, classes: Option<&Path>) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mc = ckpt.model.config();
    let names = read_class_names(classes, mc.classes)?;
    let sample = load_sample_dir(sample_dir, mc.geometry, 0, "unknown")?;
    if sample.len() != mc.frames {
        return Err(CliError::Data(format!("sample has {} frames, model expects {}", sample.len(), mc.frames)));
    }
    let probs = ckpt.model.predict(&ModelInput::from_sample(&sample))?;
    let best = tristream_core::traineval::argmax(&probs);
    println!("prediction\t{}\t{:.6}", names[best], probs[best]);
    for (name, p) in names.iter().zip(&probs) {
        println!("{name}\t{p:.12}");
    }
    Ok(())
}

pub fn gradcheck(scope: GradScope, seed: u64) -> CliResult<()> {
    let results = run_gradient_checks(scope, seed)?;
    println!("suite\tparameter\trel_error\tmax_element_error\tresult");
    let mut failed = 0;
    for (suite, rep) in &results {
        for p in &rep.params {
            println!(
                "{suite}\t{}\t{:.3e}\t{:.3e}\t{}",
                p.name,
                p.rel_error,
                p.max_element_rel_error,
                if p.passed { "pass" } else { "FAIL" }
            );
        }
        failed += rep.failures().count();
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} parameter tensor(s) failed the gradient check")));
    }
    println!("all {} suites passed", results.len());
    Ok(())
}
