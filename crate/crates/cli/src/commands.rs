use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use tamilnist::augment::AugmentPolicy;
use tamilnist::dataio::{
    generate_dataset, generate_from_manifest, load_gray, load_handwritten_dir, manifest_for, normalize_handwritten,
    read_idx, split, write_idx, DataError, Dataset, GenerateParams, IdxNames, Manifest, OverflowParams, SplitParams,
    MANIFEST_FILE,
};
use tamilnist::fontrender::{default_class_scales, FontRegistry, GlyphClass, NUM_CLASSES};
use tamilnist::nn::{checkpoint, ModelSpec, Network};
use tamilnist::traineval::{
    evaluate_topk, rank_classes, rasters_to_tensor, train_with_observer, write_report, RunReport, TrainConfig,
};

use crate::{EvalArgs, GenerateArgs, InferArgs, InspectArgs, TrainArgs};

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";

/// A flag value that parses but makes no sense.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::error::Error for UsageError {}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1335309 → "1,335,309".
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn class_label(c: usize) -> String {
    GlyphClass::by_index(c).map_or(format!("#{c}"), |g| format!("{} ({})", g.codepoint, g.name))
}

fn parse_class_scales(specs: &[String]) -> Result<Vec<f64>> {
    let mut scales = default_class_scales();
    for spec in specs {
        let (class, value) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--class-scale expects CLASS=SCALE, got '{spec}'")))?;
        let class = GlyphClass::parse(class.trim()).ok_or_else(|| usage(format!("unknown class '{class}'")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad scale '{value}' in --class-scale")))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(usage(format!("class scale must be positive, got {value}")));
        }
        scales[class.index as usize] = value;
    }
    Ok(scales)
}

fn idx_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    if train {
        (dir.join(IdxNames::TRAIN_IMAGES), dir.join(IdxNames::TRAIN_LABELS))
    } else {
        (dir.join(IdxNames::TEST_IMAGES), dir.join(IdxNames::TEST_LABELS))
    }
}

fn load_split(dir: &Path, train: bool) -> Result<Dataset> {
    let (images, labels) = idx_paths(dir, train);
    read_idx(&images, &labels).with_context(|| format!("reading {}", images.display()))
}

fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let (ds, summary, manifest) = match &a.manifest {
        Some(path) => {
            let manifest = Manifest::load(path)?;
            let (ds, summary) = generate_from_manifest(&manifest, a.fonts_dir.as_deref())?;
            (ds, summary, manifest)
        }
        None => {
            let fonts_dir = a.fonts_dir.as_deref().expect("clap requires --fonts-dir");
            let registry = FontRegistry::load_dir(fonts_dir)?;
            if registry.is_empty() {
                return Err(DataError::NoUsableFonts.into());
            }
            let params = GenerateParams {
                n_total: a.count,
                target_ink_height: a.ink_height,
                class_scales: parse_class_scales(&a.class_scales)?,
                overflow: OverflowParams {
                    border_width: a.border_width,
                    ink_threshold: a.overflow_threshold,
                },
                policy: AugmentPolicy {
                    frac_rotate_only: a.rotate_fraction,
                    frac_rotate_translate: a.rotate_translate_fraction,
                    max_angle_deg: a.max_angle,
                    max_shift_px: a.max_shift,
                    seed: a.seed,
                },
            };
            let split_params = SplitParams {
                train_fraction: a.train_fraction,
                seed: a.seed,
            };
            let manifest = manifest_for(fonts_dir, registry.fonts(), &params, split_params);
            let (ds, summary) = generate_dataset(registry.fonts(), &GlyphClass::all(), &params)?;
            (ds, summary, manifest)
        }
    };
    let (train, test) = split(&ds, manifest.split.train_fraction, manifest.split.seed)?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (ti, tl) = idx_paths(&a.out_dir, true);
    write_idx(&train, ti, tl)?;
    let (vi, vl) = idx_paths(&a.out_dir, false);
    write_idx(&test, vi, vl)?;
    manifest.save(a.out_dir.join(MANIFEST_FILE))?;

    let summary_json = json!({
        "summary": summary,
        "train_samples": train.len(),
        "test_samples": test.len(),
        "train_class_counts": train.class_counts(),
        "test_class_counts": test.class_counts(),
    });
    let path = a.out_dir.join(SUMMARY_JSON);
    fs::write(&path, serde_json::to_string_pretty(&summary_json)?).with_context(|| format!("writing {}", path.display()))?;

    let mut text = format!(
        "requested {}\nretained {} ({:.2}%)\ntrain {} / test {}\n",
        summary.requested,
        summary.retained,
        100.0 * summary.retained_fraction,
        train.len(),
        test.len()
    );
    text.push_str("\nper class (drawn -> retained):\n");
    for (c, (d, r)) in summary.per_class_drawn.iter().zip(&summary.per_class_retained).enumerate() {
        text.push_str(&format!("  {:<12} {d:>6} -> {r:>6}\n", class_label(c)));
    }
    text.push_str("\nper font (retained):\n");
    for (font, n) in &summary.per_font_retained {
        text.push_str(&format!("  {font:<20} {n:>6}\n"));
    }
    text.push_str("\nper transform (assigned -> retained):\n");
    for (kind, n) in &summary.per_kind_drawn {
        let kept = summary.per_kind_retained.get(kind).copied().unwrap_or(0);
        text.push_str(&format!("  {kind:<20} {n:>6} -> {kept:>6}\n"));
    }
    for (font, missing) in &summary.missing_coverage {
        text.push_str(&format!("\nfont {font} lacks: {}\n", missing.join(", ")));
    }
    let path = a.out_dir.join(SUMMARY_TXT);
    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");
    println!("wrote {}", a.out_dir.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        kind: a.model,
        batch_size: a.batch_size,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        patience: a.patience,
    };
    cfg.validate()?;
    let train_ds = load_split(&a.data_dir, true)?;
    let val_ds = load_split(&a.data_dir, false)?;

    let spec = ModelSpec::for_kind(a.model);
    let network = Network::<f32>::init(spec.clone(), a.seed)?;
    let per_layer: Vec<String> = spec.layer_param_counts()?.iter().map(|&n| thousands(n)).collect();
    println!(
        "model {}: {} trainable parameters ({})",
        a.model,
        thousands(network.param_count()),
        per_layer.join(" / ")
    );
    println!("train {} samples, validation {} samples", train_ds.len(), val_ds.len());

    let checkpoint_path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| a.data_dir.join(format!("{}.tvnn", a.model)));
    let report_path = a.report.clone().unwrap_or_else(|| checkpoint_path.with_extension("txt"));
    if let Some(parent) = checkpoint_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }

    let outcome = train_with_observer(network, &train_ds, Some(&val_ds), &cfg, Some(&checkpoint_path), |r| {
        println!(
            "epoch {:>3}  loss {:.5}  train_acc {:.4}  val_acc {:.4}",
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            r.val_accuracy.unwrap_or(f64::NAN)
        );
    })?;
    let eval = evaluate_topk(&outcome.network, &val_ds, &[1, 2])?;
    println!(
        "validation top-1 {:.4}, top-2 {:.4}",
        eval.top1_accuracy, eval.top2_accuracy
    );

    let report = RunReport {
        config: json!({
            "command": "train",
            "data_dir": a.data_dir,
            "train": cfg,
            "model": spec,
            "param_count": outcome.network.param_count(),
            "train_samples": train_ds.len(),
            "val_samples": val_ds.len(),
            "initial_loss": outcome.initial_loss,
            "steps": outcome.steps,
            "checkpoint": checkpoint_path,
            "dataset_manifest": a.data_dir.join(MANIFEST_FILE),
        }),
        history: outcome.history,
        eval: Some(eval),
    };
    write_report(&report, &report_path)?;
    println!("checkpoint {}", checkpoint_path.display());
    println!("report {}", report_path.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if let Some(&k) = a.topk.iter().find(|&&k| k == 0 || k > NUM_CLASSES) {
        return Err(usage(format!("--topk values must be in 1..={NUM_CLASSES}, got {k}")));
    }
    let network = load_checkpoint(&a.checkpoint)?;
    let (ds, names, source) = match (&a.data_dir, &a.handwritten_dir) {
        (Some(dir), _) => (load_split(dir, false)?, None, dir),
        (None, Some(dir)) => {
            let (ds, names) = load_handwritten_dir(dir, a.invert)?;
            (ds, Some(names), dir)
        }
        (None, None) => unreachable!("clap requires a data source"),
    };
    let mut report = evaluate_topk(&network, &ds, &a.topk)?;
    if let Some(names) = names {
        for (p, name) in report.per_sample.iter_mut().zip(names) {
            p.name = Some(name);
        }
        println!("{:<24} {:<12} {:<12} {:>6}  top-2", "image", "true", "predicted", "prob");
        for p in &report.per_sample {
            let (pred, prob) = p.ranked[0];
            let second = class_label(p.ranked[1].0);
            println!(
                "{:<24} {:<12} {:<12} {:>6.3}  {second}{}",
                p.name.as_deref().unwrap_or("-"),
                class_label(p.true_label),
                class_label(pred),
                prob,
                if p.is_correct() { "" } else { "  MISCLASSIFIED" }
            );
        }
    }
    println!("n = {}", report.n);
    for t in &report.topk {
        println!("top-{} accuracy {:.4}", t.k, t.accuracy);
    }

    let report_path = a.report.clone().unwrap_or_else(|| a.checkpoint.with_extension("eval.txt"));
    let run = RunReport {
        config: json!({
            "command": "eval",
            "checkpoint": a.checkpoint,
            "source": source,
            "handwritten": a.handwritten_dir.is_some(),
            "invert": a.invert,
            "topk": a.topk,
            "model": network.spec(),
        }),
        history: Vec::new(),
        eval: Some(report),
    };
    write_report(&run, &report_path)?;
    println!("report {}", report_path.display());
    Ok(())
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let network = load_checkpoint(&a.checkpoint)?;
    let image = load_gray(&a.image)?;
    let raster = normalize_handwritten(&image, a.invert)?;
    let input = rasters_to_tensor::<f32>([&raster], network.spec().kind);
    let probs = network.predict(&input)?;
    let row = probs.row(0);
    let ranked = rank_classes(row);
    if a.json {
        let list: Vec<_> = ranked
            .iter()
            .map(|&c| {
                let g = GlyphClass::by_index(c);
                json!({
                    "class": c,
                    "letter": g.map(|g| g.codepoint.to_string()),
                    "name": g.map(|g| g.name),
                    "probability": row[c],
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&list)?);
    } else {
        for (rank, &c) in ranked.iter().enumerate() {
            println!("{:>2}  {:<12} {:.6}", rank + 1, class_label(c), row[c]);
        }
    }
    Ok(())
}

fn read_header(path: &Path, len: usize) -> Result<Vec<u32>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() < len * 4 {
        bail!("{} is too short for an IDX header", path.display());
    }
    Ok(bytes[..len * 4]
        .chunks(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    if let Some(path) = &a.checkpoint {
        let network = load_checkpoint(path)?;
        let spec = network.spec();
        println!("checkpoint {}", path.display());
        println!("model {}", spec.kind);
        for ((layer, shape), count) in spec
            .layers
            .iter()
            .zip(spec.shape_chain()?.iter().skip(1))
            .zip(spec.layer_param_counts()?)
        {
            println!("  {:<28} {:<16} {:>10}", format!("{layer:?}"), format!("{shape:?}"), thousands(count));
        }
        println!("total {} trainable parameters", thousands(network.param_count()));
    }
    let Some(dir) = &a.data_dir else {
        return Ok(());
    };
    let train = a.split == "train";
    let (images, labels) = idx_paths(dir, train);
    let ih = read_header(&images, 4)?;
    let lh = read_header(&labels, 2)?;
    println!(
        "{}: magic 0x{:08x}, {} images of {}x{}",
        images.display(),
        ih[0],
        ih[1],
        ih[2],
        ih[3]
    );
    println!("{}: magic 0x{:08x}, {} labels", labels.display(), lh[0], lh[1]);

    let ds = load_split(dir, train)?;
    println!("class counts:");
    for (c, n) in ds.class_counts().iter().enumerate() {
        println!("  {:<12} {n}", class_label(c));
    }
    for (i, sample) in ds.samples.iter().enumerate().skip(a.start).take(a.preview) {
        println!("\n#{i} label {}", class_label(sample.label as usize));
        print!("{}", sample.image.to_ascii());
    }
    Ok(())
}
