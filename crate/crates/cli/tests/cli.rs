use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tamilnist::dataio::{read_idx, IdxNames, Manifest, MANIFEST_FILE};
use tamilnist::fontrender::{load_font, render_glyph, CLASSES};
use tamilnist::traineval::read_report;

fn fonts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fonts")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tamilnist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn one_font_dir(root: &Path) -> PathBuf {
    let dir = root.join("fonts");
    fs::create_dir_all(&dir).unwrap();
    fs::copy(fonts_dir().join("catamaran.ttf"), dir.join("catamaran.ttf")).unwrap();
    dir
}

fn generate(fonts: &Path, out: &Path, count: usize, extra: &[&str]) -> Output {
    let count = count.to_string();
    let mut args = vec!["generate", "--fonts-dir", p(fonts), "--out-dir", p(out), "--count", &count];
    args.extend_from_slice(extra);
    run(&args)
}

fn idx_files(dir: &Path) -> Vec<Vec<u8>> {
    [
        IdxNames::TRAIN_IMAGES,
        IdxNames::TRAIN_LABELS,
        IdxNames::TEST_IMAGES,
        IdxNames::TEST_LABELS,
    ]
    .iter()
    .map(|n| fs::read(dir.join(n)).unwrap())
    .collect()
}

#[test]
fn generate_one_font_writes_readable_idx_with_all_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let fonts = one_font_dir(tmp.path());
    let out = tmp.path().join("data");
    let o = generate(&fonts, &out, 130, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let train = read_idx(out.join(IdxNames::TRAIN_IMAGES), out.join(IdxNames::TRAIN_LABELS)).unwrap();
    let test = read_idx(out.join(IdxNames::TEST_IMAGES), out.join(IdxNames::TEST_LABELS)).unwrap();
    let mut counts = train.class_counts();
    for (c, n) in test.class_counts().iter().enumerate() {
        counts[c] += n;
    }
    assert!(counts.iter().all(|&n| n > 0), "{counts:?}");
    assert!(out.join(MANIFEST_FILE).exists());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["requested"], 130);
    assert!(summary["summary"]["per_font_retained"]["catamaran"].as_u64().unwrap() > 0);
    assert!(stdout(&o).contains("retained"));
}

#[test]
fn generate_is_bit_identical_and_manifest_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(generate(&fonts_dir(), &a, 520, &["--seed", "11"]).status.success());
    assert!(generate(&fonts_dir(), &b, 520, &["--seed", "11"]).status.success());
    assert_eq!(idx_files(&a), idx_files(&b));

    let manifest = a.join(MANIFEST_FILE);
    let o = run(&["generate", "--manifest", p(&manifest), "--out-dir", p(&c)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(idx_files(&a), idx_files(&c));
    assert_eq!(Manifest::load(&manifest).unwrap(), Manifest::load(c.join(MANIFEST_FILE)).unwrap());

    assert!(generate(&fonts_dir(), &b, 520, &["--seed", "12"]).status.success());
    assert_ne!(idx_files(&a), idx_files(&b));
}

#[test]
fn generate_without_usable_fonts_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let o = generate(&empty, &tmp.path().join("out"), 130, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no usable"));

    let latin = tmp.path().join("latin");
    fs::create_dir_all(&latin).unwrap();
    fs::copy(fonts_dir().join("testing/latin-only.ttf"), latin.join("latin-only.ttf")).unwrap();
    assert_eq!(generate(&latin, &tmp.path().join("out"), 130, &[]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let o = generate(&fonts_dir(), tmp.path(), 130, &["--rotate-fraction", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    let o = generate(&fonts_dir(), tmp.path(), 130, &["--class-scale", "zz=1.0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn train_eval_infer_inspect_round() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(generate(&fonts_dir(), &data, 260, &[]).status.success());

    for (model, count) in [("fc", "1,335,309"), ("cnn", "116,109")] {
        let ckpt = tmp.path().join(format!("{model}.tvnn"));
        let o = run(&[
            "train", "--data-dir", p(&data), "--model", model, "--epochs", "1", "--checkpoint", p(&ckpt),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains(&format!("{count} trainable parameters")), "{}", stdout(&o));
        let report = read_report(ckpt.with_extension("txt")).unwrap();
        assert_eq!(report.history.len(), 1);
        assert_eq!(report.config["train"]["seed"], 0);
        assert!(report.eval.is_some());
    }

    let ckpt = tmp.path().join("cnn.tvnn");
    let report_path = tmp.path().join("eval/report.txt");
    let o = run(&[
        "eval", "--checkpoint", p(&ckpt), "--data-dir", p(&data), "--report", p(&report_path),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&report_path).unwrap();
    assert!(text.contains("top-1 accuracy") && text.contains("top-2 accuracy"));
    let eval = read_report(&report_path).unwrap().eval.unwrap();
    assert!(eval.top2_accuracy >= eval.top1_accuracy);

    let o = run(&["inspect", "--checkpoint", p(&ckpt)]);
    assert!(stdout(&o).contains("116,109"));
    let o = run(&["inspect", "--data-dir", p(&data), "--split", "test", "--preview", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("magic 0x00000803"));
    assert!(stdout(&o).contains("#1 label"));
}

fn save_png(path: &Path, side: u32, f: impl Fn(u32, u32) -> u8) {
    image::GrayImage::from_fn(side, side, |x, y| image::Luma([f(x, y)]))
        .save(path)
        .unwrap();
}

/// 13 PNGs (one per class) made by upscaling rendered glyphs to 128×128.
fn handwritten_set(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let font = load_font(fonts_dir().join("kavivanar.ttf")).unwrap();
    for class in &CLASSES {
        let r = render_glyph(&font, class, 20, class.default_scale()).unwrap();
        let path = dir.join(format!("{:02}_{}.png", class.index, class.name));
        save_png(&path, 128, |x, y| 255 - r.get((y * 28 / 128) as usize, (x * 28 / 128) as usize));
    }
}

#[test]
fn handwritten_eval_and_infer() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(generate(&fonts_dir(), &data, 130, &[]).status.success());
    let ckpt = tmp.path().join("m.tvnn");
    let o = run(&["train", "--data-dir", p(&data), "--model", "fc", "--epochs", "1", "--checkpoint", p(&ckpt)]);
    assert!(o.status.success());

    let hw = tmp.path().join("hw");
    handwritten_set(&hw);
    let report_path = tmp.path().join("hw.txt");
    let o = run(&[
        "eval", "--checkpoint", p(&ckpt), "--handwritten-dir", p(&hw), "--invert", "--topk", "1,2,13",
        "--report", p(&report_path),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read_report(&report_path).unwrap().eval.unwrap();
    assert_eq!(eval.per_sample.len(), 13);
    assert_eq!(eval.topk.last().unwrap().accuracy, 1.0);
    let table_rows = stdout(&o).lines().filter(|l| l.contains(".png")).count();
    assert_eq!(table_rows, 13);
    let text = fs::read_to_string(&report_path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("00_a.png") || l.contains(".png\t")).count(), 13);

    let black = tmp.path().join("black.png");
    save_png(&black, 128, |_, _| 0);
    let o = run(&["infer", "--checkpoint", p(&ckpt), "--image", p(&black), "--json"]);
    assert!(o.status.success());
    let ranked: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(ranked.len(), 13);
    let probs: Vec<f64> = ranked.iter().map(|v| v["probability"].as_f64().unwrap()).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));

    let o = run(&["infer", "--checkpoint", p(&ckpt), "--image", p(&tmp.path().join("missing.png"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let small = tmp.path().join("small.png");
    save_png(&small, 20, |_, _| 0);
    let o = run(&["infer", "--checkpoint", p(&ckpt), "--image", p(&small)]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["eval", "--checkpoint", p(&tmp.path().join("nope.tvnn")), "--data-dir", p(&data)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_training_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(generate(&fonts_dir(), &data, 130, &[]).status.success());
    let o = run(&[
        "train", "--data-dir", p(&data), "--model", "fc", "--epochs", "20", "--lr", "1e30", "--checkpoint",
        p(&tmp.path().join("x.tvnn")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite loss"));
}

#[test]
fn results_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let data = tmp.path().join(format!("data{jobs}"));
        let o = run(&[
            "--jobs", jobs, "generate", "--fonts-dir", p(&fonts_dir()), "--out-dir", p(&data), "--count", "260",
        ]);
        assert!(o.status.success());
        let ckpt = tmp.path().join(format!("m{jobs}.tvnn"));
        let o = run(&[
            "--jobs", jobs, "train", "--data-dir", p(&data), "--model", "cnn", "--epochs", "2", "--batch-size", "40",
            "--checkpoint", p(&ckpt),
        ]);
        assert!(o.status.success());
        outputs.push((idx_files(&data), fs::read(&ckpt).unwrap(), read_report(ckpt.with_extension("txt")).unwrap().history));
    }
    assert_eq!(outputs[0], outputs[1]);
}
