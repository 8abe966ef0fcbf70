use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpochRecord, EvalReport, TrainError};
use crate::fontrender::GlyphClass;

/// Extension of the machine-readable sidecar written next to the text report.
pub const JSON_EXTENSION: &str = "json";

/// Everything a run produced: the resolved configuration, per-epoch
/// history (empty for eval-only runs) and an optional evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub eval: Option<EvalReport>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension(JSON_EXTENSION)
}

fn class_label(c: usize) -> String {
    match GlyphClass::by_index(c) {
        Some(g) => format!("{} ({})", g.codepoint, g.name),
        None => format!("#{c}"),
    }
}

fn render_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# configuration");
    let cfg = serde_json::to_string_pretty(&report.config).unwrap_or_default();
    for line in cfg.lines() {
        let _ = writeln!(s, "  {line}");
    }

    if !report.history.is_empty() {
        let _ = writeln!(s, "\n# training history");
        let _ = writeln!(s, "{:>6} {:>11} {:>10} {:>10}", "epoch", "train_loss", "train_acc", "val_acc");
        for h in &report.history {
            let val = h.val_accuracy.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "{:>6} {:>11.5} {:>10.4} {:>10}", h.epoch, h.train_loss, h.train_accuracy, val);
        }
    }

    let Some(eval) = &report.eval else {
        return s;
    };
    let _ = writeln!(s, "\n# evaluation (n = {})", eval.n);
    for t in &eval.topk {
        let _ = writeln!(s, "top-{} accuracy: {:.4}", t.k, t.accuracy);
    }

    let _ = writeln!(s, "\n# confusion matrix (rows: true, columns: predicted)");
    let _ = write!(s, "{:>4}", "");
    for c in 0..eval.num_classes {
        let _ = write!(s, " {c:>5}");
    }
    let _ = writeln!(s);
    for (r, row) in eval.confusion.iter().enumerate() {
        let _ = write!(s, "{r:>4}");
        for v in row {
            let _ = write!(s, " {v:>5}");
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "\n# predictions");
    for (i, p) in eval.per_sample.iter().enumerate() {
        let name = p.name.clone().unwrap_or_else(|| format!("#{i}"));
        let top: Vec<String> = p
            .ranked
            .iter()
            .take(3)
            .map(|&(c, prob)| format!("{} {:.3}", class_label(c), prob))
            .collect();
        let verdict = if p.is_correct() {
            "ok".to_string()
        } else {
            format!(
                "MISCLASSIFIED true {} predicted {} (true rank {})",
                class_label(p.true_label),
                class_label(p.predicted()),
                p.true_rank()
            )
        };
        let _ = writeln!(s, "{name}\ttrue {}\t[{}]\t{verdict}", class_label(p.true_label), top.join(", "));
    }
    s
}

/// Writes `path` (plain text) and a JSON sidecar beside it.
pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<(), TrainError> {
    let path = path.as_ref();
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| TrainError::Io { path: p, source }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, render_text(report)).map_err(io(path))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let side = sidecar(path);
    fs::write(&side, json).map_err(io(&side))?;
    Ok(())
}

/// Reads a report back from its JSON sidecar (either path may be given).
pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport, TrainError> {
    let side = sidecar(path.as_ref());
    let text = fs::read_to_string(&side).map_err(|source| TrainError::Io {
        path: side.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| TrainError::BadReport {
        path: side.display().to_string(),
        message: e.to_string(),
    })
}
