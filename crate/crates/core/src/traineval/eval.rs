use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::nn::{Network, NnError, Real};

/// One sample's true label and the full class ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    /// Source file name for handwritten inputs.
    #[serde(default)]
    pub name: Option<String>,
    pub true_label: usize,
    /// (class, probability), most likely first.
    pub ranked: Vec<(usize, f64)>,
}

impl SamplePrediction {
    pub fn predicted(&self) -> usize {
        self.ranked[0].0
    }

    pub fn is_correct(&self) -> bool {
        self.predicted() == self.true_label
    }

    /// 1-based position of the true label in the ranking.
    pub fn true_rank(&self) -> usize {
        self.ranked
            .iter()
            .position(|&(c, _)| c == self.true_label)
            .map_or(usize::MAX, |p| p + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub num_classes: usize,
    pub top1_accuracy: f64,
    pub top2_accuracy: f64,
    /// Accuracy for every requested k, in request order.
    pub topk: Vec<TopK>,
    /// `confusion[true][predicted]`, from top-1 predictions.
    pub confusion: Vec<Vec<usize>>,
    pub per_sample: Vec<SamplePrediction>,
}

/// Class indices by descending probability, ties to the lower index.
pub fn rank_classes<T: Real>(probs: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

impl EvalReport {
    /// Builds the report from a row-major `labels.len() × num_classes`
    /// probability matrix.
    pub fn from_probabilities<T: Real>(probs: &[T], labels: &[usize], num_classes: usize, ks: &[usize]) -> Self {
        assert_eq!(probs.len(), labels.len() * num_classes, "probability matrix shape");
        let mut confusion = vec![vec![0; num_classes]; num_classes];
        let per_sample: Vec<SamplePrediction> = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let row = &probs[i * num_classes..(i + 1) * num_classes];
                let ranked: Vec<(usize, f64)> = rank_classes(row).into_iter().map(|c| (c, row[c].as_f64())).collect();
                if y < num_classes {
                    confusion[y][ranked[0].0] += 1;
                }
                SamplePrediction {
                    name: None,
                    true_label: y,
                    ranked,
                }
            })
            .collect();
        let n = labels.len();
        let acc = |k: usize| {
            if n == 0 {
                return 0.0;
            }
            per_sample.iter().filter(|s| s.true_rank() <= k).count() as f64 / n as f64
        };
        Self {
            n,
            num_classes,
            top1_accuracy: acc(1),
            top2_accuracy: acc(2),
            topk: ks.iter().map(|&k| TopK { k, accuracy: acc(k) }).collect(),
            confusion,
            per_sample,
        }
    }

    pub fn accuracy_at(&self, k: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.per_sample.iter().filter(|s| s.true_rank() <= k).count() as f64 / self.n as f64
    }

    pub fn misclassified(&self) -> impl Iterator<Item = (usize, &SamplePrediction)> {
        self.per_sample.iter().enumerate().filter(|(_, s)| !s.is_correct())
    }
}

/// Ranks every class for every sample of `ds` and aggregates top-k hits.
pub fn evaluate_topk<T: Real>(net: &Network<T>, ds: &Dataset, ks: &[usize]) -> Result<EvalReport, NnError> {
    let inputs = super::dataset_tensor::<T>(ds, net.spec().kind);
    let probs = net.predict(&inputs)?;
    Ok(EvalReport::from_probabilities(
        probs.data(),
        &ds.labels(),
        net.num_classes(),
        ks,
    ))
}
