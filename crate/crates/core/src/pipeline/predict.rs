use rand::Rng;
use rayon::prelude::*;

use super::train::TrainedModel;
use crate::domain_rand::circular_shift;
use crate::error::{ensure, Result};
use crate::nn::{softmax_rows, ForwardMode, Model, Tensor};
use crate::seed;

/// Equally sized single-channel images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    pub images: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn new(height: usize, width: usize, n_classes: usize, images: Vec<Vec<f32>>, labels: Vec<usize>) -> Result<Self> {
        ensure!(images.len() == labels.len(), "{} images but {} labels", images.len(), labels.len());
        ensure!(n_classes >= 2, "need at least 2 classes");
        ensure!(
            images.iter().all(|i| i.len() == height * width),
            "every image must have {height}x{width} pixels"
        );
        ensure!(labels.iter().all(|&l| l < n_classes), "label out of range");
        Ok(Self { height, width, n_classes, images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Anything that maps an `N×1×H×W` batch to class probabilities.
pub trait Predictor: Sync {
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Predictor for Model<f32> {
    fn n_classes(&self) -> usize {
        Model::n_classes(self)
    }

    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(softmax_rows(&self.forward(batch, ForwardMode::Eval)?))
    }
}

/// Independently trained models whose softmax outputs are averaged.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<TrainedModel>,
}

impl Ensemble {
    pub fn new(members: Vec<TrainedModel>) -> Result<Self> {
        ensure!(!members.is_empty(), "ensemble needs at least one member");
        let k = members[0].model.n_classes();
        ensure!(
            members.iter().all(|m| m.model.n_classes() == k),
            "ensemble members disagree on the class count"
        );
        Ok(Self { members })
    }

    pub fn from_models(models: Vec<Model<f32>>) -> Result<Self> {
        Self::new(models.into_iter().map(|model| TrainedModel { model, seed: 0, log: Vec::new() }).collect())
    }
}

/// Mean of the members' softmax outputs.
pub fn bag_predict(ensemble: &Ensemble, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut acc: Option<Tensor<f32>> = None;
    for m in &ensemble.members {
        let p = m.model.predict_proba(batch)?;
        match acc.as_mut() {
            None => acc = Some(p),
            Some(a) => {
                ensure!(a.shape() == p.shape(), "member output shape mismatch");
                for (x, y) in a.data_mut().iter_mut().zip(p.data()) {
                    *x += y;
                }
            }
        }
    }
    let n = ensemble.members.len() as f32;
    let mut acc = acc.expect("nonempty ensemble");
    if n > 1.0 {
        for v in acc.data_mut() {
            *v /= n;
        }
    }
    Ok(acc)
}

impl Predictor for Ensemble {
    fn n_classes(&self) -> usize {
        self.members[0].model.n_classes()
    }

    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        bag_predict(self, batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TtdaConfig {
    pub n_variants: usize,
    pub shift_range_px: [i32; 2],
    /// Record `i` draws its shifts from `derive(seed, i)`.
    pub seed: u64,
}

/// Mean prediction over `n_variants` randomly shifted copies of one image.
pub fn ttda_predict<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    image: &[f32],
    height: usize,
    width: usize,
    n_variants: usize,
    shift_range_px: [i32; 2],
    rng: &mut R,
) -> Result<Vec<f32>> {
    ensure!(n_variants >= 1, "need at least one variant");
    ensure!(image.len() == height * width, "image size does not match {height}x{width}");
    ensure!(shift_range_px[0] <= shift_range_px[1], "shift range must be ordered");
    let [lo, hi] = shift_range_px;
    let copies: Vec<Vec<f32>> = (0..n_variants)
        .map(|_| {
            let (dx, dy) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            circular_shift(image, height, width, dx, dy)
        })
        .collect();
    let refs: Vec<&[f32]> = copies.iter().map(Vec::as_slice).collect();
    let p = predictor.predict_proba(&Tensor::from_images(&refs, height, width)?)?;
    let k = p.row_len();
    let mut mean = vec![0.0f32; k];
    for i in 0..n_variants {
        for (m, &v) in mean.iter_mut().zip(p.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_variants as f32;
    }
    Ok(mean)
}

const PREDICT_CHUNK: usize = 64;

/// Class probabilities for every image, in order. Chunks run in parallel.
pub fn predict_dataset<P: Predictor + ?Sized>(
    predictor: &P,
    data: &LabeledImages,
    ttda: Option<&TtdaConfig>,
) -> Result<Vec<Vec<f32>>> {
    ensure!(!data.is_empty(), "test set is empty");
    let (h, w) = (data.height, data.width);
    let chunks: Vec<Result<Vec<Vec<f32>>>> = data
        .images
        .par_chunks(PREDICT_CHUNK)
        .enumerate()
        .map(|(c, chunk)| match ttda {
            Some(t) => chunk
                .iter()
                .enumerate()
                .map(|(j, img)| {
                    let mut rng = seed::stream(seed::derive(t.seed, (c * PREDICT_CHUNK + j) as u64));
                    ttda_predict(predictor, img, h, w, t.n_variants, t.shift_range_px, &mut rng)
                })
                .collect(),
            None => {
                let refs: Vec<&[f32]> = chunk.iter().map(Vec::as_slice).collect();
                let p = predictor.predict_proba(&Tensor::from_images(&refs, h, w)?)?;
                Ok((0..chunk.len()).map(|i| p.row(i).to_vec()).collect())
            }
        })
        .collect();
    let mut out = Vec::with_capacity(data.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Confusion matrix (rows: true class, columns: predicted class) and the
/// accuracies derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: Vec<Vec<u64>>,
    /// `NaN` for classes absent from the test set.
    pub per_class: Vec<f64>,
    pub overall: f64,
    pub predicted: Vec<usize>,
    pub probabilities: Vec<Vec<f32>>,
}

impl Evaluation {
    pub fn from_probabilities(labels: &[usize], probabilities: Vec<Vec<f32>>, n_classes: usize) -> Result<Self> {
        ensure!(labels.len() == probabilities.len(), "label and prediction counts differ");
        ensure!(!labels.is_empty(), "nothing to evaluate");
        let predicted: Vec<usize> = probabilities
            .iter()
            .map(|p| {
                let mut best = 0;
                for (i, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = i;
                    }
                }
                best
            })
            .collect();
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(&predicted) {
            ensure!(t < n_classes && p < n_classes, "class index out of range");
            confusion[t][p] += 1;
        }
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    f64::NAN
                } else {
                    row[r] as f64 / total as f64
                }
            })
            .collect();
        let trace: u64 = (0..n_classes).map(|i| confusion[i][i]).sum();
        Ok(Self { confusion, per_class, overall: trace as f64 / labels.len() as f64, predicted, probabilities })
    }
}

pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, test: &LabeledImages, ttda: Option<&TtdaConfig>) -> Result<Evaluation> {
    ensure!(
        predictor.n_classes() == test.n_classes,
        "predictor has {} classes, test set {}",
        predictor.n_classes(),
        test.n_classes
    );
    let probs = predict_dataset(predictor, test, ttda)?;
    Evaluation::from_probabilities(&test.labels, probs, test.n_classes)
}
