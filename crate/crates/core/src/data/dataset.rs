use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

/// Features with integer labels in `[0, classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `n×d` or `n×C×H×W`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if features.shape()[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.shape()[0],
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Elements per sample.
    pub fn sample_numel(&self) -> usize {
        self.features.numel() / self.len()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    /// Gathers `indices` into a batch tensor and label vector.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::Capacity("empty batch".into()));
        }
        let per = self.sample_numel();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Capacity(format!(
                    "index {i} outside dataset of {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.features.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok((Tensor::new(shape, data)?, labels))
    }
}

/// Cosine between every pair of class directions used by [`synth_mixture`].
/// At separation 8, d = 16, C = 8 the means sit 5.66 apart and a
/// nearest-centroid classifier scores about 98.6%.
pub const DEFAULT_MEAN_COSINE: f64 = 0.75;

/// Gaussian mixture with one isotropic unit-variance component per class.
///
/// Same as [`synth_mixture_with_cosine`] with [`DEFAULT_MEAN_COSINE`].
pub fn synth_mixture(classes: usize, dim: usize, per_class: usize, separation: f64, seed: u64) -> Result<Dataset> {
    synth_mixture_with_cosine(classes, dim, per_class, separation, DEFAULT_MEAN_COSINE, seed)
}

/// Gaussian mixture whose class means are `separation · u_c`.
///
/// When `classes < dim` the unit directions are equiangular:
/// `u_c = √ρ·v₀ + √(1−ρ)·v_{c+1}` for an orthonormal set `v` drawn from the
/// seed, so every pair of means sits exactly `separation·√(2(1−ρ))` apart.
/// Otherwise the `u_c` are independent random unit vectors and `ρ` is unused.
/// Samples are interleaved by class (`0, 1, …, C−1, 0, 1, …`) so labels are
/// balanced.
pub fn synth_mixture_with_cosine(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    cosine: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || dim < 2 || per_class == 0 {
        return Err(Error::Validation(format!(
            "synthetic mixture needs C ≥ 2, d ≥ 2, n_per_class ≥ 1 (got C={classes}, d={dim}, n={per_class})"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::Validation(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    if !(0.0..1.0).contains(&cosine) {
        return Err(Error::Validation(format!(
            "mean cosine must lie in [0, 1), got {cosine}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let directions = class_directions(classes, dim, cosine, &mut rng);
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (c, dir) in directions.iter().enumerate() {
            data.extend(dir.iter().map(|&u| separation * u + rng.gaussian()));
            labels.push(c);
        }
    }
    Dataset::new(Tensor::new(vec![n, dim], data)?, labels, classes)
}

fn class_directions(classes: usize, dim: usize, cosine: f64, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    if classes >= dim {
        return random_unit_vectors(classes, dim, false, rng);
    }
    let basis = random_unit_vectors(classes + 1, dim, true, rng);
    let (shared, own) = (cosine.sqrt(), (1.0 - cosine).sqrt());
    basis[1..]
        .iter()
        .map(|v| v.iter().zip(&basis[0]).map(|(&e, &m)| shared * m + own * e).collect())
        .collect()
}

/// Gaussian draws normalized to length 1, optionally Gram–Schmidt orthogonalized.
fn random_unit_vectors(count: usize, dim: usize, orthogonalize: bool, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    while dirs.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        if orthogonalize {
            for u in &dirs {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        dirs.push(v);
    }
    dirs
}
