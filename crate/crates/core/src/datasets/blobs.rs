use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DomainPair, LabeledDataset, ShiftDescriptor};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const BLOB_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobConfig {
    pub classes: usize,
    pub dim: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Rotation of the target in the first two coordinates, radians.
    pub rotation: f64,
    /// Added to every target point; shorter vectors are zero-padded.
    pub translation: Vec<f64>,
}

fn center(k: usize, classes: usize) -> (f64, f64) {
    let a = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
    (BLOB_RADIUS * a.cos(), BLOB_RADIUS * a.sin())
}

fn sample_blobs<R: Rng>(n: usize, classes: usize, dim: usize, rng: &mut R) -> Result<LabeledDataset> {
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        let (cx, cy) = center(k, classes);
        for j in 0..dim {
            let noise: f64 = rng.sample(StandardNormal);
            data.push(noise + if j == 0 { cx } else if j == 1 { cy } else { 0.0 });
        }
        labels.push(k);
    }
    LabeledDataset::new(Matrix::new(n, dim, data)?, labels, classes)
}

/// Rotates every row by `angle` in its first two coordinates.
pub fn rotate_plane(features: &mut Matrix, angle: f64) {
    let (s, c) = angle.sin_cos();
    for r in 0..features.rows() {
        let row = features.row_mut(r);
        let (x, y) = (row[0], row[1]);
        row[0] = c * x - s * y;
        row[1] = s * x + c * y;
    }
}

/// Gaussian blobs (unit covariance) centred on a circle of radius 4 in the
/// first two coordinates. The target is drawn from the same clusters and
/// then rotated and translated.
pub fn make_blob_pair(cfg: &BlobConfig, seed: u64) -> Result<DomainPair> {
    if cfg.classes < 2 || cfg.dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "blobs need classes >= 2 and dim >= 2, got {} and {}",
            cfg.classes, cfg.dim
        )));
    }
    if cfg.translation.len() > cfg.dim {
        return Err(Error::InvalidArgument(format!(
            "translation has {} entries for dim {}",
            cfg.translation.len(),
            cfg.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = sample_blobs(cfg.n_source, cfg.classes, cfg.dim, &mut rng)?;
    let target = sample_blobs(cfg.n_target, cfg.classes, cfg.dim, &mut rng)?;

    let (mut feats, labels, classes) = (target.features().clone(), target.labels().to_vec(), target.classes());
    rotate_plane(&mut feats, cfg.rotation);
    for r in 0..feats.rows() {
        for (v, t) in feats.row_mut(r).iter_mut().zip(&cfg.translation) {
            *v += t;
        }
    }
    let target = LabeledDataset::new(feats, labels, classes)?;
    DomainPair::new(
        source,
        target,
        ShiftDescriptor::RigidMotion {
            rotation: cfg.rotation,
            translation: cfg.translation.clone(),
        },
    )
}
