//! Two-domain classification tasks: synthetic blob pairs, IDX and CSV
//! ingestion, and seeded mini-batch iteration.

mod batch;
mod blobs;
mod idx;
mod table;

pub use batch::BatchIterator;
pub use blobs::{make_blob_pair, rotate_plane, BlobConfig};
pub use idx::{load_idx, parse_idx, read_idx_file, rotate_images, write_idx, IdxTensor};
pub use table::load_feature_csv;

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;

/// Features with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(shape_err("LabeledDataset::new", features.rows(), labels.len()));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { index, label, classes });
        }
        Ok(Self { features, labels, classes })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// How the target marginal was moved away from the source.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftDescriptor {
    RigidMotion { rotation: f64, translation: Vec<f64> },
    ImageRotation { radians: f64 },
    External,
}

/// Labeled source data plus target data whose labels are held for
/// evaluation only; training code reaches the target through
/// [`DomainPair::target_features`].
#[derive(Debug, Clone)]
pub struct DomainPair {
    pub source: LabeledDataset,
    target: LabeledDataset,
    pub shift: ShiftDescriptor,
}

impl DomainPair {
    pub fn new(source: LabeledDataset, target: LabeledDataset, shift: ShiftDescriptor) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(shape_err("DomainPair::new", source.dim(), target.dim()));
        }
        if source.classes() != target.classes() {
            return Err(shape_err("DomainPair::new", source.classes(), target.classes()));
        }
        Ok(Self { source, target, shift })
    }

    pub fn classes(&self) -> usize {
        self.source.classes()
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn target_features(&self) -> &Matrix {
        self.target.features()
    }

    pub fn target_len(&self) -> usize {
        self.target.len()
    }

    /// Evaluation-only access to the hidden target labels.
    pub fn target_oracle(&self) -> &LabeledDataset {
        &self.target
    }
}
