//! Labeled feature matrices shared by clients, sensors and the drift generators.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{FlareError, Result};

/// Where a dataset's features came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    Clean,
    Corrupted(String),
    /// Union of samples with different provenance (e.g. a client pool after ingestion).
    Mixed,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Clean => write!(f, "clean"),
            Provenance::Corrupted(kind) => write!(f, "corrupted:{kind}"),
            Provenance::Mixed => write!(f, "mixed"),
        }
    }
}

/// `n` samples by `d` features in `[0, 1]`, with integer labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(FlareError::contract("dataset must hold at least one sample"));
        }
        if features.nrows() != labels.len() {
            return Err(FlareError::contract(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(FlareError::contract(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(FlareError::contract("dataset features must be finite"));
        }
        Ok(Self {
            features,
            labels,
            classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(FlareError::contract("cannot select an empty subset"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(FlareError::contract(format!(
                "index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Ok(Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            provenance: self.provenance.clone(),
        })
    }

    /// Appends `other` below `self`.
    pub fn concat(&self, other: &LabeledDataset) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(FlareError::contract(format!(
                "feature dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let provenance = if self.provenance == other.provenance {
            self.provenance.clone()
        } else {
            Provenance::Mixed
        };
        Ok(Self {
            features,
            labels,
            classes: self.classes.max(other.classes),
            provenance,
        })
    }

    /// Consumes the dataset, returning its raw parts.
    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>, usize, Provenance) {
        (self.features, self.labels, self.classes, self.provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_out_of_range_labels() {
        let err = LabeledDataset::new(array![[0.1, 0.2]], vec![3], 3, Provenance::Clean);
        assert!(matches!(err, Err(FlareError::Contract(_))));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        let empty = Array2::<f64>::zeros((0, 4));
        assert!(LabeledDataset::new(empty, vec![], 3, Provenance::Clean).is_err());
        let nan = array![[f64::NAN, 0.0]];
        assert!(LabeledDataset::new(nan, vec![0], 3, Provenance::Clean).is_err());
    }

    #[test]
    fn concat_marks_mixed_provenance() {
        let a = LabeledDataset::new(array![[0.1, 0.2]], vec![0], 3, Provenance::Clean).unwrap();
        let b = LabeledDataset::new(
            array![[0.3, 0.4]],
            vec![2],
            3,
            Provenance::Corrupted("noise".into()),
        )
        .unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.labels(), &[0, 2]);
        assert_eq!(c.provenance(), &Provenance::Mixed);
        assert_eq!(c.provenance().to_string(), "mixed");
    }
}
