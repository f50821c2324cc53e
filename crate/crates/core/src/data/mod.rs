//! Tabular datasets: rows of features with a binary sensitive attribute and
//! a binary label.

mod load;
mod synth;
mod transform;

pub use load::{convert_adult, load_csv, DataSchema, LoadReport};
pub use synth::{biased_mixture, two_moons, BiasedMixture};
pub use transform::{holdout, split, split_indices, standardize, Standardization};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    features: Vec<f64>,
    n_features: usize,
    sensitive: Vec<u8>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    tags: Option<Vec<String>>,
    standardization: Option<Standardization>,
}

impl TabularDataset {
    /// Builds a dataset from a row-major feature buffer.
    pub fn new(features: Vec<f64>, n_features: usize, sensitive: Vec<u8>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::input("dataset has no rows"));
        }
        if n_features == 0 {
            return Err(Error::input("dataset has no feature columns"));
        }
        if features.len() != n * n_features || sensitive.len() != n {
            return Err(Error::input(format!(
                "inconsistent dataset shape: {} feature values, {} sensitive, {} labels, width {}",
                features.len(),
                sensitive.len(),
                n,
                n_features
            )));
        }
        if feature_names.len() != n_features {
            return Err(Error::input("feature name count does not match width"));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("row {} has a non-finite feature", i / n_features)));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::input(format!("row {i}: label must be 0 or 1")));
        }
        if let Some(i) = sensitive.iter().position(|&s| s > 1) {
            return Err(Error::input(format!("row {i}: sensitive attribute must be 0 or 1")));
        }
        Ok(TabularDataset {
            features,
            n_features,
            sensitive,
            labels,
            feature_names,
            tags: None,
            standardization: None,
        })
    }

    /// Convenience constructor with generated feature names `x1, x2, ...`.
    pub fn from_rows(rows: &[Vec<f64>], sensitive: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::input("rows have different lengths"));
        }
        let names = (1..=width).map(|i| format!("x{i}")).collect();
        Self::new(rows.concat(), width, sensitive, labels, names)
    }

    pub fn with_tags(mut self, tags: Vec<String>) -> Result<Self> {
        if tags.len() != self.len() {
            return Err(Error::input("tag count does not match row count"));
        }
        self.tags = Some(tags);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        &self.features[n * self.n_features..(n + 1) * self.n_features]
    }

    #[inline]
    pub fn label(&self, n: usize) -> u8 {
        self.labels[n]
    }

    #[inline]
    pub fn sensitive_of(&self, n: usize) -> u8 {
        self.sensitive[n]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn tags(&self) -> Option<&[String]> {
        self.tags.as_deref()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::input("subset is empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::input(format!("row index {bad} out of range")));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Ok(TabularDataset {
            features,
            n_features: self.n_features,
            sensitive: indices.iter().map(|&i| self.sensitive[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            tags: self.tags.as_ref().map(|t| indices.iter().map(|&i| t[i].clone()).collect()),
            standardization: self.standardization.clone(),
        })
    }

    /// Rows whose tag equals `tag`.
    pub fn with_tag(&self, tag: &str) -> Result<Self> {
        let tags = self.tags.as_ref().ok_or_else(|| Error::input("dataset has no split tags"))?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| tags[i] == tag).collect();
        if idx.is_empty() {
            return Err(Error::input(format!("no rows tagged '{tag}'")));
        }
        self.subset(&idx)
    }

    /// The same rows with the sensitive attribute flipped.
    pub fn flip_sensitive(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.sensitive {
            *s = 1 - *s;
        }
        out
    }

    pub(crate) fn map_features(&self, f: impl Fn(usize, f64) -> f64, standardization: Option<Standardization>) -> Self {
        let w = self.n_features;
        let features = self.features.iter().enumerate().map(|(i, &v)| f(i % w, v)).collect();
        TabularDataset {
            features,
            standardization,
            ..self.clone()
        }
    }
}
