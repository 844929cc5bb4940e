use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{norm, Rng};

/// Labelled feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_features: usize,
    pub num_classes: usize,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let p = self.num_features;
        &mut self.features[i * p..(i + 1) * p]
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SyntheticDataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        SyntheticDataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_features: self.num_features,
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    pub num_classes: usize,
    pub num_features: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Standard deviation of the isotropic noise around each class center.
    pub noise: f64,
    /// Norm of every class center.
    pub separation: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            num_classes: 10,
            num_features: 20,
            train_size: 5000,
            test_size: 2000,
            noise: 0.5,
            separation: 1.0,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_features == 0 {
            return Err(Error::invalid(
                "dataset needs at least one class and one feature",
            ));
        }
        if self.train_size < self.num_classes || self.test_size < self.num_classes {
            return Err(Error::invalid(
                "train_size and test_size must be at least num_classes",
            ));
        }
        if !(self.noise >= 0.0) || !(self.separation > 0.0) {
            return Err(Error::invalid("noise must be >= 0 and separation > 0"));
        }
        Ok(())
    }
}

/// Gaussian class clusters around seeded centers of norm `separation`.
///
/// Labels cycle through the classes before shuffling, so every class appears
/// in both splits. Identical seeds give bit-identical data.
pub fn generate_dataset(
    params: &DatasetParams,
    seed: u64,
) -> Result<(SyntheticDataset, SyntheticDataset)> {
    params.validate()?;
    let mut rng = Rng::new(seed);
    let p = params.num_features;
    let centers: Vec<Vec<f64>> = (0..params.num_classes)
        .map(|_| {
            let mut c: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm(&c).max(f64::MIN_POSITIVE);
            c.iter_mut().for_each(|x| *x *= params.separation / len);
            c
        })
        .collect();

    let draw = |m: usize, rng: &mut Rng| {
        let mut labels: Vec<usize> = (0..m).map(|i| i % params.num_classes).collect();
        rng.shuffle(&mut labels);
        let mut features = Vec::with_capacity(m * p);
        for &y in &labels {
            for k in 0..p {
                let z: f64 = StandardNormal.sample(rng);
                features.push(centers[y][k] + params.noise * z);
            }
        }
        SyntheticDataset {
            features,
            labels,
            num_features: p,
            num_classes: params.num_classes,
        }
    };
    let train = draw(params.train_size, &mut rng);
    let test = draw(params.test_size, &mut rng);
    Ok((train, test))
}
