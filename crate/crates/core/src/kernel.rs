//! Kernels and centered, Frobenius-normalized Gram matrices.
//!
//! Every solver consumes `K̄ = HKH / ‖HKH‖_F` with `H = I - 11ᵀ/M`. A unit
//! whose features never change yields `HKH = 0`; it is flagged degenerate and
//! its normalized Gram is exactly zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::{AuxiliaryDataset, FeatureKind, UnitFeatures};

pub const DEFAULT_ZERO_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance, see [`median_heuristic`].
    Median,
    Fixed(f64),
}

/// Kernel applied to per-unit features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKernel {
    /// Delta for binary and categorical features, median-bandwidth Gaussian
    /// for continuous ones.
    Auto,
    /// Delta kernel. Continuous features are first binarized at
    /// `KernelConfig::label_threshold`.
    Delta,
    Gaussian(Bandwidth),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub input_kernel: InputKernel,
    pub output_bandwidth: Bandwidth,
    pub zero_norm_tolerance: f64,
    pub label_threshold: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            input_kernel: InputKernel::Auto,
            output_bandwidth: Bandwidth::Median,
            zero_norm_tolerance: DEFAULT_ZERO_NORM_TOLERANCE,
            label_threshold: 0.5,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |b: Bandwidth| match b {
            Bandwidth::Fixed(s) if !(s > 0.0 && s.is_finite()) => Err(Error::InvalidArgument(format!(
                "kernel bandwidth {s} must be positive"
            ))),
            _ => Ok(()),
        };
        if let InputKernel::Gaussian(b) = self.input_kernel {
            check(b)?;
        }
        check(self.output_bandwidth)
    }
}

/// A concrete kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Delta,
    Gaussian { sigma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Delta => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Gaussian { sigma } => (-squared_distance(x, y) / (2.0 * sigma * sigma)).exp(),
        }
    }
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Symmetric M×M Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    normalized: bool,
    degenerate: bool,
}

impl GramMatrix {
    /// Wraps raw values as an unnormalized Gram matrix.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::InvalidArgument("Gram matrix must be square".into()));
        }
        Ok(Self {
            values,
            normalized: false,
            degenerate: false,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn frobenius_inner(&self, other: &GramMatrix) -> f64 {
        self.values.dot(&other.values)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    /// Row-major CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.size() {
            let row: Vec<String> = (0..self.size())
                .map(|j| format!("{:.16e}", self.values[(i, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// `values[i][j] = k(x_i, x_j)` over the M samples.
pub fn gram(samples: &[Vec<f64>], kernel: Kernel) -> Result<GramMatrix> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {m}")));
    }
    if samples.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    if let Kernel::Gaussian { sigma } = kernel {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth {sigma} must be positive")));
        }
    }
    let mut values = DMatrix::zeros(m, m);
    for i in 0..m {
        values[(i, i)] = kernel.eval(&samples[i], &samples[i]);
        for j in (i + 1)..m {
            let k = kernel.eval(&samples[i], &samples[j]);
            values[(i, j)] = k;
            values[(j, i)] = k;
        }
    }
    Ok(GramMatrix {
        values,
        normalized: false,
        degenerate: false,
    })
}

/// `HKH / ‖HKH‖_F`, or the zero matrix flagged degenerate when the centered
/// norm falls below `tol`.
pub fn center_normalize(k: &GramMatrix, tol: f64) -> GramMatrix {
    let m = k.size();
    let v = &k.values;
    let row_means: Vec<f64> = (0..m).map(|i| v.row(i).sum() / m as f64).collect();
    let col_means: Vec<f64> = (0..m).map(|j| v.column(j).sum() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    let mut centered = DMatrix::from_fn(m, m, |i, j| v[(i, j)] - row_means[i] - col_means[j] + grand);
    let norm = centered.norm();
    if norm < tol {
        return GramMatrix {
            values: DMatrix::zeros(m, m),
            normalized: true,
            degenerate: true,
        };
    }
    centered /= norm;
    GramMatrix {
        values: centered,
        normalized: true,
        degenerate: false,
    }
}

/// Median of the nonzero pairwise Euclidean distances; 1 if all samples
/// coincide.
pub fn median_heuristic(samples: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::with_capacity(samples.len() * samples.len().saturating_sub(1) / 2);
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let d = squared_distance(&samples[i], &samples[j]).sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    }
}

fn resolve(bandwidth: Bandwidth, samples: &[Vec<f64>]) -> Kernel {
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Median => median_heuristic(samples),
    };
    Kernel::Gaussian { sigma }
}

/// Normalized Gram matrix of one unit's features under `cfg`.
pub fn unit_gram(features: &UnitFeatures, cfg: &KernelConfig) -> Result<GramMatrix> {
    let raw = match (cfg.input_kernel, features.kind) {
        (InputKernel::Auto, FeatureKind::Binary | FeatureKind::Categorical) | (InputKernel::Delta, FeatureKind::Binary | FeatureKind::Categorical) => {
            gram(&features.samples, Kernel::Delta)?
        }
        (InputKernel::Delta, FeatureKind::Continuous) => {
            let labels: Vec<Vec<f64>> = features
                .samples
                .iter()
                .map(|x| {
                    x.iter()
                        .map(|&v| if v > cfg.label_threshold { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            gram(&labels, Kernel::Delta)?
        }
        (InputKernel::Auto, FeatureKind::Continuous) => gram(&features.samples, resolve(Bandwidth::Median, &features.samples))?,
        (InputKernel::Gaussian(b), _) => gram(&features.samples, resolve(b, &features.samples))?,
    };
    Ok(center_normalize(&raw, cfg.zero_norm_tolerance))
}

/// Normalized Gaussian Gram matrix of the model's predictions.
pub fn output_gram(dataset: &AuxiliaryDataset, cfg: &KernelConfig) -> Result<GramMatrix> {
    let preds: Vec<Vec<f64>> = dataset
        .samples
        .iter()
        .map(|s| s.prediction.probs().to_vec())
        .collect();
    let raw = gram(&preds, resolve(cfg.output_bandwidth, &preds))?;
    let l = center_normalize(&raw, cfg.zero_norm_tolerance);
    if l.is_degenerate() {
        return Err(Error::ConstantModel);
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalars(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn assert_close(a: &DMatrix<f64>, b: &[&[f64]], tol: f64) {
        for (i, row) in b.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((a[(i, j)] - v).abs() <= tol, "({i},{j}): {} vs {v}", a[(i, j)]);
            }
        }
    }

    #[test]
    fn delta_gram() {
        let k = gram(&scalars(&[1.0, 1.0, 0.0]), Kernel::Delta).unwrap();
        assert_close(k.values(), &[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]], 0.0);
    }

    #[test]
    fn gaussian_gram() {
        let k = gram(&scalars(&[0.0, 0.0]), Kernel::Gaussian { sigma: 1.0 }).unwrap();
        assert_close(k.values(), &[&[1.0, 1.0], &[1.0, 1.0]], 0.0);
        let k = gram(&scalars(&[0.0, 2f64.sqrt()]), Kernel::Gaussian { sigma: 1.0 }).unwrap();
        assert!((k.values()[(0, 1)] - (-1f64).exp()).abs() < 1e-12);
        assert!((k.values()[(0, 1)] - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn gram_rejects_bad_input() {
        assert!(gram(&scalars(&[1.0]), Kernel::Delta).is_err());
        assert!(gram(&scalars(&[1.0, f64::NAN]), Kernel::Delta).is_err());
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let k = GramMatrix::from_matrix(DMatrix::from_element(4, 4, 3.5)).unwrap();
        let c = center_normalize(&k, DEFAULT_ZERO_NORM_TOLERANCE);
        assert!(c.is_degenerate());
        assert_eq!(c.values(), &DMatrix::zeros(4, 4));
    }

    #[test]
    fn two_sample_delta_by_hand() {
        // H = I - 11ᵀ/2 = [[.5,-.5],[-.5,.5]]; K = I so HKH = H, ‖H‖_F = 1.
        let k = gram(&scalars(&[1.0, 0.0]), Kernel::Delta).unwrap();
        let c = center_normalize(&k, DEFAULT_ZERO_NORM_TOLERANCE);
        assert!(!c.is_degenerate());
        assert_close(c.values(), &[&[0.5, -0.5], &[-0.5, 0.5]], 1e-15);
    }

    #[test]
    fn median_heuristic_examples() {
        assert_eq!(median_heuristic(&scalars(&[0.0, 1.0, 2.0])), 1.0);
        assert_eq!(median_heuristic(&scalars(&[3.0, 3.0, 3.0])), 1.0);
        assert_eq!(median_heuristic(&scalars(&[0.0, 1.0, 3.0, 3.0])), 2.0);
    }

    proptest! {
        #[test]
        fn median_is_scale_equivariant(xs in prop::collection::vec(-10.0f64..10.0, 2..12), c in 0.1f64..10.0) {
            let a = median_heuristic(&scalars(&xs));
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let b = median_heuristic(&scalars(&scaled));
            if a != 1.0 || xs.iter().any(|&x| x != xs[0]) {
                prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn binary_relabeling_is_invariant(bits in prop::collection::vec(any::<bool>(), 2..20)) {
            let a: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let flipped: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
            let ka = center_normalize(&gram(&scalars(&a), Kernel::Delta).unwrap(), 1e-12);
            let kb = center_normalize(&gram(&scalars(&flipped), Kernel::Delta).unwrap(), 1e-12);
            prop_assert!((ka.values() - kb.values()).amax() < 1e-12);
        }
    }
}
