use serde::{Deserialize, Serialize};

use super::HmmError;
use crate::Scalar;

/// Diagonal-covariance Gaussian mixture.
///
/// Holds precomputed per-component normalizers; these are rebuilt on
/// deserialization, so the persisted form is only the raw parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(
    try_from = "MixtureParams<S>",
    into = "MixtureParams<S>",
    bound = "S: Scalar"
)]
pub struct GaussianMixture<S: Scalar> {
    params: MixtureParams<S>,
    /// `ln w_m - 0.5 * sum_d ln(2π σ²_md)`
    log_norm: Vec<S>,
    inv_var: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MixtureParams<S: Scalar> {
    pub weights: Vec<S>,
    pub means: Vec<Vec<S>>,
    pub variances: Vec<Vec<S>>,
}

impl<S: Scalar> PartialEq for GaussianMixture<S> {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl<S: Scalar> TryFrom<MixtureParams<S>> for GaussianMixture<S> {
    type Error = HmmError;

    fn try_from(p: MixtureParams<S>) -> Result<Self, HmmError> {
        GaussianMixture::new(p.weights, p.means, p.variances)
    }
}

impl<S: Scalar> From<GaussianMixture<S>> for MixtureParams<S> {
    fn from(g: GaussianMixture<S>) -> Self {
        g.params
    }
}

pub(crate) fn weight_tolerance<S: Scalar>() -> S {
    S::lit(1e-9).max(S::epsilon() * S::lit(64.0))
}

impl<S: Scalar> GaussianMixture<S> {
    pub fn new(weights: Vec<S>, means: Vec<Vec<S>>, variances: Vec<Vec<S>>) -> Result<Self, HmmError> {
        let m = weights.len();
        if m == 0 || means.len() != m || variances.len() != m {
            return Err(HmmError::InvalidModel("mixture component counts disagree".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().chain(&variances).any(|v| v.len() != d) {
            return Err(HmmError::InvalidModel("mixture dimensions disagree".into()));
        }
        if weights.iter().any(|&w| !(w >= S::zero()) || !w.is_finite()) {
            return Err(HmmError::InvalidModel("negative or non-finite mixture weight".into()));
        }
        let total: S = weights.iter().copied().sum();
        if (total - S::one()).abs() > weight_tolerance() {
            return Err(HmmError::InvalidModel(format!("mixture weights sum to {total}")));
        }
        if variances.iter().flatten().any(|&v| !(v > S::zero()) || !v.is_finite()) {
            return Err(HmmError::InvalidModel("variances must be positive and finite".into()));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HmmError::InvalidModel("non-finite mean".into()));
        }
        let ln_2pi = (S::lit(2.0) * S::PI()).ln();
        let half = S::lit(0.5);
        let log_norm = weights
            .iter()
            .zip(&variances)
            .map(|(&w, var)| {
                let log_det: S = var.iter().map(|v| v.ln()).sum();
                w.ln() - half * (S::from_usize_lossy(d) * ln_2pi + log_det)
            })
            .collect();
        let inv_var = variances.iter().map(|v| v.iter().map(|&x| x.recip()).collect()).collect();
        Ok(GaussianMixture { params: MixtureParams { weights, means, variances }, log_norm, inv_var })
    }

    /// Single standard-shaped component.
    pub fn single(mean: Vec<S>, variance: Vec<S>) -> Result<Self, HmmError> {
        Self::new(vec![S::one()], vec![mean], vec![variance])
    }

    pub fn n_components(&self) -> usize {
        self.params.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.params.means[0].len()
    }

    pub fn weights(&self) -> &[S] {
        &self.params.weights
    }

    pub fn means(&self) -> &[Vec<S>] {
        &self.params.means
    }

    pub fn variances(&self) -> &[Vec<S>] {
        &self.params.variances
    }

    pub fn params(&self) -> &MixtureParams<S> {
        &self.params
    }

    /// `ln(w_m N(x; μ_m, σ²_m))` for component `m`; no dimension check.
    #[inline]
    pub fn component_log_density(&self, m: usize, x: &[S]) -> S {
        let mut q = S::zero();
        for ((&xi, &mu), &iv) in x.iter().zip(&self.params.means[m]).zip(&self.inv_var[m]) {
            let d = xi - mu;
            q = q + d * d * iv;
        }
        self.log_norm[m] - S::lit(0.5) * q
    }

    /// Mixture log-density without a dimension check.
    #[inline]
    pub fn log_density(&self, x: &[S]) -> S {
        let m = self.n_components();
        if m == 1 {
            return self.component_log_density(0, x);
        }
        let mut buf = [S::zero(); 16];
        if m <= buf.len() {
            for (k, slot) in buf[..m].iter_mut().enumerate() {
                *slot = self.component_log_density(k, x);
            }
            crate::log_sum_exp(&buf[..m])
        } else {
            let v: Vec<S> = (0..m).map(|k| self.component_log_density(k, x)).collect();
            crate::log_sum_exp(&v)
        }
    }

    /// Writes per-component log terms into `out` and returns their log-sum.
    #[inline]
    pub(crate) fn component_terms(&self, x: &[S], out: &mut [S]) -> S {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.component_log_density(k, x);
        }
        crate::log_sum_exp(out)
    }
}

/// `log Σ_m w_m N(x; μ_m, diag σ²_m)`.
pub fn gmm_logpdf<S: Scalar>(mixture: &GaussianMixture<S>, x: &[S]) -> Result<S, HmmError> {
    if x.len() != mixture.dim() {
        return Err(HmmError::DimensionMismatch { expected: mixture.dim(), got: x.len() });
    }
    Ok(mixture.log_density(x))
}
