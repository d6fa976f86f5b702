//! Ordinary least squares with homoskedastic and HC0–HC3 sandwich covariance.
//!
//! The solver is a column-pivoted Householder QR, so a near-collinear design is
//! detected from the diagonal of `R` instead of silently producing huge
//! coefficients from the normal equations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need more observations than parameters (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient; collinear column(s): {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("coefficient index {index} out of range (p = {p})")]
    IndexOutOfRange { index: usize, p: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Heteroskedasticity-consistent covariance flavor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HcFlavor {
    /// `e_i²`
    HC0,
    /// `e_i² · n/(n−p)`
    #[default]
    HC1,
    /// `e_i² / (1−h_ii)`
    HC2,
    /// `e_i² / (1−h_ii)²`
    HC3,
}

impl HcFlavor {
    pub const ALL: [HcFlavor; 4] = [HcFlavor::HC0, HcFlavor::HC1, HcFlavor::HC2, HcFlavor::HC3];
}

impl fmt::Display for HcFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for HcFlavor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HC0" => Ok(HcFlavor::HC0),
            "HC1" => Ok(HcFlavor::HC1),
            "HC2" => Ok(HcFlavor::HC2),
            "HC3" => Ok(HcFlavor::HC3),
            other => Err(format!("unknown robust SE flavor {other:?}")),
        }
    }
}

/// Named design matrix columns, assembled column by column.
#[derive(Debug, Clone, Default)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a column of ones sized to `n`.
    pub fn intercept(mut self, n: usize) -> Self {
        self.names.push("(intercept)".into());
        self.columns.push(vec![1.0; n]);
        self
    }

    pub fn column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.names.push(name.into());
        self.columns.push(values);
        self
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn validate(&self) -> Result<usize, StatsError> {
        let n = self.n_rows();
        if let Some((name, _)) = self.names.iter().zip(&self.columns).find(|(_, c)| c.len() != n) {
            return Err(StatsError::DimensionMismatch(format!(
                "column {name:?} length differs from {n}"
            )));
        }
        if self.columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("design matrix"));
        }
        Ok(n)
    }

    fn matrix(&self, keep: &[usize], n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, keep.len(), |i, j| self.columns[keep[j]][i])
    }
}

/// A fitted linear model. Covariance matrices refer to the retained columns
/// only; dropped zero-variance columns are listed in `dropped_columns`.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub vcov_homoskedastic: DMatrix<f64>,
    pub vcov_robust: DMatrix<f64>,
    pub flavor: HcFlavor,
    pub residuals: Vec<f64>,
    pub n: usize,
    pub column_names: Vec<String>,
    pub dropped_columns: Vec<String>,
    x: DMatrix<f64>,
    bread: DMatrix<f64>,
    leverage: Vec<f64>,
}

impl RegressionFit {
    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Residual variance `SSR/(n−p)`.
    pub fn sigma2(&self) -> f64 {
        let ssr: f64 = self.residuals.iter().map(|e| e * e).sum();
        ssr / (self.n - self.p()) as f64
    }

    pub fn homoskedastic_se(&self) -> Vec<f64> {
        diag_sqrt(&self.vcov_homoskedastic)
    }

    /// `(XᵀX)⁻¹` for the retained columns.
    pub fn xtx_inverse(&self) -> &DMatrix<f64> {
        &self.bread
    }

    /// Diagonal of the hat matrix.
    pub fn leverage(&self) -> &[f64] {
        &self.leverage
    }

    /// Sandwich covariance `(XᵀX)⁻¹ (Σ ω_i x_i x_iᵀ) (XᵀX)⁻¹`.
    pub fn robust_vcov(&self, flavor: HcFlavor) -> DMatrix<f64> {
        let n = self.n;
        let p = self.p();
        let dof_scale = n as f64 / (n - p) as f64;
        let mut meat = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let e2 = self.residuals[i] * self.residuals[i];
            let one_minus_h = 1.0 - self.leverage[i];
            let w = match flavor {
                HcFlavor::HC0 => e2,
                HcFlavor::HC1 => e2 * dof_scale,
                // h_ii = 1 forces e_i = 0, so the observation carries no weight.
                HcFlavor::HC2 if one_minus_h <= f64::EPSILON => 0.0,
                HcFlavor::HC3 if one_minus_h <= f64::EPSILON => 0.0,
                HcFlavor::HC2 => e2 / one_minus_h,
                HcFlavor::HC3 => e2 / (one_minus_h * one_minus_h),
            };
            if w == 0.0 {
                continue;
            }
            let row = self.x.row(i);
            for a in 0..p {
                let xa = row[a] * w;
                for b in a..p {
                    meat[(a, b)] += xa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                meat[(a, b)] = meat[(b, a)];
            }
        }
        let v = &self.bread * meat * &self.bread;
        symmetrize(v)
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn diag_sqrt(m: &DMatrix<f64>) -> Vec<f64> {
    m.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Fits `y ~ X` by least squares.
///
/// The first non-zero constant column is kept as the intercept; any other
/// column without variance is dropped with a warning. Remaining collinearity
/// is an error naming the offending columns.
pub fn ols_fit(design: &Design, y: &[f64], flavor: HcFlavor) -> Result<RegressionFit, StatsError> {
    let n = design.validate()?;
    if y.len() != n {
        return Err(StatsError::DimensionMismatch(format!(
            "y has {} rows, design has {n}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("response"));
    }

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut have_intercept = false;
    for (j, col) in design.columns.iter().enumerate() {
        if is_constant(col) {
            let nonzero = col.first().is_some_and(|v| *v != 0.0);
            if nonzero && !have_intercept {
                have_intercept = true;
                keep.push(j);
            } else {
                log::warn!("dropping zero-variance column {:?}", design.names[j]);
                dropped.push(design.names[j].clone());
            }
        } else {
            keep.push(j);
        }
    }
    let p = keep.len();
    if n <= p || p == 0 {
        return Err(StatsError::TooFewObservations { n, p });
    }
    let x = design.matrix(&keep, n);
    let names: Vec<String> = keep.iter().map(|&j| design.names[j].clone()).collect();

    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    // Column j of X·P is column perm[j] of X.
    let mut pmat = DMatrix::<f64>::identity(p, p);
    qr.p().permute_columns(&mut pmat);
    let perm: Vec<usize> = (0..p).map(|j| pmat.column(j).imax()).collect();

    let r00 = r[(0, 0)].abs();
    let tol = r00 * 1e-10 * (n.max(p) as f64);
    let rank = (0..p).take_while(|&k| r[(k, k)].abs() > tol).count();
    if rank < p {
        let mut bad: Vec<String> = perm[rank..].iter().map(|&j| names[j].clone()).collect();
        bad.sort();
        return Err(StatsError::RankDeficient(bad));
    }

    let yv = DVector::from_column_slice(y);
    let qty = q.transpose() * &yv;
    let z = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| StatsError::RankDeficient(names.clone()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| StatsError::RankDeficient(names.clone()))?;
    let bread_piv = &r_inv * r_inv.transpose();

    let mut coefficients = vec![0.0; p];
    let mut bread = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        coefficients[perm[a]] = z[a];
        for b in 0..p {
            bread[(perm[a], perm[b])] = bread_piv[(a, b)];
        }
    }
    let bread = symmetrize(bread);

    let fitted = &x * DVector::from_column_slice(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let leverage: Vec<f64> = (0..n).map(|i| q.row(i).iter().map(|v| v * v).sum()).collect();

    let mut fit = RegressionFit {
        coefficients,
        vcov_homoskedastic: DMatrix::zeros(p, p),
        vcov_robust: DMatrix::zeros(p, p),
        flavor,
        residuals,
        n,
        column_names: names,
        dropped_columns: dropped,
        x,
        bread,
        leverage,
    };
    fit.vcov_homoskedastic = &fit.bread * fit.sigma2();
    fit.vcov_robust = fit.robust_vcov(flavor);
    Ok(fit)
}

/// Robust standard errors of every coefficient under `flavor`.
pub fn robust_se(fit: &RegressionFit, flavor: HcFlavor) -> Vec<f64> {
    diag_sqrt(&fit.robust_vcov(flavor))
}

/// Two-sided standard-normal critical value for `level`.
pub fn normal_critical_value(level: f64) -> Result<f64, StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

/// `estimate ± z(level)·se`.
pub fn normal_interval(estimate: f64, se: f64, level: f64) -> Result<(f64, f64), StatsError> {
    let z = normal_critical_value(level)?;
    Ok((estimate - z * se, estimate + z * se))
}

/// Normal-approximation interval for coefficient `index` using the fit's
/// robust standard error.
pub fn confidence_interval(fit: &RegressionFit, index: usize, level: f64) -> Result<(f64, f64), StatsError> {
    let p = fit.p();
    if index >= p {
        return Err(StatsError::IndexOutOfRange { index, p });
    }
    let se = fit.vcov_robust[(index, index)].max(0.0).sqrt();
    normal_interval(fit.coefficients[index], se, level)
}
