//! Truncated self-adjoint positive operators, spectral fields and the
//! Sobolev-type norms ||w||_s^2 = sum lambda_k^{2s} c_k^2.

use crate::error::{FdError, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    /// -d^2/dx^2 on (0,1) with Dirichlet conditions: lambda_k = k^2 pi^2,
    /// phi_k = sqrt(2) sin(k pi x). Nonlinear terms are evaluated on
    /// `collocation` interior points.
    DirichletLaplacian1D { n: usize, collocation: usize },
    /// Arbitrary eigenvalue list with no physical space attached.
    ExplicitDiagonal,
}

/// DST-I of a fixed length, computed through a complex FFT of the odd extension.
struct Dst {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dst").field("len", &self.len).finish()
    }
}

impl Dst {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dst { len, fft: planner.plan_fft_forward(2 * (len + 1)) }
    }

    /// out_j = sum_{k=1..len} a_k sin(pi j k / (len+1)), j = 1..len
    fn apply(&self, a: &[f64]) -> Vec<f64> {
        let m = self.len;
        let n2 = 2 * (m + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); n2];
        for (k, &v) in a.iter().enumerate().take(m) {
            buf[k + 1] = Complex64::new(v, 0.0);
            buf[n2 - k - 1] = Complex64::new(-v, 0.0);
        }
        self.fft.process(&mut buf);
        (1..=m).map(|j| -0.5 * buf[j].im).collect()
    }
}

#[derive(Debug)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    basis: BasisKind,
    dst: Option<Dst>,
}

impl SpectralOperator {
    pub fn dirichlet_laplacian(n: usize, collocation: usize) -> Result<Arc<Self>> {
        if n == 0 {
            return Err(FdError::Configuration("operator needs at least one mode".into()));
        }
        if collocation < 2 * n {
            return Err(FdError::Configuration(format!(
                "collocation size {collocation} must be at least twice the mode count {n}"
            )));
        }
        let eigenvalues = (1..=n).map(|k| (k as f64 * PI).powi(2)).collect();
        Ok(Arc::new(SpectralOperator {
            eigenvalues,
            basis: BasisKind::DirichletLaplacian1D { n, collocation },
            dst: Some(Dst::new(collocation)),
        }))
    }

    pub fn explicit_diagonal(eigenvalues: Vec<f64>) -> Result<Arc<Self>> {
        if eigenvalues.is_empty() {
            return Err(FdError::Configuration("operator needs at least one mode".into()));
        }
        if !(eigenvalues[0] > 0.0) || eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(FdError::Configuration("eigenvalues must be positive and finite".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FdError::Configuration("eigenvalues must be strictly increasing".into()));
        }
        Ok(Arc::new(SpectralOperator { eigenvalues, basis: BasisKind::ExplicitDiagonal, dst: None }))
    }

    /// The same operator restricted to its first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<Arc<Self>> {
        match self.basis {
            BasisKind::DirichletLaplacian1D { collocation, .. } => Self::dirichlet_laplacian(n, collocation),
            BasisKind::ExplicitDiagonal => Self::explicit_diagonal(self.eigenvalues[..n.min(self.n())].to_vec()),
        }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Spectral lower bound lambda_1.
    pub fn theta(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn basis(&self) -> &BasisKind {
        &self.basis
    }

    /// Number of physical collocation points, if any.
    pub fn collocation(&self) -> Option<usize> {
        match self.basis {
            BasisKind::DirichletLaplacian1D { collocation, .. } => Some(collocation),
            BasisKind::ExplicitDiagonal => None,
        }
    }

    pub fn has_physical_space(&self) -> bool {
        self.dst.is_some()
    }

    /// Interior collocation nodes x_j = j/(M+1).
    pub fn grid_points(&self) -> Option<Vec<f64>> {
        let m = self.collocation()?;
        Some((1..=m).map(|j| j as f64 / (m + 1) as f64).collect())
    }

    /// Physical samples of sum_k c_k phi_k on the collocation grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let dst = self.dst.as_ref().ok_or_else(|| {
            FdError::Configuration("synthesis needs a basis with a physical grid".into())
        })?;
        let mut s = dst.apply(coeffs);
        let r2 = 2f64.sqrt();
        s.iter_mut().for_each(|v| *v *= r2);
        Ok(s)
    }

    /// Coefficients of the first n modes from physical samples.
    pub fn analyze(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let dst = self.dst.as_ref().ok_or_else(|| {
            FdError::Configuration("analysis needs a basis with a physical grid".into())
        })?;
        if samples.len() != dst.len {
            return Err(FdError::Configuration(format!(
                "expected {} samples, got {}",
                dst.len,
                samples.len()
            )));
        }
        let s = dst.apply(samples);
        let scale = 2f64.sqrt() / (dst.len + 1) as f64;
        Ok(s[..self.n()].iter().map(|v| v * scale).collect())
    }
}

fn same_operator(a: &Arc<SpectralOperator>, b: &Arc<SpectralOperator>) -> bool {
    Arc::ptr_eq(a, b) || (a.eigenvalues == b.eigenvalues && a.basis == b.basis)
}

/// Coefficient vector over the eigenbasis of an operator.
#[derive(Debug, Clone)]
pub struct SpectralField {
    op: Arc<SpectralOperator>,
    coeffs: Vec<f64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        same_operator(&self.op, &other.op) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn new(op: Arc<SpectralOperator>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != op.n() {
            return Err(FdError::Configuration(format!(
                "field has {} coefficients, operator has {} modes",
                coeffs.len(),
                op.n()
            )));
        }
        Ok(SpectralField { op, coeffs })
    }

    /// Build from a possibly shorter list, zero-padding the tail.
    pub fn from_prefix(op: Arc<SpectralOperator>, prefix: &[f64]) -> Result<Self> {
        if prefix.len() > op.n() {
            return Err(FdError::Configuration(format!(
                "{} coefficients given for {} modes",
                prefix.len(),
                op.n()
            )));
        }
        let mut c = vec![0.0; op.n()];
        c[..prefix.len()].copy_from_slice(prefix);
        Ok(SpectralField { op, coeffs: c })
    }

    pub fn zeros(op: Arc<SpectralOperator>) -> Self {
        let n = op.n();
        SpectralField { op, coeffs: vec![0.0; n] }
    }

    pub fn op(&self) -> &Arc<SpectralOperator> {
        &self.op
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm_raw(self.op.eigenvalues(), &self.coeffs, s)
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// c_k -> lambda_k^beta c_k
    pub fn apply_power(&self, beta: f64) -> SpectralField {
        let coeffs = self
            .op
            .eigenvalues()
            .iter()
            .zip(&self.coeffs)
            .map(|(l, c)| if beta == 0.0 { *c } else { l.powf(beta) * c })
            .collect();
        SpectralField { op: self.op.clone(), coeffs }
    }

    fn check_same(&self, other: &SpectralField) -> Result<()> {
        if !same_operator(&self.op, &other.op) {
            return Err(FdError::Configuration("fields belong to different operators".into()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check_same(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(SpectralField { op: self.op.clone(), coeffs })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check_same(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(SpectralField { op: self.op.clone(), coeffs })
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        SpectralField { op: self.op.clone(), coeffs: self.coeffs.iter().map(|c| a * c).collect() }
    }

    pub fn synthesize(&self) -> Result<Vec<f64>> {
        self.op.synthesize(&self.coeffs)
    }

    pub fn analyze(op: Arc<SpectralOperator>, samples: &[f64]) -> Result<SpectralField> {
        let coeffs = op.analyze(samples)?;
        Ok(SpectralField { op, coeffs })
    }

    /// Rows (k, lambda_k, c_k) with 1-based k.
    pub fn csv_rows(&self) -> Vec<(usize, f64, f64)> {
        self.op
            .eigenvalues()
            .iter()
            .zip(&self.coeffs)
            .enumerate()
            .map(|(i, (l, c))| (i + 1, *l, *c))
            .collect()
    }
}

pub fn sobolev_norm_raw(eigenvalues: &[f64], coeffs: &[f64], s: f64) -> f64 {
    if s == 0.0 {
        return coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    }
    eigenvalues
        .iter()
        .zip(coeffs)
        .map(|(l, c)| l.powf(2.0 * s) * c * c)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        let op = SpectralOperator::dirichlet_laplacian(3, 8).unwrap();
        let w = SpectralField::new(op.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.sobolev_norm(0.0), 1.0);
        assert!((w.sobolev_norm(1.0) - PI * PI).abs() < 1e-13);
        let w = SpectralField::from_prefix(op, &[1.0, 1.0]).unwrap();
        assert!((w.sobolev_norm(0.5) - PI * 5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn power_examples() {
        let op = SpectralOperator::dirichlet_laplacian(2, 4).unwrap();
        let w = SpectralField::new(op.clone(), vec![1.0, 0.0]).unwrap();
        assert_eq!(w.apply_power(0.0), w);
        assert!((w.apply_power(1.0).coeffs()[0] - PI * PI).abs() < 1e-13);
        let w = SpectralField::new(op, vec![0.0, 1.0]).unwrap();
        assert!((w.apply_power(0.5).coeffs()[1] - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn first_mode_samples() {
        let op = SpectralOperator::dirichlet_laplacian(4, 9).unwrap();
        let w = SpectralField::from_prefix(op.clone(), &[1.0]).unwrap();
        let u = w.synthesize().unwrap();
        for (j, x) in op.grid_points().unwrap().iter().enumerate() {
            assert!((u[j] - 2f64.sqrt() * (PI * x).sin()).abs() < 1e-14);
        }
        let back = SpectralField::analyze(op.clone(), &u).unwrap();
        assert!(back.sub(&w).unwrap().norm() < 1e-14);
        assert!(SpectralField::zeros(op).synthesize().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_operators() {
        assert!(SpectralOperator::dirichlet_laplacian(8, 15).is_err());
        assert!(SpectralOperator::explicit_diagonal(vec![1.0, 1.0]).is_err());
        assert!(SpectralOperator::explicit_diagonal(vec![-1.0]).is_err());
        let d = SpectralOperator::explicit_diagonal(vec![1.0, 2.0]).unwrap();
        assert!(d.synthesize(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn mixing_operators_fails() {
        let a = SpectralOperator::dirichlet_laplacian(2, 4).unwrap();
        let b = SpectralOperator::explicit_diagonal(vec![1.0, 2.0]).unwrap();
        let x = SpectralField::zeros(a);
        let y = SpectralField::zeros(b);
        assert!(x.sub(&y).is_err());
    }
}
