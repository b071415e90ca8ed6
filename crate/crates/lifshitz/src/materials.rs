//! Dielectric response models on the imaginary-frequency axis.
//!
//! Internal unit convention: `hbar = c = 1`, with one reference frequency
//! `omega_ref`. Lengths are measured in `c / omega_ref`, frequencies in
//! `omega_ref`, and energies per unit area in `hbar omega_ref^3 / c^2`.
//! Everything in the library works with these dimensionless numbers;
//! conversions happen only at the CLI boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dielectric model evaluated at imaginary frequency `zeta`, where
/// `epsilon(i zeta)` is real, `>= 1`, and non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DielectricModel {
    /// `epsilon = 1` identically.
    Vacuum,
    /// `epsilon(i zeta) = 1 + omega_p^2 / (omega_0^2 + gamma zeta + zeta^2)`.
    DrudeLorentz {
        omega_p: f64,
        omega_0: f64,
        gamma: f64,
    },
    /// Frequency-independent dielectric constant.
    Constant { epsilon: f64 },
    /// Samples `(zeta, epsilon)` with monotone-cubic interpolation.
    Tabulated(Tabulated),
    /// Symbolic perfect-conductor marker. Never a large finite epsilon;
    /// solvers that support the marker special-case it exactly.
    PerfectConductor,
    /// Contrast-scaled wrapper: `epsilon = 1 + lambda * (inner - 1)`.
    Scaled {
        inner: Box<DielectricModel>,
        lambda: f64,
    },
}

impl DielectricModel {
    pub fn drude_lorentz(omega_p: f64, omega_0: f64, gamma: f64) -> Result<Self> {
        if omega_p < 0.0 || omega_0 < 0.0 || gamma < 0.0 {
            return Err(Error::domain(
                "Drude-Lorentz parameters must be non-negative",
            ));
        }
        Ok(DielectricModel::DrudeLorentz {
            omega_p,
            omega_0,
            gamma,
        })
    }

    /// The dielectric model used throughout the planar comparison plots:
    /// `omega_0^2 = 2 omega_p^2`, `gamma = 0`, so `epsilon(0) = 1.5`.
    pub fn reference_dielectric() -> Self {
        DielectricModel::DrudeLorentz {
            omega_p: 1.0,
            omega_0: std::f64::consts::SQRT_2,
            gamma: 0.0,
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        DielectricModel::Scaled {
            inner: Box::new(self.clone()),
            lambda,
        }
    }

    pub fn is_conductor(&self) -> bool {
        match self {
            DielectricModel::PerfectConductor => true,
            DielectricModel::Scaled { inner, .. } => inner.is_conductor(),
            _ => false,
        }
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self, DielectricModel::Vacuum)
    }

    /// `epsilon(i zeta)`.
    pub fn epsilon_at(&self, zeta: f64) -> Result<f64> {
        if zeta < 0.0 {
            return Err(Error::domain("zeta must be non-negative"));
        }
        match self {
            DielectricModel::Vacuum => Ok(1.0),
            DielectricModel::DrudeLorentz {
                omega_p,
                omega_0,
                gamma,
            } => {
                let denom = omega_0 * omega_0 + gamma * zeta + zeta * zeta;
                if denom == 0.0 {
                    return Err(Error::StaticDivergence);
                }
                Ok(1.0 + omega_p * omega_p / denom)
            }
            DielectricModel::Constant { epsilon } => Ok(*epsilon),
            DielectricModel::Tabulated(t) => t.epsilon_at(zeta),
            DielectricModel::PerfectConductor => Err(Error::domain(
                "epsilon is not finite for the perfect-conductor marker",
            )),
            DielectricModel::Scaled { inner, lambda } => {
                Ok(1.0 + lambda * (inner.epsilon_at(zeta)? - 1.0))
            }
        }
    }

    /// Dielectric contrast `delta epsilon = epsilon(i zeta) - 1`.
    pub fn contrast_at(&self, zeta: f64) -> Result<f64> {
        Ok(self.epsilon_at(zeta)? - 1.0)
    }

    /// Clausius-Mossotti replaced contrast `3 (eps - 1) / (eps + 2)`;
    /// exactly 3 for the perfect-conductor marker.
    pub fn cm_contrast_at(&self, zeta: f64) -> Result<f64> {
        if self.is_conductor() {
            let lambda = self.conductor_scale();
            // Scaled conductor: contrast lambda*inf is still infinite; the
            // CM combination saturates at 3 regardless of lambda > 0.
            return Ok(if lambda > 0.0 { 3.0 } else { 0.0 });
        }
        Ok(cm_contrast(self.epsilon_at(zeta)?))
    }

    fn conductor_scale(&self) -> f64 {
        match self {
            DielectricModel::Scaled { inner, lambda } => lambda * inner.conductor_scale(),
            DielectricModel::PerfectConductor => 1.0,
            _ => 0.0,
        }
    }

    /// `lambda_p = 2 pi c / omega_p` in internal units.
    pub fn plasma_wavelength(&self) -> Result<f64> {
        match self {
            DielectricModel::DrudeLorentz { omega_p, .. } if *omega_p > 0.0 => {
                Ok(2.0 * std::f64::consts::PI / omega_p)
            }
            DielectricModel::Scaled { inner, .. } => inner.plasma_wavelength(),
            _ => Err(Error::NoPlasmaFrequency),
        }
    }
}

/// `3 (eps - 1) / (eps + 2)` for finite `eps >= 1`.
pub fn cm_contrast(epsilon: f64) -> f64 {
    3.0 * (epsilon - 1.0) / (epsilon + 2.0)
}

/// Tabulated `epsilon(i zeta)` with monotone piecewise-cubic interpolation
/// in `log zeta` and an enforced `1 + C / zeta^2` tail beyond the last
/// sample. Below the first sample the value is clamped to the first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    zetas: Vec<f64>,
    epsilons: Vec<f64>,
    /// Interpolation abscissae: `ln(zeta + x_shift)`.
    x_shift: f64,
    /// PCHIP slopes in the log coordinate.
    slopes: Vec<f64>,
    /// Tail coefficient of `1 + C / zeta^2`, continuous at the last sample.
    tail_c: f64,
}

impl Tabulated {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Scenario(
                "tabulated model needs at least two samples".into(),
            ));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Scenario(
                    "tabulated zeta values must be strictly increasing".into(),
                ));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Scenario(
                    "tabulated epsilon values must be non-increasing in zeta".into(),
                ));
            }
        }
        if samples[0].0 < 0.0 {
            return Err(Error::Scenario("tabulated zeta values must be >= 0".into()));
        }
        if samples.iter().any(|&(_, e)| e < 1.0) {
            return Err(Error::Scenario("tabulated epsilon values must be >= 1".into()));
        }
        let zetas: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let epsilons: Vec<f64> = samples.iter().map(|s| s.1).collect();
        // A zero first sample cannot go through ln(zeta); shift by the
        // second abscissa, which keeps the coordinate monotone.
        let x_shift = if zetas[0] > 0.0 { 0.0 } else { zetas[1] };
        let xs: Vec<f64> = zetas.iter().map(|z| (z + x_shift).ln()).collect();
        let slopes = pchip_slopes(&xs, &epsilons);
        let n = zetas.len() - 1;
        let tail_c = (epsilons[n] - 1.0) * zetas[n] * zetas[n];
        Ok(Tabulated {
            zetas,
            epsilons,
            x_shift,
            slopes,
            tail_c,
        })
    }

    pub fn epsilon_at(&self, zeta: f64) -> Result<f64> {
        let n = self.zetas.len() - 1;
        if zeta <= self.zetas[0] {
            return Ok(self.epsilons[0]);
        }
        if zeta >= self.zetas[n] {
            return Ok(1.0 + self.tail_c / (zeta * zeta));
        }
        let x = (zeta + self.x_shift).ln();
        let i = match self
            .zetas
            .binary_search_by(|z| z.partial_cmp(&zeta).unwrap())
        {
            Ok(i) => return Ok(self.epsilons[i]),
            Err(i) => i - 1,
        };
        let x0 = (self.zetas[i] + self.x_shift).ln();
        let x1 = (self.zetas[i + 1] + self.x_shift).ln();
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.epsilons[i], self.epsilons[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        Ok(y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2))
    }
}

/// Fritsch-Carlson monotone slopes for a cubic Hermite interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n - 1];
    for i in 0..n - 1 {
        d[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
            let w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    // Limit endpoint slopes so the interpolant stays monotone.
    for i in [0, n - 1] {
        let di = if i == 0 { d[0] } else { d[n - 2] };
        if m[i] * di <= 0.0 {
            m[i] = 0.0;
        } else if m[i].abs() > 3.0 * di.abs() {
            m[i] = 3.0 * di;
        }
    }
    m
}
