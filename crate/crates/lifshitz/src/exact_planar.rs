//! Reference solvers for flat parallel half-spaces: the exact Lifshitz
//! energy, the perfect-conductor closed form, the pairwise-summation
//! (Clausius-Mossotti) approximation, and a Taylor-in-contrast coefficient
//! extractor used as an oracle for the perturbative engine.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::materials::DielectricModel;
use crate::quadrature::{integrate_nested, integrate_semi_infinite, QuadratureSpec, Transform};
use crate::specfun::l_kernel;

/// Two semi-infinite half-spaces separated by a vacuum gap.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarScenario {
    pub material_1: DielectricModel,
    pub material_2: DielectricModel,
    pub separation_h: f64,
}

impl PlanarScenario {
    pub fn new(
        material_1: DielectricModel,
        material_2: DielectricModel,
        separation_h: f64,
    ) -> Result<Self> {
        if !(separation_h > 0.0) {
            return Err(Error::domain("separation must be > 0"));
        }
        Ok(PlanarScenario {
            material_1,
            material_2,
            separation_h,
        })
    }

    /// Identical media on both sides.
    pub fn symmetric(material: DielectricModel, separation_h: f64) -> Result<Self> {
        Self::new(material.clone(), material, separation_h)
    }
}

/// Energy per unit area with optional per-order contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub per_order: BTreeMap<u32, f64>,
    pub est_error: f64,
    pub metadata: BTreeMap<String, String>,
}

impl EnergyBreakdown {
    pub fn scalar(total: f64, est_error: f64) -> Self {
        EnergyBreakdown {
            total,
            per_order: BTreeMap::new(),
            est_error,
            metadata: BTreeMap::new(),
        }
    }
}

/// Fresnel reflection factors `(Delta_TE, Delta_TM)` at imaginary frequency
/// for one interface, given `epsilon` and the Lifshitz variable `p >= 1`.
/// The TE numerator is evaluated as `(eps-1)/(s+p)^2` to avoid cancellation
/// at large `p`.
fn reflection_factors(epsilon: f64, p: f64) -> (f64, f64) {
    let s = (epsilon - 1.0 + p * p).sqrt();
    let d_te = (epsilon - 1.0) / ((s + p) * (s + p));
    let d_tm = (s - p * epsilon) / (s + p * epsilon);
    (d_te, d_tm)
}

fn probe_material(m: &DielectricModel) -> Result<()> {
    if m.is_conductor() {
        return Ok(());
    }
    for zeta in [1e-3, 1.0] {
        let eps = m.epsilon_at(zeta)?;
        if !(eps >= 1.0) {
            return Err(Error::domain(format!(
                "epsilon(i zeta) must be >= 1, got {eps} at zeta = {zeta}"
            )));
        }
    }
    Ok(())
}

/// Exact Lifshitz energy per unit area between two half-spaces,
///
/// `E = (1/4 pi^2) Int_0^inf dzeta zeta^2 Int_1^inf dp p
///      { ln[1 - D_TE,1 D_TE,2 e^(-2 p zeta H)]
///      + ln[1 - D_TM,1 D_TM,2 e^(-2 p zeta H)] }`.
///
/// The inner integral is computed in `t = 2 p zeta H`, which exposes the
/// `e^(-t)` decay; the outer axis uses a rational map with scale `1/H`.
pub fn exact_lifshitz_energy(
    scenario: &PlanarScenario,
    quad: &QuadratureSpec,
) -> Result<EnergyBreakdown> {
    quad.validate()?;
    if !(scenario.separation_h > 0.0) {
        return Err(Error::domain("separation must be > 0"));
    }
    if scenario.material_1.is_vacuum() || scenario.material_2.is_vacuum() {
        return Ok(EnergyBreakdown::scalar(0.0, 0.0));
    }
    probe_material(&scenario.material_1)?;
    probe_material(&scenario.material_2)?;

    let h = scenario.separation_h;
    let m1 = &scenario.material_1;
    let m2 = &scenario.material_2;
    let pref = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);

    let f = |zeta: f64, t: f64| -> f64 {
        let t0 = 2.0 * zeta * h;
        if !(t0 > 0.0) || t <= t0 {
            return 0.0;
        }
        let p = t / t0;
        let (r_te, r_tm) = if m1.is_conductor() && m2.is_conductor() {
            (1.0, 1.0)
        } else {
            let (te1, tm1) = if m1.is_conductor() {
                (1.0, -1.0)
            } else {
                match m1.epsilon_at(zeta) {
                    Ok(e) => reflection_factors(e, p),
                    Err(_) => return f64::NAN,
                }
            };
            let (te2, tm2) = if m2.is_conductor() {
                (1.0, -1.0)
            } else {
                match m2.epsilon_at(zeta) {
                    Ok(e) => reflection_factors(e, p),
                    Err(_) => return f64::NAN,
                }
            };
            (te1 * te2, tm1 * tm2)
        };
        let x = (-t).exp();
        pref * zeta * zeta * (t / (t0 * t0)) * ((-r_te * x).ln_1p() + (-r_tm * x).ln_1p())
    };

    let result = integrate_nested(
        f,
        Transform::Rational { scale: 1.0 / h },
        |zeta| Transform::ShiftedExp {
            start: 2.0 * zeta * h,
            scale: 1.0,
        },
        quad,
    )?;

    let mut metadata = BTreeMap::new();
    metadata.insert("method".into(), "exact_lifshitz".into());
    metadata.insert("rel_tol".into(), format!("{:e}", quad.rel_tol));
    metadata.insert("panels".into(), result.panels.to_string());
    Ok(EnergyBreakdown {
        total: result.value,
        per_order: BTreeMap::new(),
        est_error: result.error,
        metadata,
    })
}

/// Closed-form perfect-conductor energy `-pi^2/720 / H^3` per unit area.
pub fn perfect_conductor_energy(h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("separation must be > 0"));
    }
    let pi = std::f64::consts::PI;
    Ok(-pi * pi / 720.0 / (h * h * h))
}

/// Pairwise-summation energy with the Clausius-Mossotti contrast,
///
/// `E = -(1/64 pi^2) Int_0^inf dzeta zeta^2 cm_1(zeta) cm_2(zeta) L(zeta H)`.
pub fn pws_planar_energy(scenario: &PlanarScenario, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    if !(scenario.separation_h > 0.0) {
        return Err(Error::domain("separation must be > 0"));
    }
    if scenario.material_1.is_vacuum() || scenario.material_2.is_vacuum() {
        return Ok(0.0);
    }
    probe_material(&scenario.material_1)?;
    probe_material(&scenario.material_2)?;
    let h = scenario.separation_h;
    let m1 = &scenario.material_1;
    let m2 = &scenario.material_2;
    let pref = -1.0 / (64.0 * std::f64::consts::PI * std::f64::consts::PI);
    let f = |zeta: f64| -> f64 {
        if zeta <= 0.0 {
            return 0.0;
        }
        let c1 = match m1.cm_contrast_at(zeta) {
            Ok(c) => c,
            Err(_) => return f64::NAN,
        };
        let c2 = match m2.cm_contrast_at(zeta) {
            Ok(c) => c,
            Err(_) => return f64::NAN,
        };
        let l = match l_kernel(zeta * h) {
            Ok(l) => l,
            Err(_) => return f64::NAN,
        };
        pref * zeta * zeta * c1 * c2 * l
    };
    let result = integrate_semi_infinite(f, Transform::Rational { scale: 1.0 / h }, quad)?;
    if result.value.is_nan() {
        return Err(Error::ConvergenceFailure(
            "pairwise-summation integrand failed to evaluate".into(),
        ));
    }
    Ok(result.value)
}

/// Taylor coefficients `c_n` of `E(lambda) = sum c_n lambda^n`, where both
/// contrasts are scaled by the coupling `lambda`. Samples `lambda_k = k/m`
/// with `m = max_order + 2` and solves the square Vandermonde system for
/// powers `1..=m`; `per_order[n] = c_n` for `n = 1..=max_order` and
/// `total = sum of per_order`.
pub fn taylor_in_contrast(
    scenario: &PlanarScenario,
    max_order: u32,
    quad: &QuadratureSpec,
) -> Result<EnergyBreakdown> {
    if !(2..=8).contains(&max_order) {
        return Err(Error::domain("max_order must lie in [2, 8]"));
    }
    if scenario.material_1.is_conductor() || scenario.material_2.is_conductor() {
        return Err(Error::domain(
            "Taylor extraction needs finite dielectric contrast, not a conductor",
        ));
    }
    // Sample count: the fit resolves powers lambda^1..lambda^m, and orders
    // above m leak into the low coefficients. A floor of 8 keeps that
    // truncation leakage below the quadrature noise even when only the
    // leading coefficient is requested.
    let m = ((max_order + 2) as usize).max(8);
    let sample_quad = quad.tightened();
    let mut energies = Vec::with_capacity(m);
    let mut max_quad_err = 0.0_f64;
    for k in 1..=m {
        let lambda = k as f64 / m as f64;
        let scen = PlanarScenario {
            material_1: scenario.material_1.scaled(lambda),
            material_2: scenario.material_2.scaled(lambda),
            separation_h: scenario.separation_h,
        };
        let e = exact_lifshitz_energy(&scen, &sample_quad)?;
        max_quad_err = max_quad_err.max(e.est_error);
        energies.push(e.total);
    }

    let a = DMatrix::from_fn(m, m, |k, j| {
        let lambda = (k + 1) as f64 / m as f64;
        lambda.powi(j as i32 + 1)
    });
    let b = DVector::from_vec(energies);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e12) {
        return Err(Error::IllConditioned(cond));
    }
    let coeffs = svd
        .solve(&b, 0.0)
        .map_err(|m| Error::ConvergenceFailure(m.to_string()))?;

    let mut per_order = BTreeMap::new();
    for n in 1..=max_order {
        per_order.insert(n, coeffs[(n - 1) as usize]);
    }
    let total: f64 = per_order.values().sum();
    // Noise on each coefficient is bounded by the quadrature error amplified
    // through the inverse Vandermonde.
    let est_error = cond.sqrt() * max_quad_err * m as f64;

    let mut metadata = BTreeMap::new();
    metadata.insert("method".into(), "taylor_in_contrast".into());
    metadata.insert("samples".into(), m.to_string());
    metadata.insert("condition".into(), format!("{cond:.3e}"));
    Ok(EnergyBreakdown {
        total,
        per_order,
        est_error,
        metadata,
    })
}

/// One row of the planar comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Row {
    pub h: f64,
    pub h_over_lambda_p: f64,
    pub e_exact: f64,
    /// `(N, [sum_(2 <= n <= N) c_n] / E_exact)` per requested order.
    pub ratios: Vec<(u32, f64)>,
    /// `pws_planar_energy / E_exact`.
    pub ratio_cm: f64,
}

/// Ratio table of truncated contrast series and the pairwise-summation
/// approximation to the exact energy, for identical media on both sides.
pub fn figure2_table(
    h_values: &[f64],
    model: &DielectricModel,
    orders: &[u32],
    quad: &QuadratureSpec,
) -> Result<Vec<Figure2Row>> {
    if orders.is_empty() {
        return Err(Error::domain("at least one truncation order is required"));
    }
    let max_order = *orders.iter().max().unwrap();
    let lambda_p = model.plasma_wavelength()?;
    let mut rows = Vec::with_capacity(h_values.len());
    for &h in h_values {
        let scen = PlanarScenario::symmetric(model.clone(), h)?;
        let exact = exact_lifshitz_energy(&scen, quad)?;
        let taylor = taylor_in_contrast(&scen, max_order, quad)?;
        let pws = pws_planar_energy(&scen, quad)?;
        let ratios = orders
            .iter()
            .map(|&n_max| {
                let partial: f64 = taylor
                    .per_order
                    .iter()
                    .filter(|&(&n, _)| n >= 2 && n <= n_max)
                    .map(|(_, c)| c)
                    .sum();
                (n_max, partial / exact.total)
            })
            .collect();
        rows.push(Figure2Row {
            h,
            h_over_lambda_p: h / lambda_p,
            e_exact: exact.total,
            ratios,
            ratio_cm: pws / exact.total,
        });
    }
    Ok(rows)
}
