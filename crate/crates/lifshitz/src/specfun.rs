//! Special functions and closed-form kernels: exponential integrals `E_n`,
//! the incomplete gamma `Gamma(0, z)`, the proximity kernel `L(u)` and the
//! rough-surface kernel `W(y, h)`.

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadratureSpec, Transform};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 400;

/// Tolerances for the kernel quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEvalControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for KernelEvalControls {
    fn default() -> Self {
        KernelEvalControls {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 2048,
        }
    }
}

impl KernelEvalControls {
    fn quad_spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_panels: self.max_subdivisions,
            panel_order: 16,
            parallel: false,
        }
    }
}

/// Exponential integral `E_n(z) = int_1^inf e^{-z t} / t^n dt` for `z > 0`.
///
/// Power series with a log term for `z <= 1`, continued fraction above.
pub fn exp_integral_en(n: u32, z: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::domain("E_n requires n >= 1"));
    }
    if !(z > 0.0) {
        return Err(Error::domain("E_n requires z > 0"));
    }
    let nf = n as f64;
    if z > 1.0 {
        // Modified Lentz continued fraction.
        let mut b = z + nf;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let a = -(i as f64) * (nf - 1.0 + i as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                return Ok(h * (-z).exp());
            }
        }
        Err(Error::ConvergenceFailure("E_n continued fraction".into()))
    } else {
        let mut ans = if n == 1 {
            -z.ln() - EULER_GAMMA
        } else {
            1.0 / (nf - 1.0)
        };
        let mut fact = 1.0;
        for i in 1..=MAX_ITER {
            fact *= -z / i as f64;
            let del = if i as u32 != n - 1 {
                -fact / (i as f64 - (nf - 1.0))
            } else {
                // psi(n) = -gamma + sum_{k=1}^{n-1} 1/k
                let psi = -EULER_GAMMA + (1..n).map(|k| 1.0 / k as f64).sum::<f64>();
                fact * (psi - z.ln())
            };
            ans += del;
            if del.abs() < ans.abs() * 1e-16 {
                return Ok(ans);
            }
        }
        Err(Error::ConvergenceFailure("E_n power series".into()))
    }
}

/// Upper incomplete gamma `Gamma(0, z) = int_z^inf e^{-t}/t dt` for `z > 0`.
///
/// Evaluated on its own (series / Lentz continued fraction in the gamma
/// form), not by delegating to `E_1`; the identity `Gamma(0, z) = E_1(z)`
/// is asserted in the tests instead.
pub fn incomplete_gamma0(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::domain("Gamma(0, z) requires z > 0"));
    }
    if z < 1.0 {
        // Gamma(0, z) = -gamma - ln z + sum_{k>=1} (-1)^{k+1} z^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=MAX_ITER {
            term *= -z / k as f64;
            let del = -term / k as f64;
            sum += del;
            if del.abs() < 1e-17 * (sum.abs() + 1.0) {
                return Ok(-EULER_GAMMA - z.ln() + sum);
            }
        }
        Err(Error::ConvergenceFailure("Gamma(0, z) series".into()))
    } else {
        // Continued fraction for Gamma(a, z) at a = 0.
        let mut b = z + 1.0;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                return Ok((-z).exp() * h);
            }
        }
        Err(Error::ConvergenceFailure("Gamma(0, z) continued fraction".into()))
    }
}

/// Coefficients of the fused small-`u` expansion of `L(u)`:
/// `L(u) = 1/u^2 + 4 (1 - u^2) ln u + sum_k A[k] u^k`.
///
/// A[0] = 4 gamma + 4 ln 2 - 1 and A[2] = 8 - 4 gamma - 4 ln 2; the
/// rational coefficients come from multiplying the `E_1` series by
/// `4 (u^2 - 1)` and fusing with the expanded `e^{-2u}` polynomial term.
const L_SERIES: [f64; 10] = [
    4.081_451_381_845_913,
    -28.0 / 3.0,
    2.918_548_618_154_087_3,
    88.0 / 45.0,
    -4.0 / 9.0,
    184.0 / 1575.0,
    -4.0 / 135.0,
    688.0 / 99225.0,
    -1.0 / 675.0,
    568.0 / 1_964_655.0,
];

const L_SERIES_CUT: f64 = 0.05;

/// Proximity kernel
/// `L(u) = 4 (u^2 - 1) E_1(2u) + e^{-2u} (1 + 2u + u^2 - 2u^3) / u^2`.
///
/// Below `u = 0.05` the two pieces cancel against each other, so the fused
/// series expansion is used there instead.
pub fn l_kernel(u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::domain("L(u) requires u > 0"));
    }
    if u < L_SERIES_CUT {
        let mut poly = 0.0;
        for &a in L_SERIES.iter().rev() {
            poly = poly * u + a;
        }
        Ok(1.0 / (u * u) + 4.0 * (1.0 - u * u) * u.ln() + poly)
    } else {
        let e1 = exp_integral_en(1, 2.0 * u)?;
        let pol = 1.0 + 2.0 * u + u * u - 2.0 * u * u * u;
        Ok(4.0 * (u * u - 1.0) * e1 + (-2.0 * u).exp() * pol / (u * u))
    }
}

/// Rough-surface kernel of the second-order energy:
/// `W(y, h) = 8 Gamma(0, 2 sqrt(y^2 + h^2)) + int_1^inf ds s^{-3/2}
///  e^{-2 sqrt(y^2 + h^2 s)} [3/(y^2+h^2 s)^2 + 6/(y^2+h^2 s)^{3/2}
///  + 4 (1 - h^2 s)/(y^2 + h^2 s)]`.
///
/// The `s`-integral is transformed by `w = sqrt(y^2 + h^2 s - y^2)`, i.e.
/// `w^2 = v^2 - y^2` with `v = sqrt(y^2 + h^2 s)`, which removes the
/// `(v^2 - y^2)^{-3/2}` boundary layer near the lower limit and leaves a
/// smooth integrand on `[h, inf)`.
pub fn w_kernel(y: f64, h: f64, controls: &KernelEvalControls) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("W(y, h) requires h > 0"));
    }
    let y = y.abs();
    let v0 = y.hypot(h);
    let spec = controls.quad_spec();
    // The incomplete-gamma head, 8 Gamma(0, 2 v0) = 8 Int_{v0}^inf e^{-2v}/v,
    // is folded into the same integrand: head and tail cancel strongly for
    // y >> h, so summing two separately converged integrals would amplify
    // their quadrature errors by the cancellation ratio.
    let integrand = |w: f64| -> f64 {
        let u = y * y + w * w;
        let v = u.sqrt();
        let bracket = 8.0 * w / u
            + 2.0 * h / (w * w) * (3.0 / (u * u) + 6.0 / (u * v) + 4.0 * (1.0 - w * w) / u);
        (-2.0 * v).exp() * bracket
    };
    // Truncate where the exponential factor has decayed by e^{-2 t_cut}
    // relative to its value at the lower endpoint; the discarded tail is
    // then negligible against any achievable tolerance.  The upper limit
    // satisfies y^2 + w_max^2 = (v0 + t_cut)^2, written to avoid
    // cancellation via v0 - y = h^2 / (v0 + y).
    let t_cut = 20.0;
    let w_max = ((t_cut + h * h / (v0 + y)) * (t_cut + v0 + y)).sqrt();
    // Integrate on a logarithmic scale in w: for h << 1 the integrand has a
    // ~1/w^2 spike of width h at the lower endpoint, which linear bisection
    // of an O(10)-long interval cannot resolve within the panel budget.
    let log_integrand = |t: f64| -> f64 {
        let w = t.exp();
        integrand(w) * w
    };
    let whole = quadrature::integrate(
        log_integrand,
        Transform::Finite {
            a: h.ln(),
            b: w_max.ln(),
        },
        &spec,
    )?;
    Ok(whole.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent quadrature oracle for E_n: direct adaptive integration of
    /// the defining integral, sharing no code path with the series or the
    /// continued fraction.
    fn en_oracle(n: i32, z: f64) -> f64 {
        quadrature::integrate(
            |t| (1.0 + t).powi(-n) * (-z * (1.0 + t)).exp(),
            Transform::ShiftedExp { start: 0.0, scale: 1.0 / z },
            &QuadratureSpec {
                rel_tol: 1e-12,
                abs_tol: 1e-16,
                ..QuadratureSpec::default()
            },
        )
        .map(|r| r.value)
        .unwrap()
    }

    #[test]
    fn e1_at_one_matches_oracle() {
        // frozen from the quadrature oracle
        let frozen = 0.219_383_934_395_520_3;
        assert_relative_eq!(en_oracle(1, 1.0), frozen, max_relative = 1e-11);
        assert_relative_eq!(exp_integral_en(1, 1.0).unwrap(), frozen, max_relative = 1e-12);
    }

    #[test]
    fn e2_small_z_limit() {
        // E_2(0+) = 1/(n-1) = 1
        assert_relative_eq!(exp_integral_en(2, 1e-9).unwrap(), 1.0, max_relative = 1e-7);
    }

    #[test]
    fn en_recurrence_at_half() {
        // E_2(z) = e^{-z} - z E_1(z), both sides from the quadrature oracle
        let z = 0.5;
        let lhs = en_oracle(2, z);
        let rhs = (-z).exp() - z * en_oracle(1, z);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        let lhs_impl = exp_integral_en(2, z).unwrap();
        let rhs_impl = (-z).exp() - z * exp_integral_en(1, z).unwrap();
        assert_relative_eq!(lhs_impl, rhs_impl, max_relative = 1e-13);
        assert_relative_eq!(lhs_impl, lhs, max_relative = 1e-10);
    }

    #[test]
    fn en_domain_errors() {
        assert!(exp_integral_en(1, 0.0).is_err());
        assert!(exp_integral_en(1, -1.0).is_err());
        assert!(exp_integral_en(0, 1.0).is_err());
    }

    #[test]
    fn gamma0_equals_e1() {
        for z in [0.1, 0.5, 1.0, 2.0, 10.0, 40.0] {
            let g = incomplete_gamma0(z).unwrap();
            let e = exp_integral_en(1, z).unwrap();
            assert!((g - e).abs() <= 1e-14 * (1.0 + g.abs()), "z={z}: {g} vs {e}");
        }
    }

    #[test]
    fn gamma0_at_two_matches_oracle() {
        // frozen from the quadrature oracle of int_2^inf e^{-t}/t dt
        let frozen = 0.048_900_510_708_061_12;
        let oracle = quadrature::integrate(
            |t| (-t).exp() / t,
            Transform::ShiftedExp { start: 2.0, scale: 1.0 },
            &QuadratureSpec {
                rel_tol: 1e-12,
                abs_tol: 1e-16,
                ..QuadratureSpec::default()
            },
        )
        .unwrap()
        .value;
        assert_relative_eq!(oracle, frozen, max_relative = 1e-11);
        assert_relative_eq!(incomplete_gamma0(2.0).unwrap(), frozen, max_relative = 1e-12);
    }

    #[test]
    fn gamma0_asymptotic() {
        // z -> inf: Gamma(0,z) z e^z -> 1; oracle is the asymptotic series
        // Gamma(0,z) ~ e^{-z}/z (1 - 1/z + 2/z^2 - 6/z^3)
        for z in [30.0f64, 100.0, 300.0] {
            let asym = (1.0 - 1.0 / z + 2.0 / (z * z) - 6.0 / (z * z * z)) / z * (-z).exp();
            let g = incomplete_gamma0(z).unwrap();
            assert_relative_eq!(g, asym, max_relative = 1e-5);
            assert_relative_eq!(g * z * z.exp(), 1.0, max_relative = 0.05);
        }
    }

    #[test]
    fn l_kernel_leading_divergence() {
        // u -> 0+: u^2 L(u) -> 1
        for u in [1e-4, 1e-3, 1e-2] {
            assert_relative_eq!(u * u * l_kernel(u).unwrap(), 1.0, max_relative = 0.05);
        }
        assert_relative_eq!(1e-8 * l_kernel(1e-4).unwrap(), 1.0, max_relative = 1e-3);
    }

    #[test]
    fn l_kernel_series_matches_direct_at_crossover() {
        // the two evaluation branches agree near the switch point
        for u in [0.045, 0.0499, 0.05, 0.06, 0.08] {
            let direct = {
                let e1 = exp_integral_en(1, 2.0 * u).unwrap();
                let pol = 1.0 + 2.0 * u + u * u - 2.0 * u * u * u;
                4.0 * (u * u - 1.0) * e1 + (-2.0 * u).exp() * pol / (u * u)
            };
            assert_relative_eq!(l_kernel(u).unwrap(), direct, max_relative = 1e-11);
        }
    }

    #[test]
    fn l_kernel_frozen_values() {
        // frozen from high-precision direct evaluation
        for (u, want) in [
            (0.05, 391.669_351_017_961_2),
            (0.1, 94.060_978_816_852),
            (0.5, 2.284_883_726_184_977_8),
            (1.0, 0.270_670_566_473_225_4),
            (2.0, 0.013_299_860_862_902_062),
        ] {
            assert_relative_eq!(l_kernel(u).unwrap(), want, max_relative = 1e-10);
        }
    }

    #[test]
    fn l_kernel_moment_is_23_over_30() {
        let r = quadrature::integrate(
            |u| u * u * l_kernel(u).unwrap(),
            Transform::Rational { scale: 0.5 },
            &QuadratureSpec {
                rel_tol: 1e-10,
                abs_tol: 1e-14,
                ..QuadratureSpec::default()
            },
        )
        .unwrap();
        assert_relative_eq!(r.value, 23.0 / 30.0, max_relative = 1e-8);
    }

    #[test]
    fn l_kernel_retarded_tail() {
        // u L(u) e^{2u} -> 1 as u -> inf: the 2u e^{-2u} pieces of the two
        // terms cancel and the e^{-2u}/u remainder survives. Frozen from the
        // high-precision large-u oracle: 1.0654..., 1.0294..., 1.0137... at
        // u = 10, 20, 40.
        for (u, want) in [(10.0, 1.065_440_164), (20.0, 1.029_353_342), (40.0, 1.013_663_236)] {
            let v = l_kernel(u).unwrap() * (2.0 * u).exp() * u;
            assert_relative_eq!(v, want, max_relative = 1e-6);
        }
    }

    #[test]
    fn l_kernel_positive_decreasing() {
        let mut prev = f64::INFINITY;
        let n = 60;
        for k in 0..=n {
            let u = 1e-3 * (10.0f64 / 1e-3).powf(k as f64 / n as f64);
            let v = l_kernel(u).unwrap();
            assert!(v > 0.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn w_kernel_frozen_probe_values() {
        // frozen from high-precision direct evaluation of the s-integral
        let c = KernelEvalControls::default();
        for (y, h, want) in [
            (0.0, 1.0, 0.658_210_102_636_084),
            (1.0, 1.0, 0.164_171_874_182_013),
            (0.5, 0.3, 15.806_345_093_645_1),
        ] {
            assert_relative_eq!(w_kernel(y, h, &c).unwrap(), want, max_relative = 1e-8);
        }
    }

    #[test]
    fn w_kernel_even_in_y() {
        let c = KernelEvalControls::default();
        let a = w_kernel(0.7, 0.9, &c).unwrap();
        let b = w_kernel(-0.7, 0.9, &c).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn w_kernel_on_axis_exponential_decay() {
        // W(0, h) e^{2h} stays bounded as h grows
        let c = KernelEvalControls::default();
        let mut prev = f64::INFINITY;
        for h in [2.0, 4.0, 8.0, 16.0, 32.0] {
            let v = w_kernel(0.0, h, &c).unwrap() * (2.0 * h).exp();
            assert!(v.is_finite() && v > 0.0);
            assert!(v < prev * 1.05);
            prev = v;
        }
        assert!(prev < 10.0);
    }

    #[test]
    fn w_transverse_integral_equals_l() {
        // int_0^inf u W(u, h) du = L(h): the bridge between the rough-surface
        // kernel and the proximity kernel, both sides by quadrature.
        let c = KernelEvalControls {
            rel_tol: 1e-9,
            abs_tol: 1e-13,
            max_subdivisions: 2048,
        };
        for h in [0.1f64, 1.0, 3.0] {
            let lhs = quadrature::integrate(
                |u| u * w_kernel(u, h, &c).unwrap(),
                Transform::Rational { scale: h.max(0.5) },
                &QuadratureSpec {
                    rel_tol: 1e-8,
                    abs_tol: 1e-13,
                    ..QuadratureSpec::default()
                },
            )
            .unwrap();
            let rhs = l_kernel(h).unwrap();
            assert_relative_eq!(lhs.value, rhs, max_relative = 1e-5);
        }
    }

    #[test]
    fn w_kernel_domain_errors() {
        let c = KernelEvalControls::default();
        assert!(w_kernel(0.0, 0.0, &c).is_err());
        assert!(w_kernel(0.0, -1.0, &c).is_err());
        assert!(l_kernel(0.0).is_err());
        assert!(incomplete_gamma0(0.0).is_err());
    }

    #[test]
    fn kernels_deterministic() {
        let c = KernelEvalControls::default();
        let a = w_kernel(0.3, 0.8, &c).unwrap();
        let b = w_kernel(0.3, 0.8, &c).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(
            l_kernel(0.7).unwrap().to_bits(),
            l_kernel(0.7).unwrap().to_bits()
        );
    }
}
