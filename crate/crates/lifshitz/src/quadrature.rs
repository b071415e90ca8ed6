//! Deterministic adaptive Gauss-Legendre quadrature on semi-infinite domains.
//!
//! Every integral in this crate runs through [`integrate`] or one of its
//! variants: the frequency integrals over `[0, inf)`, the `p`- and
//! `q`-integrals of the planar formulas, and the kernel quadratures in
//! `specfun`. Integrands are mapped onto the unit interval by one of the
//! declared [`Transform`]s and refined by dyadic panel splitting until the
//! requested tolerance is met. No randomized method is used anywhere and the
//! reduction order is fixed, so identical inputs give bit-identical results
//! regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tolerances and panel controls shared by all integration routines.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    pub panel_order: usize,
    /// Evaluate the nodes of a panel on the rayon pool. The weighted
    /// reduction stays sequential, so this never changes the result.
    pub parallel: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-6,
            abs_tol: 1e-12,
            max_panels: 4096,
            panel_order: 16,
            parallel: false,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::domain("quadrature tolerances must be positive"));
        }
        if self.panel_order < 2 {
            return Err(Error::domain("panel_order must be at least 2"));
        }
        Ok(())
    }

    /// Spec for the inner integral of a nested pair: one decade tighter.
    pub fn tightened(&self) -> Self {
        QuadratureSpec {
            rel_tol: self.rel_tol / 10.0,
            abs_tol: self.abs_tol / 10.0,
            ..self.clone()
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Variable transforms from the unit interval onto the integration domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `x = scale * u / (1 - u)`, for integrands with power-law tails.
    Rational { scale: f64 },
    /// `x = -scale * ln(1 - u)`, for exponentially decaying integrands.
    Exp { scale: f64 },
    /// `x = start - scale * ln(1 - u)`, exponential decay from a lower limit.
    ShiftedExp { start: f64, scale: f64 },
    /// Plain affine map onto `[a, b]`.
    Finite { a: f64, b: f64 },
}

impl Transform {
    /// Maps `u` in `(0, 1)` to `(x, dx/du)`.
    #[inline]
    pub fn map(&self, u: f64) -> (f64, f64) {
        match *self {
            Transform::Rational { scale } => {
                let om = 1.0 - u;
                (scale * u / om, scale / (om * om))
            }
            Transform::Exp { scale } => {
                let om = 1.0 - u;
                (-scale * om.ln(), scale / om)
            }
            Transform::ShiftedExp { start, scale } => {
                let om = 1.0 - u;
                (start - scale * om.ln(), scale / om)
            }
            Transform::Finite { a, b } => (a + (b - a) * u, b - a),
        }
    }
}

/// Value and conservative error estimate of one integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Newton iteration on P_n, starting from the Chebyshev estimate.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            pp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn new() -> Self {
        Kahan { sum: 0.0, c: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

struct Adaptive<'a, F> {
    f: &'a F,
    transform: Transform,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    spec: &'a QuadratureSpec,
    dim: usize,
    totals: Vec<Kahan>,
    err_total: f64,
    panels: usize,
    scale: f64,
}

const MAX_DEPTH: usize = 40;

impl<F> Adaptive<'_, F>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    fn eval_panel(&self, a: f64, b: f64) -> Vec<f64> {
        let width = b - a;
        let eval_at = |i: usize| -> Vec<f64> {
            let u = a + width * self.nodes[i];
            let (x, jac) = self.transform.map(u);
            let mut v = (self.f)(x);
            for vi in v.iter_mut() {
                *vi *= jac * width * self.weights[i];
            }
            v
        };
        let per_node: Vec<Vec<f64>> = if self.spec.parallel {
            (0..self.nodes.len()).into_par_iter().map(eval_at).collect()
        } else {
            (0..self.nodes.len()).map(eval_at).collect()
        };
        // Sequential, fixed-order reduction.
        let mut out = vec![0.0; self.dim];
        for v in &per_node {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += vi;
            }
        }
        out
    }

    fn refine(&mut self, a: f64, b: f64, whole: &[f64], depth: usize) -> Result<()> {
        if self.panels + 2 > self.spec.max_panels {
            return Err(Error::ConvergenceFailure(format!(
                "panel budget of {} exhausted (interval [{a:.6e}, {b:.6e}], depth {depth})",
                self.spec.max_panels
            )));
        }
        let mid = 0.5 * (a + b);
        let left = self.eval_panel(a, mid);
        let right = self.eval_panel(mid, b);
        self.panels += 2;
        let mut diff: f64 = 0.0;
        for i in 0..self.dim {
            diff = diff.max((left[i] + right[i] - whole[i]).abs());
        }
        let tol = (b - a) * (self.spec.rel_tol * self.scale).max(self.spec.abs_tol);
        if diff <= tol || depth >= MAX_DEPTH {
            let mut local_abs: f64 = 0.0;
            for i in 0..self.dim {
                self.totals[i].add(left[i]);
                self.totals[i].add(right[i]);
                local_abs = local_abs.max(left[i].abs() + right[i].abs());
            }
            // Floor at the rounding level of the accepted panel so the
            // estimate stays conservative once diff hits machine noise.
            self.err_total += diff.max(4.0 * f64::EPSILON * local_abs);
            Ok(())
        } else {
            self.refine(a, mid, &left, depth + 1)?;
            self.refine(mid, b, &right, depth + 1)
        }
    }
}

/// Integrates a vector-valued integrand over the transformed domain.
///
/// Components share the panel structure, so an expensive integrand (an
/// eigendecomposition per node, say) is evaluated once for all of them.
pub fn integrate_vec<F>(
    f: F,
    transform: Transform,
    dim: usize,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, f64, usize)>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    spec.validate()?;
    let (nodes, weights) = gauss_legendre_unit(spec.panel_order);
    let run = |scale: f64| -> Result<(Vec<f64>, f64, usize, f64)> {
        let mut ad = Adaptive {
            f: &f,
            transform,
            nodes: nodes.clone(),
            weights: weights.clone(),
            spec,
            dim,
            totals: (0..dim).map(|_| Kahan::new()).collect(),
            err_total: 0.0,
            panels: 1,
            scale,
        };
        let whole = ad.eval_panel(0.0, 1.0);
        let whole_norm = whole.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if ad.scale == 0.0 {
            ad.scale = whole_norm.max(spec.abs_tol);
        }
        ad.refine(0.0, 1.0, &whole, 0)?;
        let value: Vec<f64> = ad.totals.iter().map(|k| k.sum).collect();
        let norm = value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        // Safety factor: panel diffs track the parent estimate's error, not
        // the refined children's, so scale up to keep the estimate
        // conservative.
        Ok((value, 4.0 * ad.err_total, ad.panels, norm))
    };
    let (value, err, panels, norm) = run(0.0)?;
    // If the first pass misjudged the magnitude (cancellation in the
    // top-level panel estimate), redo it once with the measured scale.
    if norm > 0.0 && err > 4.0 * spec.rel_tol * norm {
        let (value2, err2, panels2, _) = run(norm)?;
        return Ok((value2, err2, panels + panels2));
    }
    Ok((value, err, panels))
}

/// Integrates `f` over the domain declared by `transform`.
pub fn integrate<F>(f: F, transform: Transform, spec: &QuadratureSpec) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync,
{
    let (v, e, p) = integrate_vec(|x| vec![f(x)], transform, 1, spec)?;
    Ok(QuadResult {
        value: v[0],
        error: e,
        panels: p,
    })
}

/// Semi-infinite integral of `f` over `[0, inf)` under the given transform.
pub fn integrate_semi_infinite<F>(
    f: F,
    transform: Transform,
    spec: &QuadratureSpec,
) -> Result<QuadResult>
where
    F: Fn(f64) -> f64 + Sync,
{
    integrate(f, transform, spec)
}

/// Nested double integral; the inner tolerance is one decade tighter than
/// the outer one, and the inner transform may depend on the outer variable.
pub fn integrate_nested<F, T>(
    f: F,
    outer: Transform,
    inner: T,
    spec: &QuadratureSpec,
) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64 + Sync,
    T: Fn(f64) -> Transform + Sync,
{
    let inner_spec = spec.tightened();
    let inner_err = std::sync::Mutex::new(0.0_f64);
    let outer_fn = |x: f64| -> f64 {
        match integrate(|y| f(x, y), inner(x), &inner_spec) {
            Ok(r) => {
                let mut g = inner_err.lock().unwrap();
                if r.error > *g {
                    *g = r.error;
                }
                r.value
            }
            // Propagated through the outer pass as a NaN; reported below.
            Err(_) => f64::NAN,
        }
    };
    let result = integrate(outer_fn, outer, spec)?;
    if result.value.is_nan() {
        return Err(Error::ConvergenceFailure(
            "inner quadrature of a nested integral failed".into(),
        ));
    }
    let extra = *inner_err.lock().unwrap();
    Ok(QuadResult {
        value: result.value,
        error: result.error + extra,
        panels: result.panels,
    })
}
