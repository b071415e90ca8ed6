//! Per-(zeta, q) mode-matrix engine for piecewise-constant epsilon(z)
//! profiles: discretized traces of powers of the interaction kernel and the
//! nonperturbative log-det energy, with systematic subtraction of the
//! divergent single-body (self-energy) content.
//!
//! Planar translation invariance reduces the problem to independent dense
//! blocks per (zeta, q). With q along x, the y polarization decouples into a
//! real symmetric block; the (x, z) block is complex Hermitian with a purely
//! imaginary antisymmetric xz coupling, and conjugating the z components by
//! `i` turns it into a real symmetric block as well. All spectra are
//! therefore real and come from symmetric eigensolves.

use std::collections::BTreeMap;
use std::sync::Mutex;

use nalgebra::{Complex, DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::exact_planar::EnergyBreakdown;
use crate::materials::DielectricModel;
use crate::quadrature::{integrate_vec, QuadratureSpec, Transform};

type C64 = Complex<f64>;

/// One homogeneous slab; `z_start = -inf` or `z_end = +inf` mark
/// semi-infinite half-spaces, truncated to the body depth at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub z_start: f64,
    pub z_end: f64,
    pub material: DielectricModel,
}

/// Layered two-body profile with the vacuum gap spanning `[0, H]` by
/// convention: body 1 occupies `z <= 0`, body 2 occupies `z >= H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredScenario {
    pub layers: Vec<Layer>,
    pub separation_h: f64,
    /// Fixed grid spacing; `None` selects `min(1/kappa, H) / dz_factor`
    /// per (zeta, q) node.
    pub grid_spacing_dz: Option<f64>,
    /// Fixed body truncation depth; `None` selects
    /// `body_depth_factor / kappa` per node.
    pub body_depth_l: Option<f64>,
    pub dz_factor: f64,
    pub body_depth_factor: f64,
    /// Hard cap on grid nodes per body; when it binds, cells farthest from
    /// the gap are dropped (they are exponentially suppressed).
    pub node_cap_per_body: usize,
}

impl LayeredScenario {
    pub fn new(layers: Vec<Layer>, separation_h: f64) -> Result<Self> {
        let s = LayeredScenario {
            layers,
            separation_h,
            grid_spacing_dz: None,
            body_depth_l: None,
            dz_factor: 16.0,
            body_depth_factor: 5.0,
            node_cap_per_body: 320,
        };
        s.validate()?;
        Ok(s)
    }

    /// Two semi-infinite half-spaces separated by a vacuum gap `[0, H]`.
    pub fn two_half_spaces(
        material_1: DielectricModel,
        material_2: DielectricModel,
        separation_h: f64,
    ) -> Result<Self> {
        LayeredScenario::new(
            vec![
                Layer {
                    z_start: f64::NEG_INFINITY,
                    z_end: 0.0,
                    material: material_1,
                },
                Layer {
                    z_start: separation_h,
                    z_end: f64::INFINITY,
                    material: material_2,
                },
            ],
            separation_h,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.separation_h;
        if !(h > 0.0) {
            return Err(Error::Scenario("separation must be > 0".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Scenario("at least one layer is required".into()));
        }
        for l in &self.layers {
            if !(l.z_end > l.z_start) {
                return Err(Error::Scenario("layer must have positive extent".into()));
            }
            let in_body1 = l.z_end <= 0.0;
            let in_body2 = l.z_start >= h;
            if !in_body1 && !in_body2 && !l.material.is_vacuum() {
                return Err(Error::Scenario(
                    "non-vacuum layer intrudes into the gap [0, H]".into(),
                ));
            }
        }
        let mut sorted: Vec<&Layer> = self.layers.iter().collect();
        sorted.sort_by(|a, b| a.z_start.partial_cmp(&b.z_start).unwrap());
        for w in sorted.windows(2) {
            if w[1].z_start < w[0].z_end {
                return Err(Error::Scenario("layers overlap".into()));
            }
        }
        if let Some(dz) = self.grid_spacing_dz {
            if !(dz > 0.0) || dz >= h {
                return Err(Error::Scenario(
                    "grid spacing must satisfy 0 < dz < H".into(),
                ));
            }
        }
        if let Some(l) = self.body_depth_l {
            if !(l > 0.0) {
                return Err(Error::Scenario("body depth must be > 0".into()));
            }
        }
        if !(self.dz_factor >= 8.0) {
            return Err(Error::Scenario("dz_factor must be >= 8".into()));
        }
        if !(self.body_depth_factor > 0.0) {
            return Err(Error::Scenario("body_depth_factor must be > 0".into()));
        }
        if self.node_cap_per_body < 8 {
            return Err(Error::Scenario("node cap must be >= 8".into()));
        }
        Ok(())
    }

    /// Mirror image through the gap midplane `z = H/2` (body exchange).
    pub fn mirrored(&self) -> Self {
        let h = self.separation_h;
        let mut out = self.clone();
        out.layers = self
            .layers
            .iter()
            .map(|l| Layer {
                z_start: h - l.z_end,
                z_end: h - l.z_start,
                material: l.material.clone(),
            })
            .collect();
        out
    }

    fn body1_layers(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self.layers.iter().filter(|l| l.z_end <= 0.0).collect();
        v.sort_by(|a, b| a.z_start.partial_cmp(&b.z_start).unwrap());
        v
    }

    fn body2_layers(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self
            .layers
            .iter()
            .filter(|l| l.z_start >= self.separation_h)
            .collect();
        v.sort_by(|a, b| a.z_start.partial_cmp(&b.z_start).unwrap());
        v
    }

    /// True when body 2 is the exact mirror image of body 1, in which case
    /// the single-body spectra coincide and one eigensolve can be reused.
    fn is_mirror_symmetric(&self) -> bool {
        let h = self.separation_h;
        let b1 = self.body1_layers();
        let b2 = self.body2_layers();
        if b1.len() != b2.len() {
            return false;
        }
        b1.iter().zip(b2.iter().rev()).all(|(a, b)| {
            a.material == b.material
                && a.z_end == h - b.z_start
                && (a.z_start == h - b.z_end
                    || (a.z_start == f64::NEG_INFINITY && b.z_end == f64::INFINITY))
        })
    }
}

/// Mixed-representation free kernel at fixed `(w, q)`: the partial Fourier
/// transform over `q_z` of `[w^2 d_ij + q_i q_j] / [w^2 + q^2 + q_z^2]`
/// with the transverse wavevector along x.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedGreenEntry {
    pub smooth: Matrix3<C64>,
    /// Coefficient of `delta(dz)` in the zz component.
    pub contact_zz: f64,
}

#[inline]
fn green_scalars(w: f64, q: f64, dz: f64) -> (f64, f64, f64, f64) {
    let kappa = (w * w + q * q).sqrt();
    let e = (-kappa * dz.abs()).exp();
    let g_xx = (w * w + q * q) * e / (2.0 * kappa);
    let g_yy = w * w * e / (2.0 * kappa);
    let g_zz = -q * q * e / (2.0 * kappa);
    let sgn = if dz > 0.0 {
        1.0
    } else if dz < 0.0 {
        -1.0
    } else {
        0.0
    };
    // Imaginary amplitude of the xz = zx entries (the entry is i * this).
    let g_xz = q * sgn * e / 2.0;
    (g_xx, g_yy, g_zz, g_xz)
}

pub fn mixed_green(w: f64, q: f64, dz: f64) -> Result<MixedGreenEntry> {
    if !(w > 0.0) {
        return Err(Error::domain("mixed kernel requires w > 0"));
    }
    if q < 0.0 {
        return Err(Error::domain("transverse wavenumber must be >= 0"));
    }
    let (g_xx, g_yy, g_zz, g_xz) = green_scalars(w, q, dz);
    let z = C64::new(0.0, 0.0);
    let smooth = Matrix3::new(
        C64::new(g_xx, 0.0),
        z,
        C64::new(0.0, g_xz),
        z,
        C64::new(g_yy, 0.0),
        z,
        C64::new(0.0, g_xz),
        z,
        C64::new(g_zz, 0.0),
    );
    Ok(MixedGreenEntry {
        smooth,
        contact_zz: 1.0,
    })
}

/// One midpoint cell of the z grid.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    z: f64,
    dz: f64,
    deps: f64,
}

/// Symmetrized mode matrix at one `(w, q)` node, stored as its two real
/// symmetric blocks. Eigenvalues equal those of the non-symmetric kernel
/// matrix `G * deps * dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMatrix {
    /// y-polarization block, `N x N`.
    pub y_block: DMatrix<f64>,
    /// Phase-transformed (x, z) block, `2N x 2N`.
    pub xz_block: DMatrix<f64>,
    pub kappa: f64,
    pub node_weights: Vec<f64>,
    cells: Vec<Cell>,
    w: f64,
    q: f64,
}

impl ModeMatrix {
    pub fn n_nodes(&self) -> usize {
        self.cells.len()
    }

    /// `tr M` from the closed-form diagonal
    /// `sum_a deps_a (1 + (w^2/kappa) dz_a)`.
    pub fn trace(&self) -> f64 {
        let w2k = self.w * self.w / self.kappa;
        kahan(self.cells.iter().map(|c| c.deps * (1.0 + w2k * c.dz)))
    }

    /// All (real) eigenvalues, from the two symmetric blocks.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(3 * self.cells.len());
        for block in [&self.y_block, &self.xz_block] {
            if block.nrows() == 0 {
                continue;
            }
            let eig = block
                .clone()
                .try_symmetric_eigen(f64::EPSILON, 100_000)
                .ok_or(Error::EigenFailure)?;
            out.extend(eig.eigenvalues.iter().copied());
        }
        Ok(out)
    }

    /// Dense complex Hermitian form (for small-grid cross-checks): block
    /// diagonal in [x z | y] ordering with the purely imaginary xz coupling
    /// restored.
    pub fn to_hermitian_complex(&self) -> DMatrix<C64> {
        let n = self.cells.len();
        let mut m = DMatrix::from_element(3 * n, 3 * n, C64::new(0.0, 0.0));
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] = C64::new(self.xz_block[(a, b)], 0.0);
                m[(n + a, n + b)] = C64::new(self.xz_block[(n + a, n + b)], 0.0);
                // Undo the phase transform: with C antisymmetric, the real
                // symmetric blocks [C, C^T] restore to [i C, (i C)^H] and
                // (i C)^H = -i C^T.
                m[(a, n + b)] = C64::new(0.0, self.xz_block[(a, n + b)]);
                m[(n + a, b)] = C64::new(0.0, -self.xz_block[(n + a, b)]);
                m[(2 * n + a, 2 * n + b)] = C64::new(self.y_block[(a, b)], 0.0);
            }
        }
        m
    }
}

fn kahan<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BodySelect {
    Both,
    Body1,
    Body2,
}

/// Node-dependent grid parameters.
fn grid_params(scenario: &LayeredScenario, kappa: f64) -> (f64, f64) {
    let h = scenario.separation_h;
    let dz = scenario
        .grid_spacing_dz
        .unwrap_or_else(|| (1.0 / kappa).min(h) / scenario.dz_factor);
    let l = scenario
        .body_depth_l
        .unwrap_or_else(|| scenario.body_depth_factor / kappa);
    (dz, l)
}

/// Midpoint cells for one body, truncated to depth `l` from its gap-facing
/// interface; the node cap keeps the cells nearest the gap.
fn body_cells(
    layers: &[&Layer],
    contrasts: &BTreeMap<usize, f64>,
    layer_ids: &[usize],
    region: (f64, f64),
    dz: f64,
    cap: usize,
    keep_near_high_end: bool,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (layer, &id) in layers.iter().zip(layer_ids) {
        let deps = contrasts[&id];
        if deps == 0.0 {
            continue;
        }
        let a = layer.z_start.max(region.0);
        let b = layer.z_end.min(region.1);
        if !(b > a) {
            continue;
        }
        // Anchor exact-width cells at the gap-facing edge so their positions
        // vary smoothly with the mode parameters; only the deepest cell is
        // partial. (Spreading the remainder over all cells would shift every
        // midpoint each time the count ticks over, putting dense spurious
        // discontinuities into the mode integrand.) The 1e-12 backoff keeps
        // rounding jitter in the division from flipping the count when the
        // segment length is an exact multiple of dz.
        let ratio = (b - a) / dz;
        let m = (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let rem = (b - a) - (m - 1) as f64 * dz;
        for k in 0..m {
            // k counts from the gap side inward.
            let (width, offset) = if k + 1 < m {
                (dz, k as f64 * dz)
            } else {
                (rem, (b - a) - 0.5 * rem)
            };
            let z = if keep_near_high_end {
                if k + 1 < m {
                    b - offset - 0.5 * dz
                } else {
                    b - offset
                }
            } else if k + 1 < m {
                a + offset + 0.5 * dz
            } else {
                a + offset
            };
            cells.push(Cell {
                z,
                dz: width,
                deps,
            });
        }
    }
    cells.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap());
    if cells.len() > cap {
        if keep_near_high_end {
            cells.drain(0..cells.len() - cap);
        } else {
            cells.truncate(cap);
        }
    }
    cells
}

fn select_cells(
    scenario: &LayeredScenario,
    contrasts: &BTreeMap<usize, f64>,
    which: BodySelect,
    w: f64,
    q: f64,
) -> Result<Vec<Cell>> {
    let h = scenario.separation_h;
    let kappa = (w * w + q * q).sqrt();
    let (dz, l) = grid_params(scenario, kappa);
    if let Some(dz_fixed) = scenario.grid_spacing_dz {
        let limit = (1.0 / kappa).min(h) / 8.0;
        if dz_fixed > limit {
            return Err(Error::GridTooCoarse(format!(
                "dz = {dz_fixed} exceeds min(1/kappa, H)/8 = {limit} at w = {w}, q = {q}"
            )));
        }
    }
    let ids1: Vec<usize> = scenario
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.z_end <= 0.0)
        .map(|(i, _)| i)
        .collect();
    let ids2: Vec<usize> = scenario
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.z_start >= h)
        .map(|(i, _)| i)
        .collect();
    let cap = scenario.node_cap_per_body;
    let mut out = Vec::new();
    if matches!(which, BodySelect::Both | BodySelect::Body1) {
        out.extend(body_cells(
            &scenario.body1_layers(),
            contrasts,
            &ids1,
            (-l, 0.0),
            dz,
            cap,
            true,
        ));
    }
    if matches!(which, BodySelect::Both | BodySelect::Body2) {
        out.extend(body_cells(
            &scenario.body2_layers(),
            contrasts,
            &ids2,
            (h, h + l),
            dz,
            cap,
            false,
        ));
    }
    Ok(out)
}

fn layer_contrasts(scenario: &LayeredScenario, w: f64) -> Result<BTreeMap<usize, f64>> {
    let mut m = BTreeMap::new();
    for (i, l) in scenario.layers.iter().enumerate() {
        let deps = l.material.contrast_at(w)?;
        if deps < 0.0 {
            return Err(Error::domain("dielectric contrast must be >= 0"));
        }
        m.insert(i, deps);
    }
    Ok(m)
}

fn assemble(cells: Vec<Cell>, w: f64, q: f64) -> ModeMatrix {
    let n = cells.len();
    let kappa = (w * w + q * q).sqrt();
    let s: Vec<f64> = cells.iter().map(|c| (c.deps * c.dz).sqrt()).collect();
    let mut y_block = DMatrix::zeros(n, n);
    let mut xz_block = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let (g_xx, g_yy, g_zz, g_xz) = green_scalars(w, q, cells[a].z - cells[b].z);
            let sab = s[a] * s[b];
            y_block[(a, b)] = sab * g_yy;
            xz_block[(a, b)] = sab * g_xx;
            xz_block[(n + a, n + b)] = sab * g_zz;
            // Phase transform z -> i z maps the Hermitian coupling i*g_xz
            // onto a real antisymmetric pair.
            xz_block[(a, n + b)] = sab * g_xz;
            xz_block[(n + a, b)] = -sab * g_xz;
        }
        // Contact term: delta(dz) -> 1/dz on the zz diagonal.
        xz_block[(n + a, n + a)] += cells[a].deps;
    }
    ModeMatrix {
        y_block,
        xz_block,
        kappa,
        node_weights: s,
        cells,
        w,
        q,
    }
}

/// Dense symmetrized mode matrix for the full two-body profile at `(w, q)`.
pub fn build_mode_matrix(scenario: &LayeredScenario, w: f64, q: f64) -> Result<ModeMatrix> {
    scenario.validate()?;
    if !(w > 0.0) {
        return Err(Error::domain("mode matrix requires w > 0"));
    }
    if q < 0.0 {
        return Err(Error::domain("transverse wavenumber must be >= 0"));
    }
    let contrasts = layer_contrasts(scenario, w)?;
    let cells = select_cells(scenario, &contrasts, BodySelect::Both, w, q)?;
    Ok(assemble(cells, w, q))
}

/// `tr[M^n]` for `n = 1..=max_order`; `n = 1` comes from the closed-form
/// diagonal, higher orders from the eigenvalue spectrum.
pub fn trace_powers(m: &ModeMatrix, max_order: u32) -> Result<Vec<f64>> {
    if max_order < 1 {
        return Err(Error::domain("max_order must be >= 1"));
    }
    let eigs = m.eigenvalues()?;
    let mut out = Vec::with_capacity(max_order as usize);
    for n in 1..=max_order {
        if n == 1 {
            out.push(m.trace());
        } else {
            out.push(kahan(eigs.iter().map(|l| l.powi(n as i32))));
        }
    }
    Ok(out)
}

/// `tr S^n` for `n = 1..=max_order` of one symmetric block. Symmetry turns
/// every even/odd power into a Frobenius product of at most three explicit
/// matrix powers: `tr S^(i+j) = <S^i, S^j>`, so orders up to 8 need at most
/// the products `S^2`, `S^3`, `S^4`.
fn sym_power_traces(s: &DMatrix<f64>, max_order: u32) -> Vec<f64> {
    let frob = |x: &DMatrix<f64>, y: &DMatrix<f64>| kahan(x.iter().zip(y.iter()).map(|(a, b)| a * b));
    let mo = max_order as usize;
    let mut tr = vec![0.0; mo];
    tr[0] = kahan(s.diagonal().iter().copied());
    if mo >= 2 {
        tr[1] = frob(s, s);
    }
    let s2 = if mo >= 3 { Some(s * s) } else { None };
    if let Some(s2) = &s2 {
        tr[2] = frob(s2, s);
        if mo >= 4 {
            tr[3] = frob(s2, s2);
        }
    }
    let s3 = if mo >= 5 { Some(s2.as_ref().unwrap() * s) } else { None };
    if let Some(s3) = &s3 {
        tr[4] = frob(s2.as_ref().unwrap(), s3);
        if mo >= 6 {
            tr[5] = frob(s3, s3);
        }
    }
    if mo >= 7 {
        let s2 = s2.as_ref().unwrap();
        let s4 = s2 * s2;
        tr[6] = frob(s3.as_ref().unwrap(), &s4);
        if mo >= 8 {
            tr[7] = frob(&s4, &s4);
        }
    }
    tr
}

/// `tr ln(1 + S)` via Cholesky of `I + S`; a failed factorization falls
/// back to the spectrum to report the offending eigenvalue.
fn sym_logdet(s: &DMatrix<f64>) -> Result<f64> {
    let n = s.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut m = s.clone();
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    match nalgebra::linalg::Cholesky::new(m) {
        Some(ch) => {
            let l = ch.l_dirty();
            Ok(2.0 * kahan((0..n).map(|i| l[(i, i)].ln())))
        }
        None => {
            let eig = s
                .clone()
                .try_symmetric_eigen(f64::EPSILON, 100_000)
                .ok_or(Error::EigenFailure)?;
            let min = eig.eigenvalues.min();
            Err(Error::BranchViolation(min))
        }
    }
}

/// Per-body data reused across orders and the log-det at one `(w, q)` node.
struct NodeData {
    /// `tr M^n` for `n = 1..=max_order`; `n = 1` from the closed-form
    /// diagonal so the single-body subtraction cancels exactly.
    traces: Vec<f64>,
    logdet: f64,
}

fn node_data(
    cells: Vec<Cell>,
    w: f64,
    q: f64,
    max_order: u32,
    with_logdet: bool,
) -> Result<NodeData> {
    if cells.is_empty() {
        return Ok(NodeData {
            traces: vec![0.0; max_order as usize],
            logdet: 0.0,
        });
    }
    let m = assemble(cells, w, q);
    let mut traces = vec![0.0; max_order as usize];
    if max_order >= 1 {
        let ty = sym_power_traces(&m.y_block, max_order);
        let txz = sym_power_traces(&m.xz_block, max_order);
        for n in 0..max_order as usize {
            traces[n] = ty[n] + txz[n];
        }
        traces[0] = m.trace();
    }
    let logdet = if with_logdet {
        sym_logdet(&m.y_block)? + sym_logdet(&m.xz_block)?
    } else {
        0.0
    };
    Ok(NodeData { traces, logdet })
}

/// Subtracted per-node values: index `n-1` holds the order-`n` trace
/// combination `(-1)^(n-1)/n {tr M^n_both - tr M^n_1 - tr M^n_2}`; an extra
/// trailing entry holds the log-det combination when requested.
fn node_values(
    scenario: &LayeredScenario,
    contrasts: &BTreeMap<usize, f64>,
    w: f64,
    q: f64,
    max_order: u32,
    with_logdet: bool,
    mirror: bool,
) -> Result<Vec<f64>> {
    let dim_out = max_order as usize + usize::from(with_logdet);
    // Every inter-body crossing carries a factor e^{-kappa H}, so the
    // subtracted content is bounded by e^{-2 kappa H}. Beyond the point
    // where that bound drops under the f64 resolution of the subtraction,
    // the computed values would be pure cancellation noise; the exact limit
    // is a clean zero.
    let kappa = (w * w + q * q).sqrt();
    if 2.0 * kappa * scenario.separation_h > 40.0 {
        return Ok(vec![0.0; dim_out]);
    }
    let both = node_data(
        select_cells(scenario, contrasts, BodySelect::Both, w, q)?,
        w,
        q,
        max_order,
        with_logdet,
    )?;
    let b1 = node_data(
        select_cells(scenario, contrasts, BodySelect::Body1, w, q)?,
        w,
        q,
        max_order,
        with_logdet,
    )?;
    let b2 = if mirror {
        NodeData {
            traces: b1.traces.clone(),
            logdet: b1.logdet,
        }
    } else {
        node_data(
            select_cells(scenario, contrasts, BodySelect::Body2, w, q)?,
            w,
            q,
            max_order,
            with_logdet,
        )?
    };
    let dim = max_order as usize + usize::from(with_logdet);
    let mut out = Vec::with_capacity(dim);
    for n in 1..=max_order {
        let i = (n - 1) as usize;
        let delta = both.traces[i] - b1.traces[i] - b2.traces[i];
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        out.push(sign / n as f64 * delta);
    }
    if with_logdet {
        out.push(both.logdet - b1.logdet - b2.logdet);
    }
    Ok(out)
}

/// Coarse default quadrature for the 2D (zeta, q) engine integrals; each
/// node costs an eigensolve, so the tolerances are far looser than the 1D
/// kernel quadratures.
pub fn engine_quadrature() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-3,
        // The absolute floor sits above the cancellation noise of the
        // two-body/one-body trace subtraction but far below the scale of the
        // subtracted mode integrals, so refinement stops cleanly in regions
        // where the integrand has decayed into round-off.
        abs_tol: 1e-9,
        max_panels: 64,
        panel_order: 8,
        parallel: false,
    }
}

fn engine_integral(
    scenario: &LayeredScenario,
    max_order: u32,
    with_logdet: bool,
    quad: &QuadratureSpec,
) -> Result<(Vec<f64>, f64)> {
    scenario.validate()?;
    quad.validate()?;
    let dim = max_order as usize + usize::from(with_logdet);
    let h = scenario.separation_h;
    let mirror = scenario.is_mirror_symmetric();
    // The inner integral runs an order of magnitude tighter than the outer
    // one: its own adaptive error would otherwise show up as panel-boundary
    // jitter in the outer integrand and stall the outer refinement.
    let inner_quad = QuadratureSpec {
        rel_tol: 0.1 * quad.rel_tol,
        max_panels: 2 * quad.max_panels,
        ..quad.clone()
    };
    let first_err: Mutex<Option<Error>> = Mutex::new(None);
    let inner_err = Mutex::new(0.0_f64);
    let store = |e: Error| {
        let mut g = first_err.lock().unwrap();
        if g.is_none() {
            *g = Some(e);
        }
    };

    let outer = |w: f64| -> Vec<f64> {
        if !(w > 0.0) {
            return vec![0.0; dim];
        }
        let contrasts = match layer_contrasts(scenario, w) {
            Ok(c) => c,
            Err(e) => {
                store(e);
                return vec![f64::NAN; dim];
            }
        };
        let inner = |q: f64| -> Vec<f64> {
            match node_values(scenario, &contrasts, w, q, max_order, with_logdet, mirror) {
                Ok(mut v) => {
                    for x in &mut v {
                        *x *= q;
                    }
                    v
                }
                Err(e) => {
                    store(e);
                    vec![f64::NAN; dim]
                }
            }
        };
        match integrate_vec(inner, Transform::Rational { scale: 1.0 / h }, dim, &inner_quad) {
            Ok((v, e, _)) => {
                let mut g = inner_err.lock().unwrap();
                if e > *g {
                    *g = e;
                }
                v
            }
            Err(e) => {
                store(Error::ConvergenceFailure(format!(
                    "transverse integral at w = {w:e} failed: {e}"
                )));
                vec![f64::NAN; dim]
            }
        }
    };
    let res = integrate_vec(outer, Transform::Rational { scale: 1.0 / h }, dim, quad);
    if let Some(e) = first_err.into_inner().unwrap() {
        return Err(e);
    }
    let (mut vals, err, _) = res?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConvergenceFailure(
            "engine integrand failed to evaluate".into(),
        ));
    }
    let pref = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    for v in &mut vals {
        *v *= pref;
    }
    let total_err = pref * (err + *inner_err.lock().unwrap());
    Ok((vals, total_err))
}

fn engine_metadata(scenario: &LayeredScenario, quad: &QuadratureSpec) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert(
        "dz".into(),
        match scenario.grid_spacing_dz {
            Some(dz) => format!("{dz}"),
            None => format!("min(1/kappa, H)/{}", scenario.dz_factor),
        },
    );
    m.insert(
        "body_depth".into(),
        match scenario.body_depth_l {
            Some(l) => format!("{l}"),
            None => format!("{}/kappa", scenario.body_depth_factor),
        },
    );
    m.insert("node_cap".into(), scenario.node_cap_per_body.to_string());
    m.insert("rel_tol".into(), format!("{:e}", quad.rel_tol));
    m
}

/// Per-order interaction energies from the subtracted trace series,
///
/// `per_order[n] = (1/4 pi^2) Int dzeta Int q dq (-1)^(n-1)/n
///                 { tr M^n_both - tr M^n_1 - tr M^n_2 }`.
pub fn interaction_series(
    scenario: &LayeredScenario,
    max_order: u32,
    quad: &QuadratureSpec,
) -> Result<EnergyBreakdown> {
    if !(2..=8).contains(&max_order) {
        return Err(Error::domain("max_order must lie in [2, 8]"));
    }
    let (vals, err) = engine_integral(scenario, max_order, false, quad)?;
    let mut per_order = BTreeMap::new();
    for n in 1..=max_order {
        per_order.insert(n, vals[(n - 1) as usize]);
    }
    let total = kahan(per_order.values().copied());
    let mut metadata = engine_metadata(scenario, quad);
    metadata.insert("method".into(), "interaction_series".into());
    Ok(EnergyBreakdown {
        total,
        per_order,
        est_error: err,
        metadata,
    })
}

/// Nonperturbative interaction energy from the subtracted log-det,
///
/// `E = (1/4 pi^2) Int dzeta Int q dq { tr ln(1+M_both)
///      - tr ln(1+M_1) - tr ln(1+M_2) }`.
pub fn interaction_logdet(
    scenario: &LayeredScenario,
    quad: &QuadratureSpec,
) -> Result<EnergyBreakdown> {
    let (vals, err) = engine_integral(scenario, 0, true, quad)?;
    let mut metadata = engine_metadata(scenario, quad);
    metadata.insert("method".into(), "interaction_logdet".into());
    Ok(EnergyBreakdown {
        total: vals[0],
        per_order: BTreeMap::new(),
        est_error: err,
        metadata,
    })
}

/// One rung of a refinement ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderPoint {
    /// Refinement scale relative to the base grid (2 = coarser, 0.5 = finer
    /// spacing; for the depth ladder, the multiple of the base depth).
    pub scale: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Log-det energy at grid spacings `2 dz`, `dz`, `dz/2`.
    pub dz_ladder: Vec<LadderPoint>,
    /// Log-det energy at body depths `L`, `2L` (at the base spacing).
    pub l_ladder: Vec<LadderPoint>,
    /// Richardson limit assuming second-order convergence in dz.
    pub extrapolated: f64,
    pub est_error: f64,
    /// Observed ratio of successive dz-ladder differences (about 4 for
    /// clean second-order convergence).
    pub convergence_ratio: f64,
    /// False when the ladder differences change sign (flagged, not fatal).
    pub monotone: bool,
}

fn scaled_scenario(base: &LayeredScenario, dz_scale: f64, l_scale: f64) -> LayeredScenario {
    let mut s = base.clone();
    match s.grid_spacing_dz {
        Some(dz) => s.grid_spacing_dz = Some(dz * dz_scale),
        None => s.dz_factor /= dz_scale,
    }
    match s.body_depth_l {
        Some(l) => s.body_depth_l = Some(l * l_scale),
        None => s.body_depth_factor *= l_scale,
    }
    // Refining dz at a fixed depth needs proportionally more nodes.
    s.node_cap_per_body = ((s.node_cap_per_body as f64 * l_scale / dz_scale).ceil()) as usize;
    s
}

/// Grid-refinement study of the log-det energy: a dz-halving ladder with
/// Richardson extrapolation plus an L-doubling truncation check.
pub fn convergence_report(
    scenario: &LayeredScenario,
    quad: &QuadratureSpec,
) -> Result<ConvergenceReport> {
    let mut dz_ladder = Vec::new();
    for scale in [2.0, 1.0, 0.5] {
        let s = scaled_scenario(scenario, scale, 1.0);
        let e = interaction_logdet(&s, quad)?;
        dz_ladder.push(LadderPoint {
            scale,
            energy: e.total,
        });
    }
    let mut l_ladder = vec![LadderPoint {
        scale: 1.0,
        energy: dz_ladder[1].energy,
    }];
    let s2 = scaled_scenario(scenario, 1.0, 2.0);
    l_ladder.push(LadderPoint {
        scale: 2.0,
        energy: interaction_logdet(&s2, quad)?.total,
    });

    let d1 = dz_ladder[1].energy - dz_ladder[0].energy;
    let d2 = dz_ladder[2].energy - dz_ladder[1].energy;
    let convergence_ratio = if d2 != 0.0 { d1 / d2 } else { f64::INFINITY };
    let monotone = d1 * d2 > 0.0;
    let extrapolated = dz_ladder[2].energy + d2 / 3.0;
    let trunc = (l_ladder[1].energy - l_ladder[0].energy).abs();
    let est_error = (extrapolated - dz_ladder[2].energy).abs() + trunc;
    Ok(ConvergenceReport {
        dz_ladder,
        l_ladder,
        extrapolated,
        est_error,
        convergence_ratio,
        monotone,
    })
}
