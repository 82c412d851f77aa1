//! Pointwise geometric kernels for multiply-warped metrics over a
//! one-dimensional base.
//!
//! The metric has the form
//!
//! ```text
//!   g = phi(x,t)^2 dx^2 + sum_a u_a(x,t) g_{F_a},
//!   u_a(x,t) = (a_a - mu_a t) + v_a(x,t),
//! ```
//!
//! where each fiber `(F_a, g_{F_a})` is a space form normalized so that
//! `mu_a g_{F_a} = 2 Rc[g_{F_a}]`. A one-dimensional base is flat, so the
//! base curvature `rho = |Rm[g_B]|^2` is identically zero; the accessor
//! exists to keep downstream checkers total.
//!
//! All derivatives here are arclength (orthonormal-frame) covariant
//! derivatives on the base, obtained from coordinate stencils via
//! `d/ds = phi^{-1} d/dx`. In one dimension the orthonormal frame is
//! parallel, so iterated `phi^{-1} d/dx` equals the covariant derivative.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Grid cells excluded from diagnostics at each end of the domain. Central
/// second-order stencils (including third derivatives of derived fields)
/// are valid from this margin inward; one-sided stencils are never used in
/// any reported quantity.
pub const INTERIOR_MARGIN: usize = 2;

/// One fiber of the product: a space form `F^n` with `mu g_F = 2 Rc[g_F]`
/// and initial scale offset `a > 0`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FiberSpec {
    /// Fiber dimension `n >= 1`.
    pub dim: usize,
    /// Einstein constant `mu` in the normalization `mu g_F = 2 Rc[g_F]`.
    pub einstein_const: f64,
    /// Offset `a > 0` of the homogeneous part `a - mu t` of the warping.
    pub offset: f64,
}

impl FiberSpec {
    pub fn new(dim: usize, einstein_const: f64, offset: f64) -> Result<Self> {
        let f = FiberSpec {
            dim,
            einstein_const,
            offset,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::Spec("fiber dimension must be >= 1".into()));
        }
        if !(self.offset > 0.0) {
            return Err(Error::Spec(format!(
                "fiber offset must be positive, got {}",
                self.offset
            )));
        }
        if !self.einstein_const.is_finite() {
            return Err(Error::NonFinite("fiber einstein_const".into()));
        }
        if self.dim == 1 && self.einstein_const != 0.0 {
            return Err(Error::Spec(
                "a one-dimensional fiber is flat; einstein_const must be 0".into(),
            ));
        }
        Ok(())
    }

    /// Sectional curvature `kappa_F` of the unit fiber: `mu / (2(n-1))` for
    /// `n >= 2`, and `0` for circle fibers.
    pub fn fiber_sectional(&self) -> f64 {
        if self.dim >= 2 {
            self.einstein_const / (2.0 * (self.dim as f64 - 1.0))
        } else {
            0.0
        }
    }
}

/// Static problem definition: the base is one-dimensional and the fibers
/// are space forms.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WarpedProductSpec {
    pub fibers: Vec<FiberSpec>,
}

impl WarpedProductSpec {
    pub fn new(fibers: Vec<FiberSpec>) -> Result<Self> {
        let spec = WarpedProductSpec { fibers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fibers.is_empty() {
            return Err(Error::Spec("at least one fiber is required".into()));
        }
        for f in &self.fibers {
            f.validate()?;
        }
        if !self.fibers.iter().any(|f| f.einstein_const > 0.0) {
            return Err(Error::Spec(
                "at least one fiber must have a positive Einstein constant".into(),
            ));
        }
        Ok(())
    }

    /// The base dimension is fixed at 1 in this artifact.
    pub fn base_dim(&self) -> usize {
        1
    }

    pub fn num_fibers(&self) -> usize {
        self.fibers.len()
    }

    /// Index of the fiber with the smallest formal vanishing time
    /// `a / mu` among fibers with `mu > 0` (ties broken by lowest index).
    pub fn varsigma(&self) -> usize {
        let mut best = usize::MAX;
        let mut best_t = f64::INFINITY;
        for (i, f) in self.fibers.iter().enumerate() {
            if f.einstein_const > 0.0 {
                let t = f.offset / f.einstein_const;
                if t < best_t {
                    best_t = t;
                    best = i;
                }
            }
        }
        best
    }

    /// Formal singularity time `T_form = a_s / mu_s` of the homogeneous part.
    pub fn t_form(&self) -> f64 {
        let s = self.varsigma();
        self.fibers[s].offset / self.fibers[s].einstein_const
    }
}

/// Dynamic state at one flow time: base factor `phi` and fiber
/// perturbations `v_a` sampled on a fixed uniform coordinate grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl FlowState {
    /// Validating constructor. The grid must be uniform and strictly
    /// increasing with at least 5 points, all `phi > 0`, all `v_a > 0`,
    /// and all `u_a > 0` (otherwise the state is singular and must be
    /// flagged, not stored).
    pub fn new(spec: &WarpedProductSpec, t: f64, x: Vec<f64>, phi: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self> {
        let state = FlowState { t, x, phi, v };
        state.validate(spec)?;
        Ok(state)
    }

    pub fn validate(&self, spec: &WarpedProductSpec) -> Result<()> {
        let n = self.x.len();
        if n < 5 {
            return Err(Error::Spec(format!("grid needs >= 5 points, got {n}")));
        }
        if self.phi.len() != n {
            return Err(Error::Spec("phi length mismatch".into()));
        }
        if self.v.len() != spec.num_fibers() {
            return Err(Error::Spec("one perturbation array per fiber required".into()));
        }
        let h = self.x[1] - self.x[0];
        if !(h > 0.0) {
            return Err(Error::Spec("grid must be strictly increasing".into()));
        }
        for i in 1..n {
            let d = self.x[i] - self.x[i - 1];
            if !(d > 0.0) || (d - h).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::Spec("grid must be uniform".into()));
            }
        }
        for (i, &p) in self.phi.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::SingularState(format!("phi[{i}] = {p}")));
            }
        }
        for (alpha, va) in self.v.iter().enumerate() {
            if va.len() != n {
                return Err(Error::Spec(format!("v[{alpha}] length mismatch")));
            }
            let fs = &spec.fibers[alpha];
            let hom = fs.offset - fs.einstein_const * self.t;
            for (i, &vi) in va.iter().enumerate() {
                if !vi.is_finite() {
                    return Err(Error::NonFinite(format!("v[{alpha}][{i}]")));
                }
                if !(vi > 0.0) {
                    return Err(Error::SingularState(format!("v[{alpha}][{i}] = {vi} <= 0")));
                }
                if !(hom + vi > 0.0) {
                    return Err(Error::SingularState(format!(
                        "u[{alpha}][{i}] = {} <= 0 at t = {}",
                        hom + vi,
                        self.t
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Uniform grid spacing in the fixed coordinate.
    pub fn h(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Interior index range for diagnostics (boundary cells excluded).
    pub fn interior(&self) -> std::ops::Range<usize> {
        INTERIOR_MARGIN..self.len() - INTERIOR_MARGIN
    }

    /// Warping factor `u_a(x_i, t) = (a_a - mu_a t) + v_a(x_i, t)`.
    pub fn u_at(&self, spec: &WarpedProductSpec, alpha: usize, i: usize) -> f64 {
        let f = &spec.fibers[alpha];
        (f.offset - f.einstein_const * self.t) + self.v[alpha][i]
    }

    pub fn u_field(&self, spec: &WarpedProductSpec, alpha: usize) -> Vec<f64> {
        let f = &spec.fibers[alpha];
        let hom = f.offset - f.einstein_const * self.t;
        self.v[alpha].iter().map(|&v| hom + v).collect()
    }

    /// Minimum of `u_a` over the interior, with the attaining index.
    pub fn u_min_interior(&self, spec: &WarpedProductSpec, alpha: usize) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for i in self.interior() {
            let u = self.u_at(spec, alpha, i);
            if u < best {
                best = u;
                arg = i;
            }
        }
        (best, arg)
    }
}

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------

fn check_index(field: &[f64], i: usize, margin: usize) -> Result<()> {
    if i < margin || i + margin >= field.len() {
        return Err(Error::BoundaryStencil {
            index: i,
            margin,
            len: field.len(),
        });
    }
    Ok(())
}

/// Central first derivative in the grid coordinate, second order.
pub fn dx_at(field: &[f64], i: usize, h: f64) -> Result<f64> {
    check_index(field, i, 1)?;
    let d = (field[i + 1] - field[i - 1]) / (2.0 * h);
    if !d.is_finite() {
        return Err(Error::NonFinite("first-derivative stencil".into()));
    }
    Ok(d)
}

/// Central second derivative in the grid coordinate, second order.
pub fn dxx_at(field: &[f64], i: usize, h: f64) -> Result<f64> {
    check_index(field, i, 1)?;
    let d = (field[i + 1] - 2.0 * field[i] + field[i - 1]) / (h * h);
    if !d.is_finite() {
        return Err(Error::NonFinite("second-derivative stencil".into()));
    }
    Ok(d)
}

/// First derivative of a whole field. Interior cells use the central
/// stencil; the two edge cells use one-sided second-order stencils so the
/// output is total, but edge cells must not enter any reported supremum.
pub fn dx_field(field: &[f64], h: f64) -> Vec<f64> {
    let n = field.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (field[i + 1] - field[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * field[0] + 4.0 * field[1] - field[2]) / (2.0 * h);
    out[n - 1] = (3.0 * field[n - 1] - 4.0 * field[n - 2] + field[n - 3]) / (2.0 * h);
    out
}

/// Arclength first and second covariant derivatives of a base field at an
/// interior grid point:
///
/// ```text
///   f_s  = f_x / phi,
///   f_ss = (f_xx - (phi_x/phi) f_x) / phi^2.
/// ```
pub fn arclength_derivatives(state: &FlowState, field: &[f64], i: usize) -> Result<(f64, f64)> {
    if field.len() != state.len() {
        return Err(Error::Alignment("field/grid length mismatch".into()));
    }
    check_index(field, i, INTERIOR_MARGIN)?;
    let h = state.h();
    let fx = dx_at(field, i, h)?;
    let fxx = dxx_at(field, i, h)?;
    let phix = dx_at(&state.phi, i, h)?;
    let p = state.phi[i];
    let d1 = fx / p;
    let d2 = (fxx - (phix / p) * fx) / (p * p);
    if !d1.is_finite() || !d2.is_finite() {
        return Err(Error::NonFinite("arclength derivative".into()));
    }
    Ok((d1, d2))
}

// ---------------------------------------------------------------------------
// Pointwise geometry
// ---------------------------------------------------------------------------

/// All curvature data of the warped metric at one grid point. The base is
/// one-dimensional, so the nonzero sectional-type components are exactly
/// the three families stored here.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    /// `u_a` at the point.
    pub u: Vec<f64>,
    /// Arclength first derivatives `u_a'`.
    pub du_ds: Vec<f64>,
    /// Arclength covariant second derivatives `u_a''`.
    pub d2u_ds2: Vec<f64>,
    /// Sectional curvature of a (base, fiber-a) plane:
    /// `-(sqrt(u_a))'' / sqrt(u_a)`.
    pub k_base_fiber: Vec<f64>,
    /// Sectional curvature of a plane inside fiber a:
    /// `kappa_F/u_a - (u_a'/u_a)^2 / 4`.
    pub k_fiber_internal: Vec<f64>,
    /// Sectional curvature of a mixed (fiber-a, fiber-b) plane,
    /// `-(u_a'/u_a)(u_b'/u_b)/4`. Symmetric; the diagonal is not a
    /// curvature component and is stored as zero.
    pub k_cross: Vec<Vec<f64>>,
    /// Ricci curvature `R(e_s, e_s)` of the base direction.
    pub ric_horizontal: f64,
    /// Coefficient of `g_{F_a}` in the vertical Ricci block:
    /// `mu_a/2 - (Delta_M u_a - |grad u_a|^2/u_a)/2`.
    pub ric_vertical: Vec<f64>,
}

impl PointGeometry {
    /// Largest absolute sectional-type component at this point. This is the
    /// curvature-norm convention used throughout (`|Rm|`): it makes the
    /// homogeneous-cylinder value exactly `kappa_F / u`.
    pub fn max_abs_component(&self) -> f64 {
        let mut m: f64 = 0.0;
        for &k in self.k_base_fiber.iter().chain(&self.k_fiber_internal) {
            m = m.max(k.abs());
        }
        let a_count = self.u.len();
        for a in 0..a_count {
            for b in 0..a {
                m = m.max(self.k_cross[a][b].abs());
            }
        }
        m
    }

    /// Frobenius-style norm: sqrt of `sum R_{IJKL}^2` over an adapted
    /// orthonormal frame, where each unordered 2-plane contributes 4 equal
    /// squared entries. Secondary diagnostic only.
    pub fn frobenius_norm(&self, spec: &WarpedProductSpec) -> f64 {
        let mut s = 0.0;
        for (a, f) in spec.fibers.iter().enumerate() {
            let n = f.dim as f64;
            s += n * self.k_base_fiber[a].powi(2);
            s += 0.5 * n * (n - 1.0) * self.k_fiber_internal[a].powi(2);
            for b in 0..a {
                let nb = spec.fibers[b].dim as f64;
                s += n * nb * self.k_cross[a][b].powi(2);
            }
        }
        (4.0 * s).sqrt()
    }
}

/// Laplacian of a base scalar with respect to the full metric:
///
/// ```text
///   Delta_M f = Delta_B f + (1/2) sum_a n_a u_a^{-1} <grad u_a, grad f>.
/// ```
pub fn laplacian_scalar(
    spec: &WarpedProductSpec,
    state: &FlowState,
    field: &[f64],
    i: usize,
) -> Result<f64> {
    let (fs, fss) = arclength_derivatives(state, field, i)?;
    let mut lap = fss;
    for (alpha, f) in spec.fibers.iter().enumerate() {
        let u = state.u_at(spec, alpha, i);
        if !(u > 0.0) {
            return Err(Error::SingularState(format!("u[{alpha}][{i}] = {u}")));
        }
        let (us, _) = arclength_derivatives(state, &state.v[alpha], i)?;
        lap += 0.5 * f.dim as f64 * us * fs / u;
    }
    Ok(lap)
}

/// Squared norm (w.r.t. the full metric) of the full covariant Hessian of
/// the base scalar `v_a`. The base block is the covariant `v''`; each
/// fiber contributes a diagonal block `<grad log u_b^{1/2}, grad v_a>`
/// times the fiber metric, hence `n_b (u_b' v_a' / (2 u_b))^2`.
pub fn full_hessian_norm_sq(
    spec: &WarpedProductSpec,
    state: &FlowState,
    alpha: usize,
    i: usize,
) -> Result<f64> {
    let (vs, vss) = arclength_derivatives(state, &state.v[alpha], i)?;
    let mut total = vss * vss;
    for (beta, f) in spec.fibers.iter().enumerate() {
        let u = state.u_at(spec, beta, i);
        if !(u > 0.0) {
            return Err(Error::SingularState(format!("u[{beta}][{i}] = {u}")));
        }
        let (us, _) = arclength_derivatives(state, &state.v[beta], i)?;
        let block = 0.5 * us * vs / u;
        total += f.dim as f64 * block * block;
    }
    Ok(total)
}

/// All curvature components at an interior grid point.
pub fn curvature_components(
    spec: &WarpedProductSpec,
    state: &FlowState,
    i: usize,
) -> Result<PointGeometry> {
    let a_count = spec.num_fibers();
    let mut u = Vec::with_capacity(a_count);
    let mut du = Vec::with_capacity(a_count);
    let mut d2u = Vec::with_capacity(a_count);
    for alpha in 0..a_count {
        let ua = state.u_at(spec, alpha, i);
        if !(ua > 0.0) {
            return Err(Error::SingularState(format!("u[{alpha}][{i}] = {ua}")));
        }
        let (d1, d2) = arclength_derivatives(state, &state.v[alpha], i)?;
        u.push(ua);
        du.push(d1);
        d2u.push(d2);
    }

    let mut k_bf = Vec::with_capacity(a_count);
    let mut k_fi = Vec::with_capacity(a_count);
    for alpha in 0..a_count {
        let r = du[alpha] / u[alpha];
        // -(sqrt u)''/sqrt u = -(u''/(2u) - (u'/u)^2/4)
        k_bf.push(-(0.5 * d2u[alpha] / u[alpha] - 0.25 * r * r));
        k_fi.push(spec.fibers[alpha].fiber_sectional() / u[alpha] - 0.25 * r * r);
    }

    let mut k_cross = vec![vec![0.0; a_count]; a_count];
    for a in 0..a_count {
        for b in 0..a {
            let k = -0.25 * (du[a] / u[a]) * (du[b] / u[b]);
            // computed once, mirrored: symmetry is bitwise by construction
            k_cross[a][b] = k;
            k_cross[b][a] = k;
        }
    }

    let mut ric_h = 0.0;
    for alpha in 0..a_count {
        ric_h += spec.fibers[alpha].dim as f64 * k_bf[alpha];
    }

    let mut ric_v = Vec::with_capacity(a_count);
    for alpha in 0..a_count {
        let lap_u = {
            // Delta_M u_a from the v-field (the homogeneous part is
            // spatially constant).
            let mut l = d2u[alpha];
            for beta in 0..a_count {
                l += 0.5 * spec.fibers[beta].dim as f64 * du[beta] * du[alpha] / u[beta];
            }
            l
        };
        let grad_sq = du[alpha] * du[alpha];
        ric_v.push(0.5 * spec.fibers[alpha].einstein_const
            - 0.5 * (lap_u - grad_sq / u[alpha]));
    }

    Ok(PointGeometry {
        u,
        du_ds: du,
        d2u_ds2: d2u,
        k_base_fiber: k_bf,
        k_fiber_internal: k_fi,
        k_cross,
        ric_horizontal: ric_h,
        ric_vertical: ric_v,
    })
}

/// Pointwise `|Rm|` (max absolute sectional-type component) over the grid
/// interior. Edge cells are excluded and reported as zero.
pub fn riemann_pointwise(spec: &WarpedProductSpec, state: &FlowState) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.len()];
    for i in state.interior() {
        out[i] = curvature_components(spec, state, i)?.max_abs_component();
    }
    Ok(out)
}

/// `sup |Rm|` over the grid interior, with the attaining index.
pub fn riemann_sup_norm_arg(spec: &WarpedProductSpec, state: &FlowState) -> Result<(f64, usize)> {
    let mut sup = 0.0;
    let mut arg = INTERIOR_MARGIN;
    for i in state.interior() {
        let m = curvature_components(spec, state, i)?.max_abs_component();
        if m > sup {
            sup = m;
            arg = i;
        }
    }
    Ok((sup, arg))
}

/// `sup |Rm|` over the grid interior (max-component convention).
pub fn riemann_sup_norm(spec: &WarpedProductSpec, state: &FlowState) -> Result<f64> {
    riemann_sup_norm_arg(spec, state).map(|(s, _)| s)
}

/// Pointwise distance of the curvature from that of the frozen (un-warped)
/// product, against the controlling combination of monitored quantities:
///
/// * `lhs`: max absolute difference of sectional components from the
///   product model (whose only nonzero components are `kappa_F/u_a`),
/// * `rhs`: `rho^{1/2} + sum_a (gamma_a/u_a^2 + chi_a^{1/2}/u_a)`.
///
/// The checker records the measured ratio; no universal constant is
/// asserted.
pub fn cylinder_deviation(
    spec: &WarpedProductSpec,
    state: &FlowState,
    i: usize,
) -> Result<(f64, f64)> {
    let pg = curvature_components(spec, state, i)?;
    let mut lhs: f64 = 0.0;
    for alpha in 0..spec.num_fibers() {
        lhs = lhs.max(pg.k_base_fiber[alpha].abs());
        lhs = lhs.max(
            (pg.k_fiber_internal[alpha] - spec.fibers[alpha].fiber_sectional() / pg.u[alpha])
                .abs(),
        );
        for b in 0..alpha {
            lhs = lhs.max(pg.k_cross[alpha][b].abs());
        }
    }
    let mut rhs = 0.0; // rho^{1/2} = 0 on a 1-D base
    for alpha in 0..spec.num_fibers() {
        let gamma = pg.du_ds[alpha] * pg.du_ds[alpha];
        let chi_sqrt = pg.d2u_ds2[alpha].abs();
        rhs += gamma / (pg.u[alpha] * pg.u[alpha]) + chi_sqrt / pg.u[alpha];
    }
    Ok((lhs, rhs))
}

/// `rho = |Rm[g_B]|^2`. A one-dimensional base is flat, so this is
/// identically zero; kept as a code path so the evolution-inequality
/// checkers stay total. For a base of dimension `k >= 2` this would be the
/// squared norm of the base curvature tensor.
pub fn rho_base(_state: &FlowState, _i: usize) -> f64 {
    0.0
}

pub mod reference {
    //! Brute-force curvature oracle, independent of the direct formulas in
    //! the parent module.
    //!
    //! This path assembles the Christoffel symbols of the warped metric as
    //! grid fields and differentiates *them* numerically, rather than
    //! differentiating the warping profiles and using the closed-form
    //! component expressions. The two routes agree only in the continuum;
    //! their difference measures the discretization error of either.

    use super::*;

    /// Curvature components computed from Christoffel symbols.
    #[derive(Debug, Clone)]
    pub struct OracleComponents {
        pub k_base_fiber: Vec<f64>,
        pub k_fiber_internal: Vec<f64>,
        pub k_cross: Vec<Vec<f64>>,
        pub ric_horizontal: f64,
        pub ric_vertical: Vec<f64>,
    }

    /// The Christoffel data of the warped metric on a 1-D base, as fields:
    /// `gamma_base = phi_x/phi` (the base symbol), and per fiber
    /// `c1_a = -u_{a,x} / (2 phi^2)` (fiber-fiber-to-base block) and
    /// `c2_a = u_{a,x} / (2 u_a)` (base-fiber-to-fiber block).
    pub struct ChristoffelFields {
        pub gamma_base: Vec<f64>,
        pub c1: Vec<Vec<f64>>,
        pub c2: Vec<Vec<f64>>,
    }

    pub fn christoffel_fields(spec: &WarpedProductSpec, state: &FlowState) -> ChristoffelFields {
        let n = state.len();
        let h = state.h();
        let phix = dx_field(&state.phi, h);
        let gamma_base: Vec<f64> = (0..n).map(|i| phix[i] / state.phi[i]).collect();
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        for alpha in 0..spec.num_fibers() {
            let u = state.u_field(spec, alpha);
            let ux = dx_field(&u, h);
            c1.push(
                (0..n)
                    .map(|i| -ux[i] / (2.0 * state.phi[i] * state.phi[i]))
                    .collect(),
            );
            c2.push((0..n).map(|i| ux[i] / (2.0 * u[i])).collect());
        }
        ChristoffelFields { gamma_base, c1, c2 }
    }

    /// Curvature at an interior point from the Christoffel fields:
    ///
    /// * base-fiber: `R_{x t t x} = phi^2 (d_x c1 + gamma_base c1 - c1 c2) ghat`,
    ///   normalized by `g_xx g_tt`;
    /// * fiber blocks from the Gamma*Gamma terms plus the space-form
    ///   curvature of the fiber;
    /// * Ricci entries by tracing the component families.
    pub fn curvature_from_christoffel(
        spec: &WarpedProductSpec,
        state: &FlowState,
        ch: &ChristoffelFields,
        i: usize,
    ) -> Result<OracleComponents> {
        check_index(&state.phi, i, INTERIOR_MARGIN)?;
        let h = state.h();
        let a_count = spec.num_fibers();

        let mut k_bf = Vec::with_capacity(a_count);
        let mut k_fi = Vec::with_capacity(a_count);
        for alpha in 0..a_count {
            let u = state.u_at(spec, alpha, i);
            if !(u > 0.0) {
                return Err(Error::SingularState(format!("u[{alpha}][{i}] = {u}")));
            }
            let c1 = ch.c1[alpha][i];
            let c2 = ch.c2[alpha][i];
            let dc1 = dx_at(&ch.c1[alpha], i, h)?;
            let gb = ch.gamma_base[i];
            k_bf.push((dc1 + gb * c1 - c1 * c2) / u);
            k_fi.push(spec.fibers[alpha].fiber_sectional() / u + c1 * c2 / u);
        }

        let mut k_cross = vec![vec![0.0; a_count]; a_count];
        for a in 0..a_count {
            for b in 0..a {
                let ub = state.u_at(spec, b, i);
                let k = ch.c2[a][i] * ch.c1[b][i] / ub;
                k_cross[a][b] = k;
                k_cross[b][a] = k;
            }
        }

        let mut ric_h = 0.0;
        for alpha in 0..a_count {
            ric_h += spec.fibers[alpha].dim as f64 * k_bf[alpha];
        }
        let mut ric_v = Vec::with_capacity(a_count);
        for alpha in 0..a_count {
            let n_a = spec.fibers[alpha].dim as f64;
            let mut r = k_bf[alpha] + (n_a - 1.0) * k_fi[alpha];
            for beta in 0..a_count {
                if beta != alpha {
                    r += spec.fibers[beta].dim as f64 * k_cross[alpha][beta];
                }
            }
            ric_v.push(r);
        }

        Ok(OracleComponents {
            k_base_fiber: k_bf,
            k_fiber_internal: k_fi,
            k_cross,
            ric_horizontal: ric_h,
            ric_vertical: ric_v,
        })
    }

    /// Max absolute difference between the direct components and the
    /// oracle at one interior point. The oracle's vertical Ricci is a
    /// sectional trace, so the direct value is traced the same way before
    /// comparison (the coefficient form divides by `u_a`).
    pub fn component_difference(
        spec: &WarpedProductSpec,
        state: &FlowState,
        ch: &ChristoffelFields,
        i: usize,
    ) -> Result<f64> {
        let direct = curvature_components(spec, state, i)?;
        let oracle = curvature_from_christoffel(spec, state, ch, i)?;
        let mut d: f64 = 0.0;
        for a in 0..spec.num_fibers() {
            d = d.max((direct.k_base_fiber[a] - oracle.k_base_fiber[a]).abs());
            d = d.max((direct.k_fiber_internal[a] - oracle.k_fiber_internal[a]).abs());
            for b in 0..a {
                d = d.max((direct.k_cross[a][b] - oracle.k_cross[a][b]).abs());
            }
            let direct_ric_v_unit = direct.ric_vertical[a] / direct.u[a];
            d = d.max((direct_ric_v_unit - oracle.ric_vertical[a]).abs());
        }
        d = d.max((direct.ric_horizontal - oracle.ric_horizontal).abs());
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_fiber_spec(dim: usize, mu: f64, a: f64) -> WarpedProductSpec {
        WarpedProductSpec::new(vec![FiberSpec::new(dim, mu, a).unwrap()]).unwrap()
    }

    fn grid(n: usize, half_width: f64) -> Vec<f64> {
        let h = 2.0 * half_width / (n - 1) as f64;
        (0..n).map(|i| -half_width + i as f64 * h).collect()
    }

    /// State with u = hom + v prescribed through v = u_profile - hom.
    fn state_from_u(
        spec: &WarpedProductSpec,
        x: Vec<f64>,
        phi: f64,
        u_profiles: Vec<Box<dyn Fn(f64) -> f64>>,
    ) -> FlowState {
        let n = x.len();
        let v = u_profiles
            .iter()
            .enumerate()
            .map(|(a, f)| {
                let hom = spec.fibers[a].offset; // t = 0
                x.iter().map(|&xi| f(xi) - hom + 1e-30).collect()
            })
            .collect();
        FlowState::new(spec, 0.0, x, vec![phi; n], v).unwrap()
    }

    #[test]
    fn arclength_flat_linear() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(101, 2.0);
        let field = x.clone();
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![0.5; n]]).unwrap();
        let (d1, d2) = arclength_derivatives(&state, &field, 50).unwrap();
        assert!((d1 - 1.0).abs() < 1e-12);
        assert!(d2.abs() < 1e-10);
    }

    #[test]
    fn arclength_constant_phi_two() {
        // d/ds = phi^{-1} d/dx, so a linear field has slope 1/2 when phi = 2.
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(101, 2.0);
        let field = x.clone();
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![2.0; n], vec![vec![0.5; n]]).unwrap();
        let (d1, d2) = arclength_derivatives(&state, &field, 50).unwrap();
        assert!((d1 - 0.5).abs() < 1e-12);
        assert!(d2.abs() < 1e-10);
    }

    #[test]
    fn arclength_quadratic() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(101, 2.0);
        let field: Vec<f64> = x.iter().map(|&xi| xi * xi).collect();
        let n = x.len();
        // x = 1 sits at index 75 on [-2, 2] with 101 points
        let i = 75;
        assert!((x[i] - 1.0).abs() < 1e-12);
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![0.5; n]]).unwrap();
        let (d1, d2) = arclength_derivatives(&state, &field, i).unwrap();
        assert!((d1 - 2.0).abs() < 1e-9, "d1 = {d1}");
        assert!((d2 - 2.0).abs() < 1e-7, "d2 = {d2}");
    }

    #[test]
    fn arclength_boundary_rejected() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(11, 1.0);
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![0.5; n]]).unwrap();
        let field = vec![1.0; n];
        assert!(matches!(
            arclength_derivatives(&state, &field, 1),
            Err(Error::BoundaryStencil { .. })
        ));
    }

    #[test]
    fn laplacian_constant_warping_reduces_to_base() {
        // grad u = 0 kills the comparison correction exactly.
        let spec = single_fiber_spec(3, 1.0, 2.0);
        let x = grid(101, 2.0);
        let field: Vec<f64> = x.iter().map(|&xi| xi * xi).collect();
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![0.7; n]]).unwrap();
        let lap = laplacian_scalar(&spec, &state, &field, 50).unwrap();
        let (_, base) = arclength_derivatives(&state, &field, 50).unwrap();
        assert_eq!(lap, base);
        assert!((lap - 2.0).abs() < 1e-8);
    }

    #[test]
    fn laplacian_comparison_correction() {
        // phi = 1, single fiber n = 2, u = 1 + x^2, field = x, at x = 1:
        // Delta_B x = 0 and the correction is (2x)/(1+x^2) = 1.
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(101, 2.0);
        let state = state_from_u(
            &spec,
            x.clone(),
            1.0,
            vec![Box::new(|xi: f64| 1.0 + xi * xi)],
        );
        let field = x.clone();
        let i = 75;
        let lap = laplacian_scalar(&spec, &state, &field, i).unwrap();
        assert!((lap - 1.0).abs() < 1e-8, "lap = {lap}");
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(51, 2.0);
        let state = state_from_u(&spec, x, 1.0, vec![Box::new(|xi: f64| 1.0 + 0.3 * xi * xi)]);
        let field = vec![3.25; state.len()];
        let lap = laplacian_scalar(&spec, &state, &field, 25).unwrap();
        assert!(lap.abs() < 1e-12);
    }

    #[test]
    fn hessian_norm_exponential_example() {
        // phi = 1, a circle fiber with u = e^x, v = u - a at x = 0:
        // base block (v'')^2 = 1, fiber block (u' v'/(2u))^2 = 1/4.
        // A second, spatially constant fiber satisfies the standing
        // mu > 0 assumption without contributing a Hessian block.
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(1, 0.0, 1e-6).unwrap(),
            FiberSpec::new(2, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let x = grid(201, 1.0);
        let n = x.len();
        let v: Vec<f64> = x.iter().map(|&xi| xi.exp()).collect();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![v, vec![0.5; n]]).unwrap();
        let i = 100; // x = 0; u = 1e-6 + e^x ~ e^x
        let hsq = full_hessian_norm_sq(&spec, &state, 0, i).unwrap();
        assert!((hsq - 1.25).abs() < 1e-3, "hsq = {hsq}");
    }

    #[test]
    fn hessian_norm_trivial_cases() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(51, 2.0);
        let n = x.len();
        // v spatially constant -> 0 even with nontrivial phi
        let phi: Vec<f64> = x.iter().map(|&xi| 1.0 + 0.1 * (xi * 0.7).sin()).collect();
        let state = FlowState::new(&spec, 0.0, x, phi, vec![vec![0.4; n]]).unwrap();
        let hsq = full_hessian_norm_sq(&spec, &state, 0, 25).unwrap();
        assert_eq!(hsq, 0.0);
    }

    #[test]
    fn cylinder_curvature_components() {
        // Exact cylinder: all derivative components vanish, fiber-internal
        // curvature is kappa_F / u.
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(51, 2.0);
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![1e-9; n]]).unwrap();
        let pg = curvature_components(&spec, &state, 25).unwrap();
        assert_eq!(pg.k_base_fiber[0], 0.0);
        let expected = 0.5 / (1.0 + 1e-9);
        assert!((pg.k_fiber_internal[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn parabolic_warping_base_fiber_curvature() {
        // u = 1 + x^2 at x = 0: u = 1, u' = 0, u'' = 2, so
        // K_base_fiber = -(u''/(2u) - (u'/u)^2/4) = -1.
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(101, 2.0);
        let state = state_from_u(&spec, x, 1.0, vec![Box::new(|xi: f64| 1.0 + xi * xi)]);
        let pg = curvature_components(&spec, &state, 50).unwrap();
        assert!((pg.k_base_fiber[0] + 1.0).abs() < 1e-8, "{}", pg.k_base_fiber[0]);
    }

    #[test]
    fn ricci_trace_consistency() {
        // Contracting sectional components must reproduce both Ricci blocks.
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(2, 1.0, 0.7).unwrap(),
            FiberSpec::new(3, 0.8, 1.3).unwrap(),
        ])
        .unwrap();
        let x = grid(201, 3.0);
        let n = x.len();
        let phi: Vec<f64> = x.iter().map(|&xi| 1.0 + 0.2 * (0.8 * xi).cos()).collect();
        let v1: Vec<f64> = x.iter().map(|&xi| 0.5 + 0.2 * (1.1 * xi).sin().powi(2)).collect();
        let v2: Vec<f64> = x.iter().map(|&xi| 0.9 + 0.3 / (1.0 + xi * xi)).collect();
        let state = FlowState::new(&spec, 0.0, x, phi, vec![v1, v2]).unwrap();

        for &i in &[40, 100, 160] {
            let pg = curvature_components(&spec, &state, i).unwrap();
            // horizontal trace
            let mut rh = 0.0;
            for a in 0..2 {
                rh += spec.fibers[a].dim as f64 * pg.k_base_fiber[a];
            }
            assert!((rh - pg.ric_horizontal).abs() < 1e-12);
            // vertical trace: coefficient/u equals the sectional sum
            for a in 0..2 {
                let mut rv = pg.k_base_fiber[a]
                    + (spec.fibers[a].dim as f64 - 1.0) * pg.k_fiber_internal[a];
                for b in 0..2 {
                    if b != a {
                        rv += spec.fibers[b].dim as f64 * pg.k_cross[a][b];
                    }
                }
                let coeff = pg.ric_vertical[a] / pg.u[a];
                assert!(
                    (rv - coeff).abs() < 1e-8,
                    "fiber {a} at {i}: trace {rv} vs coeff {coeff}"
                );
            }
        }
    }

    #[test]
    fn cross_symmetry_is_bitwise() {
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(2, 1.0, 0.7).unwrap(),
            FiberSpec::new(2, 1.0, 1.3).unwrap(),
        ])
        .unwrap();
        let x = grid(101, 3.0);
        let n = x.len();
        let v1: Vec<f64> = x.iter().map(|&xi| 0.5 + 0.2 * (1.3 * xi).sin().powi(2)).collect();
        let v2: Vec<f64> = x.iter().map(|&xi| 1.2 + 0.4 / (1.0 + xi * xi)).collect();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![v1, v2]).unwrap();
        for i in state.interior() {
            let pg = curvature_components(&spec, &state, i).unwrap();
            assert!(pg.k_cross[0][1].to_bits() == pg.k_cross[1][0].to_bits());
        }
    }

    #[test]
    fn riemann_sup_cylinder() {
        // Cylinder with n = 2, mu = 1, u = 1 - t: sup|Rm| = 1/(2(1-t)).
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(64, 2.0);
        let n = x.len();
        let eps = 1e-12;
        let s0 = FlowState::new(&spec, 0.0, x.clone(), vec![1.0; n], vec![vec![eps; n]]).unwrap();
        let r0 = riemann_sup_norm(&spec, &s0).unwrap();
        assert!((r0 - 0.5).abs() < 1e-9, "r0 = {r0}");
        let s1 = FlowState::new(&spec, 0.5, x, vec![1.0; n], vec![vec![eps; n]]).unwrap();
        let r1 = riemann_sup_norm(&spec, &s1).unwrap();
        assert!((r1 - 1.0).abs() < 1e-9, "r1 = {r1}");
    }

    #[test]
    fn riemann_sup_flat_product() {
        // All mu = 0 and u constant: flat.
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(1, 0.0, 1.0).unwrap(),
            FiberSpec::new(2, 1.0, 1e6).unwrap(), // far-future fiber, mu > 0 to satisfy the standing assumption
        ])
        .unwrap();
        let x = grid(32, 1.0);
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![1.0; n], vec![1.0; n]])
            .unwrap();
        let pg = curvature_components(&spec, &state, 10).unwrap();
        assert_eq!(pg.k_base_fiber[0], 0.0);
        assert_eq!(pg.k_fiber_internal[0], 0.0);
        assert_eq!(pg.k_cross[0][1], 0.0);
        // the S^2 fiber still carries kappa/u
        assert!(pg.k_fiber_internal[1] > 0.0);
    }

    #[test]
    fn cylinder_deviation_zero_cases() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(64, 2.0);
        let n = x.len();
        // exact cylinder
        let s = FlowState::new(&spec, 0.0, x.clone(), vec![1.0; n], vec![vec![1e-9; n]]).unwrap();
        let (lhs, rhs) = cylinder_deviation(&spec, &s, 30).unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
        // constant nonzero perturbation is still a product metric
        let s2 = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![0.25; n]]).unwrap();
        let (lhs2, rhs2) = cylinder_deviation(&spec, &s2, 30).unwrap();
        assert_eq!(lhs2, 0.0);
        assert_eq!(rhs2, 0.0);
    }

    #[test]
    fn deviation_ratio_bounded_under_refinement() {
        // Random smooth perturbation: the measured ratio lhs/rhs stays
        // bounded as the grid refines (recorded, not asserted against a
        // universal constant).
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(2, 1.0, 0.8).unwrap(),
            FiberSpec::new(2, 1.0, 1.1).unwrap(),
        ])
        .unwrap();
        let mut ratios = Vec::new();
        for &n in &[201usize, 401] {
            let x = grid(n, 4.0);
            let phi: Vec<f64> = x.iter().map(|&xi| 1.0 + 0.05 * (0.9 * xi).sin()).collect();
            let v1: Vec<f64> = x.iter().map(|&xi| 0.6 + 0.2 * (0.7 * xi).cos()).collect();
            let v2: Vec<f64> = x.iter().map(|&xi| 0.8 + 0.25 / (1.0 + xi * xi)).collect();
            let state = FlowState::new(&spec, 0.0, x, phi, vec![v1, v2]).unwrap();
            let mut worst: f64 = 0.0;
            for i in state.interior() {
                let (lhs, rhs) = cylinder_deviation(&spec, &state, i).unwrap();
                if rhs > 1e-10 {
                    worst = worst.max(lhs / rhs);
                }
            }
            ratios.push(worst);
        }
        // bounded and stable within a factor of 2 across refinement
        assert!(ratios[0] > 0.0 && ratios[1] > 0.0);
        assert!(ratios[1] / ratios[0] < 2.0 && ratios[0] / ratios[1] < 2.0, "{ratios:?}");
    }

    #[test]
    fn varsigma_and_t_form() {
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(2, 1.0, 0.5).unwrap(),
            FiberSpec::new(2, 2.0, 0.6).unwrap(), // a/mu = 0.3, the minimum
            FiberSpec::new(1, 0.0, 0.1).unwrap(), // mu = 0 never counts
        ])
        .unwrap();
        assert_eq!(spec.varsigma(), 1);
        assert!((spec.t_form() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn singular_state_rejected() {
        let spec = single_fiber_spec(2, 1.0, 0.1);
        let x = grid(16, 1.0);
        let n = x.len();
        // u = (0.1 - 1*0.2) + 0.05 < 0: singular, must be refused
        let r = FlowState::new(&spec, 0.2, x, vec![1.0; n], vec![vec![0.05; n]]);
        assert!(matches!(r, Err(Error::SingularState(_))));
    }

    #[test]
    fn oracle_matches_on_cylinder() {
        let spec = single_fiber_spec(2, 1.0, 1.0);
        let x = grid(64, 2.0);
        let n = x.len();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![vec![0.3; n]]).unwrap();
        let ch = reference::christoffel_fields(&spec, &state);
        for i in state.interior() {
            let d = reference::component_difference(&spec, &state, &ch, i).unwrap();
            assert!(d < 1e-12, "difference {d} at {i}");
        }
    }

    #[test]
    fn oracle_convergence_order_on_smooth_state() {
        // One halving: observed order should be ~2.
        let spec = WarpedProductSpec::new(vec![
            FiberSpec::new(2, 1.0, 0.8).unwrap(),
            FiberSpec::new(3, 0.6, 1.2).unwrap(),
        ])
        .unwrap();
        let mut errs = Vec::new();
        for &n in &[129usize, 257] {
            let x = grid(n, 3.0);
            let phi: Vec<f64> = x.iter().map(|&xi| 1.0 + 0.15 * (0.9 * xi).sin()).collect();
            let v1: Vec<f64> = x.iter().map(|&xi| 0.7 + 0.3 * (0.8 * xi).cos()).collect();
            let v2: Vec<f64> = x.iter().map(|&xi| 1.0 + 0.2 * (0.5 * xi).sin()).collect();
            let state = FlowState::new(&spec, 0.0, x, phi, vec![v1, v2]).unwrap();
            let ch = reference::christoffel_fields(&spec, &state);
            let mut worst: f64 = 0.0;
            for i in state.interior() {
                worst = worst.max(reference::component_difference(&spec, &state, &ch, i).unwrap());
            }
            errs.push(worst);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.8, "errs {errs:?}, order {order}");
    }
}
