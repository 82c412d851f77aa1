//! Calculus of control functions on `(0, oo)`.
//!
//! A control function `G` gates how fast a fiber perturbation may decay.
//! Two functionals drive everything here:
//!
//! * `polyd(G) = sup_s (1 + s|G'|/G + s^2|G''|/G)` — a supremum, constant
//!   on monomials, estimated by scanning a log-spaced probe grid;
//! * `parexp(psi) = |(d_t - Delta) psi| / psi + |grad psi|^2 / psi^2` — a
//!   pointwise bound assembled from heat-operator ingredients.
//!
//! The admissible class consists of those `G` with
//! `norm(G) = polyd(G) + sup_s G(s)/s^2` finite. Suprema are estimates
//! over a documented probe grid, never claimed exact except where closed
//! forms exist (`s^2` gives `polyd = 5` and `norm = 6` exactly).

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Log-spaced supremum-probe grid.
#[derive(Debug, Clone)]
pub struct ProbeGrid {
    pub min: f64,
    pub max: f64,
    pub points_per_decade: usize,
}

impl ProbeGrid {
    /// The standard grid: `[1e-8, 1e8]`, 64 points per decade.
    pub fn standard() -> Self {
        ProbeGrid {
            min: 1e-8,
            max: 1e8,
            points_per_decade: 64,
        }
    }

    pub fn samples(&self) -> Vec<f64> {
        let decades = (self.max / self.min).log10();
        let n = (decades * self.points_per_decade as f64).round() as usize;
        (0..=n)
            .map(|i| self.min * 10f64.powf(i as f64 / self.points_per_decade as f64))
            .collect()
    }
}

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth positive function on `(0, oo)` with analytic first and second
/// derivatives, plus its probe grid and evaluation floor.
#[derive(Clone)]
pub struct ControlFunction {
    pub name: String,
    value: Eval,
    d1: Eval,
    d2: Eval,
    /// Evaluation cutoff near zero.
    pub domain_floor: f64,
    pub probe: ProbeGrid,
}

impl fmt::Debug for ControlFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ControlFunction({})", self.name)
    }
}

/// Estimate of a probed supremum together with a saturation verdict: if
/// the running supremum is still being set in the first or last decade of
/// the grid, the scan never leveled off and the supremum is reported as
/// unbounded.
#[derive(Debug, Clone, Copy)]
pub struct SupEstimate {
    pub sup: f64,
    pub saturated: bool,
}

/// Class-membership report for one control function.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GClassReport {
    pub name: String,
    /// `polyd` estimate (infinite if the scan did not saturate).
    pub polyd: f64,
    /// `sup_s G(s)/s^2` estimate.
    pub sup_g_over_s2: f64,
    /// `polyd + sup G/s^2`.
    pub g_norm: f64,
    pub in_class: bool,
    /// Whether `G(s)/s^2 -> 0 as s -> 0` (sub-exponential-decay gate).
    pub decay_flag: bool,
}

impl ControlFunction {
    /// Build from analytic value and derivatives. The derivatives are
    /// cross-checked against central finite differences of the value on a
    /// coarse subset of the probe grid (relative tolerance 1e-6); a
    /// mismatch is a construction error.
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let f = ControlFunction {
            name: name.into(),
            value: Arc::new(value),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
            domain_floor: 1e-300,
            probe: ProbeGrid::standard(),
        };
        f.check_derivative_consistency()?;
        Ok(f)
    }

    /// Same as [`ControlFunction::new`] but with derivatives supplied by
    /// central finite differences of the value. The consistency check then
    /// compares the fallback against itself at shifted steps, catching
    /// values too rough to differentiate.
    pub fn with_fd_derivatives(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let v = Arc::new(value);
        let v1 = v.clone();
        let v2 = v.clone();
        let d1 = move |s: f64| {
            let h = 1e-6 * s;
            (v1(s + h) - v1(s - h)) / (2.0 * h)
        };
        let d2 = move |s: f64| {
            let h = 1e-5 * s;
            (v2(s + h) - 2.0 * v2(s) + v2(s - h)) / (h * h)
        };
        ControlFunction::new(name, move |s| v(s), d1, d2)
    }

    fn check_derivative_consistency(&self) -> Result<()> {
        // Coarse log sweep away from the extremes, where FD in f64 is reliable.
        for k in -4..=4 {
            let s = 10f64.powi(k);
            let g = self.value(s);
            if !(g > 0.0) || !g.is_finite() {
                continue; // positivity is probed separately with a better error
            }
            let h = 1e-6 * s;
            let fd1 = (self.value(s + h) - self.value(s - h)) / (2.0 * h);
            let scale1 = self.d1(s).abs().max(g / s).max(1e-12);
            if (fd1 - self.d1(s)).abs() > 1e-5 * scale1 {
                return Err(Error::Spec(format!(
                    "{}: first derivative inconsistent with value at s = {s} (fd {fd1}, given {})",
                    self.name,
                    self.d1(s)
                )));
            }
            let h2 = 1e-5 * s;
            let fd2 = (self.value(s + h2) - 2.0 * g + self.value(s - h2)) / (h2 * h2);
            let scale2 = self.d2(s).abs().max(g / (s * s)).max(1e-12);
            if (fd2 - self.d2(s)).abs() > 1e-3 * scale2 {
                return Err(Error::Spec(format!(
                    "{}: second derivative inconsistent with value at s = {s} (fd {fd2}, given {})",
                    self.name,
                    self.d2(s)
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, s: f64) -> f64 {
        (self.value)(s)
    }

    pub fn d1(&self, s: f64) -> f64 {
        (self.d1)(s)
    }

    pub fn d2(&self, s: f64) -> f64 {
        (self.d2)(s)
    }

    /// `G(s) = s^2`: the canonical class member, `polyd = 5` exactly.
    pub fn square() -> Self {
        ControlFunction::new("square", |s| s * s, |s| 2.0 * s, |_| 2.0).expect("square is smooth")
    }

    /// `G(s) = s^3 / (1 + s)`.
    pub fn cubic_over_1ps() -> Self {
        ControlFunction::new(
            "cubic_over_1ps",
            |s| s * s * s / (1.0 + s),
            |s| s * s * (3.0 + 2.0 * s) / ((1.0 + s) * (1.0 + s)),
            |s| 2.0 * s * (3.0 + 3.0 * s + s * s) / ((1.0 + s) * (1.0 + s) * (1.0 + s)),
        )
        .expect("cubic_over_1ps is smooth")
    }

    /// `G(s) = e^s`: deliberately out of class (`s^2 G''/G` is unbounded).
    pub fn exp() -> Self {
        ControlFunction::new("exp", f64::exp, f64::exp, f64::exp).expect("exp is smooth")
    }

    /// `G(s) = s^k P(s) / Q(s)` for polynomials with the given
    /// coefficients (constant term first). Positive coefficients keep the
    /// function positive on `(0, oo)`.
    pub fn rational(name: impl Into<String>, k: i32, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.is_empty() || q.is_empty() {
            return Err(Error::Domain("empty polynomial".into()));
        }
        let p = Poly(p);
        let q = Poly(q);
        let pd = p.deriv();
        let pdd = pd.deriv();
        let qd = q.deriv();
        let qdd = qd.deriv();
        let kk = k as f64;
        let value = {
            let (p, q) = (p.clone(), q.clone());
            move |s: f64| s.powi(k) * p.eval(s) / q.eval(s)
        };
        // G = s^k P/Q; logarithmic derivatives keep the algebra short:
        // G'/G = k/s + P'/P - Q'/Q
        // G''/G = (G'/G)^2 + (-k/s^2 + P''/P - (P'/P)^2 - Q''/Q + (Q'/Q)^2)
        let logd = {
            let (p, pd, q, qd) = (p.clone(), pd.clone(), q.clone(), qd.clone());
            move |s: f64| kk / s + pd.eval(s) / p.eval(s) - qd.eval(s) / q.eval(s)
        };
        let d1 = {
            let (value, logd) = (value.clone(), logd.clone());
            move |s: f64| value(s) * logd(s)
        };
        let d2 = {
            let value = value.clone();
            move |s: f64| {
                let l1 = logd(s);
                let l2 = -kk / (s * s) + pdd.eval(s) / p.eval(s)
                    - (pd.eval(s) / p.eval(s)).powi(2)
                    - qdd.eval(s) / q.eval(s)
                    + (qd.eval(s) / q.eval(s)).powi(2);
                value(s) * (l1 * l1 + l2)
            }
        };
        ControlFunction::new(name, value, d1, d2)
    }

    /// Built-in functions selectable by config key.
    pub fn from_key(key: &str) -> Result<Self> {
        match key {
            "square" => Ok(Self::square()),
            "cubic_over_1ps" => Ok(Self::cubic_over_1ps()),
            other => Err(Error::config(
                "control_function",
                format!("unknown key `{other}` (expected `square` or `cubic_over_1ps`)"),
            )),
        }
    }

    /// Pointwise product `f * g` with derivatives by the product rule.
    pub fn product(name: impl Into<String>, f: &ControlFunction, g: &ControlFunction) -> Self {
        let (f, g) = (f.clone(), g.clone());
        let f2 = f.clone();
        let g2 = g.clone();
        let f3 = f.clone();
        let g3 = g.clone();
        ControlFunction {
            name: name.into(),
            value: Arc::new(move |s| f.value(s) * g.value(s)),
            d1: Arc::new(move |s| f2.d1(s) * g2.value(s) + f2.value(s) * g2.d1(s)),
            d2: Arc::new(move |s| {
                f3.d2(s) * g3.value(s) + 2.0 * f3.d1(s) * g3.d1(s) + f3.value(s) * g3.d2(s)
            }),
            domain_floor: 1e-300,
            probe: ProbeGrid::standard(),
        }
    }

    /// Pointwise sum `f + g`.
    pub fn sum(name: impl Into<String>, f: &ControlFunction, g: &ControlFunction) -> Self {
        let (f, g) = (f.clone(), g.clone());
        let f2 = f.clone();
        let g2 = g.clone();
        let f3 = f.clone();
        let g3 = g.clone();
        ControlFunction {
            name: name.into(),
            value: Arc::new(move |s| f.value(s) + g.value(s)),
            d1: Arc::new(move |s| f2.d1(s) + g2.d1(s)),
            d2: Arc::new(move |s| f3.d2(s) + g3.d2(s)),
            domain_floor: 1e-300,
            probe: ProbeGrid::standard(),
        }
    }

    /// Composition `f(g(s))` with chain-rule derivatives.
    pub fn compose(name: impl Into<String>, f: &ControlFunction, g: &ControlFunction) -> Self {
        let (f, g) = (f.clone(), g.clone());
        let f2 = f.clone();
        let g2 = g.clone();
        let f3 = f.clone();
        let g3 = g.clone();
        ControlFunction {
            name: name.into(),
            value: Arc::new(move |s| f.value(g.value(s))),
            d1: Arc::new(move |s| f2.d1(g2.value(s)) * g2.d1(s)),
            d2: Arc::new(move |s| {
                let gv = g3.value(s);
                f3.d2(gv) * g3.d1(s).powi(2) + f3.d1(gv) * g3.d2(s)
            }),
            domain_floor: 1e-300,
            probe: ProbeGrid::standard(),
        }
    }

    /// Positive rescaling `c * f` (leaves `polyd` invariant).
    pub fn scale(name: impl Into<String>, c: f64, f: &ControlFunction) -> Self {
        let f1 = f.clone();
        let f2 = f.clone();
        let f3 = f.clone();
        ControlFunction {
            name: name.into(),
            value: Arc::new(move |s| c * f1.value(s)),
            d1: Arc::new(move |s| c * f2.d1(s)),
            d2: Arc::new(move |s| c * f3.d2(s)),
            domain_floor: 1e-300,
            probe: ProbeGrid::standard(),
        }
    }
}

#[derive(Clone)]
struct Poly(Vec<f64>);

impl Poly {
    fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    fn deriv(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }
}

fn probe_sup(grid: &ProbeGrid, mut term: impl FnMut(f64) -> Result<f64>) -> Result<SupEstimate> {
    let samples = grid.samples();
    let per = grid.points_per_decade;
    let mut sup = f64::NEG_INFINITY;
    let mut decade_max: Vec<f64> = Vec::new();
    let mut current: f64 = f64::NEG_INFINITY;
    for (i, &s) in samples.iter().enumerate() {
        let t = term(s)?;
        if !t.is_finite() {
            // blow-up inside the probed window: certainly unbounded
            return Ok(SupEstimate {
                sup: f64::INFINITY,
                saturated: false,
            });
        }
        sup = sup.max(t);
        current = current.max(t);
        if (i + 1) % per == 0 {
            decade_max.push(current);
            current = f64::NEG_INFINITY;
        }
    }
    if current > f64::NEG_INFINITY {
        decade_max.push(current);
    }
    // Saturated means the global sup is not still growing meaningfully
    // into either end of the probed window. A genuinely unbounded term
    // grows by large factors per decade; a converging one settles far
    // below 0.1% growth per decade.
    let d = decade_max.len();
    let near = 1.0 + 1e-9;
    let settle = 1.0 + 1e-3;
    let grows_right =
        d >= 2 && decade_max[d - 1] * near >= sup && decade_max[d - 1] > decade_max[d - 2] * settle;
    let grows_left =
        d >= 2 && decade_max[0] * near >= sup && decade_max[0] > decade_max[1] * settle;
    Ok(SupEstimate {
        sup,
        saturated: !(grows_right || grows_left),
    })
}

/// `polyd(G)`: supremum over the probe grid of
/// `1 + s|G'|/G + s^2|G''|/G`. Returns infinity when the scan does not
/// saturate. Errors if `G` is not positive on the grid.
pub fn polyd(g: &ControlFunction) -> Result<f64> {
    let est = polyd_estimate(g)?;
    Ok(if est.saturated { est.sup } else { f64::INFINITY })
}

pub fn polyd_estimate(g: &ControlFunction) -> Result<SupEstimate> {
    probe_sup(&g.probe, |s| {
        let gv = g.value(s);
        if !(gv > 0.0) {
            return Err(Error::Domain(format!(
                "{}: nonpositive value {gv} at s = {s}",
                g.name
            )));
        }
        if !gv.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok(1.0 + s * g.d1(s).abs() / gv + s * s * g.d2(s).abs() / gv)
    })
}

/// Pointwise `parexp` assembled from supplied heat-operator ingredients:
/// `|(d_t - Delta) psi| / psi + |grad psi|^2 / psi^2`.
pub fn parexp(psi_value: f64, psi_heat_residual: f64, psi_grad_sq: f64) -> Result<f64> {
    if !(psi_value > 0.0) {
        return Err(Error::Domain(format!(
            "parexp requires a positive value, got {psi_value}"
        )));
    }
    if psi_grad_sq < 0.0 {
        return Err(Error::Domain("parexp requires |grad psi|^2 >= 0".into()));
    }
    Ok(psi_heat_residual.abs() / psi_value + psi_grad_sq / (psi_value * psi_value))
}

/// Full class report: `polyd`, `sup G/s^2`, their sum, membership, and the
/// `G(s)/s^2 -> 0 (s -> 0)` decay gate.
pub fn g_class_report(g: &ControlFunction) -> Result<GClassReport> {
    let pd = polyd_estimate(g)?;
    let ratio = probe_sup(&g.probe, |s| {
        let gv = g.value(s);
        if !(gv > 0.0) {
            return Err(Error::Domain(format!(
                "{}: nonpositive value {gv} at s = {s}",
                g.name
            )));
        }
        Ok(gv / (s * s))
    })?;
    let in_class = pd.saturated && ratio.saturated && pd.sup.is_finite() && ratio.sup.is_finite();
    let polyd_v = if pd.saturated { pd.sup } else { f64::INFINITY };
    let ratio_v = if ratio.saturated { ratio.sup } else { f64::INFINITY };

    // Decay gate: the ratio over the smallest probed decade must already be
    // negligible against the global scale.
    let lowest_decade_max = {
        let mut m: f64 = 0.0;
        let mut s = g.probe.min;
        let step = 10f64.powf(1.0 / g.probe.points_per_decade as f64);
        while s < g.probe.min * 10.0 {
            m = m.max(g.value(s) / (s * s));
            s *= step;
        }
        m
    };
    let decay_flag = ratio.sup.is_finite() && lowest_decade_max <= 1e-3 * ratio.sup.max(1e-300);

    Ok(GClassReport {
        name: g.name.clone(),
        polyd: polyd_v,
        sup_g_over_s2: ratio_v,
        g_norm: polyd_v + ratio_v,
        in_class,
        decay_flag,
    })
}

/// `E(s) = G(s)/s^2`, the decay-rate gauge.
pub fn e_of(g: &ControlFunction, s: f64) -> Result<f64> {
    if s <= g.domain_floor {
        return Err(Error::Domain(format!(
            "E evaluation below the domain floor: s = {s}"
        )));
    }
    Ok(g.value(s) / (s * s))
}

/// The associated Hessian-control function evaluated on the diagonal:
/// `H_a(s) = (sum_b G_b(s)/s^2) * G_a(s)`, with derivatives assembled by
/// product and quotient rules from the members' evaluators.
pub fn make_h(gs: &[ControlFunction], alpha: usize) -> Result<ControlFunction> {
    if alpha >= gs.len() {
        return Err(Error::Domain(format!("fiber index {alpha} out of range")));
    }
    for g in gs {
        let rep = g_class_report(g)?;
        if !rep.in_class {
            return Err(Error::OutOfClass(g.name.clone()));
        }
    }
    let members: Vec<ControlFunction> = gs.to_vec();
    let ga = gs[alpha].clone();
    let m1 = members.clone();
    let ga1 = ga.clone();
    let m2 = members.clone();
    let ga2 = ga.clone();

    // S(s) = sum_b G_b(s)/s^2, with S' and S'' by the quotient rule.
    let s_val = move |members: &[ControlFunction], s: f64| -> f64 {
        members.iter().map(|g| g.value(s) / (s * s)).sum()
    };
    let s_d1 = |members: &[ControlFunction], s: f64| -> f64 {
        members
            .iter()
            .map(|g| g.d1(s) / (s * s) - 2.0 * g.value(s) / (s * s * s))
            .sum()
    };
    let s_d2 = |members: &[ControlFunction], s: f64| -> f64 {
        members
            .iter()
            .map(|g| {
                g.d2(s) / (s * s) - 4.0 * g.d1(s) / (s * s * s) + 6.0 * g.value(s) / (s * s * s * s)
            })
            .sum()
    };

    let name = format!("H[{}]", gs[alpha].name);
    let value = {
        let members = members.clone();
        let ga = ga.clone();
        move |s: f64| s_val(&members, s) * ga.value(s)
    };
    let d1 = move |s: f64| s_d1(&m1, s) * ga1.value(s) + s_val(&m1, s) * ga1.d1(s);
    let d2 = move |s: f64| {
        s_d2(&m2, s) * ga2.value(s) + 2.0 * s_d1(&m2, s) * ga2.d1(s) + s_val(&m2, s) * ga2.d2(s)
    };
    ControlFunction::new(name, value, d1, d2)
}

/// Vector-argument form of the associated function:
/// `H_a[s_1..s_A](s_a) = (sum_b G_b(s_b)/s_b^2) * G_a(s_a)`. The flow
/// pipeline calls this with the per-fiber perturbation values at a point.
pub fn h_vector(gs: &[ControlFunction], alpha: usize, s: &[f64]) -> Result<f64> {
    if s.len() != gs.len() || alpha >= gs.len() {
        return Err(Error::Alignment("per-fiber argument mismatch".into()));
    }
    let mut acc = 0.0;
    for (g, &sb) in gs.iter().zip(s) {
        if sb <= g.domain_floor {
            return Err(Error::Domain(format!("H argument below floor: {sb}")));
        }
        acc += g.value(sb) / (sb * sb);
    }
    Ok(acc * gs[alpha].value(s[alpha]))
}

// ---------------------------------------------------------------------------
// Calculus-inequality checkers
// ---------------------------------------------------------------------------

/// One side-by-side evaluation of a calculus inequality: the checker
/// reports both sides and the slack factor `lhs/rhs`; callers decide what
/// to assert.
#[derive(Debug, Clone, Copy)]
pub struct IneqSample {
    pub lhs: f64,
    pub rhs: f64,
}

impl IneqSample {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300
    }

    pub fn holds_with_factor(&self, c: f64) -> bool {
        self.lhs <= c * self.rhs * (1.0 + 1e-12) + 1e-300
    }
}

/// `polyd(f + g)` against `polyd(f) + polyd(g)`.
pub fn ineq_polyd_sum(f: &ControlFunction, g: &ControlFunction) -> Result<IneqSample> {
    let lhs = polyd(&ControlFunction::sum("f+g", f, g))?;
    Ok(IneqSample {
        lhs,
        rhs: polyd(f)? + polyd(g)?,
    })
}

/// `polyd(f g)` against `polyd(f) polyd(g)`.
pub fn ineq_polyd_product(f: &ControlFunction, g: &ControlFunction) -> Result<IneqSample> {
    let lhs = polyd(&ControlFunction::product("f*g", f, g))?;
    Ok(IneqSample {
        lhs,
        rhs: polyd(f)? * polyd(g)?,
    })
}

/// `polyd(f o g)` against `polyd(f) polyd(g)^2`.
pub fn ineq_polyd_compose(f: &ControlFunction, g: &ControlFunction) -> Result<IneqSample> {
    let lhs = polyd(&ControlFunction::compose("f.g", f, g))?;
    Ok(IneqSample {
        lhs,
        rhs: polyd(f)? * polyd(g)?.powi(2),
    })
}

/// Consistent pointwise heat data for a positive function on spacetime:
/// the value, `(d_t - Delta) psi`, and the (signed, one-dimensional)
/// gradient.
#[derive(Debug, Clone, Copy)]
pub struct HeatSample {
    pub psi: f64,
    pub heat: f64,
    pub grad: f64,
}

impl HeatSample {
    pub fn parexp(&self) -> Result<f64> {
        parexp(self.psi, self.heat, self.grad * self.grad)
    }

    /// Product rule: `(d_t - Delta)(ab) = a (d_t-Delta)b + b (d_t-Delta)a
    /// - 2 <grad a, grad b>`.
    pub fn product(&self, other: &HeatSample) -> HeatSample {
        HeatSample {
            psi: self.psi * other.psi,
            heat: self.psi * other.heat + other.psi * self.heat - 2.0 * self.grad * other.grad,
            grad: self.psi * other.grad + other.psi * self.grad,
        }
    }

    pub fn sum(&self, other: &HeatSample) -> HeatSample {
        HeatSample {
            psi: self.psi + other.psi,
            heat: self.heat + other.heat,
            grad: self.grad + other.grad,
        }
    }

    /// Chain rule for `phi(psi)`:
    /// `(d_t - Delta)(phi o psi) = phi'(psi) (d_t-Delta)psi - phi''(psi) |grad psi|^2`.
    pub fn compose(&self, phi: &ControlFunction) -> HeatSample {
        HeatSample {
            psi: phi.value(self.psi),
            heat: phi.d1(self.psi) * self.heat - phi.d2(self.psi) * self.grad * self.grad,
            grad: phi.d1(self.psi) * self.grad,
        }
    }
}

/// `parexp(phi o psi)` against `polyd(phi)^2 parexp(psi)`.
pub fn ineq_parexp_compose(phi: &ControlFunction, psi: &HeatSample) -> Result<IneqSample> {
    Ok(IneqSample {
        lhs: psi.compose(phi).parexp()?,
        rhs: polyd(phi)?.powi(2) * psi.parexp()?,
    })
}

/// `parexp(psi1 psi2)` against `parexp(psi1) + parexp(psi2)`.
pub fn ineq_parexp_product(a: &HeatSample, b: &HeatSample) -> Result<IneqSample> {
    Ok(IneqSample {
        lhs: a.product(b).parexp()?,
        rhs: a.parexp()? + b.parexp()?,
    })
}

/// `parexp(psi1 + psi2)` against `2 (parexp(psi1) + parexp(psi2))`.
pub fn ineq_parexp_sum(a: &HeatSample, b: &HeatSample) -> Result<IneqSample> {
    Ok(IneqSample {
        lhs: a.sum(b).parexp()?,
        rhs: 2.0 * (a.parexp()? + b.parexp()?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyd_constant_is_one() {
        let c = ControlFunction::new("const", |_| 3.5, |_| 0.0, |_| 0.0).unwrap();
        assert_eq!(polyd(&c).unwrap(), 1.0);
    }

    #[test]
    fn polyd_square_is_five_exactly() {
        assert_eq!(polyd(&ControlFunction::square()).unwrap(), 5.0);
    }

    #[test]
    fn polyd_cubic_over_1ps() {
        // Closed form: 1 + (3+2s)/(1+s) + 2(3+3s+s^2)/(1+s)^2 decreases from
        // 10 (s -> 0) to 5 (s -> oo); the probed supremum sits at the low
        // end of the grid, just under 10.
        let pd = polyd(&ControlFunction::cubic_over_1ps()).unwrap();
        assert!(pd.is_finite());
        assert!((pd - 10.0).abs() < 1e-5, "pd = {pd}");
    }

    #[test]
    fn polyd_scale_invariant_exact_for_pow2() {
        // All three terms are ratios, so c*G evaluates identically when
        // multiplication by c is exact.
        let g = ControlFunction::cubic_over_1ps();
        for &c in &[2.0, 4.0, 0.5] {
            let cg = ControlFunction::scale("cG", c, &g);
            assert_eq!(polyd(&g).unwrap(), polyd(&cg).unwrap());
        }
        // general positive c agrees to rounding
        let cg = ControlFunction::scale("cG", 3.0, &g);
        assert!((polyd(&g).unwrap() - polyd(&cg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn parexp_examples() {
        // constant psi in a static flat metric
        assert_eq!(parexp(2.0, 0.0, 0.0).unwrap(), 0.0);
        // psi = e^x static on flat space: (d_t - Delta)psi = -psi, grad = psi
        let p = parexp(1.0, -1.0, 1.0).unwrap();
        assert_eq!(p, 2.0);
        // scale invariance: c*psi leaves both ratio terms unchanged
        let p2 = parexp(4.0, -4.0, 16.0).unwrap();
        assert_eq!(p2, 2.0);
        // domain error
        assert!(parexp(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn class_report_square() {
        let rep = g_class_report(&ControlFunction::square()).unwrap();
        assert_eq!(rep.polyd, 5.0);
        assert_eq!(rep.sup_g_over_s2, 1.0);
        assert_eq!(rep.g_norm, 6.0);
        assert!(rep.in_class);
        assert!(!rep.decay_flag, "G/s^2 = 1 does not decay");
    }

    #[test]
    fn class_report_cubic() {
        let rep = g_class_report(&ControlFunction::cubic_over_1ps()).unwrap();
        assert!(rep.in_class);
        // sup G/s^2 = sup s/(1+s) -> 1 at the top of the grid
        assert!((rep.sup_g_over_s2 - 1.0).abs() < 1e-6, "{}", rep.sup_g_over_s2);
        assert!(rep.decay_flag);
        assert!((rep.g_norm - 11.0).abs() < 1e-4, "{}", rep.g_norm);
    }

    #[test]
    fn class_report_exp_not_in_class() {
        let rep = g_class_report(&ControlFunction::exp()).unwrap();
        assert!(!rep.in_class);
        assert!(rep.g_norm.is_infinite());
    }

    #[test]
    fn e_of_examples() {
        let sq = ControlFunction::square();
        assert_eq!(e_of(&sq, 0.37).unwrap(), 1.0);
        let cu = ControlFunction::cubic_over_1ps();
        assert!((e_of(&cu, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(e_of(&cu, 0.0).is_err());
    }

    #[test]
    fn e_bounded_by_class_norm() {
        let cu = ControlFunction::cubic_over_1ps();
        let rep = g_class_report(&cu).unwrap();
        for s in cu.probe.samples() {
            assert!(e_of(&cu, s).unwrap() <= rep.sup_g_over_s2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn make_h_single_square() {
        // single fiber, G = s^2: H = (s^2/s^2) * s^2 = s^2
        let h = make_h(&[ControlFunction::square()], 0).unwrap();
        for &s in &[0.01, 0.5, 1.0, 7.0] {
            assert!((h.value(s) - s * s).abs() < 1e-12 * s * s);
        }
    }

    #[test]
    fn make_h_single_cubic() {
        // G = s^3/(1+s): H = G^2/s^2 = s^4/(1+s)^2
        let h = make_h(&[ControlFunction::cubic_over_1ps()], 0).unwrap();
        for &s in &[0.1f64, 1.0, 3.0] {
            let expect = s.powi(4) / (1.0 + s).powi(2);
            assert!((h.value(s) - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn make_h_two_identical_fibers() {
        // equal arguments: H = 2 (G/s^2) G
        let gs = [ControlFunction::cubic_over_1ps(), ControlFunction::cubic_over_1ps()];
        let h = make_h(&gs, 0).unwrap();
        for &s in &[0.2, 1.0, 4.0] {
            let g = gs[0].value(s);
            let expect = 2.0 * (g / (s * s)) * g;
            assert!((h.value(s) - expect).abs() < 1e-12 * expect.max(1.0));
        }
        // vector form with distinct arguments
        let hv = h_vector(&gs, 0, &[1.0, 2.0]).unwrap();
        let g1 = gs[0].value(1.0);
        let g2 = gs[1].value(2.0);
        let expect = (g1 / 1.0 + g2 / 4.0) * g1;
        assert!((hv - expect).abs() < 1e-12);
    }

    #[test]
    fn make_h_rejects_out_of_class() {
        assert!(matches!(
            make_h(&[ControlFunction::exp()], 0),
            Err(Error::OutOfClass(_))
        ));
    }

    #[test]
    fn h_stays_in_class() {
        let h = make_h(&[ControlFunction::cubic_over_1ps(), ControlFunction::square()], 1).unwrap();
        let rep = g_class_report(&h).unwrap();
        assert!(rep.in_class, "H report: {rep:?}");
    }

    #[test]
    fn rational_constructor_matches_closed_form() {
        // s^3/(1+s) as a rational build must agree with the hand-coded one.
        let r = ControlFunction::rational("r", 3, vec![1.0], vec![1.0, 1.0]).unwrap();
        let c = ControlFunction::cubic_over_1ps();
        for &s in &[0.01, 0.3, 1.0, 10.0] {
            assert!((r.value(s) - c.value(s)).abs() < 1e-12 * c.value(s).max(1e-12));
            assert!((r.d1(s) - c.d1(s)).abs() < 1e-9 * c.d1(s).abs().max(1e-12));
            assert!((r.d2(s) - c.d2(s)).abs() < 1e-9 * c.d2(s).abs().max(1e-12));
        }
    }

    #[test]
    fn provable_calculus_inequalities_hold() {
        let f = ControlFunction::square();
        let g = ControlFunction::cubic_over_1ps();
        assert!(ineq_polyd_sum(&f, &g).unwrap().holds());
        assert!(ineq_polyd_compose(&f, &g).unwrap().holds());
        let a = HeatSample { psi: 1.0, heat: 0.3, grad: 0.9 };
        let b = HeatSample { psi: 2.0, heat: -0.2, grad: 0.4 };
        assert!(ineq_parexp_compose(&f, &a).unwrap().holds());
        assert!(ineq_parexp_sum(&a, &b).unwrap().holds());
        // product form needs slack 3 in the worst case (see the seeded
        // suite); this particular pair satisfies the weaker bound
        assert!(ineq_parexp_product(&a, &b).unwrap().holds_with_factor(3.0));
    }
}
