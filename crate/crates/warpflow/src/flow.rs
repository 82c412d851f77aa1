//! Method-of-lines time integration of the warped-product Ricci flow
//! system over a one-dimensional base.
//!
//! The evolved fields are the base factor `phi` and the perturbations
//! `v_a` (the homogeneous part `a_a - mu_a t` is carried analytically):
//!
//! ```text
//!   d v_a / dt   = Delta_M v_a - |grad v_a|^2 / u_a,
//!   d log phi/dt = sum_b n_b (sqrt(u_b))_ss / sqrt(u_b),
//! ```
//!
//! where `Delta_M` is the full-metric Laplacian of a base scalar and
//! `_ss` the covariant arclength second derivative. The phi equation is
//! `-Rc(e_s, e_s)`; contracting the curvature formulas fixes its sign
//! (an exact homogeneous cylinder has `phi` constant, and a fat bump in
//! `u` contracts the base over it).
//!
//! Stepping is explicit Heun (RK2) under a parabolic CFL bound
//! `dt <= cfl_safety * h_s^2 / 2` with `h_s` the smallest arclength grid
//! spacing. Steps that leave the positive cone `v > 0`, `u > 0` are
//! rejected and retried at half the step; repeated rejection is the
//! singularity-imminent signal.

use crate::error::{Error, Result};
use crate::geometry::{self, FlowState, WarpedProductSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Boundary handling for the evolved fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Clamp `v_a` at the boundary to its initial tail values and `phi`
    /// to its initial boundary value. Justified by the preserved-tail
    /// asymptotics: boundary values move by a factor `1 + O(G(v)/v^2)`.
    #[default]
    AsymptoticDirichlet,
    /// Reflecting (zero-slope) boundary, for sensitivity studies.
    Neumann,
}

/// Integrator controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Fraction of the parabolic stability limit to use, in (0, 1].
    pub cfl_safety: f64,
    /// Hard cap on the step size.
    pub dt_max: f64,
    /// Fixed step size; overrides the adaptive choice when set (the
    /// caller is responsible for keeping it inside the CFL bound).
    pub fixed_dt: Option<f64>,
    pub bc_mode: BcMode,
    /// Stop once `min u` over interior and fibers with `mu > 0` falls
    /// below this floor.
    pub stop_u_floor: f64,
    /// Optional wall-time (flow-time) limit.
    pub stop_time: Option<f64>,
    /// Persist a checkpoint every this many steps (0 disables; used by
    /// the harness, not by `run` itself).
    pub checkpoint_every: usize,
    /// Keep every `frame_stride`-th state in memory.
    pub frame_stride: usize,
    /// Within this factor of the floor, keep every frame regardless of
    /// stride so the final decade is densely sampled.
    pub end_capture_factor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            cfl_safety: 0.25,
            dt_max: 1e-2,
            fixed_dt: None,
            bc_mode: BcMode::AsymptoticDirichlet,
            stop_u_floor: 1e-4,
            stop_time: None,
            checkpoint_every: 0,
            frame_stride: 1,
            end_capture_factor: 10.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::config("integrator.cfl_safety", "must lie in (0, 1]"));
        }
        if !(self.stop_u_floor > 0.0) {
            return Err(Error::config("integrator.stop_u_floor", "must be positive"));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::config("integrator.dt_max", "must be positive"));
        }
        if self.frame_stride == 0 {
            return Err(Error::config("integrator.frame_stride", "must be >= 1"));
        }
        Ok(())
    }
}

/// Time derivatives of the evolved fields.
#[derive(Debug, Clone)]
pub struct Rhs {
    pub dphi_dt: Vec<f64>,
    pub dv_dt: Vec<Vec<f64>>,
}

/// Evaluate the right-hand side on the full grid. Boundary cells follow
/// the boundary mode: frozen for asymptotic Dirichlet, mirrored stencils
/// for Neumann.
pub fn rhs(spec: &WarpedProductSpec, state: &FlowState, bc: BcMode) -> Result<Rhs> {
    let n = state.len();
    let a_count = spec.num_fibers();
    let h = state.h();

    // mirror index for Neumann ghosts
    let refl = |i: isize| -> usize {
        if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * n - 2 - i as usize
        } else {
            i as usize
        }
    };

    let u: Vec<Vec<f64>> = (0..a_count).map(|a| state.u_field(spec, a)).collect();
    let w: Vec<Vec<f64>> = u
        .iter()
        .map(|ua| ua.iter().map(|&x| x.sqrt()).collect())
        .collect();

    let mut dphi = vec![0.0; n];
    let mut dv = vec![vec![0.0; n]; a_count];

    let range: Vec<usize> = match bc {
        BcMode::AsymptoticDirichlet => (1..n - 1).collect(),
        BcMode::Neumann => (0..n).collect(),
    };

    for &i in &range {
        let il = refl(i as isize - 1);
        let ir = refl(i as isize + 1);
        let p = state.phi[i];
        let phix = (state.phi[ir] - state.phi[il]) / (2.0 * h);
        let gb = phix / p;

        // arclength derivatives of every u_a at this point
        let mut us = Vec::with_capacity(a_count);
        let mut drift = 0.0;
        for a in 0..a_count {
            let ux = (u[a][ir] - u[a][il]) / (2.0 * h);
            let s = ux / p;
            us.push(s);
            drift += 0.5 * spec.fibers[a].dim as f64 * s / u[a][i];
        }

        for a in 0..a_count {
            let va = &state.v[a];
            let vx = (va[ir] - va[il]) / (2.0 * h);
            let vxx = (va[ir] - 2.0 * va[i] + va[il]) / (h * h);
            let vs = vx / p;
            let vss = (vxx - gb * vx) / (p * p);
            let lap = vss + drift * vs;
            let d = lap - vs * vs / u[a][i];
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("dv/dt at fiber {a}, index {i}")));
            }
            dv[a][i] = d;
        }

        let mut rate = 0.0;
        for a in 0..a_count {
            let wa = &w[a];
            let wx = (wa[ir] - wa[il]) / (2.0 * h);
            let wxx = (wa[ir] - 2.0 * wa[i] + wa[il]) / (h * h);
            let wss = (wxx - gb * wx) / (p * p);
            rate += spec.fibers[a].dim as f64 * wss / wa[i];
        }
        let d = p * rate;
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("dphi/dt at index {i}")));
        }
        dphi[i] = d;
    }

    Ok(Rhs {
        dphi_dt: dphi,
        dv_dt: dv,
    })
}

fn advanced(state: &FlowState, k: &Rhs, dt: f64) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let phi = state
        .phi
        .iter()
        .zip(&k.dphi_dt)
        .map(|(&p, &d)| p + dt * d)
        .collect();
    let v = state
        .v
        .iter()
        .zip(&k.dv_dt)
        .map(|(va, ka)| va.iter().zip(ka).map(|(&x, &d)| x + dt * d).collect())
        .collect();
    (state.t + dt, phi, v)
}

fn heun_combine(state: &FlowState, k1: &Rhs, k2: &Rhs, dt: f64) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let phi = state
        .phi
        .iter()
        .zip(k1.dphi_dt.iter().zip(&k2.dphi_dt))
        .map(|(&p, (&a, &b))| p + 0.5 * dt * (a + b))
        .collect();
    let v = state
        .v
        .iter()
        .zip(k1.dv_dt.iter().zip(&k2.dv_dt))
        .map(|(va, (ka, kb))| {
            va.iter()
                .zip(ka.iter().zip(kb))
                .map(|(&x, (&a, &b))| x + 0.5 * dt * (a + b))
                .collect()
        })
        .collect();
    (state.t + dt, phi, v)
}

/// One Heun (RK2) step of size `dt`. Positivity of `v` and `u` is
/// enforced by construction of the result; a violation is reported as a
/// singular-state error so callers can reject and halve.
pub fn step(
    spec: &WarpedProductSpec,
    state: &FlowState,
    dt: f64,
    bc: BcMode,
) -> Result<FlowState> {
    let k1 = rhs(spec, state, bc)?;
    let (t1, phi1, v1) = advanced(state, &k1, dt);
    let mid = FlowState::new(spec, t1, state.x.clone(), phi1, v1)?;
    let k2 = rhs(spec, &mid, bc)?;
    let (t2, phi2, v2) = heun_combine(state, &k1, &k2, dt);
    FlowState::new(spec, t2, state.x.clone(), phi2, v2)
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `min u` reached the configured floor: the singularity is imminent.
    FloorHit,
    /// The configured stop time was reached.
    TimeLimit,
    /// Step size underflowed under repeated rejection.
    StepFailure,
}

/// Scalar track of the approach to the singular time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UMinSample {
    pub t: f64,
    pub u_min: f64,
    /// Grid index where the minimum is attained.
    pub argmin: usize,
    /// Fiber attaining the minimum (among fibers with `mu > 0`).
    pub fiber: usize,
}

/// One retained state with the step size that produced it.
#[derive(Debug, Clone)]
pub struct TrajFrame {
    pub state: FlowState,
    pub dt: f64,
    pub step: u64,
}

/// A completed run: retained frames plus the per-step `u_min` track.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: WarpedProductSpec,
    pub frames: Vec<TrajFrame>,
    pub u_min_series: Vec<UMinSample>,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn initial(&self) -> &FlowState {
        &self.frames[0].state
    }

    pub fn last(&self) -> &FlowState {
        &self.frames[self.frames.len() - 1].state
    }

    /// Frame whose time is closest to `t`.
    pub fn nearest_frame(&self, t: f64) -> &TrajFrame {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, f) in self.frames.iter().enumerate() {
            let d = (f.state.t - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        &self.frames[best]
    }

    /// Three consecutive stored frames centered at `mid`, uniformly
    /// spaced in time (needed by central-in-time residual checks).
    pub fn window3(&self, mid: usize) -> Result<([&FlowState; 3], f64)> {
        if mid == 0 || mid + 1 >= self.frames.len() {
            return Err(Error::Alignment("window extends past stored frames".into()));
        }
        let (a, b, c) = (
            &self.frames[mid - 1],
            &self.frames[mid],
            &self.frames[mid + 1],
        );
        let d1 = b.state.t - a.state.t;
        let d2 = c.state.t - b.state.t;
        if (d1 - d2).abs() > 1e-10 * d1.max(d2) {
            return Err(Error::Alignment(format!(
                "frames not uniformly spaced in time ({d1} vs {d2})"
            )));
        }
        Ok(([&a.state, &b.state, &c.state], d1))
    }

    /// Global minimum of `u` across stored frames of a given fiber field
    /// evaluated at one grid index.
    pub fn frame_times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.state.t).collect()
    }
}

/// Outcome summary of a run, oriented at singularity detection.
#[derive(Debug, Clone, Serialize)]
pub struct SingularityReport {
    /// Whether the run reached the `u` floor (a singularity, as opposed
    /// to an ordinary time limit).
    pub detected: bool,
    /// Estimated singular time: root of a linear fit of `min_x u` over
    /// the final decade before the floor.
    pub t_sing_est: f64,
    /// Formal vanishing time `a_s / mu_s` of the homogeneous part.
    pub t_form: f64,
    /// Average of `sup|Rm| * (t_sing_est - t)` over the final decade.
    pub type_one_constant: f64,
    /// Whether the argmin of `u` sat in the outer 10% of the domain over
    /// the last samples.
    pub at_spatial_infinity: bool,
    /// Whether the argmax of `|Rm|` on the final frame sits in the outer
    /// 10% of the domain.
    pub rm_argmax_outer: bool,
    /// Set when `|Rm|` is spatially uniform to rounding on the final
    /// frame, which makes the two locators above meaningless.
    pub spatially_degenerate: bool,
    pub varsigma: usize,
    pub stop: StopReason,
    pub t_end: f64,
    pub u_min_end: f64,
    pub steps: u64,
}

fn global_u_min(spec: &WarpedProductSpec, state: &FlowState) -> UMinSample {
    let mut best = UMinSample {
        t: state.t,
        u_min: f64::INFINITY,
        argmin: 0,
        fiber: 0,
    };
    for (a, f) in spec.fibers.iter().enumerate() {
        if f.einstein_const <= 0.0 {
            continue;
        }
        let (m, arg) = state.u_min_interior(spec, a);
        if m < best.u_min {
            best.u_min = m;
            best.argmin = arg;
            best.fiber = a;
        }
    }
    best
}

/// Integrate from `state0` until the `u` floor, the stop time, or step
/// failure. Returns the trajectory together with the singularity report.
pub fn run(
    spec: &WarpedProductSpec,
    state0: &FlowState,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, SingularityReport)> {
    cfg.validate()?;
    state0.validate(spec)?;
    let n = state0.len();
    let h = state0.h();
    let mu_max = spec
        .fibers
        .iter()
        .map(|f| f.einstein_const.max(0.0))
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let mut frames = Vec::new();
    let mut u_series = Vec::new();
    let mut state = state0.clone();
    let mut stop = StopReason::TimeLimit;
    let mut steps: u64 = 0;
    frames.push(TrajFrame {
        state: state.clone(),
        dt: 0.0,
        step: 0,
    });
    u_series.push(global_u_min(spec, &state));

    let max_steps: u64 = 50_000_000;
    loop {
        let sample = global_u_min(spec, &state);
        if sample.u_min <= cfg.stop_u_floor {
            stop = StopReason::FloorHit;
            break;
        }
        if let Some(ts) = cfg.stop_time {
            if state.t >= ts - 1e-15 {
                stop = StopReason::TimeLimit;
                break;
            }
        }
        if steps >= max_steps {
            return Err(Error::Numeric("step budget exhausted".into()));
        }

        // parabolic CFL in arclength, end-game refinement, stop-time clamp
        let phi_min = state.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        let hs = phi_min * h;
        let mut dt = match cfg.fixed_dt {
            Some(d) => d,
            None => (cfg.cfl_safety * hs * hs / 2.0)
                .min(cfg.dt_max)
                .min(0.2 * sample.u_min / mu_max),
        };
        if let Some(ts) = cfg.stop_time {
            dt = dt.min(ts - state.t);
        }
        if !(dt > 0.0) {
            return Err(Error::Numeric(format!("step size underflow: dt = {dt}")));
        }

        // attempt with rejection-and-halving
        let mut accepted = None;
        let mut dt_try = dt;
        for _ in 0..48 {
            match step(spec, &state, dt_try, cfg.bc_mode) {
                Ok(next) => {
                    accepted = Some((next, dt_try));
                    break;
                }
                Err(Error::SingularState(_)) | Err(Error::NonFinite(_)) => {
                    dt_try *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        let Some((next, dt_used)) = accepted else {
            stop = StopReason::StepFailure;
            break;
        };

        state = next;
        steps += 1;
        let sample = global_u_min(spec, &state);
        u_series.push(sample);

        let endgame = sample.u_min <= cfg.end_capture_factor * cfg.stop_u_floor;
        if endgame || steps % cfg.frame_stride as u64 == 0 {
            frames.push(TrajFrame {
                state: state.clone(),
                dt: dt_used,
                step: steps,
            });
        }
    }

    // make sure the final state is retained
    if frames.last().map(|f| f.step) != Some(steps) {
        frames.push(TrajFrame {
            state: state.clone(),
            dt: 0.0,
            step: steps,
        });
    }

    let traj = Trajectory {
        spec: spec.clone(),
        frames,
        u_min_series: u_series,
        stop,
    };
    let report = summarize(spec, &traj, cfg, n)?;
    Ok((traj, report))
}

fn summarize(
    spec: &WarpedProductSpec,
    traj: &Trajectory,
    cfg: &IntegratorConfig,
    n: usize,
) -> Result<SingularityReport> {
    let varsigma = spec.varsigma();
    let t_form = spec.t_form();
    let detected = traj.stop == StopReason::FloorHit;
    let last = traj.last();
    let end_sample = traj.u_min_series.last().copied().unwrap();

    // Linear fit of u_min over the final decade before the floor.
    let decade: Vec<&UMinSample> = traj
        .u_min_series
        .iter()
        .filter(|s| s.u_min <= cfg.end_capture_factor * cfg.stop_u_floor)
        .collect();
    let t_sing_est = if detected && decade.len() >= 3 {
        let m = decade.len() as f64;
        let st: f64 = decade.iter().map(|s| s.t).sum();
        let su: f64 = decade.iter().map(|s| s.u_min).sum();
        let stt: f64 = decade.iter().map(|s| s.t * s.t).sum();
        let stu: f64 = decade.iter().map(|s| s.t * s.u_min).sum();
        let denom = m * stt - st * st;
        let slope = (m * stu - st * su) / denom;
        let icept = (su - slope * st) / m;
        if slope < 0.0 {
            -icept / slope
        } else {
            end_sample.t + end_sample.u_min
        }
    } else if detected {
        let mu = spec.fibers[end_sample.fiber].einstein_const.max(1e-12);
        end_sample.t + end_sample.u_min / mu
    } else {
        f64::NAN
    };

    // Type-I product over the final decade, from stored frames.
    let mut type_one = f64::NAN;
    if detected {
        let mut prods = Vec::new();
        for f in &traj.frames {
            let sample = global_u_min(spec, &f.state);
            if sample.u_min <= cfg.end_capture_factor * cfg.stop_u_floor
                && t_sing_est > f.state.t
            {
                let rm = geometry::riemann_sup_norm(spec, &f.state)?;
                prods.push(rm * (t_sing_est - f.state.t));
            }
        }
        if !prods.is_empty() {
            type_one = prods.iter().sum::<f64>() / prods.len() as f64;
        }
    }

    // Locators.
    let x_max = traj.initial().x[n - 1].abs();
    let outer = |idx: usize| traj.initial().x[idx].abs() >= 0.9 * x_max;
    let tail_samples = traj.u_min_series.iter().rev().take(10);
    let at_spatial_infinity = detected && tail_samples.clone().all(|s| outer(s.argmin));

    let (rm_sup, rm_arg) = geometry::riemann_sup_norm_arg(spec, last)?;
    let rm_field = geometry::riemann_pointwise(spec, last)?;
    let rm_min_interior = last
        .interior()
        .map(|i| rm_field[i])
        .fold(f64::INFINITY, f64::min);
    let spatially_degenerate = rm_sup - rm_min_interior <= 1e-9 * rm_sup.abs().max(1e-30);
    let rm_argmax_outer = outer(rm_arg) && !spatially_degenerate;

    Ok(SingularityReport {
        detected,
        t_sing_est,
        t_form,
        type_one_constant: type_one,
        at_spatial_infinity: at_spatial_infinity && !spatially_degenerate,
        rm_argmax_outer,
        spatially_degenerate,
        varsigma,
        stop: traj.stop,
        t_end: last.t,
        u_min_end: end_sample.u_min,
        steps: traj.frames.last().unwrap().step,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    spec: WarpedProductSpec,
    state: FlowState,
}

/// Write a versioned JSON checkpoint of one state.
pub fn write_checkpoint(path: &Path, spec: &WarpedProductSpec, state: &FlowState) -> Result<()> {
    let cp = Checkpoint {
        version: CHECKPOINT_VERSION,
        spec: spec.clone(),
        state: state.clone(),
    };
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, &cp)?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

/// Read a checkpoint, validating version and state invariants.
pub fn read_checkpoint(path: &Path) -> Result<(WarpedProductSpec, FlowState)> {
    let file = std::fs::File::open(path)?;
    let cp: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::config(
            "checkpoint.version",
            format!("unsupported version {}", cp.version),
        ));
    }
    cp.spec.validate()?;
    cp.state.validate(&cp.spec)?;
    Ok((cp.spec, cp.state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assumptions::{build_canonical_example, build_cylinder, GridSpec};

    #[test]
    fn homogeneous_state_is_stationary_in_v_and_phi() {
        let data = build_cylinder(1.0, 2, 0.01, &GridSpec::new(5.0, 64).unwrap()).unwrap();
        let r = rhs(&data.spec, &data.state, BcMode::AsymptoticDirichlet).unwrap();
        for i in 0..data.state.len() {
            assert_eq!(r.dphi_dt[i], 0.0);
            assert_eq!(r.dv_dt[0][i], 0.0);
        }
    }

    #[test]
    fn linear_perturbation_rhs_value() {
        // v = a_v + eps*x near x = 0 with u ~ const: dv/dt ~ -eps^2/u
        // plus the drift (n/2)(u'/u) v' = (n/2) eps^2 / u.
        let grid = GridSpec::new(4.0, 801).unwrap();
        let x = grid.x();
        let n = x.len();
        let spec = WarpedProductSpec::new(vec![crate::geometry::FiberSpec::new(2, 1.0, 1.0).unwrap()])
            .unwrap();
        let eps = 1e-3;
        let v: Vec<f64> = x.iter().map(|&xi| 0.5 + eps * xi).collect();
        let state = FlowState::new(&spec, 0.0, x, vec![1.0; n], vec![v]).unwrap();
        let r = rhs(&spec, &state, BcMode::AsymptoticDirichlet).unwrap();
        let mid = n / 2; // x = 0, u = 1.5
        let u = 1.5;
        let expected = -eps * eps / u + 0.5 * 2.0 * (eps / u) * eps;
        assert!(
            (r.dv_dt[0][mid] - expected).abs() < 1e-12,
            "got {}, expected {expected}",
            r.dv_dt[0][mid]
        );
    }

    #[test]
    fn reflection_symmetry_of_rhs() {
        // Even initial v about x = 0 gives even dv/dt.
        let data = build_canonical_example(2.0, 0.1, 2, &GridSpec::new(10.0, 257).unwrap()).unwrap();
        let r = rhs(&data.spec, &data.state, BcMode::AsymptoticDirichlet).unwrap();
        let n = data.state.len();
        for a in 0..2 {
            for i in 1..n - 1 {
                let j = n - 1 - i;
                assert!(
                    (r.dv_dt[a][i] - r.dv_dt[a][j]).abs() < 1e-13,
                    "asymmetry at {i}: {} vs {}",
                    r.dv_dt[a][i],
                    r.dv_dt[a][j]
                );
            }
        }
    }

    #[test]
    fn cylinder_preserved_to_roundoff() {
        // Exact-solution preservation: u(t) = a - mu t + v0 with v constant.
        let data = build_cylinder(1.0, 2, 1e-7, &GridSpec::new(10.0, 512).unwrap()).unwrap();
        let cfg = IntegratorConfig {
            stop_time: Some(0.9),
            frame_stride: 1000,
            ..Default::default()
        };
        let (traj, report) = run(&data.spec, &data.state, &cfg).unwrap();
        assert_eq!(report.stop, StopReason::TimeLimit);
        let last = traj.last();
        assert!((last.t - 0.9).abs() < 1e-12);
        let exact = 1.0 - last.t;
        let mut worst: f64 = 0.0;
        for i in 0..last.len() {
            let u = last.u_at(&data.spec, 0, i);
            worst = worst.max((u - exact).abs());
        }
        // v0 = 1e-7 is the whole deviation; time stepping adds rounding only
        assert!(worst <= 1e-6, "deviation {worst}");
        assert!(worst >= 0.9e-7, "v0 should persist, got {worst}");
    }

    #[test]
    fn cylinder_singular_time_estimate() {
        let data = build_cylinder(1.0, 2, 1e-7, &GridSpec::new(5.0, 128).unwrap()).unwrap();
        let cfg = IntegratorConfig {
            frame_stride: 50,
            ..Default::default()
        };
        let (_, report) = run(&data.spec, &data.state, &cfg).unwrap();
        assert!(report.detected);
        assert_eq!(report.t_form, 1.0);
        assert!(
            (report.t_sing_est - 1.0).abs() < 1e-4,
            "t_sing_est {}",
            report.t_sing_est
        );
        // |Rm| is spatially constant here: locators must flag degeneracy
        assert!(report.spatially_degenerate);
    }

    #[test]
    fn local_truncation_is_second_order() {
        // One step, then the midpoint residual of the v-equation shrinks
        // like dt^2 (plus a fixed spatial-error floor, which subtracting
        // two runs at the same grid removes).
        let data = build_canonical_example(2.0, 0.1, 2, &GridSpec::new(20.0, 513).unwrap()).unwrap();
        let mut errs = Vec::new();
        for &dt in &[2e-4, 1e-4] {
            let s1 = step(&data.spec, &data.state, dt, BcMode::AsymptoticDirichlet).unwrap();
            let s2 = {
                let half = step(&data.spec, &data.state, dt / 2.0, BcMode::AsymptoticDirichlet)
                    .unwrap();
                step(&data.spec, &half, dt / 2.0, BcMode::AsymptoticDirichlet).unwrap()
            };
            let mut e: f64 = 0.0;
            for a in 0..2 {
                for i in 0..s1.len() {
                    e = e.max((s1.v[a][i] - s2.v[a][i]).abs());
                }
            }
            errs.push(e);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "errors {errs:?}, order {order}");
    }

    #[test]
    fn temporal_convergence_on_inhomogeneous_run() {
        // Richardson self-convergence against a fine-dt reference.
        let data = build_canonical_example(2.0, 0.1, 2, &GridSpec::new(10.0, 129).unwrap()).unwrap();
        let t_end = 0.02;
        let run_fixed = |dt: f64| {
            let cfg = IntegratorConfig {
                fixed_dt: Some(dt),
                stop_time: Some(t_end),
                frame_stride: 100_000,
                ..Default::default()
            };
            let (traj, _) = run(&data.spec, &data.state, &cfg).unwrap();
            traj.last().clone()
        };
        let reference = run_fixed(2.5e-4);
        let mut errs = Vec::new();
        for &dt in &[2e-3, 1e-3] {
            let s = run_fixed(dt);
            let mut e: f64 = 0.0;
            for a in 0..2 {
                for i in 0..s.len() {
                    e = e.max((s.v[a][i] - reference.v[a][i]).abs());
                }
            }
            errs.push(e);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.8, "errors {errs:?}, order {order}");
    }

    #[test]
    fn positivity_and_floor_stop_on_canonical_run() {
        let data = build_canonical_example(2.0, 0.1, 2, &GridSpec::new(20.0, 257).unwrap()).unwrap();
        let cfg = IntegratorConfig {
            frame_stride: 20,
            ..Default::default()
        };
        let (traj, report) = run(&data.spec, &data.state, &cfg).unwrap();
        assert_eq!(report.stop, StopReason::FloorHit);
        assert!(report.detected);
        // every retained frame satisfies the positive-cone invariants by
        // construction; spot-check v > 0 explicitly
        for f in &traj.frames {
            for a in 0..2 {
                assert!(f.state.v[a].iter().all(|&v| v > 0.0));
            }
        }
        assert!(report.t_sing_est > 0.09 && report.t_sing_est < 0.12);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let data = build_canonical_example(2.0, 0.1, 2, &GridSpec::new(5.0, 65).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        write_checkpoint(&path, &data.spec, &data.state).unwrap();
        let (spec2, state2) = read_checkpoint(&path).unwrap();
        assert_eq!(spec2, data.spec);
        assert_eq!(state2.t, data.state.t);
        assert_eq!(state2.v, data.state.v);
    }

    #[test]
    fn neumann_mode_runs() {
        let data = build_canonical_example(2.0, 0.1, 2, &GridSpec::new(10.0, 129).unwrap()).unwrap();
        let cfg = IntegratorConfig {
            bc_mode: BcMode::Neumann,
            stop_time: Some(0.01),
            ..Default::default()
        };
        let (traj, _) = run(&data.spec, &data.state, &cfg).unwrap();
        assert!(traj.last().t >= 0.0099);
    }
}
