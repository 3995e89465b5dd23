//! The semi-explicit three-level time integrator.
//!
//! At every level `m` the auxiliary unknowns `v_k ~ L_k(sigma) u` are found
//! from the tridiagonal line systems
//!
//! ```text
//! s_k(sigma) (sigma^(k) v_k) = Lambda_k(sigma) v^m        (interior nodes)
//! ```
//!
//! and the main unknown is then advanced explicitly,
//!
//! ```text
//! z           = (v_1 + ... + v_n + f^m) / beta
//! Lambda_t v  = z + (h_t^2 / 12) Lambda(sigma) z / beta + (f^{m+1} - 2 f^m + f^{m-1}) / (12 beta)
//! v^{m+1}     = 2 v^m - v^{m-1} + h_t^2 Lambda_t v
//! ```
//!
//! The first step uses a fourth-order Taylor start that needs `f` at
//! `t = h_t / 2` but no derivatives of the data.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Divergence, Error, Result};
use crate::grid::{sample, sample_at, Face, Field, Line, Mesh, NodeClass, TimeAxis, MAX_DIM};
use crate::medium::{build_medium, courant_numbers, CourantNumbers, CourantPolicy, MediumTables, SchemeParams, Support};
use crate::operators::{
    assemble_direction, dominance_check, lambda_apply, lambda_k_apply, DominanceSummary, SkLineCoeffs,
};
use crate::tridiag::{batch_solve_lines, line_residual};

pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// Boundary data of an auxiliary unknown: evaluated at a node on `face`.
pub type FaceFn = Arc<dyn Fn(Face, &[f64], f64) -> f64 + Send + Sync>;

/// One initial-boundary value problem
///
/// ```text
/// beta u_tt = sum_k d_k(d_k u / sigma) + f,   u = g on the boundary,
/// u(., 0) = u0,   u_t(., 0) = u1,             beta = 1 / (sigma c^2).
/// ```
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    /// `(min, max)` per axis.
    pub domain: Vec<(f64, f64)>,
    pub final_time: f64,
    pub sigma: SpaceFn,
    pub sigma_support: Support,
    pub c2: SpaceFn,
    pub source: SpaceTimeFn,
    pub u0: SpaceFn,
    pub u1: SpaceFn,
    pub boundary: SpaceTimeFn,
    /// `g_k` per direction. On the faces `x_k = const` this is
    /// `beta g_tt - sum_{l != k} L_l g - f`; on the other faces `L_k g`.
    pub boundary_aux: Vec<FaceFn>,
    pub exact: Option<SpaceTimeFn>,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.len()
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("final_time", &self.final_time)
            .field("sigma_support", &self.sigma_support)
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Largest relative residual of any line solve so far.
    pub max_residual: f64,
    pub max_abs_v: f64,
}

/// Solution pair `(v^{m-1}, v^m)` plus the auxiliary fields at level `m`.
#[derive(Debug, Clone)]
pub struct StepperState {
    pub level: usize,
    pub t: f64,
    pub v_prev: Field,
    pub v_curr: Field,
    /// `v_k` at level `level`; empty until [`Scheme::solve_aux`] runs.
    pub aux: Vec<Field>,
    pub diagnostics: StepDiagnostics,
    aux_level: Option<usize>,
    source_prev: Option<Field>,
    source_curr: Option<Field>,
}

impl StepperState {
    /// A state at level `level >= 1` built from two solution levels only.
    pub fn from_levels(level: usize, t: f64, v_prev: Field, v_curr: Field) -> Self {
        StepperState {
            level,
            t,
            v_prev,
            v_curr,
            aux: Vec::new(),
            diagnostics: StepDiagnostics::default(),
            aux_level: None,
            source_prev: None,
            source_curr: None,
        }
    }
}

/// A snapshot delivered during [`run`].
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub requested_t: f64,
    pub level: usize,
    pub t: f64,
    pub v: &'a Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotRecord {
    pub requested_t: f64,
    pub level: usize,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_state: StepperState,
    pub courant: CourantNumbers,
    pub dominance: DominanceSummary,
    pub wall_time: Duration,
    pub snapshots: Vec<SnapshotRecord>,
    pub warnings: Vec<String>,
}

/// Divergence is declared when `max |v|` exceeds this multiple of the
/// initial data scale.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// The scheme assembled for one problem on one space-time mesh.
pub struct Scheme<'p> {
    problem: &'p ProblemSpec,
    mesh: Mesh,
    time: TimeAxis,
    params: SchemeParams,
    tables: MediumTables,
    inv_beta: Vec<f64>,
    interior: Vec<bool>,
    boundary_nodes: Vec<usize>,
    lines: Vec<Vec<Line>>,
    coeffs: Vec<Vec<SkLineCoeffs>>,
    courant: CourantNumbers,
    dominance: DominanceSummary,
}

impl<'p> Scheme<'p> {
    pub fn new(problem: &'p ProblemSpec, mesh: &Mesh, time: TimeAxis, params: &SchemeParams) -> Result<Self> {
        params.validate()?;
        let dim = mesh.dim();
        if problem.dim() != dim {
            return Err(Error::usage(format!("problem is {}-dimensional, mesh is {dim}-dimensional", problem.dim())));
        }
        for (k, (&(a, b), axis)) in problem.domain.iter().zip(mesh.axes()).enumerate() {
            let tol = 1e-12 * (b - a).abs().max(1.0);
            if (axis.min() - a).abs() > tol || (axis.max() - b).abs() > tol {
                return Err(Error::usage(format!(
                    "mesh axis {} spans [{}, {}] but the domain is [{a}, {b}]",
                    k + 1,
                    axis.min(),
                    axis.max()
                )));
            }
        }
        if problem.boundary_aux.len() < dim {
            return Err(Error::config(format!(
                "problem {:?} provides boundary data for {} auxiliary unknowns, {dim} needed",
                problem.name,
                problem.boundary_aux.len()
            )));
        }

        let sigma = problem.sigma.clone();
        let c2 = problem.c2.clone();
        let tables = build_medium(mesh, |x| sigma(x), |x| c2(x), params, problem.sigma_support)?;
        let inv_beta = tables.beta.values().iter().map(|b| 1.0 / b).collect();

        let shape = mesh.shape();
        let mut interior = vec![false; mesh.node_count()];
        let mut boundary_nodes = Vec::new();
        for (flat, slot) in interior.iter_mut().enumerate() {
            if shape.classify(&shape.multi_index(flat)) == NodeClass::Interior {
                *slot = true;
            } else {
                boundary_nodes.push(flat);
            }
        }

        let lines: Vec<Vec<Line>> = (0..dim).map(|k| mesh.interior_lines(k)).collect();
        let coeffs = (0..dim).map(|k| assemble_direction(mesh, &tables, k)).collect::<Result<Vec<_>>>()?;
        let reports: Vec<_> = coeffs.iter().flatten().map(dominance_check).collect();
        let dominance = DominanceSummary::from_reports(&reports);
        let courant = courant_numbers(mesh, time.step(), &tables);

        Ok(Scheme {
            problem,
            mesh: mesh.clone(),
            time,
            params: *params,
            tables,
            inv_beta,
            interior,
            boundary_nodes,
            lines,
            coeffs,
            courant,
            dominance,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn time(&self) -> &TimeAxis {
        &self.time
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn tables(&self) -> &MediumTables {
        &self.tables
    }

    pub fn courant(&self) -> CourantNumbers {
        self.courant
    }

    pub fn dominance(&self) -> DominanceSummary {
        self.dominance
    }

    /// Coefficients of `s_k` on the interior lines of direction `k`.
    pub fn line_coefficients(&self, k: usize) -> &[SkLineCoeffs] {
        &self.coeffs[k]
    }

    fn source(&self, t: f64) -> Result<Field> {
        let f = &self.problem.source;
        sample_at(&self.mesh, |x, t| f(x, t), t)
    }

    /// Overwrite every boundary node of `v` with `g(., t)`.
    fn assign_boundary(&self, v: &mut Field, t: f64) -> Result<()> {
        let dim = self.mesh.dim();
        let g = &self.problem.boundary;
        let vals: Vec<f64> = self
            .boundary_nodes
            .par_iter()
            .map(|&flat| {
                let mut x = [0.0; MAX_DIM];
                self.mesh.coordinates(flat, &mut x);
                g(&x[..dim], t)
            })
            .collect();
        for (&flat, val) in self.boundary_nodes.iter().zip(vals) {
            if !val.is_finite() {
                return Err(Error::data(format!(
                    "boundary value {val} at node {:?}, t = {t}",
                    &self.mesh.shape().multi_index(flat)[..dim]
                )));
            }
            v.values_mut()[flat] = val;
        }
        Ok(())
    }

    /// `v_k` at time `t` for the main unknown `v`; also returns the largest
    /// relative line residual.
    fn aux_fields(&self, v: &Field, t: f64) -> Result<(Vec<Field>, f64)> {
        let results = (0..self.mesh.dim())
            .into_par_iter()
            .map(|k| {
                let rhs = lambda_k_apply(&self.mesh, &self.tables, v, k)?;
                let gk = eval_boundary_gk(self.problem, &self.mesh, k, t)?;
                let eff = self.tables.sigma_eff[k].values();
                let bw_values = gk.values().iter().zip(eff).map(|(g, s)| g * s).collect();
                let bw = Field::from_values(&self.mesh, bw_values)?;
                let w = batch_solve_lines(&self.mesh, &self.lines[k], &rhs, &bw, &self.coeffs[k])?;

                let residual = self.lines[k]
                    .par_iter()
                    .zip(&self.coeffs[k])
                    .map(|(line, co)| {
                        let wl: Vec<f64> = w.line_values(line).copied().collect();
                        let rl: Vec<f64> = (1..line.len - 1).map(|i| rhs.values()[line.node(i)]).collect();
                        let scale = rl.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
                            + wl.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
                                * co.beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
                        line_residual(co, &wl, &rl) / scale.max(f64::MIN_POSITIVE)
                    })
                    .reduce(|| 0.0, f64::max);

                let mut vk = gk;
                for (flat, val) in vk.values_mut().iter_mut().enumerate() {
                    if self.interior[flat] {
                        *val = w.values()[flat] / eff[flat];
                    }
                }
                Ok((vk, residual))
            })
            .collect::<Result<Vec<_>>>()?;
        let residual = results.iter().map(|r| r.1).fold(0.0, f64::max);
        Ok((results.into_iter().map(|r| r.0).collect(), residual))
    }

    /// Solve for the auxiliary fields at the state's current level.
    pub fn solve_aux(&self, state: &mut StepperState) -> Result<()> {
        let (aux, residual) = self.aux_fields(&state.v_curr, state.t)?;
        state.aux = aux;
        state.aux_level = Some(state.level);
        state.diagnostics.max_residual = state.diagnostics.max_residual.max(residual);
        Ok(())
    }

    /// `z = (sum_k v_k + f) / beta` on interior and face nodes; zero on
    /// edges and corners, which are never read.
    fn z_field(&self, aux: &[Field], f: &Field) -> Field {
        let shape = self.mesh.shape();
        let values = (0..self.mesh.node_count())
            .into_par_iter()
            .map(|flat| {
                if !self.interior[flat] && shape.classify(&shape.multi_index(flat)) == NodeClass::EdgeOrCorner {
                    return 0.0;
                }
                let s: f64 = aux.iter().map(|a| a.values()[flat]).sum();
                self.inv_beta[flat] * (s + f.values()[flat])
            })
            .collect();
        Field::from_shape(shape, values)
    }

    /// Levels 0 and 1: `v^0 = u0` and the Taylor start for `v^1`.
    pub fn init_state(&self) -> Result<StepperState> {
        let p = self.problem;
        let ht = self.time.step();
        let v0 = sample(&self.mesh, |x| (p.u0)(x))?;
        let f0 = self.source(0.0)?;
        let (aux0, residual) = self.aux_fields(&v0, 0.0)?;

        let u1 = sample(&self.mesh, |x| (p.u1)(x))?;
        let lam_u1 = lambda_apply(&self.mesh, &self.tables, &u1)?;
        let z0 = self.z_field(&aux0, &f0);
        let lam_z0 = lambda_apply(&self.mesh, &self.tables, &z0)?;
        let f_half = self.source(0.5 * ht)?;

        let ht2 = ht * ht;
        let mut v1 = v0.clone();
        {
            let (v1v, u1v, lu1, z, lz, fh, f0v) =
                (v1.values_mut(), u1.values(), lam_u1.values(), z0.values(), lam_z0.values(), f_half.values(), f0.values());
            v1v.par_iter_mut().enumerate().for_each(|(i, slot)| {
                if self.interior[i] {
                    let ib = self.inv_beta[i];
                    let dtv = u1v[i]
                        + ht2 / 6.0 * ib * lu1[i]
                        + 0.5 * ht * (z[i] + ht2 / 12.0 * ib * lz[i] + 2.0 / 3.0 * ib * (fh[i] - f0v[i]));
                    *slot += ht * dtv;
                }
            });
        }
        self.assign_boundary(&mut v1, self.time.time(1))?;
        check_finite(&v1, 1, self.time.time(1))?;

        let f1 = self.source(self.time.time(1))?;
        let max_abs_v = v1.max_abs();
        Ok(StepperState {
            level: 1,
            t: self.time.time(1),
            v_prev: v0,
            v_curr: v1,
            aux: Vec::new(),
            diagnostics: StepDiagnostics { max_residual: residual, max_abs_v },
            aux_level: None,
            source_prev: Some(f0),
            source_curr: Some(f1),
        })
    }

    /// Explicit update `v^m -> v^{m+1}`. Requires current auxiliary fields.
    ///
    /// On failure the state is left unchanged.
    pub fn advance(&self, state: &mut StepperState, divergence_scale: f64) -> Result<()> {
        let m = state.level;
        if m == 0 || state.aux_level != Some(m) {
            return Err(Error::usage(format!("advance at level {m} needs auxiliary fields of that level")));
        }
        if m >= self.time.levels() {
            return Err(Error::usage(format!("level {m} is already the last level")));
        }
        let ht = self.time.step();
        let f_prev = match state.source_prev.take() {
            Some(f) => f,
            None => self.source(self.time.time(m - 1))?,
        };
        let f_curr = match state.source_curr.take() {
            Some(f) => f,
            None => self.source(self.time.time(m))?,
        };
        let t_next = self.time.time(m + 1);
        let f_next = self.source(t_next)?;

        let z = self.z_field(&state.aux, &f_curr);
        let lam_z = lambda_apply(&self.mesh, &self.tables, &z)?;

        let ht2 = ht * ht;
        let mut v_next = state.v_curr.clone();
        {
            let (vc, vp, zv, lz, fp, fc, fnx) = (
                state.v_curr.values(),
                state.v_prev.values(),
                z.values(),
                lam_z.values(),
                f_prev.values(),
                f_curr.values(),
                f_next.values(),
            );
            v_next.values_mut().par_iter_mut().enumerate().for_each(|(i, slot)| {
                if self.interior[i] {
                    let ib = self.inv_beta[i];
                    let lt = zv[i] + ht2 / 12.0 * ib * lz[i] + ib * (fnx[i] - 2.0 * fc[i] + fp[i]) / 12.0;
                    *slot = 2.0 * vc[i] - vp[i] + ht2 * lt;
                }
            });
        }
        let boundary = self.assign_boundary(&mut v_next, t_next);
        let checked = boundary.and_then(|_| check_finite(&v_next, m + 1, t_next)).and_then(|_| {
            let max_abs = v_next.max_abs();
            if max_abs > DIVERGENCE_FACTOR * divergence_scale {
                Err(Error::Divergence(Box::new(Divergence {
                    level: m + 1,
                    t: t_next,
                    detail: format!("max |v| = {max_abs:e} exceeds {DIVERGENCE_FACTOR:e} x data scale {divergence_scale:e}"),
                    last_stable: None,
                })))
            } else {
                Ok(max_abs)
            }
        });
        let max_abs = match checked {
            Ok(v) => v,
            Err(e) => {
                state.source_prev = Some(f_prev);
                state.source_curr = Some(f_curr);
                return Err(e);
            }
        };

        state.v_prev = std::mem::replace(&mut state.v_curr, v_next);
        state.source_prev = Some(f_curr);
        state.source_curr = Some(f_next);
        state.level = m + 1;
        state.t = t_next;
        state.aux.clear();
        state.aux_level = None;
        state.diagnostics.max_abs_v = max_abs;
        Ok(())
    }

    /// Fixes the divergence threshold from the initial data.
    pub fn divergence_scale(&self, state: &StepperState) -> f64 {
        1.0_f64.max(state.v_prev.max_abs()).max(state.v_curr.max_abs())
    }

    /// Boundary compatibility `g(x, 0) = u0(x)`; returns a warning if violated.
    fn compatibility_warning(&self) -> Option<String> {
        let dim = self.mesh.dim();
        let mut worst = 0.0_f64;
        for &flat in &self.boundary_nodes {
            let mut x = [0.0; MAX_DIM];
            self.mesh.coordinates(flat, &mut x);
            let u0 = (self.problem.u0)(&x[..dim]);
            let g = (self.problem.boundary)(&x[..dim], 0.0);
            worst = worst.max((u0 - g).abs() / (1.0 + u0.abs()));
        }
        (worst > 1e-10).then(|| format!("boundary data differs from u0 at t = 0 by up to {worst:e} (relative)"))
    }
}

fn check_finite(v: &Field, level: usize, t: f64) -> Result<()> {
    match v.first_non_finite() {
        None => Ok(()),
        Some(flat) => Err(Error::Divergence(Box::new(Divergence {
            level,
            t,
            detail: format!("non-finite value {} at node {:?}", v.values()[flat], v.shape().multi_index(flat)),
            last_stable: None,
        }))),
    }
}

/// Values of `g_k(., t)` on every face node; interior, edge and corner nodes are zero.
pub fn eval_boundary_gk(problem: &ProblemSpec, mesh: &Mesh, k: usize, t: f64) -> Result<Field> {
    let gk = problem.boundary_aux.get(k).ok_or_else(|| {
        Error::config(format!("problem {:?} has no boundary data for v_{}", problem.name, k + 1))
    })?;
    let shape = mesh.shape();
    let dim = mesh.dim();
    let values: Vec<f64> = (0..mesh.node_count())
        .into_par_iter()
        .map(|flat| match shape.classify(&shape.multi_index(flat)) {
            NodeClass::Face(face) => {
                let mut x = [0.0; MAX_DIM];
                mesh.coordinates(flat, &mut x);
                gk(face, &x[..dim], t)
            }
            _ => 0.0,
        })
        .collect();
    if let Some(flat) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!(
            "g_{} is {} at node {:?}, t = {t}",
            k + 1,
            values[flat],
            &shape.multi_index(flat)[..dim]
        )));
    }
    Ok(Field::from_shape(shape, values))
}

/// Run a problem from `t = 0` to `T`, reporting snapshots at the levels
/// nearest to `snapshot_times`.
pub fn run(
    problem: &ProblemSpec,
    mesh: &Mesh,
    time: TimeAxis,
    params: &SchemeParams,
    snapshot_times: &[f64],
    on_snapshot: &mut dyn FnMut(&Snapshot<'_>) -> Result<()>,
) -> Result<RunReport> {
    let started = Instant::now();
    let scheme = Scheme::new(problem, mesh, time, params)?;
    let courant = scheme.courant();
    let mut warnings = Vec::new();

    if !courant.satisfies(params.epsilon) {
        let msg = format!(
            "nu^2(c, sigma) = {:.4} exceeds epsilon = {:.4} (nu(c) = {:.4}, nu(c, sigma) = {:.4})",
            courant.nu_c_sigma * courant.nu_c_sigma,
            params.epsilon,
            courant.nu_c,
            courant.nu_c_sigma
        );
        match params.courant_policy {
            CourantPolicy::Strict => return Err(Error::Stability(msg)),
            CourantPolicy::Warn => warnings.push(msg),
        }
    }
    if scheme.dominance().violated > 0 {
        warnings.push(format!(
            "{} of {} lines fail the sufficient dominance condition (worst margin {:.3e})",
            scheme.dominance().violated,
            scheme.dominance().lines,
            scheme.dominance().worst_margin
        ));
    }
    if let Some(w) = scheme.compatibility_warning() {
        warnings.push(w);
    }

    let mut pending: Vec<(usize, f64)> = snapshot_times.iter().map(|&t| (time.nearest_level(t), t)).collect();
    pending.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut records = Vec::new();
    let mut deliver = |level: usize, v: &Field, records: &mut Vec<SnapshotRecord>| -> Result<()> {
        for &(m, requested_t) in pending.iter().filter(|(m, _)| *m == level) {
            let snap = Snapshot { requested_t, level: m, t: time.time(m), v };
            on_snapshot(&snap)?;
            records.push(SnapshotRecord { requested_t, level: m, t: snap.t });
        }
        Ok(())
    };

    let mut state = scheme.init_state()?;
    deliver(0, &state.v_prev, &mut records)?;
    deliver(1, &state.v_curr, &mut records)?;
    let scale = scheme.divergence_scale(&state);

    while state.level < time.levels() {
        scheme.solve_aux(&mut state)?;
        if let Err(e) = scheme.advance(&mut state, scale) {
            return Err(match e {
                Error::Divergence(mut d) => {
                    d.last_stable = Some((state.level, state.t, state.v_curr.clone()));
                    Error::Divergence(d)
                }
                other => other,
            });
        }
        deliver(state.level, &state.v_curr, &mut records)?;
    }

    Ok(RunReport {
        final_state: state,
        courant,
        dominance: scheme.dominance(),
        wall_time: started.elapsed(),
        snapshots: records,
        warnings,
    })
}
