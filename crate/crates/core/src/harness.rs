//! Error norms, convergence studies and order probes.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{sample_at, Axis, Field, Mesh, TimeAxis};
use crate::medium::{build_medium, half_node_mean, sigma_k_effective, QuadRule, SchemeParams, SigmaVariant, Support, Version};
use crate::operators::{assemble_direction, lambda_k_apply, sk_apply, sk_line_coefficients, sk_line_coefficients_for, SkLineCoeffs};
use crate::stepper::{run, ProblemSpec};
use crate::tridiag::{batch_solve, solve_tridiagonal};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ErrorTriple {
    pub e_c: f64,
    pub e_c10: f64,
    pub e_c1: f64,
}

impl ErrorTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.e_c, self.e_c10, self.e_c1]
    }
}

/// Norms of `rho = u - v` at the last two time levels.
pub fn error_norms(mesh: &Mesh, v_m: &Field, v_mm1: &Field, u_t: &Field, u_tm1: &Field, h_t: f64) -> Result<ErrorTriple> {
    for (f, what) in [(v_m, "v^M"), (v_mm1, "v^{M-1}"), (u_t, "u(T)"), (u_tm1, "u(T - h_t)")] {
        f.check_mesh(mesh, what)?;
    }
    let rho: Vec<f64> = u_t.values().iter().zip(v_m.values()).map(|(u, v)| u - v).collect();
    let e_c = rho.iter().fold(0.0_f64, |m, r| m.max(r.abs()));

    let shape = mesh.shape();
    let mut e_c10 = 0.0_f64;
    for k in 0..mesh.dim() {
        let stride = shape.stride(k);
        let h = mesh.axis(k).step();
        for (flat, r) in rho.iter().enumerate() {
            if shape.multi_index(flat)[k] >= 1 {
                e_c10 = e_c10.max((r - rho[flat - stride]).abs() / h);
            }
        }
    }

    let e_t = rho
        .iter()
        .zip(u_tm1.values().iter().zip(v_mm1.values()))
        .map(|(r, (u, v))| (r - (u - v)).abs() / h_t)
        .fold(0.0_f64, f64::max);
    Ok(ErrorTriple { e_c, e_c10, e_c1: e_c10.max(e_t) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub r: f64,
    pub p: f64,
}

/// `r = e_coarse / e_fine`, `p = log2 r`; `None` when either error is not positive.
pub fn order_estimate(e_coarse: f64, e_fine: f64) -> Option<Rate> {
    if e_coarse > 0.0 && e_fine > 0.0 && e_coarse.is_finite() && e_fine.is_finite() {
        let r = e_coarse / e_fine;
        Some(Rate { r, p: r.log2() })
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub errors: Option<ErrorTriple>,
    /// Rates for `e_C`, `e_C10`, `e_C1` against the previous row.
    pub rates: [Option<Rate>; 3],
    /// Set when the run diverged.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub problem: String,
    pub version: Option<Version>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn from_errors(problem: &str, version: Option<Version>, runs: &[(usize, usize, ErrorTriple)]) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(runs.len());
        for (j, &(n, m, e)) in runs.iter().enumerate() {
            let rates = match j {
                0 => [None; 3],
                _ => {
                    let prev = runs[j - 1].2.as_array();
                    let cur = e.as_array();
                    [0, 1, 2].map(|c| order_estimate(prev[c], cur[c]))
                }
            };
            rows.push(ConvergenceRow { n, m, errors: Some(e), rates, failure: None });
        }
        ConvergenceTable { problem: problem.to_string(), version, rows }
    }
}

/// Final-time errors of one run against the exact solution.
pub fn run_errors(problem: &ProblemSpec, cells: &[usize], steps: usize, params: &SchemeParams) -> Result<ErrorTriple> {
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::usage(format!("{} has no exact solution", problem.name)))?;
    let mesh = Mesh::uniform(&problem.domain, cells)?;
    let time = TimeAxis::new(problem.final_time, steps)?;
    let report = run(problem, &mesh, time, params, &[], &mut |_| Ok(()))?;
    let state = &report.final_state;
    let t = time.final_time();
    let u_t = sample_at(&mesh, |x, t| exact(x, t), t)?;
    let u_tm1 = sample_at(&mesh, |x, t| exact(x, t), time.time(steps - 1))?;
    error_norms(&mesh, &state.v_curr, &state.v_prev, &u_t, &u_tm1, time.step())
}

/// Runs at `(N 2^l, M 2^l)`, `l = 0..levels`, in parallel.
///
/// A diverged level is recorded with its message and ends the table.
pub fn convergence_study(
    problem: &ProblemSpec,
    base_n: usize,
    base_m: usize,
    levels: usize,
    params: &SchemeParams,
) -> Result<ConvergenceTable> {
    if problem.exact.is_none() {
        return Err(Error::usage(format!("{} has no exact solution for a convergence study", problem.name)));
    }
    if levels == 0 {
        return Err(Error::usage("at least one level is required"));
    }
    let dim = problem.dim();
    let results: Vec<(usize, usize, Result<ErrorTriple>)> = (0..levels)
        .into_par_iter()
        .map(|l| {
            let (n, m) = (base_n << l, base_m << l);
            (n, m, run_errors(problem, &vec![n; dim], m, params))
        })
        .collect();

    let mut rows = Vec::new();
    let mut prev: Option<ErrorTriple> = None;
    for (n, m, res) in results {
        match res {
            Ok(e) => {
                let rates = match prev {
                    None => [None; 3],
                    Some(p) => {
                        let (a, b) = (p.as_array(), e.as_array());
                        [0, 1, 2].map(|c| order_estimate(a[c], b[c]))
                    }
                };
                rows.push(ConvergenceRow { n, m, errors: Some(e), rates, failure: None });
                prev = Some(e);
            }
            Err(Error::Divergence(d)) => {
                rows.push(ConvergenceRow { n, m, errors: None, rates: [None; 3], failure: Some(d.to_string()) });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let version = Version::of(params);
    Ok(ConvergenceTable { problem: problem.name.clone(), version, rows })
}

/// Least-squares slope of `-log2 e` against `log2 N` over the last three points.
pub fn observed_order(samples: &[(usize, f64)]) -> Option<f64> {
    let tail = &samples[samples.len().saturating_sub(3)..];
    if tail.len() < 2 || tail.iter().any(|(_, e)| !(*e > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = tail.iter().map(|&(n, e)| ((n as f64).log2(), e.log2())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(-sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderProbe {
    /// `(N, max-norm error)` per level.
    pub errors: Vec<(usize, f64)>,
    pub order: Option<f64>,
}

impl OrderProbe {
    fn from_errors(errors: Vec<(usize, f64)>) -> Self {
        let order = observed_order(&errors);
        OrderProbe { errors, order }
    }
}

/// A smooth 1D test case `L w = (w'/sigma)'` with closed forms.
pub struct ProbeCase<'a> {
    pub sigma: &'a (dyn Fn(f64) -> f64 + Sync),
    pub w: &'a (dyn Fn(f64) -> f64 + Sync),
    /// `(w'/sigma)'`.
    pub lw: &'a (dyn Fn(f64) -> f64 + Sync),
    pub domain: (f64, f64),
}

/// `sigma = e^x`, `w = sin x` on `(0, 1)`.
pub fn exp_sin_case() -> ProbeCase<'static> {
    ProbeCase {
        sigma: &f64::exp,
        w: &f64::sin,
        // (e^{-x} cos x)' = -e^{-x} (cos x + sin x)
        lw: &|x| -(-x).exp() * (x.cos() + x.sin()),
        domain: (0.0, 1.0),
    }
}

/// `sigma = e^x`, `w = cos x` on `(0, 1)`.
pub fn exp_cos_case() -> ProbeCase<'static> {
    ProbeCase {
        sigma: &f64::exp,
        w: &f64::cos,
        // (-e^{-x} sin x)' = e^{-x} (sin x - cos x)
        lw: &|x| (-x).exp() * (x.sin() - x.cos()),
        domain: (0.0, 1.0),
    }
}

fn mesh_1d(domain: (f64, f64), n: usize) -> Result<(Mesh, Vec<f64>)> {
    let axis = Axis::new(domain.0, domain.1, n)?;
    let xs = (0..=n).map(|i| axis.coordinate(i)).collect();
    Ok((Mesh::new(vec![axis])?, xs))
}

/// Max-norm error of the compact scheme `Lambda v = f + (h^2/12) Lambda(sigma f)`
/// with `f = L w` and Dirichlet data from `w`, per dyadic level.
pub fn samarskii_order_probe(case: &ProbeCase<'_>, base_n: usize, levels: usize) -> Result<OrderProbe> {
    let errors = (0..levels)
        .map(|l| {
            let n = base_n << l;
            let (mesh, xs) = mesh_1d(case.domain, n)?;
            let h = mesh.axis(0).step();
            let half: Vec<f64> = (1..=n)
                .map(|i| half_node_mean(case.sigma, xs[i - 1], h, QuadRule::IntegralMean))
                .collect::<Result<_>>()?;
            let f: Vec<f64> = xs.iter().map(|&x| (case.lw)(x)).collect();
            let sf: Vec<f64> = xs.iter().zip(&f).map(|(&x, f)| (case.sigma)(x) * f).collect();
            let lam = |g: &[f64], i: usize| ((g[i + 1] - g[i]) / half[i] - (g[i] - g[i - 1]) / half[i - 1]) / (h * h);

            let m = n - 1;
            let (mut sub, mut diag, mut sup) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            let mut rhs = vec![0.0; m];
            for r in 0..m {
                let i = r + 1;
                sub[r] = 1.0 / (half[i - 1] * h * h);
                sup[r] = 1.0 / (half[i] * h * h);
                diag[r] = -sub[r] - sup[r];
                rhs[r] = f[i] + h * h / 12.0 * lam(&sf, i);
            }
            rhs[0] -= sub[0] * (case.w)(xs[0]);
            rhs[m - 1] -= sup[m - 1] * (case.w)(xs[n]);
            solve_tridiagonal(&sub, &diag, &sup, &mut rhs)
                .map_err(|row| Error::Singular { line: "probe".into(), detail: format!("zero pivot at row {row}") })?;
            let err = rhs.iter().enumerate().map(|(r, v)| (v - (case.w)(xs[r + 1])).abs()).fold(0.0, f64::max);
            Ok((n, err))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderProbe::from_errors(errors))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationKind {
    /// `max |L w - Lambda w|`.
    Trunc1,
    /// `max |Lambda w - s(sigma^(k) L w)|`.
    Trunc2,
}

/// Interior truncation error of the 1D operators per dyadic level.
pub fn operator_order_probe(
    kind: TruncationKind,
    case: &ProbeCase<'_>,
    version: Version,
    base_n: usize,
    levels: usize,
) -> Result<OrderProbe> {
    let params = SchemeParams::version(version);
    let errors = (0..levels)
        .map(|l| {
            let n = base_n << l;
            let (mesh, xs) = mesh_1d(case.domain, n)?;
            let tables = build_medium(&mesh, |x: &[f64]| (case.sigma)(x[0]), |_: &[f64]| 1.0, &params, Support::Enlarged)?;
            let w = Field::from_values(&mesh, xs.iter().map(|&x| (case.w)(x)).collect())?;
            let lam = lambda_k_apply(&mesh, &tables, &w, 0)?;
            let err = match kind {
                TruncationKind::Trunc1 => (1..n).map(|i| ((case.lw)(xs[i]) - lam.values()[i]).abs()).fold(0.0, f64::max),
                TruncationKind::Trunc2 => {
                    let coeffs = assemble_direction(&mesh, &tables, 0)?;
                    let eff = tables.sigma_eff[0].values();
                    let g: Vec<f64> = xs.iter().enumerate().map(|(i, &x)| eff[i] * (case.lw)(x)).collect();
                    let s = sk_apply(&coeffs[0], &g)?;
                    s.iter().enumerate().map(|(r, v)| (lam.values()[r + 1] - v).abs()).fold(0.0, f64::max)
                }
            };
            Ok((n, err))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderProbe::from_errors(errors))
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        if a[p][col] == 0.0 {
            return Err(Error::Singular { line: "dense".into(), detail: format!("zero column {col}") });
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TridiagProbe {
    pub lines: usize,
    pub max_rel_error: f64,
    /// Batch solutions, one flat vector per line length, for bitwise comparison.
    #[serde(skip)]
    pub solutions: Vec<Vec<f64>>,
}

/// Random positive line systems with `2 <= N <= 16`, solved by
/// [`batch_solve`] and checked against [`dense_solve`].
pub fn tridiag_oracle_probe(seed: u64, count: usize) -> Result<TridiagProbe> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut by_len: Vec<Vec<(SkLineCoeffs, Vec<f64>)>> = vec![Vec::new(); 17];
    for _ in 0..count {
        let n = rng.gen_range(2..=16);
        let half: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let eff: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let line: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        by_len[n].push((sk_line_coefficients(&half, &eff)?, line));
    }

    let mut max_rel = 0.0_f64;
    let mut solutions = Vec::new();
    for (n, systems) in by_len.iter().enumerate().filter(|(_, s)| !s.is_empty()) {
        // line r runs along axis 0 at x2-index r + 1; rhs holds interior values, w the endpoints
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[n, systems.len() + 1])?;
        let mut rhs = Field::zeros(&mesh);
        let mut bw = Field::zeros(&mesh);
        for (r, (_, line)) in systems.iter().enumerate() {
            for (i, &v) in line.iter().enumerate() {
                let target = if i == 0 || i == n { &mut bw } else { &mut rhs };
                target.set(&[i, r + 1], v)?;
            }
        }
        let coeffs: Vec<SkLineCoeffs> = systems.iter().map(|(c, _)| c.clone()).collect();
        let w = batch_solve(&mesh, 0, &rhs, &bw, &coeffs)?;
        for (r, (co, line)) in systems.iter().enumerate() {
            let mut b = line[1..n].to_vec();
            b[0] -= co.alpha[0] * line[0];
            b[n - 2] -= co.alpha[n - 1] * line[n];
            let x = dense_solve(co.dense(), b)?;
            let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            for i in 1..n {
                max_rel = max_rel.max((w.get(&[i, r + 1])? - x[i - 1]).abs() / scale);
            }
        }
        solutions.push(w.into_values());
    }
    Ok(TridiagProbe { lines: count, max_rel_error: max_rel, solutions })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientProbe {
    /// Largest `|A_ij - A_ji|` of the dense line matrices.
    pub max_asymmetry: f64,
    /// Largest distance in ulps between `beta_i` and `5 (alpha_i + alpha_{i+1})` (harmonic variant).
    pub max_harmonic_ulps: u64,
    /// Constant density reproduces the weights `1/12, 10/12, 1/12` (scaled by `1/sigma`) exactly.
    pub numerov_exact: bool,
}

fn ulps_apart(a: f64, b: f64) -> u64 {
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

/// Symmetry, harmonic-variant identity and constant-density stencil checks
/// on random positive half-node means.
pub fn coefficient_probe(seed: u64, count: usize) -> Result<CoefficientProbe> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut max_asym = 0.0_f64;
    let mut max_ulps = 0;
    for _ in 0..count {
        let n = rng.gen_range(2..=16);
        let half: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let mut eff = vec![1.0; n + 1];
        for i in 1..n {
            eff[i] = sigma_k_effective(half[i - 1], half[i], 1.0, SigmaVariant::Harmonic)?;
        }
        let co = sk_line_coefficients_for(SigmaVariant::Harmonic, &half, &eff)?;
        let a = co.dense();
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                max_asym = max_asym.max((v - a[j][i]).abs());
            }
        }
        for r in 0..co.unknowns() {
            max_ulps = max_ulps.max(ulps_apart(co.beta[r], 5.0 * (co.alpha[r] + co.alpha[r + 1])));
        }
    }

    let mut numerov_exact = true;
    for &s in &[1.0, 2.0, 0.5, 3.0] {
        let co = sk_line_coefficients(&[s; 4], &[s; 5])?;
        let weights = [1.0 / (12.0 * s), 10.0 / (12.0 * s)];
        numerov_exact &= co.alpha.iter().all(|&a| a == weights[0]) && co.beta.iter().all(|&b| b == weights[1]);
    }
    Ok(CoefficientProbe { max_asymmetry: max_asym, max_harmonic_ulps: max_ulps, numerov_exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize) -> Mesh {
        Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[n, n]).unwrap()
    }

    #[test]
    fn zero_error() {
        let m = mesh(4);
        let f = Field::filled(&m, 0.3);
        let e = error_norms(&m, &f, &f, &f, &f, 0.1).unwrap();
        assert_eq!(e, ErrorTriple::default());
    }

    #[test]
    fn single_spike() {
        let m = mesh(4);
        let z = Field::zeros(&m);
        let mut u = Field::zeros(&m);
        u.set(&[2, 2], 1e-3).unwrap();
        let e = error_norms(&m, &z, &z, &u, &z, 0.1).unwrap();
        assert_eq!(e.e_c, 1e-3);
        assert!((e.e_c10 - 1e-3 / 0.25).abs() < 1e-15);
        assert!((e.e_c1 - 1e-3 / 0.1).abs() < 1e-15);
    }

    #[test]
    fn mesh_mismatch() {
        let a = Field::zeros(&mesh(4));
        let b = Field::zeros(&mesh(5));
        assert!(matches!(error_norms(&mesh(4), &a, &a, &b, &a, 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn rates() {
        assert_eq!(order_estimate(16.0, 1.0), Some(Rate { r: 16.0, p: 4.0 }));
        let r = order_estimate(1.439e-4, 9.499e-6).unwrap();
        assert!((r.r - 15.14).abs() < 1e-2 && (r.p - 3.921).abs() < 5e-4);
        let r = order_estimate(4.171e-1, 6.885e-2).unwrap();
        assert!((r.r - 6.058).abs() < 5e-4 && (r.p - 2.599).abs() < 5e-4);
        assert_eq!(order_estimate(0.0, 1.0), None);
    }

    #[test]
    fn slope_of_exact_power() {
        let s: Vec<(usize, f64)> = [8, 16, 32, 64].iter().map(|&n| (n, 3.0 / (n as f64).powi(4))).collect();
        assert!((observed_order(&s).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn numerov_quadratic_exact() {
        let case = ProbeCase { sigma: &|_| 1.0, w: &|x| x * (1.0 - x), lw: &|_| -2.0, domain: (0.0, 1.0) };
        let p = samarskii_order_probe(&case, 8, 2).unwrap();
        assert!(p.errors.iter().all(|(_, e)| *e < 1e-13), "{:?}", p.errors);
    }

    #[test]
    fn trunc1_quartic() {
        let case = ProbeCase { sigma: &|_| 1.0, w: &|x| x.powi(4), lw: &|x| 12.0 * x * x, domain: (0.0, 1.0) };
        let p = operator_order_probe(TruncationKind::Trunc1, &case, Version::A, 8, 4).unwrap();
        assert!((p.order.unwrap() - 2.0).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn classic_numerov_order() {
        use std::f64::consts::PI;
        let case = ProbeCase {
            sigma: &|_| 1.0,
            w: &|x| (PI * x).sin(),
            lw: &|x| -PI * PI * (PI * x).sin(),
            domain: (0.0, 1.0),
        };
        let p = samarskii_order_probe(&case, 16, 5).unwrap();
        assert!((p.order.unwrap() - 4.0).abs() < 0.2, "{p:?}");
    }
}
