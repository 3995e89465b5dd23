//! Per-line tridiagonal solves for `s_k(sigma) w = rhs`.
//!
//! Each interior line of a direction carries an independent symmetric system
//! with Dirichlet data at both endpoints. Lines are solved in parallel with
//! the Thomas algorithm (no pivoting); every line writes only its own output
//! buffer, so the result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Line, Mesh};
use crate::operators::{scatter_interior, SkLineCoeffs};

/// One line system `alpha_i w_{i-1} + beta_i w_i + alpha_{i+1} w_{i+1} = rhs_i`,
/// `i = 1..N-1`, with `w_0 = w_left` and `w_N = w_right` known.
#[derive(Debug, Clone, Copy)]
pub struct LineSystem<'a> {
    pub coeffs: &'a SkLineCoeffs,
    pub rhs: &'a [f64],
    pub w_left: f64,
    pub w_right: f64,
}

/// Pivot magnitude below which elimination is reported as singular.
const PIVOT_FLOOR: f64 = f64::MIN_POSITIVE;

/// Solve a general tridiagonal system in place.
///
/// Row `r` reads `sub[r] x[r-1] + diag[r] x[r] + sup[r] x[r+1] = rhs[r]`;
/// `sub[0]` and `sup[n-1]` are ignored. On success `rhs` holds the solution.
/// Returns the row of the failing pivot otherwise.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> std::result::Result<(), usize> {
    let n = rhs.len();
    assert!(sub.len() == n && diag.len() == n && sup.len() == n, "tridiagonal band lengths differ");
    let mut c = vec![0.0; n];
    thomas(n, |r| sub[r], |r| diag[r], |r| sup[r], rhs, &mut c)
}

#[inline]
fn thomas<L, D, U>(n: usize, lower: L, diag: D, upper: U, x: &mut [f64], c: &mut [f64]) -> std::result::Result<(), usize>
where
    L: Fn(usize) -> f64,
    D: Fn(usize) -> f64,
    U: Fn(usize) -> f64,
{
    if n == 0 {
        return Ok(());
    }
    let mut pivot = diag(0);
    if !(pivot.abs() >= PIVOT_FLOOR) {
        return Err(0);
    }
    c[0] = upper(0) / pivot;
    x[0] /= pivot;
    for r in 1..n {
        let l = lower(r);
        pivot = diag(r) - l * c[r - 1];
        if !(pivot.abs() >= PIVOT_FLOOR) {
            return Err(r);
        }
        c[r] = if r + 1 < n { upper(r) / pivot } else { 0.0 };
        x[r] = (x[r] - l * x[r - 1]) / pivot;
    }
    for r in (0..n - 1).rev() {
        x[r] -= c[r] * x[r + 1];
    }
    Ok(())
}

/// Interior solution `w_1..w_{N-1}` of one line system.
pub fn solve_line(sys: &LineSystem<'_>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sys.coeffs.unknowns()];
    let mut scratch = vec![0.0; out.len()];
    solve_line_into(sys, &mut out, &mut scratch).map_err(|row| Error::Singular {
        line: "line".to_string(),
        detail: format!("zero pivot at interior index {}", row + 1),
    })?;
    Ok(out)
}

fn solve_line_into(sys: &LineSystem<'_>, out: &mut [f64], scratch: &mut [f64]) -> std::result::Result<(), usize> {
    let co = sys.coeffs;
    let n = co.unknowns();
    assert_eq!(sys.rhs.len(), n, "rhs length must equal the number of unknowns");
    out.copy_from_slice(sys.rhs);
    out[0] -= co.alpha[0] * sys.w_left;
    out[n - 1] -= co.alpha[n] * sys.w_right;
    thomas(n, |r| co.alpha[r], |r| co.beta[r], |r| co.alpha[r + 1], out, scratch)
}

/// Max-norm residual of `s_k w = rhs` for a full line `w` (`N + 1` values).
pub fn line_residual(coeffs: &SkLineCoeffs, w_line: &[f64], rhs: &[f64]) -> f64 {
    (0..coeffs.unknowns())
        .map(|r| {
            let s = coeffs.alpha[r] * w_line[r] + coeffs.beta[r] * w_line[r + 1] + coeffs.alpha[r + 1] * w_line[r + 2];
            (s - rhs[r]).abs()
        })
        .fold(0.0, f64::max)
}

/// Solve every interior line of direction `k`.
///
/// `rhs` supplies right-hand sides at interior nodes, `boundary_w` the known
/// values of `w` at the two endpoints of each line, and `coeffs[j]` the
/// operator on the `j`-th line of [`Mesh::interior_lines`]. The returned
/// field holds the solution on interior nodes and the endpoint values on
/// the faces crossed by the lines; all other nodes are zero.
pub fn batch_solve(
    mesh: &Mesh,
    k: usize,
    rhs: &Field,
    boundary_w: &Field,
    coeffs: &[SkLineCoeffs],
) -> Result<Field> {
    let lines = mesh.interior_lines(k);
    batch_solve_lines(mesh, &lines, rhs, boundary_w, coeffs)
}

pub(crate) fn batch_solve_lines(
    mesh: &Mesh,
    lines: &[Line],
    rhs: &Field,
    boundary_w: &Field,
    coeffs: &[SkLineCoeffs],
) -> Result<Field> {
    rhs.check_mesh(mesh, "right-hand side")?;
    boundary_w.check_mesh(mesh, "boundary data")?;
    if coeffs.len() != lines.len() {
        return Err(Error::usage(format!("{} lines but {} coefficient sets", lines.len(), coeffs.len())));
    }
    let rv = rhs.values();
    let bv = boundary_w.values();

    let solved: Vec<Vec<f64>> = lines
        .par_iter()
        .zip(coeffs.par_iter())
        .map(|(line, co)| {
            let n = line.len - 1;
            if co.unknowns() != n - 1 {
                return Err(Error::usage(format!(
                    "{}: coefficients sized for {} unknowns, line has {}",
                    line.describe(mesh.dim()),
                    co.unknowns(),
                    n - 1
                )));
            }
            let line_rhs: Vec<f64> = (1..n).map(|i| rv[line.node(i)]).collect();
            let sys = LineSystem { coeffs: co, rhs: &line_rhs, w_left: bv[line.node(0)], w_right: bv[line.node(n)] };
            let mut out = vec![0.0; n - 1];
            let mut scratch = vec![0.0; n - 1];
            solve_line_into(&sys, &mut out, &mut scratch).map_err(|row| Error::Singular {
                line: line.describe(mesh.dim()),
                detail: format!("zero pivot at interior index {}", row + 1),
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut w = Field::zeros(mesh);
    scatter_interior(&mut w, lines, &solved, false);
    let wv = w.values_mut();
    for line in lines {
        let last = line.node(line.len - 1);
        wv[line.start] = bv[line.start];
        wv[last] = bv[last];
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::sk_line_coefficients;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
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
        x
    }

    #[test]
    fn diagonal_system() {
        let co = SkLineCoeffs { alpha: vec![0.0; 5], beta: vec![1.0; 4], sigma_eff: vec![1.0; 4] };
        let rhs = [1.0, -2.0, 3.0, 4.5];
        let w = solve_line(&LineSystem { coeffs: &co, rhs: &rhs, w_left: 7.0, w_right: 9.0 }).unwrap();
        assert_eq!(w, rhs);
    }

    #[test]
    fn single_unknown() {
        let co = sk_line_coefficients(&[1.0, 2.0], &[1.0, 1.5, 1.0]).unwrap();
        let w = solve_line(&LineSystem { coeffs: &co, rhs: &[1.0], w_left: 2.0, w_right: 3.0 }).unwrap();
        let expected = (1.0 - co.alpha[0] * 2.0 - co.alpha[1] * 3.0) / co.beta[0];
        assert!((w[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_elimination() {
        let half: Vec<f64> = (0..16).map(|i| 0.5 + (i as f64 * 0.7).sin().abs()).collect();
        let eff: Vec<f64> = (0..17).map(|i| 0.8 + (i as f64 * 1.3).cos().abs()).collect();
        let co = sk_line_coefficients(&half, &eff).unwrap();
        let rhs: Vec<f64> = (0..15).map(|i| (i as f64).sqrt() - 1.0).collect();
        let (wl, wr) = (0.25, -1.5);
        let w = solve_line(&LineSystem { coeffs: &co, rhs: &rhs, w_left: wl, w_right: wr }).unwrap();
        let mut b = rhs.clone();
        b[0] -= co.alpha[0] * wl;
        b[14] -= co.alpha[15] * wr;
        let x = dense_solve(co.dense(), b);
        let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in w.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
        let mut full = vec![wl];
        full.extend(&w);
        full.push(wr);
        assert!(line_residual(&co, &full, &rhs) <= 1e3 * f64::EPSILON * (1.0 + scale));
    }

    #[test]
    fn zero_pivot_is_reported() {
        let co = SkLineCoeffs { alpha: vec![1.0; 4], beta: vec![1.0, 1.0, 1.0], sigma_eff: vec![1.0; 3] };
        let err = solve_line(&LineSystem { coeffs: &co, rhs: &[1.0, 1.0, 1.0], w_left: 0.0, w_right: 0.0 }).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }), "{err}");
    }

    #[test]
    fn general_solver() {
        let mut x = vec![1.0, 2.0, 3.0];
        solve_tridiagonal(&[0.0, 1.0, 1.0], &[4.0, 4.0, 4.0], &[1.0, 1.0, 0.0], &mut x).unwrap();
        let y = dense_solve(
            vec![vec![4.0, 1.0, 0.0], vec![1.0, 4.0, 1.0], vec![0.0, 1.0, 4.0]],
            vec![1.0, 2.0, 3.0],
        );
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_line_counts() {
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[6, 2]).unwrap();
        assert_eq!(mesh.interior_lines(0).len(), 1);
        let co = sk_line_coefficients(&[1.0; 6], &[1.0; 7]).unwrap();
        let rhs = Field::filled(&mesh, 1.0);
        let bw = Field::filled(&mesh, 1.0);
        let w = batch_solve(&mesh, 0, &rhs, &bw, &[co]).unwrap();
        // constant 1 is the exact solution: Numerov weights sum to 1
        for i in 0..=6 {
            assert!((w.get(&[i, 1]).unwrap() - 1.0).abs() < 1e-14);
            assert_eq!(w.get(&[i, 0]).unwrap(), 0.0);
        }
    }
}
