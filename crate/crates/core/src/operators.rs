//! Three-point spatial operators.
//!
//! `Lambda_k` is the conservative second difference
//!
//! ```text
//! Lambda_k w_i = ( (w_{i+1} - w_i) / sigma_hat[i+1/2] - (w_i - w_{i-1}) / sigma_hat[i-1/2] ) / h^2
//! ```
//!
//! and `s_k w = w / sigma^(k) + (h^2 / 12) Lambda_k w` is its compact
//! companion, a symmetric tridiagonal operator with
//!
//! ```text
//! alpha_i = 1 / (12 sigma_hat[i-1/2]),   beta_i = 1 / sigma^(k)_i - alpha_i - alpha_{i+1}.
//! ```
//!
//! For constant density `s_k` reduces to the Numerov weights `(1, 10, 1) / (12 sigma)`.
//! All operators produce values at interior nodes only; boundary slots of
//! returned fields are zero.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Line, Mesh};
use crate::medium::{MediumTables, SigmaVariant};

/// `Lambda_k(sigma) w` at interior nodes; boundary entries are zero.
pub fn lambda_k_apply(mesh: &Mesh, tables: &MediumTables, w: &Field, k: usize) -> Result<Field> {
    let mut out = Field::zeros(mesh);
    lambda_k_accumulate(mesh, tables, w, k, &mut out)?;
    Ok(out)
}

/// `Lambda(sigma) w = sum_k Lambda_k(sigma) w` at interior nodes.
pub fn lambda_apply(mesh: &Mesh, tables: &MediumTables, w: &Field) -> Result<Field> {
    let mut out = Field::zeros(mesh);
    for k in 0..mesh.dim() {
        lambda_k_accumulate(mesh, tables, w, k, &mut out)?;
    }
    Ok(out)
}

/// Add `Lambda_k(sigma) w` into the interior of `out`.
pub(crate) fn lambda_k_accumulate(
    mesh: &Mesh,
    tables: &MediumTables,
    w: &Field,
    k: usize,
    out: &mut Field,
) -> Result<()> {
    w.check_mesh(mesh, "operand")?;
    out.check_mesh(mesh, "output")?;
    let lines = mesh.interior_lines(k);
    let table = tables.half(k);
    let h = mesh.axis(k).step();
    let inv_h2 = 1.0 / (h * h);
    let wv = w.values();

    let results: Vec<Vec<f64>> = lines
        .par_iter()
        .map(|line| {
            let halves = table.interior(line.ordinal);
            (1..line.len - 1)
                .map(|i| {
                    let wm = wv[line.node(i - 1)];
                    let w0 = wv[line.node(i)];
                    let wp = wv[line.node(i + 1)];
                    inv_h2 * ((wp - w0) / halves[i] - (w0 - wm) / halves[i - 1])
                })
                .collect()
        })
        .collect();

    scatter_interior(out, &lines, &results, true);
    Ok(())
}

/// Write per-line interior results (`i = 1..N-1`) back into a field.
pub(crate) fn scatter_interior(out: &mut Field, lines: &[Line], results: &[Vec<f64>], accumulate: bool) {
    let values = out.values_mut();
    for (line, vals) in lines.iter().zip(results) {
        for (i, v) in vals.iter().enumerate() {
            let slot = &mut values[line.node(i + 1)];
            if accumulate {
                *slot += v;
            } else {
                *slot = *v;
            }
        }
    }
}

/// Coefficients of `s_k` along one line.
#[derive(Debug, Clone, PartialEq)]
pub struct SkLineCoeffs {
    /// `alpha_i` for `i = 1..=N`, stored at `i - 1`. `alpha_1` and `alpha_N`
    /// couple the first and last interior node to the line endpoints.
    pub alpha: Vec<f64>,
    /// `beta_i` for `i = 1..N`, stored at `i - 1`.
    pub beta: Vec<f64>,
    /// `sigma^(k)_i` for `i = 1..N`, stored at `i - 1`.
    pub sigma_eff: Vec<f64>,
}

impl SkLineCoeffs {
    /// Number of interior unknowns, `N - 1`.
    pub fn unknowns(&self) -> usize {
        self.beta.len()
    }

    /// Dense `(N-1) x (N-1)` matrix of `s_k` restricted to the interior.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.unknowns();
        let mut a = vec![vec![0.0; n]; n];
        for r in 0..n {
            a[r][r] = self.beta[r];
            if r > 0 {
                a[r][r - 1] = self.alpha[r];
            }
            if r + 1 < n {
                a[r][r + 1] = self.alpha[r + 1];
            }
        }
        a
    }
}

/// Assemble `s_k` along one line from the `N` half-node means
/// `sigma_hat[i - 1/2]`, `i = 1..=N`, and the `N + 1` nodal `sigma^(k)`.
pub fn sk_line_coefficients(sigma_half: &[f64], sigma_eff_line: &[f64]) -> Result<SkLineCoeffs> {
    let n = sigma_half.len();
    if n < 2 || sigma_eff_line.len() != n + 1 {
        return Err(Error::usage(format!(
            "expected N >= 2 half-node means and N + 1 nodal values, got {} and {}",
            n,
            sigma_eff_line.len()
        )));
    }
    if let Some((i, s)) = sigma_half.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::data(format!("half-node mean at i = {} - 1/2 is {s}", i + 1)));
    }
    let interior = &sigma_eff_line[1..n];
    if let Some((i, s)) = interior.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::data(format!("sigma^(k) at i = {} is {s}", i + 1)));
    }
    let alpha: Vec<f64> = sigma_half.iter().map(|s| 1.0 / (12.0 * s)).collect();
    // 1/s - alpha_i - alpha_{i+1}, arranged so constant density gives 10/(12 s) exactly
    let beta = interior
        .iter()
        .enumerate()
        .map(|(r, s)| (12.0 - s / sigma_half[r] - s / sigma_half[r + 1]) / (12.0 * s))
        .collect();
    Ok(SkLineCoeffs { alpha, beta, sigma_eff: interior.to_vec() })
}

/// As [`sk_line_coefficients`], using the closed form
/// `beta_i = 5 (alpha_i + alpha_{i+1})` when `sigma^(k)` is the harmonic mean
/// of the neighbouring half-node means.
pub fn sk_line_coefficients_for(variant: SigmaVariant, sigma_half: &[f64], sigma_eff_line: &[f64]) -> Result<SkLineCoeffs> {
    let mut co = sk_line_coefficients(sigma_half, sigma_eff_line)?;
    if variant == SigmaVariant::Harmonic {
        for (r, b) in co.beta.iter_mut().enumerate() {
            *b = 5.0 * (co.alpha[r] + co.alpha[r + 1]);
        }
    }
    Ok(co)
}

/// `s_k w` at the interior nodes of a line; `w_line` holds all `N + 1` values.
pub fn sk_apply(coeffs: &SkLineCoeffs, w_line: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.unknowns();
    if w_line.len() != n + 2 {
        return Err(Error::usage(format!("line needs {} values, got {}", n + 2, w_line.len())));
    }
    Ok((0..n)
        .map(|r| coeffs.alpha[r] * w_line[r] + coeffs.beta[r] * w_line[r + 1] + coeffs.alpha[r + 1] * w_line[r + 2])
        .collect())
}

/// Outcome of the Taussky-type sufficient condition on one line.
#[derive(Debug, Clone, PartialEq)]
pub enum DominanceStatus {
    /// Inequality strict at every interior node.
    StrictEverywhere,
    /// Holds everywhere, with equality somewhere and strictness somewhere.
    SatisfiedWithEquality,
    /// Fails at the listed interior indices (or holds with equality only).
    Violated(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// `1 - lhs` of the condition at `i = 1..N-1`, stored at `i - 1`.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub status: DominanceStatus,
}

/// Evaluate
///
/// ```text
/// (2 - d(i,1))/12 * sigma^(k)_i / sigma_hat[i-1/2] + (2 - d(i,N-1))/12 * sigma^(k)_i / sigma_hat[i+1/2] <= 1
/// ```
///
/// at every interior node of the line. This is a diagnostic: the condition
/// is sufficient for non-singularity, not necessary.
pub fn dominance_check(coeffs: &SkLineCoeffs) -> DominanceReport {
    let n = coeffs.unknowns();
    let margins: Vec<f64> = (0..n)
        .map(|r| {
            let wl = if r == 0 { 1.0 } else { 2.0 };
            let wr = if r + 1 == n { 1.0 } else { 2.0 };
            // sigma^(k) / sigma_hat = 12 alpha sigma^(k)
            let s = coeffs.sigma_eff[r];
            1.0 - (wl * coeffs.alpha[r] * s + wr * coeffs.alpha[r + 1] * s)
        })
        .collect();
    let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let violated: Vec<usize> = margins.iter().enumerate().filter(|(_, m)| **m < 0.0).map(|(r, _)| r + 1).collect();
    let any_strict = margins.iter().any(|m| *m > 0.0);
    let status = if !violated.is_empty() || !any_strict {
        DominanceStatus::Violated(violated)
    } else if margins.iter().all(|m| *m > 0.0) {
        DominanceStatus::StrictEverywhere
    } else {
        DominanceStatus::SatisfiedWithEquality
    };
    DominanceReport { margins, worst_margin, status }
}

/// Aggregate of [`dominance_check`] over every line of every direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct DominanceSummary {
    pub lines: usize,
    pub strict: usize,
    pub with_equality: usize,
    pub violated: usize,
    pub worst_margin: f64,
}

impl DominanceSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a DominanceReport>) -> Self {
        let mut s = DominanceSummary { worst_margin: f64::INFINITY, ..Default::default() };
        for r in reports {
            s.lines += 1;
            s.worst_margin = s.worst_margin.min(r.worst_margin);
            match r.status {
                DominanceStatus::StrictEverywhere => s.strict += 1,
                DominanceStatus::SatisfiedWithEquality => s.with_equality += 1,
                DominanceStatus::Violated(_) => s.violated += 1,
            }
        }
        s
    }
}

/// Coefficients of `s_k` for every interior line of direction `k`, in the
/// order of [`Mesh::interior_lines`].
pub fn assemble_direction(mesh: &Mesh, tables: &MediumTables, k: usize) -> Result<Vec<SkLineCoeffs>> {
    let eff = &tables.sigma_eff[k];
    mesh.interior_lines(k)
        .par_iter()
        .map(|line| {
            let s: Vec<f64> = eff.line_values(line).copied().collect();
            sk_line_coefficients_for(tables.variant, tables.half(k).interior(line.ordinal), &s)
                .map_err(|e| Error::data(format!("{}: {e}", line.describe(mesh.dim()))))
        })
        .collect()
}
