//! Coefficient tables derived from the density `sigma(x)` and squared sound
//! speed `c^2(x)`.
//!
//! The density only enters the scheme through cell means at half-nodes,
//!
//! ```text
//! sigma_hat[i - 1/2] ~ (1/h) * integral of sigma over [x_{i-1}, x_i]
//! ```
//!
//! taken along one direction with the remaining coordinates frozen at node
//! values, and through the effective nodal value `sigma^(k)` that multiplies
//! the auxiliary unknown of direction `k`. The squared speed is only ever
//! sampled at nodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, Field, Mesh, MAX_DIM};

/// Offset of the two-point Gauss nodes from the cell midpoint, in units of `h`.
pub const GAUSS2_OFFSET: f64 = 0.288_675_134_594_812_9; // 1 / (2 sqrt 3)

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// How a half-node mean of the density is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadRule {
    /// Cell average, evaluated with 5-point Gauss-Legendre (exact to degree 9).
    IntegralMean,
    /// `(sigma(a) + 4 sigma(a + h/2) + sigma(a + h)) / 6`.
    Simpson,
    /// Mean of `sigma` at `mid -/+ h / (2 sqrt 3)`.
    Gauss2,
}

/// Choice of the effective density `sigma^(k)` at nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaVariant {
    /// `sigma^(k)_i = sigma(x_i)`.
    Nodal,
    /// Harmonic mean of the two adjacent half-node means. Needs `sigma`
    /// outside the domain for the nodes on the boundary.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CourantPolicy {
    Warn,
    Strict,
}

/// Named parameter sets used in the convergence tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Version {
    /// Simpson means and nodal `sigma^(k)`.
    A,
    /// Two-point Gauss means and harmonic `sigma^(k)`.
    B,
}

impl Version {
    /// The named version matching `params`, if any.
    pub fn of(params: &SchemeParams) -> Option<Version> {
        [Version::A, Version::B].into_iter().find(|&v| {
            let p = SchemeParams::version(v);
            p.quad == params.quad && p.sigma_variant == params.sigma_variant
        })
    }
}

impl std::str::FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Version::A),
            "B" | "b" => Ok(Version::B),
            other => Err(Error::usage(format!("unknown version {other:?}, expected A or B"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub quad: QuadRule,
    pub sigma_variant: SigmaVariant,
    pub courant_policy: CourantPolicy,
    /// Bound `epsilon` in `nu^2(c, sigma) <= epsilon`; must lie in `(0, 2/3]`.
    pub epsilon: f64,
}

impl SchemeParams {
    pub fn version(v: Version) -> Self {
        let (quad, sigma_variant) = match v {
            Version::A => (QuadRule::Simpson, SigmaVariant::Nodal),
            Version::B => (QuadRule::Gauss2, SigmaVariant::Harmonic),
        };
        SchemeParams { quad, sigma_variant, courant_policy: CourantPolicy::Warn, epsilon: 2.0 / 3.0 }
    }

    pub fn with_policy(mut self, policy: CourantPolicy) -> Self {
        self.courant_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 2.0 / 3.0) {
            return Err(Error::config(format!("epsilon must lie in (0, 2/3], got {}", self.epsilon)));
        }
        Ok(())
    }
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams::version(Version::A)
    }
}

/// Where the density may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    /// Only on the closed domain.
    Domain,
    /// Also one cell beyond each face, as needed by [`SigmaVariant::Harmonic`].
    Enlarged,
}

/// Mean of `sigma` over the cell `[a, a + h]` by `rule`.
pub fn half_node_mean<F>(sigma: F, a: f64, h: f64, rule: QuadRule) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mid = a + 0.5 * h;
    let value = match rule {
        QuadRule::IntegralMean => {
            let s: f64 = GL5_NODES
                .iter()
                .zip(GL5_WEIGHTS)
                .map(|(&xi, w)| w * sigma(mid + 0.5 * h * xi))
                .sum();
            0.5 * s
        }
        QuadRule::Simpson => (sigma(a) + 4.0 * sigma(mid) + sigma(a + h)) / 6.0,
        QuadRule::Gauss2 => 0.5 * (sigma(mid - GAUSS2_OFFSET * h) + sigma(mid + GAUSS2_OFFSET * h)),
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::data(format!("half-node mean over [{a}, {}] is {value}", a + h)));
    }
    Ok(value)
}

/// `sigma^(k)` at a node from its two half-node neighbours and its own value.
pub fn sigma_k_effective(left: f64, right: f64, node: f64, variant: SigmaVariant) -> Result<f64> {
    for (name, v) in [("left half-node mean", left), ("right half-node mean", right), ("nodal density", node)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::data(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(match variant {
        SigmaVariant::Nodal => node,
        SigmaVariant::Harmonic => 1.0 / (0.5 * (1.0 / left + 1.0 / right)),
    })
}

/// Half-node means of one direction, stored line by line.
///
/// Line `ordinal` (see [`Mesh::lines`]) owns a contiguous run holding
/// `sigma_hat[i - 1/2]` for `i = 1..=N` or, with ghosts, `i = 0..=N+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfNodeTable {
    ghosts: bool,
    width: usize,
    values: Vec<f64>,
}

impl HalfNodeTable {
    #[cfg(test)]
    pub(crate) fn from_parts(ghosts: bool, width: usize, values: Vec<f64>) -> Self {
        HalfNodeTable { ghosts, width, values }
    }

    pub fn has_ghosts(&self) -> bool {
        self.ghosts
    }

    /// Smallest valid `i` for [`HalfNodeTable::at`].
    pub fn first(&self) -> usize {
        if self.ghosts {
            0
        } else {
            1
        }
    }

    /// `sigma_hat[i - 1/2]` on line `ordinal`.
    #[inline]
    pub fn at(&self, ordinal: usize, i: usize) -> f64 {
        self.values[ordinal * self.width + i - self.first()]
    }

    /// `sigma_hat[i - 1/2]` for `i = 1..=N` on line `ordinal`.
    pub fn interior(&self, ordinal: usize) -> &[f64] {
        let base = ordinal * self.width;
        if self.ghosts {
            &self.values[base + 1..base + self.width - 1]
        } else {
            &self.values[base..base + self.width]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Everything the scheme needs to know about the medium on one mesh.
#[derive(Debug, Clone)]
pub struct MediumTables {
    pub quad: QuadRule,
    pub variant: SigmaVariant,
    pub sigma_nodes: Field,
    pub half: Vec<HalfNodeTable>,
    /// `sigma^(k)` at every node, per direction.
    pub sigma_eff: Vec<Field>,
    /// `beta = 1 / (sigma c^2)` at nodes.
    pub beta: Field,
    pub c2_nodes: Field,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub beta_min: f64,
}

impl MediumTables {
    pub fn half(&self, k: usize) -> &HalfNodeTable {
        &self.half[k]
    }
}

/// Assemble half-node means, effective densities and `beta` for `mesh`.
pub fn build_medium<S, C>(mesh: &Mesh, sigma: S, c2: C, params: &SchemeParams, support: Support) -> Result<MediumTables>
where
    S: Fn(&[f64]) -> f64 + Sync,
    C: Fn(&[f64]) -> f64 + Sync,
{
    let ghosts = params.sigma_variant == SigmaVariant::Harmonic;
    if ghosts && support == Support::Domain {
        let a = mesh.axis(0);
        return Err(Error::data(format!(
            "harmonic sigma^(k) needs sigma on the ghost cell [{}, {}] of axis 1, \
             but sigma is only declared on the domain",
            a.min() - a.step(),
            a.min()
        )));
    }

    let sigma_nodes = sample(mesh, &sigma)?;
    if let Some((flat, v)) = sigma_nodes.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::data(format!("sigma = {v} is not positive at node {:?}", mesh.shape().multi_index(flat))));
    }
    let c2_nodes = sample(mesh, &c2)?;
    if let Some((flat, v)) = c2_nodes.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::data(format!("c^2 = {v} is not positive at node {:?}", mesh.shape().multi_index(flat))));
    }

    let dim = mesh.dim();
    let mut half = Vec::with_capacity(dim);
    let mut sigma_eff = Vec::with_capacity(dim);
    for k in 0..dim {
        let table = half_node_table(mesh, &sigma, k, params.quad, ghosts)?;
        let eff = effective_sigma(mesh, &sigma_nodes, &table, k, params.sigma_variant)?;
        half.push(table);
        sigma_eff.push(eff);
    }

    let beta_values: Vec<f64> = sigma_nodes
        .values()
        .iter()
        .zip(c2_nodes.values())
        .map(|(s, c)| 1.0 / (s * c))
        .collect();
    let beta = Field::from_values(mesh, beta_values)?;

    let (sigma_min, sigma_max) = min_max(sigma_nodes.values());
    let (beta_min, _) = min_max(beta.values());

    Ok(MediumTables {
        quad: params.quad,
        variant: params.sigma_variant,
        sigma_nodes,
        half,
        sigma_eff,
        beta,
        c2_nodes,
        sigma_min,
        sigma_max,
        beta_min,
    })
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn half_node_table<S>(mesh: &Mesh, sigma: &S, k: usize, rule: QuadRule, ghosts: bool) -> Result<HalfNodeTable>
where
    S: Fn(&[f64]) -> f64 + Sync,
{
    let axis = *mesh.axis(k);
    let n = axis.cells();
    let width = if ghosts { n + 2 } else { n };
    let first = if ghosts { 0 } else { 1 };
    let dim = mesh.dim();
    let lines = mesh.lines(k);

    let per_line: Vec<Vec<f64>> = lines
        .par_iter()
        .map(|line| {
            let mut x = [0.0; MAX_DIM];
            for l in 0..dim {
                x[l] = mesh.axis(l).coordinate(line.fixed[l]);
            }
            (0..width)
                .map(|j| {
                    let i = j + first;
                    // cell [x_{i-1}, x_i]; i = 0 and i = N + 1 are the ghost cells
                    let a = axis.min() + (i as f64 - 1.0) * axis.step();
                    half_node_mean(
                        |s| {
                            let mut p = x;
                            p[k] = s;
                            sigma(&p[..dim])
                        },
                        a,
                        axis.step(),
                        rule,
                    )
                    .map_err(|e| match e {
                        Error::Data(msg) if i == 0 || i == n + 1 => {
                            Error::Data(format!("ghost cell of {}: {msg}", line.describe(dim)))
                        }
                        other => other,
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(HalfNodeTable { ghosts, width, values: per_line.concat() })
}

fn effective_sigma(
    mesh: &Mesh,
    sigma_nodes: &Field,
    table: &HalfNodeTable,
    k: usize,
    variant: SigmaVariant,
) -> Result<Field> {
    if variant == SigmaVariant::Nodal {
        return Ok(sigma_nodes.clone());
    }
    let mut out = Field::zeros(mesh);
    let n = mesh.axis(k).cells();
    for line in mesh.lines(k) {
        for i in 0..=n {
            let node = sigma_nodes.values()[line.node(i)];
            out.values_mut()[line.node(i)] =
                sigma_k_effective(table.at(line.ordinal, i), table.at(line.ordinal, i + 1), node, variant)?;
        }
    }
    Ok(out)
}

/// Courant numbers of a mesh pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CourantNumbers {
    /// `c_max h_t sqrt(sum 1/h_k^2)`.
    pub nu_c: f64,
    /// `sqrt(sigma_max / sigma_min) * nu_c`.
    pub nu_c_sigma: f64,
    /// `h_t sqrt(sum 1/h_k^2) / sqrt(beta_min sigma_min)`.
    pub nu_beta: f64,
}

impl CourantNumbers {
    /// Whether `nu^2(c, sigma) <= epsilon`.
    pub fn satisfies(&self, epsilon: f64) -> bool {
        self.nu_c_sigma * self.nu_c_sigma <= epsilon
    }
}

pub fn courant_numbers(mesh: &Mesh, h_t: f64, tables: &MediumTables) -> CourantNumbers {
    let c2_max = tables.c2_nodes.values().iter().fold(0.0_f64, |m, &v| m.max(v));
    let spatial = mesh.inverse_step_sq_sum().sqrt();
    let nu_c = c2_max.sqrt() * h_t * spatial;
    CourantNumbers {
        nu_c,
        nu_c_sigma: (tables.sigma_max / tables.sigma_min).sqrt() * nu_c,
        nu_beta: h_t * spatial / (tables.beta_min * tables.sigma_min).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_offset_is_exact() {
        assert_eq!(GAUSS2_OFFSET, 1.0 / (2.0 * 3.0_f64.sqrt()));
    }

    #[test]
    fn constant_mean_any_rule() {
        for rule in [QuadRule::IntegralMean, QuadRule::Simpson, QuadRule::Gauss2] {
            assert!((half_node_mean(|_| 2.0, 0.3, 0.7, rule).unwrap() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn polynomial_exactness() {
        assert!((half_node_mean(|x| x, 0.0, 0.4, QuadRule::Simpson).unwrap() - 0.2).abs() < 1e-16);
        let cube = |x: f64| x * x * x;
        assert!((half_node_mean(cube, 0.0, 1.0, QuadRule::Simpson).unwrap() - 0.25).abs() < 1e-15);
        assert!((half_node_mean(cube, 0.0, 1.0, QuadRule::IntegralMean).unwrap() - 0.25).abs() < 1e-15);
        assert!((half_node_mean(|x| x * x, 0.0, 1.0, QuadRule::Gauss2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // degree 9 is still exact for the 5-point rule: mean of x^9 over [0,1] is 1/10
        assert!((half_node_mean(|x| x.powi(9), 0.0, 1.0, QuadRule::IntegralMean).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn simpson_exponential_cell() {
        let v = half_node_mean(f64::exp, 0.0, 0.5, QuadRule::Simpson).unwrap();
        let expected = (1.0 + 4.0 * 0.25_f64.exp() + 0.5_f64.exp()) / 6.0;
        assert_eq!(v, expected);
        assert!((v - 1.297_47).abs() < 1e-5);
        assert!((v - (0.5_f64.exp() - 1.0) / 0.5).abs() < 1e-4);
    }

    #[test]
    fn bad_means_are_rejected() {
        assert!(matches!(half_node_mean(|_| -1.0, 0.0, 1.0, QuadRule::Simpson), Err(Error::Data(_))));
        assert!(matches!(half_node_mean(|_| f64::NAN, 0.0, 1.0, QuadRule::Gauss2), Err(Error::Data(_))));
    }

    #[test]
    fn effective_sigma_variants() {
        assert_eq!(sigma_k_effective(0.7, 0.7, 9.0, SigmaVariant::Harmonic).unwrap(), 0.7);
        assert_eq!(sigma_k_effective(1.0, 3.0, 9.0, SigmaVariant::Harmonic).unwrap(), 1.5);
        assert_eq!(sigma_k_effective(5.0, 1.0, 2.7, SigmaVariant::Nodal).unwrap(), 2.7);
        assert!(sigma_k_effective(0.0, 1.0, 2.7, SigmaVariant::Nodal).is_err());
    }

    #[test]
    fn constant_medium_tables() {
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 2.0)], &[4, 5]).unwrap();
        for v in [Version::A, Version::B] {
            let t = build_medium(&mesh, |_| 1.0, |_| 1.0, &SchemeParams::version(v), Support::Enlarged).unwrap();
            for k in 0..2 {
                assert!(t.half(k).values().iter().all(|&s| (s - 1.0).abs() < 1e-15));
                assert!(t.sigma_eff[k].values().iter().all(|&s| (s - 1.0).abs() < 1e-15));
            }
            assert!(t.beta.values().iter().all(|&b| b == 1.0));
        }
    }

    #[test]
    fn ghost_cells_only_for_harmonic() {
        let mesh = Mesh::uniform(&[(0.0, 1.0)], &[4]).unwrap();
        // sigma undefined (NaN) outside [0, 1]
        let sigma = |x: &[f64]| if (0.0..=1.0).contains(&x[0]) { 1.0 + x[0] } else { f64::NAN };
        let a = build_medium(&mesh, sigma, |_| 1.0, &SchemeParams::version(Version::A), Support::Domain).unwrap();
        assert!(!a.half(0).has_ghosts());
        assert_eq!(a.half(0).interior(0).len(), 4);

        let err = build_medium(&mesh, sigma, |_| 1.0, &SchemeParams::version(Version::B), Support::Domain).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
        let err = build_medium(&mesh, sigma, |_| 1.0, &SchemeParams::version(Version::B), Support::Enlarged).unwrap_err();
        assert!(err.to_string().contains("ghost cell"), "{err}");
    }

    #[test]
    fn example1_corner_node() {
        let mesh = Mesh::uniform(&[(0.0, 2.0), (0.0, 2.0)], &[5, 5]).unwrap();
        let t = build_medium(
            &mesh,
            |x| (x[0] + x[1]).exp(),
            |x| (1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1])).powi(2),
            &SchemeParams::version(Version::A),
            Support::Enlarged,
        )
        .unwrap();
        assert_eq!(t.sigma_nodes.get(&[0, 0]).unwrap(), 1.0);
        assert_eq!(t.beta.get(&[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn courant_unit_1d() {
        let mesh = Mesh::uniform(&[(0.0, 1.0)], &[10]).unwrap();
        let t = build_medium(&mesh, |_| 1.0, |_| 1.0, &SchemeParams::default(), Support::Domain).unwrap();
        let nu = courant_numbers(&mesh, 0.1, &t);
        assert!((nu.nu_c - 1.0).abs() < 1e-14);
        assert!((nu.nu_c_sigma - 1.0).abs() < 1e-14);
        assert!((nu.nu_beta - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_orders_against_integral_mean() {
        // |sigma_S - sigma_I| and |sigma_G - sigma_I| must fall like h^4 for sigma = e^x
        let slope = |rule: QuadRule| {
            let err = |h: f64| {
                let i = half_node_mean(f64::exp, 0.3, h, QuadRule::IntegralMean).unwrap();
                (half_node_mean(f64::exp, 0.3, h, rule).unwrap() - i).abs()
            };
            (err(0.2) / err(0.1)).log2()
        };
        assert!((slope(QuadRule::Simpson) - 4.0).abs() < 0.1);
        assert!((slope(QuadRule::Gauss2) - 4.0).abs() < 0.1);
    }

    #[test]
    fn harmonic_close_to_nodal() {
        let err = |n: usize| {
            let mesh = Mesh::uniform(&[(0.0, 1.0)], &[n]).unwrap();
            let t = build_medium(&mesh, |x| x[0].exp(), |_| 1.0, &SchemeParams::version(Version::B), Support::Enlarged)
                .unwrap();
            t.sigma_eff[0]
                .values()
                .iter()
                .zip(t.sigma_nodes.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let p = (err(16) / err(32)).log2();
        assert!((p - 2.0).abs() < 0.1, "observed {p}");
    }

    #[test]
    fn means_stay_within_sampled_range() {
        let sigma = |x: f64| 1.0 + 0.9 * (7.0 * x).sin();
        for rule in [QuadRule::IntegralMean, QuadRule::Simpson, QuadRule::Gauss2] {
            for c in 0..20 {
                let a = c as f64 * 0.05;
                let h = 0.05;
                let m = half_node_mean(sigma, a, h, rule).unwrap();
                let pts: Vec<f64> = match rule {
                    QuadRule::Simpson => vec![a, a + h / 2.0, a + h],
                    QuadRule::Gauss2 => {
                        vec![a + h / 2.0 - GAUSS2_OFFSET * h, a + h / 2.0 + GAUSS2_OFFSET * h]
                    }
                    QuadRule::IntegralMean => GL5_NODES.iter().map(|xi| a + h / 2.0 + xi * h / 2.0).collect(),
                };
                let lo = pts.iter().map(|&x| sigma(x)).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|&x| sigma(x)).fold(f64::NEG_INFINITY, f64::max);
                assert!(lo - 1e-15 <= m && m <= hi + 1e-15);
            }
        }
    }
}
