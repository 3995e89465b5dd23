//! Built-in problems and the configuration loader.
//!
//! Examples 1 and 2 are manufactured from the travelling wave
//! `u = cos(sqrt(2) t - x1 - x2)` on `(0, 2)^2`, so their source, boundary
//! and initial data follow from closed-form derivatives. Example 3 is a
//! layered medium excited by a localized wavelet source with zero data.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Face;
use crate::medium::{SchemeParams, Support, Version};
use crate::stepper::{FaceFn, ProblemSpec, SpaceFn, SpaceTimeFn};

/// Closed-form pieces of a manufactured solution.
struct Manufactured {
    beta: SpaceFn,
    u: SpaceTimeFn,
    u_t: SpaceTimeFn,
    u_tt: SpaceTimeFn,
    /// `L_l(sigma) u` per direction.
    lu: Vec<SpaceTimeFn>,
}

fn manufactured(
    name: &str,
    domain: Vec<(f64, f64)>,
    final_time: f64,
    sigma: SpaceFn,
    c2: SpaceFn,
    m: Manufactured,
) -> ProblemSpec {
    let Manufactured { beta, u, u_t, u_tt, lu } = m;

    let source: SpaceTimeFn = {
        let (beta, u_tt, lu) = (beta.clone(), u_tt.clone(), lu.clone());
        Arc::new(move |x, t| beta(x) * u_tt(x, t) - lu.iter().map(|l| l(x, t)).sum::<f64>())
    };

    let boundary_aux: Vec<FaceFn> = (0..domain.len())
        .map(|k| {
            let (beta, u_tt, lu, f) = (beta.clone(), u_tt.clone(), lu.clone(), source.clone());
            let g: FaceFn = Arc::new(move |face: Face, x: &[f64], t: f64| {
                if face.axis == k {
                    let others: f64 = lu.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, op)| op(x, t)).sum();
                    beta(x) * u_tt(x, t) - others - f(x, t)
                } else {
                    lu[k](x, t)
                }
            });
            g
        })
        .collect();

    let u0: SpaceFn = {
        let u = u.clone();
        Arc::new(move |x| u(x, 0.0))
    };
    let u1: SpaceFn = Arc::new(move |x| u_t(x, 0.0));

    ProblemSpec {
        name: name.to_string(),
        domain,
        final_time,
        sigma,
        sigma_support: Support::Enlarged,
        c2,
        source,
        u0,
        u1,
        boundary: u.clone(),
        boundary_aux,
        exact: Some(u),
    }
}

fn phase(x: &[f64], t: f64) -> f64 {
    SQRT_2 * t - x[0] - x[1]
}

fn travelling_wave() -> (SpaceTimeFn, SpaceTimeFn, SpaceTimeFn) {
    (
        Arc::new(|x, t| phase(x, t).cos()),
        Arc::new(|x, t| -SQRT_2 * phase(x, t).sin()),
        Arc::new(|x, t| -2.0 * phase(x, t).cos()),
    )
}

/// Smooth density `e^{x1 + x2}` and squared speed `(1 + |x|^2 / 2)^2` on
/// `(0, 2)^2`, `T = 1.2`.
pub fn example1() -> ProblemSpec {
    let sigma: SpaceFn = Arc::new(|x| (x[0] + x[1]).exp());
    let c2: SpaceFn = Arc::new(|x| {
        let q = 1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1]);
        q * q
    });
    let beta: SpaceFn = {
        let c2 = c2.clone();
        Arc::new(move |x| (-(x[0] + x[1])).exp() / c2(x))
    };
    // L_l u = d_l(e^{-s} sin(theta)) = -e^{-s} (sin(theta) + cos(theta)) for l = 1, 2
    let lu_l: SpaceTimeFn = Arc::new(|x, t| {
        let th = phase(x, t);
        -(-(x[0] + x[1])).exp() * (th.sin() + th.cos())
    });
    let (u, u_t, u_tt) = travelling_wave();
    manufactured(
        "example1",
        vec![(0.0, 2.0), (0.0, 2.0)],
        1.2,
        sigma,
        c2,
        Manufactured { beta, u, u_t, u_tt, lu: vec![lu_l.clone(), lu_l] },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example2Params {
    pub b_sigma: f64,
    pub b_c: f64,
}

impl Default for Example2Params {
    fn default() -> Self {
        Example2Params { b_sigma: 20.0, b_c: 1000.0 }
    }
}

/// Smoothed jumps across `x1 = 1`: `1/sigma = 1.25 + 0.75 tanh(b_sigma (x1 - 1))`,
/// `c^2 = 2.5 - 1.5 tanh(b_c (x1 - 1))`; same domain, time and solution as example 1.
pub fn example2() -> ProblemSpec {
    example2_with(Example2Params::default())
}

pub fn example2_with(p: Example2Params) -> ProblemSpec {
    let Example2Params { b_sigma, b_c } = p;
    let inv_sigma = move |x: &[f64]| 1.25 + 0.75 * (b_sigma * (x[0] - 1.0)).tanh();
    let inv_sigma_dx = move |x: &[f64]| {
        let th = (b_sigma * (x[0] - 1.0)).tanh();
        0.75 * b_sigma * (1.0 - th * th)
    };
    let sigma: SpaceFn = Arc::new(move |x| 1.0 / inv_sigma(x));
    let c2: SpaceFn = Arc::new(move |x| 2.5 - 1.5 * (b_c * (x[0] - 1.0)).tanh());
    let beta: SpaceFn = {
        let c2 = c2.clone();
        Arc::new(move |x| inv_sigma(x) / c2(x))
    };
    let lu1: SpaceTimeFn = Arc::new(move |x, t| {
        let th = phase(x, t);
        inv_sigma_dx(x) * th.sin() - inv_sigma(x) * th.cos()
    });
    let lu2: SpaceTimeFn = Arc::new(move |x, t| -inv_sigma(x) * phase(x, t).cos());
    let (u, u_t, u_tt) = travelling_wave();
    manufactured(
        "example2",
        vec![(0.0, 2.0), (0.0, 2.0)],
        1.2,
        sigma,
        c2,
        Manufactured { beta, u, u_t, u_tt, lu: vec![lu1, lu2] },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example3Params {
    pub b_sigma: f64,
    pub b_c: f64,
    pub gamma: f64,
    pub source_center: [f64; 2],
    pub sigma_outer: f64,
    pub sigma_inner: f64,
    pub c_outer: f64,
    pub c_inner: f64,
}

impl Default for Example3Params {
    fn default() -> Self {
        Example3Params {
            b_sigma: 100.0,
            b_c: 100.0,
            gamma: 1000.0,
            source_center: [1.5, 1.5],
            sigma_outer: 1.6,
            sigma_inner: 1.2,
            c_outer: 1.5,
            c_inner: 1.0,
        }
    }
}

/// Three layers in `x1` (interfaces at 1 and 2) on `(-0.7, 3.7)^2`, `T = 1.15`,
/// driven by `f = beta (gamma/pi) exp(-gamma r^2) sin(50 t) exp(-200 t^2)`
/// with zero initial and boundary data.
pub fn example3() -> ProblemSpec {
    example3_with(Example3Params::default())
}

pub fn example3_with(p: Example3Params) -> ProblemSpec {
    let layer = move |b: f64, x1: f64| (b * (x1 - 1.0)).tanh() - (b * (x1 - 2.0)).tanh();
    let sigma: SpaceFn =
        Arc::new(move |x| p.sigma_outer - 0.5 * (p.sigma_outer - p.sigma_inner) * layer(p.b_sigma, x[0]));
    let (co2, ci2) = (p.c_outer * p.c_outer, p.c_inner * p.c_inner);
    let c2: SpaceFn = Arc::new(move |x| co2 - 0.5 * (co2 - ci2) * layer(p.b_c, x[0]));
    let source: SpaceTimeFn = {
        let (sigma, c2) = (sigma.clone(), c2.clone());
        Arc::new(move |x, t| {
            let dx = x[0] - p.source_center[0];
            let dy = x[1] - p.source_center[1];
            let spatial = p.gamma / PI * (-p.gamma * (dx * dx + dy * dy)).exp();
            let temporal = (50.0 * t).sin() * (-200.0 * t * t).exp();
            spatial * temporal / (sigma(x) * c2(x))
        })
    };
    // g = 0: g_k = -f on the faces normal to x_k, 0 on the others
    let boundary_aux: Vec<FaceFn> = (0..2)
        .map(|k| {
            let f = source.clone();
            let g: FaceFn = Arc::new(move |face: Face, x: &[f64], t: f64| if face.axis == k { -f(x, t) } else { 0.0 });
            g
        })
        .collect();
    ProblemSpec {
        name: "example3".to_string(),
        domain: vec![(-0.7, 3.7), (-0.7, 3.7)],
        final_time: 1.15,
        sigma,
        sigma_support: Support::Enlarged,
        c2,
        source,
        u0: Arc::new(|_| 0.0),
        u1: Arc::new(|_| 0.0),
        boundary: Arc::new(|_, _| 0.0),
        boundary_aux,
        exact: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Example1,
    Example2,
    Example3,
}

impl std::str::FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(ProblemId::Example1),
            "example2" => Ok(ProblemId::Example2),
            "example3" => Ok(ProblemId::Example3),
            other => Err(Error::usage(format!("unknown problem {other:?}, expected example1, example2 or example3"))),
        }
    }
}

impl ProblemId {
    /// Default `(N, M)` of the problem.
    pub fn default_mesh(self) -> (usize, usize) {
        match self {
            ProblemId::Example1 => (5, 20),
            ProblemId::Example2 => (10, 20),
            ProblemId::Example3 => (480, 460),
        }
    }
}

/// Cell count per axis: one number for every axis or one per axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellCounts {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub sigma_outer: Option<f64>,
    pub sigma_inner: Option<f64>,
    pub c_outer: Option<f64>,
    pub c_inner: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    /// 1-based axis held fixed.
    pub axis: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub snapshots: Vec<f64>,
    pub images: bool,
    pub image_levels: Option<u32>,
    pub sections: Vec<SectionConfig>,
}

/// Parsed configuration file. Every omitted value takes the problem default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemId,
    #[serde(rename = "N", default)]
    pub cells: Option<CellCounts>,
    #[serde(rename = "M", default)]
    pub steps: Option<usize>,
    #[serde(rename = "T", default)]
    pub final_time: Option<f64>,
    #[serde(default)]
    pub version: Option<Version>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub b_sigma: Option<f64>,
    #[serde(default)]
    pub b_c: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub source_center: Option<[f64; 2]>,
    #[serde(default)]
    pub layers: Option<LayerConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl ProblemConfig {
    /// A configuration with every value at its default.
    pub fn new(problem: ProblemId) -> Self {
        ProblemConfig {
            problem,
            cells: None,
            steps: None,
            final_time: None,
            version: None,
            epsilon: None,
            b_sigma: None,
            b_c: None,
            gamma: None,
            source_center: None,
            layers: None,
            output: None,
        }
    }
}

/// A problem instantiated from configuration.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub id: ProblemId,
    pub problem: ProblemSpec,
    pub cells: Vec<usize>,
    pub steps: usize,
    pub params: SchemeParams,
    pub output: OutputConfig,
}

/// Parse a JSON configuration; errors name the offending key path.
pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(format!("at `{path}`: {}", e.inner()))
    })
}

/// Parse a JSON configuration and build the problem it describes.
pub fn load_problem(text: &str) -> Result<LoadedProblem> {
    instantiate(&parse_config(text)?)
}

fn positive(key: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(Error::config(format!("at `{key}`: must be positive, got {x}"))),
        other => Ok(other),
    }
}

pub fn instantiate(config: &ProblemConfig) -> Result<LoadedProblem> {
    let id = config.problem;
    let not_for = |key: &str, present: bool, allowed: &[ProblemId]| -> Result<()> {
        if present && !allowed.contains(&id) {
            Err(Error::config(format!("at `{key}`: not a parameter of {id:?}")))
        } else {
            Ok(())
        }
    };
    not_for("b_sigma", config.b_sigma.is_some(), &[ProblemId::Example2, ProblemId::Example3])?;
    not_for("b_c", config.b_c.is_some(), &[ProblemId::Example2, ProblemId::Example3])?;
    not_for("gamma", config.gamma.is_some(), &[ProblemId::Example3])?;
    not_for("source_center", config.source_center.is_some(), &[ProblemId::Example3])?;
    not_for("layers", config.layers.is_some(), &[ProblemId::Example3])?;

    let b_sigma = positive("b_sigma", config.b_sigma)?;
    let b_c = positive("b_c", config.b_c)?;
    let gamma = positive("gamma", config.gamma)?;
    let final_time = positive("T", config.final_time)?;

    let mut problem = match id {
        ProblemId::Example1 => example1(),
        ProblemId::Example2 => {
            let d = Example2Params::default();
            example2_with(Example2Params { b_sigma: b_sigma.unwrap_or(d.b_sigma), b_c: b_c.unwrap_or(d.b_c) })
        }
        ProblemId::Example3 => {
            let d = Example3Params::default();
            let layers = config.layers.clone().unwrap_or_default();
            let mut p = Example3Params {
                b_sigma: b_sigma.unwrap_or(d.b_sigma),
                b_c: b_c.unwrap_or(d.b_c),
                gamma: gamma.unwrap_or(d.gamma),
                source_center: config.source_center.unwrap_or(d.source_center),
                ..d
            };
            p.sigma_outer = positive("layers.sigma_outer", layers.sigma_outer)?.unwrap_or(d.sigma_outer);
            p.sigma_inner = positive("layers.sigma_inner", layers.sigma_inner)?.unwrap_or(d.sigma_inner);
            p.c_outer = positive("layers.c_outer", layers.c_outer)?.unwrap_or(d.c_outer);
            p.c_inner = positive("layers.c_inner", layers.c_inner)?.unwrap_or(d.c_inner);
            if !p.source_center.iter().all(|c| c.is_finite()) {
                return Err(Error::config("at `source_center`: coordinates must be finite"));
            }
            example3_with(p)
        }
    };
    if let Some(t) = final_time {
        problem.final_time = t;
    }

    let (default_n, default_m) = id.default_mesh();
    let cells = match &config.cells {
        None => vec![default_n; problem.dim()],
        Some(CellCounts::Uniform(n)) => vec![*n; problem.dim()],
        Some(CellCounts::PerAxis(v)) => {
            if v.len() != problem.dim() {
                return Err(Error::config(format!("at `N`: expected {} cell counts, got {}", problem.dim(), v.len())));
            }
            v.clone()
        }
    };
    if let Some(n) = cells.iter().find(|&&n| n < 2) {
        return Err(Error::config(format!("at `N`: every axis needs at least 2 cells, got {n}")));
    }
    let steps = config.steps.unwrap_or(default_m);
    if steps < 2 {
        return Err(Error::config(format!("at `M`: at least 2 time steps are needed, got {steps}")));
    }

    let mut params = SchemeParams::version(config.version.unwrap_or(Version::A));
    if let Some(eps) = config.epsilon {
        params.epsilon = eps;
        params.validate().map_err(|_| Error::config(format!("at `epsilon`: must lie in (0, 2/3], got {eps}")))?;
    }

    let output = config.output.clone().unwrap_or_default();
    for (i, s) in output.sections.iter().enumerate() {
        if s.axis == 0 || s.axis > problem.dim() {
            return Err(Error::config(format!("at `output.sections[{i}].axis`: must be 1..={}", problem.dim())));
        }
    }

    Ok(LoadedProblem { id, problem, cells, steps, params, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::QuadRule;

    #[test]
    fn example1_values() {
        let p = example1();
        assert_eq!((p.u0)(&[0.0, 0.0]), 1.0);
        assert!(((p.sigma)(&[2.0, 2.0]) / (p.sigma)(&[0.0, 0.0]) - 54.598).abs() < 1e-3);
        assert_eq!((p.boundary)(&[0.0, 1.3], 0.0), (p.u0)(&[0.0, 1.3]));
    }

    #[test]
    fn example2_values() {
        let p = example2();
        assert_eq!((p.c2)(&[1.0, 0.3]), 2.5);
        let lo = (p.sigma)(&[2.0, 0.0]);
        let hi = (p.sigma)(&[0.0, 0.0]);
        assert!(hi / lo <= 4.0 && hi / lo > 3.99);
    }

    #[test]
    fn example3_values() {
        let p = example3();
        assert!(((p.sigma)(&[-0.5, 0.0]) - 1.6).abs() < 1e-12);
        assert!(((p.sigma)(&[1.5, 0.0]) - 1.2).abs() < 1e-12);
        assert!(((p.c2)(&[1.5, 0.0]) - 1.0).abs() < 1e-12);
        assert!(((p.c2)(&[3.5, 0.0]) - 2.25).abs() < 1e-12);
        assert_eq!((p.source)(&[1.5, 1.5], 0.0), 0.0);
        assert!((1000.0 / PI - 318.3).abs() < 0.01);
        assert!(1000.0 / PI * (-1000.0_f64 * 0.1501 * 0.1501).exp() < 5.385e-8);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let l = load_problem(r#"{"problem": "example1", "N": 5, "M": 20, "version": "A"}"#).unwrap();
        assert_eq!(l.cells, vec![5, 5]);
        assert_eq!(l.steps, 20);
        assert_eq!(l.params.quad, QuadRule::Simpson);

        let l = load_problem(r#"{"problem": "example3"}"#).unwrap();
        assert_eq!((l.cells[0], l.steps), (480, 460));

        let l = load_problem(r#"{"problem": "example2", "b_c": 10, "version": "B"}"#).unwrap();
        assert_eq!(l.params.quad, QuadRule::Gauss2);
        // c^2 = 2.5 - 1.5 tanh(10 (x1 - 1)) at x1 = 1.1
        assert!(((l.problem.c2)(&[1.1, 0.0]) - (2.5 - 1.5 * 1.0_f64.tanh())).abs() < 1e-15);
    }

    #[test]
    fn config_errors_name_the_key() {
        let e = load_problem(r#"{"problem": "example1", "bogus": 1}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)) && e.to_string().contains("bogus"), "{e}");
        let e = load_problem(r#"{"problem": "example3", "layers": {"c_inner": -1}}"#).unwrap_err();
        assert!(e.to_string().contains("layers.c_inner"), "{e}");
        let e = load_problem(r#"{"problem": "example1", "gamma": 3}"#).unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
        let e = load_problem(r#"{"problem": "example1", "N": 1}"#).unwrap_err();
        assert!(e.to_string().contains("`N`"), "{e}");
        let e = load_problem(r#"{"problem": "example1", "version": "C"}"#).unwrap_err();
        assert!(e.to_string().contains("version"), "{e}");
        let e = load_problem(r#"{"problem": "example4"}"#).unwrap_err();
        assert!(e.to_string().contains("problem"), "{e}");
    }

    #[test]
    fn example3_data_symmetry() {
        let p = example3();
        for &(x1, x2, t) in &[(0.3, 1.1, 0.05), (1.2, 0.4, 0.1), (1.45, 1.52, 0.03), (2.9, -0.3, 0.2)] {
            let m1 = [3.0 - x1, x2];
            let m2 = [x1, 3.0 - x2];
            let x = [x1, x2];
            assert!(((p.sigma)(&x) - (p.sigma)(&m1)).abs() < 1e-14);
            assert!(((p.c2)(&x) - (p.c2)(&m1)).abs() < 1e-14);
            let f = (p.source)(&x, t);
            assert!((f - (p.source)(&m1, t)).abs() <= 1e-12 * f.abs().max(1e-300));
            assert!((f - (p.source)(&m2, t)).abs() <= 1e-12 * f.abs().max(1e-300));
        }
    }
}
