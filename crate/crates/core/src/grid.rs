//! Uniform tensor-product meshes, the time mesh and mesh functions.
//!
//! Node values are stored flat with the last axis index varying fastest.
//! Mesh functions never carry ghost nodes; the half-node coefficient tables
//! in [`crate::medium`] are the only place where the mesh is extended.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// One uniform axis `x_min + i h`, `0 <= i <= N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    min: f64,
    max: f64,
    cells: usize,
    step: f64,
}

impl Axis {
    pub fn new(min: f64, max: f64, cells: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::usage(format!("axis bounds must satisfy min < max, got [{min}, {max}]")));
        }
        if cells < 2 {
            return Err(Error::usage(format!("an axis needs at least 2 cells, got {cells}")));
        }
        Ok(Axis { min, max, cells, step: (max - min) / cells as f64 })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes `N + 1`.
    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    /// Index of the grid line closest to `x`, or `None` outside `[min, max]`.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        let tol = 1e-12 * (self.max - self.min);
        if !(x >= self.min - tol && x <= self.max + tol) {
            return None;
        }
        let i = ((x - self.min) / self.step).round();
        Some((i.max(0.0) as usize).min(self.cells))
    }
}

/// The uniform time mesh `t_m = m h_t`, `0 <= m <= M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    final_time: f64,
    levels: usize,
    step: f64,
}

impl TimeAxis {
    pub fn new(final_time: f64, levels: usize) -> Result<Self> {
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::usage(format!("final time must be positive, got {final_time}")));
        }
        if levels < 2 {
            return Err(Error::usage(format!("the time mesh needs M >= 2, got {levels}")));
        }
        Ok(TimeAxis { final_time, levels, step: final_time / levels as f64 })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// `M`, the index of the last level.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.step
    }

    /// Level whose time is nearest to `t`, clamped to `[0, M]`.
    pub fn nearest_level(&self, t: f64) -> usize {
        let m = (t / self.step).round();
        if m <= 0.0 {
            0
        } else {
            (m as usize).min(self.levels)
        }
    }
}

/// Node counts and strides of a mesh; all a [`Field`] needs to know.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    dim: usize,
    nodes: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
}

impl Shape {
    fn new(nodes: &[usize]) -> Self {
        let dim = nodes.len();
        let mut n = [1; MAX_DIM];
        n[..dim].copy_from_slice(nodes);
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for k in (0..dim).rev() {
            strides[k] = s;
            s *= n[k];
        }
        Shape { dim, nodes: n, strides }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self, k: usize) -> usize {
        self.nodes[k]
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn len(&self) -> usize {
        self.nodes[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn multi_index(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for k in 0..self.dim {
            idx[k] = flat / self.strides[k];
            flat %= self.strides[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dim {
            return Err(Error::usage(format!(
                "multi-index has {} components, mesh dimension is {}",
                idx.len(),
                self.dim
            )));
        }
        let mut flat = 0;
        for (k, &i) in idx.iter().enumerate() {
            if i >= self.nodes[k] {
                return Err(Error::usage(format!(
                    "index {i} out of range 0..={} on axis {}",
                    self.nodes[k] - 1,
                    k + 1
                )));
            }
            flat += i * self.strides[k];
        }
        Ok(flat)
    }

    #[inline]
    pub(crate) fn flat_unchecked(&self, idx: &[usize; MAX_DIM]) -> usize {
        (0..self.dim).map(|k| idx[k] * self.strides[k]).sum()
    }

    /// Classify a node by how many of its indices sit on the mesh boundary.
    pub fn classify(&self, idx: &[usize; MAX_DIM]) -> NodeClass {
        let mut face = None;
        let mut extreme = 0;
        for k in 0..self.dim {
            let last = self.nodes[k] - 1;
            if idx[k] == 0 {
                extreme += 1;
                face = Some(Face { axis: k, side: Side::Low });
            } else if idx[k] == last {
                extreme += 1;
                face = Some(Face { axis: k, side: Side::High });
            }
        }
        match (extreme, face) {
            (0, _) => NodeClass::Interior,
            (1, Some(f)) => NodeClass::Face(f),
            _ => NodeClass::EdgeOrCorner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

/// A facet `x_axis = min` (`Low`) or `x_axis = max` (`High`); `axis` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Face(Face),
    EdgeOrCorner,
}

/// A grid line in direction `k`: all nodes sharing the indices in `fixed`
/// except the `k`-th one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line {
    pub direction: usize,
    /// Position among all lines of this direction, in canonical order.
    pub ordinal: usize,
    /// Full multi-index of the line's first node (`fixed[direction] == 0`).
    pub fixed: [usize; MAX_DIM],
    pub start: usize,
    pub stride: usize,
    /// Node count along the line, `N_k + 1`.
    pub len: usize,
}

impl Line {
    #[inline]
    pub fn node(&self, i: usize) -> usize {
        self.start + i * self.stride
    }

    /// Human-readable description used in error messages.
    pub fn describe(&self, dim: usize) -> String {
        let parts: Vec<String> = (0..dim)
            .map(|l| if l == self.direction { "*".to_string() } else { self.fixed[l].to_string() })
            .collect();
        format!("line ({}) in direction x{}", parts.join(", "), self.direction + 1)
    }
}

/// A uniform rectangular mesh on a box of dimension 1 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    axes: Vec<Axis>,
    shape: Shape,
}

impl Mesh {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::usage(format!("mesh dimension must be 1..={MAX_DIM}, got {}", axes.len())));
        }
        let nodes: Vec<usize> = axes.iter().map(Axis::nodes).collect();
        let shape = Shape::new(&nodes);
        Ok(Mesh { axes, shape })
    }

    /// Mesh on `domain` with `cells[k]` cells along axis `k`.
    pub fn uniform(domain: &[(f64, f64)], cells: &[usize]) -> Result<Self> {
        if domain.len() != cells.len() {
            return Err(Error::usage(format!(
                "domain has {} axes but {} cell counts were given",
                domain.len(),
                cells.len()
            )));
        }
        let axes = domain
            .iter()
            .zip(cells)
            .map(|(&(a, b), &n)| Axis::new(a, b, n))
            .collect::<Result<Vec<_>>>()?;
        Mesh::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn node_count(&self) -> usize {
        self.shape.len()
    }

    pub fn interior_count(&self) -> usize {
        self.axes.iter().map(|a| a.cells() - 1).product()
    }

    /// Coordinates of the node at flat position `flat`.
    #[inline]
    pub fn coordinates(&self, flat: usize, out: &mut [f64; MAX_DIM]) {
        let idx = self.shape.multi_index(flat);
        for (k, a) in self.axes.iter().enumerate() {
            out[k] = a.coordinate(idx[k]);
        }
    }

    pub fn node_class(&self, idx: &[usize]) -> Result<NodeClass> {
        let flat = self.shape.flat_index(idx)?;
        Ok(self.shape.classify(&self.shape.multi_index(flat)))
    }

    /// Number of lines in direction `k` (all other indices free).
    pub fn line_count(&self, k: usize) -> usize {
        self.shape.len() / self.shape.nodes(k)
    }

    /// Every line in direction `k`, in canonical order of the other indices.
    pub fn lines(&self, k: usize) -> Vec<Line> {
        assert!(k < self.dim(), "direction {k} out of range");
        let total = self.line_count(k);
        (0..total).map(|ordinal| self.line_by_ordinal(k, ordinal)).collect()
    }

    /// Lines in direction `k` whose other indices are all strictly interior.
    /// These are the lines carrying the tridiagonal systems of the scheme.
    pub fn interior_lines(&self, k: usize) -> Vec<Line> {
        self.lines(k)
            .into_iter()
            .filter(|line| {
                (0..self.dim())
                    .filter(|&l| l != k)
                    .all(|l| line.fixed[l] > 0 && line.fixed[l] < self.axes[l].cells())
            })
            .collect()
    }

    fn line_by_ordinal(&self, k: usize, ordinal: usize) -> Line {
        let mut fixed = [0; MAX_DIM];
        let mut rest = ordinal;
        for l in (0..self.dim()).rev() {
            if l == k {
                continue;
            }
            let n = self.shape.nodes(l);
            fixed[l] = rest % n;
            rest /= n;
        }
        Line {
            direction: k,
            ordinal,
            fixed,
            start: self.shape.flat_unchecked(&fixed),
            stride: self.shape.stride(k),
            len: self.shape.nodes(k),
        }
    }

    /// The line in direction `k` through the nodes with the given indices on
    /// the remaining axes (`fixed` has `dim - 1` entries, in axis order).
    pub fn line(&self, k: usize, fixed: &[usize]) -> Result<Line> {
        if k >= self.dim() {
            return Err(Error::usage(format!("direction {} out of range 1..={}", k + 1, self.dim())));
        }
        if fixed.len() + 1 != self.dim() {
            return Err(Error::usage(format!(
                "a line in dimension {} is fixed by {} indices, got {}",
                self.dim(),
                self.dim() - 1,
                fixed.len()
            )));
        }
        let mut ordinal = 0;
        let mut it = fixed.iter();
        for l in 0..self.dim() {
            if l == k {
                continue;
            }
            let i = *it.next().expect("length checked");
            let n = self.shape.nodes(l);
            if i >= n {
                return Err(Error::usage(format!("fixed index {i} out of range 0..={} on axis {}", n - 1, l + 1)));
            }
            ordinal = ordinal * n + i;
        }
        Ok(self.line_by_ordinal(k, ordinal))
    }

    /// Position of the line in direction `k` through the node `idx`.
    #[inline]
    pub fn line_ordinal(&self, k: usize, idx: &[usize; MAX_DIM]) -> usize {
        let mut ordinal = 0;
        for l in 0..self.dim() {
            if l != k {
                ordinal = ordinal * self.shape.nodes(l) + idx[l];
            }
        }
        ordinal
    }

    pub fn steps(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::step).collect()
    }

    /// `sum_k 1 / h_k^2`.
    pub fn inverse_step_sq_sum(&self) -> f64 {
        self.axes.iter().map(|a| 1.0 / (a.step() * a.step())).sum()
    }
}

/// A scalar mesh function over all nodes of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: Shape,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Field::filled(mesh, 0.0)
    }

    pub fn filled(mesh: &Mesh, value: f64) -> Self {
        Field { shape: mesh.shape(), values: vec![value; mesh.node_count()] }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::usage(format!(
                "field has {} values, mesh has {} nodes",
                values.len(),
                mesh.node_count()
            )));
        }
        Ok(Field { shape: mesh.shape(), values })
    }

    pub(crate) fn from_shape(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Field { shape, values }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.values[self.shape.flat_index(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        let flat = self.shape.flat_index(idx)?;
        self.values[flat] = value;
        Ok(())
    }

    pub fn matches(&self, mesh: &Mesh) -> bool {
        self.shape == mesh.shape()
    }

    pub(crate) fn check_mesh(&self, mesh: &Mesh, what: &str) -> Result<()> {
        if self.matches(mesh) {
            Ok(())
        } else {
            Err(Error::usage(format!("{what} does not live on the given mesh")))
        }
    }

    /// Values along `line`, in increasing index order.
    pub fn line_values(&self, line: &Line) -> impl Iterator<Item = &f64> + '_ {
        self.values[line.start..].iter().step_by(line.stride).take(line.len)
    }

    pub fn line_values_mut(&mut self, line: &Line) -> impl Iterator<Item = &mut f64> + '_ {
        self.values[line.start..].iter_mut().step_by(line.stride).take(line.len)
    }

    /// The `N_k + 1` values along direction `k` through the nodes fixed by
    /// `fixed` (indices of the other axes, in axis order).
    pub fn line_view(&self, mesh: &Mesh, k: usize, fixed: &[usize]) -> Result<Vec<f64>> {
        self.check_mesh(mesh, "field")?;
        let line = mesh.line(k, fixed)?;
        Ok(self.line_values(&line).copied().collect())
    }

    /// Overwrite the values along a line; `values` must hold `N_k + 1` entries.
    pub fn write_line(&mut self, mesh: &Mesh, k: usize, fixed: &[usize], values: &[f64]) -> Result<()> {
        self.check_mesh(mesh, "field")?;
        let line = mesh.line(k, fixed)?;
        if values.len() != line.len {
            return Err(Error::usage(format!("line has {} nodes, got {} values", line.len, values.len())));
        }
        for (slot, v) in self.line_values_mut(&line).zip(values) {
            *slot = *v;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flat index of the first non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// Evaluate `g` at every node.
pub fn sample<G>(mesh: &Mesh, g: G) -> Result<Field>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let dim = mesh.dim();
    let values: Vec<f64> = (0..mesh.node_count())
        .into_par_iter()
        .map(|flat| {
            let mut x = [0.0; MAX_DIM];
            mesh.coordinates(flat, &mut x);
            g(&x[..dim])
        })
        .collect();
    if let Some(flat) = values.iter().position(|v| !v.is_finite()) {
        let mut x = [0.0; MAX_DIM];
        mesh.coordinates(flat, &mut x);
        let idx = mesh.shape().multi_index(flat);
        return Err(Error::data(format!(
            "non-finite value {} at node {:?} (x = {:?})",
            values[flat],
            &idx[..dim],
            &x[..dim]
        )));
    }
    Ok(Field { shape: mesh.shape(), values })
}

/// Evaluate a space-time function at every node at time `t`.
pub fn sample_at<G>(mesh: &Mesh, g: G, t: f64) -> Result<Field>
where
    G: Fn(&[f64], f64) -> f64 + Sync,
{
    sample(mesh, |x| g(x, t))
}
