//! Node-collocated fields on an axis-aligned structured grid and the
//! discrete operators acting on them.

use std::fmt::Write as _;

use crate::kinematics::{Mat, Point, Tensor3};

/// Axis-aligned box discretized with `cells[k]` cells along axis `k`.
/// Nodes sit on cell corners, axis 0 varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<const D: usize> {
    pub cells: [usize; D],
    pub spacing: [f64; D],
    pub origin: Point<D>,
}

impl<const D: usize> Grid<D> {
    /// Panics on fewer than 4 cells along an axis or an empty box.
    pub fn new(cells: [usize; D], lo: Point<D>, hi: Point<D>) -> Self {
        let mut spacing = [0.0; D];
        for k in 0..D {
            assert!(cells[k] >= 4, "need at least 4 cells per axis");
            assert!(hi[k] > lo[k], "empty box along axis {k}");
            spacing[k] = (hi[k] - lo[k]) / cells[k] as f64;
        }
        Self {
            cells,
            spacing,
            origin: lo,
        }
    }

    pub fn unit(cells: usize) -> Self {
        Self::new([cells; D], [0.0; D], [1.0; D])
    }

    pub fn nodes_along(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    pub fn num_nodes(&self) -> usize {
        (0..D).map(|k| self.nodes_along(k)).product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        (0..axis).map(|k| self.nodes_along(k)).product()
    }

    pub fn index(&self, idx: [usize; D]) -> usize {
        (0..D).map(|k| idx[k] * self.stride(k)).sum()
    }

    pub fn multi_index(&self, mut node: usize) -> [usize; D] {
        let mut idx = [0; D];
        for (k, slot) in idx.iter_mut().enumerate() {
            let n = self.nodes_along(k);
            *slot = node % n;
            node /= n;
        }
        idx
    }

    pub fn position(&self, node: usize) -> Point<D> {
        let idx = self.multi_index(node);
        let mut x = [0.0; D];
        for k in 0..D {
            x[k] = self.origin[k] + idx[k] as f64 * self.spacing[k];
        }
        x
    }

    pub fn upper(&self) -> Point<D> {
        let mut x = [0.0; D];
        for k in 0..D {
            x[k] = self.origin[k] + self.cells[k] as f64 * self.spacing[k];
        }
        x
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.multi_index(node);
        (0..D).any(|k| idx[k] == 0 || idx[k] == self.cells[k])
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn positions(&self) -> Vec<Point<D>> {
        (0..self.num_nodes()).map(|i| self.position(i)).collect()
    }

    pub fn clamp(&self, p: &Point<D>) -> Point<D> {
        let hi = self.upper();
        let mut q = *p;
        for k in 0..D {
            q[k] = q[k].clamp(self.origin[k], hi[k]);
        }
        q
    }

    /// Trapezoid quadrature weight of every node.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|node| {
                let idx = self.multi_index(node);
                (0..D)
                    .map(|k| {
                        let h = self.spacing[k];
                        if idx[k] == 0 || idx[k] == self.cells[k] {
                            0.5 * h
                        } else {
                            h
                        }
                    })
                    .product()
            })
            .collect()
    }
}

/// Values that can be linearly combined node by node.
pub trait NodeValue: Copy {
    fn zero() -> Self;
    fn axpy(&mut self, a: f64, x: &Self);
}

impl NodeValue for f64 {
    fn zero() -> Self {
        0.0
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
}

impl<const D: usize> NodeValue for [f64; D] {
    fn zero() -> Self {
        [0.0; D]
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for k in 0..D {
            self[k] += a * x[k];
        }
    }
}

impl<const D: usize> NodeValue for Mat<D> {
    fn zero() -> Self {
        Mat::zeros()
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for i in 0..D {
            for j in 0..D {
                self.0[i][j] += a * x.0[i][j];
            }
        }
    }
}

impl<const D: usize> NodeValue for Tensor3<D> {
    fn zero() -> Self {
        Tensor3::zeros()
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        Tensor3::axpy(self, a, x);
    }
}

/// Closure of the first-derivative stencil at the two ends of an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryStencil {
    /// Second-order one-sided three-point differences.
    SecondOrder,
    /// First-order two-point differences. Together with the trapezoid
    /// weights this makes `sum_i w_i (D f)_i` telescope to the boundary
    /// values, i.e. discrete integration by parts holds exactly.
    SummationByParts,
}

/// First-derivative stencil at position `k` of an axis with `n` cells:
/// `(offset, coefficient)` pairs, unused slots carry a zero coefficient.
pub fn axis_stencil(k: usize, n: usize, h: f64, mode: BoundaryStencil) -> [(isize, f64); 3] {
    let c = 1.0 / h;
    if k > 0 && k < n {
        return [(-1, -0.5 * c), (1, 0.5 * c), (0, 0.0)];
    }
    let sign = if k == 0 { 1.0 } else { -1.0 };
    let dir: isize = if k == 0 { 1 } else { -1 };
    match mode {
        BoundaryStencil::SecondOrder => [
            (0, -1.5 * c * sign),
            (dir, 2.0 * c * sign),
            (2 * dir, -0.5 * c * sign),
        ],
        BoundaryStencil::SummationByParts => [(0, -c * sign), (dir, c * sign), (0, 0.0)],
    }
}

/// Stencil of `d/dx_axis` at `node` as `(neighbour node, coefficient)`.
pub fn node_stencil<const D: usize>(
    grid: &Grid<D>,
    node: usize,
    axis: usize,
    mode: BoundaryStencil,
) -> [(usize, f64); 3] {
    let k = grid.multi_index(node)[axis];
    let st = axis_stencil(k, grid.cells[axis], grid.spacing[axis], mode);
    let stride = grid.stride(axis) as isize;
    st.map(|(off, c)| ((node as isize + off * stride) as usize, c))
}

/// `d f / d x_axis` at every node.
pub fn derivative<T: NodeValue, const D: usize>(
    f: &[T],
    grid: &Grid<D>,
    axis: usize,
    mode: BoundaryStencil,
) -> Vec<T> {
    assert_eq!(f.len(), grid.num_nodes());
    (0..f.len())
        .map(|node| {
            let mut out = T::zero();
            for (nb, c) in node_stencil(grid, node, axis, mode) {
                if c != 0.0 {
                    out.axpy(c, &f[nb]);
                }
            }
            out
        })
        .collect()
}

/// Transpose of [`derivative`]: accumulates `D^T bar` into `out`.
pub fn derivative_transpose<T: NodeValue, const D: usize>(
    bar: &[T],
    grid: &Grid<D>,
    axis: usize,
    mode: BoundaryStencil,
    out: &mut [T],
) {
    for (node, b) in bar.iter().enumerate() {
        for (nb, c) in node_stencil(grid, node, axis, mode) {
            if c != 0.0 {
                out[nb].axpy(c, b);
            }
        }
    }
}

/// Gradient of a vector field, `G[i][j] = d v_i / d x_j`.
pub fn gradient_with<const D: usize>(
    v: &[Point<D>],
    grid: &Grid<D>,
    mode: BoundaryStencil,
) -> Vec<Mat<D>> {
    let mut out = vec![Mat::<D>::zeros(); v.len()];
    for axis in 0..D {
        let dv = derivative(v, grid, axis, mode);
        for (g, d) in out.iter_mut().zip(&dv) {
            for i in 0..D {
                g.0[i][axis] = d[i];
            }
        }
    }
    out
}

pub fn gradient<const D: usize>(v: &[Point<D>], grid: &Grid<D>) -> Vec<Mat<D>> {
    gradient_with(v, grid, BoundaryStencil::SecondOrder)
}

/// Symmetric velocity gradient `e(v) = (grad v + grad v^T) / 2`.
pub fn sym_grad<const D: usize>(v: &[Point<D>], grid: &Grid<D>) -> Vec<Mat<D>> {
    sym_grad_with(v, grid, BoundaryStencil::SecondOrder)
}

pub fn sym_grad_with<const D: usize>(
    v: &[Point<D>],
    grid: &Grid<D>,
    mode: BoundaryStencil,
) -> Vec<Mat<D>> {
    gradient_with(v, grid, mode).iter().map(Mat::sym).collect()
}

/// `G[a][b][c] = d e_bc / d x_a` from a field of strain rates.
pub fn grad_of_matrix_field<const D: usize>(
    e: &[Mat<D>],
    grid: &Grid<D>,
    mode: BoundaryStencil,
) -> Vec<Tensor3<D>> {
    let mut out = vec![Tensor3::<D>::zeros(); e.len()];
    for a in 0..D {
        let de = derivative(e, grid, a, mode);
        for (g, d) in out.iter_mut().zip(&de) {
            g.0[a] = d.0;
        }
    }
    out
}

/// `grad e(v)`, centered differences of the discrete `e(v)`.
pub fn grad_of_sym_grad<const D: usize>(v: &[Point<D>], grid: &Grid<D>) -> Vec<Tensor3<D>> {
    grad_of_sym_grad_with(v, grid, BoundaryStencil::SecondOrder)
}

pub fn grad_of_sym_grad_with<const D: usize>(
    v: &[Point<D>],
    grid: &Grid<D>,
    mode: BoundaryStencil,
) -> Vec<Tensor3<D>> {
    grad_of_matrix_field(&sym_grad_with(v, grid, mode), grid, mode)
}

/// Divergence of a vector field.
pub fn divergence<const D: usize>(v: &[Point<D>], grid: &Grid<D>) -> Vec<f64> {
    gradient(v, grid).iter().map(Mat::trace).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Multilinear (bilinear / trilinear).
    #[default]
    Linear,
    /// Tensor-product cubic Lagrange on a 4-node stencil per axis.
    Cubic,
}

impl Interpolation {
    pub fn name(&self) -> &'static str {
        match self {
            Interpolation::Linear => "linear",
            Interpolation::Cubic => "cubic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "linear" | "bilinear" | "trilinear" => Some(Interpolation::Linear),
            "cubic" | "bicubic" | "tricubic" => Some(Interpolation::Cubic),
            _ => None,
        }
    }
}

/// Value of `f` at `p`; points outside the box are clamped onto it.
pub fn interpolate<T: NodeValue, const D: usize>(
    f: &[T],
    grid: &Grid<D>,
    p: &Point<D>,
    order: Interpolation,
) -> T {
    let q = grid.clamp(p);
    let mut base = [0usize; D];
    let mut w = [[0.0; 4]; D];
    let width: usize = match order {
        Interpolation::Linear => 2,
        Interpolation::Cubic => 4,
    };
    for k in 0..D {
        let n = grid.cells[k];
        let s = (q[k] - grid.origin[k]) / grid.spacing[k];
        let cell = (s.floor().max(0.0) as usize).min(n - 1);
        match order {
            Interpolation::Linear => {
                let t = s - cell as f64;
                base[k] = cell;
                w[k][0] = 1.0 - t;
                w[k][1] = t;
            }
            Interpolation::Cubic => {
                let b = cell.saturating_sub(1).min(n - 3);
                let t = s - b as f64;
                base[k] = b;
                w[k] = lagrange4(t);
            }
        }
    }
    // Accumulate differences to the first stencil node so that constant
    // fields come back bit-for-bit (the weights only sum to 1 up to rounding).
    let anchor = f[grid.index(base)];
    let mut out = anchor;
    let corners = width.pow(D as u32);
    for c in 0..corners {
        let mut rem = c;
        let mut weight = 1.0;
        let mut idx = [0usize; D];
        for k in 0..D {
            let o = rem % width;
            rem /= width;
            weight *= w[k][o];
            idx[k] = base[k] + o;
        }
        if weight != 0.0 && idx != base {
            let mut diff = f[grid.index(idx)];
            diff.axpy(-1.0, &anchor);
            out.axpy(weight, &diff);
        }
    }
    out
}

/// Lagrange basis on nodes 0, 1, 2, 3 evaluated at `t`.
fn lagrange4(t: f64) -> [f64; 4] {
    let (a, b, c, d) = (t, t - 1.0, t - 2.0, t - 3.0);
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

/// Trapezoid-rule integral over the box.
pub fn integrate<const D: usize>(f: &[f64], grid: &Grid<D>) -> f64 {
    grid.weights().iter().zip(f).map(|(w, x)| w * x).sum()
}

/// Legacy-VTK `STRUCTURED_POINTS` ASCII writer. Two-dimensional grids are
/// written with a single node along z.
pub struct VtkDump<'a, const D: usize> {
    grid: &'a Grid<D>,
    title: String,
    body: String,
}

impl<'a, const D: usize> VtkDump<'a, D> {
    pub fn new(grid: &'a Grid<D>, title: &str) -> Self {
        Self {
            grid,
            title: title.replace('\n', " "),
            body: String::new(),
        }
    }

    pub fn scalars(&mut self, name: &str, values: &[f64]) -> &mut Self {
        assert_eq!(values.len(), self.grid.num_nodes());
        let _ = writeln!(self.body, "SCALARS {name} double 1");
        let _ = writeln!(self.body, "LOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(self.body, "{v}");
        }
        self
    }

    pub fn vectors(&mut self, name: &str, values: &[Point<D>]) -> &mut Self {
        assert_eq!(values.len(), self.grid.num_nodes());
        let _ = writeln!(self.body, "VECTORS {name} double");
        for v in values {
            let mut comps = [0.0; 3];
            comps[..D].copy_from_slice(&v[..D]);
            let _ = writeln!(self.body, "{} {} {}", comps[0], comps[1], comps[2]);
        }
        self
    }

    pub fn finish(&self) -> String {
        let g = self.grid;
        let mut dims = [1usize; 3];
        let mut origin = [0.0; 3];
        let mut spacing = [1.0; 3];
        for k in 0..D {
            dims[k] = g.nodes_along(k);
            origin[k] = g.origin[k];
            spacing[k] = g.spacing[k];
        }
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "ASCII");
        let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
        let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
        let _ = writeln!(s, "ORIGIN {} {} {}", origin[0], origin[1], origin[2]);
        let _ = writeln!(s, "SPACING {} {} {}", spacing[0], spacing[1], spacing[2]);
        let _ = writeln!(s, "POINT_DATA {}", g.num_nodes());
        s.push_str(&self.body);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field<const D: usize>(grid: &Grid<D>, f: impl Fn(&Point<D>) -> Point<D>) -> Vec<Point<D>> {
        grid.positions().iter().map(f).collect()
    }

    #[test]
    fn simple_shear_and_dilation() {
        let g = Grid::<2>::unit(8);
        for e in sym_grad(&field(&g, |x| [x[1], 0.0]), &g) {
            assert!((e - Mat([[0.0, 0.5], [0.5, 0.0]])).max_abs() < 1e-13);
        }
        let v = field(&g, |x| [x[0], x[1]]);
        for e in sym_grad(&v, &g) {
            assert!((e - Mat::identity()).max_abs() < 1e-13);
        }
        for d in divergence(&v, &g) {
            assert!((d - 2.0).abs() < 1e-13);
        }
        for e in sym_grad(&field(&g, |_| [0.3, -2.0]), &g) {
            assert!(e.max_abs() < 1e-13);
        }
    }

    #[test]
    fn sym_grad_is_symmetric() {
        let g = Grid::<2>::unit(6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<Point<2>> = (0..g.num_nodes())
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        for mode in [BoundaryStencil::SecondOrder, BoundaryStencil::SummationByParts] {
            for e in sym_grad_with(&v, &g, mode) {
                assert_eq!(e, e.transpose());
            }
        }
    }

    #[test]
    fn grad_of_sym_grad_quadratic() {
        let g = Grid::<2>::unit(8);
        let gl = grad_of_sym_grad(&field(&g, |x| [x[0] * 2.0 + 1.0, -x[1]]), &g);
        assert!(gl.iter().all(|t| t.norm() < 1e-11));
        let gq = grad_of_sym_grad(&field(&g, |x| [x[0] * x[0], 0.0]), &g);
        for (node, t) in gq.iter().enumerate() {
            let idx = g.multi_index(node);
            if idx.iter().all(|&i| i >= 2 && i <= 6) {
                let mut expect = Tensor3::<2>::zeros();
                expect.0[0][0][0] = 2.0;
                let mut diff = *t;
                diff.axpy(-1.0, &expect);
                assert!(diff.norm() < 1e-10, "node {idx:?}: {t:?}");
            }
        }
        assert!(grad_of_sym_grad(&field(&g, |_| [1.0, 1.0]), &g)
            .iter()
            .all(|t| t.norm() == 0.0));
    }

    #[test]
    fn summation_by_parts_telescopes() {
        let g = Grid::<2>::new([5, 7], [0.0, -1.0], [2.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<Point<2>> = (0..g.num_nodes())
            .map(|n| {
                if g.is_boundary(n) {
                    [0.0, 0.0]
                } else {
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
                }
            })
            .collect();
        let div: Vec<f64> = sym_grad_with(&v, &g, BoundaryStencil::SummationByParts)
            .iter()
            .map(Mat::trace)
            .collect();
        assert!(integrate(&div, &g).abs() < 1e-14);
    }

    #[test]
    fn operators_are_linear() {
        let g = Grid::<2>::unit(6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rand_field = || -> Vec<Point<2>> {
            (0..g.num_nodes())
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect()
        };
        let (u, v) = (rand_field(), rand_field());
        let w: Vec<Point<2>> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| [2.0 * a[0] - 0.5 * b[0], 2.0 * a[1] - 0.5 * b[1]])
            .collect();
        let (gu, gv, gw) = (
            grad_of_sym_grad(&u, &g),
            grad_of_sym_grad(&v, &g),
            grad_of_sym_grad(&w, &g),
        );
        for i in 0..gw.len() {
            let mut t = gu[i].scale(2.0);
            t.axpy(-0.5, &gv[i]);
            t.axpy(-1.0, &gw[i]);
            assert!(t.norm() < 1e-10);
        }
    }

    #[test]
    fn sym_grad_converges_second_order() {
        let exact = |x: &Point<2>| {
            let (s, c) = (x[0] * 3.0, x[1] * 2.0);
            // v = (sin 3x cos 2y, cos 3x sin 2y)
            let dv0dx = 3.0 * s.cos() * c.cos();
            let dv0dy = -2.0 * s.sin() * c.sin();
            let dv1dx = -3.0 * s.sin() * c.sin();
            let dv1dy = 2.0 * s.cos() * c.cos();
            Mat([[dv0dx, 0.5 * (dv0dy + dv1dx)], [0.5 * (dv0dy + dv1dx), dv1dy]])
        };
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = Grid::<2>::unit(n);
                let v = field(&g, |x| {
                    [
                        (3.0 * x[0]).sin() * (2.0 * x[1]).cos(),
                        (3.0 * x[0]).cos() * (2.0 * x[1]).sin(),
                    ]
                });
                sym_grad(&v, &g)
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !g.is_boundary(*i))
                    .map(|(i, e)| (*e - exact(&g.position(i))).max_abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
        }
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = Grid::<2>::new([5, 6], [-1.0, 0.0], [1.0, 3.0]);
        let f: Vec<f64> = g.positions().iter().map(|x| 2.0 * x[0] - x[1] + 0.5).collect();
        for order in [Interpolation::Linear, Interpolation::Cubic] {
            for node in 0..g.num_nodes() {
                let x = g.position(node);
                assert!((interpolate(&f, &g, &x, order) - f[node]).abs() < 1e-13);
            }
            let p = [0.123, 2.71];
            let v = interpolate(&f, &g, &p, order);
            assert!((v - (2.0 * p[0] - p[1] + 0.5)).abs() < 1e-13);
        }
        // cell centre of a bilinear field is the corner average
        let xy: Vec<f64> = g.positions().iter().map(|x| x[0] * x[1]).collect();
        let c = [-1.0 + 0.2, 0.25];
        let avg = 0.25 * (-1.0 * 0.0 + -1.0 * 0.5 + -0.6 * 0.0 + -0.6 * 0.5);
        assert!((interpolate(&xy, &g, &c, Interpolation::Linear) - avg).abs() < 1e-14);
        // clamped outside the box
        let edge = interpolate(&f, &g, &[5.0, 1.0], Interpolation::Linear);
        assert!((edge - (2.0 - 1.0 + 0.5)).abs() < 1e-13);
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let g = Grid::<2>::unit(6);
        let p = |x: &Point<2>| x[0].powi(3) - 2.0 * x[0] * x[1] * x[1] + x[1].powi(3);
        let f: Vec<f64> = g.positions().iter().map(p).collect();
        for q in [[0.05, 0.97], [0.5, 0.5], [0.31, 0.12]] {
            assert!((interpolate(&f, &g, &q, Interpolation::Cubic) - p(&q)).abs() < 1e-13);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::<2>::unit(4);
        assert!((integrate(&vec![1.0; g.num_nodes()], &g) - 1.0).abs() < 1e-15);
        let g2 = Grid::<2>::new([4, 5], [0.0, 0.0], [2.0, 3.0]);
        assert!((integrate(&vec![1.5; g2.num_nodes()], &g2) - 9.0).abs() < 1e-14);
        let x: Vec<f64> = g.positions().iter().map(|p| p[0]).collect();
        assert!((integrate(&x, &g) - 0.5).abs() < 1e-15);
        let g3 = Grid::<3>::unit(4);
        assert!((integrate(&vec![1.0; g3.num_nodes()], &g3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vtk_header() {
        let g = Grid::<2>::unit(4);
        let mut dump = VtkDump::new(&g, "test");
        dump.scalars("J", &vec![1.0; 25]);
        let s = dump.finish();
        assert!(s.starts_with("# vtk DataFile Version 3.0\ntest\nASCII\nDATASET STRUCTURED_POINTS\n"));
        assert!(s.contains("DIMENSIONS 5 5 1\n"));
        assert!(s.contains("SPACING 0.25 0.25 1\n"));
        assert!(s.contains("POINT_DATA 25\nSCALARS J double 1\n"));
    }
}
