//! Per-step quasistatic momentum solve: find the velocity that makes the
//! discrete weak form vanish for every test field with zero boundary values.
//!
//! The discrete problem is the minimization of
//!
//! ```text
//! Phi_h(v) = sum_i w_i [ 1/2 D(e_i):e_i + nu/s |G_i|^s + T_i:e_i - f_i.v_i ]
//! ```
//!
//! with `e = sym grad v`, `G = grad e`, nodal trapezoid weights `w`, the cut-off
//! stress `T` and the forcing `f = det_eps(grad xi) rho_r g`. All derivatives
//! use the summation-by-parts closure so that a constant stress field
//! produces no residual against interior test fields.

use rayon::prelude::*;
use thiserror::Error;

use crate::constitutive::{det_eps, hyperstress, ConstitutiveError, MaterialSpec, Phase};
use crate::fields::{self, BoundaryStencil, Grid};
use crate::kinematics::{cofactor, Mat, Point, Tensor3};

/// Stencil closure used throughout the weak form.
pub const WEAK_FORM_STENCIL: BoundaryStencil = BoundaryStencil::SummationByParts;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    pub line_search: bool,
    /// Added to `|G|^(s-2)` in the hyperviscous Hessian.
    pub hessian_floor: f64,
    pub cg_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_abs: 1e-9,
            tol_rel: 1e-8,
            max_iters: 200,
            line_search: true,
            hessian_floor: 1e-12,
            cg_max_iters: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if !(self.tol_abs > 0.0) {
            v.push(("solver.tol_abs", "tol_abs must be positive".to_string()));
        }
        if !(self.tol_rel > 0.0) {
            v.push(("solver.tol_rel", "tol_rel must be positive".to_string()));
        }
        if self.max_iters == 0 {
            v.push(("solver.max_iters", "max_iters must be at least 1".to_string()));
        }
        if !(self.hessian_floor >= 0.0) {
            v.push((
                "solver.hessian_floor",
                "hessian_floor must be non-negative".to_string(),
            ));
        }
        if self.cg_max_iters == 0 {
            v.push(("solver.cg_max_iters", "cg_max_iters must be at least 1".to_string()));
        }
        v
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    /// Accepted Newton steps.
    pub iterations: usize,
    /// `|R|` at the initial guess and after every accepted step.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Residual norm at `v = 0`, the reference for `tol_rel`.
    pub initial_residual: f64,
    pub target: f64,
    pub cg_iterations: usize,
    /// Steps accepted by the energy line search after the residual one failed.
    pub fallback_steps: usize,
}

#[derive(Debug, Error)]
pub enum MomentumError {
    #[error("velocity solve did not converge after {} iterations (|R| = {:e}, target {:e})",
        .0.iterations, .0.residual_history.last().copied().unwrap_or(f64::NAN), .0.target)]
    NonConvergence(SolveReport),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
}

/// Everything the velocity solve needs, frozen at one return-map state.
#[derive(Clone, Debug)]
pub struct MomentumProblem<const D: usize> {
    pub grid: Grid<D>,
    pub weights: Vec<f64>,
    /// Return map the problem was built from.
    pub xi: Vec<Point<D>>,
    pub phase: Vec<Phase>,
    /// `grad xi` at each node.
    pub distortion: Vec<Mat<D>>,
    /// Regularized deformation gradient `Cof(grad xi)^T / det_eps(grad xi)`.
    pub deformation: Vec<Mat<D>>,
    pub det_grad: Vec<f64>,
    /// Referential density at `xi(x)`.
    pub density_ref: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Symmetrized cut-off stress.
    pub stress: Vec<Mat<D>>,
    pub forcing: Vec<Point<D>>,
    pub nu: f64,
    pub s_exp: f64,
    pub eps: f64,
    boundary: Vec<bool>,
}

impl<const D: usize> MomentumProblem<D> {
    pub fn new(
        grid: &Grid<D>,
        xi: &[Point<D>],
        spec: &MaterialSpec<D>,
    ) -> Result<Self, MomentumError> {
        let phases = xi
            .iter()
            .map(|x| spec.geometry.classify(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::with_phases(grid, xi, spec, phases))
    }

    /// Like [`MomentumProblem::new`] with externally supplied phase labels.
    pub fn with_phases(
        grid: &Grid<D>,
        xi: &[Point<D>],
        spec: &MaterialSpec<D>,
        phase: Vec<Phase>,
    ) -> Self {
        assert_eq!(xi.len(), grid.num_nodes());
        assert_eq!(phase.len(), grid.num_nodes());
        let eps = spec.eps;
        let distortion = fields::gradient(xi, grid);
        let n = grid.num_nodes();
        let per_node: Vec<_> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = distortion[i];
                let det = a.det();
                let de = det_eps(det, eps);
                let f = cofactor(&a).transpose().scale(1.0 / de);
                let sample = spec.sample(phase[i]);
                let stress = sample.regularized_stress(&f, eps).sym();
                let mut force = spec.gravity;
                for c in force.iter_mut() {
                    *c *= de * sample.density;
                }
                (f, det, sample, stress, force)
            })
            .collect();
        let mut p = Self {
            grid: grid.clone(),
            weights: grid.weights(),
            xi: xi.to_vec(),
            phase,
            distortion,
            deformation: Vec::with_capacity(n),
            det_grad: Vec::with_capacity(n),
            density_ref: Vec::with_capacity(n),
            mu: Vec::with_capacity(n),
            lambda: Vec::with_capacity(n),
            stress: Vec::with_capacity(n),
            forcing: Vec::with_capacity(n),
            nu: spec.nu,
            s_exp: spec.s_exp,
            eps,
            boundary: (0..n).map(|i| grid.is_boundary(i)).collect(),
        };
        for (f, det, sample, stress, force) in per_node {
            p.deformation.push(f);
            p.det_grad.push(det);
            p.density_ref.push(sample.density);
            p.mu.push(sample.mu);
            p.lambda.push(sample.lambda);
            p.stress.push(stress);
            p.forcing.push(force);
        }
        p
    }

    /// Problem assembled directly from nodal data (used by oracles).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: &Grid<D>,
        mu: Vec<f64>,
        lambda: Vec<f64>,
        stress: Vec<Mat<D>>,
        forcing: Vec<Point<D>>,
        nu: f64,
        s_exp: f64,
    ) -> Self {
        let n = grid.num_nodes();
        assert!(mu.len() == n && lambda.len() == n && stress.len() == n && forcing.len() == n);
        Self {
            grid: grid.clone(),
            weights: grid.weights(),
            xi: grid.positions(),
            phase: vec![Phase::Fluid; n],
            distortion: vec![Mat::identity(); n],
            deformation: vec![Mat::identity(); n],
            det_grad: vec![1.0; n],
            density_ref: vec![1.0; n],
            mu,
            lambda,
            stress: stress.iter().map(Mat::sym).collect(),
            forcing,
            nu,
            s_exp,
            eps: 0.0,
            boundary: (0..n).map(|i| grid.is_boundary(i)).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    /// Zero the boundary entries in place.
    pub fn constrain(&self, v: &mut [Point<D>]) {
        for (x, &b) in v.iter_mut().zip(&self.boundary) {
            if b {
                *x = [0.0; D];
            }
        }
    }

    /// Discrete `e(v)` and `grad e(v)`.
    pub fn strain(&self, v: &[Point<D>]) -> (Vec<Mat<D>>, Vec<Tensor3<D>>) {
        let e = fields::sym_grad_with(v, &self.grid, WEAK_FORM_STENCIL);
        let g = fields::grad_of_matrix_field(&e, &self.grid, WEAK_FORM_STENCIL);
        (e, g)
    }

    fn viscous(&self, i: usize, e: &Mat<D>) -> Mat<D> {
        e.scale(2.0 * self.mu[i]) + Mat::identity().scale(self.lambda[i] * e.trace())
    }

    /// Transpose of `v -> (e, G)` applied to `(e_bar, g_bar)`, with boundary
    /// rows removed.
    fn assemble(&self, mut e_bar: Vec<Mat<D>>, g_bar: Option<&[Tensor3<D>]>) -> Vec<Point<D>> {
        let grid = &self.grid;
        if let Some(gb) = g_bar {
            for a in 0..D {
                let slice: Vec<Mat<D>> = gb.iter().map(|t| Mat(t.0[a])).collect();
                fields::derivative_transpose(&slice, grid, a, WEAK_FORM_STENCIL, &mut e_bar);
            }
        }
        let mut out = vec![[0.0; D]; grid.num_nodes()];
        for a in 0..D {
            // column a of e_bar paired with d/dx_a
            let col: Vec<Point<D>> = e_bar
                .iter()
                .map(|m| std::array::from_fn(|b| m.0[b][a]))
                .collect();
            fields::derivative_transpose(&col, grid, a, WEAK_FORM_STENCIL, &mut out);
        }
        self.constrain(&mut out);
        out
    }

    /// Nodal dual vector of the weak-form mismatch: `R(v) . w` is the
    /// discrete weak form tested with `w` for every `w` vanishing on the
    /// boundary. Equals the gradient of [`MomentumProblem::functional`].
    pub fn weak_residual(&self, v: &[Point<D>]) -> Vec<Point<D>> {
        let (e, g) = self.strain(v);
        let e_bar: Vec<Mat<D>> = (0..e.len())
            .into_par_iter()
            .map(|i| (self.viscous(i, &e[i]) + self.stress[i]).scale(self.weights[i]))
            .collect();
        let g_bar: Option<Vec<Tensor3<D>>> = (self.nu != 0.0).then(|| {
            g.par_iter()
                .zip(&self.weights)
                .map(|(gi, w)| hyperstress(gi, self.nu, self.s_exp).scale(*w))
                .collect()
        });
        let mut r = self.assemble(e_bar, g_bar.as_deref());
        for (i, ri) in r.iter_mut().enumerate() {
            if !self.boundary[i] {
                for b in 0..D {
                    ri[b] -= self.weights[i] * self.forcing[i][b];
                }
            }
        }
        r
    }

    /// The discrete convex functional whose minimizer solves the step.
    pub fn functional(&self, v: &[Point<D>]) -> f64 {
        let (e, g) = self.strain(v);
        let mut total = 0.0;
        for i in 0..e.len() {
            let mut density = 0.5 * self.viscous(i, &e[i]).ddot(&e[i]) + self.stress[i].ddot(&e[i]);
            if self.nu != 0.0 {
                density += self.nu / self.s_exp * g[i].norm().powf(self.s_exp);
            }
            for b in 0..D {
                density -= self.forcing[i][b] * v[i][b];
            }
            total += self.weights[i] * density;
        }
        total
    }

    /// `int D(e):e + nu |grad e|^s`.
    pub fn dissipation(&self, v: &[Point<D>]) -> f64 {
        let (e, g) = self.strain(v);
        let mut total = 0.0;
        for i in 0..e.len() {
            let mut d = self.viscous(i, &e[i]).ddot(&e[i]);
            if self.nu != 0.0 {
                d += self.nu * g[i].norm().powf(self.s_exp);
            }
            total += self.weights[i] * d;
        }
        total
    }

    /// `int f . v`.
    pub fn forcing_power(&self, v: &[Point<D>]) -> f64 {
        let mut total = 0.0;
        for i in 0..v.len() {
            let fv: f64 = (0..D).map(|b| self.forcing[i][b] * v[i][b]).sum();
            total += self.weights[i] * fv;
        }
        total
    }

    /// `int T : e(v)`.
    pub fn stress_power(&self, v: &[Point<D>]) -> f64 {
        let e = fields::sym_grad_with(v, &self.grid, WEAK_FORM_STENCIL);
        (0..e.len())
            .map(|i| self.weights[i] * self.stress[i].ddot(&e[i]))
            .sum()
    }

    /// Hessian of the functional at a state with hyper-gradient `g`,
    /// applied to `dv`.
    pub fn hessian_vec(&self, g: &[Tensor3<D>], dv: &[Point<D>], floor: f64) -> Vec<Point<D>> {
        let (de, dg) = self.strain(dv);
        let e_bar: Vec<Mat<D>> = (0..de.len())
            .map(|i| self.viscous(i, &de[i]).scale(self.weights[i]))
            .collect();
        let g_bar: Option<Vec<Tensor3<D>>> = (self.nu != 0.0).then(|| {
            (0..dg.len())
                .into_par_iter()
                .map(|i| {
                    let s = self.s_exp;
                    let gi = &g[i];
                    let n = gi.norm();
                    let mut out = dg[i].scale(self.nu * n.powf(s - 2.0) + floor);
                    if n > 0.0 {
                        let c = self.nu * (s - 2.0) * n.powf(s - 4.0) * gi.dot3(&dg[i]);
                        out.axpy(c, gi);
                    }
                    out.scale(self.weights[i])
                })
                .collect()
        });
        self.assemble(e_bar, g_bar.as_deref())
    }

    /// Exact Hessian diagonal by probing: all couplings reach at most four
    /// nodes per axis, so nodes five apart never interact.
    fn hessian_diagonal(&self, g: &[Tensor3<D>], floor: f64) -> Vec<Point<D>> {
        const STRIDE: usize = 5;
        let n = self.num_nodes();
        let mut diag = vec![[1.0; D]; n];
        let colors = STRIDE.pow(D as u32);
        let idx: Vec<[usize; D]> = (0..n).map(|i| self.grid.multi_index(i)).collect();
        let color_of = |k: usize| -> usize {
            let mut c = 0;
            for a in (0..D).rev() {
                c = c * STRIDE + idx[k][a] % STRIDE;
            }
            c
        };
        let node_color: Vec<usize> = (0..n).map(color_of).collect();
        for color in 0..colors {
            for b in 0..D {
                let mut probe = vec![[0.0; D]; n];
                let mut any = false;
                for k in 0..n {
                    if node_color[k] == color && !self.boundary[k] {
                        probe[k][b] = 1.0;
                        any = true;
                    }
                }
                if !any {
                    continue;
                }
                let hp = self.hessian_vec(g, &probe, floor);
                for k in 0..n {
                    if node_color[k] == color && !self.boundary[k] {
                        diag[k][b] = hp[k][b];
                    }
                }
            }
        }
        diag
    }
}

pub fn dot<const D: usize>(a: &[Point<D>], b: &[Point<D>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (0..D).map(|k| x[k] * y[k]).sum::<f64>())
        .sum()
}

pub fn norm<const D: usize>(a: &[Point<D>]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sup_norm<const D: usize>(a: &[Point<D>]) -> f64 {
    a.iter()
        .flat_map(|x| x.iter())
        .fold(0.0_f64, |m, c| m.max(c.abs()))
}

fn axpy<const D: usize>(y: &mut [Point<D>], a: f64, x: &[Point<D>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        for k in 0..D {
            yi[k] += a * xi[k];
        }
    }
}

fn combine<const D: usize>(v: &[Point<D>], a: f64, d: &[Point<D>]) -> Vec<Point<D>> {
    let mut out = v.to_vec();
    axpy(&mut out, a, d);
    out
}

/// Preconditioned CG on `H x = b`; returns `(x, iterations)`.
fn pcg<const D: usize>(
    apply: impl Fn(&[Point<D>]) -> Vec<Point<D>>,
    b: &[Point<D>],
    diag: &[Point<D>],
    tol: f64,
    max_iters: usize,
) -> (Vec<Point<D>>, usize) {
    let n = b.len();
    let precond = |r: &[Point<D>]| -> Vec<Point<D>> {
        r.iter()
            .zip(diag)
            .map(|(ri, di)| std::array::from_fn(|k| ri[k] / di[k]))
            .collect()
    };
    let mut x = vec![[0.0; D]; n];
    let mut r = b.to_vec();
    if norm(&r) <= tol {
        return (x, 0);
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        let hp = apply(&p);
        let php = dot(&p, &hp);
        if !(php > 0.0) {
            return (x, it);
        }
        let alpha = rz / php;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &hp);
        if norm(&r) <= tol {
            return (x, it);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            for k in 0..D {
                pi[k] = zi[k] + beta * pi[k];
            }
        }
    }
    (x, max_iters)
}

/// Damped Newton on the discrete weak form starting from zero.
pub fn solve_velocity<const D: usize>(
    prob: &MomentumProblem<D>,
    cfg: &SolverConfig,
) -> Result<(Vec<Point<D>>, SolveReport), MomentumError> {
    solve_velocity_from(prob, cfg, &vec![[0.0; D]; prob.num_nodes()])
}

/// Damped Newton from an initial guess. The stopping target is
/// `tol_abs + tol_rel |R(0)|` regardless of the guess.
pub fn solve_velocity_from<const D: usize>(
    prob: &MomentumProblem<D>,
    cfg: &SolverConfig,
    guess: &[Point<D>],
) -> Result<(Vec<Point<D>>, SolveReport), MomentumError> {
    let zero = vec![[0.0; D]; prob.num_nodes()];
    let r0 = norm(&prob.weak_residual(&zero));
    let target = cfg.tol_abs + cfg.tol_rel * r0;
    let mut v = guess.to_vec();
    prob.constrain(&mut v);
    let mut r = prob.weak_residual(&v);
    let mut rn = norm(&r);
    let mut report = SolveReport {
        residual_history: vec![rn],
        initial_residual: r0,
        target,
        ..SolveReport::default()
    };
    while rn > target {
        if report.iterations >= cfg.max_iters {
            return Err(MomentumError::NonConvergence(report));
        }
        let (_, g) = prob.strain(&v);
        let diag = prob.hessian_diagonal(&g, cfg.hessian_floor);
        let eta = (0.5 * target / rn).clamp(1e-12, 0.1);
        let rhs: Vec<Point<D>> = r.iter().map(|x| x.map(|c| -c)).collect();
        let (step, cg_its) = pcg(
            |p| prob.hessian_vec(&g, p, cfg.hessian_floor),
            &rhs,
            &diag,
            eta * rn,
            cfg.cg_max_iters,
        );
        report.cg_iterations += cg_its;

        let mut accepted = None;
        if cfg.line_search {
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial = combine(&v, alpha, &step);
                let rt = prob.weak_residual(&trial);
                let rtn = norm(&rt);
                if rtn <= (1.0 - 1e-4 * alpha) * rn {
                    accepted = Some((trial, rt, rtn));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_none() {
                accepted = energy_line_search(prob, &v, &r, &step);
                if accepted.is_some() {
                    report.fallback_steps += 1;
                }
            }
        } else {
            let trial = combine(&v, 1.0, &step);
            let rt = prob.weak_residual(&trial);
            let rtn = norm(&rt);
            accepted = Some((trial, rt, rtn));
        }
        let Some((nv, nr, nrn)) = accepted else {
            return Err(MomentumError::NonConvergence(report));
        };
        v = nv;
        r = nr;
        rn = nrn;
        report.iterations += 1;
        report.residual_history.push(rn);
    }
    report.converged = true;
    Ok((v, report))
}

/// Armijo backtracking on `Phi_h` along `dir`, or along `-R` when `dir` is
/// not a descent direction.
#[allow(clippy::type_complexity)]
fn energy_line_search<const D: usize>(
    prob: &MomentumProblem<D>,
    v: &[Point<D>],
    r: &[Point<D>],
    dir: &[Point<D>],
) -> Option<(Vec<Point<D>>, Vec<Point<D>>, f64)> {
    let phi0 = prob.functional(v);
    let mut slope = dot(r, dir);
    let neg_grad: Vec<Point<D>>;
    let d = if slope < 0.0 {
        dir
    } else {
        neg_grad = r.iter().map(|x| x.map(|c| -c)).collect();
        slope = -dot(r, r);
        &neg_grad
    };
    let mut alpha = 1.0;
    for _ in 0..60 {
        let trial = combine(v, alpha, d);
        let phi = prob.functional(&trial);
        if phi <= phi0 + 1e-4 * alpha * slope && phi < phi0 {
            let rt = prob.weak_residual(&trial);
            let rtn = norm(&rt);
            return Some((trial, rt, rtn));
        }
        alpha *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{FluidParams, PhaseGeometry, Region, SolidParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fluid_spec(g: Point<2>) -> MaterialSpec<2> {
        MaterialSpec {
            solid: SolidParams::default(),
            fluid: FluidParams::default(),
            nu: 1e-3,
            s_exp: 4.0,
            eps: 0.1,
            gravity: g,
            geometry: PhaseGeometry {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
                solids: vec![],
            },
        }
    }

    fn identity_map(grid: &Grid<2>) -> Vec<Point<2>> {
        grid.positions()
    }

    fn random_interior(grid: &Grid<2>, seed: u64) -> Vec<Point<2>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..grid.num_nodes())
            .map(|i| {
                if grid.is_boundary(i) {
                    [0.0, 0.0]
                } else {
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
                }
            })
            .collect()
    }

    #[test]
    fn constant_pressure_has_no_residual() {
        let grid = Grid::<2>::unit(8);
        let prob = MomentumProblem::new(&grid, &identity_map(&grid), &fluid_spec([0.0, 0.0])).unwrap();
        assert!(prob.stress.iter().all(|t| (*t + Mat::identity()).max_abs() < 1e-12));
        let r = prob.weak_residual(&vec![[0.0; 2]; grid.num_nodes()]);
        assert!(sup_norm(&r) < 1e-13, "{}", sup_norm(&r));
    }

    #[test]
    fn stress_free_solid_has_no_residual() {
        let grid = Grid::<2>::unit(8);
        let mut spec = fluid_spec([0.0, 0.0]);
        spec.solid.model = crate::constitutive::SolidModel::NeoHookean;
        spec.geometry.solids.push(Region::Box {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        });
        let prob = MomentumProblem::new(&grid, &identity_map(&grid), &spec).unwrap();
        let r = prob.weak_residual(&vec![[0.0; 2]; grid.num_nodes()]);
        assert!(sup_norm(&r) < 1e-14);
        let (v, rep) = solve_velocity(&prob, &SolverConfig::default()).unwrap();
        assert!(rep.iterations <= 1);
        assert!(sup_norm(&v) == 0.0);
    }

    #[test]
    fn residual_is_gradient_of_functional() {
        let grid = Grid::<2>::unit(6);
        let mut spec = fluid_spec([0.3, -1.0]);
        spec.geometry.solids.push(Region::Ball {
            center: [0.5, 0.5],
            radius: 0.3,
        });
        let xi: Vec<Point<2>> = grid
            .positions()
            .iter()
            .map(|x| [x[0] + 0.05 * (3.0 * x[1]).sin() * x[0] * (1.0 - x[0]), x[1]])
            .collect();
        for nu in [0.0, 0.3] {
            spec.nu = nu;
            let mut prob = MomentumProblem::new(&grid, &xi, &spec).unwrap();
            prob.nu = nu;
            let v = random_interior(&grid, 7);
            let r = prob.weak_residual(&v);
            // central differences are exact on the quadratic functional
            let h = if nu == 0.0 { 1e-2 } else { 1e-5 };
            let mut worst: f64 = 0.0;
            for i in 0..grid.num_nodes() {
                if grid.is_boundary(i) {
                    assert_eq!(r[i], [0.0, 0.0]);
                    continue;
                }
                for b in 0..2 {
                    let mut vp = v.clone();
                    let mut vm = v.clone();
                    vp[i][b] += h;
                    vm[i][b] -= h;
                    let fd = (prob.functional(&vp) - prob.functional(&vm)) / (2.0 * h);
                    worst = worst.max((fd - r[i][b]).abs());
                }
            }
            // the quartic term is checked relative to the residual scale
            let tol = if nu == 0.0 { 1e-10 } else { 1e-8 * sup_norm(&r) };
            assert!(worst < tol, "nu {nu}: {worst}");
        }
    }

    #[test]
    fn hessian_matches_residual_differences() {
        let grid = Grid::<2>::unit(6);
        let mut spec = fluid_spec([0.0, -1.0]);
        spec.nu = 0.5;
        let prob = MomentumProblem::new(&grid, &identity_map(&grid), &spec).unwrap();
        let v = random_interior(&grid, 3);
        let dv = random_interior(&grid, 4);
        let (_, g) = prob.strain(&v);
        let hv = prob.hessian_vec(&g, &dv, 0.0);
        let h = 1e-6;
        let rp = prob.weak_residual(&combine(&v, h, &dv));
        let rm = prob.weak_residual(&combine(&v, -h, &dv));
        let fd: Vec<Point<2>> = rp
            .iter()
            .zip(&rm)
            .map(|(a, b)| [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)])
            .collect();
        let mut diff = fd.clone();
        axpy(&mut diff, -1.0, &hv);
        assert!(norm(&diff) < 1e-6 * norm(&hv), "{} vs {}", norm(&diff), norm(&hv));
        // probed diagonal equals explicit unit-vector products
        let diag = prob.hessian_diagonal(&g, 0.0);
        for node in [8, 15, 24] {
            for b in 0..2 {
                let mut unit = vec![[0.0; 2]; grid.num_nodes()];
                unit[node][b] = 1.0;
                let col = prob.hessian_vec(&g, &unit, 0.0);
                assert!((col[node][b] - diag[node][b]).abs() < 1e-12 * col[node][b].abs());
            }
        }
    }

    #[test]
    fn gravity_on_fluid_converges_monotonically() {
        let grid = Grid::<2>::unit(12);
        let prob = MomentumProblem::new(&grid, &identity_map(&grid), &fluid_spec([0.0, -1.0])).unwrap();
        let (v, rep) = solve_velocity(&prob, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(sup_norm(&v) > 1e-4);
        assert!(*rep.residual_history.last().unwrap() < 1e-9);
        for w in rep.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        for i in 0..grid.num_nodes() {
            if grid.is_boundary(i) {
                assert_eq!(v[i], [0.0, 0.0]);
            }
        }
        // testing with v itself
        let lhs = prob.dissipation(&v);
        let rhs = prob.forcing_power(&v) - prob.stress_power(&v);
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} {rhs}");
        assert!(lhs > 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let grid = Grid::<2>::unit(8);
        let prob = MomentumProblem::new(&grid, &identity_map(&grid), &fluid_spec([0.0, -1.0])).unwrap();
        let cfg = SolverConfig {
            max_iters: 1,
            tol_abs: 1e-300,
            tol_rel: 1e-300,
            ..SolverConfig::default()
        };
        match solve_velocity(&prob, &cfg) {
            Err(MomentumError::NonConvergence(rep)) => {
                assert_eq!(rep.iterations, 1);
                assert!(!rep.converged);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn initial_guess_does_not_matter() {
        let grid = Grid::<2>::unit(10);
        let mut spec = fluid_spec([0.2, -1.0]);
        spec.geometry.solids.push(Region::Ball {
            center: [0.5, 0.6],
            radius: 0.2,
        });
        spec.nu = 0.05;
        let prob = MomentumProblem::new(&grid, &identity_map(&grid), &spec).unwrap();
        let cfg = SolverConfig::default();
        let (a, ra) = solve_velocity(&prob, &cfg).unwrap();
        let guess: Vec<Point<2>> = random_interior(&grid, 11).iter().map(|x| [x[0] * 0.3, x[1] * 0.3]).collect();
        let (b, _) = solve_velocity_from(&prob, &cfg, &guess).unwrap();
        let mut d = a.clone();
        axpy(&mut d, -1.0, &b);
        // residual target translates into a velocity bound through the Hessian
        assert!(sup_norm(&d) < 10.0 * ra.target / prob.weights[grid.num_nodes() / 2], "{}", sup_norm(&d));
    }
}
