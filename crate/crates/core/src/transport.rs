//! Semi-Lagrangian advection of the return map, `d xi/dt + (v . grad) xi = 0`.

use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{self, Grid, Interpolation};
use crate::kinematics::{Mat, Point};

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("courant number {courant:.3} exceeds cfl_max = {limit}")]
    CflViolation { courant: f64, limit: f64 },
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportConfig {
    pub cfl_max: f64,
    pub interpolation: Interpolation,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            cfl_max: 5.0,
            interpolation: Interpolation::Linear,
        }
    }
}

/// The return map sampled at grid nodes, together with its time.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnMapField<const D: usize> {
    pub xi: Vec<Point<D>>,
    pub t: f64,
}

impl<const D: usize> ReturnMapField<D> {
    /// `xi(x) = x` at `t = 0`.
    pub fn identity(grid: &Grid<D>) -> Self {
        Self {
            xi: grid.positions(),
            t: 0.0,
        }
    }
}

/// `dt max|v| / min h`.
pub fn courant_number<const D: usize>(grid: &Grid<D>, v: &[Point<D>], dt: f64) -> f64 {
    let vmax = v
        .iter()
        .map(|x| x.iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    dt * vmax / grid.min_spacing()
}

/// Foot of the characteristic through `x` traced back over `dt` (midpoint
/// rule), clamped into the box.
pub fn backtrace<const D: usize>(
    grid: &Grid<D>,
    v: &[Point<D>],
    node: usize,
    dt: f64,
    order: Interpolation,
) -> Point<D> {
    let x = grid.position(node);
    let v1 = v[node];
    let mid: Point<D> = std::array::from_fn(|k| x[k] - 0.5 * dt * v1[k]);
    let v2 = fields::interpolate(v, grid, &mid, order);
    grid.clamp(&std::array::from_fn(|k| x[k] - dt * v2[k]))
}

/// One semi-Lagrangian step. Boundary nodes keep their values.
pub fn advect<const D: usize>(
    field: &ReturnMapField<D>,
    grid: &Grid<D>,
    v: &[Point<D>],
    dt: f64,
    cfg: &TransportConfig,
) -> Result<ReturnMapField<D>, TransportError> {
    if !(dt > 0.0) {
        return Err(TransportError::BadTimeStep(dt));
    }
    let courant = courant_number(grid, v, dt);
    if courant > cfg.cfl_max {
        return Err(TransportError::CflViolation {
            courant,
            limit: cfg.cfl_max,
        });
    }
    let xi = (0..grid.num_nodes())
        .into_par_iter()
        .map(|i| {
            if grid.is_boundary(i) {
                return field.xi[i];
            }
            let foot = backtrace(grid, v, i, dt, cfg.interpolation);
            if foot == grid.position(i) {
                return field.xi[i];
            }
            fields::interpolate(&field.xi, grid, &foot, cfg.interpolation)
        })
        .collect();
    Ok(ReturnMapField {
        xi,
        t: field.t + dt,
    })
}

/// The distortion `grad xi`.
pub fn gradient_of_return_map<const D: usize>(xi: &[Point<D>], grid: &Grid<D>) -> Vec<Mat<D>> {
    fields::gradient(xi, grid)
}

/// Independent estimate of `F` after one step of `dF/dt = (grad v) F` along
/// characteristics: `F(x) <- (I + dt L + dt^2 L^2 / 2) F(foot)`, `L = grad v(x)`.
/// Diagnostic only.
pub fn cross_check_f_evolution<const D: usize>(
    f_prev: &[Mat<D>],
    grid: &Grid<D>,
    v: &[Point<D>],
    dt: f64,
    order: Interpolation,
) -> Vec<Mat<D>> {
    let l = fields::gradient(v, grid);
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|i| {
            let foot = backtrace(grid, v, i, dt, order);
            let f_foot = fields::interpolate(f_prev, grid, &foot, order);
            let li = l[i];
            let prop = Mat::identity() + li.scale(dt) + li.matmul(&li).scale(0.5 * dt * dt);
            prop.matmul(&f_foot)
        })
        .collect()
}
