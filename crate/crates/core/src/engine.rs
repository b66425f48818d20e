//! Coupled time loop: velocity solve, return-map transport, energy audit.

use rayon::prelude::*;
use thiserror::Error;

use crate::constitutive::{cutoff_pi, det_eps, MaterialSpec, Phase};
use crate::fields::{self, Grid, Interpolation};
use crate::kinematics::Point;
use crate::momentum::{solve_velocity_from, MomentumError, MomentumProblem, SolverConfig};
use crate::transport::{advect, ReturnMapField, TransportConfig, TransportError};

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingConfig {
    pub picard_iters: usize,
    pub picard_tol: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            picard_iters: 1,
            picard_tol: 1e-10,
        }
    }
}

/// Everything a run needs, resolved to a fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig<const D: usize> {
    pub grid: Grid<D>,
    pub material: MaterialSpec<D>,
    pub solver: SolverConfig,
    pub transport: TransportConfig,
    pub coupling: CouplingConfig,
    pub dt: f64,
    pub n_steps: usize,
    /// Field dump period in steps; 0 disables dumps.
    pub dump_every: usize,
    /// Sub-samples per axis for the phase indicator in the stored energy.
    pub audit_subsamples: usize,
}

#[derive(Debug, Error)]
pub enum StepCause {
    #[error(transparent)]
    Momentum(#[from] MomentumError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("det grad xi = {detgrad_min:e} at node {node} after transport")]
    Interpenetration { detgrad_min: f64, node: usize },
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("step {step} failed: {cause}")]
    StepFailure {
        step: usize,
        #[source]
        cause: StepCause,
    },
    #[error("interpenetration detected: det grad xi = {detgrad_min:e} at node {node}")]
    InterpenetrationDetected { detgrad_min: f64, node: usize },
    #[error("cannot set up the momentum problem: {0}")]
    Setup(#[source] MomentumError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

/// Evolved state plus everything derived from it.
#[derive(Clone, Debug)]
pub struct SimState<const D: usize> {
    pub field: ReturnMapField<D>,
    pub step: usize,
    /// Kinematics, phases and stresses at `field`.
    pub problem: MomentumProblem<D>,
    /// Last solved velocity (warm start for the next solve).
    pub velocity: Vec<Point<D>>,
}

impl<const D: usize> SimState<D> {
    pub fn new(
        field: ReturnMapField<D>,
        grid: &Grid<D>,
        material: &MaterialSpec<D>,
    ) -> Result<Self, MomentumError> {
        let problem = MomentumProblem::new(grid, &field.xi, material)?;
        Ok(Self {
            field,
            step: 0,
            problem,
            velocity: vec![[0.0; D]; grid.num_nodes()],
        })
    }

    pub fn initial(cfg: &SimConfig<D>) -> Result<Self, MomentumError> {
        Self::new(ReturnMapField::identity(&cfg.grid), &cfg.grid, &cfg.material)
    }
}

/// One row of the energy log.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    /// `int pi_eps phi / det_eps F` at the start of the step.
    pub stored: f64,
    pub stored_next: f64,
    pub dissipation_rate: f64,
    pub gravity_power: f64,
    pub balance_residual: f64,
    pub pi_min: f64,
    pub detgrad_min: f64,
    pub solver_iterations: usize,
    /// Same integral without cut-off, only when the cut-off is inactive.
    pub stored_unregularized: Option<f64>,
    /// Share of nodes whose phase label changed over the step.
    pub phase_change_fraction: f64,
}

pub const CSV_HEADER: &str =
    "t,stored,dissipation_rate,gravity_power,balance_residual,pi_min,detgrad_min,solver_iterations";

impl EnergyReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t,
            self.stored,
            self.dissipation_rate,
            self.gravity_power,
            self.balance_residual,
            self.pi_min,
            self.detgrad_min,
            self.solver_iterations
        )
    }
}

/// Outcome of the cut-off activity check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorFlags {
    pub pi_min: f64,
    pub detgrad_min: f64,
    pub cutoff_active: bool,
}

/// `min pi_eps(F)` over nodes.
pub fn pi_min<const D: usize>(prob: &MomentumProblem<D>) -> f64 {
    prob.deformation
        .iter()
        .map(|f| cutoff_pi(f, prob.eps))
        .fold(f64::INFINITY, f64::min)
}

fn detgrad_min<const D: usize>(prob: &MomentumProblem<D>) -> (f64, usize) {
    prob.det_grad
        .iter()
        .copied()
        .enumerate()
        .fold((f64::INFINITY, 0), |(m, k), (i, d)| if d < m { (d, i) } else { (m, k) })
}

/// Warns when the cut-off is active anywhere, fails on a non-positive
/// `det grad xi`.
pub fn regularization_monitor<const D: usize>(
    prob: &MomentumProblem<D>,
) -> Result<MonitorFlags, EngineError> {
    let (dmin, node) = detgrad_min(prob);
    if !(dmin > 0.0) {
        return Err(EngineError::InterpenetrationDetected {
            detgrad_min: dmin,
            node,
        });
    }
    let pmin = pi_min(prob);
    let cutoff_active = pmin < 1.0;
    if cutoff_active {
        log::warn!("cut-off active: min pi_eps = {pmin}, eps = {}", prob.eps);
    }
    Ok(MonitorFlags {
        pi_min: pmin,
        detgrad_min: dmin,
        cutoff_active,
    })
}

/// Solid share of the trapezoid cell of every node: `m^D` samples of the
/// interpolated return map, each weighted by a linear ramp of the signed
/// distance over one sample spacing. The ramp makes the share continuous
/// in time as the interface crosses samples. `m = 0` returns the nodal
/// phase labels.
pub fn solid_fraction<const D: usize>(
    prob: &MomentumProblem<D>,
    material: &MaterialSpec<D>,
    m: usize,
) -> Vec<f64> {
    if m == 0 {
        return prob
            .phase
            .iter()
            .map(|p| if *p == Phase::Solid { 1.0 } else { 0.0 })
            .collect();
    }
    let grid = &prob.grid;
    let hi = grid.upper();
    let samples = m.pow(D as u32);
    let width = grid.min_spacing() / m as f64;
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|i| {
            let x = grid.position(i);
            let lo: Point<D> =
                std::array::from_fn(|k| (x[k] - 0.5 * grid.spacing[k]).max(grid.origin[k]));
            let up: Point<D> =
                std::array::from_fn(|k| (x[k] + 0.5 * grid.spacing[k]).min(hi[k]));
            let mut solid = 0.0;
            for s in 0..samples {
                let mut rem = s;
                let mut p = [0.0; D];
                for k in 0..D {
                    let j = rem % m;
                    rem /= m;
                    p[k] = lo[k] + (j as f64 + 0.5) / m as f64 * (up[k] - lo[k]);
                }
                let xi = fields::interpolate(&prob.xi, grid, &p, Interpolation::Linear);
                let sd = material.geometry.signed_distance(&xi);
                solid += (0.5 - sd / width).clamp(0.0, 1.0);
            }
            solid / samples as f64
        })
        .collect()
}

/// `int pi_eps phi(F) / det_eps(F)`, and the plain `int phi(F) / det F`
/// when the cut-off is nowhere active. The phase indicator is integrated
/// with `m^D` sub-samples per node cell.
pub fn stored_energy<const D: usize>(
    prob: &MomentumProblem<D>,
    material: &MaterialSpec<D>,
    m: usize,
) -> (f64, Option<f64>) {
    let eps = prob.eps;
    let chi = solid_fraction(prob, material, m);
    let solid = material.sample(Phase::Solid);
    let fluid = material.sample(Phase::Fluid);
    let mut reg = 0.0;
    let mut plain = Some(0.0);
    for (i, f) in prob.deformation.iter().enumerate() {
        let w = prob.weights[i];
        let pi = cutoff_pi(f, eps);
        if pi > 0.0 {
            // pi > 0 implies det F > eps / 2
            let mut phi = 0.0;
            if chi[i] > 0.0 {
                phi += chi[i] * solid.stored_energy(f).expect("positive determinant");
            }
            if chi[i] < 1.0 {
                phi += (1.0 - chi[i]) * fluid.stored_energy(f).expect("positive determinant");
            }
            reg += w * pi * phi / det_eps(f.det(), eps);
            if pi == 1.0 {
                plain = plain.map(|s| s + w * phi / f.det());
            } else {
                plain = None;
            }
        } else {
            plain = None;
        }
    }
    (reg, plain)
}

/// `int rho_r g . v / det_eps F`.
pub fn gravity_power<const D: usize>(
    prob: &MomentumProblem<D>,
    material: &MaterialSpec<D>,
    v: &[Point<D>],
) -> f64 {
    let g = material.gravity;
    let mut total = 0.0;
    for (i, f) in prob.deformation.iter().enumerate() {
        let gv: f64 = (0..D).map(|k| g[k] * v[i][k]).sum();
        total += prob.weights[i] * prob.density_ref[i] * gv / det_eps(f.det(), prob.eps);
    }
    total
}

/// Terms of the discrete energy balance over one step from `before` to
/// `after` with velocity `v`, solved on `solved`.
pub fn energy_audit<const D: usize>(
    before: &MomentumProblem<D>,
    solved: &MomentumProblem<D>,
    after: &MomentumProblem<D>,
    material: &MaterialSpec<D>,
    v: &[Point<D>],
    t: f64,
    dt: f64,
    subsamples: usize,
) -> EnergyReport {
    let (stored, stored_unregularized) = stored_energy(before, material, subsamples);
    let (stored_next, _) = stored_energy(after, material, subsamples);
    let dissipation_rate = solved.dissipation(v);
    let gravity = gravity_power(solved, material, v);
    let changed = before
        .phase
        .iter()
        .zip(&after.phase)
        .filter(|(a, b)| a != b)
        .count();
    EnergyReport {
        t,
        stored,
        stored_next,
        dissipation_rate,
        gravity_power: gravity,
        balance_residual: (stored_next - stored) / dt + dissipation_rate - gravity,
        pi_min: pi_min(before),
        detgrad_min: detgrad_min(before).0,
        solver_iterations: 0,
        stored_unregularized,
        phase_change_fraction: changed as f64 / before.phase.len() as f64,
    }
}

/// Per-step diagnostics beyond the energy report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// `|v_k - v_(k-1)|_inf` for each Picard sweep after the first.
    pub picard_gaps: Vec<f64>,
    pub cg_iterations: usize,
}

/// Advance one step: Picard sweeps of (solve at current candidate, advect
/// from the start-of-step map), then the audit.
pub fn step<const D: usize>(
    state: &SimState<D>,
    cfg: &SimConfig<D>,
) -> Result<(SimState<D>, EnergyReport, StepInfo), EngineError> {
    let fail = |cause: StepCause| EngineError::StepFailure {
        step: state.step,
        cause,
    };
    let mut info = StepInfo::default();
    let mut iterations = 0;
    let mut solved_on = state.problem.clone();
    let mut v_prev: Option<Vec<Point<D>>> = None;
    let mut guess = state.velocity.clone();
    let mut result = None;
    for k in 0..cfg.coupling.picard_iters.max(1) {
        if k > 0 {
            let (cand, _) = result.as_ref().expect("previous sweep");
            let cand: &ReturnMapField<D> = cand;
            solved_on = MomentumProblem::new(&cfg.grid, &cand.xi, &cfg.material)
                .map_err(|e| fail(e.into()))?;
        }
        let (v, rep) = solve_velocity_from(&solved_on, &cfg.solver, &guess)
            .map_err(|e| fail(e.into()))?;
        iterations += rep.iterations;
        info.cg_iterations += rep.cg_iterations;
        let cand = advect(&state.field, &cfg.grid, &v, cfg.dt, &cfg.transport)
            .map_err(|e| fail(e.into()))?;
        let gap = v_prev.as_ref().map(|p| {
            p.iter()
                .zip(&v)
                .flat_map(|(a, b)| (0..D).map(move |c| (a[c] - b[c]).abs()))
                .fold(0.0, f64::max)
        });
        guess = v.clone();
        v_prev = Some(v.clone());
        result = Some((cand, v));
        if let Some(gap) = gap {
            info.picard_gaps.push(gap);
            if gap <= cfg.coupling.picard_tol {
                break;
            }
        }
    }
    let (field, v) = result.expect("at least one sweep");
    let after = MomentumProblem::new(&cfg.grid, &field.xi, &cfg.material)
        .map_err(|e| fail(e.into()))?;
    let (dmin, node) = detgrad_min(&after);
    if !(dmin > 0.0) {
        return Err(fail(StepCause::Interpenetration {
            detgrad_min: dmin,
            node,
        }));
    }
    let mut report = energy_audit(
        &state.problem,
        &solved_on,
        &after,
        &cfg.material,
        &v,
        state.field.t,
        cfg.dt,
        cfg.audit_subsamples,
    );
    report.solver_iterations = iterations;
    let next = SimState {
        field,
        step: state.step + 1,
        problem: after,
        velocity: v,
    };
    Ok((next, report, info))
}

/// Receives the trajectory as it is produced.
pub trait RunObserver<const D: usize> {
    fn on_step(
        &mut self,
        _before: &SimState<D>,
        _report: &EnergyReport,
        _after: &SimState<D>,
    ) -> std::io::Result<()> {
        Ok(())
    }

    fn on_failure(&mut self, _state: &SimState<D>, _error: &EngineError) -> std::io::Result<()> {
        Ok(())
    }
}

/// Observer that keeps nothing.
pub struct NoOutput;

impl<const D: usize> RunObserver<D> for NoOutput {}

#[derive(Clone, Debug)]
pub struct RunSummary<const D: usize> {
    pub reports: Vec<EnergyReport>,
    pub final_state: SimState<D>,
    pub cutoff_warnings: usize,
}

/// Run `cfg.n_steps` steps from the identity map.
pub fn run<const D: usize>(
    cfg: &SimConfig<D>,
    observer: &mut dyn RunObserver<D>,
) -> Result<RunSummary<D>, EngineError> {
    let mut state = SimState::initial(cfg).map_err(EngineError::Setup)?;
    let mut reports = Vec::with_capacity(cfg.n_steps);
    let mut cutoff_warnings = 0;
    for _ in 0..cfg.n_steps {
        let flags = match regularization_monitor(&state.problem) {
            Ok(f) => f,
            Err(e) => {
                observer.on_failure(&state, &e)?;
                return Err(e);
            }
        };
        if flags.cutoff_active {
            cutoff_warnings += 1;
        }
        match step(&state, cfg) {
            Ok((next, report, _)) => {
                observer.on_step(&state, &report, &next)?;
                reports.push(report);
                state = next;
            }
            Err(e) => {
                observer.on_failure(&state, &e)?;
                return Err(e);
            }
        }
    }
    Ok(RunSummary {
        reports,
        final_state: state,
        cutoff_warnings,
    })
}

/// Nodes that have a neighbour (one step along an axis) of the other phase.
pub fn interface_nodes<const D: usize>(grid: &Grid<D>, phase: &[Phase]) -> Vec<bool> {
    (0..grid.num_nodes())
        .map(|i| {
            let idx = grid.multi_index(i);
            (0..D).any(|a| {
                let s = grid.stride(a);
                (idx[a] > 0 && phase[i - s] != phase[i])
                    || (idx[a] < grid.cells[a] && phase[i + s] != phase[i])
            })
        })
        .collect()
}

/// Cumulative balance defect `max_n |sum_(k<n) dt r_k|` of a report series.
pub fn cumulative_balance_defect(reports: &[EnergyReport], dt: f64) -> f64 {
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for r in reports {
        acc += dt * r.balance_residual;
        worst = worst.max(acc.abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{FluidParams, PhaseGeometry, Region, SolidModel, SolidParams};

    fn config(cells: usize, gravity: Point<2>, solids: Vec<Region<2>>) -> SimConfig<2> {
        SimConfig {
            grid: Grid::unit(cells),
            material: MaterialSpec {
                solid: SolidParams::default(),
                fluid: FluidParams::default(),
                nu: 1e-3,
                s_exp: 4.0,
                eps: 0.25 / 2f64.sqrt(),
                gravity,
                geometry: PhaseGeometry {
                    lo: [0.0, 0.0],
                    hi: [1.0, 1.0],
                    solids,
                },
            },
            solver: SolverConfig::default(),
            transport: TransportConfig::default(),
            coupling: CouplingConfig::default(),
            dt: 0.02,
            n_steps: 3,
            dump_every: 0,
            audit_subsamples: 0,
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let mut cfg = config(8, [0.0, 0.0], vec![]);
        cfg.material.solid.model = SolidModel::NeoHookean;
        cfg.material.geometry.solids.push(Region::Box {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        });
        let out = run(&cfg, &mut NoOutput).unwrap();
        for r in &out.reports {
            assert_eq!(r.dissipation_rate, 0.0);
            assert_eq!(r.gravity_power, 0.0);
            assert_eq!(r.balance_residual, 0.0);
            assert_eq!(r.pi_min, 1.0);
        }
        assert_eq!(out.final_state.field.xi, cfg.grid.positions());
    }

    #[test]
    fn hydrostatic_column_compresses_at_depth() {
        let mut cfg = config(16, [0.0, -1.0], vec![]);
        cfg.n_steps = 10;
        cfg.dt = 0.05;
        let out = run(&cfg, &mut NoOutput).unwrap();
        let grid = &cfg.grid;
        let p = &out.final_state.problem;
        let row_mean_j = |j: usize| -> f64 {
            (1..grid.cells[0])
                .map(|i| 1.0 / p.det_grad[grid.index([i, j])])
                .sum::<f64>()
                / (grid.cells[0] - 1) as f64
        };
        let profile: Vec<f64> = (2..grid.cells[1] - 1).map(row_mean_j).collect();
        for w in profile.windows(2) {
            assert!(w[0] < w[1], "{profile:?}");
        }
        for r in &out.reports {
            assert!(r.dissipation_rate >= 0.0);
            assert!(r.pi_min == 1.0);
        }
    }

    #[test]
    fn picard_sweeps_contract() {
        let mut cfg = config(12, [0.0, -1.0], vec![Region::Ball {
            center: [0.5, 0.6],
            radius: 0.2,
        }]);
        cfg.coupling.picard_iters = 3;
        cfg.coupling.picard_tol = 0.0;
        cfg.dt = 0.1;
        let state = SimState::initial(&cfg).unwrap();
        let (_, _, info) = step(&state, &cfg).unwrap();
        assert_eq!(info.picard_gaps.len(), 2);
        assert!(info.picard_gaps[1] < info.picard_gaps[0], "{:?}", info.picard_gaps);
    }

    #[test]
    fn zero_gravity_is_lyapunov() {
        // start from a compressed state so that something relaxes
        let cfg = config(12, [0.0, 0.0], vec![Region::Ball {
            center: [0.5, 0.5],
            radius: 0.25,
        }]);
        let grid = &cfg.grid;
        let xi: Vec<Point<2>> = grid
            .positions()
            .iter()
            .map(|x| {
                let b = 16.0 * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
                [x[0] + 0.03 * b * (x[0] - 0.5), x[1] + 0.03 * b * (x[1] - 0.5)]
            })
            .collect();
        let mut state = SimState::new(ReturnMapField { xi, t: 0.0 }, grid, &cfg.material).unwrap();
        for _ in 0..5 {
            let (next, r, _) = step(&state, &cfg).unwrap();
            assert!(r.stored_next <= r.stored + r.balance_residual.abs() * cfg.dt + 1e-15);
            assert!(r.dissipation_rate > 0.0);
            state = next;
        }
    }

    #[test]
    fn monitor_flags() {
        let mut cfg = config(8, [0.0, 0.0], vec![]);
        let state = SimState::initial(&cfg).unwrap();
        let flags = regularization_monitor(&state.problem).unwrap();
        assert_eq!(flags.pi_min, 1.0);
        assert!(!flags.cutoff_active);
        // eps so large that the identity is outside the plateau
        cfg.material.eps = 1.5;
        let state = SimState::initial(&cfg).unwrap();
        assert!(regularization_monitor(&state.problem).unwrap().cutoff_active);
        // folded map
        let grid = &cfg.grid;
        let xi: Vec<Point<2>> = grid
            .positions()
            .iter()
            .map(|x| [if x[0] < 0.5 { x[0] } else { 1.0 - x[0] }, x[1]])
            .collect();
        let folded = MomentumProblem::new(grid, &xi, &cfg.material).unwrap();
        assert!(matches!(
            regularization_monitor(&folded),
            Err(EngineError::InterpenetrationDetected { .. })
        ));
    }

    #[test]
    fn csv_row_layout() {
        let r = EnergyReport {
            t: 0.5,
            stored: 1.25,
            stored_next: 1.0,
            dissipation_rate: 0.5,
            gravity_power: 0.0,
            balance_residual: 0.0,
            pi_min: 1.0,
            detgrad_min: 0.75,
            solver_iterations: 3,
            stored_unregularized: None,
            phase_change_fraction: 0.0,
        };
        assert_eq!(r.csv_row(), "0.5,1.25,0.5,0,0,1,0.75,3");
        assert_eq!(CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
