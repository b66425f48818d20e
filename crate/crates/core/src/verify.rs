//! Independent oracles and the check suites built on them.
//!
//! Nothing here reuses the analytic derivatives or the Newton solver it is
//! meant to check: derivatives are compared with central differences,
//! transport with closed-form characteristics and the velocity solve with
//! plain gradient descent on the discrete functional.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constitutive::{
    cutoff_pi, cutoff_pi_df, fluid_pressure, FluidParams, MaterialSpec, Phase, PhaseGeometry,
    PhaseSample, Region, SolidModel, SolidParams,
};
use crate::engine::{self, cumulative_balance_defect, CouplingConfig, NoOutput, SimConfig, SimState};
use crate::fields::{self, Grid, Interpolation};
use crate::kinematics::{cofactor, deformation_gradient, density, Mat, Point};
use crate::momentum::{self, MomentumProblem, SolverConfig};
use crate::transport::{self, advect, ReturnMapField, TransportConfig};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("unknown manufactured case `{0}` (known: translation, interior-rotation, linear-shear)")]
    UnknownCase(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn fd_gradient_oracle<const D: usize>(f: impl Fn(&Mat<D>) -> f64, x: &Mat<D>, h: f64) -> Mat<D> {
    Mat::from_fn(|i, j| {
        let mut p = *x;
        let mut m = *x;
        p.0[i][j] += h;
        m.0[i][j] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

/// Closed-form transport solutions in the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransportCase {
    /// Constant velocity.
    Translation { velocity: Point<2> },
    /// Rigid rotation at rate `omega` inside `r_in`, tapered smoothly to rest
    /// at `r_out`; every circle about `center` rotates rigidly.
    InteriorRotation {
        center: Point<2>,
        omega: f64,
        r_in: f64,
        r_out: f64,
    },
    /// `v = (gamma x2, 0)`.
    LinearShear { gamma: f64 },
}

pub fn manufactured_transport_case(name: &str) -> Result<TransportCase, VerifyError> {
    match name {
        "translation" => Ok(TransportCase::Translation {
            velocity: [0.2, -0.1],
        }),
        "interior-rotation" => Ok(TransportCase::InteriorRotation {
            center: [0.5, 0.5],
            omega: 2.0 * PI,
            r_in: 0.05,
            r_out: 0.45,
        }),
        "linear-shear" => Ok(TransportCase::LinearShear { gamma: 0.5 }),
        other => Err(VerifyError::UnknownCase(other.to_string())),
    }
}

/// C-infinity step from 1 (s <= 0) to 0 (s >= 1) and its derivative.
fn taper(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    let da = a / (s * s);
    let db = -b / ((1.0 - s) * (1.0 - s));
    let up = a / (a + b);
    let dup = (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
    (1.0 - up, -dup)
}

fn rot2(angle: f64) -> Mat<2> {
    let (s, c) = angle.sin_cos();
    Mat([[c, -s], [s, c]])
}

impl TransportCase {
    pub fn name(&self) -> &'static str {
        match self {
            TransportCase::Translation { .. } => "translation",
            TransportCase::InteriorRotation { .. } => "interior-rotation",
            TransportCase::LinearShear { .. } => "linear-shear",
        }
    }

    /// Angular rate and its radial derivative.
    fn rate(&self, r: f64) -> (f64, f64) {
        match *self {
            TransportCase::InteriorRotation {
                omega, r_in, r_out, ..
            } => {
                let w = r_out - r_in;
                let (p, dp) = taper((r - r_in) / w);
                (omega * p, omega * dp / w)
            }
            _ => (0.0, 0.0),
        }
    }

    pub fn velocity(&self, x: &Point<2>) -> Point<2> {
        match *self {
            TransportCase::Translation { velocity } => velocity,
            TransportCase::InteriorRotation { center, .. } => {
                let y = [x[0] - center[0], x[1] - center[1]];
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                let (w, _) = self.rate(r);
                [-w * y[1], w * y[0]]
            }
            TransportCase::LinearShear { gamma } => [gamma * x[1], 0.0],
        }
    }

    pub fn exact_xi(&self, t: f64, x: &Point<2>) -> Point<2> {
        match *self {
            TransportCase::Translation { velocity } => {
                [x[0] - t * velocity[0], x[1] - t * velocity[1]]
            }
            TransportCase::InteriorRotation { center, .. } => {
                let y = [x[0] - center[0], x[1] - center[1]];
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                let (w, _) = self.rate(r);
                let q = rot2(-w * t).mul_vec(&y);
                [center[0] + q[0], center[1] + q[1]]
            }
            TransportCase::LinearShear { gamma } => [x[0] - gamma * t * x[1], x[1]],
        }
    }

    /// `grad xi` of the exact solution.
    pub fn exact_distortion(&self, t: f64, x: &Point<2>) -> Mat<2> {
        match *self {
            TransportCase::Translation { .. } => Mat::identity(),
            TransportCase::InteriorRotation { center, .. } => {
                let y = [x[0] - center[0], x[1] - center[1]];
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                let (w, dw) = self.rate(r);
                let alpha = -w * t;
                let mut a = rot2(alpha);
                if r > 0.0 && dw != 0.0 {
                    // d/dalpha R(alpha) y  (outer)  grad alpha
                    let ry = rot2(alpha + 0.5 * PI).mul_vec(&y);
                    let grad_alpha = [-t * dw * y[0] / r, -t * dw * y[1] / r];
                    for i in 0..2 {
                        for j in 0..2 {
                            a.0[i][j] += ry[i] * grad_alpha[j];
                        }
                    }
                }
                a
            }
            TransportCase::LinearShear { gamma } => Mat([[1.0, -gamma * t], [0.0, 1.0]]),
        }
    }

    pub fn exact_f(&self, t: f64, x: &Point<2>) -> Mat<2> {
        deformation_gradient(&self.exact_distortion(t, x)).expect("exact maps are invertible")
    }

    /// Time after which the rigid core has made one full turn.
    pub fn period(&self) -> Option<f64> {
        match *self {
            TransportCase::InteriorRotation { omega, r_out, .. } if r_out > 0.0 => {
                Some(2.0 * PI / omega)
            }
            _ => None,
        }
    }

    pub fn velocity_field(&self, grid: &Grid<2>) -> Vec<Point<2>> {
        grid.positions().iter().map(|x| self.velocity(x)).collect()
    }
}

/// Run the semi-Lagrangian scheme on a manufactured case.
pub fn transport_run(
    case: &TransportCase,
    cells: usize,
    steps: usize,
    t_end: f64,
    order: Interpolation,
) -> (Grid<2>, ReturnMapField<2>) {
    let grid = Grid::<2>::unit(cells);
    let v = case.velocity_field(&grid);
    let dt = t_end / steps as f64;
    let cfg = TransportConfig {
        cfl_max: f64::INFINITY,
        interpolation: order,
    };
    let mut field = ReturnMapField::identity(&grid);
    for _ in 0..steps {
        field = advect(&field, &grid, &v, dt, &cfg).expect("valid step");
    }
    (grid, field)
}

/// Trapezoid L2 norm of `xi - exact` over the whole box.
pub fn transport_l2_error(case: &TransportCase, grid: &Grid<2>, field: &ReturnMapField<2>) -> f64 {
    let err: Vec<f64> = grid
        .positions()
        .iter()
        .zip(&field.xi)
        .map(|(x, xi)| {
            let e = case.exact_xi(field.t, x);
            (xi[0] - e[0]).powi(2) + (xi[1] - e[1]).powi(2)
        })
        .collect();
    fields::integrate(&err, grid).sqrt()
}

/// Result of the gradient-descent oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceResult {
    pub velocity: Vec<Point<2>>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient descent with Armijo backtracking on the discrete functional,
/// stopped at `|grad| <= tol` or after 10^6 iterations.
pub fn brute_force_min<const D: usize>(prob: &MomentumProblem<D>, tol: f64) -> (Vec<Point<D>>, f64, usize) {
    const CAP: usize = 1_000_000;
    let n = prob.num_nodes();
    let mut v = vec![[0.0; D]; n];
    let mut phi = prob.functional(&v);
    let mut g = prob.weak_residual(&v);
    let mut gn2 = momentum::dot(&g, &g);
    let mut alpha: f64 = 1.0;
    // last step length accepted while the decrease was resolvable
    let mut trusted = alpha;
    let mut it = 0;
    while gn2.sqrt() > tol && it < CAP {
        it += 1;
        let mut step = (2.0 * alpha).max(trusted);
        loop {
            let trial: Vec<Point<D>> = v
                .iter()
                .zip(&g)
                .map(|(a, b)| std::array::from_fn(|k| a[k] - step * b[k]))
                .collect();
            let phi_t = prob.functional(&trial);
            let decrease = 1e-4 * step * gn2;
            let resolvable = decrease > 1e-13 * phi.abs().max(1e-300);
            if (resolvable && phi_t <= phi - decrease) || (!resolvable && step <= trusted) {
                if resolvable {
                    trusted = step;
                }
                v = trial;
                phi = phi_t;
                alpha = step;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return (v, gn2.sqrt(), it);
            }
        }
        g = prob.weak_residual(&v);
        gn2 = momentum::dot(&g, &g);
    }
    (v, gn2.sqrt(), it)
}

/// Uniformly distributed rotation (angle in 2D, axis-angle in 3D).
pub fn random_rotation<const D: usize>(rng: &mut impl Rng) -> Mat<D> {
    match D {
        2 => {
            let r = rot2(rng.gen_range(0.0..2.0 * PI));
            Mat::from_fn(|i, j| r.0[i][j])
        }
        3 => {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            let k = [s * phi.cos(), s * phi.sin(), z];
            let th: f64 = rng.gen_range(0.0..2.0 * PI);
            let (st, ct) = th.sin_cos();
            let kx = Mat::<3>([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]);
            let r = Mat::<3>::identity() + kx.scale(st) + kx.matmul(&kx).scale(1.0 - ct);
            Mat::from_fn(|i, j| r.0[i][j])
        }
        _ => panic!("rotations are only sampled for d = 2, 3"),
    }
}

/// `I + a U(-1, 1)` with determinant above `min_det`.
pub fn random_deformation<const D: usize>(rng: &mut impl Rng, a: f64, min_det: f64) -> Mat<D> {
    loop {
        let f = Mat::<D>::identity() + Mat::from_fn(|_, _| rng.gen_range(-a..a));
        if f.det() > min_det {
            return f;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationReport {
    pub max_error: f64,
    pub samples: usize,
}

/// `max |phi(QF) - phi(F)| / (1 + |phi(F)|)` over random rotations `Q` and deformations `F`.
pub fn rotation_suite<const D: usize>(
    phi: impl Fn(&Mat<D>) -> f64,
    n_samples: usize,
    seed: u64,
) -> RotationReport {
    assert!(n_samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let f = random_deformation::<D>(&mut rng, 0.3, 0.2);
        let q = random_rotation::<D>(&mut rng);
        let base = phi(&f);
        worst = worst.max((phi(&q.matmul(&f)) - base).abs() / (1.0 + base.abs()));
    }
    RotationReport {
        max_error: worst,
        samples: n_samples,
    }
}

/// One line of a verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn at_least(suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }

    fn holds(suite: &'static str, name: impl Into<String>, ok: bool) -> Self {
        Self {
            suite,
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            passed: ok,
        }
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<5} {:<13} {:<58} {:>12.4e} {:>11.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            self.threshold
        )
    }
}

/// Suites in table order.
pub const SUITES: &[&str] = &[
    "kinematics",
    "constitutive",
    "cutoff",
    "transport",
    "momentum",
    "audit",
    "interface",
    "determinism",
];

pub fn run_suite(name: &str) -> Result<Vec<CheckResult>, VerifyError> {
    let start = Instant::now();
    let (mut checks, limit) = match name {
        "kinematics" => (kinematics_suite(), 1.0),
        "constitutive" => (constitutive_suite(), 5.0),
        "cutoff" => (cutoff_suite(), 1.0),
        "transport" => (transport_suite(), 60.0),
        "momentum" => (momentum_suite(), 120.0),
        "audit" => (audit_suite(), 600.0),
        "interface" => (interface_suite(), 60.0),
        "determinism" => (determinism_suite(), 60.0),
        other => return Err(VerifyError::UnknownSuite(other.to_string())),
    };
    let suite = SUITES.iter().copied().find(|s| *s == name).expect("listed");
    checks.push(CheckResult::at_most(
        suite,
        "runtime [s]",
        start.elapsed().as_secs_f64(),
        limit,
    ));
    Ok(checks)
}

fn max_abs_diff<const D: usize>(a: &Mat<D>, b: &Mat<D>) -> f64 {
    (*a - *b).max_abs()
}

fn kinematics_identities<const D: usize>(rng: &mut ChaCha8Rng, out: &mut Vec<CheckResult>) {
    const S: &str = "kinematics";
    let mut inv: f64 = 0.0;
    let mut mass: f64 = 0.0;
    let mut cof: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_deformation::<D>(rng, 0.4, 0.2);
        let f = deformation_gradient(&a).expect("det > 0.2");
        inv = inv.max(max_abs_diff(&f.matmul(&a), &Mat::identity()));
        let rho_r = rng.gen_range(0.5..5.0);
        let rho = density(&a, rho_r).expect("det > 0.2");
        mass = mass.max((rho * f.det() - rho_r).abs() / rho_r);
        let m = Mat::<D>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        cof = cof.max(max_abs_diff(
            &m.matmul(&cofactor(&m).transpose()),
            &Mat::identity().scale(m.det()),
        ));
    }
    out.push(CheckResult::at_most(S, format!("F(grad xi) grad xi = I, d={D}"), inv, 1e-10));
    out.push(CheckResult::at_most(S, format!("rho det F = rho_r (rel), d={D}"), mass, 1e-10));
    out.push(CheckResult::at_most(S, format!("M Cof(M)^T = det(M) I, d={D}"), cof, 1e-12));
}

pub fn kinematics_suite() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b696e);
    let mut out = Vec::new();
    kinematics_identities::<2>(&mut rng, &mut out);
    kinematics_identities::<3>(&mut rng, &mut out);
    out
}

fn relative_fd_error<const D: usize>(
    f: impl Fn(&Mat<D>) -> f64,
    analytic: &Mat<D>,
    x: &Mat<D>,
    h: f64,
) -> f64 {
    let fd = fd_gradient_oracle(f, x, h);
    (fd - *analytic).max_abs() / analytic.max_abs().max(1.0)
}

fn solid_laws() -> Vec<(&'static str, PhaseSample)> {
    [
        SolidModel::NeoHookean,
        SolidModel::NeoHookeanLog,
        SolidModel::StVenantKirchhoff,
    ]
    .iter()
    .map(|&model| {
        (
            model.name(),
            PhaseSample::solid(&SolidParams {
                model,
                bulk_modulus: 7.0,
                shear_modulus: 3.0,
                ..SolidParams::default()
            }),
        )
    })
    .collect()
}

fn constitutive_dim<const D: usize>(rng: &mut ChaCha8Rng, out: &mut Vec<CheckResult>) {
    const S: &str = "constitutive";
    let fluid = PhaseSample::fluid(&FluidParams {
        stiffness: 2.0,
        kappa: 3.0,
        ..FluidParams::default()
    });
    let mut laws = solid_laws();
    laws.push(("fluid", fluid));
    for (name, law) in &laws {
        let rep = rotation_suite::<D>(|f| law.stored_energy(f).expect("det > 0"), 100, rng.gen());
        out.push(CheckResult::at_most(
            S,
            format!("frame indifference {name}, d={D}"),
            rep.max_error,
            1e-10,
        ));
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = random_deformation::<D>(rng, 0.3, 0.3);
            let analytic = law.stored_energy_df(&f).expect("det > 0");
            worst = worst.max(relative_fd_error(
                |m| law.stored_energy(m).unwrap_or(f64::NAN),
                &analytic,
                &f,
                1e-5,
            ));
        }
        out.push(CheckResult::at_most(S, format!("dphi/dF vs fd {name}, d={D}"), worst, 1e-6));
    }
    for (name, law) in laws.iter().filter(|(n, _)| *n != "neo_hookean_log" && *n != "fluid") {
        let t = law.cauchy_stress(&Mat::<D>::identity()).expect("det 1");
        out.push(CheckResult::at_most(S, format!("T(I) = 0 {name}, d={D}"), t.max_abs(), 1e-12));
    }
}

pub fn constitutive_suite() -> Vec<CheckResult> {
    const S: &str = "constitutive";
    let mut rng = ChaCha8Rng::seed_from_u64(0x636f6e);
    let mut out = Vec::new();
    constitutive_dim::<2>(&mut rng, &mut out);
    constitutive_dim::<3>(&mut rng, &mut out);

    // negative control: a law that is not frame indifferent
    let broken = rotation_suite::<2>(|f| f.0[0][1], 100, 9);
    out.push(CheckResult::at_least(S, "negative control phi = F12 is flagged", broken.max_error, 1e-2));

    // pressure law over J in [1, 1e3]
    let fp = FluidParams {
        stiffness: 2.0,
        kappa: 3.0,
        ..FluidParams::default()
    };
    let js: Vec<f64> = (0..=300).map(|k| 10f64.powf(3.0 * k as f64 / 300.0)).collect();
    let law_err = js
        .iter()
        .map(|&j| (fluid_pressure(&fp, j) - fp.stiffness / j.powf(fp.kappa)).abs())
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(S, "p = K_f / J^kappa on [1, 1e3]", law_err, 1e-12));
    let monotone = js
        .windows(2)
        .all(|w| fluid_pressure(&fp, w[1]) < fluid_pressure(&fp, w[0]));
    out.push(CheckResult::holds(S, "p strictly decreasing on [1, 1e3]", monotone));
    out.push(CheckResult::at_most(S, "p(1e3) -> 0", fluid_pressure(&fp, 1e3), 1e-8));
    let sample = PhaseSample::fluid(&fp);
    let j = 1.7;
    let t = sample
        .cauchy_stress(&Mat::<2>::from_diag([j, 1.0]))
        .expect("det > 0");
    out.push(CheckResult::at_most(
        S,
        "fluid T = -p(J) I",
        (t + Mat::identity().scale(fluid_pressure(&fp, j))).max_abs(),
        1e-12,
    ));

    // cut-off derivative inside the transition bands
    let eps = 0.2;
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let f = if k % 2 == 0 {
            // det in (eps/2, eps), norm small
            let d = rng.gen_range(0.55 * eps..0.95 * eps);
            let a = rng.gen_range(0.8..1.25);
            Mat::<2>::from_diag([a, d / a])
        } else {
            // norm in (1/eps, 2/eps), det large
            let n = rng.gen_range(1.05 / eps..1.95 / eps);
            let th = rng.gen_range(0.0..PI);
            let s = n / 2f64.sqrt();
            rot2(th).matmul(&Mat::from_diag([s, s]))
        };
        let analytic = cutoff_pi_df(&f, eps);
        worst = worst.max(relative_fd_error(|m| cutoff_pi(m, eps), &analytic, &f, 1e-7));
    }
    out.push(CheckResult::at_most(S, "dpi/dF vs fd in the cut-off band", worst, 1e-5));
    out
}

pub fn cutoff_suite() -> Vec<CheckResult> {
    const S: &str = "cutoff";
    let mut rng = ChaCha8Rng::seed_from_u64(0x637574);
    let mut out = Vec::new();
    let eps = 0.1;
    let law = PhaseSample::solid(&SolidParams::default());
    let mut plateau_dev: f64 = 0.0;
    let mut excluded_max: f64 = 0.0;
    let mut range_ok = true;
    let mut stress_off: f64 = 0.0;
    let mut stress_on: f64 = 0.0;
    for _ in 0..2000 {
        let f: Mat<2> = Mat::from_fn(|_, _| rng.gen_range(-12.0..12.0));
        let pi = cutoff_pi(&f, eps);
        range_ok &= (0.0..=1.0).contains(&pi);
        let (det, norm) = (f.det(), f.norm());
        if det >= eps && norm <= 1.0 / eps {
            plateau_dev = plateau_dev.max((pi - 1.0).abs());
            let t = law.cauchy_stress(&f).expect("det > 0");
            let tr = law.regularized_stress(&f, eps);
            // det_eps clamps at 2/eps as well
            if det <= 2.0 / eps {
                stress_on = stress_on.max((tr - t).max_abs() / t.max_abs().max(1.0));
            }
        }
        if det <= 0.5 * eps || norm >= 2.0 / eps {
            excluded_max = excluded_max.max(pi.abs());
            stress_off = stress_off.max(law.regularized_stress(&f, eps).max_abs());
        }
    }
    // plateau samples near the identity as well
    for _ in 0..200 {
        let f = random_deformation::<2>(&mut rng, 0.3, eps);
        plateau_dev = plateau_dev.max((cutoff_pi(&f, eps) - 1.0).abs());
        let t = law.cauchy_stress(&f).expect("det > 0");
        stress_on = stress_on.max((law.regularized_stress(&f, eps) - t).max_abs() / t.max_abs().max(1.0));
    }
    out.push(CheckResult::at_most(S, "pi = 1 on the plateau", plateau_dev, 0.0));
    out.push(CheckResult::at_most(S, "pi = 0 on the excluded set", excluded_max, 0.0));
    out.push(CheckResult::holds(S, "pi in [0, 1] everywhere", range_ok));
    out.push(CheckResult::at_most(S, "T_reg = 0 where det <= eps/2 or |F| >= 2/eps", stress_off, 0.0));
    out.push(CheckResult::at_most(S, "T_reg = T on the plateau (rel)", stress_on, 1e-12));

    // C1 across the four seams: one-sided derivatives agree in the limit
    let mut jump: f64 = 0.0;
    let seams: [Box<dyn Fn(f64) -> Mat<2>>; 4] = [
        Box::new(move |s| Mat::from_diag([1.0, eps * (1.0 + s)])),
        Box::new(move |s| Mat::from_diag([1.0, 0.5 * eps * (1.0 + s)])),
        Box::new(move |s| Mat::from_diag([1.0, 1.0]).scale((1.0 + s) / (eps * 2f64.sqrt()))),
        Box::new(move |s| Mat::from_diag([1.0, 1.0]).scale(2.0 * (1.0 + s) / (eps * 2f64.sqrt()))),
    ];
    for seam in &seams {
        let delta = 1e-9;
        let lo = cutoff_pi_df(&seam(-delta), eps);
        let hi = cutoff_pi_df(&seam(delta), eps);
        jump = jump.max((hi - lo).max_abs());
    }
    out.push(CheckResult::at_most(S, "dpi/dF jump across seams at 1e-9 offset", jump, 1e-4));

    // pi = 1/2 halfway through the determinant band
    let d = 0.75 * eps;
    let f = Mat::<2>::from_diag([1.0, d]);
    out.push(CheckResult::at_most(
        S,
        "pi = 0.5 at det F = 3 eps / 4",
        (cutoff_pi(&f, eps) - 0.5).abs(),
        1e-12,
    ));
    out
}

fn interior_window(grid: &Grid<2>, margin: f64) -> Vec<usize> {
    (0..grid.num_nodes())
        .filter(|&i| {
            let x = grid.position(i);
            x.iter().all(|&c| c >= margin - 1e-12 && c <= 1.0 - margin + 1e-12)
        })
        .collect()
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

pub fn transport_suite() -> Vec<CheckResult> {
    const S: &str = "transport";
    let mut out = Vec::new();

    // translation: linear xi is reproduced exactly away from the inflow
    let case = manufactured_transport_case("translation").expect("known");
    let (grid, field) = transport_run(&case, 32, 5, 0.25, Interpolation::Linear);
    let err = interior_window(&grid, 0.35)
        .iter()
        .map(|&i| {
            let e = case.exact_xi(field.t, &grid.position(i));
            (field.xi[i][0] - e[0]).abs().max((field.xi[i][1] - e[1]).abs())
        })
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(S, "translation: xi = x - t v (interior)", err, 1e-12));

    // rotation: full revolution, three simultaneous (h, dt) refinements
    let case = manufactured_transport_case("interior-rotation").expect("known");
    let period = case.period().expect("periodic");
    // bilinear error is O(h^2 / dt) per revolution, so it takes longer steps
    for (order_kind, per_step, threshold) in [(Interpolation::Cubic, 1, 1.5), (Interpolation::Linear, 4, 0.9)] {
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let (grid, field) = transport_run(&case, n, n / per_step, period, order_kind);
                transport_l2_error(&case, &grid, &field)
            })
            .collect();
        let worst = order(errs[0], errs[1]).min(order(errs[1], errs[2]));
        out.push(CheckResult::at_least(
            S,
            format!("interior-rotation order ({})", order_kind.name()),
            worst,
            threshold,
        ));
    }
    let closed = grid_periodicity(&case, period);
    out.push(CheckResult::at_most(S, "interior-rotation: core and far field return", closed, 1e-12));

    // linear shear: F from grad xi and from the F-transport, per step
    let case = manufactured_transport_case("linear-shear").expect("known");
    let gamma = 0.5;
    let mut defect_ratio: f64 = 0.0;
    let mut det_err: f64 = 0.0;
    for (steps, dt) in [(4usize, 0.05), (8, 0.025)] {
        let (grid, field) = transport_run(&case, 32, steps, steps as f64 * dt, Interpolation::Linear);
        let a = transport::gradient_of_return_map(&field.xi, &grid);
        let exact = Mat([[1.0, gamma * field.t], [0.0, 1.0]]);
        let window = interior_window(&grid, 0.3);
        let mut worst: f64 = 0.0;
        for &i in &window {
            let f = deformation_gradient(&a[i]).expect("sheared map is invertible");
            worst = worst.max((f - exact).max_abs());
            det_err = det_err.max((f.det() - 1.0).abs());
        }
        // one step of the F evolution from the exact F
        let v = case.velocity_field(&grid);
        let f_prev = vec![Mat([[1.0, gamma * field.t], [0.0, 1.0]]); grid.num_nodes()];
        let f_next = transport::cross_check_f_evolution(&f_prev, &grid, &v, dt, Interpolation::Linear);
        let target = Mat([[1.0, gamma * (field.t + dt)], [0.0, 1.0]]);
        for &i in &window {
            worst = worst.max((f_next[i] - target).max_abs());
        }
        defect_ratio = defect_ratio.max(worst / (dt * dt));
    }
    out.push(CheckResult::at_most(S, "linear-shear: F defect per step / dt^2", defect_ratio, 1.0));
    out.push(CheckResult::at_most(S, "linear-shear: det F = 1", det_err, 1e-12));

    // J' = J div v on a divergence-free flow: det drift per step is O(dt^2)
    let grid = Grid::<2>::unit(16);
    let w = Mat([[0.0, -1.0], [1.0, 0.0]]);
    let v: Vec<Point<2>> = grid
        .positions()
        .iter()
        .map(|x| w.mul_vec(&[x[0] - 0.5, x[1] - 0.5]))
        .collect();
    let f0 = vec![Mat::<2>::identity(); grid.num_nodes()];
    let drift: Vec<f64> = [0.1, 0.05]
        .iter()
        .map(|&dt| {
            transport::cross_check_f_evolution(&f0, &grid, &v, dt, Interpolation::Linear)
                .iter()
                .map(|f| (f.det() - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    out.push(CheckResult::at_least(S, "det drift order in dt (div v = 0)", order(drift[0], drift[1]), 2.0));

    // the two F routes agree to O(dt + h^2) on a smooth flow
    let case = manufactured_transport_case("interior-rotation").expect("known");
    let gaps: Vec<f64> = [(16usize, 8usize), (32, 16), (64, 32)]
        .iter()
        .map(|&(n, steps)| f_route_gap(&case, n, steps, 0.125))
        .collect();
    out.push(CheckResult::at_least(
        S,
        "F(grad xi) vs F transport, order in dt",
        order(gaps[0], gaps[1]).min(order(gaps[1], gaps[2])),
        0.8,
    ));
    out
}

fn grid_periodicity(case: &TransportCase, period: f64) -> f64 {
    let grid = Grid::<2>::unit(32);
    let TransportCase::InteriorRotation { center, r_in, r_out, .. } = *case else {
        return 0.0;
    };
    grid.positions()
        .iter()
        .filter(|x| {
            let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
            r <= r_in || r >= r_out
        })
        .map(|x| {
            let e = case.exact_xi(period, x);
            (e[0] - x[0]).abs().max((e[1] - x[1]).abs())
        })
        .fold(0.0, f64::max)
}

/// `max |F(grad xi) - F_evolved|` after `steps` steps up to `t_end`.
fn f_route_gap(case: &TransportCase, cells: usize, steps: usize, t_end: f64) -> f64 {
    let grid = Grid::<2>::unit(cells);
    let v = case.velocity_field(&grid);
    let dt = t_end / steps as f64;
    let cfg = TransportConfig {
        cfl_max: f64::INFINITY,
        interpolation: Interpolation::Cubic,
    };
    let mut field = ReturnMapField::identity(&grid);
    let mut f = vec![Mat::<2>::identity(); grid.num_nodes()];
    for _ in 0..steps {
        f = transport::cross_check_f_evolution(&f, &grid, &v, dt, Interpolation::Cubic);
        field = advect(&field, &grid, &v, dt, &cfg).expect("valid step");
    }
    let a = transport::gradient_of_return_map(&field.xi, &grid);
    (0..grid.num_nodes())
        .filter(|&i| !grid.is_boundary(i))
        .map(|i| (deformation_gradient(&a[i]).expect("invertible") - f[i]).max_abs())
        .fold(0.0, f64::max)
}

fn unit_geometry(solids: Vec<Region<2>>) -> PhaseGeometry<2> {
    PhaseGeometry {
        lo: [0.0, 0.0],
        hi: [1.0, 1.0],
        solids,
    }
}

fn small_material(gravity: Point<2>, solids: Vec<Region<2>>) -> MaterialSpec<2> {
    MaterialSpec {
        solid: SolidParams::default(),
        fluid: FluidParams::default(),
        nu: 1e-3,
        s_exp: 4.0,
        eps: 0.25 / 2f64.sqrt(),
        gravity,
        geometry: unit_geometry(solids),
    }
}

/// The small instances on which the Newton solver is compared with the
/// gradient-descent oracle.
pub fn small_instances() -> Vec<(String, MomentumProblem<2>)> {
    let mut out = Vec::new();
    let grid = Grid::<2>::unit(8);
    let fluid = small_material([0.0, -1.0], vec![]);
    out.push((
        "8x8 gravity on fluid".to_string(),
        MomentumProblem::new(&grid, &grid.positions(), &fluid).expect("in domain"),
    ));
    let disk = small_material(
        [0.3, -1.0],
        vec![Region::Ball {
            center: [0.5, 0.6],
            radius: 0.25,
        }],
    );
    out.push((
        "8x8 solid disk in fluid".to_string(),
        MomentumProblem::new(&grid, &grid.positions(), &disk).expect("in domain"),
    ));
    let grid = Grid::<2>::unit(11);
    let mut boxed = small_material(
        [0.0, -2.0],
        vec![Region::Box {
            lo: [0.2, 0.3],
            hi: [0.6, 0.7],
        }],
    );
    boxed.solid.model = SolidModel::StVenantKirchhoff;
    boxed.solid.lambda = 0.5;
    boxed.nu = 0.05;
    let xi: Vec<Point<2>> = grid
        .positions()
        .iter()
        .map(|x| {
            let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
            [x[0] + 0.3 * b * (3.0 * x[1]).sin(), x[1] - 0.4 * b * x[0]]
        })
        .collect();
    out.push((
        "11x11 deformed state, SVK box".to_string(),
        MomentumProblem::new(&grid, &xi, &boxed).expect("in domain"),
    ));
    let grid = Grid::<2>::new([6, 11], [0.0, 0.0], [0.6, 1.1]);
    let mut tall = small_material([0.5, -1.0], vec![]);
    tall.geometry = PhaseGeometry {
        lo: [0.0, 0.0],
        hi: [0.6, 1.1],
        solids: vec![Region::Ball {
            center: [0.3, 0.4],
            radius: 0.15,
        }],
    };
    tall.solid.model = SolidModel::NeoHookean;
    out.push((
        "6x11 anisotropic grid".to_string(),
        MomentumProblem::new(&grid, &grid.positions(), &tall).expect("in domain"),
    ));
    out
}

pub fn momentum_suite() -> Vec<CheckResult> {
    const S: &str = "momentum";
    let mut out = Vec::new();
    let cfg = SolverConfig::default();
    let mut agree: f64 = 0.0;
    let mut monotone = true;
    let mut unique: f64 = 0.0;
    let mut oracle_grad: f64 = 0.0;
    for (k, (_, prob)) in small_instances().iter().enumerate() {
        let (v, rep) = momentum::solve_velocity(prob, &cfg).expect("small instance converges");
        monotone &= rep.residual_history.windows(2).all(|w| w[1] < w[0]);
        let (bf, gnorm, _) = brute_force_min(prob, 1e-12);
        oracle_grad = oracle_grad.max(gnorm);
        let mut diff = v.clone();
        for (d, b) in diff.iter_mut().zip(&bf) {
            d[0] -= b[0];
            d[1] -= b[1];
        }
        agree = agree.max(momentum::sup_norm(&diff));
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let guess: Vec<Point<2>> = (0..prob.num_nodes())
            .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
            .collect();
        let (w, _) = momentum::solve_velocity_from(prob, &cfg, &guess).expect("converges");
        let gap = v
            .iter()
            .zip(&w)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max);
        unique = unique.max(gap);
    }
    out.push(CheckResult::at_most(S, "oracle |grad Phi_h| reached", oracle_grad, 1e-12));
    out.push(CheckResult::at_most(S, "Newton = gradient-descent minimizer (sup)", agree, 1e-6));
    out.push(CheckResult::holds(S, "residual history strictly decreasing", monotone));
    out.push(CheckResult::at_most(S, "two initial guesses agree", unique, 10.0 * cfg.tol_abs));

    // zero forcing, stress-free reference
    let grid = Grid::<2>::unit(8);
    let mut rest = small_material([0.0, 0.0], vec![Region::Box {
        lo: [0.0, 0.0],
        hi: [1.0, 1.0],
    }]);
    rest.solid.model = SolidModel::NeoHookean;
    let prob = MomentumProblem::new(&grid, &grid.positions(), &rest).expect("in domain");
    let (v, rep) = momentum::solve_velocity(&prob, &cfg).expect("trivial");
    out.push(CheckResult::at_most(S, "zero forcing gives v = 0", momentum::sup_norm(&v), 0.0));
    out.push(CheckResult::at_most(S, "zero forcing iterations", rep.iterations as f64, 1.0));

    // testing the solved equation with v itself
    let (_, prob) = &small_instances()[1];
    let (v, _) = momentum::solve_velocity(prob, &cfg).expect("converges");
    let lhs = prob.dissipation(&v);
    let rhs = prob.forcing_power(&v) - prob.stress_power(&v);
    out.push(CheckResult::at_most(S, "int D:e + nu|grad e|^s = power input", (lhs - rhs).abs(), 1e-9));

    // linearity probe: departure from v(2g) = 2 v(g) is the hyperviscous share
    let grid = Grid::<2>::unit(8);
    let base = small_material([0.0, -1.0], vec![]);
    let double = small_material([0.0, -2.0], vec![]);
    let v1 = momentum::solve_velocity(&MomentumProblem::new(&grid, &grid.positions(), &base).expect("ok"), &cfg)
        .expect("converges")
        .0;
    let v2 = momentum::solve_velocity(&MomentumProblem::new(&grid, &grid.positions(), &double).expect("ok"), &cfg)
        .expect("converges")
        .0;
    let departure = v1
        .iter()
        .zip(&v2)
        .flat_map(|(a, b)| [(b[0] - 2.0 * a[0]).abs(), (b[1] - 2.0 * a[1]).abs()])
        .fold(0.0, f64::max)
        / momentum::sup_norm(&v2).max(1e-300);
    out.push(CheckResult::at_most(S, "linearity departure under 2g (recorded)", departure, f64::INFINITY));
    out
}

/// The shipped "solid disk in fluid under gravity" configuration.
pub fn disk_config(cells: usize, dt: f64, n_steps: usize) -> SimConfig<2> {
    SimConfig {
        grid: Grid::unit(cells),
        material: MaterialSpec {
            solid: SolidParams {
                model: SolidModel::NeoHookeanLog,
                bulk_modulus: 10.0,
                shear_modulus: 2.0,
                mu: 1.0,
                lambda: 0.0,
                density: 3.0,
            },
            fluid: FluidParams {
                stiffness: 1.0,
                kappa: 3.0,
                mu: 1.0,
                lambda: 0.0,
                density: 1.0,
            },
            nu: 1e-3,
            s_exp: 4.0,
            // quarter of min(det F0, 1/|F0|) for F0 = I
            eps: 0.25 / 2f64.sqrt(),
            gravity: [0.0, -1.0],
            geometry: unit_geometry(vec![Region::Ball {
                center: [0.5, 0.6],
                radius: 0.2,
            }]),
        },
        solver: SolverConfig::default(),
        transport: TransportConfig::default(),
        coupling: CouplingConfig::default(),
        dt,
        n_steps,
        dump_every: 5,
        audit_subsamples: 8,
    }
}

pub fn audit_suite() -> Vec<CheckResult> {
    const S: &str = "audit";
    let mut out = Vec::new();
    let mut defects = Vec::new();
    let mut pi_ok = true;
    let mut det_ok = true;
    let mut diss_ok = true;
    let mut coarse_final = None;
    for (cells, dt, steps) in [(32usize, 0.02, 10usize), (64, 0.01, 20)] {
        let cfg = disk_config(cells, dt, steps);
        let run = engine::run(&cfg, &mut NoOutput).expect("regression run completes");
        defects.push(cumulative_balance_defect(&run.reports, dt));
        for r in &run.reports {
            pi_ok &= r.pi_min == 1.0;
            det_ok &= r.detgrad_min > 0.0;
            diss_ok &= r.dissipation_rate >= 0.0;
        }
        pi_ok &= engine::pi_min(&run.final_state.problem) == 1.0;
        if coarse_final.is_none() {
            coarse_final = Some((cfg, run.final_state));
        }
    }
    out.push(CheckResult::at_most(S, "integrated balance defect, 32^2 / dt", defects[0], f64::INFINITY));
    out.push(CheckResult::at_most(S, "integrated balance defect, 64^2 / dt/2", defects[1], f64::INFINITY));
    out.push(CheckResult::at_least(S, "balance defect order", order(defects[0], defects[1]), 0.8));
    out.push(CheckResult::holds(S, "pi_eps = 1 throughout", pi_ok));
    out.push(CheckResult::holds(S, "det grad xi > 0 throughout", det_ok));
    out.push(CheckResult::holds(S, "dissipation rate >= 0", diss_ok));

    // switch gravity off and let the loaded state relax
    let (mut cfg, state) = coarse_final.expect("coarse run");
    cfg.material.gravity = [0.0, 0.0];
    let mut state = SimState {
        step: 0,
        ..state
    };
    let mut lyapunov = true;
    let mut relaxed = 0.0;
    for _ in 0..10 {
        let (next, r, _) = engine::step(&state, &cfg).expect("relaxation step");
        lyapunov &= r.stored_next <= r.stored + r.balance_residual.abs() * cfg.dt;
        relaxed += r.dissipation_rate * cfg.dt;
        state = next;
    }
    out.push(CheckResult::holds(S, "g = 0: stored energy non-increasing up to |r| dt", lyapunov));
    out.push(CheckResult::at_least(S, "g = 0: energy dissipated during relaxation", relaxed, 0.0));

    // equilibrium: every term vanishes
    let mut cfg = disk_config(16, 0.02, 3);
    cfg.material.gravity = [0.0, 0.0];
    let run = engine::run(&cfg, &mut NoOutput).expect("equilibrium run");
    let worst = run
        .reports
        .iter()
        .map(|r| r.balance_residual.abs().max(r.dissipation_rate).max(r.gravity_power.abs()))
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(S, "equilibrium: all report terms zero", worst, 0.0));
    out
}

pub fn interface_suite() -> Vec<CheckResult> {
    const S: &str = "interface";
    let mut out = Vec::new();
    let cfg = disk_config(32, 0.02, 3);
    let run = engine::run(&cfg, &mut NoOutput).expect("short run");
    let state = run.final_state;
    let grid = &cfg.grid;
    let phase = state.problem.phase.clone();
    let iface = engine::interface_nodes(grid, &phase);
    // Chebyshev distance to the interface through a breadth-first sweep
    let mut dist = vec![usize::MAX; grid.num_nodes()];
    let mut frontier: Vec<usize> = (0..grid.num_nodes()).filter(|&i| iface[i]).collect();
    for &i in &frontier {
        dist[i] = 0;
    }
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &i in &frontier {
            let idx = grid.multi_index(i);
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    let (x, y) = (idx[0] as i64 + dx, idx[1] as i64 + dy);
                    if x < 0 || y < 0 || x > grid.cells[0] as i64 || y > grid.cells[1] as i64 {
                        continue;
                    }
                    let j = grid.index([x as usize, y as usize]);
                    if dist[j] == usize::MAX {
                        dist[j] = level;
                        next.push(j);
                    }
                }
            }
        }
        frontier = next;
    }
    let permuted: Vec<Phase> = phase
        .iter()
        .zip(&dist)
        .map(|(p, &d)| match (d > 5, p) {
            (true, Phase::Solid) => Phase::Fluid,
            (true, Phase::Fluid) => Phase::Solid,
            (false, p) => *p,
        })
        .collect();
    let flipped = permuted.iter().zip(&phase).filter(|(a, b)| a != b).count();
    let original = MomentumProblem::with_phases(grid, &state.field.xi, &cfg.material, phase.clone());
    let relabeled = MomentumProblem::with_phases(grid, &state.field.xi, &cfg.material, permuted);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut v: Vec<Point<2>> = (0..grid.num_nodes())
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    original.constrain(&mut v);
    let ra = original.weak_residual(&v);
    let rb = relabeled.weak_residual(&v);
    let identical = (0..grid.num_nodes())
        .filter(|&i| iface[i])
        .all(|i| ra[i][0].to_bits() == rb[i][0].to_bits() && ra[i][1].to_bits() == rb[i][1].to_bits());
    out.push(CheckResult::at_least(S, "nodes relabeled away from the interface", flipped as f64, 1.0));
    out.push(CheckResult::holds(S, "interface rows bitwise identical", identical));
    let changed_far = (0..grid.num_nodes()).any(|i| dist[i] > 5 && !grid.is_boundary(i) && ra[i] != rb[i]);
    out.push(CheckResult::holds(S, "relabeling is visible away from the interface", changed_far));
    // one velocity array, one strain array: single-valued by construction
    let (e, _) = original.strain(&v);
    out.push(CheckResult::holds(
        S,
        "v and e(v) are single nodal fields",
        e.len() == grid.num_nodes() && v.len() == grid.num_nodes(),
    ));
    out
}

pub fn determinism_suite() -> Vec<CheckResult> {
    const S: &str = "determinism";
    let cfg = disk_config(16, 0.02, 5);
    let csv = |threads: usize| -> String {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            let run = engine::run(&cfg, &mut NoOutput).expect("run completes");
            let mut s = String::from(engine::CSV_HEADER);
            s.push('\n');
            for r in &run.reports {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            s
        })
    };
    let a = csv(4);
    let b = csv(4);
    let c = csv(1);
    vec![
        CheckResult::holds(S, "two identical runs give identical CSV", a == b),
        CheckResult::holds(S, "1 and 4 worker threads give identical CSV", a == c),
    ]
}
