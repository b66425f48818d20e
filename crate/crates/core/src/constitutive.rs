//! Stored energies, stresses and the cut-off regularization, plus the
//! monolithic material map that assigns solid or fluid data to a
//! reference point.

use thiserror::Error;

use crate::kinematics::{cofactor, green_lagrange, Mat, Point, Tensor3};

/// Distance outside the reference box still accepted by [`MaterialSpec::phase_lookup`].
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("degenerate deformation: det F = {det:e} <= 0")]
    DegenerateDeformation { det: f64 },
    #[error("reference point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("strain rate is not symmetric (asymmetry {asymmetry:e})")]
    NonSymmetricInput { asymmetry: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolidModel {
    /// Volumetric-isochoric neo-Hookean energy.
    NeoHookean,
    /// Neo-Hookean with the `-ln det F` term added to the isochoric part,
    /// which makes the energy blow up under full compression.
    NeoHookeanLog,
    StVenantKirchhoff,
}

impl SolidModel {
    pub fn name(&self) -> &'static str {
        match self {
            SolidModel::NeoHookean => "neo_hookean",
            SolidModel::NeoHookeanLog => "neo_hookean_log",
            SolidModel::StVenantKirchhoff => "st_venant_kirchhoff",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "neo_hookean" => Some(SolidModel::NeoHookean),
            "neo_hookean_log" => Some(SolidModel::NeoHookeanLog),
            "st_venant_kirchhoff" | "svk" => Some(SolidModel::StVenantKirchhoff),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolidParams {
    pub model: SolidModel,
    /// Bulk modulus `K_e` (Pa).
    pub bulk_modulus: f64,
    /// Shear modulus `G_e` (Pa).
    pub shear_modulus: f64,
    /// Kelvin-Voigt shear viscosity (Pa s).
    pub mu: f64,
    /// Kelvin-Voigt bulk-type viscosity (Pa s).
    pub lambda: f64,
    /// Referential density (kg/m^3).
    pub density: f64,
}

/// Barotropic fluid with `phi_f(J) = K_f / ((kappa - 1) J^(kappa - 1))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidParams {
    pub stiffness: f64,
    pub kappa: f64,
    pub mu: f64,
    pub lambda: f64,
    pub density: f64,
}

impl Default for SolidParams {
    fn default() -> Self {
        Self {
            model: SolidModel::NeoHookeanLog,
            bulk_modulus: 10.0,
            shear_modulus: 2.0,
            mu: 1.0,
            lambda: 0.0,
            density: 3.0,
        }
    }
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            stiffness: 1.0,
            kappa: 3.0,
            mu: 1.0,
            lambda: 0.0,
            density: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Solid,
    Fluid,
}

/// Closed primitive in reference coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region<const D: usize> {
    Ball { center: Point<D>, radius: f64 },
    Box { lo: Point<D>, hi: Point<D> },
}

impl<const D: usize> Region<D> {
    pub fn contains(&self, x: &Point<D>) -> bool {
        match self {
            Region::Ball { center, radius } => {
                let r2: f64 = (0..D).map(|k| (x[k] - center[k]).powi(2)).sum();
                r2 <= radius * radius
            }
            Region::Box { lo, hi } => (0..D).all(|k| x[k] >= lo[k] && x[k] <= hi[k]),
        }
    }

    /// Signed distance, negative inside.
    pub fn signed_distance(&self, x: &Point<D>) -> f64 {
        match self {
            Region::Ball { center, radius } => {
                let r2: f64 = (0..D).map(|k| (x[k] - center[k]).powi(2)).sum();
                r2.sqrt() - radius
            }
            Region::Box { lo, hi } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for k in 0..D {
                    let c = 0.5 * (lo[k] + hi[k]);
                    let q = (x[k] - c).abs() - 0.5 * (hi[k] - lo[k]);
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                outside.sqrt() + inside.min(0.0)
            }
        }
    }

    fn inside_box(&self, lo: &Point<D>, hi: &Point<D>) -> bool {
        match self {
            Region::Ball { center, radius } => {
                (0..D).all(|k| center[k] - radius >= lo[k] && center[k] + radius <= hi[k])
            }
            Region::Box { lo: a, hi: b } => {
                (0..D).all(|k| a[k] >= lo[k] && b[k] <= hi[k] && a[k] <= b[k])
            }
        }
    }
}

/// Reference box `Omega` and the solid primitives whose union is `Omega_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGeometry<const D: usize> {
    pub lo: Point<D>,
    pub hi: Point<D>,
    pub solids: Vec<Region<D>>,
}

impl<const D: usize> PhaseGeometry<D> {
    /// Solid wins ties on the interface.
    pub fn classify(&self, x: &Point<D>) -> Result<Phase, ConstitutiveError> {
        let outside = (0..D)
            .any(|k| x[k] < self.lo[k] - DOMAIN_TOLERANCE || x[k] > self.hi[k] + DOMAIN_TOLERANCE);
        if outside || x.iter().any(|c| !c.is_finite()) {
            return Err(ConstitutiveError::OutOfDomain { point: x.to_vec() });
        }
        if self.solids.iter().any(|r| r.contains(x)) {
            Ok(Phase::Solid)
        } else {
            Ok(Phase::Fluid)
        }
    }

    /// Signed distance to the solid set (union of primitives).
    pub fn signed_distance(&self, x: &Point<D>) -> f64 {
        self.solids
            .iter()
            .map(|r| r.signed_distance(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Elastic law attached to a phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyLaw {
    Solid {
        model: SolidModel,
        bulk_modulus: f64,
        shear_modulus: f64,
    },
    Fluid {
        stiffness: f64,
        kappa: f64,
    },
}

/// Material data looked up at one reference point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSample {
    pub phase: Phase,
    pub law: EnergyLaw,
    pub mu: f64,
    pub lambda: f64,
    pub density: f64,
}

impl PhaseSample {
    pub fn solid(p: &SolidParams) -> Self {
        Self {
            phase: Phase::Solid,
            law: EnergyLaw::Solid {
                model: p.model,
                bulk_modulus: p.bulk_modulus,
                shear_modulus: p.shear_modulus,
            },
            mu: p.mu,
            lambda: p.lambda,
            density: p.density,
        }
    }

    pub fn fluid(p: &FluidParams) -> Self {
        Self {
            phase: Phase::Fluid,
            law: EnergyLaw::Fluid {
                stiffness: p.stiffness,
                kappa: p.kappa,
            },
            mu: p.mu,
            lambda: p.lambda,
            density: p.density,
        }
    }

    /// Stored energy per referential volume.
    pub fn stored_energy<const D: usize>(&self, f: &Mat<D>) -> Result<f64, ConstitutiveError> {
        let d = D as f64;
        match self.law {
            EnergyLaw::Solid {
                model,
                bulk_modulus: k,
                shear_modulus: g,
            } => match model {
                SolidModel::NeoHookean | SolidModel::NeoHookeanLog => {
                    let j = positive_det(f)?;
                    let iso = f.norm_sq() / j.powf(2.0 / d) - d;
                    let mut phi = 0.5 * k * (j - 1.0).powi(2) + 0.5 * g * iso;
                    if model == SolidModel::NeoHookeanLog {
                        phi -= 0.5 * g * j.ln();
                    }
                    Ok(phi)
                }
                SolidModel::StVenantKirchhoff => {
                    let e = green_lagrange(f);
                    let tr = e.trace();
                    Ok(0.5 * (k - 2.0 * g / d) * tr * tr + g * e.norm_sq())
                }
            },
            EnergyLaw::Fluid { stiffness, kappa } => {
                let j = positive_det(f)?;
                Ok(stiffness / ((kappa - 1.0) * j.powf(kappa - 1.0)))
            }
        }
    }

    /// Analytic `d phi / d F`.
    pub fn stored_energy_df<const D: usize>(&self, f: &Mat<D>) -> Result<Mat<D>, ConstitutiveError> {
        let d = D as f64;
        match self.law {
            EnergyLaw::Solid {
                model,
                bulk_modulus: k,
                shear_modulus: g,
            } => match model {
                SolidModel::NeoHookean | SolidModel::NeoHookeanLog => {
                    let j = positive_det(f)?;
                    let cof = cofactor(f);
                    let jm = j.powf(-2.0 / d);
                    let i1 = f.norm_sq();
                    let mut coef_cof = k * (j - 1.0) - g * i1 * jm / (d * j);
                    if model == SolidModel::NeoHookeanLog {
                        coef_cof -= 0.5 * g / j;
                    }
                    Ok(f.scale(g * jm) + cof.scale(coef_cof))
                }
                SolidModel::StVenantKirchhoff => {
                    let e = green_lagrange(f);
                    let s = Mat::identity().scale((k - 2.0 * g / d) * e.trace()) + e.scale(2.0 * g);
                    Ok(f.matmul(&s))
                }
            },
            EnergyLaw::Fluid { stiffness, kappa } => {
                let j = positive_det(f)?;
                Ok(cofactor(f).scale(fluid_energy_derivative(stiffness, kappa, j)))
            }
        }
    }

    /// Conservative Cauchy stress `phi'(F) F^T / det F`; for the fluid
    /// this is `-p I` with `p = K_f / J^kappa`.
    pub fn cauchy_stress<const D: usize>(&self, f: &Mat<D>) -> Result<Mat<D>, ConstitutiveError> {
        let j = positive_det(f)?;
        match self.law {
            EnergyLaw::Fluid { stiffness, kappa } => {
                Ok(Mat::identity().scale(fluid_energy_derivative(stiffness, kappa, j)))
            }
            EnergyLaw::Solid { .. } => {
                Ok(self.stored_energy_df(f)?.matmul(&f.transpose()).scale(1.0 / j))
            }
        }
    }

    /// Linear Kelvin-Voigt law `2 mu e + lambda tr(e) I`.
    pub fn dissipative_stress<const D: usize>(&self, e: &Mat<D>) -> Result<Mat<D>, ConstitutiveError> {
        let asymmetry = (*e - e.transpose()).norm();
        if asymmetry > 1e-9 * e.norm() {
            return Err(ConstitutiveError::NonSymmetricInput { asymmetry });
        }
        Ok(self.dissipative_stress_unchecked(e))
    }

    pub(crate) fn dissipative_stress_unchecked<const D: usize>(&self, e: &Mat<D>) -> Mat<D> {
        e.scale(2.0 * self.mu) + Mat::identity().scale(self.lambda * e.trace())
    }

    /// Cut-off stress `[pi_eps phi]' F^T / det_eps(F)`. Total in `F`.
    pub fn regularized_stress<const D: usize>(&self, f: &Mat<D>, eps: f64) -> Mat<D> {
        let det = f.det();
        let norm = f.norm();
        if !(det > 0.5 * eps) || norm >= 2.0 / eps {
            return Mat::zeros();
        }
        let pi = cutoff_pi(f, eps);
        let dpi = cutoff_pi_df(f, eps);
        // det F > eps/2 > 0 from here on, so both energies are defined
        let phi = self.stored_energy(f).expect("positive determinant");
        let dphi = self.stored_energy_df(f).expect("positive determinant");
        (dpi.scale(phi) + dphi.scale(pi))
            .matmul(&f.transpose())
            .scale(1.0 / det_eps(det, eps))
    }
}

fn positive_det<const D: usize>(f: &Mat<D>) -> Result<f64, ConstitutiveError> {
    let det = f.det();
    if det > 0.0 {
        Ok(det)
    } else {
        Err(ConstitutiveError::DegenerateDeformation { det })
    }
}

/// `phi_f'(J) = -K_f / J^kappa = -p`.
fn fluid_energy_derivative(stiffness: f64, kappa: f64, j: f64) -> f64 {
    -stiffness * j.powf(-kappa)
}

/// Fluid pressure `p = -phi_f'(J)`.
pub fn fluid_pressure(p: &FluidParams, j: f64) -> f64 {
    -fluid_energy_derivative(p.stiffness, p.kappa, j)
}

/// Hyperstress `nu |G|^(s-2) G` (Frobenius norm).
pub fn hyperstress<const D: usize>(g: &Tensor3<D>, nu: f64, s_exp: f64) -> Tensor3<D> {
    let n = g.norm();
    if n == 0.0 {
        return Tensor3::zeros();
    }
    g.scale(nu * n.powf(s_exp - 2.0))
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn smoothstep_deriv(t: f64) -> f64 {
    6.0 * t * (1.0 - t)
}

/// Determinant factor argument, clamped to `[0, 1]`.
fn det_arg(det: f64, eps: f64) -> f64 {
    ((2.0 * det - eps) / eps).clamp(0.0, 1.0)
}

fn norm_arg(norm: f64, eps: f64) -> f64 {
    (eps * norm - 1.0).clamp(0.0, 1.0)
}

/// C^1 cut-off: 1 where `det F >= eps` and `|F| <= 1/eps`, 0 where
/// `det F <= eps/2` or `|F| >= 2/eps`.
///
/// The norm factor descends from 1 to 0 across `1/eps <= |F| <= 2/eps`.
pub fn cutoff_pi<const D: usize>(f: &Mat<D>, eps: f64) -> f64 {
    let det = f.det();
    if det.is_nan() {
        return 0.0;
    }
    let t1 = det_arg(det, eps);
    let t2 = norm_arg(f.norm(), eps);
    smoothstep(t1) * (1.0 - smoothstep(t2))
}

pub fn cutoff_pi_df<const D: usize>(f: &Mat<D>, eps: f64) -> Mat<D> {
    let det = f.det();
    let norm = f.norm();
    let t1 = det_arg(det, eps);
    let t2 = norm_arg(norm, eps);
    let fac_det = smoothstep(t1);
    let fac_norm = 1.0 - smoothstep(t2);
    let mut out = Mat::zeros();
    if t1 > 0.0 && t1 < 1.0 && fac_norm != 0.0 {
        out += cofactor(f).scale(smoothstep_deriv(t1) * 2.0 / eps * fac_norm);
    }
    if t2 > 0.0 && t2 < 1.0 && fac_det != 0.0 {
        out -= f.scale(fac_det * smoothstep_deriv(t2) * eps / norm);
    }
    out
}

/// `min(max(J, eps/2), 2/eps)`.
pub fn det_eps(j: f64, eps: f64) -> f64 {
    j.max(0.5 * eps).min(2.0 / eps)
}

/// Cut-off parameter chosen so that the initial state sits well inside the
/// plateau: a quarter of `min(min det F0, 1 / max |F0|)`.
pub fn auto_cutoff_eps<const D: usize>(f0: &[Mat<D>]) -> f64 {
    let min_det = f0.iter().map(|f| f.det()).fold(f64::INFINITY, f64::min);
    let max_norm = f0.iter().map(|f| f.norm()).fold(0.0_f64, f64::max);
    0.25 * min_det.min(1.0 / max_norm)
}

/// Reference-frame constitutive data for the whole domain.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialSpec<const D: usize> {
    pub solid: SolidParams,
    pub fluid: FluidParams,
    /// Hyperviscosity coefficient.
    pub nu: f64,
    /// Hyperviscosity exponent, `> D`.
    pub s_exp: f64,
    /// Cut-off parameter.
    pub eps: f64,
    pub gravity: Point<D>,
    pub geometry: PhaseGeometry<D>,
}

impl<const D: usize> MaterialSpec<D> {
    pub fn phase_lookup(&self, x: &Point<D>) -> Result<PhaseSample, ConstitutiveError> {
        Ok(self.sample(self.geometry.classify(x)?))
    }

    pub fn sample(&self, phase: Phase) -> PhaseSample {
        match phase {
            Phase::Solid => PhaseSample::solid(&self.solid),
            Phase::Fluid => PhaseSample::fluid(&self.fluid),
        }
    }

    /// Smallest shear viscosity over both phases; `2 mu_min` is the
    /// coercivity constant of the dissipative stress.
    pub fn min_viscosity(&self) -> f64 {
        self.solid.mu.min(self.fluid.mu)
    }

    /// Every violated parameter constraint as `(field, constraint)`.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut check = |ok: bool, field: &'static str, what: &str| {
            if !ok {
                v.push((field, what.to_string()));
            }
        };
        let s = &self.solid;
        let f = &self.fluid;
        check(s.bulk_modulus > 0.0, "solid.bulk_modulus", "K_e must be positive");
        check(s.shear_modulus > 0.0, "solid.shear_modulus", "G_e must be positive");
        check(s.mu > 0.0, "solid.mu", "mu_s must be positive");
        check(s.lambda >= 0.0, "solid.lambda", "lambda_s must be non-negative");
        check(s.density > 0.0, "solid.density", "rho_s must be positive");
        check(f.stiffness > 0.0, "fluid.stiffness", "K_f must be positive");
        check(f.kappa > 2.0, "fluid.kappa", "kappa must exceed 2");
        check(f.mu > 0.0, "fluid.mu", "mu_f must be positive");
        check(f.lambda >= 0.0, "fluid.lambda", "lambda_f must be non-negative");
        check(f.density > 0.0, "fluid.density", "rho_f must be positive");
        check(self.nu > 0.0, "material.nu", "nu must be positive");
        check(
            self.s_exp > D as f64,
            "material.s_exp",
            &format!("s_exp must exceed d = {D}"),
        );
        check(self.eps > 0.0, "material.eps", "eps must be positive");
        for r in &self.geometry.solids {
            if !r.inside_box(&self.geometry.lo, &self.geometry.hi) {
                check(false, "geometry.solid", "solid region must lie inside the domain");
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_distances() {
        let ball = Region::Ball {
            center: [0.5, 0.5],
            radius: 0.25,
        };
        assert!((ball.signed_distance(&[0.5, 0.5]) + 0.25).abs() < 1e-15);
        assert!((ball.signed_distance(&[1.0, 0.5]) - 0.25).abs() < 1e-15);
        let bx = Region::Box {
            lo: [0.0, 0.0],
            hi: [1.0, 2.0],
        };
        assert!((bx.signed_distance(&[0.5, 1.0]) + 0.5).abs() < 1e-15);
        assert!((bx.signed_distance(&[2.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert!((bx.signed_distance(&[0.5, 2.5]) - 0.5).abs() < 1e-15);
        for x in [[0.3, 0.2], [0.9, 1.99], [1.5, 0.1]] {
            assert_eq!(bx.contains(&x), bx.signed_distance(&x) <= 0.0);
        }
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nh(model: SolidModel, k: f64, g: f64) -> PhaseSample {
        PhaseSample::solid(&SolidParams {
            model,
            bulk_modulus: k,
            shear_modulus: g,
            ..SolidParams::default()
        })
    }

    fn fluid(k: f64, kappa: f64) -> PhaseSample {
        PhaseSample::fluid(&FluidParams {
            stiffness: k,
            kappa,
            ..FluidParams::default()
        })
    }

    fn random_f<R: Rng>(rng: &mut R) -> Mat<2> {
        loop {
            let f = Mat::<2>::identity() + Mat::from_fn(|_, _| rng.gen_range(-0.4..0.4));
            if f.det() > 0.2 {
                return f;
            }
        }
    }

    #[test]
    fn stored_energy_examples() {
        let s = nh(SolidModel::NeoHookean, 5.0, 2.0);
        assert_eq!(s.stored_energy(&Mat::<2>::identity()).unwrap(), 0.0);
        let v = s.stored_energy(&Mat::from_diag([2.0, 0.5])).unwrap();
        assert!((v - 2.25).abs() < 1e-14);
        let svk = nh(SolidModel::StVenantKirchhoff, 5.0, 2.0);
        assert_eq!(svk.stored_energy(&Mat::<3>::identity()).unwrap(), 0.0);
        // polynomial law accepts inverted F
        assert!(svk.stored_energy(&Mat::from_diag([1.0, -1.0])).is_ok());
        assert!(matches!(
            s.stored_energy(&Mat::from_diag([1.0, -1.0])),
            Err(ConstitutiveError::DegenerateDeformation { .. })
        ));
        assert!(fluid(1.0, 3.0).stored_energy(&Mat::from_diag([0.0, 1.0])).is_err());
    }

    #[test]
    fn reference_state_is_stress_free() {
        for m in [SolidModel::NeoHookean, SolidModel::StVenantKirchhoff] {
            let s = nh(m, 5.0, 2.0);
            assert!(s.stored_energy_df(&Mat::<2>::identity()).unwrap().max_abs() < 1e-14);
            assert!(s.cauchy_stress(&Mat::<3>::identity()).unwrap().max_abs() < 1e-14);
        }
        // the log-augmented isochoric term leaves a pressure -G/2 at F = I
        let t = nh(SolidModel::NeoHookeanLog, 5.0, 2.0)
            .cauchy_stress(&Mat::<2>::identity())
            .unwrap();
        assert!((t - Mat::identity().scale(-1.0)).max_abs() < 1e-14);
    }

    #[test]
    fn fluid_pressure_law() {
        let t = fluid(1.0, 3.0).cauchy_stress(&Mat::<2>::identity()).unwrap();
        assert!((t + Mat::identity()).max_abs() < 1e-15);
        let p = FluidParams::default();
        assert!((fluid_pressure(&p, 2.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn dissipative_stress_examples() {
        let s = PhaseSample {
            mu: 1.0,
            lambda: 0.0,
            ..nh(SolidModel::NeoHookean, 1.0, 1.0)
        };
        assert_eq!(s.dissipative_stress(&Mat::<2>::zeros()).unwrap(), Mat::zeros());
        assert_eq!(
            s.dissipative_stress(&Mat::<2>::identity()).unwrap(),
            Mat::identity().scale(2.0)
        );
        let s = PhaseSample { lambda: 1.0, ..s };
        assert_eq!(
            s.dissipative_stress(&Mat::<2>::identity()).unwrap(),
            Mat::identity().scale(4.0)
        );
        assert!(matches!(
            s.dissipative_stress(&Mat([[0.0, 1.0], [0.0, 0.0]])),
            Err(ConstitutiveError::NonSymmetricInput { .. })
        ));
    }

    #[test]
    fn dissipative_stress_monotone_and_coercive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = PhaseSample {
            mu: 0.7,
            lambda: 0.3,
            ..nh(SolidModel::NeoHookean, 1.0, 1.0)
        };
        for _ in 0..200 {
            let e1 = Mat::<3>::from_fn(|_, _| rng.gen_range(-1.0..1.0)).sym();
            let e2 = Mat::<3>::from_fn(|_, _| rng.gen_range(-1.0..1.0)).sym();
            let d1 = s.dissipative_stress(&e1).unwrap();
            let d2 = s.dissipative_stress(&e2).unwrap();
            assert!((d1 - d2).ddot(&(e1 - e2)) > 0.0);
            assert!(2.0 * s.mu * e1.norm_sq() <= d1.ddot(&e1) + 1e-14);
        }
    }

    #[test]
    fn hyperstress_examples() {
        let zero = Tensor3::<2>::zeros();
        assert_eq!(hyperstress(&zero, 0.1, 4.0), zero);
        let mut g = Tensor3::<2>::zeros();
        g.0[0][1][1] = 1.0;
        assert_eq!(hyperstress(&g, 0.3, 4.0), g.scale(0.3));
        g.0[1][0][0] = 0.5;
        let h1 = hyperstress(&g, 1.0, 4.0);
        let h2 = hyperstress(&g.scale(2.0), 1.0, 4.0);
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    assert!((h2.0[a][b][c] - 8.0 * h1.0[a][b][c]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn hyperstress_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let g1 = Tensor3::<2>::from_fn(|_, _, _| rng.gen_range(-1.0..1.0));
            let g2 = Tensor3::<2>::from_fn(|_, _, _| rng.gen_range(-1.0..1.0));
            let mut dh = hyperstress(&g1, 0.5, 3.5);
            dh.axpy(-1.0, &hyperstress(&g2, 0.5, 3.5));
            let mut dg = g1;
            dg.axpy(-1.0, &g2);
            assert!(dh.dot3(&dg) >= 0.0);
        }
    }

    #[test]
    fn cutoff_examples() {
        let eps = 0.2;
        // det = eps, |F| = 1/(2 eps): F = diag(a, eps/a)
        let c: f64 = 1.0 / (4.0 * eps * eps);
        let a = (0.5 * (c + (c * c - 4.0 * eps * eps).sqrt())).sqrt();
        let f = Mat::from_diag([a, eps / a]);
        assert!((f.det() - eps).abs() < 1e-14);
        assert!((f.norm() - 0.5 / eps).abs() < 1e-12);
        assert!((cutoff_pi(&f, eps) - 1.0).abs() < 1e-12);
        let f = Mat::from_diag([eps / 4.0, 1.0]);
        assert_eq!(cutoff_pi(&f, eps), 0.0);
        let f = Mat::from_diag([0.75 * eps, 1.0]);
        assert!((cutoff_pi(&f, eps) - 0.5).abs() < 1e-12);
        assert_eq!(det_eps(10.0, 0.5), 4.0);
        assert_eq!(det_eps(1e-6, 0.5), 0.25);
        assert_eq!(det_eps(1.0, 0.5), 1.0);
    }

    #[test]
    fn cutoff_derivative_vanishes_on_plateaus() {
        let eps = 0.2;
        assert_eq!(cutoff_pi_df(&Mat::<2>::identity(), eps), Mat::zeros());
        assert_eq!(cutoff_pi_df(&Mat::from_diag([0.05, 1.0]), eps), Mat::zeros());
        assert_eq!(cutoff_pi_df(&Mat::from_diag([20.0, 1.0]), eps), Mat::zeros());
    }

    #[test]
    fn regularized_stress_vanishes_off_the_admissible_set() {
        let s = nh(SolidModel::NeoHookean, 5.0, 2.0);
        let eps = 0.2;
        assert_eq!(s.regularized_stress(&Mat::from_diag([eps / 4.0, 1.0]), eps), Mat::zeros());
        assert_eq!(s.regularized_stress(&Mat::from_diag([1.0, -1.0]), eps), Mat::zeros());
        assert_eq!(s.regularized_stress(&Mat::from_diag([11.0, 1.0]), eps), Mat::zeros());
        assert_eq!(s.regularized_stress(&Mat::<2>::identity(), eps), Mat::zeros());
    }

    #[test]
    fn regularized_stress_matches_cauchy_on_plateau() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 0.1;
        for sample in [nh(SolidModel::NeoHookeanLog, 5.0, 2.0), fluid(1.0, 3.0)] {
            for _ in 0..100 {
                let f = random_f(&mut rng);
                let t = sample.cauchy_stress(&f).unwrap();
                let tr = sample.regularized_stress(&f, eps);
                assert!((t - tr).max_abs() <= 1e-12 * (1.0 + t.max_abs()));
            }
        }
    }

    #[test]
    fn frame_indifference_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let laws = [
            nh(SolidModel::NeoHookean, 5.0, 2.0),
            nh(SolidModel::NeoHookeanLog, 5.0, 2.0),
            nh(SolidModel::StVenantKirchhoff, 5.0, 2.0),
            fluid(1.0, 3.0),
        ];
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let q = Mat([[th.cos(), -th.sin()], [th.sin(), th.cos()]]);
            for law in &laws {
                let a = law.stored_energy(&f).unwrap();
                let b = law.stored_energy(&q.matmul(&f)).unwrap();
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
                let t = law.cauchy_stress(&f).unwrap();
                assert!((t - t.transpose()).norm() <= 1e-9 * t.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn fluid_coercivity() {
        let p = FluidParams::default();
        let s = PhaseSample::fluid(&p);
        let eta = p.stiffness / (p.kappa - 1.0);
        for k in 0..=60 {
            let j = 10f64.powf(-3.0 + 0.1 * k as f64);
            let f = Mat::from_diag([j, 1.0]);
            let phi = s.stored_energy(&f).unwrap();
            assert!(phi >= eta / j.powf(p.kappa - 1.0) * (1.0 - 1e-14));
        }
    }

    #[test]
    fn phase_lookup_rules() {
        let spec = MaterialSpec::<2> {
            solid: SolidParams::default(),
            fluid: FluidParams::default(),
            nu: 1e-3,
            s_exp: 4.0,
            eps: 0.1,
            gravity: [0.0, -1.0],
            geometry: PhaseGeometry {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
                solids: vec![Region::Ball {
                    center: [0.5, 0.5],
                    radius: 0.25,
                }],
            },
        };
        assert_eq!(spec.phase_lookup(&[0.5, 0.5]).unwrap().phase, Phase::Solid);
        assert_eq!(spec.phase_lookup(&[0.05, 0.9]).unwrap().phase, Phase::Fluid);
        assert_eq!(spec.phase_lookup(&[0.75, 0.5]).unwrap().phase, Phase::Solid);
        assert_eq!(spec.phase_lookup(&[1.0 + 5e-10, 0.5]).unwrap().phase, Phase::Fluid);
        assert!(matches!(
            spec.phase_lookup(&[1.1, 0.5]),
            Err(ConstitutiveError::OutOfDomain { .. })
        ));
        assert!(spec.violations().is_empty());
        let bad = MaterialSpec {
            s_exp: 2.0,
            fluid: FluidParams {
                kappa: 1.5,
                ..FluidParams::default()
            },
            ..spec
        };
        let v = bad.violations();
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|(_, m)| m.contains("kappa must exceed 2")));
        assert!(v.iter().any(|(_, m)| m.contains("s_exp must exceed d")));
    }

    #[test]
    fn auto_eps_for_identity() {
        let f0 = vec![Mat::<2>::identity(); 4];
        let eps = auto_cutoff_eps(&f0);
        assert!((eps - 0.25 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(cutoff_pi(&Mat::<2>::identity(), eps), 1.0);
    }
}
