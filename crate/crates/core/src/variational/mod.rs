//! Numerical Helmholtz checks for second-order systems
//! `d/dt(M(x, ẋ)ẋ) = f(t, x, ẋ)` and the Vainberg Lagrangian.
//!
//! Partial derivatives are central differences. Total time derivatives are
//! evaluated on shell, as directional derivatives along `(1, ẋ, ẍ)` with `ẍ`
//! solved from the system at the sample point.

mod builtins;
pub mod expr;
mod vainberg;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GeodynError, Result};

pub use builtins::{builtin, Damped, KeplerSystem, Magnetic, NonuniformMagnetic, Relativistic,
    VelocityMassCounter, VelocityMassSkew, BUILTIN_NAMES};
pub use vainberg::{
    gauss_legendre, vainberg_euler_lagrange, vainberg_lagrangian, Jet, ResidualField,
    GAUSS_NODES,
};

/// Which family of Helmholtz conditions applies to a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    General,
    /// `M = M(ẋ)` and `f = A(t, x)ẋ + φ(t, x)`.
    VelocityMass,
    /// `M` constant.
    ConstantMass,
}

impl Structure {
    pub fn id(self) -> &'static str {
        match self {
            Structure::General => "general",
            Structure::VelocityMass => "velocity-mass",
            Structure::ConstantMass => "constant-mass",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Structure {
    type Err = GeodynError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Structure::General),
            "velocity-mass" => Ok(Structure::VelocityMass),
            "constant-mass" => Ok(Structure::ConstantMass),
            _ => Err(GeodynError::InvalidArgument(format!(
                "unknown structure {s:?} (expected general, velocity-mass or constant-mass)"
            ))),
        }
    }
}

/// Box the sample cloud is drawn from; each coordinate of `x` and `ẋ` ranges
/// over the same interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub t: [f64; 2],
    pub x: [f64; 2],
    pub v: [f64; 2],
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            t: [0.0, 1.0],
            x: [-3.0, 3.0],
            v: [-2.0, 2.0],
        }
    }
}

/// `d/dt(M(t, x, ẋ)ẋ) = f(t, x, ẋ)` with symmetric `M`.
pub trait SecondOrderSystem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn structure(&self) -> Structure;
    fn mass(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn force(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>>;

    /// Positions the sample cloud keeps away from.
    fn singular_points(&self) -> Vec<DVector<f64>> {
        Vec::new()
    }

    fn domain(&self) -> Domain {
        Domain::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

/// Minimum distance between a sample position and a singular point.
pub const SINGULAR_CLEARANCE: f64 = 0.1;

pub const DEFAULT_SAMPLES: usize = 64;

const PRIMES: [u32; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * inv;
        i /= b;
        inv /= base as f64;
    }
    out
}

fn clearance(x: &DVector<f64>, singular: &[DVector<f64>]) -> f64 {
    singular
        .iter()
        .map(|p| (x - p).norm())
        .fold(f64::INFINITY, f64::min)
}

/// `count` Halton points in `domain`, skipping positions within
/// [`SINGULAR_CLEARANCE`] of a singular point of `sys`.
pub fn halton_cloud(sys: &dyn SecondOrderSystem, domain: &Domain, count: usize) -> Result<Vec<SamplePoint>> {
    let n = sys.dim();
    if 1 + 2 * n > PRIMES.len() {
        return Err(GeodynError::InvalidArgument(format!(
            "sample cloud supports dimension up to {}, got {n}",
            (PRIMES.len() - 1) / 2
        )));
    }
    let lerp = |r: [f64; 2], u: f64| r[0] + (r[1] - r[0]) * u;
    let singular = sys.singular_points();
    let mut out = Vec::with_capacity(count);
    let mut index = 1u64;
    while out.len() < count {
        if index > 1000 * (count as u64 + 1) {
            return Err(GeodynError::InvalidArgument(
                "sample domain is almost entirely within the singular clearance".into(),
            ));
        }
        let u = |d: usize| radical_inverse(index, PRIMES[d]);
        let t = lerp(domain.t, u(0));
        let x = DVector::from_fn(n, |i, _| lerp(domain.x, u(1 + i)));
        let v = DVector::from_fn(n, |i, _| lerp(domain.v, u(1 + n + i)));
        index += 1;
        if clearance(&x, &singular) >= SINGULAR_CLEARANCE {
            out.push(SamplePoint { t, x, v });
        }
    }
    Ok(out)
}

/// Deterministic default cloud over the system's own domain.
pub fn default_cloud(sys: &dyn SecondOrderSystem) -> Result<Vec<SamplePoint>> {
    halton_cloud(sys, &sys.domain(), DEFAULT_SAMPLES)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Finite-difference step.
    pub delta: f64,
    /// Pass threshold on every residual maximum.
    pub tolerance: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            delta: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub label: &'static str,
    pub statement: &'static str,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub system: String,
    pub conditions_of: Structure,
    pub samples: usize,
    pub tolerance: f64,
    pub conditions: Vec<ConditionResult>,
    pub pass: bool,
}

impl CheckReport {
    pub fn condition(&self, label: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.label == label)
    }

    /// Labels of the violated conditions.
    pub fn failed(&self) -> Vec<&'static str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.label)
            .collect()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "system {}: {} conditions, {} samples, tolerance {:e}",
            self.system, self.conditions_of, self.samples, self.tolerance
        )?;
        for c in &self.conditions {
            writeln!(
                f,
                "  {}  max residual {:<12.6e} {}  {}",
                c.label,
                c.residual,
                if c.pass { "PASS" } else { "FAIL" },
                c.statement
            )?;
        }
        let verdict = if self.pass {
            "PASS".to_string()
        } else {
            format!("FAIL condition {}", self.failed().join(", "))
        };
        write!(f, "overall {verdict}")
    }
}

/// Phase-space point `(t, x, ẋ)` flattened for directional differences.
#[derive(Clone)]
struct Point {
    t: f64,
    x: DVector<f64>,
    v: DVector<f64>,
}

impl Point {
    fn shifted(&self, dt: f64, dx: &DVector<f64>, dv: &DVector<f64>, s: f64) -> Point {
        Point {
            t: self.t + s * dt,
            x: &self.x + dx * s,
            v: &self.v + dv * s,
        }
    }

    fn with_x(&self, i: usize, s: f64) -> Point {
        let mut p = self.clone();
        p.x[i] += s;
        p
    }

    fn with_v(&self, i: usize, s: f64) -> Point {
        let mut p = self.clone();
        p.v[i] += s;
        p
    }

    fn with_t(&self, s: f64) -> Point {
        let mut p = self.clone();
        p.t += s;
        p
    }
}

struct Probe<'a> {
    sys: &'a dyn SecondOrderSystem,
    delta: f64,
}

type Mat = DMatrix<f64>;

impl Probe<'_> {
    fn f(&self, p: &Point) -> Result<DVector<f64>> {
        let y = self.sys.force(p.t, &p.x, &p.v)?;
        if y.iter().all(|c| c.is_finite()) {
            Ok(y)
        } else {
            Err(GeodynError::NonFinite(format!("force of {}", self.sys.name())))
        }
    }

    fn m(&self, p: &Point) -> Result<Mat> {
        let y = self.sys.mass(p.t, &p.x, &p.v)?;
        if y.iter().all(|c| c.is_finite()) {
            Ok(y)
        } else {
            Err(GeodynError::NonFinite(format!("mass matrix of {}", self.sys.name())))
        }
    }

    /// Central difference of a matrix-valued map along one direction.
    fn diff<F>(&self, p: &Point, step: impl Fn(&Point, f64) -> Point, g: F) -> Result<Mat>
    where
        F: Fn(&Point) -> Result<Mat>,
    {
        let d = self.delta;
        Ok((g(&step(p, d))? - g(&step(p, -d))?) / (2.0 * d))
    }

    /// `J[i][j] = ∂f_i/∂ẋ_j`.
    fn jac_v(&self, p: &Point) -> Result<Mat> {
        let n = self.sys.dim();
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let col = self.diff(p, |q, s| q.with_v(j, s), |q| Ok(Mat::from_column_slice(n, 1, self.f(q)?.as_slice())))?;
            out.set_column(j, &col.column(0));
        }
        Ok(out)
    }

    /// `J[i][j] = ∂f_i/∂x_j`.
    fn jac_x(&self, p: &Point) -> Result<Mat> {
        let n = self.sys.dim();
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let col = self.diff(p, |q, s| q.with_x(j, s), |q| Ok(Mat::from_column_slice(n, 1, self.f(q)?.as_slice())))?;
            out.set_column(j, &col.column(0));
        }
        Ok(out)
    }

    /// `∂M/∂ẋ_j` for each `j`.
    fn dm_dv(&self, p: &Point) -> Result<Vec<Mat>> {
        (0..self.sys.dim())
            .map(|j| self.diff(p, |q, s| q.with_v(j, s), |q| self.m(q)))
            .collect()
    }

    /// `∂M/∂x_j` for each `j`.
    fn dm_dx(&self, p: &Point) -> Result<Vec<Mat>> {
        (0..self.sys.dim())
            .map(|j| self.diff(p, |q, s| q.with_x(j, s), |q| self.m(q)))
            .collect()
    }

    /// On-shell acceleration from `(M + G)ẍ = f − (∂_t M + Σ_k ∂_{x_k}M ẋ_k)ẋ`
    /// with `G_ik = Σ_j ∂M_ij/∂ẋ_k ẋ_j`.
    fn acceleration(&self, p: &Point) -> Result<DVector<f64>> {
        let n = self.sys.dim();
        let m = self.m(p)?;
        let dv = self.dm_dv(p)?;
        let dx = self.dm_dx(p)?;
        let dt = self.diff(p, |q, s| q.with_t(s), |q| self.m(q))?;
        let mut lhs = m;
        for k in 0..n {
            let col = &dv[k] * &p.v;
            for i in 0..n {
                lhs[(i, k)] += col[i];
            }
        }
        let mut mdot = dt;
        for (dxk, vk) in dx.iter().zip(p.v.iter()) {
            mdot += dxk * *vk;
        }
        let rhs = self.f(p)? - mdot * &p.v;
        lhs.lu().solve(&rhs).ok_or_else(|| {
            GeodynError::InvalidArgument(format!(
                "effective mass of {} is singular at t={}, x={:?}",
                self.sys.name(),
                p.t,
                p.x.as_slice()
            ))
        })
    }

    /// On-shell `d/dt` of a matrix field: its directional derivative along
    /// `(1, ẋ, ẍ)`.
    fn total_dt<F>(&self, p: &Point, g: F) -> Result<Mat>
    where
        F: Fn(&Point) -> Result<Mat>,
    {
        let a = self.acceleration(p)?;
        let v = p.v.clone();
        self.diff(p, move |q, s| q.shifted(1.0, &v, &a, s), g)
    }

    /// `S_ij = Σ_k ∂M_ik/∂ẋ_j ẋ_k`.
    fn velocity_mass_term(&self, p: &Point) -> Result<Mat> {
        let n = self.sys.dim();
        let dv = self.dm_dv(p)?;
        Ok(Mat::from_fn(n, n, |i, j| (0..n).map(|k| dv[j][(i, k)] * p.v[k]).sum()))
    }

    /// `A_jk = f_j(t, x, e_k) − f_j(t, x, 0)`, exact for `f` affine in `ẋ`.
    fn affine_a(&self, p: &Point) -> Result<Mat> {
        let n = self.sys.dim();
        let mut base = p.clone();
        base.v = DVector::zeros(n);
        let f0 = self.f(&base)?;
        let mut out = Mat::zeros(n, n);
        for k in 0..n {
            let fk = self.f(&base.with_v(k, 1.0))?;
            out.set_column(k, &(fk - &f0));
        }
        Ok(out)
    }

    fn affine_phi(&self, p: &Point) -> Result<Mat> {
        let n = self.sys.dim();
        let mut base = p.clone();
        base.v = DVector::zeros(n);
        Ok(Mat::from_column_slice(n, 1, self.f(&base)?.as_slice()))
    }
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, c| acc.max(c.abs()))
}

fn check_symmetric(sys: &dyn SecondOrderSystem, samples: &[SamplePoint]) -> Result<()> {
    let singular = sys.singular_points();
    for (index, s) in samples.iter().enumerate() {
        if s.x.len() != sys.dim() || s.v.len() != sys.dim() {
            return Err(GeodynError::Dimension {
                expected: sys.dim(),
                found: s.x.len().max(s.v.len()),
            });
        }
        let distance = clearance(&s.x, &singular);
        if distance < SINGULAR_CLEARANCE {
            return Err(GeodynError::SamplingDomain { index, distance });
        }
        let m = sys.mass(s.t, &s.x, &s.v)?;
        if max_abs(&(&m - m.transpose())) >= 1e-12 {
            return Err(GeodynError::InvalidArgument(format!(
                "mass matrix of {} is not symmetric at sample {index}",
                sys.name()
            )));
        }
    }
    Ok(())
}

type ConditionFn<'a> = Box<dyn Fn(&Probe, &Point) -> Result<f64> + Send + Sync + 'a>;

fn run_conditions(
    sys: &dyn SecondOrderSystem,
    samples: &[SamplePoint],
    opts: &CheckOptions,
    structure: Structure,
    conditions: Vec<(&'static str, &'static str, ConditionFn)>,
) -> Result<CheckReport> {
    check_symmetric(sys, samples)?;
    let probe = Probe {
        sys,
        delta: opts.delta,
    };
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let p = Point {
                t: s.t,
                x: s.x.clone(),
                v: s.v.clone(),
            };
            conditions
                .iter()
                .map(|(_, _, c)| c(&probe, &p))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<ConditionResult> = conditions
        .iter()
        .enumerate()
        .map(|(k, (label, statement, _))| {
            let residual = per_sample.iter().fold(0.0, |acc: f64, r| acc.max(r[k]));
            ConditionResult {
                label,
                statement,
                residual,
                pass: residual < opts.tolerance,
            }
        })
        .collect();
    Ok(CheckReport {
        system: sys.name().to_string(),
        conditions_of: structure,
        samples: samples.len(),
        tolerance: opts.tolerance,
        pass: results.iter().all(|c| c.pass),
        conditions: results,
    })
}

/// Conditions for a constant symmetric mass matrix.
pub fn check_constant_mass(
    sys: &dyn SecondOrderSystem,
    samples: &[SamplePoint],
    opts: &CheckOptions,
) -> Result<CheckReport> {
    let a: ConditionFn = Box::new(|pr, p| {
        let j = pr.jac_v(p)?;
        Ok(max_abs(&(&j + j.transpose())))
    });
    let b: ConditionFn = Box::new(|pr, p| {
        let jx = pr.jac_x(p)?;
        let d = pr.total_dt(p, |q| pr.jac_v(q))?;
        Ok(max_abs(&(&jx - jx.transpose() - d)))
    });
    run_conditions(
        sys,
        samples,
        opts,
        Structure::ConstantMass,
        vec![
            ("(a)", "∂f_i/∂ẋ_j + ∂f_j/∂ẋ_i = 0", a),
            ("(b)", "∂f_i/∂x_j − ∂f_j/∂x_i − d/dt ∂f_i/∂ẋ_j = 0", b),
        ],
    )
}

/// Conditions for `M = M(ẋ)` and `f = A(t, x)ẋ + φ(t, x)`.
pub fn check_velocity_mass(
    sys: &dyn SecondOrderSystem,
    samples: &[SamplePoint],
    opts: &CheckOptions,
) -> Result<CheckReport> {
    let n = sys.dim();
    let a: ConditionFn = Box::new(|pr, p| {
        let s = pr.velocity_mass_term(p)?;
        Ok(max_abs(&(&s - s.transpose())))
    });
    let b: ConditionFn = Box::new(|pr, p| {
        let am = pr.affine_a(p)?;
        Ok(max_abs(&(&am + am.transpose())))
    });
    let c: ConditionFn = Box::new(move |pr, p| {
        let da: Vec<Mat> = (0..n)
            .map(|i| pr.diff(p, |q, s| q.with_x(i, s), |q| pr.affine_a(q)))
            .collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let r = da[i][(j, k)] + da[j][(k, i)] + da[k][(i, j)];
                    worst = worst.max(r.abs());
                }
            }
        }
        Ok(worst)
    });
    let d: ConditionFn = Box::new(move |pr, p| {
        let mut dphi = Mat::zeros(n, n);
        for j in 0..n {
            let col = pr.diff(p, |q, s| q.with_x(j, s), |q| pr.affine_phi(q))?;
            dphi.set_column(j, &col.column(0));
        }
        let dat = pr.diff(p, |q, s| q.with_t(s), |q| pr.affine_a(q))?;
        Ok(max_abs(&(&dphi - dphi.transpose() - dat)))
    });
    run_conditions(
        sys,
        samples,
        opts,
        Structure::VelocityMass,
        vec![
            ("(a)", "Σ_k ∂M_ik/∂ẋ_j ẋ_k = Σ_k ∂M_jk/∂ẋ_i ẋ_k", a),
            ("(b)", "A = −Aᵀ", b),
            ("(c)", "∂A_jk/∂x_i + ∂A_ki/∂x_j + ∂A_ij/∂x_k = 0", c),
            ("(d)", "∂φ_i/∂x_j − ∂φ_j/∂x_i = ∂A_ij/∂t", d),
        ],
    )
}

/// Conditions for a general `M(t, x, ẋ)`.
pub fn check_general(
    sys: &dyn SecondOrderSystem,
    samples: &[SamplePoint],
    opts: &CheckOptions,
) -> Result<CheckReport> {
    let n = sys.dim();
    let a: ConditionFn = Box::new(|pr, p| {
        let s = pr.velocity_mass_term(p)?;
        Ok(max_abs(&(&s - s.transpose())))
    });
    let b: ConditionFn = Box::new(move |pr, p| {
        let dx = pr.dm_dx(p)?;
        // B_ij = Σ_k ∂M_ik/∂x_j ẋ_k.
        let bm = Mat::from_fn(n, n, |i, j| (0..n).map(|k| dx[j][(i, k)] * p.v[k]).sum());
        let jv = pr.jac_v(p)?;
        Ok(max_abs(&(&bm + bm.transpose() - &jv - jv.transpose())))
    });
    let c: ConditionFn = Box::new(move |pr, p| {
        // d/dt (Σ_k ∂M_ik/∂x_j ẋ_k − ∂f_j/∂ẋ_i) = ∂f_i/∂x_j − ∂f_j/∂x_i.
        let lhs = pr.total_dt(p, |q| {
            let dx = pr.dm_dx(q)?;
            let bm = Mat::from_fn(n, n, |i, j| (0..n).map(|k| dx[j][(i, k)] * q.v[k]).sum());
            Ok(bm - pr.jac_v(q)?.transpose())
        })?;
        let jx = pr.jac_x(p)?;
        Ok(max_abs(&(lhs - (&jx - jx.transpose()))))
    });
    run_conditions(
        sys,
        samples,
        opts,
        Structure::General,
        vec![
            ("(a)", "Σ_k ∂M_ik/∂ẋ_j ẋ_k = Σ_k ∂M_jk/∂ẋ_i ẋ_k", a),
            (
                "(b)",
                "Σ_k (∂M_ik/∂x_j + ∂M_jk/∂x_i) ẋ_k = ∂f_i/∂ẋ_j + ∂f_j/∂ẋ_i",
                b,
            ),
            (
                "(c)",
                "Σ_k d/dt(∂M_ik/∂x_j ẋ_k) = ∂f_i/∂x_j − ∂f_j/∂x_i + d/dt ∂f_j/∂ẋ_i",
                c,
            ),
        ],
    )
}

/// Runs the checker matching the system's structure tag.
pub fn check(
    sys: &dyn SecondOrderSystem,
    samples: &[SamplePoint],
    opts: &CheckOptions,
) -> Result<CheckReport> {
    match sys.structure() {
        Structure::General => check_general(sys, samples, opts),
        Structure::VelocityMass => check_velocity_mass(sys, samples, opts),
        Structure::ConstantMass => check_constant_mass(sys, samples, opts),
    }
}
