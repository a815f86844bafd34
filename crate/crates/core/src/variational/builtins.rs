use nalgebra::{DMatrix, DVector};

use super::{Domain, SecondOrderSystem, Structure};
use crate::error::{GeodynError, Result};

fn origin(n: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(n)]
}

fn kepler_force(x: &DVector<f64>) -> DVector<f64> {
    -x / x.norm().powi(3)
}

/// `ẍ = −x/|x|³`.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeplerSystem;

impl SecondOrderSystem for KeplerSystem {
    fn name(&self) -> &str {
        "kepler"
    }
    fn dim(&self) -> usize {
        2
    }
    fn structure(&self) -> Structure {
        Structure::ConstantMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, _v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(2, 2))
    }
    fn force(&self, _t: f64, x: &DVector<f64>, _v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(kepler_force(x))
    }
    fn singular_points(&self) -> Vec<DVector<f64>> {
        origin(2)
    }
}

/// `ẍ = −x − ẋ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Damped;

impl SecondOrderSystem for Damped {
    fn name(&self) -> &str {
        "damped"
    }
    fn dim(&self) -> usize {
        1
    }
    fn structure(&self) -> Structure {
        Structure::ConstantMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, _v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(1, 1))
    }
    fn force(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-x - v)
    }
}

fn rot(v: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![v[1], -v[0]])
}

/// `ẍ = Aẋ − x` with `A = [[0, 1], [−1, 0]]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Magnetic;

impl SecondOrderSystem for Magnetic {
    fn name(&self) -> &str {
        "magnetic"
    }
    fn dim(&self) -> usize {
        2
    }
    fn structure(&self) -> Structure {
        Structure::ConstantMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, _v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(2, 2))
    }
    fn force(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(rot(v) - x)
    }
}

/// `ẍ = B(x)(ẋ₂, −ẋ₁)` with `B(x) = 1 + x₁² − x₂/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonuniformMagnetic;

impl SecondOrderSystem for NonuniformMagnetic {
    fn name(&self) -> &str {
        "nonuniform-magnetic"
    }
    fn dim(&self) -> usize {
        2
    }
    fn structure(&self) -> Structure {
        Structure::ConstantMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, _v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(2, 2))
    }
    fn force(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let b = 1.0 + x[0] * x[0] - 0.5 * x[1];
        Ok(rot(v) * b)
    }
}

/// `d/dt(γ(ẋ)ẋ) = −x/|x|³` with `γ = 1/√(1 − |ẋ|²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Relativistic;

impl SecondOrderSystem for Relativistic {
    fn name(&self) -> &str {
        "relativistic"
    }
    fn dim(&self) -> usize {
        2
    }
    fn structure(&self) -> Structure {
        Structure::VelocityMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = 1.0 - v.norm_squared();
        if s <= 0.0 {
            return Err(GeodynError::InvalidArgument(format!(
                "relativistic velocity |ẋ| = {} is not below 1",
                v.norm()
            )));
        }
        Ok(DMatrix::identity(2, 2) / s.sqrt())
    }
    fn force(&self, _t: f64, x: &DVector<f64>, _v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(kepler_force(x))
    }
    fn singular_points(&self) -> Vec<DVector<f64>> {
        origin(2)
    }
    fn domain(&self) -> Domain {
        Domain {
            v: [-0.5, 0.5],
            ..Domain::default()
        }
    }
}

/// `M = diag(1 + ẋ₂², 1)`, `f = −x`. The velocity-mass symmetry condition fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityMassCounter;

impl SecondOrderSystem for VelocityMassCounter {
    fn name(&self) -> &str {
        "velocity-mass-counter"
    }
    fn dim(&self) -> usize {
        2
    }
    fn structure(&self) -> Structure {
        Structure::VelocityMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + v[1] * v[1], 1.0])))
    }
    fn force(&self, _t: f64, x: &DVector<f64>, _v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-x)
    }
}

/// `M = diag(1 + ẋ₁², 1)`, `f = Aẋ − x` with constant skew `A`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityMassSkew;

impl SecondOrderSystem for VelocityMassSkew {
    fn name(&self) -> &str {
        "velocity-mass-skew"
    }
    fn dim(&self) -> usize {
        2
    }
    fn structure(&self) -> Structure {
        Structure::VelocityMass
    }
    fn mass(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + v[0] * v[0], 1.0])))
    }
    fn force(&self, _t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(rot(v) - x)
    }
}

pub const BUILTIN_NAMES: [&str; 7] = [
    "kepler",
    "damped",
    "magnetic",
    "nonuniform-magnetic",
    "relativistic",
    "velocity-mass-counter",
    "velocity-mass-skew",
];

pub fn builtin(name: &str) -> Option<Box<dyn SecondOrderSystem>> {
    Some(match name {
        "kepler" => Box::new(KeplerSystem),
        "damped" => Box::new(Damped),
        "magnetic" => Box::new(Magnetic),
        "nonuniform-magnetic" => Box::new(NonuniformMagnetic),
        "relativistic" => Box::new(Relativistic),
        "velocity-mass-counter" => Box::new(VelocityMassCounter),
        "velocity-mass-skew" => Box::new(VelocityMassSkew),
        _ => return None,
    })
}
