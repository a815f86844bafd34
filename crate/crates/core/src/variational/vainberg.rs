use nalgebra::DVector;

use crate::error::{GeodynError, Result};

/// `(t, x, ẋ, ẍ)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub a: DVector<f64>,
}

impl Jet {
    fn scaled(&self, lambda: f64) -> Jet {
        Jet {
            t: self.t,
            x: &self.x * lambda,
            v: &self.v * lambda,
            a: &self.a * lambda,
        }
    }
}

/// A residual operator `N[x] = F(t, x, ẋ, ẍ)`.
pub trait ResidualField: Sync {
    fn eval(&self, jet: &Jet) -> Result<DVector<f64>>;
}

impl<F> ResidualField for F
where
    F: Fn(&Jet) -> Result<DVector<f64>> + Sync,
{
    fn eval(&self, jet: &Jet) -> Result<DVector<f64>> {
        self(jet)
    }
}

pub const GAUSS_NODES: usize = 16;

/// Gauss–Legendre nodes and weights on `[−1, 1]`, by Newton iteration on `Pₙ`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for Pₙ(z) and Pₙ₋₁(z).
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 0 { (1.0, 0.0) } else if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `L = ∫₀¹ x·N[λx] dλ` by 16-node Gauss–Legendre quadrature, where `N[λx]`
/// evaluates `N` on the scaled jet `(t, λx, λẋ, λẍ)`.
pub fn vainberg_lagrangian<N: ResidualField + ?Sized>(field: &N, jet: &Jet) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(GAUSS_NODES);
    let mut acc = 0.0;
    for (z, w) in nodes.iter().zip(&weights) {
        let lambda = 0.5 * (z + 1.0);
        let y = field.eval(&jet.scaled(lambda))?;
        if y.len() != jet.x.len() {
            return Err(GeodynError::Dimension {
                expected: jet.x.len(),
                found: y.len(),
            });
        }
        let term = jet.x.dot(&y);
        if !term.is_finite() {
            return Err(GeodynError::NonFinite(format!(
                "Vainberg integrand at λ = {lambda}"
            )));
        }
        acc += 0.5 * w * term;
    }
    Ok(acc)
}

/// Step of the central differences in jet components.
pub const JET_DELTA: f64 = 1e-5;
/// Step of the five-point time stencils.
pub const TIME_STEP: f64 = 1e-2;

/// Gradients of the Vainberg Lagrangian with respect to `x`, `ẋ` and `ẍ`.
fn jet_gradients<N: ResidualField + ?Sized>(field: &N, jet: &Jet) -> Result<[DVector<f64>; 3]> {
    let n = jet.x.len();
    let d = JET_DELTA;
    let mut out = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
    for (slot, grad) in out.iter_mut().enumerate() {
        for i in 0..n {
            let shift = |s: f64| {
                let mut j = jet.clone();
                match slot {
                    0 => j.x[i] += s,
                    1 => j.v[i] += s,
                    _ => j.a[i] += s,
                }
                j
            };
            grad[i] = (vainberg_lagrangian(field, &shift(d))? - vainberg_lagrangian(field, &shift(-d))?)
                / (2.0 * d);
        }
    }
    Ok(out)
}

/// Euler–Lagrange expression `∂L/∂x − d/dt ∂L/∂ẋ + d²/dt² ∂L/∂ẍ` of the
/// Vainberg Lagrangian along `curve` at time `t`. For a self-adjoint `N` it
/// equals `N` on any curve, and vanishes along solutions of `N[x] = 0`.
pub fn vainberg_euler_lagrange<N, C>(field: &N, curve: C, t: f64) -> Result<DVector<f64>>
where
    N: ResidualField + ?Sized,
    C: Fn(f64) -> Jet,
{
    let h = TIME_STEP;
    let grads = [-2.0, -1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|k| jet_gradients(field, &curve(t + k * h)))
        .collect::<Result<Vec<_>>>()?;
    let first = |slot: usize| {
        (&grads[0][slot] - &grads[1][slot] * 8.0 + &grads[3][slot] * 8.0 - &grads[4][slot])
            / (12.0 * h)
    };
    let second = |slot: usize| {
        (-&grads[0][slot] + &grads[1][slot] * 16.0 - &grads[2][slot] * 30.0
            + &grads[3][slot] * 16.0
            - &grads[4][slot])
            / (12.0 * h * h)
    };
    Ok(&grads[2][0] - first(1) + second(2))
}
