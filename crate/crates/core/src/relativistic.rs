//! Relativistic Kepler problem in proper time `τ` (units with `c = 1`).
//!
//! The extended state is `z = (t, x, γ, u)` with Hamiltonian
//! `H = ½(−γ² + |u|²) = H_t + Σᵢ Hᵢ`. Each part has an exact flow:
//!
//! ```text
//! H_t:  t⁺ = t + hγ      u⁺ = u − hγ∇φ(x)
//! H_i:  x⁺ = x + h uᵢ eᵢ  γ⁺ = γ − (φ(x⁺) − φ(x))
//! ```
//!
//! The compositions of these flows are K-symplectic and coincide with the
//! variational two-step scheme in `(t, x)`.

use crate::error::{GeodynError, Result, SINGULAR_RADIUS};
use crate::kepler::{checked_radius, Potential, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtPhaseState {
    pub t: f64,
    pub x: Vector,
    pub gamma: f64,
    pub u: Vector,
}

impl ExtPhaseState {
    /// State at coordinate time `t` on the mass shell `γ² = 1 + |u|²`.
    pub fn on_shell(t: f64, x: Vector, u: Vector) -> Self {
        let gamma = (1.0 + u.norm_squared()).sqrt();
        ExtPhaseState { t, x, gamma, u }
    }

    pub fn hamiltonian(&self) -> f64 {
        0.5 * (self.u.norm_squared() - self.gamma * self.gamma)
    }

    /// `|γ² − 1 − |u|²|`.
    pub fn mass_shell_defect(&self) -> f64 {
        (self.gamma * self.gamma - 1.0 - self.u.norm_squared()).abs()
    }

    pub fn max_abs_diff(&self, other: &ExtPhaseState) -> f64 {
        (self.t - other.t)
            .abs()
            .max((self.gamma - other.gamma).abs())
            .max((&self.x - &other.x).amax())
            .max((&self.u - &other.u).amax())
    }
}

/// Exact flow of `H_t = −½γ²`.
pub fn flow_ht(s: &ExtPhaseState, pot: &dyn Potential, h: f64) -> Result<ExtPhaseState> {
    let g = pot.gradient(&s.x)?;
    Ok(ExtPhaseState {
        t: s.t + h * s.gamma,
        x: s.x.clone(),
        gamma: s.gamma,
        u: &s.u - g * (h * s.gamma),
    })
}

/// Distance from the origin to the segment `a + s·d`, `s ∈ [0, 1]`.
fn segment_distance(a: &Vector, d: &Vector) -> f64 {
    let dd = d.norm_squared();
    let s = if dd > 0.0 {
        (-a.dot(d) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + d * s).norm()
}

/// Exact flow of `Hᵢ = ½uᵢ²` (zero-based coordinate `i`).
pub fn flow_hi(i: usize, s: &ExtPhaseState, pot: &dyn Potential, h: f64) -> Result<ExtPhaseState> {
    if i >= s.x.len() {
        return Err(GeodynError::InvalidArgument(format!(
            "coordinate {i} out of range for dimension {}",
            s.x.len()
        )));
    }
    let mut d = Vector::zeros(s.x.len());
    d[i] = h * s.u[i];
    if segment_distance(&s.x, &d) < SINGULAR_RADIUS {
        return Err(GeodynError::OriginCrossing);
    }
    let x = &s.x + d;
    let dphi = pot.value(&x)? - pot.value(&s.x)?;
    Ok(ExtPhaseState {
        t: s.t,
        x,
        gamma: s.gamma - dphi,
        u: s.u.clone(),
    })
}

/// `Φ_h = Φ_{H_N} ∘ … ∘ Φ_{H_1} ∘ Φ_{H_t}`.
pub fn step_k1(s: &ExtPhaseState, pot: &dyn Potential, h: f64) -> Result<ExtPhaseState> {
    let mut out = flow_ht(s, pot, h)?;
    for i in 0..s.x.len() {
        out = flow_hi(i, &out, pot, h)?;
    }
    Ok(out)
}

/// `Φ*_h = Φ_{H_t} ∘ Φ_{H_1} ∘ … ∘ Φ_{H_N}`.
pub fn step_k1_adjoint(s: &ExtPhaseState, pot: &dyn Potential, h: f64) -> Result<ExtPhaseState> {
    let mut out = s.clone();
    for i in (0..s.x.len()).rev() {
        out = flow_hi(i, &out, pot, h)?;
    }
    flow_ht(&out, pot, h)
}

/// Which palindrome `step_k2` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum K2Ordering {
    /// `Φ*_{h/2} ∘ Φ_{h/2}`: `H_t` at both ends, `H_N` in the middle.
    #[default]
    TimeOuter,
    /// `Φ_{h/2} ∘ Φ*_{h/2}`: `H_N` at both ends, `H_t` in the middle.
    TimeInner,
}

pub fn step_k2(
    s: &ExtPhaseState,
    pot: &dyn Potential,
    h: f64,
    ordering: K2Ordering,
) -> Result<ExtPhaseState> {
    let half = 0.5 * h;
    match ordering {
        K2Ordering::TimeOuter => step_k1_adjoint(&step_k1(s, pot, half)?, pot, half),
        K2Ordering::TimeInner => step_k1(&step_k1_adjoint(s, pot, half)?, pot, half),
    }
}

/// Coordinate-time and position pair of the two-step scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePoint {
    pub t: f64,
    pub x: Vector,
}

/// One step of the variational scheme
///
/// ```text
/// (t_{n+1} − 2t_n + t_{n−1})/h² = −(φ(x_n) − φ(x_{n−1}))/h
/// (x_{n+1} − 2x_n + x_{n−1})/h² = −((t_{n+1} − t_n)/h) ∇φ(x_n)
/// ```
pub fn del_relativistic(
    prev: &TimePoint,
    curr: &TimePoint,
    pot: &dyn Potential,
    h: f64,
) -> Result<TimePoint> {
    checked_radius(&curr.x)?;
    let dphi = pot.value(&curr.x)? - pot.value(&prev.x)?;
    let t = 2.0 * curr.t - prev.t - h * dphi;
    let g = pot.gradient(&curr.x)?;
    let x = &curr.x * 2.0 - &prev.x - g * (h * (t - curr.t));
    Ok(TimePoint { t, x })
}

/// Second point of the two-step scheme from a seed state:
/// `t₁ = t₀ + hγ₀`, `x₁ = x₀ + hu₀ − h(t₁ − t₀)∇φ(x₀)`.
pub fn bootstrap_relativistic(s0: &ExtPhaseState, pot: &dyn Potential, h: f64) -> Result<TimePoint> {
    let t = s0.t + h * s0.gamma;
    let g = pot.gradient(&s0.x)?;
    let x = &s0.x + &s0.u * h - g * (h * (t - s0.t));
    Ok(TimePoint { t, x })
}

/// Momenta at the start of the step `(p_n → p_{n+1})`:
/// `γ_n = Δt/h`, `u_n = Δx/h + Δt ∇φ(x_n)`.
pub fn legendre_minus_relativistic(
    a: &TimePoint,
    b: &TimePoint,
    pot: &dyn Potential,
    h: f64,
) -> Result<(f64, Vector)> {
    let dt = b.t - a.t;
    let u = (&b.x - &a.x) / h + pot.gradient(&a.x)? * dt;
    Ok((dt / h, u))
}

/// Momenta at the end of the step:
/// `γ_{n+1} = Δt/h − (φ(x_{n+1}) − φ(x_n))`, `u_{n+1} = Δx/h`.
pub fn legendre_plus_relativistic(
    a: &TimePoint,
    b: &TimePoint,
    pot: &dyn Potential,
    h: f64,
) -> Result<(f64, Vector)> {
    let dphi = pot.value(&b.x)? - pot.value(&a.x)?;
    Ok(((b.t - a.t) / h - dphi, (&b.x - &a.x) / h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelMethod {
    K1,
    K1Adjoint,
    K2,
    K2Alt,
    /// Two-step variational scheme, reported through its Legendre transform.
    Del,
}

impl RelMethod {
    pub fn id(self) -> &'static str {
        match self {
            RelMethod::K1 => "k1",
            RelMethod::K1Adjoint => "k1-adjoint",
            RelMethod::K2 => "k2",
            RelMethod::K2Alt => "k2-alt",
            RelMethod::Del => "del",
        }
    }
}

impl std::str::FromStr for RelMethod {
    type Err = GeodynError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "k1" => RelMethod::K1,
            "k1-adjoint" => RelMethod::K1Adjoint,
            "k2" => RelMethod::K2,
            "k2-alt" => RelMethod::K2Alt,
            "del" => RelMethod::Del,
            _ => return Err(GeodynError::UnknownMethod(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelSample {
    pub step: usize,
    pub tau: f64,
    pub state: ExtPhaseState,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelTrajectory {
    pub method: String,
    pub h: f64,
    pub samples: Vec<RelSample>,
}

/// Integrates `steps` proper-time steps from `z0`; sample `n` is at `τ = n·h`.
pub fn run_relativistic(
    method: RelMethod,
    z0: &ExtPhaseState,
    pot: &dyn Potential,
    h: f64,
    steps: usize,
) -> Result<RelTrajectory> {
    if steps == 0 {
        return Err(GeodynError::InvalidArgument("steps must be at least 1".into()));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(GeodynError::InvalidArgument(format!("step size {h} must be positive")));
    }
    let sample = |n: usize, state: ExtPhaseState| RelSample {
        step: n,
        tau: n as f64 * h,
        hamiltonian: state.hamiltonian(),
        state,
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(sample(0, z0.clone()));
    if method == RelMethod::Del {
        let mut prev = TimePoint {
            t: z0.t,
            x: z0.x.clone(),
        };
        let mut curr = bootstrap_relativistic(z0, pot, h).map_err(|e| e.at_step(1))?;
        for n in 1..=steps {
            let (gamma, u) =
                legendre_plus_relativistic(&prev, &curr, pot, h).map_err(|e| e.at_step(n))?;
            samples.push(sample(
                n,
                ExtPhaseState {
                    t: curr.t,
                    x: curr.x.clone(),
                    gamma,
                    u,
                },
            ));
            if n < steps {
                let next = del_relativistic(&prev, &curr, pot, h).map_err(|e| e.at_step(n + 1))?;
                prev = std::mem::replace(&mut curr, next);
            }
        }
    } else {
        let mut z = z0.clone();
        for n in 1..=steps {
            z = match method {
                RelMethod::K1 => step_k1(&z, pot, h),
                RelMethod::K1Adjoint => step_k1_adjoint(&z, pot, h),
                RelMethod::K2 => step_k2(&z, pot, h, K2Ordering::TimeOuter),
                RelMethod::K2Alt => step_k2(&z, pot, h, K2Ordering::TimeInner),
                RelMethod::Del => unreachable!("handled above"),
            }
            .map_err(|e| e.at_step(n))?;
            samples.push(sample(n, z.clone()));
        }
    }
    Ok(RelTrajectory {
        method: method.id().to_string(),
        h,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kepler::{vec2, Free, KeplerPart};
    use approx::assert_relative_eq;

    const KEPLER: KeplerPart = KeplerPart { weight: 1.0 };

    fn z(t: f64, x: (f64, f64), gamma: f64, u: (f64, f64)) -> ExtPhaseState {
        ExtPhaseState {
            t,
            x: vec2(x.0, x.1),
            gamma,
            u: vec2(u.0, u.1),
        }
    }

    #[test]
    fn flow_ht_examples() {
        let s = z(0.3, (1.0, 0.0), 1.0, (0.0, 1.0));
        let out = flow_ht(&s, &KEPLER, 0.1).unwrap();
        assert_relative_eq!(out.t, 0.4, epsilon = 1e-15);
        assert_relative_eq!(out.u[0], -0.1, epsilon = 1e-15);
        assert_eq!(out.u[1], 1.0);
        assert_eq!(flow_ht(&s, &KEPLER, 0.0).unwrap(), s);
        let s2 = ExtPhaseState { gamma: 2.0, ..s.clone() };
        let out2 = flow_ht(&s2, &KEPLER, 0.1).unwrap();
        assert_relative_eq!(out2.t - s.t, 2.0 * (out.t - s.t), epsilon = 1e-15);
        assert_relative_eq!(out2.u[0], 2.0 * out.u[0], epsilon = 1e-15);
    }

    #[test]
    fn flow_hi_examples() {
        let s = z(0.0, (1.0, 0.0), 1.3, (0.0, 1.0));
        assert_eq!(flow_hi(0, &s, &KEPLER, 0.1).unwrap(), s);
        let out = flow_hi(1, &s, &KEPLER, 0.1).unwrap();
        assert_eq!(out.x, vec2(1.0, 0.1));
        assert_relative_eq!(out.gamma, 1.3 - (1.0 - 1.0 / 1.01f64.sqrt()), epsilon = 1e-15);
        let halves = flow_hi(1, &flow_hi(1, &s, &KEPLER, 0.05).unwrap(), &KEPLER, 0.05).unwrap();
        assert!(halves.max_abs_diff(&out) < 1e-14);
        let plunge = z(0.0, (0.0, 1.0), 1.0, (0.0, -1.0));
        assert_eq!(
            flow_hi(1, &plunge, &KEPLER, 2.0),
            Err(GeodynError::OriginCrossing)
        );
    }

    #[test]
    fn subflows_preserve_their_hamiltonians() {
        let s = z(0.0, (0.8, 0.3), 1.2, (0.4, -0.5));
        let a = flow_ht(&s, &KEPLER, 0.2).unwrap();
        assert_eq!(a.gamma, s.gamma);
        let b = flow_hi(0, &s, &KEPLER, 0.2).unwrap();
        assert_eq!(b.u, s.u);
    }

    #[test]
    fn adjoint_and_self_adjointness() {
        let s = z(0.0, (1.0, 0.2), 1.4, (0.1, 0.9));
        let h = 0.05;
        let back = step_k1_adjoint(&step_k1(&s, &KEPLER, h).unwrap(), &KEPLER, -h).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-12);
        for ord in [K2Ordering::TimeOuter, K2Ordering::TimeInner] {
            let f = step_k2(&s, &KEPLER, h, ord).unwrap();
            assert!(step_k2(&f, &KEPLER, -h, ord).unwrap().max_abs_diff(&s) < 1e-12);
            assert_eq!(step_k2(&s, &KEPLER, 0.0, ord).unwrap(), s);
        }
        assert_eq!(step_k1(&s, &KEPLER, 0.0).unwrap(), s);
    }

    #[test]
    fn step_k2_default_is_time_outer_palindrome() {
        let s = z(0.0, (1.0, 0.2), 1.4, (0.1, 0.9));
        let h = 0.05;
        let mut e = flow_ht(&s, &KEPLER, h / 2.0).unwrap();
        e = flow_hi(0, &e, &KEPLER, h / 2.0).unwrap();
        e = flow_hi(1, &e, &KEPLER, h).unwrap();
        e = flow_hi(0, &e, &KEPLER, h / 2.0).unwrap();
        e = flow_ht(&e, &KEPLER, h / 2.0).unwrap();
        let got = step_k2(&s, &KEPLER, h, K2Ordering::TimeOuter).unwrap();
        assert!(got.max_abs_diff(&e) < 1e-14);
    }

    #[test]
    fn free_motion_is_linear() {
        let prev = TimePoint { t: 0.0, x: vec2(0.0, 1.0) };
        let curr = TimePoint { t: 0.1, x: vec2(0.2, 1.1) };
        let next = del_relativistic(&prev, &curr, &Free, 0.1).unwrap();
        assert_relative_eq!(next.t, 0.2, epsilon = 1e-15);
        assert!((next.x - vec2(0.4, 1.2)).amax() < 1e-15);
    }

    #[test]
    fn del_reproduces_k1() {
        let z0 = ExtPhaseState::on_shell(0.0, vec2(1.0, 0.0), vec2(0.0, 1.2));
        let h = 0.05;
        let a = run_relativistic(RelMethod::K1, &z0, &KEPLER, h, 100).unwrap();
        let b = run_relativistic(RelMethod::Del, &z0, &KEPLER, h, 100).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert!(sa.state.max_abs_diff(&sb.state) < 1e-10);
        }
    }

    #[test]
    fn legendre_minus_recovers_seed() {
        let z0 = z(0.5, (1.0, 0.3), 1.7, (0.2, 1.1));
        let h = 0.05;
        let x1 = bootstrap_relativistic(&z0, &KEPLER, h).unwrap();
        let x0 = TimePoint { t: z0.t, x: z0.x.clone() };
        let (g, u) = legendre_minus_relativistic(&x0, &x1, &KEPLER, h).unwrap();
        assert_relative_eq!(g, z0.gamma, epsilon = 1e-13);
        assert!((u - &z0.u).amax() < 1e-13);
    }
}
