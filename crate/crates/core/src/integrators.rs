//! One-step maps, discrete Lagrangians and trajectory runs for `ẍ = −∇φ(x)`.
//!
//! Composition form of the split method with parts `φ⁽¹⁾ … φ⁽ᴷ⁾`:
//!
//! ```text
//! Φ_h  = Φ_{H_K} ∘ … ∘ Φ_{H_1}       sub-flow i: x⁺ = x + h p_i e_i
//!                                                 p⁺ = p − h ∇φ⁽ⁱ⁾(x⁺)
//! Φ*_h = Φ*_{H_1} ∘ … ∘ Φ*_{H_K}     adjoint sub-flow: kick, then drift
//! VI-2 = Φ*_{h/2} ∘ Φ_{h/2}          (or Φ_{h/2} ∘ Φ*_{h/2})
//! ```
//!
//! Each composition has an equivalent two-step form given by the discrete
//! Euler–Lagrange equations of a discrete Lagrangian `𝕃(x_n, x_{n+1}, h)`,
//! with momenta recovered through `p_n = −h∂₁𝕃`, `p_{n+1} = h∂₂𝕃`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{GeodynError, Result};
use crate::kepler::{conserved, ConservedSet, PhaseState, Potential, SplitPotential, Vector};

/// Symplectic Euler induced by `𝕃₁` (kick, then drift):
/// `p⁺ = p − h∇φ(x)`, `x⁺ = x + h p⁺`.
pub fn step_sym_euler(s: &PhaseState, pot: &dyn Potential, h: f64) -> Result<PhaseState> {
    let v = &s.v - pot.gradient(&s.x)? * h;
    let x = &s.x + &v * h;
    Ok(PhaseState { x, v })
}

/// Adjoint of [`step_sym_euler`] (drift, then kick).
pub fn step_sym_euler_adjoint(s: &PhaseState, pot: &dyn Potential, h: f64) -> Result<PhaseState> {
    let x = &s.x + &s.v * h;
    let v = &s.v - pot.gradient(&x)? * h;
    Ok(PhaseState { x, v })
}

/// Positions `(x_{n−1}, x_n)` of a two-step recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepState {
    pub x_prev: Vector,
    pub x_curr: Vector,
    pub h: f64,
}

/// Central-difference recurrence `x_{n+1} = 2x_n − x_{n−1} − h²∇φ(x_n)`.
pub fn step_stormer_verlet(ts: &TwoStepState, pot: &dyn Potential) -> Result<Vector> {
    let g = pot.gradient(&ts.x_curr)?;
    Ok(&ts.x_curr * 2.0 - &ts.x_prev - g * (ts.h * ts.h))
}

/// Kick–drift–kick Störmer–Verlet in `(x, p)`.
pub fn step_stormer_verlet_kdk(s: &PhaseState, pot: &dyn Potential, h: f64) -> Result<PhaseState> {
    let half = &s.v - pot.gradient(&s.x)? * (0.5 * h);
    let x = &s.x + &half * h;
    let v = half - pot.gradient(&x)? * (0.5 * h);
    Ok(PhaseState { x, v })
}

fn check_part(i: usize, split: &SplitPotential, n: usize) -> Result<()> {
    split.check_dim(n)?;
    if i >= split.len() {
        return Err(GeodynError::InvalidSplit(format!(
            "part index {i} out of range for {} parts",
            split.len()
        )));
    }
    Ok(())
}

/// Exact-in-structure map of `H⁽ⁱ⁾ = ½|p_B|² + φ⁽ⁱ⁾(x)` (part index `i` is
/// zero-based): drift the block `B` of part `i`, then kick with `∇φ⁽ⁱ⁾`.
pub fn substep_flow(i: usize, s: &PhaseState, split: &SplitPotential, h: f64) -> Result<PhaseState> {
    check_part(i, split, s.dim())?;
    let mut x = s.x.clone();
    for c in split.block(i, s.dim()) {
        x[c] += h * s.v[c];
    }
    let v = &s.v - split.part(i).gradient(&x)? * h;
    Ok(PhaseState { x, v })
}

/// Adjoint of [`substep_flow`]: kick with `∇φ⁽ⁱ⁾`, then drift block `B`.
pub fn substep_flow_adjoint(
    i: usize,
    s: &PhaseState,
    split: &SplitPotential,
    h: f64,
) -> Result<PhaseState> {
    check_part(i, split, s.dim())?;
    let v = &s.v - split.part(i).gradient(&s.x)? * h;
    let mut x = s.x.clone();
    for c in split.block(i, s.dim()) {
        x[c] += h * v[c];
    }
    Ok(PhaseState { x, v })
}

/// `Φ_h`: sub-flows in ascending part order.
pub fn step_vi1(s: &PhaseState, split: &SplitPotential, h: f64) -> Result<PhaseState> {
    let mut out = s.clone();
    for i in 0..split.len() {
        out = substep_flow(i, &out, split, h)?;
    }
    Ok(out)
}

/// `Φ*_h`: adjoint sub-flows in descending part order.
pub fn step_vi1_adjoint(s: &PhaseState, split: &SplitPotential, h: f64) -> Result<PhaseState> {
    let mut out = s.clone();
    for i in (0..split.len()).rev() {
        out = substep_flow_adjoint(i, &out, split, h)?;
    }
    Ok(out)
}

/// Order of the two half steps in VI-2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Vi2Ordering {
    /// `Φ*_{h/2} ∘ Φ_{h/2}`.
    #[default]
    AdjointLast,
    /// `Φ_{h/2} ∘ Φ*_{h/2}`.
    AdjointFirst,
}

pub fn step_vi2(
    s: &PhaseState,
    split: &SplitPotential,
    h: f64,
    ordering: Vi2Ordering,
) -> Result<PhaseState> {
    let half = 0.5 * h;
    match ordering {
        Vi2Ordering::AdjointLast => step_vi1_adjoint(&step_vi1(s, split, half)?, split, half),
        Vi2Ordering::AdjointFirst => step_vi1(&step_vi1_adjoint(s, split, half)?, split, half),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SymEuler,
    StormerVerlet,
    Vi1,
    Vi1Adjoint,
    Vi2,
    Vi2Alt,
}

impl Method {
    /// The four methods compared throughout the experiments.
    pub const MAIN: [Method; 4] = [
        Method::SymEuler,
        Method::StormerVerlet,
        Method::Vi1,
        Method::Vi2,
    ];

    pub const ALL: [Method; 6] = [
        Method::SymEuler,
        Method::StormerVerlet,
        Method::Vi1,
        Method::Vi1Adjoint,
        Method::Vi2,
        Method::Vi2Alt,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::SymEuler => "sym-euler",
            Method::StormerVerlet => "sv",
            Method::Vi1 => "vi1",
            Method::Vi1Adjoint => "vi1-adjoint",
            Method::Vi2 => "vi2",
            Method::Vi2Alt => "vi2-alt",
        }
    }

    /// Classical order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            Method::SymEuler | Method::Vi1 | Method::Vi1Adjoint => 1,
            Method::StormerVerlet | Method::Vi2 | Method::Vi2Alt => 2,
        }
    }

    /// Discrete Lagrangian whose variational integrator equals this method.
    pub fn lagrangian(self) -> LagrangianId {
        match self {
            Method::SymEuler => LagrangianId::L1,
            Method::StormerVerlet => LagrangianId::L2,
            Method::Vi1 => LagrangianId::First,
            Method::Vi1Adjoint => LagrangianId::Adjoint,
            Method::Vi2 => LagrangianId::Second(Vi2Ordering::AdjointLast),
            Method::Vi2Alt => LagrangianId::Second(Vi2Ordering::AdjointFirst),
        }
    }

    /// One step of the composition form. Symplectic Euler and Störmer–Verlet
    /// use the whole potential; the split methods use its parts.
    pub fn step(self, s: &PhaseState, split: &SplitPotential, h: f64) -> Result<PhaseState> {
        match self {
            Method::SymEuler => step_sym_euler(s, split, h),
            Method::StormerVerlet => step_stormer_verlet_kdk(s, split, h),
            Method::Vi1 => step_vi1(s, split, h),
            Method::Vi1Adjoint => step_vi1_adjoint(s, split, h),
            Method::Vi2 => step_vi2(s, split, h, Vi2Ordering::AdjointLast),
            Method::Vi2Alt => step_vi2(s, split, h, Vi2Ordering::AdjointFirst),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = GeodynError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sym-euler" | "symplectic-euler" => Method::SymEuler,
            "sv" | "stormer-verlet" => Method::StormerVerlet,
            "vi1" => Method::Vi1,
            "vi1-adjoint" => Method::Vi1Adjoint,
            "vi2" => Method::Vi2,
            "vi2-alt" => Method::Vi2Alt,
            _ => return Err(GeodynError::UnknownMethod(s.to_string())),
        })
    }
}

/// `x` with the coordinates of parts `0..=j` taken from `repl`.
fn hat(base: &Vector, repl: &Vector, j: usize, split: &SplitPotential) -> Vector {
    let mut out = base.clone();
    let end = split.block(j, base.len()).end;
    out.rows_mut(0, end).copy_from(&repl.rows(0, end));
    out
}

/// Discrete Euler–Lagrange recurrence of the split first-order Lagrangian.
///
/// For a coordinate `c` in block `b`:
///
/// ```text
/// x_{n+1,c} = 2x_{n,c} − x_{n−1,c}
///             − h² ∂_c [ Σ_{j<b} φ⁽ʲ⁾(x̂ʲ_n) + Σ_{j≥b} φ⁽ʲ⁾(x̂ʲ_{n−1}) ]
/// ```
///
/// where `x̂ʲ_n` is `x_n` with blocks `0..=j` replaced by `x_{n+1}`. Blocks are
/// solved in ascending order, so every right-hand side is already known.
pub fn del_two_step_vi1(ts: &TwoStepState, split: &SplitPotential) -> Result<Vector> {
    let n = ts.x_curr.len();
    split.check_dim(n)?;
    let h2 = ts.h * ts.h;
    let mut force = Vector::zeros(n);
    for j in 0..split.len() {
        let g = split.part(j).gradient(&hat(&ts.x_prev, &ts.x_curr, j, split))?;
        // Old-point terms act on blocks b ≤ j.
        for c in 0..split.block(j, n).end {
            force[c] += g[c];
        }
    }
    let mut next = ts.x_curr.clone();
    for b in 0..split.len() {
        let block = split.block(b, n);
        for c in block.clone() {
            next[c] = 2.0 * ts.x_curr[c] - ts.x_prev[c] - h2 * force[c];
        }
        // New-point term of part b acts on every later block.
        let g = split.part(b).gradient(&hat(&ts.x_curr, &next, b, split))?;
        for c in block.end..n {
            force[c] += g[c];
        }
    }
    Ok(next)
}

/// Registered discrete Lagrangians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangianId {
    /// `½|Δ|²/h² − φ(x_n)`.
    L1,
    /// `½|Δ|²/h² − ½(φ(x_n) + φ(x_{n+1}))`.
    L2,
    /// Split first-order Lagrangian `½|Δ|²/h² − Σ_j φ⁽ʲ⁾(x̂ʲ_n)`.
    First,
    /// Its adjoint `𝕃*(a, b, h) = 𝕃(b, a, −h)`.
    Adjoint,
    /// Half-step pair of `First` and `Adjoint` with an internal midpoint.
    Second(Vi2Ordering),
}

impl FromStr for LagrangianId {
    type Err = GeodynError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "L1" => LagrangianId::L1,
            "L2" => LagrangianId::L2,
            "1st" | "first" => LagrangianId::First,
            "adjoint" | "1st-adjoint" => LagrangianId::Adjoint,
            "2nd" | "second" => LagrangianId::Second(Vi2Ordering::AdjointLast),
            "2nd-alt" | "second-alt" => LagrangianId::Second(Vi2Ordering::AdjointFirst),
            _ => return Err(GeodynError::UnknownLagrangian(s.to_string())),
        })
    }
}

/// A discrete Lagrangian bound to a potential split.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteLagrangian<'a> {
    pub id: LagrangianId,
    pub split: &'a SplitPotential,
}

impl<'a> DiscreteLagrangian<'a> {
    pub fn new(id: LagrangianId, split: &'a SplitPotential) -> Self {
        DiscreteLagrangian { id, split }
    }

    fn kinetic(xa: &Vector, xb: &Vector, h: f64) -> f64 {
        0.5 * (xb - xa).norm_squared() / (h * h)
    }

    pub fn value(&self, xa: &Vector, xb: &Vector, h: f64) -> Result<f64> {
        let split = self.split;
        match self.id {
            LagrangianId::L1 => Ok(Self::kinetic(xa, xb, h) - split.value(xa)?),
            LagrangianId::L2 => {
                Ok(Self::kinetic(xa, xb, h) - 0.5 * (split.value(xa)? + split.value(xb)?))
            }
            LagrangianId::First => {
                split.check_dim(xa.len())?;
                let mut v = Self::kinetic(xa, xb, h);
                for j in 0..split.len() {
                    v -= split.part(j).value(&hat(xa, xb, j, split))?;
                }
                Ok(v)
            }
            LagrangianId::Adjoint => self.with(LagrangianId::First).value(xb, xa, -h),
            LagrangianId::Second(ord) => {
                let (first, second) = self.halves(ord);
                let m = self.midpoint(xa, xb, h)?;
                Ok(0.5 * (first.value(xa, &m, 0.5 * h)? + second.value(&m, xb, 0.5 * h)?))
            }
        }
    }

    fn with(&self, id: LagrangianId) -> DiscreteLagrangian<'a> {
        DiscreteLagrangian { id, split: self.split }
    }

    fn halves(&self, ord: Vi2Ordering) -> (DiscreteLagrangian<'a>, DiscreteLagrangian<'a>) {
        let first = self.with(LagrangianId::First);
        let adjoint = self.with(LagrangianId::Adjoint);
        match ord {
            Vi2Ordering::AdjointLast => (first, adjoint),
            Vi2Ordering::AdjointFirst => (adjoint, first),
        }
    }

    /// Internal point `x_{n+1/2}` of a `Second` Lagrangian: the stationary
    /// point of the two half-step actions.
    pub fn midpoint(&self, xa: &Vector, xb: &Vector, h: f64) -> Result<Vector> {
        let LagrangianId::Second(ord) = self.id else {
            return Err(GeodynError::InvalidArgument(
                "only the second-order Lagrangian has a midpoint".into(),
            ));
        };
        let (first, second) = self.halves(ord);
        let half = 0.5 * h;
        let guess = (xa + xb) * 0.5;
        newton(
            |m| Ok(first.legendre_plus(xa, m, half)? - second.legendre_minus(m, xb, half)?),
            guess,
            momentum_tolerance(xa, xb, half),
        )
    }

    /// `p_n = −h ∂₁𝕃(x_n, x_{n+1}, h)` in closed form.
    pub fn legendre_minus(&self, xa: &Vector, xb: &Vector, h: f64) -> Result<Vector> {
        let split = self.split;
        let mut p = (xb - xa) / h;
        match self.id {
            LagrangianId::L1 => p += split.gradient(xa)? * h,
            LagrangianId::L2 => p += split.gradient(xa)? * (0.5 * h),
            LagrangianId::First => {
                split.check_dim(xa.len())?;
                let n = xa.len();
                for j in 0..split.len() {
                    let g = split.part(j).gradient(&hat(xa, xb, j, split))?;
                    for c in split.block(j, n).end..n {
                        p[c] += h * g[c];
                    }
                }
            }
            LagrangianId::Adjoint => return self.with(LagrangianId::First).legendre_plus(xb, xa, -h),
            LagrangianId::Second(ord) => {
                let m = self.midpoint(xa, xb, h)?;
                return self.halves(ord).0.legendre_minus(xa, &m, 0.5 * h);
            }
        }
        Ok(p)
    }

    /// `p_{n+1} = h ∂₂𝕃(x_n, x_{n+1}, h)` in closed form.
    pub fn legendre_plus(&self, xa: &Vector, xb: &Vector, h: f64) -> Result<Vector> {
        let split = self.split;
        let mut p = (xb - xa) / h;
        match self.id {
            LagrangianId::L1 => {}
            LagrangianId::L2 => p -= split.gradient(xb)? * (0.5 * h),
            LagrangianId::First => {
                split.check_dim(xa.len())?;
                let n = xa.len();
                for j in 0..split.len() {
                    let g = split.part(j).gradient(&hat(xa, xb, j, split))?;
                    for c in 0..split.block(j, n).end {
                        p[c] -= h * g[c];
                    }
                }
            }
            LagrangianId::Adjoint => {
                return self.with(LagrangianId::First).legendre_minus(xb, xa, -h)
            }
            LagrangianId::Second(ord) => {
                let m = self.midpoint(xa, xb, h)?;
                return self.halves(ord).1.legendre_plus(&m, xb, 0.5 * h);
            }
        }
        Ok(p)
    }

    /// Both transforms by central differences of [`value`](Self::value).
    pub fn legendre_fd(&self, xa: &Vector, xb: &Vector, h: f64, delta: f64) -> Result<(Vector, Vector)> {
        let n = xa.len();
        let mut pm = Vector::zeros(n);
        let mut pp = Vector::zeros(n);
        for c in 0..n {
            let mut a1 = xa.clone();
            let mut a2 = xa.clone();
            a1[c] += delta;
            a2[c] -= delta;
            pm[c] = -h * (self.value(&a1, xb, h)? - self.value(&a2, xb, h)?) / (2.0 * delta);
            let mut b1 = xb.clone();
            let mut b2 = xb.clone();
            b1[c] += delta;
            b2[c] -= delta;
            pp[c] = h * (self.value(xa, &b1, h)? - self.value(xa, &b2, h)?) / (2.0 * delta);
        }
        Ok((pm, pp))
    }

    /// Solves `legendre_minus(x, x⁺, h) = p` for `x⁺`.
    pub fn solve_forward(&self, x: &Vector, p: &Vector, h: f64) -> Result<Vector> {
        if h == 0.0 {
            return Ok(x.clone());
        }
        if self.id == LagrangianId::L1 {
            return Ok(x + p * h - self.split.gradient(x)? * (h * h));
        }
        let guess = x + p * h;
        let tol = momentum_tolerance(x, &guess, h).max(1e-12 * p.amax());
        newton(|xb| Ok(self.legendre_minus(x, xb, h)? - p), guess, tol)
    }
}

/// Round-off floor for momenta built from difference quotients `Δ/h`.
fn momentum_tolerance(xa: &Vector, xb: &Vector, h: f64) -> f64 {
    let scale = xa.amax().max(xb.amax()).max(1.0);
    1e-12_f64.max(16.0 * f64::EPSILON * scale / h.abs())
}

/// Damped Newton iteration with a finite-difference Jacobian.
fn newton<F>(f: F, mut x: Vector, tol: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    const MAX_ITER: usize = 50;
    let n = x.len();
    let mut r = f(&x)?;
    let mut norm = r.amax();
    for _ in 0..MAX_ITER {
        if norm < tol {
            return Ok(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let d = 1e-7 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += d;
            xm[c] -= d;
            let col = (f(&xp)? - f(&xm)?) / (2.0 * d);
            jac.set_column(c, &col);
        }
        let Some(step) = jac.lu().solve(&r) else {
            break;
        };
        let mut lambda = 1.0;
        loop {
            let trial = &x - &step * lambda;
            if let Ok(rt) = f(&trial) {
                let nt = rt.amax();
                if nt < norm || lambda < 1e-4 {
                    x = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(GeodynError::Newton {
                    iterations: MAX_ITER,
                    residual: norm,
                });
            }
        }
    }
    if norm < tol {
        return Ok(x);
    }
    Err(GeodynError::Newton {
        iterations: MAX_ITER,
        residual: norm,
    })
}

pub fn legendre_minus(
    id: LagrangianId,
    split: &SplitPotential,
    xa: &Vector,
    xb: &Vector,
    h: f64,
) -> Result<Vector> {
    DiscreteLagrangian::new(id, split).legendre_minus(xa, xb, h)
}

pub fn legendre_plus(
    id: LagrangianId,
    split: &SplitPotential,
    xa: &Vector,
    xb: &Vector,
    h: f64,
) -> Result<Vector> {
    DiscreteLagrangian::new(id, split).legendre_plus(xa, xb, h)
}

/// Second point `x₁` of a two-step run: solves `v₀ = −h∂₁𝕃(x₀, x₁, h)`.
pub fn bootstrap_first_point(
    s0: &PhaseState,
    id: LagrangianId,
    split: &SplitPotential,
    h: f64,
) -> Result<Vector> {
    DiscreteLagrangian::new(id, split).solve_forward(&s0.x, &s0.v, h)
}

/// One step of the discrete Euler–Lagrange equations of `id`.
///
/// `𝕃₁`, `𝕃₂` and the split first-order Lagrangian use their explicit
/// recurrences; the others match momenta through a Newton solve.
pub fn del_step(
    id: LagrangianId,
    split: &SplitPotential,
    x_prev: &Vector,
    x_curr: &Vector,
    h: f64,
) -> Result<Vector> {
    let ts = TwoStepState {
        x_prev: x_prev.clone(),
        x_curr: x_curr.clone(),
        h,
    };
    match id {
        LagrangianId::L1 | LagrangianId::L2 => step_stormer_verlet(&ts, split),
        LagrangianId::First => del_two_step_vi1(&ts, split),
        _ => {
            let lag = DiscreteLagrangian::new(id, split);
            let p = lag.legendre_plus(x_prev, x_curr, h)?;
            lag.solve_forward(x_curr, &p, h)
        }
    }
}

/// How a method is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Form {
    /// One-step map on `(x, p)`.
    #[default]
    Composition,
    /// Discrete Euler–Lagrange recurrence on positions, bootstrapped from the
    /// seed and reported through the discrete Legendre transform.
    TwoStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub state: PhaseState,
    pub conserved: Option<ConservedSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub method: String,
    pub h: f64,
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    /// Record sampled from a function of time at `t = n·h`, `n = 0..=steps`.
    pub fn from_fn<F>(label: &str, h: f64, steps: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<PhaseState>,
    {
        let samples = (0..=steps)
            .map(|n| {
                let t = n as f64 * h;
                Ok(Sample {
                    step: n,
                    t,
                    state: f(t)?,
                    conserved: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryRecord {
            method: label.to_string(),
            h,
            samples,
        })
    }

    pub fn last(&self) -> &PhaseState {
        &self.samples.last().expect("records are never empty").state
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub form: Form,
    pub h: f64,
    pub steps: usize,
    pub split: SplitPotential,
    /// Evaluate conserved quantities per sample.
    pub diagnostics: bool,
}

impl RunConfig {
    pub fn new(method: Method, h: f64, steps: usize) -> Self {
        RunConfig {
            method,
            form: Form::Composition,
            h,
            steps,
            split: SplitPotential::kepler_equal(),
            diagnostics: true,
        }
    }
}

/// Integrates `steps` steps from `s0`; sample `n` is at time `n·h`.
pub fn run(cfg: &RunConfig, s0: &PhaseState) -> Result<TrajectoryRecord> {
    if cfg.steps == 0 {
        return Err(GeodynError::InvalidArgument("steps must be at least 1".into()));
    }
    if !(cfg.h.is_finite() && cfg.h > 0.0) {
        return Err(GeodynError::InvalidArgument(format!(
            "step size {} must be positive",
            cfg.h
        )));
    }
    let h = cfg.h;
    let sample = |n: usize, state: PhaseState| -> Result<Sample> {
        let c = if cfg.diagnostics {
            Some(conserved(&state).map_err(|e| e.at_step(n))?)
        } else {
            None
        };
        Ok(Sample {
            step: n,
            t: n as f64 * h,
            state,
            conserved: c,
        })
    };
    let mut samples = Vec::with_capacity(cfg.steps + 1);
    samples.push(sample(0, s0.clone())?);
    match cfg.form {
        Form::Composition => {
            let mut s = s0.clone();
            for n in 1..=cfg.steps {
                s = cfg.method.step(&s, &cfg.split, h).map_err(|e| e.at_step(n))?;
                samples.push(sample(n, s.clone())?);
            }
        }
        Form::TwoStep => {
            let id = cfg.method.lagrangian();
            let lag = DiscreteLagrangian::new(id, &cfg.split);
            let mut x_prev = s0.x.clone();
            let mut x_curr = bootstrap_first_point(s0, id, &cfg.split, h).map_err(|e| e.at_step(1))?;
            for n in 1..=cfg.steps {
                let p = lag
                    .legendre_plus(&x_prev, &x_curr, h)
                    .map_err(|e| e.at_step(n))?;
                samples.push(sample(n, PhaseState::new(x_curr.clone(), p))?);
                if n < cfg.steps {
                    let next = del_step(id, &cfg.split, &x_prev, &x_curr, h)
                        .map_err(|e| e.at_step(n + 1))?;
                    x_prev = std::mem::replace(&mut x_curr, next);
                }
            }
        }
    }
    Ok(TrajectoryRecord {
        method: cfg.method.id().to_string(),
        h,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kepler::{vec2, Free, Harmonic, KeplerPart};
    use approx::assert_relative_eq;

    fn seed() -> PhaseState {
        PhaseState::planar(0.4, 0.0, 0.0, 2.0)
    }

    #[test]
    fn sym_euler_examples() {
        let k = SplitPotential::kepler_whole();
        let s = step_sym_euler(&seed(), &k, 0.05).unwrap();
        assert_relative_eq!(s.v[0], -0.05 * 6.25, epsilon = 1e-14);
        assert_relative_eq!(s.v[0], -0.3125, epsilon = 1e-14);
        assert_eq!(s.v[1], 2.0);
        assert_relative_eq!(s.x[0], 0.4 - 0.05 * 0.3125, epsilon = 1e-15);
        assert_relative_eq!(s.x[0], 0.384375, epsilon = 1e-15);
        assert_relative_eq!(s.x[1], 0.1, epsilon = 1e-15);

        assert_eq!(step_sym_euler(&seed(), &k, 0.0).unwrap(), seed());

        let s = step_sym_euler(&PhaseState::planar(1.0, 0.0, 0.0, 0.0), &k, 0.1).unwrap();
        assert_relative_eq!(s.v[0], -0.1, epsilon = 1e-15);
        assert_relative_eq!(s.x[0], 0.99, epsilon = 1e-15);
    }

    #[test]
    fn stormer_verlet_examples() {
        let ts = TwoStepState {
            x_prev: vec2(1.0, 0.0),
            x_curr: vec2(1.0, 0.0),
            h: 0.1,
        };
        let k = SplitPotential::kepler_whole();
        let x = step_stormer_verlet(&ts, &k).unwrap();
        assert_relative_eq!(x[0], 2.0 - 1.0 - 0.01, epsilon = 1e-15);
        assert_eq!(x[1], 0.0);
        let lin = SplitPotential::single(Harmonic { stiffness: 1.0 });
        assert_relative_eq!(step_stormer_verlet(&ts, &lin).unwrap()[0], 0.99, epsilon = 1e-15);

        let ts0 = TwoStepState {
            x_prev: vec2(0.3, 0.2),
            x_curr: vec2(0.5, 0.1),
            h: 0.0,
        };
        assert_eq!(step_stormer_verlet(&ts0, &k).unwrap(), vec2(0.7, 0.0));
    }

    #[test]
    fn kdk_matches_central_difference() {
        let k = SplitPotential::kepler_whole();
        let h = 0.05;
        let mut s = seed();
        let mut xs = vec![s.x.clone()];
        for _ in 0..50 {
            s = step_stormer_verlet_kdk(&s, &k, h).unwrap();
            xs.push(s.x.clone());
        }
        for n in 1..50 {
            let ts = TwoStepState {
                x_prev: xs[n - 1].clone(),
                x_curr: xs[n].clone(),
                h,
            };
            let x = step_stormer_verlet(&ts, &k).unwrap();
            assert!((x - &xs[n + 1]).amax() < 1e-12);
        }
    }

    #[test]
    fn substep_examples() {
        let split = SplitPotential::kepler_equal();
        let s1 = substep_flow(0, &seed(), &split, 0.05).unwrap();
        assert_eq!(s1.x, seed().x);
        assert_relative_eq!(s1.v[0], -0.05 * 0.5 * 6.25, epsilon = 1e-15);
        assert_relative_eq!(s1.v[0], -0.15625, epsilon = 1e-15);
        assert_eq!(s1.v[1], 2.0);

        let s2 = substep_flow(1, &s1, &split, 0.05).unwrap();
        assert_eq!(s2.x[0], 0.4);
        assert_relative_eq!(s2.x[1], 0.1, epsilon = 1e-15);
        let r3 = (0.4f64 * 0.4 + 0.01).powf(1.5);
        assert_relative_eq!(s2.v[0], -0.15625 - 0.05 * 0.5 * 0.4 / r3, epsilon = 1e-14);
        assert_relative_eq!(s2.v[1], 2.0 - 0.05 * 0.5 * 0.1 / r3, epsilon = 1e-14);

        assert_eq!(step_vi1(&seed(), &split, 0.05).unwrap(), s2);
        assert_eq!(substep_flow(0, &seed(), &split, 0.0).unwrap(), seed());
        assert!(substep_flow(2, &seed(), &split, 0.05).is_err());
    }

    #[test]
    fn single_part_vi1_is_drift_kick_euler() {
        let whole = SplitPotential::kepler_whole();
        let s = PhaseState::planar(0.7, -0.3, 0.2, 1.1);
        let a = step_vi1(&s, &whole, 0.03).unwrap();
        let b = step_sym_euler_adjoint(&s, &whole, 0.03).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
        let a = step_vi1_adjoint(&s, &whole, 0.03).unwrap();
        let b = step_sym_euler(&s, &whole, 0.03).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn adjoint_identities() {
        let split = SplitPotential::kepler_pair(0.3).unwrap();
        let s = PhaseState::planar(0.7, -0.3, 0.2, 1.1);
        let h = 0.04;
        let back = step_vi1_adjoint(&step_vi1(&s, &split, h).unwrap(), &split, -h).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-12);
        for ord in [Vi2Ordering::AdjointLast, Vi2Ordering::AdjointFirst] {
            let f = step_vi2(&s, &split, h, ord).unwrap();
            assert!(step_vi2(&f, &split, -h, ord).unwrap().max_abs_diff(&s) < 1e-12);
        }
        assert_eq!(step_vi2(&s, &split, 0.0, Vi2Ordering::AdjointLast).unwrap(), s);
    }

    #[test]
    fn vi2_local_error_is_third_order() {
        let split = SplitPotential::kepler_equal();
        let errs: Vec<f64> = [0.05, 0.025]
            .iter()
            .map(|&h| {
                let num = step_vi2(&seed(), &split, h, Vi2Ordering::AdjointLast).unwrap();
                let exact = crate::kepler::analytic_reference(&seed(), h).unwrap();
                num.max_abs_diff(&exact)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 3.0).abs() < 0.3, "local order {order}");
        let c = errs[0] / 0.05f64.powi(3);
        assert!(errs[1] <= 1.2 * c * 0.025f64.powi(3));
    }

    #[test]
    fn force_free_del_is_linear_extrapolation() {
        let split = SplitPotential::single(Free);
        let ts = TwoStepState {
            x_prev: vec2(0.1, 0.2),
            x_curr: vec2(0.4, -0.1),
            h: 0.1,
        };
        let x = del_two_step_vi1(&ts, &split).unwrap();
        assert!((x - vec2(0.7, -0.4)).amax() < 1e-15);
    }

    #[test]
    fn legendre_l1_closed_form() {
        let k = SplitPotential::kepler_whole();
        let (xa, xb, h) = (vec2(0.4, 0.1), vec2(0.38, 0.2), 0.05);
        let p = legendre_minus(LagrangianId::L1, &k, &xa, &xb, h).unwrap();
        let expect = (&xb - &xa) / h + crate::kepler::grad_potential(&xa).unwrap() * h;
        assert!((p - expect).amax() < 1e-14);
        let p = legendre_minus(LagrangianId::L1, &k, &xa, &xa, h).unwrap();
        assert!((p - crate::kepler::grad_potential(&xa).unwrap() * h).amax() < 1e-15);
    }

    #[test]
    fn closed_form_transforms_match_finite_differences() {
        let split = SplitPotential::kepler(&[0.2, 0.8]).unwrap();
        let (xa, xb, h) = (vec2(0.5, 0.3), vec2(0.47, 0.38), 0.05);
        for id in [
            LagrangianId::L1,
            LagrangianId::L2,
            LagrangianId::First,
            LagrangianId::Adjoint,
            LagrangianId::Second(Vi2Ordering::AdjointLast),
            LagrangianId::Second(Vi2Ordering::AdjointFirst),
        ] {
            let lag = DiscreteLagrangian::new(id, &split);
            let (fm, fp) = lag.legendre_fd(&xa, &xb, h, 1e-5).unwrap();
            let pm = lag.legendre_minus(&xa, &xb, h).unwrap();
            let pp = lag.legendre_plus(&xa, &xb, h).unwrap();
            assert!((&pm - fm).amax() < 1e-6, "{id:?} minus");
            assert!((&pp - fp).amax() < 1e-6, "{id:?} plus");
        }
    }

    #[test]
    fn bootstrap_examples() {
        let split = SplitPotential::kepler_equal();
        let s0 = PhaseState::canonical(0.6).unwrap();
        let h = 0.05;
        let x1 = bootstrap_first_point(&s0, LagrangianId::L1, &split, h).unwrap();
        let g = crate::kepler::grad_potential(&s0.x).unwrap();
        assert!((&x1 - (&s0.x + &s0.v * h - g * (h * h))).amax() < 1e-15);

        let x1 = bootstrap_first_point(&s0, LagrangianId::First, &split, h).unwrap();
        let p = legendre_minus(LagrangianId::First, &split, &s0.x, &x1, h).unwrap();
        assert!((p - &s0.v).amax() < 1e-12);

        let tiny = bootstrap_first_point(&s0, LagrangianId::First, &split, 1e-9).unwrap();
        assert!((tiny - &s0.x).amax() < 1e-8);
        assert_eq!(
            bootstrap_first_point(&s0, LagrangianId::First, &split, 0.0).unwrap(),
            s0.x
        );
    }

    #[test]
    fn two_step_forms_match_compositions() {
        let split = SplitPotential::kepler_pair(0.35).unwrap();
        let s0 = PhaseState::canonical(0.6).unwrap();
        for m in Method::ALL {
            let mut cfg = RunConfig::new(m, 0.05, 60);
            cfg.split = split.clone();
            let a = run(&cfg, &s0).unwrap();
            cfg.form = Form::TwoStep;
            let b = run(&cfg, &s0).unwrap();
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                assert!(sa.state.max_abs_diff(&sb.state) < 1e-9, "{m} step {}", sa.step);
            }
        }
    }

    #[test]
    fn three_dimensional_split_runs() {
        let split = SplitPotential::kepler(&[0.5, 0.5]).unwrap();
        let s0 = PhaseState::new(
            Vector::from_vec(vec![1.0, 0.0, 0.0]),
            Vector::from_vec(vec![0.0, 0.8, 0.3]),
        );
        let mut cfg = RunConfig::new(Method::Vi1, 0.01, 100);
        cfg.split = split;
        let a = run(&cfg, &s0).unwrap();
        cfg.form = Form::TwoStep;
        let b = run(&cfg, &s0).unwrap();
        assert!(a.last().max_abs_diff(b.last()) < 1e-10);
        let h0 = a.samples[0].conserved.as_ref().unwrap().h;
        let h1 = a.samples[100].conserved.as_ref().unwrap().h;
        assert!((h1 - h0).abs() < 1e-2);
    }

    #[test]
    fn run_rejects_zero_steps_and_reports_failing_step() {
        let s0 = PhaseState::canonical(0.6).unwrap();
        assert!(run(&RunConfig::new(Method::Vi1, 0.05, 0), &s0).is_err());
        // Radial plunge landing exactly on the origin after one step.
        let mut cfg = RunConfig::new(Method::SymEuler, 0.5, 10);
        cfg.split = SplitPotential::single(KeplerPart { weight: 1.0 });
        match run(&cfg, &PhaseState::planar(1.0, 0.0, -1.5, 0.0)) {
            Err(GeodynError::Step { step, source }) => {
                assert_eq!(step, 1);
                assert!(matches!(*source, GeodynError::SingularOrigin(_)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn times_are_exact_multiples() {
        let r = run(
            &RunConfig::new(Method::StormerVerlet, 0.1, 1000),
            &PhaseState::canonical(0.6).unwrap(),
        )
        .unwrap();
        assert_eq!(r.samples[1000].t, 1000.0 * 0.1);
        assert_eq!(r.samples[3].t, 3.0 * 0.1);
    }

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        assert!("rk4".parse::<Method>().is_err());
        assert!("L3".parse::<LagrangianId>().is_err());
    }
}
