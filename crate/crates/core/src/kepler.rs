//! The Kepler problem `ẍ = -∇φ(x)`, `φ(x) = -1/|x|`.
//!
//! Conserved quantities follow the componentwise formulas
//!
//! ```text
//! H   = ½|v|² − 1/|x|
//! m   = x₁v₂ − x₂v₁                      (N = 2)
//! A_i = x_i|v|² − v_i(x·v) − x_i/|x|     (any N)
//! ```
//!
//! Note the sign convention: `m` is `x × v`, while the compact 3-D form
//! `A = v × m' − x/|x|` uses `m' = x × v`; only the componentwise formula is
//! implemented here.
//!
//! LRL diagnostics (eccentricity, angle, analytic orbit, period averages) are
//! planar and reject `N ≠ 2`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{DualNum, HyperDual64};

use crate::error::{GeodynError, Result, SINGULAR_RADIUS};
use crate::integrators::TrajectoryRecord;

pub type Vector = DVector<f64>;

/// Eccentricity below which an orbit is treated as circular.
pub const CIRCULAR_ECC: f64 = 1e-12;

pub fn vec2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

/// Position and velocity (equivalently momentum, since the mass is 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vector,
    pub v: Vector,
}

impl PhaseState {
    pub fn new(x: Vector, v: Vector) -> Self {
        assert_eq!(x.len(), v.len(), "position and velocity dimensions differ");
        PhaseState { x, v }
    }

    pub fn planar(x1: f64, x2: f64, v1: f64, v2: f64) -> Self {
        PhaseState::new(vec2(x1, x2), vec2(v1, v2))
    }

    /// Periapsis state of the unit-semi-major-axis orbit with eccentricity `e`:
    /// `(1 − e, 0, 0, √((1 + e)/(1 − e)))`.
    pub fn canonical(e: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&e) {
            return Err(GeodynError::InvalidArgument(format!(
                "eccentricity {e} is outside [0, 1)"
            )));
        }
        Ok(PhaseState::planar(1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Largest componentwise difference over positions and velocities.
    pub fn max_abs_diff(&self, other: &PhaseState) -> f64 {
        (&self.x - &other.x)
            .amax()
            .max((&self.v - &other.v).amax())
    }
}

pub(crate) fn checked_radius(x: &Vector) -> Result<f64> {
    let r = x.norm();
    if !r.is_finite() {
        return Err(GeodynError::NonFinite("position".into()));
    }
    if r < SINGULAR_RADIUS {
        return Err(GeodynError::SingularOrigin(r));
    }
    Ok(r)
}

/// `φ(x) = −1/|x|`.
pub fn potential(x: &Vector) -> Result<f64> {
    Ok(-1.0 / checked_radius(x)?)
}

/// `∇φ(x) = x/|x|³`.
pub fn grad_potential(x: &Vector) -> Result<Vector> {
    let r = checked_radius(x)?;
    Ok(x / (r * r * r))
}

/// A scalar potential with its first and second derivatives.
pub trait Potential: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> Result<f64>;
    fn gradient(&self, x: &Vector) -> Result<Vector>;
    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>>;

    /// `Some(w)` when the potential is `w·(−1/|x|)`.
    fn kepler_weight(&self) -> Option<f64> {
        None
    }
}

/// `w·(−1/|x|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerPart {
    pub weight: f64,
}

impl Potential for KeplerPart {
    fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.weight * potential(x)?)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        Ok(grad_potential(x)? * self.weight)
    }

    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>> {
        let r = checked_radius(x)?;
        let n = x.len();
        let r3 = r * r * r;
        let r5 = r3 * r * r;
        let mut h = DMatrix::identity(n, n) / r3;
        h -= (x * x.transpose()) * (3.0 / r5);
        Ok(h * self.weight)
    }

    fn kepler_weight(&self) -> Option<f64> {
        Some(self.weight)
    }
}

/// `½λ|x|²`, the linear test field `∇φ = λx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub stiffness: f64,
}

impl Potential for Harmonic {
    fn value(&self, x: &Vector) -> Result<f64> {
        Ok(0.5 * self.stiffness * x.norm_squared())
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        Ok(x * self.stiffness)
    }

    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(x.len(), x.len()) * self.stiffness)
    }
}

/// `φ ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Free;

impl Potential for Free {
    fn value(&self, _x: &Vector) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        Ok(Vector::zeros(x.len()))
    }

    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(x.len(), x.len()))
    }
}

/// Ordered parts `φ⁽¹⁾, …, φ⁽ᴷ⁾` summing to `φ`.
///
/// Part `i` is paired with the drift of coordinate `i`; the last part drifts
/// every remaining coordinate, so a split with `K` parts is usable in any
/// dimension `N ≥ K`.
#[derive(Clone, Debug)]
pub struct SplitPotential {
    parts: Vec<Arc<dyn Potential>>,
}

impl SplitPotential {
    pub fn new(parts: Vec<Arc<dyn Potential>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(GeodynError::InvalidSplit("no parts".into()));
        }
        Ok(SplitPotential { parts })
    }

    pub fn single<P: Potential + 'static>(p: P) -> Self {
        SplitPotential {
            parts: vec![Arc::new(p)],
        }
    }

    /// Kepler potential split into parts `wᵢ·(−1/|x|)`; weights must sum to 1.
    pub fn kepler(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(GeodynError::InvalidSplit("no weights".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || weights.iter().any(|w| !w.is_finite()) {
            return Err(GeodynError::InvalidSplit(format!(
                "weights {weights:?} do not sum to 1"
            )));
        }
        Ok(SplitPotential {
            parts: weights
                .iter()
                .map(|&weight| Arc::new(KeplerPart { weight }) as Arc<dyn Potential>)
                .collect(),
        })
    }

    /// Two-part Kepler split with weights `(w, 1 − w)`.
    pub fn kepler_pair(w: f64) -> Result<Self> {
        SplitPotential::kepler(&[w, 1.0 - w])
    }

    /// The equal split `φ⁽¹⁾ = φ⁽²⁾ = −1/(2|x|)`.
    pub fn kepler_equal() -> Self {
        SplitPotential::kepler_pair(0.5).expect("equal weights are valid")
    }

    /// The unsplit Kepler potential.
    pub fn kepler_whole() -> Self {
        SplitPotential::single(KeplerPart { weight: 1.0 })
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part(&self, i: usize) -> &dyn Potential {
        self.parts[i].as_ref()
    }

    /// Kepler weights of every part, if all parts are Kepler parts.
    pub fn kepler_weights(&self) -> Option<Vec<f64>> {
        self.parts.iter().map(|p| p.kepler_weight()).collect()
    }

    /// Coordinates drifted together with part `i` in dimension `n`.
    pub fn block(&self, i: usize, n: usize) -> Range<usize> {
        if i + 1 == self.parts.len() {
            i..n
        } else {
            i..i + 1
        }
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if self.parts.len() > n {
            return Err(GeodynError::InvalidSplit(format!(
                "{} parts exceed dimension {n}",
                self.parts.len()
            )));
        }
        Ok(())
    }
}

impl Potential for SplitPotential {
    fn value(&self, x: &Vector) -> Result<f64> {
        self.parts.iter().map(|p| p.value(x)).sum()
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        let mut g = Vector::zeros(x.len());
        for p in &self.parts {
            g += p.gradient(x)?;
        }
        Ok(g)
    }

    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        for p in &self.parts {
            h += p.hessian(x)?;
        }
        Ok(h)
    }

    fn kepler_weight(&self) -> Option<f64> {
        self.kepler_weights().map(|w| w.iter().sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservedSet {
    pub h: f64,
    /// Signed `x₁v₂ − x₂v₁` for `N = 2`; `|x ∧ v|` otherwise.
    pub m: f64,
    /// Laplace–Runge–Lenz vector.
    pub a: Vector,
    pub ecc: f64,
    /// `atan2(A₂, A₁)` in `(−π, π]`; 0 for circular orbits.
    pub omega: f64,
}

impl ConservedSet {
    pub fn is_circular(&self) -> bool {
        self.ecc < CIRCULAR_ECC
    }
}

pub fn lrl_vector(s: &PhaseState) -> Result<Vector> {
    let r = checked_radius(&s.x)?;
    let v2 = s.v.norm_squared();
    let xv = s.x.dot(&s.v);
    Ok(&s.x * (v2 - 1.0 / r) - &s.v * xv)
}

pub fn conserved(s: &PhaseState) -> Result<ConservedSet> {
    let r = checked_radius(&s.x)?;
    let h = 0.5 * s.v.norm_squared() - 1.0 / r;
    let m = if s.dim() == 2 {
        s.x[0] * s.v[1] - s.x[1] * s.v[0]
    } else {
        let xv = s.x.dot(&s.v);
        (s.x.norm_squared() * s.v.norm_squared() - xv * xv).max(0.0).sqrt()
    };
    let a = lrl_vector(s)?;
    let ecc = a.norm();
    let omega = if ecc < CIRCULAR_ECC || s.dim() < 2 {
        0.0
    } else {
        a[1].atan2(a[0])
    };
    Ok(ConservedSet { h, m, a, ecc, omega })
}

/// Shape, size and orientation of a bound planar orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitElements {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    /// Period `2π a^{3/2}`.
    pub period: f64,
    /// Direction of periapsis (angle of the LRL vector).
    pub omega: f64,
    /// `+1` for counter-clockwise motion (`m > 0`), `−1` otherwise.
    pub orientation: f64,
}

fn require_planar(n: usize) -> Result<()> {
    if n != 2 {
        return Err(GeodynError::Dimension {
            expected: 2,
            found: n,
        });
    }
    Ok(())
}

pub fn orbit_elements(s: &PhaseState) -> Result<OrbitElements> {
    require_planar(s.dim())?;
    let c = conserved(s)?;
    if c.h >= 0.0 {
        return Err(GeodynError::NonNegativeEnergy(c.h));
    }
    let a = -1.0 / (2.0 * c.h);
    let e = c.ecc;
    Ok(OrbitElements {
        a,
        b: a * (1.0 - e * e).max(0.0).sqrt(),
        e,
        period: 2.0 * PI * a.powf(1.5),
        omega: c.omega,
        orientation: if c.m < 0.0 { -1.0 } else { 1.0 },
    })
}

/// Solves `M = E − e·sin E` for the eccentric anomaly.
///
/// Newton from `E₀ = M` to `|residual| < 1e-13` within 50 iterations, with
/// bisection on `[M − e, M + e]` as fallback.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    if !mean_anomaly.is_finite() || !(0.0..1.0).contains(&e) {
        return Err(GeodynError::KeplerSolve { mean_anomaly, ecc: e });
    }
    let turns = (mean_anomaly / (2.0 * PI)).round();
    let m = mean_anomaly - 2.0 * PI * turns;
    let residual = |ea: f64| ea - e * ea.sin() - m;

    let mut ea = m;
    for _ in 0..50 {
        let f = residual(ea);
        if f.abs() < 1e-13 {
            return Ok(ea + 2.0 * PI * turns);
        }
        ea -= f / (1.0 - e * ea.cos());
        if !ea.is_finite() {
            break;
        }
    }

    let (mut lo, mut hi) = (m - e - 1e-12, m + e + 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid);
        if f.abs() < 1e-13 || hi - lo < 1e-15 {
            return Ok(mid + 2.0 * PI * turns);
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(GeodynError::KeplerSolve { mean_anomaly, ecc: e })
}

/// Exact elliptic orbit parameterized by time.
#[derive(Debug, Clone, PartialEq)]
pub struct KeplerOrbit {
    a: f64,
    b: f64,
    e: f64,
    mean_motion: f64,
    p_hat: [f64; 2],
    q_hat: [f64; 2],
    mean_anomaly0: f64,
}

impl KeplerOrbit {
    pub fn from_state(s: &PhaseState) -> Result<Self> {
        let el = orbit_elements(s)?;
        if el.b <= 0.0 || conserved(s)?.m == 0.0 {
            return Err(GeodynError::DegenerateOrbit);
        }
        let p_hat = if el.e < CIRCULAR_ECC {
            let r = s.x.norm();
            [s.x[0] / r, s.x[1] / r]
        } else {
            [el.omega.cos(), el.omega.sin()]
        };
        let q_hat = [-el.orientation * p_hat[1], el.orientation * p_hat[0]];
        let xi = s.x[0] * p_hat[0] + s.x[1] * p_hat[1];
        let eta = s.x[0] * q_hat[0] + s.x[1] * q_hat[1];
        let ea0 = (eta / el.b).atan2(xi / el.a + el.e);
        Ok(KeplerOrbit {
            a: el.a,
            b: el.b,
            e: el.e,
            mean_motion: el.a.powf(-1.5),
            p_hat,
            q_hat,
            mean_anomaly0: ea0 - el.e * ea0.sin(),
        })
    }

    /// Orbit described by `el`, at periapsis when `t = 0`.
    pub fn from_elements(el: &OrbitElements) -> Result<Self> {
        if !(el.a > 0.0 && el.b > 0.0 && (0.0..1.0).contains(&el.e)) {
            return Err(GeodynError::InvalidArgument(format!(
                "elements {el:?} do not describe a bound orbit"
            )));
        }
        let p_hat = [el.omega.cos(), el.omega.sin()];
        Ok(KeplerOrbit {
            a: el.a,
            b: el.b,
            e: el.e,
            mean_motion: el.a.powf(-1.5),
            p_hat,
            q_hat: [-el.orientation * p_hat[1], el.orientation * p_hat[0]],
            mean_anomaly0: 0.0,
        })
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.mean_motion
    }

    pub fn state_at(&self, t: f64) -> Result<PhaseState> {
        let ea = solve_kepler(self.mean_anomaly0 + self.mean_motion * t, self.e)?;
        let (sin_e, cos_e) = ea.sin_cos();
        let ea_dot = self.mean_motion / (1.0 - self.e * cos_e);
        let xi = self.a * (cos_e - self.e);
        let eta = self.b * sin_e;
        let xi_dot = -self.a * sin_e * ea_dot;
        let eta_dot = self.b * cos_e * ea_dot;
        let (p, q) = (self.p_hat, self.q_hat);
        Ok(PhaseState::planar(
            xi * p[0] + eta * q[0],
            xi * p[1] + eta * q[1],
            xi_dot * p[0] + eta_dot * q[0],
            xi_dot * p[1] + eta_dot * q[1],
        ))
    }
}

/// Exact state at time `t` on the bound orbit through `s0`.
pub fn analytic_reference(s0: &PhaseState, t: f64) -> Result<PhaseState> {
    if t == 0.0 {
        orbit_elements(s0)?;
        return Ok(s0.clone());
    }
    KeplerOrbit::from_state(s0)?.state_at(t)
}

/// Conserved quantity selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Energy,
    AngularMomentum,
    Lrl1,
    Lrl2,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [
        Quantity::Energy,
        Quantity::AngularMomentum,
        Quantity::Lrl1,
        Quantity::Lrl2,
    ];

    pub fn value(self, c: &ConservedSet) -> f64 {
        match self {
            Quantity::Energy => c.h,
            Quantity::AngularMomentum => c.m,
            Quantity::Lrl1 => c.a[0],
            Quantity::Lrl2 => c.a[1],
        }
    }

    /// Noether characteristic `Q` with `dP/dt = Q·(ẍ + ∇φ)`.
    pub fn characteristic(self, x: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        let [x1, x2] = x;
        let [v1, v2] = v;
        match self {
            Quantity::Energy => [v1, v2],
            Quantity::AngularMomentum => [-x2, x1],
            Quantity::Lrl1 => [-x2 * v2, 2.0 * x1 * v2 - v1 * x2],
            Quantity::Lrl2 => [2.0 * x2 * v1 - x1 * v2, -x1 * v1],
        }
    }
}

/// `(v_H, v_m, v_{A1}, v_{A2})` at `s`.
pub fn characteristics(s: &PhaseState) -> Result<[[f64; 2]; 4]> {
    require_planar(s.dim())?;
    let x = [s.x[0], s.x[1]];
    let v = [s.v[0], s.v[1]];
    Ok(Quantity::ALL.map(|q| q.characteristic(x, v)))
}

/// `max |dP/dt − Q·N[x]|` over interior samples, both sides by central
/// differences with the record's uniform spacing.
pub fn noether_residual(traj: &TrajectoryRecord, which: Quantity) -> Result<f64> {
    let n = traj.samples.len();
    if n < 3 {
        return Err(GeodynError::TrajectoryTooShort(n));
    }
    require_planar(traj.samples[0].state.dim())?;
    let dt = traj.h;
    let values = traj
        .samples
        .iter()
        .map(|s| Ok(which.value(&conserved(&s.state)?)))
        .collect::<Result<Vec<f64>>>()?;
    let mut worst: f64 = 0.0;
    for k in 1..n - 1 {
        let prev = &traj.samples[k - 1].state;
        let cur = &traj.samples[k].state;
        let next = &traj.samples[k + 1].state;
        let dp = (values[k + 1] - values[k - 1]) / (2.0 * dt);
        let acc = (&next.x - &cur.x * 2.0 + &prev.x) / (dt * dt);
        let residual_n = acc + grad_potential(&cur.x)?;
        let q = which.characteristic([cur.x[0], cur.x[1]], [cur.v[0], cur.v[1]]);
        let qn = q[0] * residual_n[0] + q[1] * residual_n[1];
        worst = worst.max((dp - qn).abs());
    }
    Ok(worst)
}

/// A planar Lagrangian `L̄(x, ẋ)` written once for any dual-number type so its
/// Euler–Lagrange expression is exact up to round-off.
pub trait LagrangianField {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D;

    fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.eval(x, v)
    }

    /// `EL(L̄) = d/dt ∂L̄/∂ẋ − ∂L̄/∂x` along a curve with acceleration `a`.
    fn euler_lagrange(&self, x: [f64; 2], v: [f64; 2], a: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (i, slot) in out.iter_mut().enumerate() {
            // eps1 along ẋ_i, eps2 along the tangent (ẋ, ẍ): eps1eps2 = d/dt ∂L̄/∂ẋ_i.
            let xd = [0, 1].map(|k| HyperDual64::new(x[k], 0.0, v[k], 0.0));
            let vd = [0, 1].map(|k| {
                HyperDual64::new(v[k], if k == i { 1.0 } else { 0.0 }, a[k], 0.0)
            });
            let dt_dv = self.eval(xd, vd).eps1eps2;

            let xd = [0, 1].map(|k| {
                HyperDual64::new(x[k], if k == i { 1.0 } else { 0.0 }, 0.0, 0.0)
            });
            let vd = [0, 1].map(|k| HyperDual64::from_re(v[k]));
            let dx = self.eval(xd, vd).eps1;
            *slot = dt_dv - dx;
        }
        out
    }
}

fn simpson_periodic_mean(f: &dyn Fn(f64) -> Result<f64>, period: f64, n: usize) -> Result<f64> {
    let dt = period / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(k as f64 * dt)?;
    }
    Ok(acc * dt / 3.0 / period)
}

/// Period average `[⟨EL(L̄), Q⟩]` along the analytic orbit with elements `el`.
///
/// Composite Simpson with 2048 and 4096 nodes; the finer value is returned
/// when the two agree to `1e-8` (relative to the mean magnitude of the
/// integrand when that exceeds 1).
pub fn perturbation_average<L: LagrangianField>(
    lbar: &L,
    which: Quantity,
    el: &OrbitElements,
) -> Result<f64> {
    let orbit = KeplerOrbit::from_elements(el)?;
    let integrand = |t: f64| -> Result<f64> {
        let s = orbit.state_at(t)?;
        let x = [s.x[0], s.x[1]];
        let v = [s.v[0], s.v[1]];
        let g = grad_potential(&s.x)?;
        let el = lbar.euler_lagrange(x, v, [-g[0], -g[1]]);
        let q = which.characteristic(x, v);
        let y = el[0] * q[0] + el[1] * q[1];
        if y.is_finite() {
            Ok(y)
        } else {
            Err(GeodynError::NonFinite("perturbation integrand".into()))
        }
    };
    let coarse = simpson_periodic_mean(&integrand, orbit.period(), 2048)?;
    let fine = simpson_periodic_mean(&integrand, orbit.period(), 4096)?;
    let scale = simpson_periodic_mean(&|t| integrand(t).map(f64::abs), orbit.period(), 2048)?;
    if (coarse - fine).abs() > 1e-8 * scale.max(1.0) {
        return Err(GeodynError::Quadrature { coarse, fine });
    }
    Ok(fine)
}
