//! Backward error analysis: the closed-form modified equation of the linear
//! central-difference scheme, truncated modified Lagrangians of the four
//! Kepler integrators, and predicted versus measured per-period drift of the
//! Laplace–Runge–Lenz vector.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_dual::{DualNum, HyperDual64};
use rayon::prelude::*;

use crate::error::{GeodynError, Result};
use crate::integrators::{step_stormer_verlet, Method, TwoStepState};
use crate::kepler::{
    conserved, grad_potential, orbit_elements, perturbation_average, vec2, Harmonic,
    KeplerOrbit, LagrangianField, OrbitElements, PhaseState, Quantity, SplitPotential,
};

/// Partial sum of the linear modified series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    /// `false` when `λh² ≥ 4`, where the series diverges.
    pub within_radius: bool,
}

/// `Σ_{k=1}^{k_max} 2((k−1)!)²/(2k)! h^{2k−2} λᵏ`, the frequency squared of the
/// modified equation of `x_{n+1} − 2x_n + x_{n−1} = −λh²x_n`.
pub fn linear_modified_series(lambda: f64, h: f64, k_max: usize) -> Result<SeriesSum> {
    if !(lambda > 0.0) || !(h >= 0.0) || k_max == 0 {
        return Err(GeodynError::InvalidArgument(format!(
            "series needs λ > 0, h ≥ 0 and k_max ≥ 1 (got λ={lambda}, h={h}, k_max={k_max})"
        )));
    }
    let z = lambda * h * h;
    let mut coeff = 1.0;
    let mut power = lambda;
    let mut value = 0.0;
    for k in 1..=k_max {
        value += coeff * power;
        let kf = k as f64;
        coeff *= kf * kf / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
        power *= z;
    }
    Ok(SeriesSum {
        value,
        within_radius: z < 4.0,
    })
}

/// Effective frequency `Ω = (2/h)·arcsin(h√λ/2)` of the central-difference scheme.
pub fn linear_dispersion(lambda: f64, h: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(h >= 0.0) {
        return Err(GeodynError::InvalidArgument(format!(
            "dispersion needs λ > 0 and h ≥ 0 (got λ={lambda}, h={h})"
        )));
    }
    let z = lambda * h * h;
    if z >= 4.0 {
        return Err(GeodynError::StabilityBoundary(z));
    }
    if h == 0.0 {
        return Ok(lambda.sqrt());
    }
    Ok(2.0 * (0.5 * h * lambda.sqrt()).asin() / h)
}

/// Angular frequency of the central-difference scheme on `φ = ½λx²`, measured
/// from linearly interpolated zero crossings of `steps` iterates started at
/// `x_{−1} = x_0 = 1`.
pub fn measured_linear_frequency(lambda: f64, h: f64, steps: usize) -> Result<f64> {
    linear_dispersion(lambda, h)?;
    if !(h > 0.0) {
        return Err(GeodynError::InvalidArgument("h must be positive".into()));
    }
    let pot = Harmonic { stiffness: lambda };
    let one = crate::kepler::Vector::from_element(1, 1.0);
    let mut ts = TwoStepState {
        x_prev: one.clone(),
        x_curr: one,
        h,
    };
    let mut crossings = Vec::new();
    for n in 0..steps {
        let next = step_stormer_verlet(&ts, &pot)?;
        let (a, b) = (ts.x_curr[0], next[0]);
        if a != 0.0 && a.signum() != b.signum() {
            crossings.push((n as f64 + a / (a - b)) * h);
        }
        ts.x_prev = std::mem::replace(&mut ts.x_curr, next);
    }
    if crossings.len() < 2 {
        return Err(GeodynError::TrajectoryTooShort(steps));
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Ok(PI * (crossings.len() - 1) as f64 / span)
}

/// Kepler potential `−1/|x|` and its first and second partials, generic over
/// dual numbers.
fn kepler_partials<D: DualNum<Primitive = f64> + Copy>(x: [D; 2]) -> (D, [D; 2], [[D; 2]; 2]) {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let r = r2.sqrt();
    let r3 = r2 * r;
    let r5 = r3 * r2;
    let g = [x[0] / r3, x[1] / r3];
    let mut hess = [[D::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            hess[i][j] = -(x[i] * x[j] * 3.0) / r5;
            if i == j {
                hess[i][j] += r3.recip();
            }
        }
    }
    (-r.recip(), g, hess)
}

/// Split weights `(w₁, w₂)` with `φ⁽ʲ⁾ = wⱼφ`. A single-part split drifts
/// both coordinates before its kick, which is the pair `(0, 1)`.
fn planar_weights(split: &SplitPotential) -> Result<[f64; 2]> {
    let w = split.kepler_weights().ok_or_else(|| {
        GeodynError::InvalidSplit("modified Lagrangians need a weighted Kepler split".into())
    })?;
    match w.as_slice() {
        [_] => Ok([0.0, 1.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(GeodynError::InvalidSplit(format!(
            "modified Lagrangians are planar and need at most 2 parts, got {}",
            w.len()
        ))),
    }
}

/// `L̄ = ẋ·∇φ`, a total derivative.
#[derive(Debug, Clone, Copy, Default)]
pub struct SymEulerField;

impl LagrangianField for SymEulerField {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D {
        let (_, g, _) = kepler_partials(x);
        g[0] * v[0] + g[1] * v[1]
    }
}

/// `L̄ = −(∂₁φ ẋ₁ + ∂₂(φ⁽²⁾ − φ⁽¹⁾) ẋ₂)`.
#[derive(Debug, Clone, Copy)]
pub struct Vi1Field {
    pub weights: [f64; 2],
}

impl LagrangianField for Vi1Field {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D {
        let (_, g, _) = kepler_partials(x);
        let [w1, w2] = self.weights;
        -(g[0] * v[0] + g[1] * v[1] * (w2 - w1))
    }
}

/// `L̄ = 1/|x|⁴ − 2|ẋ|²/|x|³ + 6(x·ẋ)²/|x|⁵`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SvField;

impl LagrangianField for SvField {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let r3 = r2 * r2.sqrt();
        let xv = x[0] * v[0] + x[1] * v[1];
        let v2 = v[0] * v[0] + v[1] * v[1];
        (r2 * r2).recip() - v2 * 2.0 / r3 + xv * xv * 6.0 / (r3 * r2)
    }
}

/// The order-h² terms of the second-order split Lagrangian's modified
/// Lagrangian.
#[derive(Debug, Clone, Copy)]
pub struct Vi2Field {
    pub weights: [f64; 2],
}

impl LagrangianField for Vi2Field {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D {
        let (_, g, hs) = kepler_partials(x);
        let [w1, w2] = self.weights;
        let potential_terms = g[0] * g[0] * 7.0 - g[1] * g[1] * (5.0 * w1 * w1)
            + g[1] * g[1] * (2.0 * w1 * w2)
            + g[1] * g[1] * (7.0 * w2 * w2);
        let velocity_terms = -(hs[0][0] * v[0] * v[0] * 2.0)
            + hs[0][1] * v[0] * v[1] * (2.0 * w1)
            + hs[1][1] * v[1] * v[1] * w1
            - hs[0][1] * v[0] * v[1] * (4.0 * w2)
            - hs[1][1] * v[1] * v[1] * (2.0 * w2);
        potential_terms / 96.0 + velocity_terms / 24.0
    }
}

/// Perturbation `ε L̄` of a method's truncated modified Lagrangian.
#[derive(Debug, Clone, Copy)]
pub enum ModifiedField {
    SymEuler(SymEulerField),
    Vi1(Vi1Field),
    Sv(SvField),
    Vi2(Vi2Field),
}

impl ModifiedField {
    pub fn for_method(method: Method, split: &SplitPotential) -> Result<Self> {
        Ok(match method {
            Method::SymEuler => ModifiedField::SymEuler(SymEulerField),
            Method::StormerVerlet => ModifiedField::Sv(SvField),
            Method::Vi1 => ModifiedField::Vi1(Vi1Field {
                weights: planar_weights(split)?,
            }),
            Method::Vi2 => ModifiedField::Vi2(Vi2Field {
                weights: planar_weights(split)?,
            }),
            other => return Err(GeodynError::UnknownMethod(other.id().to_string())),
        })
    }

    /// `ε` as a function of the step size.
    pub fn epsilon(&self, h: f64) -> f64 {
        match self {
            ModifiedField::SymEuler(_) | ModifiedField::Vi1(_) => 0.5 * h,
            ModifiedField::Sv(_) => h * h / 24.0,
            ModifiedField::Vi2(_) => h * h,
        }
    }

    /// Power of `h` in `ε`.
    pub fn epsilon_order(&self) -> u32 {
        match self {
            ModifiedField::SymEuler(_) | ModifiedField::Vi1(_) => 1,
            ModifiedField::Sv(_) | ModifiedField::Vi2(_) => 2,
        }
    }
}

impl LagrangianField for ModifiedField {
    fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D {
        match self {
            ModifiedField::SymEuler(f) => f.eval(x, v),
            ModifiedField::Vi1(f) => f.eval(x, v),
            ModifiedField::Sv(f) => f.eval(x, v),
            ModifiedField::Vi2(f) => f.eval(x, v),
        }
    }
}

fn planar(s: &PhaseState) -> Result<([f64; 2], [f64; 2])> {
    if s.dim() != 2 {
        return Err(GeodynError::Dimension {
            expected: 2,
            found: s.dim(),
        });
    }
    Ok(([s.x[0], s.x[1]], [s.v[0], s.v[1]]))
}

/// Truncated modified Lagrangian `½|ẋ|² − φ(x) + ε L̄(x, ẋ)`.
pub fn modified_lagrangian(
    method: Method,
    s: &PhaseState,
    h: f64,
    split: &SplitPotential,
) -> Result<f64> {
    let field = ModifiedField::for_method(method, split)?;
    let (x, v) = planar(s)?;
    let phi = crate::kepler::potential(&s.x)?;
    Ok(0.5 * (v[0] * v[0] + v[1] * v[1]) - phi + field.epsilon(h) * field.value(x, v))
}

/// `∂L̄/∂ẋ`.
fn velocity_gradient<L: LagrangianField>(lbar: &L, x: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    [0, 1].map(|i| {
        let xd = x.map(HyperDual64::from_re);
        let vd = [0, 1].map(|k| HyperDual64::new(v[k], if k == i { 1.0 } else { 0.0 }, 0.0, 0.0));
        lbar.eval(xd, vd).eps1
    })
}

/// Truncated modified equation `ẍ = −∇φ − ε EL(L̄)`, with `ẍ` inside `EL`
/// replaced by its leading-order value.
pub fn modified_acceleration<L: LagrangianField>(
    lbar: &L,
    eps: f64,
    x: [f64; 2],
    v: [f64; 2],
) -> Result<[f64; 2]> {
    let g = grad_potential(&vec2(x[0], x[1]))?;
    let a0 = [-g[0], -g[1]];
    let el = lbar.euler_lagrange(x, v, a0);
    let a = [a0[0] - eps * el[0], a0[1] - eps * el[1]];
    if a.iter().all(|c| c.is_finite()) {
        Ok(a)
    } else {
        Err(GeodynError::NonFinite("modified acceleration".into()))
    }
}

fn rk4_step<L: LagrangianField>(
    lbar: &L,
    eps: f64,
    x: [f64; 2],
    v: [f64; 2],
    dt: f64,
) -> Result<([f64; 2], [f64; 2])> {
    let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
    let k1v = modified_acceleration(lbar, eps, x, v)?;
    let k1x = v;
    let k2x = add(v, k1v, 0.5 * dt);
    let k2v = modified_acceleration(lbar, eps, add(x, k1x, 0.5 * dt), k2x)?;
    let k3x = add(v, k2v, 0.5 * dt);
    let k3v = modified_acceleration(lbar, eps, add(x, k2x, 0.5 * dt), k3x)?;
    let k4x = add(v, k3v, dt);
    let k4v = modified_acceleration(lbar, eps, add(x, k3x, dt), k4x)?;
    let comb = |a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]| {
        [0, 1].map(|i| (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]) * dt / 6.0)
    };
    let dx = comb(k1x, k2x, k3x, k4x);
    let dv = comb(k1v, k2v, k3v, k4v);
    Ok((add(x, dx, 1.0), add(v, dv, 1.0)))
}

/// Substeps of the reference solver per integrator step.
pub const REFERENCE_SUBSTEPS: usize = 100;

/// Maximum position gap over `steps` steps between a method and the exact
/// flow of its truncated modified equation.
///
/// The modified flow starts at `x₀` with velocity `ẋ₀ = p₀ − ε ∂L̄/∂ẋ`, the
/// inverse of the modified Legendre transform, and is integrated by the
/// classical fourth-order Runge–Kutta method with [`REFERENCE_SUBSTEPS`]
/// substeps per step.
pub fn shadowing_error(
    method: Method,
    split: &SplitPotential,
    s0: &PhaseState,
    h: f64,
    steps: usize,
) -> Result<f64> {
    let field = ModifiedField::for_method(method, split)?;
    let eps = field.epsilon(h);
    let (mut x, p) = planar(s0)?;
    let dp = velocity_gradient(&field, x, p);
    let mut v = [p[0] - eps * dp[0], p[1] - eps * dp[1]];
    let dt = h / REFERENCE_SUBSTEPS as f64;
    let mut s = s0.clone();
    let mut worst: f64 = 0.0;
    for n in 1..=steps {
        s = method.step(&s, split, h).map_err(|e| e.at_step(n))?;
        for _ in 0..REFERENCE_SUBSTEPS {
            (x, v) = rk4_step(&field, eps, x, v, dt).map_err(|e| e.at_step(n))?;
        }
        worst = worst.max((s.x[0] - x[0]).abs()).max((s.x[1] - x[1]).abs());
    }
    Ok(worst)
}

/// Leading-order per-period drift of the LRL vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPrediction {
    pub method: Method,
    pub epsilon: f64,
    /// Period average of `⟨EL(L̄), ∂|A|⟩`, the eccentricity rate per unit `ε`.
    pub ecc_average: f64,
    /// Period average of the angle rate per unit `ε`.
    pub angle_average: f64,
    pub delta_ecc: f64,
    pub delta_angle: f64,
    pub ecc_order: u32,
    pub angle_order: u32,
}

/// Threshold below which a period average counts as vanishing.
pub const VANISHING_AVERAGE: f64 = 1e-8;

/// Predicted per-period change of `|A|` and `ω` for a method at step `h`.
///
/// `dA/dt = −ε⟨EL(L̄), v_A⟩` is averaged over the unperturbed orbit and
/// projected onto `|A|` and `ω` directly, which in the frame where `A` lies
/// along the second axis gives `Δ|A| = −εT[⟨EL, v_{A2}⟩]` and
/// `Δω = (εT/e)[⟨EL, v_{A1}⟩]`. The predicted order in `h` doubles the order
/// of `ε` whenever the leading average vanishes.
pub fn predicted_drift(
    method: Method,
    el: &OrbitElements,
    h: f64,
    split: &SplitPotential,
) -> Result<DriftPrediction> {
    if el.e < crate::kepler::CIRCULAR_ECC {
        return Err(GeodynError::CircularOrbit);
    }
    let field = ModifiedField::for_method(method, split)?;
    let eps = field.epsilon(h);
    let avg1 = perturbation_average(&field, Quantity::Lrl1, el)?;
    let avg2 = perturbation_average(&field, Quantity::Lrl2, el)?;
    let (a1, a2) = (el.e * el.omega.cos(), el.e * el.omega.sin());
    // dA/dt per unit ε.
    let (r1, r2) = (-avg1, -avg2);
    let ecc_average = (a1 * r1 + a2 * r2) / el.e;
    let angle_average = (a1 * r2 - a2 * r1) / (el.e * el.e);
    let p = field.epsilon_order();
    let order = |avg: f64| if avg.abs() < VANISHING_AVERAGE { 2 * p } else { p };
    Ok(DriftPrediction {
        method,
        epsilon: eps,
        ecc_average,
        angle_average,
        delta_ecc: eps * el.period * ecc_average,
        delta_angle: eps * el.period * angle_average,
        ecc_order: order(ecc_average),
        angle_order: order(angle_average),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriftMetric {
    Ecc,
    Angle,
}

impl DriftMetric {
    pub fn id(self) -> &'static str {
        match self {
            DriftMetric::Ecc => "ecc",
            DriftMetric::Angle => "angle",
        }
    }
}

impl fmt::Display for DriftMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DriftMetric {
    type Err = GeodynError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ecc" => Ok(DriftMetric::Ecc),
            "angle" => Ok(DriftMetric::Angle),
            _ => Err(GeodynError::InvalidArgument(format!(
                "unknown metric {s:?} (expected ecc or angle)"
            ))),
        }
    }
}

/// Errors after one analytic period at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelDrift {
    pub h: f64,
    pub delta_ecc: f64,
    pub delta_angle: f64,
    /// Max-norm position error against the analytic orbit.
    pub position_error: f64,
}

impl LevelDrift {
    pub fn metric(&self, m: DriftMetric) -> f64 {
        match m {
            DriftMetric::Ecc => self.delta_ecc,
            DriftMetric::Angle => self.delta_angle,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Integrates one analytic period with step `h`: `⌊T/h⌋` full steps and one
/// partial step landing exactly on `T`.
pub fn measured_drift(
    method: Method,
    s0: &PhaseState,
    h: f64,
    split: &SplitPotential,
) -> Result<LevelDrift> {
    if !(h > 0.0) {
        return Err(GeodynError::InvalidArgument(format!("h must be positive, got {h}")));
    }
    let orbit = KeplerOrbit::from_state(s0)?;
    let period = orbit.period();
    let full = (period / h).floor() as usize;
    let mut s = s0.clone();
    for n in 1..=full {
        s = method.step(&s, split, h).map_err(|e| e.at_step(n))?;
    }
    let rest = period - full as f64 * h;
    if rest > 1e-14 * period {
        s = method.step(&s, split, rest).map_err(|e| e.at_step(full + 1))?;
    }
    let c0 = conserved(s0)?;
    let c1 = conserved(&s)?;
    let exact = orbit.state_at(period)?;
    Ok(LevelDrift {
        h,
        delta_ecc: (c1.ecc - c0.ecc).abs(),
        delta_angle: wrap_angle(c1.omega - c0.omega).abs(),
        position_error: (&s.x - &exact.x).amax(),
    })
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(GeodynError::InvalidArgument(
            "linear fit needs at least two paired points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(GeodynError::InvalidArgument("linear fit over a single abscissa".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fitted convergence order of per-period drift over a step-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEstimate {
    pub method: Method,
    pub metric: DriftMetric,
    pub levels: Vec<LevelDrift>,
    pub fitted_order: f64,
    pub predicted_order: u32,
}

impl DriftEstimate {
    pub fn hs(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.h).collect()
    }

    pub fn drifts(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.metric(self.metric)).collect()
    }
}

/// Step sizes `h₀/2ⁱ` for `i = 1..=levels`.
pub fn halving_steps(h0: f64, levels: usize) -> Vec<f64> {
    (1..=levels).map(|i| h0 / f64::powi(2.0, i as i32)).collect()
}

/// Runs [`measured_drift`] over `hs` concurrently and fits the log-log slope.
pub fn measured_drift_order(
    method: Method,
    metric: DriftMetric,
    s0: &PhaseState,
    hs: &[f64],
    split: &SplitPotential,
) -> Result<DriftEstimate> {
    if hs.len() < 2 {
        return Err(GeodynError::InvalidArgument(
            "a drift order needs at least two step sizes".into(),
        ));
    }
    let levels = hs
        .par_iter()
        .map(|&h| measured_drift(method, s0, h, split))
        .collect::<Result<Vec<_>>>()?;
    let logs_h: Vec<f64> = levels.iter().map(|l| l.h.ln()).collect();
    let logs_d: Vec<f64> = levels.iter().map(|l| l.metric(metric).ln()).collect();
    if logs_d.iter().any(|d| !d.is_finite()) {
        return Err(GeodynError::NonFinite("zero or non-finite drift in sweep".into()));
    }
    let (fitted_order, _) = linear_fit(&logs_h, &logs_d)?;
    let el = orbit_elements(s0)?;
    let pred = predicted_drift(method, &el, hs[0], split)?;
    let predicted_order = match metric {
        DriftMetric::Ecc => pred.ecc_order,
        DriftMetric::Angle => pred.angle_order,
    };
    Ok(DriftEstimate {
        method,
        metric,
        levels,
        fitted_order,
        predicted_order,
    })
}

/// Secular rate of the LRL angle: least-squares slope of the unwrapped angle
/// against time over `steps` steps.
pub fn angle_secular_rate(
    method: Method,
    s0: &PhaseState,
    h: f64,
    steps: usize,
    split: &SplitPotential,
) -> Result<f64> {
    let mut s = s0.clone();
    let mut prev = conserved(s0)?.omega;
    let mut unwrapped = prev;
    let mut ts = Vec::with_capacity(steps + 1);
    let mut ws = Vec::with_capacity(steps + 1);
    ts.push(0.0);
    ws.push(unwrapped);
    for n in 1..=steps {
        s = method.step(&s, split, h).map_err(|e| e.at_step(n))?;
        let w = conserved(&s).map_err(|e| e.at_step(n))?.omega;
        unwrapped += wrap_angle(w - prev);
        prev = w;
        ts.push(n as f64 * h);
        ws.push(unwrapped);
    }
    Ok(linear_fit(&ts, &ws)?.0)
}
