use std::str::FromStr;

use geodyn::integrators::{run, Form, Method, RunConfig, TrajectoryRecord};
use geodyn::kepler::{conserved, vec2, KeplerPart};
use geodyn::relativistic::{run_relativistic, ExtPhaseState, RelMethod, RelTrajectory};
use geodyn::{PhaseState, SplitPotential};

use crate::args::{FormArg, Format, Model, Plot, RunArgs, SeedArgs};
use crate::error::CliError;
use crate::output::{num, write_output, Table};
use crate::svg::{render, PlotOptions, Series};

pub const KEPLER_HEADER: [&str; 12] =
    ["step", "t", "x1", "x2", "v1", "v2", "H", "m", "A1", "A2", "ecc", "angle"];
pub const RELATIVISTIC_HEADER: [&str; 9] = ["step", "tau", "t", "x1", "x2", "gamma", "u1", "u2", "H"];

/// Seed used by the sweeps when none is given.
pub const DEFAULT_SEED: [f64; 4] = [-3.0, 0.0, 0.0, 0.45];

fn finite(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Usage(format!("--{name} must be finite, got {x}")))
    }
}

pub fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive, got {x}")))
    }
}

type Seed = ([f64; 2], [f64; 2]);

/// `(x0, v0)` from `--ecc` or `--x0/--v0`; `None` when neither is given.
pub fn seed_vectors(seed: &SeedArgs) -> Result<Option<Seed>, CliError> {
    if let Some(e) = seed.ecc {
        if !(0.0..1.0).contains(&e) {
            return Err(CliError::Usage(format!("--ecc must lie in [0, 1), got {e}")));
        }
        return Ok(Some(([1.0 - e, 0.0], [0.0, ((1.0 + e) / (1.0 - e)).sqrt()])));
    }
    match (&seed.x0, &seed.v0) {
        (Some(x), Some(v)) => {
            for &c in x.iter().chain(v) {
                finite("x0/--v0", c)?;
            }
            Ok(Some(([x[0], x[1]], [v[0], v[1]])))
        }
        _ => Ok(None),
    }
}

pub fn seed_or_default(seed: &SeedArgs) -> Result<PhaseState, CliError> {
    let ([a, b], [c, d]) = seed_vectors(seed)?.unwrap_or((
        [DEFAULT_SEED[0], DEFAULT_SEED[1]],
        [DEFAULT_SEED[2], DEFAULT_SEED[3]],
    ));
    Ok(PhaseState::planar(a, b, c, d))
}

pub fn split_from(weights: Option<&[f64]>) -> Result<SplitPotential, CliError> {
    match weights {
        None => Ok(SplitPotential::kepler_equal()),
        Some(w) => Ok(SplitPotential::kepler(w)?),
    }
}

pub fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    positive("h", a.h)?;
    let steps = a.steps;
    let (x0, v0) = seed_vectors(&a.seed)?
        .ok_or_else(|| CliError::Usage("a seed is required: --ecc or --x0/--v0".into()))?;
    let content = match a.model {
        Model::Kepler => {
            if a.c != 1.0 || a.gamma0.is_some() {
                return Err(CliError::Usage("--c and --gamma0 apply to the relativistic model".into()));
            }
            let method = Method::from_str(&a.method)?;
            let mut cfg = RunConfig::new(method, a.h, steps);
            cfg.split = split_from(a.split.as_deref())?;
            cfg.form = match a.form {
                FormArg::Composition => Form::Composition,
                FormArg::TwoStep => Form::TwoStep,
            };
            let s0 = PhaseState::planar(x0[0], x0[1], v0[0], v0[1]);
            let rec = run(&cfg, &s0)?;
            match a.format {
                Format::Csv => kepler_csv(&rec)?,
                Format::Svg => kepler_svg(&rec, a)?,
            }
        }
        Model::Relativistic => {
            if a.split.is_some() {
                return Err(CliError::Usage("--split applies to the kepler model".into()));
            }
            if a.form == FormArg::TwoStep {
                return Err(CliError::Usage(
                    "the relativistic two-step scheme is --method del".into(),
                ));
            }
            let method = RelMethod::from_str(&a.method)?;
            let units = Units::new(positive("c", a.c)?);
            let mut z0 = ExtPhaseState::on_shell(0.0, units.x_in(x0), units.u_in(v0));
            if let Some(g) = a.gamma0 {
                z0.gamma = finite("gamma0", g)?;
            }
            let traj = run_relativistic(
                method,
                &z0,
                &KeplerPart { weight: 1.0 },
                units.time_in(a.h),
                steps,
            )?;
            match a.format {
                Format::Csv => relativistic_csv(&traj, &units, a.h),
                Format::Svg => relativistic_svg(&traj, &units, a)?,
            }
        }
    };
    write_output(a.output.as_deref(), &content)
}

/// Physical units with speed of light `c` against the internal `c = 1`
/// units: `x' = c²x`, `t' = c³t`, `τ' = c³τ`, `u' = u/c`, `γ' = γ`.
pub struct Units {
    c: f64,
}

impl Units {
    pub fn new(c: f64) -> Self {
        Units { c }
    }

    fn x_in(&self, x: [f64; 2]) -> geodyn::Vector {
        vec2(x[0], x[1]) * (self.c * self.c)
    }

    fn u_in(&self, u: [f64; 2]) -> geodyn::Vector {
        vec2(u[0], u[1]) / self.c
    }

    fn time_in(&self, t: f64) -> f64 {
        t * self.c.powi(3)
    }

    fn time_out(&self, t: f64) -> f64 {
        t / self.c.powi(3)
    }

    fn x_out(&self, x: f64) -> f64 {
        x / (self.c * self.c)
    }

    fn u_out(&self, u: f64) -> f64 {
        u * self.c
    }

    /// `½(|u|² − c²γ²)` in physical units.
    fn energy_out(&self, h: f64) -> f64 {
        h * self.c * self.c
    }
}

fn kepler_csv(rec: &TrajectoryRecord) -> Result<String, CliError> {
    let mut t = Table::new(&KEPLER_HEADER);
    for s in &rec.samples {
        let c = match &s.conserved {
            Some(c) => c.clone(),
            None => conserved(&s.state)?,
        };
        let (x, v) = (&s.state.x, &s.state.v);
        t.row(&[
            s.step.to_string(),
            num(s.t),
            num(x[0]),
            num(x[1]),
            num(v[0]),
            num(v[1]),
            num(c.h),
            num(c.m),
            num(c.a[0]),
            num(c.a[1]),
            num(c.ecc),
            num(c.omega),
        ]);
    }
    Ok(t.into_string())
}

fn relativistic_csv(traj: &RelTrajectory, units: &Units, h: f64) -> String {
    let mut t = Table::new(&RELATIVISTIC_HEADER);
    for s in &traj.samples {
        let z = &s.state;
        t.row(&[
            s.step.to_string(),
            num(s.step as f64 * h),
            num(units.time_out(z.t)),
            num(units.x_out(z.x[0])),
            num(units.x_out(z.x[1])),
            num(z.gamma),
            num(units.u_out(z.u[0])),
            num(units.u_out(z.u[1])),
            num(units.energy_out(s.hamiltonian)),
        ]);
    }
    t.into_string()
}

fn kepler_svg(rec: &TrajectoryRecord, a: &RunArgs) -> Result<String, CliError> {
    let cs = rec
        .samples
        .iter()
        .map(|s| match &s.conserved {
            Some(c) => Ok(c.clone()),
            None => conserved(&s.state),
        })
        .collect::<geodyn::Result<Vec<_>>>()?;
    let (h0, e0) = (cs[0].h, cs[0].ecc);
    let (points, x_label, y_label): (Vec<(f64, f64)>, &str, &str) = match a.plot {
        Plot::Orbit => (
            rec.samples.iter().map(|s| (s.state.x[0], s.state.x[1])).collect(),
            "x1",
            "x2",
        ),
        Plot::Energy => (
            rec.samples.iter().zip(&cs).map(|(s, c)| (s.t, (c.h - h0).abs())).collect(),
            "t",
            "|H - H0|",
        ),
        Plot::Ecc => (
            rec.samples.iter().zip(&cs).map(|(s, c)| (s.t, (c.ecc - e0).abs())).collect(),
            "t",
            "|e - e0|",
        ),
        Plot::Angle => (
            rec.samples.iter().zip(&cs).map(|(s, c)| (s.t, c.omega)).collect(),
            "t",
            "angle",
        ),
    };
    let series = [Series {
        label: rec.method.clone(),
        points,
    }];
    let opts = PlotOptions {
        title: format!("{} h={}", rec.method, num(rec.h)),
        x_label: x_label.into(),
        y_label: y_label.into(),
        log_x: false,
        log_y: a.log_y,
    };
    Ok(render(&series, &opts)?)
}

fn relativistic_svg(traj: &RelTrajectory, units: &Units, a: &RunArgs) -> Result<String, CliError> {
    let h0 = traj.samples[0].hamiltonian;
    let (points, x_label, y_label): (Vec<(f64, f64)>, &str, &str) = match a.plot {
        Plot::Orbit => (
            traj.samples
                .iter()
                .map(|s| (units.x_out(s.state.x[0]), units.x_out(s.state.x[1])))
                .collect(),
            "x1",
            "x2",
        ),
        Plot::Energy => (
            traj.samples
                .iter()
                .map(|s| (s.step as f64 * a.h, units.energy_out((s.hamiltonian - h0).abs())))
                .collect(),
            "tau",
            "|H - H0|",
        ),
        Plot::Ecc | Plot::Angle => {
            return Err(CliError::Usage(
                "the relativistic model plots only orbit and energy".into(),
            ))
        }
    };
    let series = [Series {
        label: traj.method.clone(),
        points,
    }];
    let opts = PlotOptions {
        title: format!("{} h={}", traj.method, num(a.h)),
        x_label: x_label.into(),
        y_label: y_label.into(),
        log_x: false,
        log_y: a.log_y,
    };
    Ok(render(&series, &opts)?)
}
