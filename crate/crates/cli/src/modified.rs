use std::fmt::Write as _;
use std::str::FromStr;

use geodyn::integrators::Method;
use geodyn::kepler::orbit_elements;
use geodyn::modified::{
    halving_steps, linear_dispersion, linear_modified_series, measured_drift, measured_linear_frequency,
    predicted_drift, DriftMetric, VANISHING_AVERAGE,
};
use rayon::prelude::*;

use crate::args::ModifiedArgs;
use crate::convergence::{fitted_order, metrics};
use crate::error::CliError;
use crate::output::{num, write_output, Table};
use crate::run::{positive, seed_or_default, split_from};

pub fn cmd_modified(a: &ModifiedArgs) -> Result<(), CliError> {
    let text = match &a.drift {
        Some(m) => drift(a, m)?,
        None => linear(a)?,
    };
    write_output(None, &text)
}

fn linear(a: &ModifiedArgs) -> Result<String, CliError> {
    let lambda = positive("lambda", a.lambda.unwrap_or(f64::NAN))?;
    let h = positive("h", a.h.unwrap_or(f64::NAN))?;
    if a.kmax == 0 {
        return Err(CliError::Usage("--kmax must be at least 1".into()));
    }
    // Beyond the stability boundary neither frequency exists.
    let dispersion = linear_dispersion(lambda, h)?;
    let series = linear_modified_series(lambda, h, a.kmax)?.value.sqrt();
    let mut out = String::new();
    let _ = writeln!(out, "lambda {} h {} k_max {}", num(lambda), num(h), a.kmax);
    let _ = writeln!(out, "series frequency      {}", num(series));
    let _ = writeln!(out, "dispersion frequency  {}", num(dispersion));
    let _ = writeln!(out, "difference            {:e}", (series - dispersion).abs());
    if a.measure_steps > 0 {
        let measured = measured_linear_frequency(lambda, h, a.measure_steps)?;
        let _ = writeln!(
            out,
            "measured frequency    {} ({} steps)",
            num(measured),
            a.measure_steps
        );
    }
    Ok(out)
}

fn drift(a: &ModifiedArgs, method: &str) -> Result<String, CliError> {
    let method = Method::from_str(method)?;
    let h0 = positive("h0", a.h0)?;
    let s0 = seed_or_default(&a.seed)?;
    let split = split_from(a.split.as_deref())?;
    let el = orbit_elements(&s0)?;
    let hs = halving_steps(h0, a.levels as usize);
    let pred = predicted_drift(method, &el, hs[0], &split)?;
    let levels = hs
        .par_iter()
        .map(|&h| measured_drift(method, &s0, h, &split))
        .collect::<geodyn::Result<Vec<_>>>()?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "method {method}  e {}  period {}  epsilon {} at h {}",
        num(el.e),
        num(el.period),
        num(pred.epsilon),
        num(hs[0])
    );
    for &m in metrics(a.metric) {
        let (avg, delta, order) = match m {
            DriftMetric::Ecc => (pred.ecc_average, pred.delta_ecc, pred.ecc_order),
            DriftMetric::Angle => (pred.angle_average, pred.delta_angle, pred.angle_order),
        };
        let leading = if avg.abs() < VANISHING_AVERAGE { 0.0 } else { delta };
        let measured = fitted_order(&levels, m);
        let _ = writeln!(out, "{m}: predicted leading term {}", num(leading));
        let _ = writeln!(out, "{m}: period average {avg:e}");
        let _ = writeln!(out, "{m}: predicted order {order}");
        let _ = writeln!(
            out,
            "{m}: measured order {}",
            measured.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
        );
    }
    let mut header = vec!["h"];
    header.extend(metrics(a.metric).iter().map(|m| m.id()));
    let mut t = Table::new(&header);
    for l in &levels {
        let mut cells = vec![num(l.h)];
        cells.extend(metrics(a.metric).iter().map(|&m| num(l.metric(m))));
        t.row(&cells);
    }
    out.push('\n');
    out.push_str(&t.into_string());
    Ok(out)
}
