use std::str::FromStr;

use geodyn::integrators::Method;
use geodyn::kepler::orbit_elements;
use geodyn::modified::{halving_steps, linear_fit, measured_drift, predicted_drift, DriftMetric, LevelDrift};
use rayon::prelude::*;

use crate::args::{ConvergenceArgs, Format, MetricArg};
use crate::error::CliError;
use crate::output::{append_section, num, write_output, Table};
use crate::run::{positive, seed_or_default, split_from};
use crate::svg::{render, PlotOptions, Series};

pub fn metrics(m: MetricArg) -> &'static [DriftMetric] {
    match m {
        MetricArg::Ecc => &[DriftMetric::Ecc],
        MetricArg::Angle => &[DriftMetric::Angle],
        MetricArg::All => &[DriftMetric::Ecc, DriftMetric::Angle],
    }
}

/// Log-log slope of `metric` against `h`; `None` for fewer than two levels or
/// a zero drift.
pub fn fitted_order(levels: &[LevelDrift], metric: DriftMetric) -> Option<f64> {
    if levels.len() < 2 {
        return None;
    }
    let lh: Vec<f64> = levels.iter().map(|l| l.h.ln()).collect();
    let ld: Vec<f64> = levels.iter().map(|l| l.metric(metric).ln()).collect();
    if ld.iter().any(|d| !d.is_finite()) {
        return None;
    }
    linear_fit(&lh, &ld).ok().map(|(slope, _)| slope)
}

pub fn cmd_convergence(a: &ConvergenceArgs) -> Result<(), CliError> {
    let h0 = positive("h0", a.h0)?;
    let methods = a
        .methods
        .iter()
        .map(|m| Method::from_str(m.trim()))
        .collect::<geodyn::Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    let s0 = seed_or_default(&a.seed)?;
    let split = split_from(a.split.as_deref())?;
    let el = orbit_elements(&s0)?;
    let hs = halving_steps(h0, a.levels as usize);
    if hs.len() < 2 {
        eprintln!("warning: a single step size cannot be fitted; slope columns are empty");
    }

    let jobs: Vec<(Method, f64)> = methods
        .iter()
        .flat_map(|&m| hs.iter().map(move |&h| (m, h)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(m, h)| measured_drift(m, &s0, h, &split))
        .collect::<geodyn::Result<Vec<_>>>()?;
    let per_method: Vec<&[LevelDrift]> = results.chunks(hs.len()).collect();
    let metrics = metrics(a.metric);

    let content = match a.format {
        Format::Csv => {
            let mut header = vec!["method", "h"];
            header.extend(metrics.iter().map(|m| match m {
                DriftMetric::Ecc => "delta_ecc",
                DriftMetric::Angle => "delta_angle",
            }));
            if a.metric == MetricArg::All {
                header.push("position_error");
            }
            let mut rows = Table::new(&header);
            for (m, levels) in methods.iter().zip(&per_method) {
                for l in levels.iter() {
                    let mut cells = vec![m.id().to_string(), num(l.h)];
                    cells.extend(metrics.iter().map(|&k| num(l.metric(k))));
                    if a.metric == MetricArg::All {
                        cells.push(num(l.position_error));
                    }
                    rows.row(&cells);
                }
            }
            let mut slopes = Table::new(&["method", "metric", "fitted_order", "predicted_order"]);
            for (&m, levels) in methods.iter().zip(&per_method) {
                let pred = predicted_drift(m, &el, hs[0], &split).ok();
                for &k in metrics {
                    let fitted = fitted_order(levels, k);
                    if fitted.is_none() && levels.len() >= 2 {
                        eprintln!("warning: {m} {k}: zero drift, no slope");
                    }
                    let predicted = pred.as_ref().map(|p| match k {
                        DriftMetric::Ecc => p.ecc_order,
                        DriftMetric::Angle => p.angle_order,
                    });
                    slopes.row(&[
                        m.id().to_string(),
                        k.id().to_string(),
                        fitted.map(num).unwrap_or_default(),
                        predicted.map(|p| p.to_string()).unwrap_or_default(),
                    ]);
                }
            }
            let mut out = rows.into_string();
            append_section(&mut out, slopes);
            out
        }
        Format::Svg => {
            let series: Vec<Series> = methods
                .iter()
                .zip(&per_method)
                .flat_map(|(m, levels)| {
                    metrics.iter().map(move |&k| Series {
                        label: format!("{m} {k}"),
                        points: levels.iter().map(|l| (l.h, l.metric(k))).collect(),
                    })
                })
                .collect();
            let opts = PlotOptions {
                title: "per-period drift".into(),
                x_label: "h".into(),
                y_label: "drift".into(),
                log_x: true,
                log_y: true,
            };
            render(&series, &opts)?
        }
    };
    write_output(a.output.as_deref(), &content)
}
