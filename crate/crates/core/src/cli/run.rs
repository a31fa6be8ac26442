use serde::Serialize;

use super::config::{Format, Plan};
use super::output::{fmt_real, render_json, Artifacts, CsvTable, Meta};
use super::svg::{histogram_svg, line_chart_svg, Series};
use crate::analysis::{
    final_states, ito_moment_check, mean_series, semicircle_density, stability_experiment,
    strong_error_experiment, terminal_oracle, trace_moments, Ensemble, Histogram, TerminalOracle,
    TraceMoments,
};
use crate::linalg::SymMatrix;
use crate::models::ModelSpec;
use crate::solver::StabilityBound;

/// Files to write and the one-line console summary.
pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: String,
}

struct Writer<'a> {
    meta: &'a Meta,
    formats: &'a [Format],
    artifacts: Artifacts,
}

impl Writer<'_> {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn csv(&mut self, table: CsvTable) -> std::io::Result<()> {
        if self.wants(Format::Csv) {
            let bytes = table.render(self.meta)?;
            self.artifacts
                .add(format!("{}.csv", self.meta.command), bytes);
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, value: &T) -> std::io::Result<()> {
        if self.wants(Format::Json) {
            let bytes = render_json(self.meta, value)?;
            self.artifacts
                .add(format!("{}.json", self.meta.command), bytes);
        }
        Ok(())
    }

    fn svg(&mut self, render: impl FnOnce(&str) -> String) {
        if self.wants(Format::Svg) {
            let svg = render(&self.meta.header_line());
            self.artifacts
                .add(format!("{}.svg", self.meta.command), svg.into_bytes());
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Numerics(#[from] crate::error::Error),
    #[error("failed to render output: {0}")]
    Render(#[from] std::io::Error),
}

#[derive(Serialize)]
struct Grid<'a> {
    model: &'a str,
    dim: usize,
    paths: usize,
    steps: usize,
    h: f64,
    horizon: f64,
    theta: f64,
}

impl<'a> Grid<'a> {
    fn new(model: &'a ModelSpec, e: &Ensemble, theta: f64) -> Self {
        Self {
            model: &model.name,
            dim: e.dim,
            paths: e.paths,
            steps: e.steps,
            h: e.h,
            horizon: e.horizon(),
            theta,
        }
    }
}

#[derive(Serialize)]
struct SpectrumResult<'a> {
    grid: Grid<'a>,
    moments: TraceMoments,
    max_abs_eigenvalue: f64,
    oracle: Option<TerminalOracle>,
    histogram: &'a Histogram,
}

#[derive(Clone, Copy, Serialize)]
struct TerminalMeans {
    mean_trace: f64,
    mean_second_moment: f64,
    mean_spectral_variance: f64,
}

#[derive(Serialize)]
struct SimulateResult<'a> {
    grid: Grid<'a>,
    terminal: TerminalMeans,
    oracle: Option<TerminalOracle>,
}

#[derive(Clone, Copy, Serialize)]
struct DecayPoint {
    h: f64,
    decay_rate: f64,
    guaranteed: bool,
}

#[derive(Serialize)]
struct BoundsResult<'a> {
    bound: &'a StabilityBound,
    continuous_rate: f64,
    decay: Vec<DecayPoint>,
}

pub fn execute(
    plan: &Plan,
    meta: &Meta,
    formats: &[Format],
) -> std::result::Result<Outcome, RunError> {
    let mut w = Writer {
        meta,
        formats,
        artifacts: Artifacts::default(),
    };
    let summary = match plan {
        Plan::Spectrum {
            model,
            initial,
            ensemble,
            theta,
            options,
            bins,
        } => {
            let finals = final_states(model, initial, ensemble, *theta, options)?;
            let mut eigenvalues = Vec::with_capacity(ensemble.dim * ensemble.paths);
            for u in &finals {
                eigenvalues.extend(u.eigenvalues()?);
            }
            let hist = Histogram::from_values(&eigenvalues, *bins)?;
            let moments = trace_moments(&finals);
            let max_abs = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let oracle = terminal_oracle(model, ensemble.horizon());

            let mut table = CsvTable::new(&["bin_left", "bin_right", "count", "density"]);
            for ((e, c), d) in hist
                .bin_edges
                .windows(2)
                .zip(&hist.counts)
                .zip(&hist.density)
            {
                table.push(vec![
                    fmt_real(e[0]),
                    fmt_real(e[1]),
                    c.to_string(),
                    fmt_real(*d),
                ]);
            }
            w.csv(table)?;
            w.json(&SpectrumResult {
                grid: Grid::new(model, ensemble, *theta),
                moments,
                max_abs_eigenvalue: max_abs,
                oracle,
                histogram: &hist,
            })?;
            let overlay = match oracle {
                Some(TerminalOracle::FreeOu { variance, radius }) if variance > 0.0 => Some(
                    (0..=200)
                        .map(|i| {
                            let x = -radius + 2.0 * radius * i as f64 / 200.0;
                            (x, semicircle_density(variance, x).unwrap_or(0.0))
                        })
                        .collect::<Vec<_>>(),
                ),
                _ => None,
            };
            w.svg(|c| {
                histogram_svg(
                    &hist,
                    overlay.as_deref(),
                    &format!("{} spectrum", model.name),
                    c,
                )
            });

            let reference = match oracle {
                Some(TerminalOracle::FreeOu { variance, radius }) => {
                    format!(" (oracle variance {variance:.4}, radius {radius:.4})")
                }
                Some(TerminalOracle::FreeGbm1 { lower, upper }) => {
                    format!(" (oracle support [{lower:.4}, {upper:.4}])")
                }
                Some(TerminalOracle::FreeGbm2 { mean, variance }) => {
                    format!(" (oracle mean {mean:.4}, variance {variance:.4})")
                }
                Some(TerminalOracle::FreeCir { mean }) => format!(" (oracle mean {mean:.4})"),
                None => String::new(),
            };
            format!(
                "spectrum {}: mean trace {:.4}, spectral variance {:.4}, max |eigenvalue| {:.4}{reference}",
                model.name, moments.mean, moments.spectral_variance, max_abs
            )
        }

        Plan::Simulate {
            model,
            initial,
            ensemble,
            theta,
            options,
        } => {
            let series = mean_series(
                model,
                initial,
                ensemble,
                *theta,
                options,
                &|u: &SymMatrix| {
                    let t = u.normalized_trace();
                    let s = u.as_matrix().norm_squared() / u.dim() as f64;
                    vec![t, s, s - t * t]
                },
            )?;
            let mut table = CsvTable::new(&[
                "step",
                "time",
                "mean_trace",
                "mean_second_moment",
                "mean_spectral_variance",
            ]);
            for (n, row) in series.iter().enumerate() {
                table.push(vec![
                    n.to_string(),
                    fmt_real(n as f64 * ensemble.h),
                    fmt_real(row[0]),
                    fmt_real(row[1]),
                    fmt_real(row[2]),
                ]);
            }
            w.csv(table)?;
            let last = series.last().expect("initial state is recorded");
            let terminal = TerminalMeans {
                mean_trace: last[0],
                mean_second_moment: last[1],
                mean_spectral_variance: last[2],
            };
            let oracle = terminal_oracle(model, ensemble.horizon());
            w.json(&SimulateResult {
                grid: Grid::new(model, ensemble, *theta),
                terminal,
                oracle,
            })?;
            w.svg(|c| {
                let points = |k: usize| {
                    series
                        .iter()
                        .enumerate()
                        .map(|(n, r)| (n as f64 * ensemble.h, r[k]))
                        .collect()
                };
                let lines = [
                    Series {
                        label: "mean trace".into(),
                        points: points(0),
                    },
                    Series {
                        label: "spectral variance".into(),
                        points: points(2),
                    },
                ];
                line_chart_svg(
                    &lines,
                    false,
                    false,
                    &format!("{} ensemble means", model.name),
                    ("time", "value"),
                    c,
                )
            });
            format!(
                "simulate {}: terminal mean trace {:.4}, spectral variance {:.4} over {} path(s)",
                model.name, terminal.mean_trace, terminal.mean_spectral_variance, ensemble.paths
            )
        }

        Plan::Converge {
            model,
            initial,
            setup,
        } => {
            let report = strong_error_experiment(model, initial, setup)?;
            let mut table = CsvTable::new(&["h", "error", "log_h", "log_error"]);
            for p in &report.ladder {
                table.push(vec![
                    fmt_real(p.h),
                    fmt_real(p.error),
                    fmt_real(p.h.ln()),
                    fmt_real(p.error.ln()),
                ]);
            }
            w.csv(table)?;
            w.json(&report)?;
            w.svg(|c| {
                let s = Series {
                    label: format!("theta = {}", setup.theta),
                    points: report.ladder.iter().map(|p| (p.h, p.error)).collect(),
                };
                line_chart_svg(
                    &[s],
                    true,
                    true,
                    &format!("{} strong error", model.name),
                    ("h", "error"),
                    c,
                )
            });
            match report.slope {
                Some(slope) => format!(
                    "converge {} theta={}: slope {slope:.4} over {} level(s)",
                    model.name,
                    setup.theta,
                    report.ladder.len()
                ),
                None => format!(
                    "converge {} theta={}: too few positive errors to fit a slope",
                    model.name, setup.theta
                ),
            }
        }

        Plan::Stability {
            model,
            initial,
            perturbed,
            setup,
        } => {
            let report = stability_experiment(model, initial, perturbed.as_ref(), setup)?;
            let mut table = CsvTable::new(&["h", "step", "time", "mean_square_norm"]);
            for s in &report.series {
                for (n, (t, v)) in s.times.iter().zip(&s.mean_square).enumerate() {
                    table.push(vec![
                        fmt_real(s.h),
                        n.to_string(),
                        fmt_real(*t),
                        fmt_real(*v),
                    ]);
                }
            }
            w.csv(table)?;
            w.json(&report)?;
            w.svg(|c| {
                let lines: Vec<Series> = report
                    .series
                    .iter()
                    .map(|s| Series {
                        label: format!("h = {}", s.h),
                        points: s
                            .times
                            .iter()
                            .copied()
                            .zip(s.mean_square.iter().copied())
                            .collect(),
                    })
                    .collect();
                line_chart_svg(
                    &lines,
                    false,
                    true,
                    &format!("{} mean square", model.name),
                    ("time", "mean square"),
                    c,
                )
            });
            let table: Vec<String> = report
                .series
                .iter()
                .map(|s| format!("h={} {:?}/{:?}", s.h, s.empirical, s.theoretical).to_lowercase())
                .collect();
            format!(
                "stability {} theta={} (empirical/theoretical): {}",
                model.name,
                setup.theta,
                table.join(", ")
            )
        }

        Plan::Moments {
            dim,
            samples,
            h,
            a,
            b,
            seed,
        } => {
            let r = ito_moment_check(*dim, *samples, *h, a, b, *seed)?;
            let mut table =
                CsvTable::new(&["quantity", "empirical", "predicted", "std_error", "z_score"]);
            for (name, e) in [
                ("ito_limit", r.limit),
                ("ito_finite_n", r.finite_n),
                ("trace_dw_squared", r.quadratic_variation),
            ] {
                table.push(vec![
                    name.into(),
                    fmt_real(e.empirical),
                    fmt_real(e.predicted),
                    fmt_real(e.std_error),
                    fmt_real(e.z_score),
                ]);
            }
            w.csv(table)?;
            w.json(&r)?;
            format!(
                "moments N={dim} M={samples}: empirical {:.6}, finite-N prediction {:.6}, z {:.3}",
                r.finite_n.empirical, r.finite_n.predicted, r.finite_n.z_score
            )
        }

        Plan::Bounds { bound, step_sizes } => {
            let decay: Vec<DecayPoint> = step_sizes
                .iter()
                .map(|&h| DecayPoint {
                    h,
                    decay_rate: bound.decay_rate(h),
                    guaranteed: bound.guarantees(h),
                })
                .collect();
            let mut table = CsvTable::new(&["h", "decay_rate"]);
            for d in &decay {
                table.push(vec![fmt_real(d.h), fmt_real(d.decay_rate)]);
            }
            w.csv(table)?;
            w.json(&BoundsResult {
                bound,
                continuous_rate: bound.continuous_rate(),
                decay: decay.clone(),
            })?;
            let h_max = if bound.h_max.is_finite() {
                format!("{}", bound.h_max)
            } else {
                "inf".into()
            };
            let rates: Vec<String> = decay
                .iter()
                .map(|d| format!("decay({})={:.4}", d.h, d.decay_rate))
                .collect();
            let mut line = format!("bounds theta={}: h_max={h_max}", bound.theta);
            if !rates.is_empty() {
                line.push(' ');
                line.push_str(&rates.join(" "));
            }
            line
        }
    };
    Ok(Outcome {
        artifacts: w.artifacts,
        summary,
    })
}
