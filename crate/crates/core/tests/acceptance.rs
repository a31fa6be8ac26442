//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::Value;

use freestm::analysis::{
    ito_moment_check, stability_experiment, MatrixSpec, StabilityMode, StabilitySetup,
};
use freestm::linalg::SymMatrix;
use freestm::models::ModelSpec;
use freestm::noise::{sample_increment, RandomStream};
use freestm::solver::{stability_bound, SolverConfig, SolverOptions, Stepper, Strategy};

const BIN: &str = env!("CARGO_BIN_EXE_freestm");

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

/// A CLI run kept for the determinism rerun.
struct Run {
    command: &'static str,
    config: PathBuf,
    out: PathBuf,
}

struct Harness {
    root: tempfile::TempDir,
    runs: Vec<Run>,
}

impl Harness {
    fn invoke(
        &self,
        command: &str,
        config: &Path,
        out: &Path,
        threads: usize,
    ) -> Result<(), String> {
        let status = Command::new(BIN)
            .args([
                command,
                "--quiet",
                "--threads",
                &threads.to_string(),
                "--config",
            ])
            .arg(config)
            .arg("--out")
            .arg(out)
            .status()
            .map_err(|e| format!("cannot launch {BIN}: {e}"))?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("{command} exited with {status}"))
        }
    }

    /// Runs `command` on `config` with one worker thread and returns the
    /// `result` object of its JSON output and the wall time.
    fn run(
        &mut self,
        name: &str,
        command: &'static str,
        config: &str,
    ) -> Result<(Value, Duration), String> {
        let path = self.root.path().join(format!("{name}.toml"));
        fs::write(&path, config).map_err(|e| e.to_string())?;
        let out = self.root.path().join(name);
        let start = Instant::now();
        self.invoke(command, &path, &out, 1)?;
        let elapsed = start.elapsed();
        let text =
            fs::read_to_string(out.join(format!("{command}.json"))).map_err(|e| e.to_string())?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        self.runs.push(Run {
            command,
            config: path,
            out,
        });
        Ok((doc["result"].clone(), elapsed))
    }
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn criterion<F>(id: &'static str, f: F) -> Outcome
where
    F: FnOnce() -> Result<(bool, String), String>,
{
    match f() {
        Ok((pass, detail)) => Outcome { id, pass, detail },
        Err(e) => Outcome {
            id,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn ou_semicircle(h: &mut Harness) -> Outcome {
    criterion("1 OU semicircle", || {
        let config = r#"
            schema_version = 1
            N = 500
            M = 1
            P = 256
            T = 1.0
            theta = 1.0
            seed = 2024
            initial = { kind = "zero" }
            model = { name = "free_ou", params = { mu = -2.0, sigma = 1.0 } }
            experiment = { kind = "spectrum", bins = 50 }
            output = { formats = ["csv", "json"] }
        "#;
        let (r, t) = h.run("ou_spectrum", "spectrum", config)?;
        let second = num(&r["moments"]["second_moment"]);
        let radius = num(&r["max_abs_eigenvalue"]);
        let pass =
            within(second, 0.2454, 0.10) && within(radius, 0.9908, 0.10) && t.as_secs() < 120;
        Ok((
            pass,
            format!("second moment {second:.4} (0.2454 ± 10%), max|λ| {radius:.4} (0.9908 ± 10%), {t:.1?}"),
        ))
    })
}

fn gbm2_moments(h: &mut Harness) -> Outcome {
    criterion("2 GBM II mean/variance", || {
        let config = r#"
            schema_version = 1
            N = 200
            M = 8
            P = 100
            T = 0.09765625
            theta = 1.0
            seed = 17
            model = { name = "free_gbm2", params = { mu = -1.0 } }
            experiment = { kind = "simulate" }
            output = { formats = ["csv", "json"] }
        "#;
        let (r, t) = h.run("gbm2_simulate", "simulate", config)?;
        let mean = num(&r["terminal"]["mean_trace"]);
        let var = num(&r["terminal"]["mean_spectral_variance"]);
        let pass = within(mean, 0.9070, 0.02) && within(var, 0.3548, 0.15) && t.as_secs() < 180;
        Ok((
            pass,
            format!("mean {mean:.4} (0.9070 ± 2%), variance {var:.4} (0.3548 ± 15%), {t:.1?}"),
        ))
    })
}

fn cir_mean(h: &mut Harness) -> Outcome {
    criterion("3 CIR mean", || {
        let config = r#"
            schema_version = 1
            N = 200
            M = 8
            P = 300
            T = 0.29296875
            theta = 1.0
            seed = 3
            model = { name = "free_cir", params = { alpha = 2.0, beta = 4.0, sigma = 1.0 } }
            experiment = { kind = "simulate" }
            output = { formats = ["csv", "json"] }
        "#;
        let (r, t) = h.run("cir_simulate", "simulate", config)?;
        let mean = num(&r["terminal"]["mean_trace"]);
        let pass = within(mean, 0.6549, 0.02) && t.as_secs() < 180;
        Ok((pass, format!("mean {mean:.4} (0.6549 ± 2%), {t:.1?}")))
    })
}

fn converge_config(model: &str, theta: f64) -> String {
    format!(
        r#"
        schema_version = 1
        N = 10
        M = 64
        P = 4096
        T = 1.0
        theta = {theta:?}
        seed = 7
        model = {model}
        experiment = {{ kind = "converge", ratios = [8, 16, 32, 64, 128] }}
        output = {{ formats = ["csv", "json"] }}
        "#
    )
}

fn slope_of(r: &Value) -> f64 {
    num(&r["slope"])
}

fn strong_order_multiplicative(h: &mut Harness) -> Outcome {
    criterion("4 strong order, multiplicative noise", || {
        let mut pass = true;
        let mut parts = vec![];
        for theta in [0.0, 0.5, 1.0] {
            let config =
                converge_config(r#"{ name = "free_gbm2", params = { mu = -1.0 } }"#, theta);
            let (r, t) = h.run(&format!("gbm2_converge_{theta}"), "converge", &config)?;
            let slope = slope_of(&r);
            pass &= (0.35..=0.70).contains(&slope) && t.as_secs() < 300;
            parts.push(format!("θ={theta}: {slope:.4} ({t:.1?})"));
        }
        Ok((
            pass,
            format!("slopes in [0.35, 0.70]: {}", parts.join(", ")),
        ))
    })
}

fn strong_order_additive(h: &mut Harness) -> Outcome {
    criterion("5 strong order, additive noise", || {
        let config = converge_config(
            r#"{ name = "free_ou", params = { mu = -1.0, sigma = 1.0 } }"#,
            1.0,
        );
        let (r, t) = h.run("ou_converge", "converge", &config)?;
        let slope = slope_of(&r);
        let pass = (0.80..=1.20).contains(&slope) && t.as_secs() < 300;
        Ok((pass, format!("slope {slope:.4} in [0.80, 1.20], {t:.1?}")))
    })
}

fn stability_config(theta: f64, steps: &str) -> String {
    format!(
        r#"
        schema_version = 1
        N = 100
        M = 8
        T = 20.0
        theta = {theta:?}
        seed = 11
        model = {{ name = "free_ou", params = {{ mu = -4.0, sigma = 1.0 }} }}
        experiment = {{ kind = "stability", mode = "perturbation", step_sizes = {steps} }}
        output = {{ formats = ["csv", "json"] }}
        "#
    )
}

fn stability_dichotomy(h: &mut Harness) -> Outcome {
    criterion("6 stability dichotomy", || {
        let start = Instant::now();
        let (em, _) = h.run(
            "ou_stability_em",
            "stability",
            &stability_config(0.0, "[1.0]"),
        )?;
        let em = &em["series"][0];
        let em_unstable = em["empirical"] == "unstable";
        let em_factor = num(&em["analytic_factor"]);

        let (bem, _) = h.run(
            "ou_stability_bem",
            "stability",
            &stability_config(1.0, "[0.25, 0.5, 1.0, 2.0, 4.0]"),
        )?;
        let series = bem["series"].as_array().cloned().unwrap_or_default();
        let all_stable = series.len() == 5 && series.iter().all(|s| s["empirical"] == "stable");
        let monotone = series.iter().all(|s| s["monotone"] == true);
        let worst = series
            .iter()
            .map(|s| num(&s["factor_error"]))
            .fold(0.0f64, |a, b| a.max(b));
        let t = start.elapsed();
        let pass = em_unstable && all_stable && monotone && worst <= 1e-12 && t.as_secs() < 120;
        Ok((
            pass,
            format!(
                "EM h=1 {} (factor {em_factor}), BEM all stable {all_stable}, monotone {monotone}, \
                 max factor error {worst:.1e}, {t:.1?}",
                em["empirical"].as_str().unwrap_or("?")
            ),
        ))
    })
}

/// Backward Euler at h = 4 against forward Euler at h = 1/4 on the same system.
fn efficiency() -> Outcome {
    criterion("6+ BEM h=4 vs EM h=1/4", || {
        let model = ModelSpec::free_ou(-4.0, 1.0);
        let (u, v) = (
            SymMatrix::identity(100),
            SymMatrix::scaled_identity(100, 2.0),
        );
        let run = |theta: f64, h: f64| -> Result<(usize, Duration, bool), String> {
            let setup = StabilitySetup {
                mode: StabilityMode::Perturbation,
                dim: 100,
                paths: 8,
                horizon: 20.0,
                step_sizes: vec![h],
                theta,
                seed: 11,
                solver: SolverOptions::default(),
            };
            let start = Instant::now();
            let report =
                stability_experiment(&model, &u, Some(&v), &setup).map_err(|e| e.to_string())?;
            let s = &report.series[0];
            Ok((
                s.steps,
                start.elapsed(),
                s.empirical == freestm::analysis::EmpiricalClass::Stable,
            ))
        };
        let (em_steps, em_time, em_stable) = run(0.0, 0.25)?;
        let (bem_steps, bem_time, bem_stable) = run(1.0, 4.0)?;
        let pass = em_stable && bem_stable && bem_steps < em_steps && bem_time < em_time;
        Ok((
            pass,
            format!(
                "EM {em_steps} steps in {em_time:.1?}, BEM {bem_steps} steps in {bem_time:.1?}"
            ),
        ))
    })
}

fn bound_calculator() -> Outcome {
    criterion("7 stability-bound calculator", || {
        let e = |e: freestm::error::Error| e.to_string();
        let stiff = stability_bound(1.0, 4.0, 0.0, 16.0).map_err(e)?;
        let formula_ok = stiff.h_max == f64::INFINITY
            && [0.25, 1.0, 4.0, 100.0]
                .iter()
                .all(|&h| (stiff.decay_rate(h) - 8.0 / (1.0 + 8.0 * h)).abs() <= 1e-15);
        let small = stability_bound(1.0, 0.5, 0.5, 1.0).map_err(e)?;
        let limit_gap = (small.decay_rate(1e-9) - small.continuous_rate()).abs();
        let wide_gap = (stiff.decay_rate(1e-9) - stiff.continuous_rate()).abs();
        let pass = formula_ok && limit_gap <= 1e-9;
        Ok((
            pass,
            format!(
                "h_max=inf, decay(4)={:.4}; |decay(1e-9) − (2L′−K̂)| = {limit_gap:.1e} at L′=K̂=0.5 \
                 ({wide_gap:.1e} at L′=4, K̂=0)",
                stiff.decay_rate(4.0)
            ),
        ))
    })
}

fn ito_identity() -> Outcome {
    criterion("8 free Itô moment identity", || {
        let start = Instant::now();
        let e = |e: freestm::error::Error| e.to_string();
        let a = MatrixSpec::Random {
            seed: 1,
            shift: 1.0,
        }
        .build(200)
        .map_err(e)?;
        let b = MatrixSpec::Random {
            seed: 2,
            shift: -0.5,
        }
        .build(200)
        .map_err(e)?;
        let r = ito_moment_check(200, 200, 0.1, &a, &b, 5).map_err(e)?;
        let z = r.finite_n.z_score;
        let t = start.elapsed();
        Ok((
            z.abs() <= 4.0 && t.as_secs() < 60,
            format!(
                "empirical {:.6}, predicted {:.6}, z {z:.3}, {t:.1?}",
                r.finite_n.empirical, r.finite_n.predicted
            ),
        ))
    })
}

fn solver_equivalence() -> Outcome {
    criterion("9 solver equivalence", || {
        let start = Instant::now();
        let e = |e: freestm::error::Error| e.to_string();
        let models = [
            ModelSpec::free_ou(-4.0, 1.0),
            ModelSpec::free_cir(2.0, 4.0, 1.0).map_err(e)?,
        ];
        let strategies = [
            Strategy::ClosedForm,
            Strategy::SpectralNewton,
            Strategy::FixedPoint,
        ];
        let (dim, h) = (20, 1.0 / 64.0);
        let mut worst = 0.0f64;
        for (k, model) in models.iter().enumerate() {
            for theta in [0.5, 1.0] {
                let steppers = strategies
                    .iter()
                    .map(|&s| {
                        Stepper::new(model, &SolverConfig::new(theta, h, 100).with_strategy(s))
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(e)?;
                let mut stream = RandomStream::new(99, k as u64);
                let mut u = SymMatrix::identity(dim);
                for _ in 0..100 {
                    let dw = sample_increment(dim, h, &mut stream);
                    let next = steppers
                        .iter()
                        .map(|s| s.step(&u, &dw).map(|(y, _)| y))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(e)?;
                    for i in 0..next.len() {
                        for j in i + 1..next.len() {
                            worst = worst.max((&next[i] - &next[j]).l2_norm());
                        }
                    }
                    u = next.into_iter().next().expect("three strategies");
                }
            }
        }
        let t = start.elapsed();
        Ok((
            worst <= 1e-9 && t.as_secs() < 60,
            format!("max pairwise l2 difference {worst:.1e} over 100 steps x 4 cases, {t:.1?}"),
        ))
    })
}

fn determinism(h: &Harness) -> Outcome {
    criterion("10 determinism", || {
        let mut compared = 0;
        let mut mismatched = vec![];
        for (i, run) in h.runs.iter().enumerate() {
            let csv = format!("{}.csv", run.command);
            let reference = fs::read(run.out.join(&csv)).map_err(|e| e.to_string())?;
            for threads in [2, 1] {
                let out = h.root.path().join(format!("rerun_{i}_{threads}"));
                h.invoke(run.command, &run.config, &out, threads)?;
                let again = fs::read(out.join(&csv)).map_err(|e| e.to_string())?;
                compared += 1;
                if again != reference {
                    mismatched.push(format!("{} (threads {threads})", run.config.display()));
                }
            }
        }
        Ok((
            compared > 0 && mismatched.is_empty(),
            if mismatched.is_empty() {
                format!("{compared} reruns byte-identical across 1 and 2 threads")
            } else {
                format!("differing CSV: {}", mismatched.join(", "))
            },
        ))
    })
}

fn main() -> ExitCode {
    let mut h = Harness {
        root: tempfile::tempdir().expect("temporary directory"),
        runs: vec![],
    };
    let mut outcomes = vec![];
    let mut report = |o: Outcome| {
        println!(
            "{} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.detail
        );
        outcomes.push(o.pass);
    };
    report(ou_semicircle(&mut h));
    report(gbm2_moments(&mut h));
    report(cir_mean(&mut h));
    report(strong_order_multiplicative(&mut h));
    report(strong_order_additive(&mut h));
    report(stability_dichotomy(&mut h));
    report(efficiency());
    report(bound_calculator());
    report(ito_identity());
    report(solver_equivalence());
    report(determinism(&h));
    let failed = outcomes.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
