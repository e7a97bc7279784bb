use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use loewner_core::bessel::hit_check;
use loewner_core::chordal;
use loewner_core::driver::sample_brownian_driver;
use loewner_core::geometry::{hausdorff_distance, sup_metric, unparam_metric, PointCloud};
use loewner_core::harness::{
    rate_experiment, return_prob_experiment, rn_martingale_check, tightness_experiment, RateConfig, RateEvent,
    ReturnProbConfig, RnCheckConfig, SubstreamSeed, TightnessConfig,
};
use loewner_core::multichordal::{partial_potential, sample_independent_chords, PatternFile};
use loewner_core::radial;
use loewner_core::rng::{derive_seed, stream};
use loewner_core::{Driver, EnergyValue, Mode, TightnessConstants, Trace};
use serde::Serialize;
use serde_json::json;

use crate::{Cli, Command, EventKind, Format, MetricKind, RunOutput};

/// Writes `stem.csv` via `csv` or `stem.json` from `value`, per `--format`.
fn write_table<S, F>(cli: &Cli, stem: &str, value: &S, csv: F) -> Result<String>
where
    S: Serialize,
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let (name, bytes) = match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            csv(&mut buf)?;
            (format!("{stem}.csv"), buf)
        }
        Format::Json => (format!("{stem}.json"), serde_json::to_vec_pretty(value)?),
    };
    fs::write(cli.out.join(&name), bytes).with_context(|| format!("cannot write {name}"))?;
    Ok(name)
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text).with_context(|| format!("cannot write {name}"))?;
    Ok(name.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn verdict(pass: bool, files: Vec<String>, seeds: Vec<SubstreamSeed>, summary: serde_json::Value) -> RunOutput {
    RunOutput { files, seeds, verdict: Some(pass), summary }
}

fn done(files: Vec<String>, seeds: Vec<SubstreamSeed>, summary: serde_json::Value) -> RunOutput {
    RunOutput { files, seeds, verdict: None, summary }
}

fn single_seed(seed: u64, kappa: f64) -> Vec<SubstreamSeed> {
    vec![SubstreamSeed { kappa_index: 0, kappa, seed: derive_seed(seed, &[0]) }]
}

pub fn run(cli: &Cli) -> Result<RunOutput> {
    match &cli.command {
        Command::Simulate(a) => {
            let mode: Mode = a.mode.into();
            let d = sample_brownian_driver(a.kappa, a.horizon, a.steps, mode, &mut stream(cli.seed, &[]))?;
            let g = match mode {
                Mode::Chordal => chordal::forward(&d)?,
                Mode::Radial => radial::forward(&d)?,
            };
            let mut files = vec![
                write_table(cli, "driver", &d, |b| Ok(d.write_csv(b)?))?,
                write_table(cli, "trace", &g, |b| Ok(g.write_csv(b)?))?,
            ];
            if mode == Mode::Radial {
                let theta = radial::theta_from_trace(&d)?;
                files.push(write_table(cli, "theta", &theta, |b| Ok(theta.write_csv(b)?))?);
            }
            let tip = g.tip();
            Ok(done(
                files,
                vec![],
                json!({ "mode": mode, "kappa": a.kappa, "horizon": a.horizon, "steps": a.steps, "tip": [tip.re, tip.im] }),
            ))
        }
        Command::Energy(a) => {
            let d = Driver::read_csv(open(&a.driver)?, a.mode.into())?;
            let e = d.dirichlet_energy();
            let summary =
                json!({ "energy": e.finite(), "finite": e.is_finite(), "horizon": d.horizon(), "steps": d.steps() });
            let file = write_table(cli, "energy", &summary, |b| {
                let v = match e {
                    EnergyValue::Finite(v) => v.to_string(),
                    EnergyValue::Infinite => "inf".to_string(),
                };
                writeln!(b, "energy\n{v}")?;
                Ok(())
            })?;
            Ok(done(vec![file], vec![], summary))
        }
        Command::Unzip(a) => {
            let g = Trace::read_csv(open(&a.trace)?, Mode::Chordal)?;
            let d = chordal::unzip_trace(&g)?;
            let file = write_table(cli, "driver", &d, |b| Ok(d.write_csv(b)?))?;
            let energy = d.dirichlet_energy().finite();
            Ok(done(vec![file], vec![], json!({ "hcap": 2.0 * d.horizon(), "steps": d.steps(), "energy": energy })))
        }
        Command::Rate(a) => {
            let event = match a.event {
                EventKind::Cone => RateEvent::ConeAngle { theta: a.theta, radius: a.radius },
                EventKind::Return => RateEvent::Return { n: a.n, big_n: a.big_n, mode: a.mode.into() },
                EventKind::TargetBall => RateEvent::TargetBall { r: a.radius },
            };
            let cfg = RateConfig {
                event,
                kappa_grid: a.kappas.clone(),
                samples: a.samples,
                n_steps: a.steps,
                horizon: a.horizon,
                seed: cli.seed,
                workers: cli.workers,
            };
            let est = rate_experiment(&cfg)?;
            for w in &est.warnings {
                eprintln!("warning: {w}");
            }
            let file = write_table(cli, "rate", &est, |b| Ok(est.write_csv(b)?))?;
            let seeds = est
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| SubstreamSeed { kappa_index: i, kappa: r.kappa, seed: r.cell_seed })
                .collect();
            Ok(done(vec![file], seeds, json!({ "event": event, "rows": est.rows, "extrapolation": est.extrapolation })))
        }
        Command::ReturnProb(a) => {
            let cfg = ReturnProbConfig {
                mode: a.mode.into(),
                n: a.n,
                big_ns: a.big_ns.clone(),
                kappa: a.kappa,
                samples: a.samples,
                n_steps: a.steps,
                horizon: a.horizon,
                slack: a.slack,
                seed: cli.seed,
                workers: cli.workers,
            };
            let r = return_prob_experiment(&cfg)?;
            let file = write_table(cli, "return_prob", &r, |b| Ok(r.write_csv(b)?))?;
            Ok(verdict(r.pass, vec![file], single_seed(cli.seed, a.kappa), serde_json::to_value(&r)?))
        }
        Command::BesselCheck(a) => {
            let r = hit_check(a.a, a.kappa, a.x0, a.delta, a.dt, a.samples, cli.seed, a.escape_factor)?;
            let body = json!({ "p_hat": r.p_hat, "p_exact": r.p_exact, "sigma": r.sigma, "pass": r.pass });
            let file = write_json(&cli.out, "bessel_check.json", &body)?;
            Ok(verdict(r.pass, vec![file], vec![], body))
        }
        Command::Tightness(a) => {
            let cfg = TightnessConfig {
                kappa_grid: a.kappas.clone(),
                n_list: a.ns.clone(),
                constants: TightnessConstants { c1: a.c1, c2: a.c2, c3: a.c3, beta: a.beta },
                samples: a.samples,
                n_steps: a.steps,
                l_y_grid: a.l_y_grid,
                seed: cli.seed,
                workers: cli.workers,
            };
            let t = tightness_experiment(&cfg)?;
            let file = write_table(cli, "tightness", &t, |b| Ok(t.write_csv(b)?))?;
            let seeds = a
                .kappas
                .iter()
                .enumerate()
                .map(|(i, &k)| SubstreamSeed { kappa_index: i, kappa: k, seed: derive_seed(cli.seed, &[i as u64]) })
                .collect();
            Ok(done(
                vec![file],
                seeds,
                json!({ "rows": t.rows, "note": "bound_shape is (n/2)^(1-1/(2κ)) at unit constant; compare shapes only" }),
            ))
        }
        Command::Metrics(a) => {
            let mode: Mode = a.mode.into();
            let ga = Trace::read_csv(open(&a.a)?, mode)?;
            let gb = Trace::read_csv(open(&a.b)?, mode)?;
            let value = match a.metric {
                MetricKind::Sup => sup_metric(&ga, &gb)?,
                MetricKind::Frechet => unparam_metric(&ga, &gb)?,
                MetricKind::Hausdorff => {
                    hausdorff_distance(&PointCloud::from_trace(&ga)?, &PointCloud::from_trace(&gb)?)
                }
            };
            let body = json!({ "value": value, "grid_sizes": [ga.len(), gb.len()], "mode": mode, "metric": a.metric });
            let file = write_json(&cli.out, "metrics.json", &body)?;
            Ok(done(vec![file], vec![], body))
        }
        Command::RnCheck(a) => {
            let cfg = RnCheckConfig {
                kappa: a.kappa,
                horizon: a.horizon,
                delta: a.delta,
                samples: a.samples,
                n_steps: a.steps,
                seed: cli.seed,
                workers: cli.workers,
            };
            let r = rn_martingale_check(&cfg)?;
            let file = write_table(cli, "rn", &r.rows, |b| Ok(r.write_csv(b)?))?;
            Ok(verdict(r.pass, vec![file], single_seed(cli.seed, a.kappa), serde_json::to_value(&r)?))
        }
        Command::Multichordal(a) => {
            let spec: PatternFile = serde_json::from_reader(open(&a.pattern)?).context("bad pattern JSON")?;
            let pattern = spec.pattern()?;
            let ens = sample_independent_chords(&pattern, &spec.points, a.kappa, a.steps, a.horizon, cli.seed)?;
            let pot = partial_potential(&ens, a.resolution)?;
            let file = write_table(cli, "chords", &ens.chords, |b| {
                writeln!(b, "chord,re,im")?;
                for (j, c) in ens.chords.iter().enumerate() {
                    for z in c {
                        writeln!(b, "{},{},{}", j + 1, z.re, z.im)?;
                    }
                }
                Ok(())
            })?;
            let seeds = (0..pattern.n())
                .map(|j| SubstreamSeed { kappa_index: j, kappa: a.kappa, seed: derive_seed(cli.seed, &[j as u64]) })
                .collect();
            let pfile = write_json(&cli.out, "potential.json", &pot)?;
            Ok(done(vec![file, pfile], seeds, serde_json::to_value(&pot)?))
        }
        Command::VerifyManifest(_) => bail!("verify-manifest is handled before dispatch"),
    }
}
