//! Diagnostic and closed-form studies runnable from the command line.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::closedform::{
    build_parity_network, build_w, diverges, estimate_c, expected_iterate_from,
    iterate_distance_lower_bound, linearized_distance_bound, svd, uw_identity_deviation,
};
use crate::datagen::{enumerate_bits, gen_pwl_slope_pm1, parity_label, random_bits, StockTask};
use crate::diagnostics::{
    grad_variance_exact, parity_family, parity_orthogonality_check, snr_at_init,
    stocks_estimator_agreement, stocks_noise_ratio, theorem3_exact_variance,
    theorem3_variance_estimate, InnerExpectation, InputSpace, Report, SignFeaturePredictor,
    SnrConfig, TupleSampling,
};
use crate::engine::{LossKind, Tensor};
use crate::error::{Error, Result};
use crate::experiments::Check;
use crate::models::{parity_learner, simplex_head, ImageScale};
use crate::plot::{Plot, Series};
use crate::rng;
use crate::stats::{linear_fit, loglog_slope};

/// A diagnostic or closed-form study with every parameter resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolSpec {
    /// Exact gradient variance over the parity family next to its bound.
    Variance { seed: u64, dims: Vec<usize> },
    /// Largest pairwise parity correlation by enumeration.
    Orthogonality { dims: Vec<usize> },
    /// End-to-end and decomposition SNR at init for each tuple size.
    Snr {
        seed: u64,
        ks: Vec<usize>,
        /// Monte-Carlo tuples; `None` enumerates every tuple of the pool.
        samples: Option<usize>,
        pool_size: usize,
        inits: usize,
        scale: ImageScale,
        shadow_f32: bool,
    },
    /// Gradient variance for products of `k` sign targets.
    Thm3 {
        seed: u64,
        ks: Vec<usize>,
        d: usize,
        targets: usize,
        features: usize,
        /// Gaussian tuples per target; `None` uses the arcsine law.
        inner_samples: Option<usize>,
    },
    /// Noise ratio and unbiasedness of the two stocks gradient estimators.
    StocksNoise {
        seed: u64,
        ks: Vec<usize>,
        d: usize,
        samples: usize,
        draws: usize,
    },
    /// Condition number of `W` against `n`.
    Cond { ns: Vec<usize> },
    /// Condition number of the window correlation of slope +-1 curves.
    Whiten {
        seed: u64,
        ns: Vec<usize>,
        curves: usize,
        kpieces: usize,
    },
    /// Expected iterate of the linear encoder and its distance bounds.
    Iterate {
        n: usize,
        /// Defaults to `0.5 / S11^2`.
        eta: Option<f64>,
        lambda: f64,
        t: u64,
    },
    /// Exactness of `U W = I`.
    Inverse { ns: Vec<usize> },
    /// The explicit parity network on every input of the cube.
    ParityNet { seed: u64, dims: Vec<usize> },
}

impl ToolSpec {
    pub fn group(&self) -> &'static str {
        match self {
            ToolSpec::Variance { .. }
            | ToolSpec::Orthogonality { .. }
            | ToolSpec::Snr { .. }
            | ToolSpec::Thm3 { .. }
            | ToolSpec::StocksNoise { .. } => "diagnose",
            _ => "closedform",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToolSpec::Variance { .. } => "variance",
            ToolSpec::Orthogonality { .. } => "orthogonality",
            ToolSpec::Snr { .. } => "snr",
            ToolSpec::Thm3 { .. } => "thm3",
            ToolSpec::StocksNoise { .. } => "stocks",
            ToolSpec::Cond { .. } => "cond",
            ToolSpec::Whiten { .. } => "whiten",
            ToolSpec::Iterate { .. } => "iterate",
            ToolSpec::Inverse { .. } => "inverse",
            ToolSpec::ParityNet { .. } => "parity_net",
        }
    }

    /// Replaces the seed of seeded studies.
    pub fn set_seed(&mut self, new: u64) {
        match self {
            ToolSpec::Variance { seed, .. }
            | ToolSpec::Snr { seed, .. }
            | ToolSpec::Thm3 { seed, .. }
            | ToolSpec::StocksNoise { seed, .. }
            | ToolSpec::Whiten { seed, .. }
            | ToolSpec::ParityNet { seed, .. } => *seed = new,
            _ => {}
        }
    }
}

/// Result of one study: a JSON summary, output files and checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutcome {
    pub summary: Value,
    /// `(file name, contents)` written under the study directory.
    pub files: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolManifest {
    pub tool: ToolSpec,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
}

impl ToolManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn nonempty(xs: &[usize], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{what} list is empty")));
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
}

fn report_json<T: Serialize, C: Serialize>(
    kind: &str,
    config: &C,
    seed: u64,
    samples: Vec<usize>,
    result: T,
) -> Result<String> {
    Report::new(kind, config, seed, samples, result)?.to_json()
}

/// Runs a study; the outcome is a pure function of the spec.
pub fn run_tool(spec: &ToolSpec) -> Result<ToolOutcome> {
    match spec {
        ToolSpec::Variance { seed, dims } => variance(spec, *seed, dims),
        ToolSpec::Orthogonality { dims } => orthogonality(dims),
        ToolSpec::Snr {
            seed,
            ks,
            samples,
            pool_size,
            inits,
            scale,
            shadow_f32,
        } => {
            nonempty(ks, "k")?;
            let mut files = Vec::new();
            let mut rows = Vec::new();
            for &k in ks {
                let cfg = SnrConfig {
                    k,
                    scale: *scale,
                    pool_size: *pool_size,
                    sampling: match samples {
                        Some(s) => TupleSampling::MonteCarlo { samples: *s },
                        None => TupleSampling::Exhaustive,
                    },
                    inits: *inits,
                    shadow_f32: *shadow_f32,
                };
                let (avg, _) = snr_at_init(&cfg, rng::derive_seed(*seed, k as u64))?;
                rows.push((k, avg.end_to_end.log_ratio, avg.decomposition.log_ratio));
                let n = avg.end_to_end.estimator_sample_count;
                files.push((
                    format!("snr_k{k}.json"),
                    report_json("snr", &cfg, *seed, vec![n], &avg)?,
                ));
            }
            let pts = |pick: fn(&(usize, Option<f64>, Option<f64>)) -> Option<f64>| {
                rows.iter()
                    .filter_map(|r| pick(r).map(|v| (r.0 as f64, v)))
                    .collect::<Vec<_>>()
            };
            let plot = Plot::new("log SNR at init", "k", "log SNR")
                .with(Series::line("end_to_end", pts(|r| r.1)))
                .with(Series::line("decomposition", pts(|r| r.2)));
            files.push(("snr.svg".into(), plot.to_svg()));
            let mut checks = Vec::new();
            let e2e: Vec<f64> = rows.iter().map(|r| r.1.unwrap_or(f64::NAN)).collect();
            if rows.len() >= 2 {
                let decreasing = e2e.windows(2).all(|w| w[1] < w[0]);
                checks.push(Check::new(
                    "end-to-end log SNR strictly decreasing in k",
                    decreasing,
                    format!("{e2e:?}"),
                ));
            }
            for r in rows.iter().filter(|r| r.0 >= 2) {
                let (e, d) = (r.1.unwrap_or(f64::NAN), r.2.unwrap_or(f64::NAN));
                checks.push(Check::new(
                    format!("decomposition log SNR above end-to-end at k={}", r.0),
                    d > e,
                    format!("decomposition {d:.3}, end_to_end {e:.3}"),
                ));
            }
            let summary = json!({
                "k": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "end_to_end_log_snr": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "decomposition_log_snr": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
            });
            Ok(ToolOutcome {
                summary,
                files,
                checks,
            })
        }
        ToolSpec::Thm3 {
            seed,
            ks,
            d,
            targets,
            features,
            inner_samples,
        } => {
            nonempty(ks, "k")?;
            let predictor =
                SignFeaturePredictor::random(*d, *features, rng::derive_seed(*seed, 0))?;
            let inner = match inner_samples {
                Some(s) => InnerExpectation::MonteCarlo(*s),
                None => InnerExpectation::Exact,
            };
            let mut files = Vec::new();
            let mut rows = Vec::new();
            for &k in ks {
                let r = theorem3_variance_estimate(
                    k,
                    *d,
                    *targets,
                    inner,
                    &predictor,
                    rng::derive_seed(*seed, k as u64),
                )?;
                let exact = theorem3_exact_variance(k, *d, *features)?;
                rows.push((k, r.measured_variance, r.std_error.unwrap_or(0.0), exact));
                files.push((
                    format!("thm3_k{k}.json"),
                    report_json("thm3", spec, *seed, vec![r.sample_count], &r)?,
                ));
            }
            let mut checks = Vec::new();
            let positive: Vec<&(usize, f64, f64, f64)> =
                rows.iter().filter(|r| r.1 > 0.0).collect();
            if rows.len() >= 2 {
                let xs: Vec<f64> = positive.iter().map(|r| r.0 as f64).collect();
                let ys: Vec<f64> = positive.iter().map(|r| r.1.ln()).collect();
                let slope = if positive.len() == rows.len() {
                    linear_fit(&xs, &ys).0
                } else {
                    f64::NAN
                };
                let decreasing = ys.windows(2).all(|w| w[1] < w[0]);
                checks.push(Check::new(
                    "ln variance decreasing in k with negative slope",
                    decreasing && slope < 0.0,
                    format!("slope {slope:.4}, ln variance {ys:?}"),
                ));
            }
            if let Some(r) = rows.iter().find(|r| r.0 == 1) {
                let z = (r.1 - r.3).abs() / r.2;
                checks.push(Check::new(
                    "k=1 variance within 3 standard errors of the closed form",
                    z <= 3.0,
                    format!("estimate {:.6e}, closed form {:.6e}, z {z:.3}", r.1, r.3),
                ));
            }
            let summary = json!({
                "k": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "variance": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "std_error": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
                "closed_form": rows.iter().map(|r| r.3).collect::<Vec<_>>(),
            });
            Ok(ToolOutcome {
                summary,
                files,
                checks,
            })
        }
        ToolSpec::StocksNoise {
            seed,
            ks,
            d,
            samples,
            draws,
        } => {
            nonempty(ks, "k")?;
            let mut files = Vec::new();
            let mut checks = Vec::new();
            let mut rows = Vec::new();
            for &k in ks {
                let s = rng::derive_seed(*seed, k as u64);
                let task = StockTask::new(*d, k, rng::derive_seed(s, 0))?;
                let net = simplex_head(*d, k, rng::derive_seed(s, 2))?;
                let mut r = rng::substream(s, 1);
                let xs: Vec<_> = (0..*samples).map(|_| task.sample(&mut r)).collect();
                let noise = stocks_noise_ratio(&net, &xs)?;
                let agree = stocks_estimator_agreement(
                    &net,
                    &task,
                    &xs[0].x,
                    *draws,
                    rng::derive_seed(s, 3),
                )?;
                let kf = k as f64;
                if k <= 100 {
                    checks.push(Check::new(
                        format!("k={k} noise ratio in [k/2, 2k]"),
                        (kf / 2.0..=2.0 * kf).contains(&noise.ratio),
                        format!("ratio {:.3}", noise.ratio),
                    ));
                }
                checks.push(Check::new(
                    format!("k={k} estimators agree within 4 standard errors"),
                    agree.z_score() <= 4.0,
                    format!("z {:.3}", agree.z_score()),
                ));
                rows.push((k, noise.ratio, agree.z_score()));
                files.push((
                    format!("stocks_k{k}.json"),
                    report_json(
                        "stocks_noise",
                        spec,
                        *seed,
                        vec![noise.sample_count, agree.draws],
                        json!({
                            "e2e_noise": noise.e2e_noise,
                            "decomp_noise": noise.decomp_noise,
                            "ratio": noise.ratio,
                            "mean_difference_norm": agree.mean_difference_norm,
                            "std_error": agree.std_error,
                        }),
                    )?,
                ));
            }
            let summary = json!({
                "k": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "ratio": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "agreement_z": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
            });
            Ok(ToolOutcome {
                summary,
                files,
                checks,
            })
        }
        ToolSpec::Cond { ns } => {
            nonempty(ns, "n")?;
            let mut pts = Vec::new();
            for &n in ns {
                pts.push((n as f64, svd(&build_w(n))?.condition_number()?));
            }
            scaling("kappa(W)", &pts, 3.2)
        }
        ToolSpec::Whiten {
            seed,
            ns,
            curves,
            kpieces,
        } => {
            nonempty(ns, "n")?;
            if *curves == 0 {
                return Err(Error::invalid("need at least one curve"));
            }
            let mut pts = Vec::new();
            for &n in ns {
                let s = rng::derive_seed(*seed, n as u64);
                let cs = (0..*curves as u64)
                    .map(|i| gen_pwl_slope_pm1(n, *kpieces, rng::derive_seed(s, i)))
                    .collect::<Result<Vec<_>>>()?;
                pts.push((n as f64, estimate_c(&cs)?.condition_number()));
            }
            scaling("kappa(C)", &pts, 2.5)
        }
        ToolSpec::Iterate { n, eta, lambda, t } => {
            let sp = svd(&build_w(*n))?;
            let eta = eta.unwrap_or(0.5 / (sp.s11() * sp.s11()));
            let expected = expected_iterate_from(&sp, eta, *lambda, *t)?;
            let lower = iterate_distance_lower_bound(&sp, eta, *lambda, *t)?;
            let summary = json!({
                "n": n,
                "eta": eta,
                "lambda": lambda,
                "t": t,
                "s11": sp.s11(),
                "snn": sp.snn(),
                "diverges": diverges(&sp, eta, *lambda),
                "distance_lower_bound": lower,
                "linearized_bound": linearized_distance_bound(&sp, eta, *lambda, *t),
            });
            let rows: Vec<Vec<f64>> = (0..expected.nrows())
                .map(|i| expected.row(i).iter().copied().collect())
                .collect();
            let header: Vec<String> = (0..*n).map(|j| format!("c{j}")).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            Ok(ToolOutcome {
                summary,
                files: vec![("expected_iterate.csv".into(), csv_text(&header, &rows)?)],
                checks: Vec::new(),
            })
        }
        ToolSpec::Inverse { ns } => {
            nonempty(ns, "n")?;
            let devs: Vec<(usize, i64)> =
                ns.iter().map(|&n| (n, uw_identity_deviation(n))).collect();
            let checks = devs
                .iter()
                .map(|&(n, dev)| {
                    Check::new(
                        format!("U W = I exactly at n={n}"),
                        dev == 0,
                        format!("max deviation {dev}"),
                    )
                })
                .collect();
            Ok(ToolOutcome {
                summary: json!({ "n": ns, "max_deviation": devs.iter().map(|d| d.1).collect::<Vec<_>>() }),
                files: Vec::new(),
                checks,
            })
        }
        ToolSpec::ParityNet { seed, dims } => {
            nonempty(dims, "d")?;
            let mut checks = Vec::new();
            let mut errors = Vec::new();
            for &d in dims {
                if d > 20 {
                    return Err(Error::TooLarge(format!("enumerating 2^{d} inputs")));
                }
                let v = random_bits(d, &mut rng::substream(*seed, d as u64));
                let net = build_parity_network(d, &v)?;
                let n = 1u64 << d;
                let mut wrong = 0usize;
                for start in (0..n).step_by(4096) {
                    let end = (start + 4096).min(n);
                    let xs: Vec<Vec<u8>> = (start..end).map(|i| enumerate_bits(d, i)).collect();
                    let t = Tensor::new(
                        vec![xs.len(), d],
                        xs.iter()
                            .flat_map(|x| x.iter().map(|&b| b as f64))
                            .collect(),
                    )?;
                    let out = net.predict(&t)?;
                    wrong += xs
                        .iter()
                        .zip(out.data())
                        .filter(|(x, &p)| p != parity_label(x, &v) as f64)
                        .count();
                }
                checks.push(Check::new(
                    format!("parity network exact at d={d}"),
                    wrong == 0,
                    format!("{wrong} errors over {n} inputs"),
                ));
                errors.push(wrong);
            }
            Ok(ToolOutcome {
                summary: json!({ "d": dims, "errors": errors }),
                files: Vec::new(),
                checks,
            })
        }
    }
}

fn variance(spec: &ToolSpec, seed: u64, dims: &[usize]) -> Result<ToolOutcome> {
    nonempty(dims, "d")?;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &d in dims {
        let net = parity_learner(d, rng::derive_seed(seed, d as u64))?;
        let family = parity_family(d)?;
        let r = grad_variance_exact(
            &net,
            &InputSpace::Hypercube { d },
            &family,
            LossKind::Square,
        )?;
        checks.push(Check::new(
            format!("variance within bound at d={d}"),
            r.within_bound(),
            format!(
                "variance {:.6e}, bound {:.6e}",
                r.measured_variance, r.bound
            ),
        ));
        rows.push((d, r.measured_variance, r.bound));
        files.push((
            format!("variance_d{d}.json"),
            report_json("variance", spec, seed, vec![r.sample_count], &r)?,
        ));
    }
    Ok(ToolOutcome {
        summary: json!({
            "d": dims,
            "variance": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            "bound": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
        }),
        files,
        checks,
    })
}

fn orthogonality(dims: &[usize]) -> Result<ToolOutcome> {
    nonempty(dims, "d")?;
    let mut worst = Vec::new();
    let mut checks = Vec::new();
    for &d in dims {
        let m = parity_orthogonality_check(d)?;
        checks.push(Check::new(
            format!("parities pairwise orthogonal at d={d}"),
            m == 0.0,
            format!("max |correlation| {m}"),
        ));
        worst.push(m);
    }
    Ok(ToolOutcome {
        summary: json!({ "d": dims, "max_correlation": worst }),
        files: Vec::new(),
        checks,
    })
}

/// CSV, plot and fitted log-log slope of a `(n, kappa)` series.
fn scaling(label: &str, pts: &[(f64, f64)], min_slope: f64) -> Result<ToolOutcome> {
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
    let logs: Vec<(f64, f64)> = pts.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    let plot = Plot::new(label, "ln n", &format!("ln {label}")).with(Series::line(label, logs));
    let mut checks = Vec::new();
    let slope = (pts.len() >= 2).then(|| loglog_slope(pts));
    if let Some(s) = slope {
        checks.push(Check::new(
            format!("log-log slope of {label} >= {min_slope}"),
            s >= min_slope,
            format!("slope {s:.4}"),
        ));
    }
    Ok(ToolOutcome {
        summary: json!({
            "n": pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            "kappa": pts.iter().map(|p| p.1).collect::<Vec<_>>(),
            "loglog_slope": slope,
        }),
        files: vec![
            ("kappa.csv".into(), csv_text(&["n", "kappa"], &rows)?),
            ("kappa.svg".into(), plot.to_svg()),
        ],
        checks,
    })
}

/// Writes the outcome under `<out>/<group>/<name>/` with a manifest.
pub fn write_tool(spec: &ToolSpec, outcome: &ToolOutcome, out: &Path) -> Result<()> {
    let dir = out.join(spec.group()).join(spec.name());
    std::fs::create_dir_all(&dir)?;
    for (name, text) in &outcome.files {
        std::fs::write(dir.join(name), text)?;
    }
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&outcome.summary)?,
    )?;
    let manifest = ToolManifest {
        tool: spec.clone(),
        files: outcome.files.iter().map(|f| f.0.clone()).collect(),
        checks: outcome.checks.clone(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}
