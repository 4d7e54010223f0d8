use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use obsopt::bounds::{self, SweepReport, Theorem};
use obsopt::hypothesis::{optimality_test, TestConfig};
use obsopt::kernels::{BandwidthRule, KernelFamily, KernelSpec};
use obsopt::predictive::{fit_predictive_nonparam, fit_predictive_param, predictive_decision, PredictiveFamily};
use obsopt::prescriptive::{
    fit_outcome_model, fit_treatment_model, gps_curve, impute_gps, prescriptive_nonparam_decision, GpsFeature,
    OutcomeFamily, PartialMeanCurve, PartialMeanOptions, TreatmentFamily, TreatmentModel,
};
use obsopt::optimize::argmax_on_grid;
use obsopt::regression::{FittedModel, LinearFit, ModelDocument};
use obsopt::simulation::discrete::{gen_discrete, DiscreteInstance};
use obsopt::simulation::example3::{gen_example3, Example3Spec};
use obsopt::simulation::{replication_study, ReplicationConfig, Strategy, TestSettings};
use obsopt::{DecisionSpace, ObservationalDataset, Optimum, RewardSpec};
use serde::Serialize;

use crate::cli::{BoundsArgs, FitArgs, Format, PredictArgs, PrescribeArgs, ReplicateArgs, SimulateArgs, TestArgs};
use crate::output::{parse_opt, usage, write_json, write_table, CliError, CliResult, Metadata};

#[derive(Serialize)]
struct CurveRow {
    z: f64,
    value: f64,
}

#[derive(Serialize)]
struct Decision<'a> {
    method: &'a str,
    z: f64,
    value: f64,
}

fn curve_rows(nodes: &[f64], values: &[f64]) -> Vec<CurveRow> {
    nodes.iter().zip(values).map(|(&z, &value)| CurveRow { z, value }).collect()
}

fn print_decision(method: &str, best: Optimum) -> CliResult<()> {
    write_json(&Decision { method, z: best.z, value: best.value }, None)
}

fn read_dataset(path: Option<&Path>) -> CliResult<ObservationalDataset> {
    let path = path.ok_or_else(|| usage("--data is required"))?;
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    ObservationalDataset::read_csv(BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Dataset, reward and space shared by the fitting commands.
struct FitInputs {
    data: ObservationalDataset,
    reward: RewardSpec,
    space: DecisionSpace,
}

fn fit_inputs(args: &FitArgs) -> CliResult<FitInputs> {
    let data = read_dataset(args.data.as_deref())?;
    let reward = parse_opt("reward", args.reward.as_deref(), "margin:0")?;
    let space = match &args.space {
        Some(s) => parse_opt("space", Some(s), "")?,
        None => {
            let lo = data.z().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.z().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            DecisionSpace::interval(lo, hi, 101).map_err(|e| usage(format!("--space needed: {e}")))?
        }
    };
    Ok(FitInputs { data, reward, space })
}

/// Joint kernel on `(z, x)`; without `--kernel`, more than one covariate
/// selects the fourth-order Gaussian.
fn joint_kernel(args: &FitArgs, k: usize, notices: &mut Vec<String>) -> CliResult<KernelSpec> {
    let family = match &args.kernel {
        Some(name) => parse_opt("kernel", Some(name), "")?,
        None if k >= 2 => {
            notices.push(format!("{k} covariates: using the fourth-order gaussian4 kernel"));
            KernelFamily::Gaussian4
        }
        None => KernelFamily::Gaussian2,
    };
    let bandwidth: BandwidthRule = parse_opt("bandwidth", args.bandwidth.as_deref(), "rate:0.1")?;
    Ok(KernelSpec::new(family, 1 + k, bandwidth)?)
}

pub fn simulate(args: &SimulateArgs, format: Format, meta: &mut Metadata) -> CliResult<()> {
    let instance = args.instance.as_deref().ok_or_else(|| usage("--instance is required"))?;
    let n = args.n.ok_or_else(|| usage("--n is required"))?;
    let seed = args.seed.unwrap_or(0);
    let data = if instance == "example3" {
        let defaults = Example3Spec::default();
        let spec = Example3Spec::new(args.sigma.unwrap_or(defaults.sigma), args.tau2.unwrap_or(defaults.tau2))?;
        gen_example3(&spec, n, seed)?
    } else if let Some(path) = instance.strip_prefix("table:") {
        let file = File::open(path).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        let table = DiscreteInstance::read_csv(BufReader::new(file), args.normalize)
            .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        gen_discrete(&table, n, seed)?.data
    } else {
        return Err(usage(format!("unknown instance `{instance}` (expected example3 or table:<file>)")));
    };
    match format {
        Format::Csv => match &args.out {
            Some(p) => data.write_csv(File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?)?,
            None => data.write_csv(std::io::stdout().lock())?,
        },
        Format::Json => {
            let rows: Vec<serde_json::Value> = (0..data.len())
                .map(|i| {
                    let mut row = serde_json::Map::new();
                    row.insert("z".into(), data.z()[i].into());
                    row.insert("y".into(), data.y()[i].into());
                    for (c, &v) in data.x_row(i).iter().enumerate() {
                        row.insert(format!("x{}", c + 1), v.into());
                    }
                    serde_json::Value::Object(row)
                })
                .collect();
            write_json(&rows, args.out.as_deref())?
        }
    }
    meta.output(args.out.as_deref());
    Ok(())
}

pub fn predict(args: &PredictArgs, format: Format, meta: &mut Metadata) -> CliResult<()> {
    let inputs = fit_inputs(&args.fit)?;
    let variant = args.variant.as_deref().unwrap_or("nw");
    let curve = match variant {
        "nw" => {
            let family = parse_opt("kernel", args.fit.kernel.as_deref(), "gaussian2")?;
            let bandwidth = parse_opt("bandwidth", args.fit.bandwidth.as_deref(), "rate:2.5")?;
            fit_predictive_nonparam(&inputs.data, &KernelSpec::new(family, 1, bandwidth)?, inputs.reward)?
        }
        other => {
            let family: PredictiveFamily = parse_opt("variant", Some(other), "")?;
            fit_predictive_param(&inputs.data, family, inputs.reward, args.quadratic)?
        }
    };
    let nodes = inputs.space.grid();
    let values = nodes.iter().map(|&z| curve.eval(z)).collect::<Result<Vec<_>, _>>()?;
    write_table(&curve_rows(&nodes, &values), args.fit.out.as_deref(), format)?;
    meta.output(args.fit.out.as_deref());
    if let Some(path) = &args.model {
        std::fs::write(path, curve.model_document().to_json()?)?;
        meta.output(Some(path));
    }
    print_decision(curve.variant(), predictive_decision(&curve, &inputs.space)?)
}

fn treatment_document(model: &TreatmentModel) -> FittedModel {
    let target = match model.family {
        TreatmentFamily::GaussianIdentity => "z",
        TreatmentFamily::Lognormal => "ln z",
    };
    let mut features = vec![format!("{target} ~ 1")];
    features.extend((1..=model.covariate_dim()).map(|c| format!("x{c}")));
    FittedModel::Linear {
        features,
        fit: LinearFit { coefficients: model.coefficients.clone(), residual_variance: model.tau * model.tau },
    }
}

pub fn prescribe(args: &PrescribeArgs, format: Format, meta: &mut Metadata) -> CliResult<()> {
    let inputs = fit_inputs(&args.fit)?;
    let (data, reward, space) = (&inputs.data, inputs.reward, &inputs.space);
    match args.method.as_deref().unwrap_or("nonparam") {
        "nonparam" => {
            let kernel = joint_kernel(&args.fit, data.covariate_dim(), &mut meta.notices)?;
            let options = PartialMeanOptions { standardize: !args.raw_covariates, ..PartialMeanOptions::default() };
            let curve = PartialMeanCurve::new(data, &kernel, reward, space, options)?;
            meta.notices.extend(curve.notices().iter().cloned());
            write_table(&curve_rows(curve.nodes(), curve.values()), args.fit.out.as_deref(), format)?;
            meta.output(args.fit.out.as_deref());
            print_decision("prescriptive_nonparam", prescriptive_nonparam_decision(&curve, space)?)
        }
        "gps" => {
            let treatment: TreatmentFamily = parse_opt("treatment", args.treatment.as_deref(), "ols")?;
            let outcome: OutcomeFamily = parse_opt("outcome", args.outcome.as_deref(), "linear")?;
            let feature: GpsFeature = parse_opt("gps-feature", args.gps_feature.as_deref(), "quad")?;
            let tm = fit_treatment_model(data, treatment)?;
            let gps = impute_gps(&tm, data)?;
            let om = fit_outcome_model(data, &gps, outcome, feature)?;
            if !om.converged {
                meta.notices.push("outcome model did not converge".into());
            }
            let (nodes, values) = gps_curve(&tm, &om, data, &reward, space)?;
            write_table(&curve_rows(&nodes, &values), args.fit.out.as_deref(), format)?;
            meta.output(args.fit.out.as_deref());
            if let Some(path) = &args.model {
                let doc = ModelDocument::new(vec![treatment_document(&tm), om.to_fitted_model()]);
                std::fs::write(path, doc.to_json()?)?;
                meta.output(Some(path));
            }
            print_decision("prescriptive_gps", argmax_on_grid(&nodes, &values)?)
        }
        other => Err(usage(format!("unknown method `{other}` (expected nonparam or gps)"))),
    }
}

#[derive(Serialize)]
struct DrawRow {
    draw: usize,
    a: f64,
}

/// Decision a named strategy makes on `inputs`, with default settings.
fn strategy_candidate(name: &str, args: &TestArgs, inputs: &FitInputs, kernel: &KernelSpec) -> CliResult<f64> {
    let (data, reward, space) = (&inputs.data, inputs.reward, &inputs.space);
    let strategy: Strategy = parse_opt("candidate-from", Some(name), "")?;
    let z = match strategy {
        Strategy::PredictiveNonparam => {
            let bandwidth = parse_opt("predictive-bandwidth", args.predictive_bandwidth.as_deref(), "rate:2.5")?;
            let k1 = KernelSpec::new(kernel.family, 1, bandwidth)?;
            predictive_decision(&fit_predictive_nonparam(data, &k1, reward)?, space)?.z
        }
        Strategy::PredictiveParam => {
            predictive_decision(&fit_predictive_param(data, PredictiveFamily::OlsLinear, reward, false)?, space)?.z
        }
        Strategy::PrescriptiveNonparam => {
            PartialMeanCurve::new(data, kernel, reward, space, PartialMeanOptions::default())?.decision()?.z
        }
        Strategy::PrescriptiveGps => {
            let tm = fit_treatment_model(data, TreatmentFamily::GaussianIdentity)?;
            let gps = impute_gps(&tm, data)?;
            let om = fit_outcome_model(data, &gps, OutcomeFamily::Linear, GpsFeature::LogQ)?;
            let (nodes, values) = gps_curve(&tm, &om, data, &reward, space)?;
            argmax_on_grid(&nodes, &values)?.z
        }
        other => return Err(usage(format!("--candidate-from {other} is not a data-driven strategy"))),
    };
    Ok(z)
}

pub fn test(args: &TestArgs, meta: &mut Metadata) -> CliResult<()> {
    if args.candidate.is_some() == args.candidate_from.is_some() {
        return Err(usage("exactly one of --candidate <z> or --candidate-from <strategy> is required"));
    }
    let inputs = fit_inputs(&args.fit)?;
    let kernel = joint_kernel(&args.fit, inputs.data.covariate_dim(), &mut meta.notices)?;
    let z_hat = match (&args.candidate, &args.candidate_from) {
        (Some(z), _) => *z,
        (None, Some(name)) => strategy_candidate(name, args, &inputs, &kernel)?,
        (None, None) => unreachable!("checked above"),
    };
    let seed = args.seed.unwrap_or(0);
    let mut config = TestConfig::new(args.draws.unwrap_or(100), args.alpha.unwrap_or(0.05), kernel, inputs.space.clone(), seed)
        .map_err(|e| usage(e.to_string()))?;
    config.snap = args.snap;
    let result = optimality_test(&inputs.data, z_hat, &config, inputs.reward)?;
    if result.degenerate {
        meta.notices.push("bootstrap estimate of the limiting scale was degenerate".into());
    }
    write_json(&result, args.fit.out.as_deref())?;
    meta.output(args.fit.out.as_deref());
    if let Some(path) = &args.draws_out {
        let rows: Vec<DrawRow> = result.draws.iter().enumerate().map(|(draw, &a)| DrawRow { draw, a }).collect();
        write_table(&rows, Some(path), Format::Csv)?;
        meta.output(Some(path));
    }
    Ok(())
}

/// `name:lo:hi:step` → (name, values), endpoints included.
fn parse_sweep(spec: &str) -> CliResult<(String, Vec<f64>)> {
    let bad = || usage(format!("--sweep must be name:lo:hi:step, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (lo, hi, step) = (num(parts[1])?, num(parts[2])?, num(parts[3])?);
    if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((parts[0].trim().to_string(), (0..count).map(|i| lo + i as f64 * step).collect()))
}

#[derive(Serialize)]
struct VerifyRow {
    check: &'static str,
    parameter: f64,
    ratio: f64,
    bound: f64,
    slack: f64,
}

pub fn bounds(args: &BoundsArgs, format: Format, meta: &mut Metadata) -> CliResult<()> {
    if args.verify {
        let count = args.count.unwrap_or(1000);
        let seed = args.seed.unwrap_or(0);
        let gammas: Vec<f64> = (1..=16).map(|i| i as f64 / 100.0).collect();
        let reports: Vec<(&'static str, SweepReport)> = vec![
            ("tightness_bounded", bounds::tightness_sweep_thm2(&gammas, 1.0, 1.0, 0.0)?),
            ("validity_bounded", bounds::validity_sweep(count, seed, false)?),
            ("validity_monotone", bounds::validity_sweep(count, seed.wrapping_add(1), true)?),
            ("validity_jointly_normal", bounds::jointly_normal_sweep(101, 1.0, 1.0, 0.0)?),
        ];
        let mut rows = Vec::new();
        for (name, report) in &reports {
            eprintln!("{name}: {} checks, min slack {:e}", report.checks.len(), report.min_slack());
            rows.extend(report.checks.iter().map(|c| VerifyRow {
                check: name,
                parameter: c.parameter,
                ratio: c.ratio,
                bound: c.bound,
                slack: c.slack(),
            }));
        }
        write_table(&rows, args.out.as_deref(), format)?;
        meta.output(args.out.as_deref());
        let tight_gap = reports[0].1.checks.iter().map(|c| c.slack().abs()).fold(0.0, f64::max);
        let violations: usize = reports[1..].iter().map(|(_, r)| r.violations(1e-9)).sum();
        if violations > 0 || tight_gap > 1e-9 {
            return Err(CliError::Data(format!("{violations} bound violations, tightness gap {tight_gap:e}")));
        }
        return Ok(());
    }
    let theorem = Theorem::from_number(args.theorem.ok_or_else(|| usage("--theorem 2|3|4 or --verify is required"))?)
        .map_err(|e| usage(e.to_string()))?;
    let (name, values) = parse_sweep(args.sweep.as_deref().unwrap_or("gamma:0:0.2:0.005"))?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let b = theorem.bound(v).map_err(|e| usage(e.to_string()))?;
        rows.push((v, if args.clamp { bounds::clamp_bound(b) } else { b }));
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([name.as_str(), "bound"])?;
            for (v, b) in &rows {
                w.write_record([v.to_string(), b.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
            match &args.out {
                Some(p) => std::fs::write(p, bytes)?,
                None => std::io::Write::write_all(&mut std::io::stdout().lock(), &bytes)?,
            }
        }
        Format::Json => {
            let objs: Vec<serde_json::Value> = rows.iter().map(|(v, b)| serde_json::json!({ name.as_str(): v, "bound": b })).collect();
            write_json(&objs, args.out.as_deref())?;
        }
    }
    meta.output(args.out.as_deref());
    Ok(())
}

fn parse_list<T>(name: &str, raw: &str) -> CliResult<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.split(',').map(|s| parse_opt(name, Some(s.trim()), "")).collect()
}

pub fn replicate(args: &ReplicateArgs, format: Format, meta: &mut Metadata) -> CliResult<()> {
    let strategies: Vec<Strategy> = match &args.strategies {
        Some(s) => parse_list("strategies", s)?,
        None => Strategy::ALL.to_vec(),
    };
    let ns: Vec<usize> = parse_list("ns", args.ns.as_deref().ok_or_else(|| usage("--ns is required"))?)?;
    let reps = args.reps.ok_or_else(|| usage("--reps is required"))?;
    let mut config = ReplicationConfig { seed: args.seed.unwrap_or(0), ..ReplicationConfig::default() };
    if let Some(s) = &args.space {
        config.space = parse_opt("space", Some(s), "")?;
    }
    config.spec = Example3Spec::new(args.sigma.unwrap_or(config.spec.sigma), args.tau2.unwrap_or(config.spec.tau2))
        .map_err(|e| usage(e.to_string()))?;
    if args.test {
        config.test = Some(TestSettings { draws: args.draws.unwrap_or(50), alpha: args.alpha.unwrap_or(0.05) });
    }
    let report = replication_study(&strategies, &ns, reps, &config).map_err(|e| match e {
        obsopt::Error::InvalidInput(_) | obsopt::Error::OutOfRange { .. } => usage(e.to_string()),
        other => other.into(),
    })?;
    for run in report.runs.iter().filter(|r| r.error.is_some()) {
        meta.notices.push(format!("{} n={} rep={} failed: {}", run.strategy, run.n, run.rep, run.error.as_deref().unwrap_or("")));
    }
    write_table(&report.rows, args.out.as_deref(), format)?;
    meta.output(args.out.as_deref());
    if let Some(path) = &args.runs_out {
        write_table(&report.runs, Some(path), format)?;
        meta.output(Some(path));
    }
    Ok(())
}
