use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fusionlasso::calibrate::{aic_grid, anchor_prior, kfold_cv, waic, CalibrateOptions, GridSpec};
use fusionlasso::diagnostics::diagnose;
use fusionlasso::draws_io;
use fusionlasso::em::{fit_em, EmOptions, EmSolution, SigmaMode};
use fusionlasso::gibbs::{sample, LambdaPrior, PosteriorDraws, PriorSpec, SamplerSettings, SigmaPrior};
use fusionlasso::propriety::{check_posterior, prior_report};
use fusionlasso::simulate::{run_benchmark, BenchOptions, SimulationSpec};
use fusionlasso::structure::compile_constraints;
use fusionlasso::Family;
use serde::Serialize;
use serde_json::{json, Value};

use crate::problem::{self, block_labels, Problem, StructureSpec};
use crate::{
    CalibrateArgs, CheckArgs, Command, DiagnoseArgs, DrawFormat, FitArgs, LambdaArg, SampleArgs, SimulateArgs,
};

/// Run an already-resolved command, writing its files into `out`. Returns the
/// JSON printed on stdout.
pub fn execute(cmd: &Command, out: &Path) -> Result<Value> {
    match cmd {
        Command::CheckPropriety(a) => check_propriety(a, out),
        Command::FitEm(a) => fit(a, out),
        Command::Sample(a) => run_sample(a, out),
        Command::Calibrate(a) => calibrate(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Diagnose(a) => run_diagnose(a, out),
        Command::Replay(_) => unreachable!("replay is resolved before execution"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Value> {
    let v = serde_json::to_value(value)?;
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(v)
}

fn check_propriety(a: &CheckArgs, out: &Path) -> Result<Value> {
    let report = match (&a.data, &a.config) {
        (Some(data), Some(config)) => {
            let pr = problem::load(data, config, &a.structure, None)?;
            check_posterior(&pr.design.values, &pr.y, &pr.cset, pr.family)?
        }
        _ => {
            let StructureSpec::File(path) = &a.structure else {
                bail!("without --data the structure must be given as file:<path>");
            };
            prior_report(&compile_constraints(&StructureSpec::load_file(path)?)?)
        }
    };
    log::info!("{}", report.details);
    write_json(&out.join("propriety.json"), &report)
}

fn em_options(sigma: Option<f64>) -> Result<EmOptions> {
    let mut em = EmOptions::default();
    if let Some(s) = sigma {
        if !(s > 0.0 && s.is_finite()) {
            bail!("--sigma must be positive");
        }
        em.sigma = SigmaMode::Fixed(s);
    }
    Ok(em)
}

fn coefficients_csv(path: &Path, sol: &EmSolution, labels: &[String]) -> Result<()> {
    let labels = block_labels(labels, sol.family);
    let mut w = create(path)?;
    writeln!(w, "coefficient,estimate,group")?;
    for ((l, b), g) in labels.iter().zip(&sol.beta_hat).zip(&sol.groups) {
        writeln!(w, "\"{}\",{b},{g}", l.replace('"', "\"\""))?;
    }
    w.flush()?;
    Ok(())
}

fn fit(a: &FitArgs, out: &Path) -> Result<Value> {
    let pr = problem::load(&a.model.data, &a.model.config, &a.model.structure, a.model.adaptive)?;
    let em = em_options(a.sigma)?;
    match a.lambda {
        LambdaArg::Value(lambda) => {
            let sol = fit_em(&pr.design.values, &pr.y, &pr.cset, lambda, pr.family, &em)?;
            coefficients_csv(&out.join("coefficients.csv"), &sol, &pr.design.labels)?;
            write_json(&out.join("em.json"), &sol)
        }
        LambdaArg::Grid => {
            let opts = CalibrateOptions { grid: GridSpec::Auto(a.grid_points), em, warm_start: a.warm_start };
            let fit = aic_grid(&pr.design.values, &pr.y, &pr.cset, pr.family, &opts)?;
            log::info!("lambda* = {} (df {})", fit.calibration.lambda_star, fit.best.df);
            fit.calibration.grid_csv(create(&out.join("grid.csv"))?)?;
            coefficients_csv(&out.join("coefficients.csv"), &fit.best, &pr.design.labels)?;
            write_json(&out.join("em.json"), &fit.best)?;
            write_json(&out.join("calibration.json"), &fit.calibration)
        }
    }
}

fn anchored_lambda(pr: &Problem) -> Result<LambdaPrior> {
    let fit = aic_grid(&pr.design.values, &pr.y, &pr.cset, pr.family, &CalibrateOptions::default())?;
    let (shape, rate) = anchor_prior(fit.calibration.lambda_star)?;
    log::info!("anchored lambda2 prior at lambda* = {}", fit.calibration.lambda_star);
    Ok(LambdaPrior::Gamma { shape, rate })
}

fn write_draws(draws: &PosteriorDraws, format: DrawFormat, out: &Path) -> Result<String> {
    let name = match format {
        DrawFormat::Csv => "draws.csv",
        DrawFormat::Bin => "draws.bin",
    };
    let mut w = create(&out.join(name))?;
    match format {
        DrawFormat::Csv => draws_io::write_csv(draws, &mut w)?,
        DrawFormat::Bin => draws_io::write_binary(draws, &mut w)?,
    }
    w.flush()?;
    Ok(name.into())
}

fn run_sample(a: &SampleArgs, out: &Path) -> Result<Value> {
    let pr = problem::load(&a.model.data, &a.model.config, &a.model.structure, a.model.adaptive)?;
    let lambda = match (a.lambda, a.anchor) {
        (Some(lambda), _) => LambdaPrior::Fixed { lambda },
        (None, true) => anchored_lambda(&pr)?,
        (None, false) => LambdaPrior::Gamma { shape: a.lambda_prior.shape, rate: a.lambda_prior.rate },
    };
    let sigma = match a.sigma2 {
        Some(sigma2) => SigmaPrior::Fixed { sigma2 },
        None => SigmaPrior::InverseGamma { shape: a.sigma_prior.shape, rate: a.sigma_prior.rate },
    };
    let prior = PriorSpec { lambda, sigma, lambda2_shape: a.lambda2_shape.into() };
    let settings = SamplerSettings {
        chains: a.sampler.chains,
        iters: a.sampler.iters,
        burnin: a.sampler.burnin,
        thin: a.sampler.thin,
        seed: a.seed.expect("seed checked before execution"),
        force: a.force,
    };
    let draws = sample(&pr.design.values, &pr.y, &pr.design.labels, &pr.cset, pr.family, &prior, &settings)?;
    if draws.unverified {
        log::warn!("posterior propriety not established; draws are marked unverified");
    }
    let file = write_draws(&draws, a.format, out)?;
    let summary = json!({
        "family": draws.family,
        "prior": prior,
        "settings": settings,
        "draws_file": file,
        "n_draws": draws.n_draws(),
        "unverified": draws.unverified,
        "labels": draws.labels,
        "posterior_mean": draws.posterior_mean(),
    });
    write_json(&out.join("sample.json"), &summary)
}

fn calibrate(a: &CalibrateArgs, out: &Path) -> Result<Value> {
    let pr = problem::load(&a.model.data, &a.model.config, &a.model.structure, a.model.adaptive)?;
    let seed = a.seed.expect("seed checked before execution");
    let (x, y) = (&pr.design.values, &pr.y);
    let opts = CalibrateOptions { grid: GridSpec::Auto(a.grid), warm_start: a.warm_start, ..Default::default() };
    let fit = aic_grid(x, y, &pr.cset, pr.family, &opts)?;
    let mut cal = fit.calibration;
    log::info!("lambda* = {} (df {})", cal.lambda_star, fit.best.df);
    let mut cv = None;
    if a.folds > 0 {
        let r = kfold_cv(x, y, &pr.cset, pr.family, a.folds, seed, &opts)?;
        cal.cv_rmse = Some(r.rmse);
        cv = Some(r);
    }
    if a.waic {
        let (shape, rate) = cal.anchored_prior;
        let prior = PriorSpec { lambda: LambdaPrior::Gamma { shape, rate }, ..PriorSpec::default() };
        let settings = SamplerSettings {
            chains: a.waic_chains,
            iters: a.waic_iters,
            burnin: a.waic_iters / 2,
            thin: 1,
            seed,
            force: false,
        };
        let draws = sample(x, y, &pr.design.labels, &pr.cset, pr.family, &prior, &settings)?;
        cal.waic = Some(waic(&draws, x, y)?);
    }
    cal.grid_csv(create(&out.join("grid.csv"))?)?;
    if let Some(cv) = &cv {
        write_json(&out.join("cv.json"), cv)?;
    }
    write_json(&out.join("em.json"), &fit.best)?;
    write_json(&out.join("calibration.json"), &cal)
}

fn simulate(a: &SimulateArgs, out: &Path) -> Result<Value> {
    let spec = SimulationSpec {
        g: a.g,
        r: a.r,
        s: a.s,
        family: a.family,
        seed: a.seed.expect("seed checked before execution"),
        replicates: a.reps,
    };
    if a.methods.is_empty() {
        bail!("--methods must name at least one method");
    }
    let opts = BenchOptions { methods: a.methods.clone(), ..BenchOptions::default() };
    let res = run_benchmark(&spec, &opts)?;
    for s in &res.summaries {
        log::info!("{}: mean RMSE {:.4} (se {:.4}, {} failed)", s.method, s.mean_rmse, s.se, s.failed);
    }
    write_json(&out.join("result.json"), &res)?;
    let mut w = create(&out.join("replicates.csv"))?;
    res.replicate_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("effects.csv"))?;
    res.effects_csv(&mut w)?;
    w.flush()?;
    Ok(json!({ "spec": res.spec, "summaries": res.summaries }))
}

/// `linear`, `logistic` or `multinomial:<C>`.
fn parse_family(s: &str) -> Result<Family> {
    match s.split_once(':') {
        None if s == "linear" => Ok(Family::Linear),
        None if s == "logistic" => Ok(Family::Logistic),
        Some(("multinomial", c)) => Ok(Family::Multinomial { categories: c.parse().context("category count")? }),
        _ => bail!("unknown family `{s}`; expected linear, logistic or multinomial:<C>"),
    }
}

fn run_diagnose(a: &DiagnoseArgs, out: &Path) -> Result<Value> {
    let bytes = std::fs::read(&a.draws).with_context(|| format!("reading {}", a.draws.display()))?;
    let draws = match draws_io::read_binary(bytes.as_slice()) {
        Ok(d) => d,
        Err(bin_err) => {
            let Some(f) = &a.family else {
                bail!("{} is not a binary draws file ({bin_err}); pass --family to read it as CSV", a.draws.display());
            };
            draws_io::read_csv(bytes.as_slice(), parse_family(f)?)?
        }
    };
    if draws.unverified {
        log::warn!("draws are marked unverified");
    }
    let report = diagnose(&draws, !a.no_split)?;
    let flagged = report.flagged().count();
    log::info!("{flagged} of {} parameters flagged", report.parameters.len());
    report.to_csv(create(&out.join("flagged.csv"))?)?;
    write_json(&out.join("diagnostics.json"), &report)
}
