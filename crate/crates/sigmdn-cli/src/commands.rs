//! Command implementations. All file and stdout output is a pure function
//! of (config, inputs, seed); wall-clock timings go to stderr only.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sigmdn_core::dataset::{self, DatasetManifest};
use sigmdn_core::error::{Error, Result};
use sigmdn_core::eval::{evaluate_lv, evaluate_tv, median, EvalGrid, MaturityEval};
use sigmdn_core::mdn::{
    load_checkpoint, resume, save_checkpoint, train, MixtureParams, ModelArtifact, TrainOutcome,
};
use sigmdn_core::pricing::{
    discount_factor, mixture_european_price, OptionKind, OptionSpec, PriceMethod,
};
use sigmdn_core::{Regime, StreamKey};

use crate::config::RunConfig;
use crate::scenario::ScenarioFile;

/// SIGMDN_SEED wins over the flag, the flag over the config.
pub fn effective_seed(flag: Option<u64>, config_seed: u64) -> u64 {
    if let Ok(v) = std::env::var("SIGMDN_SEED") {
        if let Ok(s) = v.parse() {
            return s;
        }
    }
    flag.unwrap_or(config_seed)
}

pub fn gen_data(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let seed = effective_seed(seed, config.seed);
    let generation = config.generation();

    let start = Instant::now();
    let dataset = match config.regime {
        Regime::Tv => dataset::generate_tv(&generation, seed)?,
        Regime::Lv => dataset::generate_lv(&generation, seed)?,
    };
    dataset::write(&dataset, out)?;
    DatasetManifest::new(&generation, seed).save(&manifest_path(out))?;

    println!("records: {}", dataset.len());
    eprintln!(
        "generated {} records in {:.2} s -> {}",
        dataset.len(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn manifest_path(dataset_path: &Path) -> PathBuf {
    let mut name = dataset_path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub struct TrainArgs<'a> {
    pub config_path: &'a Path,
    pub data_path: &'a Path,
    pub out: &'a Path,
    pub history: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub resume_from: Option<&'a Path>,
}

pub fn train_command(args: TrainArgs) -> Result<()> {
    let config = RunConfig::load(args.config_path)?;
    let ds = dataset::read(args.data_path)?;
    if ds.header().regime != config.regime {
        return Err(Error::Config(format!(
            "config regime {:?} does not match dataset regime {:?}",
            config.regime,
            ds.header().regime
        )));
    }
    let data = ds.to_training_data()?;
    let mdn_config = config.mdn.to_mdn_config(ds.feature_dim(), config.regime);

    let start = Instant::now();
    let outcome: TrainOutcome = match args.resume_from {
        Some(ckpt_path) => {
            let checkpoint = load_checkpoint(ckpt_path)?;
            resume(&data, &config.train, checkpoint)?
        }
        None => train(&data, &mdn_config, &config.train)?,
    };
    eprintln!(
        "trained {} epochs in {:.2} s (best validation NLL {:.6})",
        outcome.history.len(),
        start.elapsed().as_secs_f64(),
        outcome.checkpoint.best_val
    );

    let artifact = ModelArtifact::new(
        ds.layout().as_ref().clone(),
        outcome.standardization.clone(),
        outcome.best_params.clone(),
    )?;
    artifact.save(args.out)?;

    let history_path = match args.history {
        Some(p) => p.to_path_buf(),
        None => {
            let mut name = args.out.as_os_str().to_owned();
            name.push(".history.csv");
            PathBuf::from(name)
        }
    };
    let mut csv = String::from("epoch,train_nll,val_nll,eta\n");
    for row in &outcome.history {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.train_nll, row.val_nll, row.eta
        ));
    }
    std::fs::write(&history_path, csv)?;

    if let Some(ckpt) = args.checkpoint {
        save_checkpoint(&outcome.checkpoint, ckpt)?;
    }
    println!("epochs: {}", outcome.history.len());
    Ok(())
}

/// Parses either `start:end:count` or a comma-separated list.
pub fn parse_strikes(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let start: f64 = parts[0].parse().map_err(|_| bad_strike(spec))?;
        let end: f64 = parts[1].parse().map_err(|_| bad_strike(spec))?;
        let count: usize = parts[2].parse().map_err(|_| bad_strike(spec))?;
        if count < 1 || end < start {
            return Err(bad_strike(spec));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        let step = (end - start) / (count - 1) as f64;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad_strike(spec)))
        .collect()
}

fn bad_strike(spec: &str) -> Error {
    Error::Config(format!(
        "bad strike grid {spec:?}; use start:end:count or a comma-separated list"
    ))
}

pub struct PriceArgs<'a> {
    pub model_path: &'a Path,
    pub scenario_path: &'a Path,
    pub strikes: &'a str,
    pub kind: OptionKind,
    pub out: Option<&'a Path>,
}

pub fn price_command(args: PriceArgs) -> Result<()> {
    let model = ModelArtifact::load(args.model_path)?;
    let scenario = ScenarioFile::load(args.scenario_path)?;
    let strikes = parse_strikes(args.strikes)?;
    for k in &strikes {
        if *k <= 0.0 {
            return Err(Error::Config(format!("strike {k} must be > 0")));
        }
    }

    let start = Instant::now();
    let features = featurize_for_model(&model, &scenario)?;
    let mix: MixtureParams = model.predict(&features)?;
    let discount = discount_factor(&scenario.rate, scenario.maturity)?;

    let mut table = String::from(
        "scenario_id,maturity,strike,kind,method,price,stderr,relative_error\n",
    );
    for strike in &strikes {
        let spec = OptionSpec::new(args.kind, *strike, scenario.maturity)?;
        let quote = mixture_european_price(&mix, &spec, discount)?;
        table.push_str(&format!(
            "{},{},{},{},{},{},,\n",
            scenario.id,
            scenario.maturity,
            strike,
            args.kind.label(),
            method_label(quote.method),
            quote.price
        ));
    }
    eprintln!(
        "priced {} strikes in {:.3} ms",
        strikes.len(),
        start.elapsed().as_secs_f64() * 1e3
    );

    match args.out {
        Some(path) => std::fs::write(path, table)?,
        None => {
            std::io::stdout().write_all(table.as_bytes())?;
        }
    }
    Ok(())
}

fn method_label(method: PriceMethod) -> &'static str {
    match method {
        PriceMethod::MixtureClosedForm => "mixture-closed-form",
        PriceMethod::MixtureQuadrature => "mixture-quadrature",
        PriceMethod::MonteCarlo => "monte-carlo",
    }
}

/// Builds the conditioning vector the model expects from a scenario file.
pub fn featurize_for_model(model: &ModelArtifact, scenario: &ScenarioFile) -> Result<Vec<f64>> {
    let layout = std::sync::Arc::new(model.layout.clone());
    let level = model.layout.level;
    match model.layout.regime {
        Regime::Tv => {
            let s = scenario.to_tv()?;
            Ok(sigmdn_core::features::assemble_tv(&s, level, &layout)?.values)
        }
        Regime::Lv => {
            let s = scenario.to_lv()?;
            Ok(sigmdn_core::features::assemble_lv(&s, level, &layout)?.values)
        }
    }
}

#[derive(serde::Serialize)]
struct EvalSummary {
    scenario_id: String,
    regime: Regime,
    mc_paths: usize,
    seed: u64,
    warnings: Vec<String>,
    maturities: Vec<MaturitySummary>,
    median_kl: f64,
    median_huberized_error: f64,
}

#[derive(serde::Serialize)]
struct MaturitySummary {
    maturity: f64,
    kl: f64,
    discount: f64,
    median_huberized_error: f64,
}

pub struct EvaluateArgs<'a> {
    pub model_path: &'a Path,
    pub scenario_path: &'a Path,
    pub mc_paths: usize,
    pub seed: u64,
    pub out_prefix: &'a str,
}

pub fn evaluate_command(args: EvaluateArgs) -> Result<()> {
    let model = ModelArtifact::load(args.model_path)?;
    let scenario = ScenarioFile::load(args.scenario_path)?;
    let grid = eval_grid_for(&scenario);
    let key = StreamKey::new(args.seed);

    let mut warnings = Vec::new();
    if args.mc_paths < 1000 {
        warnings.push(format!(
            "mc_paths = {} is below 1000; Monte Carlo references will be noisy",
            args.mc_paths
        ));
    }

    let evals: Vec<MaturityEval> = match model.layout.regime {
        Regime::Tv => evaluate_tv(
            &model,
            &scenario.to_tv()?,
            &scenario.weights,
            &grid,
            args.mc_paths,
            key,
        )?,
        Regime::Lv => evaluate_lv(&model, &scenario.to_lv()?, &grid, args.mc_paths, key)?,
    };

    let mut prices_csv = String::from(
        "scenario_id,maturity,strike,kind,method,price,stderr,relative_error\n",
    );
    let mut all_errors = Vec::new();
    for eval in &evals {
        for row in &eval.prices {
            prices_csv.push_str(&format!(
                "{},{},{},{},monte-carlo,{},{},\n",
                scenario.id, row.maturity, row.strike, row.kind.label(), row.mc_price, row.mc_stderr
            ));
            prices_csv.push_str(&format!(
                "{},{},{},{},mixture-closed-form,{},,{}\n",
                scenario.id,
                row.maturity,
                row.strike,
                row.kind.label(),
                row.mdn_price,
                row.huberized_error
            ));
            all_errors.push(row.huberized_error);
        }
    }

    let summary = EvalSummary {
        scenario_id: scenario.id.clone(),
        regime: model.layout.regime,
        mc_paths: args.mc_paths,
        seed: args.seed,
        warnings,
        maturities: evals
            .iter()
            .map(|e| MaturitySummary {
                maturity: e.maturity,
                kl: e.kl,
                discount: e.discount,
                median_huberized_error: median(
                    &e.prices.iter().map(|p| p.huberized_error).collect::<Vec<_>>(),
                ),
            })
            .collect(),
        median_kl: median(&evals.iter().map(|e| e.kl).collect::<Vec<_>>()),
        median_huberized_error: median(&all_errors),
    };

    let json_path = PathBuf::from(format!("{}.report.json", args.out_prefix));
    let csv_path = PathBuf::from(format!("{}.prices.csv", args.out_prefix));
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("report encode: {e}")))?;
    std::fs::write(&json_path, json)?;
    std::fs::write(&csv_path, prices_csv)?;
    println!(
        "median_kl: {}\nmedian_huberized_error: {}",
        summary.median_kl, summary.median_huberized_error
    );
    Ok(())
}

/// Default quarterly maturities, filtered to the scenario horizon, falling
/// back to the scenario's own maturity.
fn eval_grid_for(scenario: &ScenarioFile) -> EvalGrid {
    let mut grid = EvalGrid::default();
    grid.maturities.retain(|t| *t <= scenario.maturity + 1e-12);
    if grid.maturities.is_empty() {
        grid.maturities.push(scenario.maturity);
    }
    grid
}
