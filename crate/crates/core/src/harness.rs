//! Configuration, file-based pipelines and result reporting.
//!
//! Every command reads a flat `key = value` configuration and communicates
//! with the others only through files in the output directory:
//!
//! | command | reads | writes |
//! |---|---|---|
//! | gen | config | `template.dem`, `planted.dem`, `{train,validation,test}.shots` |
//! | fit | train shots | `fitted.params`, `fit_report.csv` |
//! | train | train shots, seed | `trained.params`, `history.csv`, `manifest.txt`, `train_report.csv` |
//! | eval | test shots, parameter files | `eval.csv`, `eval_sensors.csv`, `eval_hist.csv` |
//! | sweep-cycles | parameter file | `sweep.csv`, `sweep_fit.csv` |
//! | check-coverage | config | `coverage.txt` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::codegen::{
    build_sensors, build_sensors_even, check_coverage, planted_dem, repetition_dem, uninformative_prior, PlantedSpec,
    RepCode, RepCodeSpec, SensorSuite,
};
use crate::decode::{fit_ler_exponential, Decoder, ExponentialFit, LerEstimate, LerPoint};
use crate::fitprior::{fit_agents, FallbackReason, PairwiseFit};
use crate::model::{build_parametrization, fmt_f64, instantiate, ClassKey, Dem, P_MAX};
use crate::rlopt::{
    history_csv, read_params, train, write_params, EpochRecord, Hyperparams, QuadraticEnv, RewardEnv, SensorEnv,
    TrainConfig, TrainOutcome,
};
use crate::sampler::{read_shots_packed, read_shots_text, sample_code, subsample_sensor_shots, write_shots_packed, write_shots_text, ShotSet};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotFormat {
    Text,
    Packed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedMethod {
    Uninformative,
    Correlation,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Sensors,
    /// Analytic quadratic rewards, for smoke runs.
    Toy,
}

/// Full run configuration. Every random stream has an explicit seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub r: usize,
    pub d_s: usize,
    pub stride: usize,
    /// Evenly spread windows when nonzero, otherwise windows at `stride`.
    pub sensor_count: usize,
    /// Decades added to the structural prior to form the planted base.
    pub planted_offset: f64,
    pub spread: f64,
    pub n_outliers: usize,
    pub outlier_factor: f64,
    pub planted_seed: u64,
    pub n_shots: usize,
    pub train_val_fraction: f64,
    /// Share of the train+validation block held out for validation.
    pub validation_fraction: f64,
    pub sample_seed: u64,
    pub shot_format: ShotFormat,
    pub hp: Hyperparams,
    pub train_seed: u64,
    pub seed_method: SeedMethod,
    pub mode: TrainMode,
    pub toy_params: usize,
    pub toy_agents: usize,
    pub toy_seed: u64,
    pub sweep_rounds: Vec<usize>,
    pub sweep_shots: usize,
    pub sweep_fit_shots: usize,
    pub sweep_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 11,
            r: 11,
            d_s: 5,
            stride: 2,
            sensor_count: 5,
            planted_offset: 1.0,
            spread: 0.3,
            n_outliers: 5,
            outlier_factor: 10.0,
            planted_seed: 1,
            n_shots: 200_000,
            train_val_fraction: 0.25,
            validation_fraction: 0.2,
            sample_seed: 2,
            shot_format: ShotFormat::Packed,
            hp: Hyperparams::repetition(),
            train_seed: 3,
            seed_method: SeedMethod::Correlation,
            mode: TrainMode::Sensors,
            toy_params: 6,
            toy_agents: 3,
            toy_seed: 4,
            sweep_rounds: vec![9, 13, 17],
            sweep_shots: 100_000,
            sweep_fit_shots: 50_000,
            sweep_seed: 5,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. A `preset` key is
    /// applied before all others regardless of its position.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut seen = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if seen.insert(k.clone(), ln + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", ln + 1)));
            }
            pairs.push((k, v));
        }
        let mut cfg = RunConfig::default();
        if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "preset") {
            cfg.set("preset", v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file and checks that referenced files exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        if let SeedMethod::File(p) = &cfg.seed_method {
            if !p.exists() {
                return Err(Error::Config(format!("seed file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "preset" => {
                self.hp = match v {
                    "repetition" => Hyperparams::repetition(),
                    "surface" => Hyperparams::surface(),
                    _ => return Err(Error::Config(format!("unknown preset {v:?}"))),
                }
            }
            "d" => self.d = parse_value(key, v)?,
            "r" => self.r = parse_value(key, v)?,
            "d_s" => self.d_s = parse_value(key, v)?,
            "stride" => self.stride = parse_value(key, v)?,
            "sensor_count" => self.sensor_count = parse_value(key, v)?,
            "planted_offset" => self.planted_offset = parse_value(key, v)?,
            "spread" => self.spread = parse_value(key, v)?,
            "n_outliers" => self.n_outliers = parse_value(key, v)?,
            "outlier_factor" => self.outlier_factor = parse_value(key, v)?,
            "planted_seed" => self.planted_seed = parse_value(key, v)?,
            "n_shots" => self.n_shots = parse_value(key, v)?,
            "train_val_fraction" => self.train_val_fraction = parse_value(key, v)?,
            "validation_fraction" => self.validation_fraction = parse_value(key, v)?,
            "sample_seed" => self.sample_seed = parse_value(key, v)?,
            "shot_format" => {
                self.shot_format = match v {
                    "text" => ShotFormat::Text,
                    "packed" => ShotFormat::Packed,
                    _ => return Err(Error::Config(format!("unknown shot format {v:?}"))),
                }
            }
            "batch_size" => self.hp.batch_size = parse_value(key, v)?,
            "epochs" => self.hp.epochs = parse_value(key, v)?,
            "steps_per_epoch" => self.hp.steps_per_epoch = parse_value(key, v)?,
            "learning_rate" => self.hp.learning_rate = parse_value(key, v)?,
            "grad_clip" => self.hp.grad_clip = parse_value(key, v)?,
            "ir_clip" => self.hp.ir_clip = if v == "none" { None } else { Some(parse_value(key, v)?) },
            "value_coeff" => self.hp.value_coeff = parse_value(key, v)?,
            "entropy_coeff" => self.hp.entropy_coeff = parse_value(key, v)?,
            "init_sigma" => self.hp.init_sigma = parse_value(key, v)?,
            "shots_per_epoch" => self.hp.shots_per_epoch = parse_value(key, v)?,
            "train_seed" => self.train_seed = parse_value(key, v)?,
            "seed_method" => {
                self.seed_method = match v {
                    "uninformative" => SeedMethod::Uninformative,
                    "correlation" => SeedMethod::Correlation,
                    _ => match v.strip_prefix("file:") {
                        Some(p) if !p.is_empty() => SeedMethod::File(PathBuf::from(p)),
                        _ => return Err(Error::Config(format!("unknown seed method {v:?}"))),
                    },
                }
            }
            "mode" => {
                self.mode = match v {
                    "sensors" => TrainMode::Sensors,
                    "toy" => TrainMode::Toy,
                    _ => return Err(Error::Config(format!("unknown mode {v:?}"))),
                }
            }
            "toy_params" => self.toy_params = parse_value(key, v)?,
            "toy_agents" => self.toy_agents = parse_value(key, v)?,
            "toy_seed" => self.toy_seed = parse_value(key, v)?,
            "sweep_rounds" => {
                self.sweep_rounds = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "sweep_shots" => self.sweep_shots = parse_value(key, v)?,
            "sweep_fit_shots" => self.sweep_fit_shots = parse_value(key, v)?,
            "sweep_seed" => self.sweep_seed = parse_value(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        RepCodeSpec::new(self.d, self.r).map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.train_val_fraction) || !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("split fractions must lie in [0, 1]".into()));
        }
        if self.n_shots == 0 {
            return Err(Error::Config("n_shots must be positive".into()));
        }
        if self.mode == TrainMode::Toy && (self.toy_params == 0 || self.toy_agents == 0) {
            return Err(Error::Config("toy mode needs at least one parameter and one agent".into()));
        }
        self.hp.validate()
    }

    /// `(train, validation, test)` shot counts.
    pub fn split(&self) -> (usize, usize, usize) {
        let tv = (self.n_shots as f64 * self.train_val_fraction).round() as usize;
        let val = (tv as f64 * self.validation_fraction).round() as usize;
        (tv - val, val, self.n_shots - tv)
    }

    /// Canonical echo with every key in fixed order.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let seed = match &self.seed_method {
            SeedMethod::Uninformative => "uninformative".to_string(),
            SeedMethod::Correlation => "correlation".to_string(),
            SeedMethod::File(p) => format!("file:{}", p.display()),
        };
        let rounds: Vec<String> = self.sweep_rounds.iter().map(|r| r.to_string()).collect();
        let entries: Vec<(&str, String)> = vec![
            ("d", self.d.to_string()),
            ("r", self.r.to_string()),
            ("d_s", self.d_s.to_string()),
            ("stride", self.stride.to_string()),
            ("sensor_count", self.sensor_count.to_string()),
            ("planted_offset", fmt_f64(self.planted_offset)),
            ("spread", fmt_f64(self.spread)),
            ("n_outliers", self.n_outliers.to_string()),
            ("outlier_factor", fmt_f64(self.outlier_factor)),
            ("planted_seed", self.planted_seed.to_string()),
            ("n_shots", self.n_shots.to_string()),
            ("train_val_fraction", fmt_f64(self.train_val_fraction)),
            ("validation_fraction", fmt_f64(self.validation_fraction)),
            ("sample_seed", self.sample_seed.to_string()),
            ("shot_format", if self.shot_format == ShotFormat::Text { "text" } else { "packed" }.to_string()),
            ("batch_size", hp.batch_size.to_string()),
            ("epochs", hp.epochs.to_string()),
            ("steps_per_epoch", hp.steps_per_epoch.to_string()),
            ("learning_rate", fmt_f64(hp.learning_rate)),
            ("grad_clip", fmt_f64(hp.grad_clip)),
            ("ir_clip", hp.ir_clip.map_or("none".to_string(), fmt_f64)),
            ("value_coeff", fmt_f64(hp.value_coeff)),
            ("entropy_coeff", fmt_f64(hp.entropy_coeff)),
            ("init_sigma", fmt_f64(hp.init_sigma)),
            ("shots_per_epoch", hp.shots_per_epoch.to_string()),
            ("train_seed", self.train_seed.to_string()),
            ("seed_method", seed),
            ("mode", if self.mode == TrainMode::Toy { "toy" } else { "sensors" }.to_string()),
            ("toy_params", self.toy_params.to_string()),
            ("toy_agents", self.toy_agents.to_string()),
            ("toy_seed", self.toy_seed.to_string()),
            ("sweep_rounds", rounds.join(",")),
            ("sweep_shots", self.sweep_shots.to_string()),
            ("sweep_fit_shots", self.sweep_fit_shots.to_string()),
            ("sweep_seed", self.sweep_seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        let mut out = format!("# priorcal {VERSION}\n");
        for (k, v) in entries {
            writeln!(out, "{k} = {v}").expect("writing to a string");
        }
        out
    }

    /// Replaces every seed with a stream derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        let derive = |stream: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream);
        self.planted_seed = derive(1);
        self.sample_seed = derive(2);
        self.train_seed = derive(3);
        self.toy_seed = derive(4);
        self.sweep_seed = derive(5);
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn shots_path(&self, split: &str) -> PathBuf {
        self.path(&format!("{split}.shots"))
    }
}

/// Template chain, sensor suite and planted device of a configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub template: RepCode,
    pub suite: SensorSuite,
    pub device: RepCode,
}

fn sensor_suite(cfg: &RunConfig, target: &RepCode) -> Result<SensorSuite> {
    if cfg.sensor_count > 0 {
        build_sensors_even(target, cfg.d_s, cfg.sensor_count)
    } else {
        build_sensors(target, cfg.d_s, cfg.stride)
    }
}

/// Planted device of a chain of duration `r`, with the configured noise.
pub fn planted_device(cfg: &RunConfig, r: usize) -> Result<RepCode> {
    let spec = RepCodeSpec::new(cfg.d, r)?;
    let template = repetition_dem(spec)?;
    let param = build_parametrization(&[&template.dem])?;
    let base: Vec<f64> = uninformative_prior(&param, &[&template])?.iter().map(|t| t + cfg.planted_offset).collect();
    planted_dem(
        spec,
        &base,
        PlantedSpec {
            spread_sigma: cfg.spread,
            n_outliers: cfg.n_outliers,
            outlier_factor: cfg.outlier_factor,
            seed: cfg.planted_seed,
        },
    )
}

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let template = repetition_dem(RepCodeSpec::new(cfg.d, cfg.r)?)?;
    let suite = sensor_suite(cfg, &template)?;
    let device = planted_device(cfg, cfg.r)?;
    Ok(Problem { template, suite, device })
}

pub fn write_shots(path: &Path, shots: &ShotSet, format: ShotFormat) -> Result<()> {
    let w = BufWriter::new(fs::File::create(path)?);
    match format {
        ShotFormat::Text => write_shots_text(shots, w),
        ShotFormat::Packed => write_shots_packed(shots, w),
    }
}

pub fn read_shots(path: &Path, format: ShotFormat) -> Result<ShotSet> {
    let r = BufReader::new(fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?);
    match format {
        ShotFormat::Text => read_shots_text(r),
        ShotFormat::Packed => read_shots_packed(r),
    }
}

fn read_dem(path: &Path) -> Result<Dem> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Dem::parse(&text)
}

/// Lowercase hex SHA-256 of a file.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Writes the template and planted models and the three shot splits.
pub fn cmd_gen(cfg: &RunConfig) -> Result<GenOutput> {
    let problem = build_problem(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.path("template.dem"), problem.template.dem.to_text())?;
    fs::write(cfg.path("planted.dem"), problem.device.dem.to_text())?;
    fs::write(cfg.path("config.echo"), cfg.to_text())?;
    let (n_train, n_val, n_test) = cfg.split();
    let all = sample_code(&problem.device, cfg.n_shots, cfg.sample_seed)?;
    write_shots(&cfg.shots_path("train"), &all.slice(0..n_train)?, cfg.shot_format)?;
    write_shots(&cfg.shots_path("validation"), &all.slice(n_train..n_train + n_val)?, cfg.shot_format)?;
    write_shots(&cfg.shots_path("test"), &all.slice(n_train + n_val..cfg.n_shots)?, cfg.shot_format)?;
    Ok(GenOutput { train: n_train, validation: n_val, test: n_test })
}

fn load_train_shots(cfg: &RunConfig, problem: &Problem) -> Result<ShotSet> {
    let shots = read_shots(&cfg.shots_path("train"), cfg.shot_format)?;
    if shots.n_shots() == 0 {
        return Err(Error::Data("training shot file is empty".into()));
    }
    if shots.num_detectors() != problem.template.dem.num_detectors() {
        return Err(Error::Data("training shots do not match the configured chain".into()));
    }
    Ok(shots)
}

/// Correlation fit of the suite's classes from target-chain shots.
pub fn fit_suite(suite: &SensorSuite, shots: &ShotSet) -> Result<(Vec<f64>, Vec<PairwiseFit>)> {
    let default = suite.uninformative_prior()?;
    let sensor_shots: Vec<ShotSet> =
        suite.sensors.iter().map(|s| subsample_sensor_shots(shots, s)).collect::<Result<_>>()?;
    let agents: Vec<(&Dem, &ShotSet)> = suite.sensors.iter().map(|s| &s.dem).zip(&sensor_shots).collect();
    fit_agents(&suite.parametrization, &agents, &default)
}

fn fallback_counts(fit: &PairwiseFit) -> [usize; 4] {
    let mut c = [0; 4];
    for (_, reason) in &fit.fallbacks {
        c[match reason {
            FallbackReason::Denominator => 0,
            FallbackReason::NonPositive => 1,
            FallbackReason::Undefined => 2,
            FallbackReason::BelowFloor => 3,
        }] += 1;
    }
    c
}

/// Method (ii): fits the parameter vector from the training shots.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<f64>> {
    let problem = build_problem(cfg)?;
    let shots = load_train_shots(cfg, &problem)?;
    let (theta, fits) = fit_suite(&problem.suite, &shots)?;
    fs::write(cfg.path("fitted.params"), write_params(&problem.suite.parametrization, &theta)?)?;
    let mut report = String::from("agent,window_start,edges,denominator,non_positive,undefined,below_floor\n");
    for (a, (fit, w)) in fits.iter().zip(&problem.suite.windows).enumerate() {
        let c = fallback_counts(fit);
        writeln!(report, "{a},{},{},{},{},{},{}", w.start, fit.probabilities.len(), c[0], c[1], c[2], c[3])
            .expect("writing to a string");
    }
    fs::write(cfg.path("fit_report.csv"), report)?;
    Ok(theta)
}

fn toy_env(cfg: &RunConfig) -> Result<(QuadraticEnv, Vec<f64>)> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Uniform};
    let p = cfg.toy_params;
    let a = cfg.toy_agents;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.toy_seed);
    let u = Uniform::new(-0.5, 0.5).map_err(|e| Error::Config(e.to_string()))?;
    let optimum: Vec<f64> = (0..p).map(|_| -3.0 + u.sample(&mut rng)).collect();
    // agent k owns residues k and k+1 modulo the agent count
    let sparsity = (0..a).map(|k| (0..p).map(|j| j % a == k || j % a == (k + 1) % a).collect()).collect();
    Ok((QuadraticEnv::new(optimum, sparsity)?, vec![-3.0; p]))
}

fn seed_theta(cfg: &RunConfig, problem: &Problem, shots: &ShotSet) -> Result<Vec<f64>> {
    match &cfg.seed_method {
        SeedMethod::Uninformative => problem.suite.uninformative_prior(),
        SeedMethod::Correlation => Ok(fit_suite(&problem.suite, shots)?.0),
        SeedMethod::File(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            read_params(&text, &problem.suite.parametrization)
        }
    }
}

/// Trains from the configured seed and writes parameters and history.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    fs::create_dir_all(&cfg.out_dir)?;
    let tc = TrainConfig { hp: cfg.hp.clone(), seed: cfg.train_seed, reference: None };
    if cfg.mode == TrainMode::Toy {
        let (mut env, seed) = toy_env(cfg)?;
        let reference = Some(env.optimum.clone());
        let out = train(&mut env, &seed, &TrainConfig { reference, ..tc })?;
        let mut text = String::new();
        for (j, v) in out.policy.mu.iter().enumerate() {
            writeln!(text, "toy {j} {}", fmt_f64(*v)).expect("writing to a string");
        }
        fs::write(cfg.path("trained.params"), text)?;
        fs::write(cfg.path("history.csv"), history_csv(&out.history))?;
        return Ok(out);
    }
    let problem = build_problem(cfg)?;
    let train_path = cfg.shots_path("train");
    let shots = load_train_shots(cfg, &problem)?;
    let seed = seed_theta(cfg, &problem, &shots)?;
    let mut env = SensorEnv::new(&problem.suite, &shots, cfg.hp.shots_per_epoch, cfg.train_seed)?;
    let out = train(&mut env, &seed, &tc)?;
    let param = &problem.suite.parametrization;
    fs::write(cfg.path("trained.params"), write_params(param, &out.policy.mu)?)?;
    fs::write(cfg.path("history.csv"), history_csv(&out.history))?;
    fs::write(cfg.path("manifest.txt"), format!("sha256 {} train.shots\n", file_sha256(&train_path)?))?;

    let mut report = String::from("quantity,value\n");
    writeln!(report, "num_params,{}", param.num_params()).expect("writing to a string");
    writeln!(report, "num_agents,{}", param.num_agents()).expect("writing to a string");
    writeln!(report, "mean_parameter_degree,{}", fmt_f64(param.mean_parameter_degree())).expect("writing to a string");
    let val_path = cfg.shots_path("validation");
    if val_path.exists() {
        let val = read_shots(&val_path, cfg.shot_format)?;
        if val.n_shots() >= cfg.hp.batch_size {
            let venv = SensorEnv::new(&problem.suite, &val, val.n_shots(), cfg.train_seed)?;
            let mean = |theta: &[f64]| -> Result<f64> {
                let r: Vec<f64> =
                    (0..venv.num_agents()).map(|a| venv.pool_reward(theta, a)).collect::<Result<_>>()?;
                Ok(r.iter().sum::<f64>() / r.len() as f64)
            };
            writeln!(report, "validation_reward_seed,{}", fmt_f64(mean(&seed)?)).expect("writing to a string");
            writeln!(report, "validation_reward_trained,{}", fmt_f64(mean(&out.policy.mu)?)).expect("writing to a string");
        }
    }
    fs::write(cfg.path("train_report.csv"), report)?;
    Ok(out)
}

/// One prior evaluated on the held-out shots.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub label: String,
    pub estimate: LerEstimate,
    /// Per-shot failure flags, for paired comparisons.
    pub failures: Vec<bool>,
    pub sensors: Vec<LerEstimate>,
    /// Fraction of shots whose prediction differs from the first prior's.
    pub flip_rate: f64,
    /// `(factor, fraction of shots whose prediction changes)` when every
    /// probability of the target model is multiplied by `factor`.
    pub scaling_flips: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn predictions(decoder: &Decoder, shots: &ShotSet) -> Result<Vec<u64>> {
    (0..shots.n_shots())
        .into_par_iter()
        .map(|i| Ok(decoder.decode_fired(&shots.detectors.row_ones(i))?.observables))
        .collect()
}

fn refuse_training_data(cfg: &RunConfig, test_path: &Path) -> Result<()> {
    let manifest = cfg.path("manifest.txt");
    if !manifest.exists() {
        return Ok(());
    }
    let hash = file_sha256(test_path)?;
    let text = fs::read_to_string(&manifest)?;
    if text.lines().any(|l| l.split_whitespace().nth(1) == Some(hash.as_str())) {
        return Err(Error::Data(format!("{} was used for training", test_path.display())));
    }
    Ok(())
}

/// Global probability scalings probed for decision changes.
const SCALING_FACTORS: [f64; 2] = [0.5, 2.0];

fn eval_priors(
    suite: &SensorSuite,
    template: &RepCode,
    shots: &ShotSet,
    priors: &[(String, Dem, Vec<Dem>)],
) -> Result<EvalReport> {
    let sensor_shots: Vec<ShotSet> =
        suite.sensors.iter().map(|s| subsample_sensor_shots(shots, s)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut reference: Option<Vec<u64>> = None;
    for (label, dem, sensor_dems) in priors {
        if dem.num_detectors() != template.dem.num_detectors() {
            return Err(Error::Model(format!("prior {label} does not match the chain")));
        }
        let pred = predictions(&Decoder::new(dem)?, shots)?;
        let failures: Vec<bool> = pred.iter().enumerate().map(|(i, &p)| p != shots.observable_mask(i)).collect();
        let estimate = LerEstimate::new(failures.iter().filter(|&&f| f).count(), shots.n_shots())?;
        let flip_rate = match &reference {
            Some(r) => r.iter().zip(&pred).filter(|(a, b)| a != b).count() as f64 / shots.n_shots() as f64,
            None => 0.0,
        };
        let mut scaling_flips = Vec::new();
        for factor in SCALING_FACTORS {
            let probs: Vec<f64> = dem.hyperedges().iter().map(|e| (e.probability * factor).min(P_MAX)).collect();
            let scaled = predictions(&Decoder::new(&dem.with_probabilities(&probs)?)?, shots)?;
            let changed = scaled.iter().zip(&pred).filter(|(a, b)| a != b).count();
            scaling_flips.push((factor, changed as f64 / shots.n_shots() as f64));
        }
        reference.get_or_insert(pred);
        let sensors = sensor_dems
            .iter()
            .zip(&sensor_shots)
            .map(|(d, s)| Ok(crate::decode::decode_shots(&Decoder::new(d)?, s)?.estimate))
            .collect::<Result<_>>()?;
        rows.push(EvalRow { label: label.clone(), estimate, failures, sensors, flip_rate, scaling_flips });
    }
    Ok(EvalReport { rows })
}

/// Target and sensor models for a parameter vector of `suite`.
pub fn prior_models(suite: &SensorSuite, template: &RepCode, theta: &[f64]) -> Result<(Dem, Vec<Dem>)> {
    let param = &suite.parametrization;
    let missing = check_coverage(param, &template.dem)?;
    if !missing.is_empty() {
        return Err(Error::Model(format!("{} target classes are not covered by the sensors", missing.len())));
    }
    let target = instantiate(&template.dem, &param.bind(&template.dem)?, theta)?;
    let sensors =
        suite.sensors.iter().enumerate().map(|(a, s)| instantiate(&s.dem, param.binding(a), theta)).collect::<Result<_>>()?;
    Ok((target, sensors))
}

/// Compares the uninformative prior, each parameter file and the planted
/// model (when `planted.dem` exists) on identical held-out shots.
pub fn cmd_eval(cfg: &RunConfig, params: &[PathBuf]) -> Result<EvalReport> {
    let problem = build_problem(cfg)?;
    let test_path = cfg.shots_path("test");
    refuse_training_data(cfg, &test_path)?;
    let shots = read_shots(&test_path, cfg.shot_format)?;
    if shots.n_shots() == 0 {
        return Err(Error::Data("test shot file is empty".into()));
    }
    if shots.num_detectors() != problem.template.dem.num_detectors() {
        return Err(Error::Data("test shots do not match the configured chain".into()));
    }
    let suite = &problem.suite;
    let param = &suite.parametrization;
    let mut priors = Vec::new();
    let (t, s) = prior_models(suite, &problem.template, &suite.uninformative_prior()?)?;
    priors.push(("uninformative".to_string(), t, s));
    for p in params {
        let text = fs::read_to_string(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
        let theta = read_params(&text, param)?;
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
        let (t, s) = prior_models(suite, &problem.template, &theta)?;
        priors.push((label, t, s));
    }
    let planted_path = cfg.path("planted.dem");
    if planted_path.exists() {
        let dem = read_dem(&planted_path)?;
        let device = problem.template.with_dem(dem.clone())?;
        let sensors = problem.suite.with_target(&device)?.sensors.into_iter().map(|s| s.dem).collect();
        priors.push(("planted".to_string(), dem, sensors));
    }
    let report = eval_priors(suite, &problem.template, &shots, &priors)?;
    write_eval(cfg, suite, &report)?;
    Ok(report)
}

fn write_eval(cfg: &RunConfig, suite: &SensorSuite, report: &EvalReport) -> Result<()> {
    let base = report.rows[0].estimate.ler;
    let mut main = String::from("prior,failures,shots,ler,ci_low,ci_high,improvement_pct,flip_rate\n");
    let mut per_sensor = String::from("prior,sensor,window_start,failures,shots,ler,reward\n");
    let mut hist = String::from("prior,rank,ler,cumulative_fraction\n");
    let mut scaling = String::from("prior,factor,flip_rate\n");
    for row in &report.rows {
        for (f, r) in &row.scaling_flips {
            writeln!(scaling, "{},{},{}", row.label, fmt_f64(*f), fmt_f64(*r)).expect("writing to a string");
        }
        let e = &row.estimate;
        writeln!(
            main,
            "{},{},{},{},{},{},{},{}",
            row.label,
            e.failures,
            e.shots,
            fmt_f64(e.ler),
            fmt_f64(e.ci_low),
            fmt_f64(e.ci_high),
            fmt_f64(100.0 * (base - e.ler) / base),
            fmt_f64(row.flip_rate)
        )
        .expect("writing to a string");
        for (a, (s, w)) in row.sensors.iter().zip(&suite.windows).enumerate() {
            writeln!(
                per_sensor,
                "{},{a},{},{},{},{},{}",
                row.label,
                w.start,
                s.failures,
                s.shots,
                fmt_f64(s.ler),
                fmt_f64(s.reward())
            )
            .expect("writing to a string");
        }
        let mut lers: Vec<f64> = row.sensors.iter().map(|s| s.ler).collect();
        lers.sort_by(f64::total_cmp);
        for (k, l) in lers.iter().enumerate() {
            writeln!(hist, "{},{k},{},{}", row.label, fmt_f64(*l), fmt_f64((k + 1) as f64 / lers.len() as f64))
                .expect("writing to a string");
        }
    }
    fs::write(cfg.path("eval.csv"), main)?;
    fs::write(cfg.path("eval_sensors.csv"), per_sensor)?;
    fs::write(cfg.path("eval_hist.csv"), hist)?;
    fs::write(cfg.path("eval_scaling.csv"), scaling)?;
    Ok(())
}

/// Logical error at one duration for the extrapolated and the directly
/// fitted prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rounds: usize,
    pub extrapolated: LerEstimate,
    pub direct: LerEstimate,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fit: ExponentialFit,
    pub direct_fit: ExponentialFit,
}

/// Per-cycle error implied by a single duration, `(1 − (1 − 2E)^{1/r}) / 2`.
pub fn single_point_epsilon(ler: f64, rounds: usize) -> f64 {
    (1.0 - (1.0 - 2.0 * ler).powf(1.0 / rounds as f64)) / 2.0
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_add(0xD1B5_4A32_D192_ED03).rotate_left(17)
}

/// Instantiates `theta` (learned at the configured `r`) at every duration of
/// the sweep and decodes fresh planted shots. The comparison prior is fitted
/// by correlations directly at each duration from its own shots.
pub fn cmd_sweep_cycles(cfg: &RunConfig, params: &Path) -> Result<SweepReport> {
    if cfg.sweep_rounds.len() < 2 {
        return Err(Error::InvalidArgument("the sweep needs at least two durations".into()));
    }
    let problem = build_problem(cfg)?;
    let param = &problem.suite.parametrization;
    let text = fs::read_to_string(params).map_err(|e| Error::Data(format!("{}: {e}", params.display())))?;
    let theta = read_params(&text, param)?;
    let mut rows = Vec::new();
    for &r in &cfg.sweep_rounds {
        let template = repetition_dem(RepCodeSpec::new(cfg.d, r)?)?;
        let device = planted_device(cfg, r)?;
        let extrap = instantiate(&template.dem, &param.bind(&template.dem)?, &theta)?;
        let fit_shots = sample_code(&device, cfg.sweep_fit_shots, stream_seed(cfg.sweep_seed, 2 * r as u64))?;
        let suite_r = sensor_suite(cfg, &template)?;
        let (theta_r, _) = fit_suite(&suite_r, &fit_shots)?;
        let (direct, _) = prior_models(&suite_r, &template, &theta_r)?;
        let test = sample_code(&device, cfg.sweep_shots, stream_seed(cfg.sweep_seed, 2 * r as u64 + 1))?;
        let e_ext = crate::decode::decode_shots(&Decoder::new(&extrap)?, &test)?.estimate;
        let e_dir = crate::decode::decode_shots(&Decoder::new(&direct)?, &test)?.estimate;
        rows.push(SweepRow { rounds: r, extrapolated: e_ext, direct: e_dir });
    }
    let points = |f: fn(&SweepRow) -> &LerEstimate| -> Vec<LerPoint> {
        rows.iter()
            .filter(|row| row.rounds != cfg.r)
            .map(|row| LerPoint { rounds: row.rounds, ler: f(row).ler, shots: f(row).shots })
            .collect()
    };
    let fit = fit_ler_exponential(&points(|r| &r.extrapolated))?;
    let direct_fit = fit_ler_exponential(&points(|r| &r.direct))?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::from("rounds,shots,failures_extrapolated,ler_extrapolated,failures_direct,ler_direct,eps_point_extrapolated,eps_point_direct\n");
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.rounds,
            row.extrapolated.shots,
            row.extrapolated.failures,
            fmt_f64(row.extrapolated.ler),
            row.direct.failures,
            fmt_f64(row.direct.ler),
            fmt_f64(single_point_epsilon(row.extrapolated.ler, row.rounds)),
            fmt_f64(single_point_epsilon(row.direct.ler, row.rounds))
        )
        .expect("writing to a string");
    }
    fs::write(cfg.path("sweep.csv"), csv)?;
    let mut fcsv = String::from("prior,epsilon,epsilon_stderr,slope,intercept\n");
    for (label, f) in [("extrapolated", &fit), ("direct", &direct_fit)] {
        writeln!(
            fcsv,
            "{label},{},{},{},{}",
            fmt_f64(f.epsilon),
            fmt_f64(f.epsilon_stderr),
            fmt_f64(f.slope),
            fmt_f64(f.intercept)
        )
        .expect("writing to a string");
    }
    fs::write(cfg.path("sweep_fit.csv"), fcsv)?;
    Ok(SweepReport { rows, fit, direct_fit })
}

/// Target classes not parametrized by the configured sensors.
pub fn cmd_check_coverage(cfg: &RunConfig) -> Result<Vec<ClassKey>> {
    let problem = build_problem(cfg)?;
    let missing = check_coverage(&problem.suite.parametrization, &problem.template.dem)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let text: String = missing.iter().map(|k| format!("{k}\n")).collect();
    fs::write(cfg.path("coverage.txt"), text)?;
    Ok(missing)
}

/// Decodes a shot file with a model file and writes one predicted
/// observable mask per line.
pub fn cmd_decode(dem_path: &Path, shots_path: &Path, format: ShotFormat, out: &Path) -> Result<LerEstimate> {
    let dem = read_dem(dem_path)?;
    let shots = read_shots(shots_path, format)?;
    if shots.n_shots() == 0 {
        return Err(Error::Data("shot file is empty".into()));
    }
    let decoder = Decoder::new(&dem)?;
    if shots.num_detectors() != decoder.num_detectors() || shots.num_observables() != dem.num_observables() {
        return Err(Error::Data("shots do not match the model".into()));
    }
    let pred = predictions(&decoder, &shots)?;
    let mut text = String::with_capacity(pred.len() * (dem.num_observables() + 1));
    for p in &pred {
        text.extend((0..dem.num_observables()).map(|k| if p >> k & 1 == 1 { '1' } else { '0' }));
        text.push('\n');
    }
    fs::write(out, text)?;
    let fails = pred.iter().enumerate().filter(|(i, &p)| p != shots.observable_mask(*i)).count();
    LerEstimate::new(fails, shots.n_shots())
}

/// Epoch history as plain records, re-read from `history.csv`.
pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::parse(ln + 1, "expected six history columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(ln + 1, "bad number"));
        out.push(EpochRecord {
            epoch: f[0].parse().map_err(|_| Error::parse(ln + 1, "bad epoch"))?,
            mean_reward: num(f[1])?,
            min_reward: num(f[2])?,
            max_reward: num(f[3])?,
            cos_to_seed: num(f[4])?,
            cos_to_reference: None,
            mean_sigma: num(f[5])?,
        });
    }
    Ok(out)
}
