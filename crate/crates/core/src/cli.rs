//! Batch front end: configuration parsing, command dispatch and artifact output.
//!
//! A run writes `<out>.csv` and `<out>.manifest.json`. Configuration comes
//! from an optional flat `key=value` file (named by `RANDWIDTH_CONFIG` in the
//! binary) overridden by command-line flags `--key value` or `--key=value`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::lawcheck::{
    arbitrary_lower_bound, bound_vs_estimate, concentration_probe, inclusion_probe,
    lipschitz_probe, rate, sweep_rate, tail_probe, ConcentrationParams, InclusionParams,
    LipschitzParams, SweepParams,
};
use crate::orlicz::equivalence_check;
use crate::polytope::{f_estimate, random_direction_into, DEFAULT_DIRECTIONS, DEFAULT_REPLICATES};
use crate::randsrc::{
    make_rng, sample_isotropic, sample_perturbation, IsotropicFamily, IsotropicModel, Perturbation,
    PerturbationLaw, RngState,
};

/// Environment variable naming an optional config file.
pub const CONFIG_ENV: &str = "RANDWIDTH_CONFIG";

pub const USAGE: &str = "\
usage: randwidth <command> --seed <u64> [--key value ...]

commands:
  sample       draw a point cloud and a perturbation
  width        estimate f(y) = E_X w(K_{N,y})
  orlicz       compare E h(theta) with the empirical Orlicz norm of y
  sweep        E_y f(y) over an N grid, raw and normalized by the predicted rate
  concentrate  deviation tail of f(y) about its median
  lipschitz    fitted Lipschitz constant of f
  tailprobe    marginal tail P(|<X,theta>| >= alpha sqrt(log N))
  inclusion    fitted constant of the centroid-body inclusion (needs N > n^2)
  bound        lower bound for arbitrary y next to the estimate

keys:
  seed (required), n (required), N (required, comma list), model, law, p, y,
  R, M, y_draws, draws, t, pairs, alpha, samples, trials, scale, c1, c2,
  strict, workers, out
";

const KEYS: &[&str] = &[
    "command", "model", "law", "p", "y", "n", "N", "R", "M", "y_draws", "draws", "t", "pairs",
    "alpha", "samples", "trials", "scale", "c1", "c2", "strict", "seed", "workers", "out",
];

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Help,
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help => 0,
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Help => f.write_str(USAGE),
            CliError::Usage(msg) => write!(f, "usage error: {msg}\n\n{USAGE}"),
            CliError::Failure(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sample,
    Width,
    Orlicz,
    Sweep,
    Concentrate,
    Lipschitz,
    TailProbe,
    Inclusion,
    Bound,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Sample,
        Command::Width,
        Command::Orlicz,
        Command::Sweep,
        Command::Concentrate,
        Command::Lipschitz,
        Command::TailProbe,
        Command::Inclusion,
        Command::Bound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Width => "width",
            Command::Orlicz => "orlicz",
            Command::Sweep => "sweep",
            Command::Concentrate => "concentrate",
            Command::Lipschitz => "lipschitz",
            Command::TailProbe => "tailprobe",
            Command::Inclusion => "inclusion",
            Command::Bound => "bound",
        }
    }

    /// Header of the command's CSV output.
    pub fn csv_header(self) -> &'static str {
        match self {
            Command::Sample => "model,law,n,N,p,seed,row,coord,x,y",
            Command::Width => "law,model,n,N,p,R,M,seed,estimate,std_error",
            Command::Orlicz => "law,model,n,N,p,R,M,samples,seed,lhs,lhs_std_error,rhs,ratio",
            Command::Sweep => "law,model,n,N,p,R,M,y_draws,seed,estimate,std_error,rate,normalized",
            Command::Concentrate => "law,model,n,N,p,draws,seed,t,empirical_tail",
            Command::Lipschitz => "model,n,N,pairs,R,M,seed,pair,distance,f_first,f_second,ratio",
            Command::TailProbe => {
                "model,n,N,alpha,samples,seed,level,hits,empirical,reference,ratio"
            }
            Command::Inclusion => "model,n,N,trials,M,samples,scale,seed,trial,c",
            Command::Bound => "model,n,N,c1,c2,k_star,sup_term,f_hat,fitted_c2",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| usage(format!("unknown command `{s}`")))
    }
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: IsotropicFamily,
    /// `Fixed` with an empty vector stands for `y = ones(N)`.
    pub law: PerturbationLaw,
    pub n: usize,
    pub points: Vec<usize>,
    pub replicates: usize,
    pub directions: usize,
    pub y_draws: usize,
    pub draws: usize,
    pub t_grid: Vec<f64>,
    pub pairs: usize,
    pub alpha: f64,
    pub samples: usize,
    pub trials: usize,
    pub scale: f64,
    pub c1: f64,
    pub c2: f64,
    pub strict: bool,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn model(&self) -> IsotropicModel {
        IsotropicModel {
            family: self.model,
            dim: self.n,
        }
    }

    /// The law as used at `points`: a fixed law is resolved to a length-`points` vector.
    pub fn law_at(&self, points: usize) -> PerturbationLaw {
        match &self.law {
            PerturbationLaw::Fixed { values } if values.is_empty() => PerturbationLaw::Fixed {
                values: vec![1.0; points],
            },
            PerturbationLaw::Fixed { values } => PerturbationLaw::Fixed {
                values: values[..points].to_vec(),
            },
            law => law.clone(),
        }
    }

    /// Key/value pairs that parse back to this config.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let mut pairs = vec![
            ("command", self.command.to_string()),
            ("model", self.model.to_string()),
            ("law", self.law.kind().to_string()),
        ];
        if let Some(p) = self.law.p() {
            pairs.push(("p", p.to_string()));
        }
        if let PerturbationLaw::Fixed { values } = &self.law {
            if !values.is_empty() {
                pairs.push(("y", join(values)));
            }
        }
        pairs.extend([
            ("n", self.n.to_string()),
            ("N", join(&self.points)),
            ("R", self.replicates.to_string()),
            ("M", self.directions.to_string()),
            ("y_draws", self.y_draws.to_string()),
            ("draws", self.draws.to_string()),
            ("t", join(&self.t_grid)),
            ("pairs", self.pairs.to_string()),
            ("alpha", self.alpha.to_string()),
            ("samples", self.samples.to_string()),
            ("trials", self.trials.to_string()),
            ("scale", self.scale.to_string()),
            ("c1", self.c1.to_string()),
            ("c2", self.c2.to_string()),
            ("strict", self.strict.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("out", self.out.display().to_string()),
        ]);
        pairs
    }

    /// The echo as config-file text.
    pub fn echo_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_file(text: &str, map: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {} is not key=value: `{line}`", i + 1)))?;
        insert_key(map, key.trim(), value.trim())?;
    }
    Ok(())
}

fn insert_key(map: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<(), CliError> {
    if !KEYS.contains(&key) {
        return Err(usage(format!("unknown key `{key}`")));
    }
    map.insert(key.to_string(), value.to_string());
    Ok(())
}

fn parse_args(args: &[String], map: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    let mut command: Option<&str> = None;
    let mut i = 0;
    while i < args.len() {
        let arg = args[i].as_str();
        i += 1;
        if arg == "--help" || arg == "-h" {
            return Err(CliError::Help);
        }
        let Some(flag) = arg.strip_prefix("--") else {
            if let Some(first) = command {
                return Err(usage(format!(
                    "unexpected argument `{arg}` after command `{first}`"
                )));
            }
            command = Some(arg);
            continue;
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None if flag == "strict" => match args.get(i).map(String::as_str) {
                Some(v @ ("true" | "false")) => {
                    i += 1;
                    ("strict", v.to_string())
                }
                _ => ("strict", "true".to_string()),
            },
            None => {
                let v = args
                    .get(i)
                    .ok_or_else(|| usage(format!("missing value for `{flag}`")))?;
                i += 1;
                (flag, v.clone())
            }
        };
        insert_key(map, key, &value)?;
    }
    if let Some(c) = command {
        map.insert("command".into(), c.into());
    }
    Ok(())
}

struct Keys(BTreeMap<String, String>);

impl Keys {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| usage(format!("invalid value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| usage(format!("missing required key `{key}`")))
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, CliError> {
        let v = self.parse::<usize>(key)?.unwrap_or(default);
        if v == 0 {
            return Err(usage(format!("`{key}` must be positive")));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.parse::<f64>(key)?.unwrap_or(default);
        if !(v > 0.0 && v.is_finite()) {
            return Err(usage(format!(
                "`{key}` must be positive and finite, got {v}"
            )));
        }
        Ok(v)
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|e| usage(format!("invalid entry `{item}` in `{key}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Builds a [`RunConfig`] from config-file text (if any) and flags; flags win.
pub fn parse_config(args: &[String], file: Option<&str>) -> Result<RunConfig, CliError> {
    if args.is_empty() && file.is_none() {
        return Err(usage("no command given"));
    }
    let mut map = BTreeMap::new();
    if let Some(text) = file {
        parse_file(text, &mut map)?;
    }
    parse_args(args, &mut map)?;
    let keys = Keys(map);

    let command: Command = keys.required("command")?;
    let model = keys
        .raw("model")
        .map(|v| {
            v.parse::<IsotropicFamily>()
                .map_err(|e| usage(format!("`model`: {e}")))
        })
        .transpose()?
        .unwrap_or(IsotropicFamily::Gaussian);
    let seed: u64 = keys.required("seed")?;
    let n: usize = keys.required("n")?;
    if n == 0 {
        return Err(usage("`n` must be positive"));
    }
    let points: Vec<usize> = keys
        .list("N")?
        .ok_or_else(|| usage("missing required key `N`"))?;
    if points.contains(&0) || points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("`N` must be positive and strictly increasing"));
    }
    let law = parse_law(&keys, &points)?;

    let t_grid = keys
        .list::<f64>("t")?
        .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.3, 0.5]);
    if t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("`t` must be positive and strictly increasing"));
    }
    let strict = match keys.raw("strict") {
        None => false,
        Some("true") => true,
        Some("false") => false,
        Some(v) => {
            return Err(usage(format!(
                "invalid value `{v}` for `strict`: expected true or false"
            )))
        }
    };
    let workers = match keys.parse::<usize>("workers")? {
        Some(0) => return Err(usage("`workers` must be positive")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |w| w.get()),
    };
    Ok(RunConfig {
        command,
        model,
        law,
        n,
        points,
        replicates: keys.count("R", DEFAULT_REPLICATES)?,
        directions: keys.count("M", DEFAULT_DIRECTIONS)?,
        y_draws: keys.count("y_draws", 1)?,
        draws: keys.count("draws", 100)?,
        t_grid,
        pairs: keys.count("pairs", 20)?,
        alpha: keys.positive("alpha", 0.5)?,
        samples: keys.count("samples", 100_000)?,
        trials: keys.count("trials", 20)?,
        scale: keys.positive("scale", 1.0)?,
        c1: keys.positive("c1", 0.5)?,
        c2: keys.positive("c2", 1.0)?,
        strict,
        seed,
        workers,
        out: PathBuf::from(keys.raw("out").unwrap_or("randwidth")),
    })
}

fn parse_law(keys: &Keys, points: &[usize]) -> Result<PerturbationLaw, CliError> {
    let kind = keys.raw("law").unwrap_or("fixed");
    let p: Option<f64> = keys.parse("p")?;
    let needs_p = matches!(kind, "bp_ball" | "p_stable");
    if p.is_some() && !needs_p {
        return Err(usage(format!("`p` does not apply to law `{kind}`")));
    }
    if keys.raw("y").is_some() && kind != "fixed" {
        return Err(usage(format!("`y` does not apply to law `{kind}`")));
    }
    let p_required = || p.ok_or_else(|| usage(format!("law `{kind}` needs key `p`")));
    let law = match kind {
        "gaussian" => PerturbationLaw::Gaussian,
        "sphere" => PerturbationLaw::Sphere,
        "bp_ball" => PerturbationLaw::bp_ball(p_required()?).map_err(|e| usage(format!("`p`: {e}")))?,
        "p_stable" => PerturbationLaw::p_stable(p_required()?).map_err(|e| usage(format!("`p`: {e}")))?,
        "fixed" => {
            let values = keys.list::<f64>("y")?.unwrap_or_default();
            let longest = points.last().copied().unwrap_or(0);
            if !values.is_empty() && values.len() < longest {
                return Err(usage(format!(
                    "`y` has {} entries but `N` goes up to {longest}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(usage("`y` entries must be finite"));
            }
            PerturbationLaw::Fixed { values }
        }
        other => {
            return Err(usage(format!(
                "invalid value `{other}` for `law`: expected gaussian, sphere, bp_ball, p_stable or fixed"
            )))
        }
    };
    Ok(law)
}

/// Paths and checksum of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

/// CSV text and manifest summary of a run, before anything is written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub csv: String,
    pub summary: Value,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn p_column(law: &PerturbationLaw) -> String {
    law.p().map(num).unwrap_or_default()
}

/// Runs the experiment on a pool of `config.workers` threads without touching the filesystem.
pub fn run(config: &RunConfig) -> Result<RunResult, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Failure(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(config))
}

/// Runs the experiment and writes `<out>.csv` and `<out>.manifest.json`.
pub fn execute(config: &RunConfig) -> Result<RunOutput, CliError> {
    let started = chrono::Utc::now();
    let result = run(config)?;
    let finished = chrono::Utc::now();

    let csv_path = with_suffix(&config.out, ".csv");
    let manifest_path = with_suffix(&config.out, ".manifest.json");
    std::fs::write(&csv_path, &result.csv)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", csv_path.display())))?;
    let sha256 = hex::encode(Sha256::digest(result.csv.as_bytes()));
    let rows = result.csv.lines().count().saturating_sub(1);
    let config_echo: serde_json::Map<String, Value> = config
        .echo()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    let manifest = json!({
        "config": config_echo,
        "version": env!("CARGO_PKG_VERSION"),
        "started": started.to_rfc3339(),
        "finished": finished.to_rfc3339(),
        "outputs": [{
            "path": csv_path.display().to_string(),
            "sha256": sha256,
            "rows": rows,
        }],
        "summary": result.summary,
    });
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Failure(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n")
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", manifest_path.display())))?;
    Ok(RunOutput {
        csv: csv_path,
        manifest: manifest_path,
        sha256,
        rows,
    })
}

fn with_suffix(prefix: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Perturbation for grid index `k`: fixed laws resolve directly, random laws
/// draw from substream `[1, k]`.
fn perturbation(
    config: &RunConfig,
    k: usize,
    points: usize,
    root: &RngState,
) -> Result<Perturbation, CliError> {
    Ok(sample_perturbation(
        &config.law_at(points),
        points,
        &mut root.descend(&[1, k as u64]),
    )?)
}

fn dispatch(config: &RunConfig) -> Result<RunResult, CliError> {
    let root = make_rng(config.seed);
    let model = config.model();
    let mut csv = String::from(config.command.csv_header());
    csv.push('\n');
    let m = config.model.name();
    let n = config.n;
    let seed = config.seed;
    let mut summary = serde_json::Map::new();

    match config.command {
        Command::Sample => {
            for (k, &points) in config.points.iter().enumerate() {
                let cloud = sample_isotropic(model, points, &mut root.descend(&[0, 0]))?;
                let y = perturbation(config, k, points, &root)?;
                let law = &y.law;
                for (row, x) in cloud.rows().enumerate() {
                    for (coord, v) in x.iter().enumerate() {
                        writeln!(
                            csv,
                            "{m},{},{n},{points},{},{seed},{row},{coord},{},{}",
                            law.kind(),
                            p_column(law),
                            num(*v),
                            num(y.values[row])
                        )
                        .unwrap();
                    }
                }
            }
        }
        Command::Width => {
            for (k, &points) in config.points.iter().enumerate() {
                let y = perturbation(config, k, points, &root)?;
                let w = f_estimate(
                    model,
                    points,
                    &y,
                    config.replicates,
                    config.directions,
                    &root.substream(0),
                )?;
                writeln!(
                    csv,
                    "{},{m},{n},{points},{},{},{},{seed},{},{}",
                    y.law.kind(),
                    p_column(&y.law),
                    config.replicates,
                    config.directions,
                    num(w.value),
                    num(w.std_error)
                )
                .unwrap();
            }
        }
        Command::Orlicz => {
            let mut theta = vec![0.0; n];
            random_direction_into(&mut root.substream(2), &mut theta);
            let mut ratios = Vec::new();
            for (k, &points) in config.points.iter().enumerate() {
                let y = perturbation(config, k, points, &root)?;
                let rec = equivalence_check(
                    model,
                    &y,
                    &theta,
                    config.replicates,
                    config.directions,
                    config.samples,
                    &root.substream(0),
                )?;
                ratios.push(rec.ratio);
                writeln!(
                    csv,
                    "{},{m},{n},{points},{},{},{},{},{seed},{},{},{},{}",
                    y.law.kind(),
                    p_column(&y.law),
                    config.replicates,
                    config.directions,
                    config.samples,
                    num(rec.lhs),
                    num(rec.lhs_std_error),
                    num(rec.rhs),
                    num(rec.ratio)
                )
                .unwrap();
            }
            let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            summary.insert("theta".into(), json!(theta));
            summary.insert("ratio_spread".into(), json!(max / min));
        }
        Command::Sweep => {
            let params = SweepParams {
                law: config.law_at(*config.points.last().unwrap()),
                model,
                n_grid: config.points.clone(),
                replicates: config.replicates,
                directions: config.directions,
                y_draws: config.y_draws,
            };
            let r = sweep_rate(&params, &root)?;
            for (k, &points) in r.n_grid.iter().enumerate() {
                writeln!(
                    csv,
                    "{},{m},{n},{points},{},{},{},{},{seed},{},{},{},{}",
                    r.law.kind(),
                    p_column(&r.law),
                    config.replicates,
                    config.directions,
                    config.y_draws,
                    num(r.raw[k]),
                    num(r.raw_std_error[k]),
                    num(r.rate[k]),
                    num(r.normalized[k])
                )
                .unwrap();
            }
            summary.insert("fitted_exponent".into(), json!(r.fitted_exponent));
            summary.insert("normalized_exponent".into(), json!(r.normalized_exponent));
            summary.insert("dispersion".into(), json!(r.dispersion));
            summary.insert("mean".into(), json!(r.mean));
            summary.insert("median_of_means".into(), json!(r.median_of_means));
            summary.insert("mom_disagreement".into(), json!(r.mom_disagreement));
        }
        Command::Concentrate => {
            let mut per_n = Vec::new();
            for (k, &points) in config.points.iter().enumerate() {
                let params = ConcentrationParams {
                    law: config.law.clone(),
                    model,
                    points,
                    draws: config.draws,
                    t_grid: config.t_grid.clone(),
                    replicates: config.replicates,
                    directions: config.directions,
                };
                let c = concentration_probe(&params, &root.substream(k as u64))?;
                for (t, tail) in c.t_grid.iter().zip(&c.empirical_tail) {
                    writeln!(
                        csv,
                        "{},{m},{n},{points},{},{},{seed},{},{}",
                        config.law.kind(),
                        p_column(&config.law),
                        config.draws,
                        num(*t),
                        num(*tail)
                    )
                    .unwrap();
                }
                per_n.push(json!({
                    "N": points,
                    "center": c.center,
                    "shape": c.shape,
                    "fitted_c": c.fitted_c,
                    "fit_threshold": c.fit_threshold,
                    "fit_points": c.fit_points,
                }));
            }
            summary.insert("tails".into(), Value::Array(per_n));
        }
        Command::Lipschitz => {
            let mut c_hat = Vec::new();
            for (k, &points) in config.points.iter().enumerate() {
                let params = LipschitzParams {
                    model,
                    points,
                    pairs: config.pairs,
                    replicates: config.replicates,
                    directions: config.directions,
                };
                let r = lipschitz_probe(&params, &root.substream(k as u64))?;
                for (j, pair) in r.pairs.iter().enumerate() {
                    writeln!(
                        csv,
                        "{m},{n},{points},{},{},{},{seed},{j},{},{},{},{}",
                        config.pairs,
                        config.replicates,
                        config.directions,
                        num(pair.distance),
                        num(pair.f_first),
                        num(pair.f_second),
                        opt_num(pair.ratio)
                    )
                    .unwrap();
                }
                c_hat.push(json!({ "N": points, "c_hat": r.c_hat }));
            }
            summary.insert("c_hat".into(), Value::Array(c_hat));
        }
        Command::TailProbe => {
            for (k, &points) in config.points.iter().enumerate() {
                let t = tail_probe(
                    model,
                    points,
                    config.alpha,
                    config.samples,
                    &mut root.substream(k as u64),
                )?;
                writeln!(
                    csv,
                    "{m},{n},{points},{},{},{seed},{},{},{},{},{}",
                    num(config.alpha),
                    config.samples,
                    num(t.level),
                    t.hits,
                    num(t.empirical),
                    num(t.reference),
                    num(t.ratio())
                )
                .unwrap();
            }
        }
        Command::Inclusion => {
            let mut c_hat = Vec::new();
            for (k, &points) in config.points.iter().enumerate() {
                let params = InclusionParams {
                    model,
                    points,
                    trials: config.trials,
                    directions: config.directions,
                    samples: config.samples,
                    perturbation_scale: config.scale,
                };
                let r = inclusion_probe(&params, &root.substream(k as u64))?;
                for (trial, c) in r.per_trial.iter().enumerate() {
                    writeln!(
                        csv,
                        "{m},{n},{points},{},{},{},{},{seed},{trial},{}",
                        config.trials,
                        config.directions,
                        config.samples,
                        num(config.scale),
                        num(*c)
                    )
                    .unwrap();
                }
                c_hat.push(json!({ "N": points, "c_hat": r.c_hat }));
            }
            summary.insert("c_hat".into(), Value::Array(c_hat));
        }
        Command::Bound => {
            let mut reports = Vec::new();
            for (k, &points) in config.points.iter().enumerate() {
                let y = perturbation(config, k, points, &root)?;
                let cmp = bound_vs_estimate(
                    model,
                    &y,
                    config.c1,
                    config.replicates,
                    config.directions,
                    &root.substream(0),
                )?;
                let bound =
                    arbitrary_lower_bound(&y.values, n, config.c1, config.c2, config.strict)?;
                writeln!(
                    csv,
                    "{m},{n},{points},{},{},{},{},{},{}",
                    num(config.c1),
                    num(config.c2),
                    bound.k_star.map(|k| k.to_string()).unwrap_or_default(),
                    num(bound.sup_term),
                    num(cmp.estimate.value),
                    opt_num(cmp.fitted_c2)
                )
                .unwrap();
                reports.push(json!({
                    "N": points,
                    "admissible": bound.admissible,
                    "bound_value": bound.bound_value,
                    "f_std_error": cmp.estimate.std_error,
                    "strict": bound.strict,
                }));
            }
            summary.insert("bounds".into(), Value::Array(reports));
        }
    }
    if matches!(config.command, Command::Sweep | Command::Width) {
        let rates: Vec<f64> = config
            .points
            .iter()
            .map(|&p| rate(&config.law, p))
            .collect();
        summary.insert("rate".into(), json!(rates));
    }
    Ok(RunResult {
        csv,
        summary: Value::Object(summary),
    })
}
