use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::entropy::EntropyConfig;
use crate::error::{Error, Result};
use crate::grid::{FieldSeries, GridShape};
use crate::io::read_bytes;
use crate::prior::DEFAULT_TAU;
use crate::seed;
use crate::selector::{Selector, TrainConfig};
use crate::synth::SynthConfig;

/// A reconstruction method compared in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Climate,
    PcaQr,
    StMask,
    Concrete,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Climate, Method::PcaQr, Method::StMask, Method::Concrete];

    pub fn name(self) -> &'static str {
        match self {
            Method::Climate => "climate",
            Method::PcaQr => "pca-qr",
            Method::StMask => "st-mask",
            Method::Concrete => "concrete",
        }
    }

    /// Trained by the selector rather than fitted as a baseline.
    pub fn is_trained(self) -> bool {
        matches!(self, Method::StMask | Method::Concrete)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (climate, pca-qr, st-mask, concrete)")))
    }
}

/// How the initial mask is drawn before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    /// `k0` cells drawn from the entropy prior.
    #[default]
    Sampled,
    /// The `k0` most probable cells of the entropy prior.
    TopK,
    /// `k0` cells uniformly at random, ignoring the prior.
    Random,
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Sampled => "sampled",
            InitKind::TopK => "top-k",
            InitKind::Random => "random",
        })
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(InitKind::Sampled),
            "top-k" => Ok(InitKind::TopK),
            "random" => Ok(InitKind::Random),
            _ => Err(Error::Config(format!("unknown init `{s}` (sampled, top-k, random)"))),
        }
    }
}

/// Everything a run needs. Sub-configuration seeds are not set directly;
/// each stage derives its own from `seed` by name.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// FSR1 file to read instead of generating synthetic data.
    pub input: Option<PathBuf>,
    pub split_fraction: f64,
    pub methods: Vec<Method>,
    /// Initial sensor count `k0`; also the budget when st-mask is not run.
    pub sensors: usize,
    pub tau: f64,
    pub init: InitKind,
    pub concrete_t_start: f64,
    pub concrete_t_end: f64,
    pub synth: SynthConfig,
    pub entropy: EntropyConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            input: None,
            split_fraction: 0.8,
            methods: vec![Method::Climate, Method::PcaQr, Method::StMask],
            sensors: 40,
            tau: DEFAULT_TAU,
            init: InitKind::Sampled,
            concrete_t_start: 10.0,
            concrete_t_end: 0.1,
            synth: SynthConfig::default(),
            entropy: EntropyConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects true or false, got `{value}`"))),
    }
}

/// Config-flavoured parse for types whose own errors are invalid-argument.
fn parse_config<T: FromStr<Err = Error>>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got `{line}`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: `{key}` set twice", n + 1)));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => Error::Config(format!("line {}: {other}", n + 1)),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path).map_err(|e| Error::Config(format!("cannot read config: {e}")))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        let e = &mut self.entropy;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "input" => self.input = (!value.is_empty()).then(|| PathBuf::from(value)),
            "split_fraction" => self.split_fraction = parse(key, value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|m| m.trim().parse())
                    .collect::<Result<Vec<Method>>>()?;
            }
            "sensors" => self.sensors = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "init" => self.init = value.parse()?,
            "concrete.t_start" => self.concrete_t_start = parse(key, value)?,
            "concrete.t_end" => self.concrete_t_end = parse(key, value)?,
            "synth.rows" => s.shape.rows = parse(key, value)?,
            "synth.cols" => s.shape.cols = parse(key, value)?,
            "synth.years" => s.years = parse(key, value)?,
            "synth.start_year" => s.start_year = parse(key, value)?,
            "synth.rank" => s.rank = parse(key, value)?,
            "synth.mode_amp" => s.mode_amp = parse(key, value)?,
            "synth.seasonal_amp" => s.seasonal_amp = parse(key, value)?,
            "synth.drift_amp" => s.drift_amp = parse(key, value)?,
            "synth.front_band" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("`{key}` expects lo,hi, got `{value}`")))?;
                s.front_band = (parse(key, lo.trim())?, parse(key, hi.trim())?);
            }
            "synth.noise_sigma" => s.noise_sigma = parse(key, value)?,
            "synth.land_fraction" => s.land_fraction = parse(key, value)?,
            "entropy.patch_size" => e.patch_size = parse(key, value)?,
            "entropy.scale" => e.scale = parse(key, value)?,
            "entropy.ordering" => e.ordering = parse_config(key, value)?,
            "entropy.patch_stride" => e.patch_stride = parse(key, value)?,
            "entropy.bin_stride" => e.bin_stride = parse(key, value)?,
            "entropy.min_samples" => e.min_samples = parse(key, value)?,
            "entropy.shrinkage" => e.shrinkage = parse(key, value)?,
            "entropy.shrinkage_floor" => e.shrinkage_floor = parse(key, value)?,
            "entropy.ensemble" => e.ensemble = parse(key, value)?,
            "entropy.bootstrap" => e.bootstrap = parse_bool(key, value)?,
            "entropy.estimator" => e.estimator = parse_config(key, value)?,
            "entropy.mc_samples" => e.mc_samples = parse(key, value)?,
            "entropy.smooth_window" => e.smooth_window = parse(key, value)?,
            "train.lambda_max" => t.lambda_max = parse(key, value)?,
            "train.lambda_ramp_epochs" => t.lambda_ramp_epochs = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.step_size" => t.step_size = parse(key, value)?,
            "train.mask_step_size" => t.mask_step_size = parse(key, value)?,
            "train.decay" => t.decay = parse(key, value)?,
            "train.decoder" => t.decoder = parse_config(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`RunConfig::parse`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let e = &self.entropy;
        let t = &self.train;
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let lines = [
            format!("seed = {}", self.seed),
            format!("out = {}", self.out_dir.display()),
            format!("input = {}", self.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            format!("split_fraction = {}", self.split_fraction),
            format!("methods = {}", methods.join(",")),
            format!("sensors = {}", self.sensors),
            format!("tau = {}", self.tau),
            format!("init = {}", self.init),
            format!("concrete.t_start = {}", self.concrete_t_start),
            format!("concrete.t_end = {}", self.concrete_t_end),
            format!("synth.rows = {}", s.shape.rows),
            format!("synth.cols = {}", s.shape.cols),
            format!("synth.years = {}", s.years),
            format!("synth.start_year = {}", s.start_year),
            format!("synth.rank = {}", s.rank),
            format!("synth.mode_amp = {}", s.mode_amp),
            format!("synth.seasonal_amp = {}", s.seasonal_amp),
            format!("synth.drift_amp = {}", s.drift_amp),
            format!("synth.front_band = {},{}", s.front_band.0, s.front_band.1),
            format!("synth.noise_sigma = {}", s.noise_sigma),
            format!("synth.land_fraction = {}", s.land_fraction),
            format!("entropy.patch_size = {}", e.patch_size),
            format!("entropy.scale = {}", e.scale),
            format!("entropy.ordering = {}", e.ordering),
            format!("entropy.patch_stride = {}", e.patch_stride),
            format!("entropy.bin_stride = {}", e.bin_stride),
            format!("entropy.min_samples = {}", e.min_samples),
            format!("entropy.shrinkage = {}", e.shrinkage),
            format!("entropy.shrinkage_floor = {}", e.shrinkage_floor),
            format!("entropy.ensemble = {}", e.ensemble),
            format!("entropy.bootstrap = {}", e.bootstrap),
            format!("entropy.estimator = {}", e.estimator),
            format!("entropy.mc_samples = {}", e.mc_samples),
            format!("entropy.smooth_window = {}", e.smooth_window),
            format!("train.lambda_max = {}", t.lambda_max),
            format!("train.lambda_ramp_epochs = {}", t.lambda_ramp_epochs),
            format!("train.epochs = {}", t.epochs),
            format!("train.batch_size = {}", t.batch_size),
            format!("train.step_size = {}", t.step_size),
            format!("train.mask_step_size = {}", t.mask_step_size),
            format!("train.decay = {}", t.decay),
            format!("train.decoder = {}", t.decoder),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!("split_fraction must be in (0,1), got {}", self.split_fraction)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method {m} listed twice")));
            }
        }
        if self.sensors == 0 {
            return Err(Error::Config("sensors must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        GridShape::new(self.synth.shape.rows, self.synth.shape.cols).map_err(wrap)?;
        if self.input.is_none() {
            self.synth.validate().map_err(wrap)?;
        }
        self.entropy.validate().map_err(wrap)?;
        let concrete = Selector::Concrete {
            k: self.sensors,
            t_start: self.concrete_t_start,
            t_end: self.concrete_t_end,
        };
        TrainConfig {
            selector: concrete,
            ..self.train.clone()
        }
        .validate()
        .map_err(wrap)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: seed::named(self.seed, "synth"),
            ..self.synth.clone()
        }
    }

    pub fn entropy_config(&self) -> EntropyConfig {
        EntropyConfig {
            seed: seed::named(self.seed, "entropy"),
            ..self.entropy.clone()
        }
    }

    /// Training settings for `method` with a budget of `k` concrete heads.
    pub fn train_config(&self, method: Method, k: usize) -> TrainConfig {
        let selector = match method {
            Method::Concrete => Selector::Concrete {
                k,
                t_start: self.concrete_t_start,
                t_end: self.concrete_t_end,
            },
            _ => Selector::StraightThrough,
        };
        TrainConfig {
            selector,
            seed: seed::named(self.seed, method.name()),
            ..self.train.clone()
        }
    }

    pub fn place_seed(&self) -> u64 {
        seed::named(self.seed, "place")
    }
}

/// Chronological split at `floor(fraction * T)`.
pub fn split(series: &FieldSeries, fraction: f64) -> Result<(FieldSeries, FieldSeries)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must be in (0,1), got {fraction}")));
    }
    let t = series.len();
    let cut = (fraction * t as f64).floor() as usize;
    if cut == 0 || cut == t {
        return Err(Error::invalid(format!(
            "split of {t} snapshots at {fraction} leaves an empty part"
        )));
    }
    Ok((series.slice(0..cut)?, series.slice(cut..t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, LandMask, Stamp};

    fn series(t: usize) -> FieldSeries {
        let land = LandMask::all_sea(GridShape::new(1, 1).unwrap());
        let fields = (0..t).map(|i| Field::filled(land.clone(), i as f64).unwrap()).collect();
        let stamps = (0..t).map(|i| Stamp::new(2000, i as u16 + 1).unwrap()).collect();
        FieldSeries::new(fields, stamps).unwrap()
    }

    #[test]
    fn split_sizes() {
        for (t, f, a) in [(10, 0.8, 8), (5, 0.8, 4), (10, 0.99, 9)] {
            let (tr, te) = split(&series(t), f).unwrap();
            assert_eq!((tr.len(), te.len()), (a, t - a));
            assert_eq!(tr.stamps()[a - 1].day as usize, a);
        }
        assert!(split(&series(1), 0.8).is_err());
        assert!(split(&series(10), 0.05).is_err());
        assert!(split(&series(10), 1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 7;
        cfg.methods = vec![Method::StMask, Method::Concrete];
        cfg.input = Some(PathBuf::from("data/x.fsr"));
        cfg.synth.front_band = (3, 9);
        cfg.entropy.bootstrap = false;
        cfg.entropy.estimator = crate::entropy::EntropyEstimator::MonteCarlo;
        cfg.train.decoder = crate::selector::DecoderKind::Mlp1 { hidden: 16 };
        cfg.init = InitKind::TopK;
        cfg.tau = 0.35;
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn comments_blanks_and_defaults() {
        let cfg = RunConfig::parse("# desk run\n\nseed = 3  # trailing\nmethods = climate, st-mask\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.methods, vec![Method::Climate, Method::StMask]);
        assert_eq!(cfg.sensors, 40);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "bogus = 1",
            "seed = -1",
            "seed 3",
            "seed = 1\nseed = 2",
            "split_fraction = 1.0",
            "methods = climate,pod",
            "methods = climate,climate",
            "synth.years = 1",
            "entropy.ordering = zigzag",
            "entropy.bootstrap = maybe",
            "train.epochs = 0",
            "concrete.t_end = 20",
            "sensors = 0",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn stage_seeds_differ_by_name() {
        let cfg = RunConfig::default();
        let seeds = [
            cfg.synth_config().seed,
            cfg.entropy_config().seed,
            cfg.train_config(Method::StMask, 1).seed,
            cfg.train_config(Method::Concrete, 1).seed,
            cfg.place_seed(),
        ];
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        let other = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(other.synth_config().seed, seeds[0]);
    }
}
