//! Pipeline stages. Each reads its inputs from, and writes its artifacts
//! to, the output directory, so stages can run one at a time or in
//! sequence with the same result.

use std::path::Path;
use std::time::Instant;

use super::config::{split, InitKind, Method, RunConfig};
use super::manifest::{Manifest, Status};
use crate::baselines::{fit_climatology, fit_pod, pod_reconstruct_series, Climatology, PodBasis};
use crate::entropy::{entropy_field, EntropyField};
use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries};
use crate::io::{read_field_csv, read_series, write_bytes, write_field_csv, write_field_pgm, write_series, Checkpoint};
use crate::metrics::{summarize, EvalReport};
use crate::prior::{init_mask_params, init_mask_params_sampled, sensor_prior, SensorSet};
use crate::selector::{random_mask_params, train, MaskParams, Reconstructor};

pub const DATA: &str = "data.fsr";
pub const CONFIG: &str = "config.txt";
pub const ENTROPY: &str = "entropy.csv";
pub const ENTROPY_FLAGS: &str = "entropy_flags.csv";
pub const MASK_INIT: &str = "mask_init.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

pub fn checkpoint_name(method: Method) -> String {
    format!("{method}.ckpt")
}

pub fn eval_name(method: Method) -> String {
    format!("eval_{method}.csv")
}

fn pgm_names(stem: &str) -> [String; 2] {
    [format!("{stem}.pgm"), format!("{stem}.pgm.txt")]
}

/// Runs one stage against `dir`, keeping its MANIFEST current: the stage is
/// marked running, its artifacts are hashed on success, and a failure is
/// recorded with the stage name before it propagates.
pub fn run_stage(dir: &Path, stage: &'static str, f: impl FnOnce() -> Result<Vec<String>>) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::load_or_new(dir).map_err(|e| stage_err(stage, e))?;
    manifest.status = Status::Running(stage.to_string());
    manifest.write(dir).map_err(|e| stage_err(stage, e))?;
    let started = Instant::now();
    let outcome = f().and_then(|names| manifest.record(dir, &names).map(|_| names));
    match outcome {
        Ok(names) => {
            log::info!("{stage}: {} artifacts in {:.1?}", names.len(), started.elapsed());
            manifest.status = Status::Complete;
            manifest.write(dir).map_err(|e| stage_err(stage, e))?;
            Ok(names)
        }
        Err(e) => {
            manifest.status = Status::Failed {
                stage: stage.to_string(),
                message: e.to_string(),
            };
            // The stage error matters more than a failure to record it.
            if let Err(w) = manifest.write(dir) {
                log::error!("could not record failure in MANIFEST: {w}");
            }
            Err(stage_err(stage, e))
        }
    }
}

fn stage_err(stage: &'static str, e: Error) -> Error {
    Error::Stage {
        stage,
        source: Box::new(e),
    }
}

/// Train and test parts of the stored data.
pub fn load_split(cfg: &RunConfig, dir: &Path) -> Result<(FieldSeries, FieldSeries)> {
    split(&read_series(&dir.join(DATA))?, cfg.split_fraction)
}

/// Generates (or ingests) the data set and records the resolved config.
pub fn gen(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let series = match &cfg.input {
        Some(path) => read_series(path)?,
        None => crate::synth::generate(&cfg.synth_config())?,
    };
    split(&series, cfg.split_fraction)?;
    write_series(&dir.join(DATA), &series)?;
    write_bytes(&dir.join(CONFIG), cfg.to_text().as_bytes())?;
    Ok(vec![DATA.into(), CONFIG.into()])
}

/// Entropy map of the training part.
pub fn entropy(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let (train_s, _) = load_split(cfg, dir)?;
    let h = entropy_field(&train_s, &cfg.entropy_config())?;
    write_field_csv(&dir.join(ENTROPY), &h.h)?;
    let flags: Vec<f64> = h.flagged.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    write_field_csv(&dir.join(ENTROPY_FLAGS), &Field::new(h.h.land().clone(), flags)?)?;
    write_field_pgm(&dir.join("entropy.pgm"), &h.h)?;
    let mut names = vec![ENTROPY.to_string(), ENTROPY_FLAGS.to_string()];
    names.extend(pgm_names("entropy"));
    Ok(names)
}

fn load_entropy(cfg: &RunConfig, dir: &Path, train_s: &FieldSeries) -> Result<EntropyField> {
    let land = train_s.land().clone();
    let h = read_field_csv(&dir.join(ENTROPY))?;
    let flags = read_field_csv(&dir.join(ENTROPY_FLAGS))?;
    if h.shape() != land.shape() || flags.land() != &land {
        return Err(Error::invalid("entropy map does not match the data grid"));
    }
    let flagged = flags
        .values()
        .iter()
        .zip(h.values())
        .enumerate()
        .map(|(i, (&f, v))| land.is_land(i) || f != 0.0 || !v.is_finite())
        .collect();
    Ok(EntropyField {
        h: Field::with_sentinels(land, h.into_values())?,
        flagged,
        scale: cfg.entropy.scale,
        ensemble_size: cfg.entropy.ensemble,
    })
}

/// Sensor prior and initial mask.
pub fn place(cfg: &RunConfig, dir: &Path) -> Result<Vec<String>> {
    let (train_s, _) = load_split(cfg, dir)?;
    let h = load_entropy(cfg, dir, &train_s)?;
    let prior = sensor_prior(&h, cfg.tau)?;
    write_field_csv(&dir.join("prior.csv"), &prior.p)?;
    write_field_pgm(&dir.join("prior.pgm"), &prior.p)?;
    let seed = cfg.place_seed();
    let mask = match cfg.init {
        InitKind::Sampled => init_mask_params_sampled(&prior, cfg.sensors, seed)?,
        InitKind::TopK => init_mask_params(&prior, cfg.sensors)?,
        InitKind::Random => random_mask_params(train_s.land(), cfg.sensors, seed)?,
    };
    write_field_csv(&dir.join(MASK_INIT), &mask.to_field())?;
    SensorSet::from_cells(train_s.shape(), &mask.active_cells(), seed).write(&dir.join("sensors_init.csv"))?;
    let mut names = vec!["prior.csv".to_string()];
    names.extend(pgm_names("prior"));
    names.extend([MASK_INIT.to_string(), "sensors_init.csv".to_string()]);
    Ok(names)
}

fn load_mask_init(dir: &Path, train_s: &FieldSeries) -> Result<MaskParams> {
    let w = read_field_csv(&dir.join(MASK_INIT))?;
    if w.land() != train_s.land() {
        return Err(Error::invalid("initial mask does not match the data grid"));
    }
    MaskParams::new(w.land().clone(), w.into_values())
}

/// Sensor budget shared by pca-qr and concrete: the st-mask sensor count
/// when st-mask is part of the run, the configured count otherwise.
pub fn budget(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    if !cfg.methods.contains(&Method::StMask) {
        return Ok(cfg.sensors);
    }
    let path = dir.join(checkpoint_name(Method::StMask));
    if !path.exists() {
        return Err(Error::invalid(
            "pca-qr and concrete use the st-mask sensor count; train st-mask first",
        ));
    }
    let (_, mask) = Reconstructor::from_checkpoint(&Checkpoint::read(&path)?)?;
    match mask.sensor_count() {
        0 => Err(Error::insufficient("st-mask kept no sensors, so there is no budget to match")),
        k => Ok(k),
    }
}

/// Trains st-mask or concrete from the initial mask.
pub fn train_method(cfg: &RunConfig, dir: &Path, method: Method) -> Result<Vec<String>> {
    if !method.is_trained() {
        return Err(Error::invalid(format!("{method} is a baseline, not a trained method")));
    }
    let (train_s, _) = load_split(cfg, dir)?;
    let init = load_mask_init(dir, &train_s)?;
    let k = if method == Method::Concrete { budget(cfg, dir)? } else { cfg.sensors };
    let report = train(&train_s, &init, &cfg.train_config(method, k))?;
    log::info!(
        "{method}: {} sensors, final mse {:.4}, {} rolled-back epochs, {:.1?}",
        report.mask.sensor_count(),
        report.log.last().map_or(f64::NAN, |e| e.mse),
        report.rejected_epochs,
        report.wall_time
    );
    let ckpt = checkpoint_name(method);
    report.model.to_checkpoint(&report.mask).write(&dir.join(&ckpt))?;
    let sensors = format!("sensors_{method}.csv");
    SensorSet::from_cells(train_s.shape(), &report.mask.active_cells(), cfg.train_config(method, k).seed)
        .write(&dir.join(&sensors))?;
    let curve = format!("train_{method}.csv");
    write_bytes(&dir.join(&curve), report.to_csv().as_bytes())?;
    Ok(vec![ckpt, sensors, curve])
}

/// Fits climatology or POD with pivoted-QR sensors.
pub fn baseline(cfg: &RunConfig, dir: &Path, method: Method) -> Result<Vec<String>> {
    let (train_s, _) = load_split(cfg, dir)?;
    let ckpt = checkpoint_name(method);
    match method {
        Method::Climate => {
            fit_climatology(&train_s)?.to_checkpoint().write(&dir.join(&ckpt))?;
            Ok(vec![ckpt])
        }
        Method::PcaQr => {
            let basis = fit_pod(&train_s, budget(cfg, dir)?)?.with_sensors();
            basis.to_checkpoint().write(&dir.join(&ckpt))?;
            let sensors = format!("sensors_{method}.csv");
            SensorSet::from_cells(train_s.shape(), basis.sensors(), 0).write(&dir.join(&sensors))?;
            Ok(vec![ckpt, sensors])
        }
        _ => Err(Error::invalid(format!("{method} is trained, not a baseline"))),
    }
}

/// Reconstructs the test part with a fitted method and writes its error
/// maps, error series and summary row.
pub fn eval(cfg: &RunConfig, dir: &Path, method: Method) -> Result<Vec<String>> {
    let (_, test) = load_split(cfg, dir)?;
    let ckp = Checkpoint::read(&dir.join(checkpoint_name(method)))?;
    let (recon, sensors) = match method {
        Method::Climate => (Climatology::from_checkpoint(&ckp)?.predict(test.stamps())?, 0),
        Method::PcaQr => {
            let basis = PodBasis::from_checkpoint(&ckp)?;
            (pod_reconstruct_series(&basis, &test)?, basis.sensors().len())
        }
        Method::StMask | Method::Concrete => {
            let (model, mask) = Reconstructor::from_checkpoint(&ckp)?;
            (model.reconstruct_series(&mask, &test)?, mask.sensor_count())
        }
    };
    let m = summarize(method.name(), sensors, &recon, &test)?;
    let mut names = Vec::new();
    for (stem, field) in [(format!("bias_{method}"), &m.bias_field), (format!("rmse_{method}"), &m.rmse_field)] {
        write_field_csv(&dir.join(format!("{stem}.csv")), field)?;
        write_field_pgm(&dir.join(format!("{stem}.pgm")), field)?;
        names.push(format!("{stem}.csv"));
        names.extend(pgm_names(&stem));
    }
    let mut series = String::from("year,day,bias,rmse\n");
    for ((s, b), r) in test.stamps().iter().zip(&m.bias_series).zip(&m.rmse_series) {
        series.push_str(&format!("{},{},{:.10e},{:.10e}\n", s.year, s.day, b, r));
    }
    let series_name = format!("series_{method}.csv");
    write_bytes(&dir.join(&series_name), series.as_bytes())?;
    names.push(series_name);
    let row = EvalReport { rows: vec![m.row()] };
    write_bytes(&dir.join(eval_name(method)), row.to_csv().as_bytes())?;
    names.push(eval_name(method));
    Ok(names)
}

/// Collects the per-method summaries, in config order, into the report.
pub fn report(cfg: &RunConfig, dir: &Path) -> Result<(Vec<String>, EvalReport)> {
    let mut rows = Vec::new();
    for &m in &cfg.methods {
        let bytes = crate::io::read_bytes(&dir.join(eval_name(m)))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Format {
            what: "report CSV",
            detail: "not UTF-8".into(),
        })?;
        let one = EvalReport::from_csv(&text)?;
        match one.rows.as_slice() {
            [row] if row.method == m.name() => rows.push(row.clone()),
            _ => {
                return Err(Error::Format {
                    what: "report CSV",
                    detail: format!("{} must hold exactly one {m} row", eval_name(m)),
                })
            }
        }
    }
    let report = EvalReport { rows };
    write_bytes(&dir.join(REPORT_CSV), report.to_csv().as_bytes())?;
    write_bytes(&dir.join(REPORT_TXT), report.to_table().as_bytes())?;
    Ok((vec![REPORT_CSV.into(), REPORT_TXT.into()], report))
}

/// Every stage in order. A fresh MANIFEST is started; any earlier report is
/// removed first so a failed run never leaves one behind.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for stale in [REPORT_CSV, REPORT_TXT] {
        let path = dir.join(stale);
        if path.exists() {
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Manifest::new(Status::Running("gen".into())).write(dir)?;
    let started = Instant::now();
    run_stage(dir, "gen", || gen(cfg, dir))?;
    if cfg.methods.iter().any(|m| m.is_trained()) {
        run_stage(dir, "entropy", || entropy(cfg, dir))?;
        run_stage(dir, "place", || place(cfg, dir))?;
    }
    // st-mask fixes the budget the other sensor methods match.
    let mut order: Vec<Method> = cfg.methods.iter().copied().filter(|&m| m == Method::StMask).collect();
    order.extend(cfg.methods.iter().copied().filter(|&m| m != Method::StMask));
    for &m in &order {
        if m.is_trained() {
            run_stage(dir, "train", || train_method(cfg, dir, m))?;
        } else {
            run_stage(dir, "baseline", || baseline(cfg, dir, m))?;
        }
    }
    for &m in &cfg.methods {
        run_stage(dir, "eval", || eval(cfg, dir, m))?;
    }
    let mut out = None;
    run_stage(dir, "report", || {
        let (names, report) = report(cfg, dir)?;
        out = Some(report);
        Ok(names)
    })?;
    log::info!("pipeline finished in {:.1?}", started.elapsed());
    Ok(out.expect("report stage succeeded"))
}
