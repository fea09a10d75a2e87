use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::metrics::{
    error_vs_time, generalization_eval, heat_test_set, mse_metric, spectral_test_set, stability_metric,
    uniform_times, Reference, TestSet,
};
use crate::bases::torus::{EigenBasis, TorusGeometry};
use crate::bases::Geometry;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::train::Schedule;
use crate::oracle::{ImexOptions, SphereSystem, TrajectoryCache};
use crate::training::{cached_dataset, run_schedule, sample_family_with, split_rng, staged_phases, Phase, PhaseKind, Split};

/// Torus radii used by the torus experiments.
pub const TORUS_RADII: (f64, f64) = (2.0, 1.0);

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run_id: String,
    pub geometry: Geometry,
    pub variant: String,
    pub epsilon_or_alpha: f64,
    pub metric: String,
    /// Empty for time-independent metrics.
    pub t: Option<f64>,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub const METRIC_HEADER: &str = "run_id,geometry,variant,epsilon_or_alpha,metric,t,value,seed,config_hash";

impl MetricRow {
    pub fn to_csv(&self) -> String {
        let t = self.t.map(|t| format!("{t}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{:e},{},{}",
            self.run_id,
            self.geometry.name(),
            self.variant,
            self.epsilon_or_alpha,
            self.metric,
            t,
            self.value,
            self.seed,
            self.config_hash
        )
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| !r.value.is_finite()) {
        return Err(Error::DomainError(format!("{} of {} is {}", r.metric, r.variant, r.value)));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{METRIC_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    w.flush()?;
    Ok(())
}

/// Long-form plot data, `x,series,value`.
pub fn write_plot_csv(path: &Path, data: &[(f64, String, f64)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x,series,value")?;
    for (x, s, v) in data {
        writeln!(w, "{x},{s},{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: String,
    pub n_params: usize,
    /// `None` when the checkpoint came from the cache.
    pub train_seconds: Option<f64>,
    pub epoch_loss: Vec<f64>,
    pub mse: f64,
    pub error_vs_time: Vec<(f64, f64)>,
    pub stability: Vec<(f64, f64)>,
    pub generalization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub run_id: String,
    pub results: Vec<VariantResult>,
    pub rows: Vec<MetricRow>,
    /// Largest relative projection loss of a test condition onto the
    /// reference basis.
    pub truncation: f64,
}

impl ExperimentReport {
    pub fn result(&self, variant: &str) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == variant)
    }
}

/// Where run artifacts go.
#[derive(Debug, Clone)]
pub struct RunDirs {
    pub out: PathBuf,
    pub cache: PathBuf,
    pub verbose: bool,
}

impl RunDirs {
    /// Cache from `SPINN_CACHE_DIR`, else `<out>/cache`.
    pub fn new(out: impl Into<PathBuf>) -> Self {
        let out = out.into();
        let cache = std::env::var_os("SPINN_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| out.join("cache"));
        RunDirs { out, cache, verbose: false }
    }

    fn note(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }
}

/// The test conditions and reference values, plus the larger family.
pub struct References {
    pub test: TestSet,
    pub generalization: TestSet,
}

pub fn torus_basis(cfg: &ExperimentConfig, cache: &Path) -> Result<EigenBasis> {
    let geom = TorusGeometry::new(TORUS_RADII.0, TORUS_RADII.1, cfg.torus_n, cfg.torus_n)?;
    let path = cache.join(format!("torus-{}-{}.basis", cfg.torus_n, cfg.oracle_k));
    if let Ok(f) = fs::File::open(&path) {
        if let Ok(b) = EigenBasis::load(&mut BufReader::new(f)) {
            return Ok(b);
        }
    }
    let b = EigenBasis::build(geom, cfg.oracle_k)?;
    fs::create_dir_all(cache)?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        b.save(&mut w)?;
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(b)
}

/// Builds test and generalization references for `cfg`.
pub fn references(cfg: &ExperimentConfig, cache: &Path) -> Result<References> {
    let spec = cfg.family();
    let gen_spec = spec.clone().with_degree(cfg.gen_degree);
    let test_fam = sample_family_with(&spec, cfg.n_test, &mut split_rng(cfg.seed, Split::Test))?;
    let gen_fam = sample_family_with(&gen_spec, cfg.n_test, &mut split_rng(cfg.seed, Split::Generalization))?;
    let times = uniform_times(cfg.t_end, cfg.eval_steps);
    let pde = cfg.pde();
    let opts = ImexOptions { dt: cfg.oracle_dt, ..ImexOptions::default() };
    let traj = TrajectoryCache::new(cache.join("trajectories"));
    Ok(match cfg.geometry {
        Geometry::Interval => References {
            test: heat_test_set(test_fam, cfg.coef, spec.grid_points(), times.clone())?,
            generalization: heat_test_set(gen_fam, cfg.coef, spec.grid_points(), times)?,
        },
        Geometry::Sphere => {
            let sys = SphereSystem::new(cfg.gen_degree.max(cfg.degree))?;
            References {
                test: spectral_test_set(test_fam, &pde, Reference::Sphere(&sys), &opts, times.clone(), Some(&traj))?,
                generalization: spectral_test_set(gen_fam, &pde, Reference::Sphere(&sys), &opts, times, Some(&traj))?,
            }
        }
        Geometry::Torus => {
            let basis = torus_basis(cfg, cache)?;
            References {
                test: spectral_test_set(test_fam, &pde, Reference::Torus(&basis), &opts, times.clone(), Some(&traj))?,
                generalization: spectral_test_set(gen_fam, &pde, Reference::Torus(&basis), &opts, times, Some(&traj))?,
            }
        }
    })
}

/// Training phases of `variant`: one full phase on the interval, the
/// staged schedule elsewhere.
pub fn phases_for(cfg: &ExperimentConfig, variant: &str) -> Vec<Phase> {
    let base = Schedule { epochs: 0, batch_size: cfg.batch_size, lr: cfg.lr, shuffle_seed: cfg.seed };
    let epochs = cfg.epochs_for(variant);
    match cfg.geometry {
        Geometry::Interval => vec![Phase::new(PhaseKind::Full, Schedule { epochs, ..base })],
        _ => staged_phases(cfg.pretrain_epochs, cfg.frozen_epochs, epochs, &base),
    }
}

/// Trains `variant`, or loads its checkpoint from `cache`.
pub fn train_variant(cfg: &ExperimentConfig, variant: &str, dirs: &RunDirs) -> Result<(Model, Option<f64>, Vec<f64>)> {
    let ckpt = dirs
        .cache
        .join("models")
        .join(format!("{}-{variant}.ckpt", cfg.config_hash()));
    let loss_path = ckpt.with_extension("loss");
    if let (Ok(f), Ok(text)) = (fs::File::open(&ckpt), fs::read_to_string(&loss_path)) {
        let losses: std::result::Result<Vec<f64>, _> = text.lines().map(str::parse).collect();
        if let (Ok(m), Ok(losses)) = (Model::load(&mut BufReader::new(f)), losses) {
            dirs.note(&format!("[train] {variant}: checkpoint {}", ckpt.display()));
            return Ok((m, None, losses));
        }
    }
    let model = Model::build(&cfg.model_config(variant)?, cfg.seed)?;
    let data = cached_dataset(
        &dirs.cache.join("datasets"),
        &cfg.family(),
        cfg.t_end,
        cfg.n_train,
        cfg.l0_points,
        cfg.seed,
    )
    .map_err(|e| e.at_stage("dataset"))?;
    dirs.note(&format!("[train] {variant}: {} parameters", model.n_params()));
    let start = Instant::now();
    let (model, trace) = run_schedule(model, &data, &cfg.pde(), &phases_for(cfg, variant))?;
    let secs = start.elapsed().as_secs_f64();
    let losses: Vec<f64> = trace.phases.iter().flat_map(|(_, t)| t.epoch_loss.iter().copied()).collect();
    dirs.note(&format!(
        "[train] {variant}: {:.1} s, final loss {:e}",
        secs,
        losses.last().copied().unwrap_or(f64::NAN)
    ));
    fs::create_dir_all(ckpt.parent().expect("checkpoint has a parent"))?;
    let tmp = ckpt.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        model.save(&mut w)?;
        w.flush()?;
    }
    fs::rename(tmp, &ckpt)?;
    // written last: its presence marks a complete checkpoint
    let text: String = losses.iter().map(|l| format!("{l:e}\n")).collect();
    fs::write(&loss_path, text)?;
    Ok((model, Some(secs), losses))
}

pub fn evaluate_variant(
    cfg: &ExperimentConfig,
    variant: &str,
    model: &Model,
    refs: &References,
) -> Result<VariantResult> {
    Ok(VariantResult {
        variant: variant.to_string(),
        n_params: model.n_params(),
        train_seconds: None,
        epoch_loss: Vec::new(),
        mse: mse_metric(model, &refs.test)?,
        error_vs_time: error_vs_time(model, &refs.test)?,
        stability: stability_metric(
            model,
            &refs.test.family.samples,
            &refs.test.points,
            cfg.noise_variance,
            &cfg.stability_times,
            cfg.seed,
        )?,
        generalization: generalization_eval(model, &refs.generalization)?,
    })
}

fn rows_for(cfg: &ExperimentConfig, run_id: &str, r: &VariantResult) -> Vec<MetricRow> {
    let row = |metric: &str, t: Option<f64>, value: f64| MetricRow {
        run_id: run_id.to_string(),
        geometry: cfg.geometry,
        variant: r.variant.clone(),
        epsilon_or_alpha: cfg.coef,
        metric: metric.to_string(),
        t,
        value,
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
    };
    let mut rows = vec![
        row("param_count", None, r.n_params as f64),
        row("mse", None, r.mse),
        row("generalization_mse", None, r.generalization),
    ];
    rows.extend(r.stability.iter().map(|&(t, v)| row("stability", Some(t), v)));
    rows.extend(r.error_vs_time.iter().map(|&(t, v)| row("error_vs_time", Some(t), v)));
    rows
}

/// Full pipeline: references, training per variant, metrics. Writes
/// `config.txt`, `metrics.csv`, `error_vs_time.csv` and `loss.csv` into
/// `dirs.out`.
pub fn run_experiment(cfg: &ExperimentConfig, dirs: &RunDirs) -> Result<ExperimentReport> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    fs::create_dir_all(&dirs.out).map_err(|e| Error::from(e).at_stage("config"))?;
    fs::write(dirs.out.join("config.txt"), cfg.to_text()).map_err(|e| Error::from(e).at_stage("config"))?;
    let run_id = format!("{}-{}", cfg.name, cfg.config_hash());

    dirs.note("[oracle] building references");
    let refs = references(cfg, &dirs.cache).map_err(|e| e.at_stage("oracle"))?;

    let mut results = Vec::new();
    let mut rows = Vec::new();
    for v in &cfg.variants {
        let (model, secs, losses) = train_variant(cfg, v, dirs).map_err(|e| e.at_stage("train"))?;
        let mut r = evaluate_variant(cfg, v, &model, &refs).map_err(|e| e.at_stage("metrics"))?;
        r.train_seconds = secs;
        r.epoch_loss = losses;
        dirs.note(&format!("[metrics] {v}: mse {:e}, generalization {:e}", r.mse, r.generalization));
        rows.extend(rows_for(cfg, &run_id, &r));
        results.push(r);
    }

    let write = |name: &str, f: &dyn Fn(&Path) -> Result<()>| f(&dirs.out.join(name)).map_err(|e| e.at_stage("metrics"));
    write("metrics.csv", &|p| write_metrics_csv(p, &rows))?;
    let evt: Vec<(f64, String, f64)> = results
        .iter()
        .flat_map(|r| r.error_vs_time.iter().map(move |&(t, e)| (t, r.variant.clone(), e)))
        .collect();
    write("error_vs_time.csv", &|p| write_plot_csv(p, &evt))?;
    let loss: Vec<(f64, String, f64)> = results
        .iter()
        .flat_map(|r| r.epoch_loss.iter().enumerate().map(move |(i, &l)| ((i + 1) as f64, r.variant.clone(), l)))
        .collect();
    write("loss.csv", &|p| write_plot_csv(p, &loss))?;

    Ok(ExperimentReport {
        config: cfg.clone(),
        run_id,
        results,
        rows,
        truncation: refs.test.truncation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::config::preset;

    #[test]
    fn minimal_run_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let mut dirs = RunDirs::new(dir.path());
        dirs.cache = dir.path().join("c");
        let cfg = preset("minimal").unwrap();
        let rep = run_experiment(&cfg, &dirs).unwrap();
        let r = rep.result("spectral-exact").unwrap();
        assert!(r.mse < 1e-20, "{}", r.mse);
        assert!(r.generalization > r.mse);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with(METRIC_HEADER));
        assert_eq!(csv.lines().count(), 1 + rep.rows.len());
        // second run hits the checkpoint cache and rewrites identical tables
        let again = run_experiment(&cfg, &dirs).unwrap();
        assert_eq!(again.results[0].train_seconds, None);
        assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), csv);
    }

    #[test]
    fn stage_errors_are_tagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset("minimal").unwrap();
        cfg.n_test = 0;
        let err = run_experiment(&cfg, &RunDirs::new(dir.path())).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "config", .. }), "{err}");
    }
}
