use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spinn::bases::sine::{sine_reconstruct, SineBasisSpec, SineTransform};
use spinn::bases::sphere::{SphereBasisSpec, SphereTransform};
use spinn::bases::Geometry;
use spinn::eval::{
    preset, references, run_experiment, torus_basis, train_variant, write_metrics_csv, write_plot_csv,
    ExperimentConfig, ExperimentReport, RunDirs,
};
use spinn::theorem::{
    assemble_theorem_blocks, fit_component_net, verify_decay, write_ladder_csv, Component, ComponentNetSpec, Target,
};
use spinn::{Error, Result};

#[derive(Parser)]
#[command(name = "spinn", version, about = "Spectral PINN experiments on the interval, sphere and torus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every configured variant (checkpoints are cached).
    Train(Common),
    /// Train if needed, then write all metrics.
    Evaluate(Common),
    /// Reference solutions for the test and generalization families.
    Oracle(Common),
    /// Build the spectral basis and report its quality.
    Basis(Common),
    /// Fit the component networks and check the assembled error bounds.
    TheoremCheck(TheoremArgs),
    /// Noise sensitivity of the trained variants.
    Stability(Common),
    /// Error on the larger initial-condition family.
    Generalize(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration, e.g. table1-desk.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Modes of the assembled block.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Hidden units of the product network.
    #[arg(long, default_value_t = 64)]
    n: usize,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, RunDirs)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                ExperimentConfig::parse(&text)?
            }
            (None, Some(name)) => preset(name)?,
            (None, None) => preset("minimal")?,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let mut dirs = RunDirs::new(&self.out);
        dirs.verbose = !self.quiet;
        Ok((cfg, dirs))
    }
}

fn summary(rep: &ExperimentReport) {
    println!("run {}", rep.run_id);
    println!("{:<22} {:>10} {:>12} {:>12}", "variant", "params", "mse", "gen_mse");
    for r in &rep.results {
        println!("{:<22} {:>10} {:>12.4e} {:>12.4e}", r.variant, r.n_params, r.mse, r.generalization);
    }
}

fn filtered(rep: &ExperimentReport, out: &Path, file: &str, metric: &str) -> Result<()> {
    let rows: Vec<_> = rep.rows.iter().filter(|r| r.metric == metric).cloned().collect();
    for r in &rows {
        match r.t {
            Some(t) => println!("{:<22} t={t:<6} {:.4e}", r.variant, r.value),
            None => println!("{:<22} {:.4e}", r.variant, r.value),
        }
    }
    write_metrics_csv(&out.join(file), &rows)
}

fn train(c: &Common) -> Result<()> {
    let (cfg, dirs) = c.load()?;
    fs::create_dir_all(&dirs.out)?;
    fs::write(dirs.out.join("config.txt"), cfg.to_text())?;
    let mut plot = Vec::new();
    for v in &cfg.variants {
        let (model, secs, losses) = train_variant(&cfg, v, &dirs).map_err(|e| e.at_stage("train"))?;
        let mut w = BufWriter::new(fs::File::create(dirs.out.join(format!("{v}.ckpt")))?);
        model.save(&mut w)?;
        w.flush()?;
        match secs {
            Some(s) => println!("{v}: {} parameters, {s:.1} s", model.n_params()),
            None => println!("{v}: {} parameters, cached", model.n_params()),
        }
        plot.extend(losses.iter().enumerate().map(|(i, &l)| ((i + 1) as f64, v.clone(), l)));
    }
    write_plot_csv(&dirs.out.join("loss.csv"), &plot)
}

fn oracle(c: &Common) -> Result<()> {
    let (cfg, dirs) = c.load()?;
    let refs = references(&cfg, &dirs.cache).map_err(|e| e.at_stage("oracle"))?;
    fs::create_dir_all(&dirs.out)?;
    // L2 norm over the evaluation grid of every reference trajectory
    let mut plot = Vec::new();
    for (name, set) in [("test", &refs.test), ("generalization", &refs.generalization)] {
        for (i, per_t) in set.truth.iter().enumerate() {
            for (&t, u) in set.times.iter().zip(per_t) {
                let n = (u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64).sqrt();
                plot.push((t, format!("{name}-{i}"), n));
            }
        }
    }
    write_plot_csv(&dirs.out.join("oracle_norms.csv"), &plot)?;
    println!(
        "{} test and {} generalization trajectories, {} times, projection loss {:.3e}",
        refs.test.truth.len(),
        refs.generalization.truth.len(),
        refs.test.times.len(),
        refs.test.truncation
    );
    Ok(())
}

fn basis(c: &Common) -> Result<()> {
    let (cfg, dirs) = c.load()?;
    fs::create_dir_all(&dirs.out)?;
    let mut plot = Vec::new();
    match cfg.geometry {
        Geometry::Interval => {
            let spec = SineBasisSpec::new(cfg.degree, cfg.sample_len)?;
            let grid = spec.grid();
            let t = SineTransform::new(spec)?;
            let synth = |c: &[f64]| grid.iter().map(|&x| sine_reconstruct(c, x)).collect();
            let e = roundtrip(synth, |f| t.transform(f).map(|s| s.values), cfg.degree);
            println!("sine basis: {} modes on {} samples, round-trip error {e:.3e}", cfg.degree, cfg.sample_len);
            plot.push((cfg.degree as f64, "roundtrip_error".into(), e));
        }
        Geometry::Sphere => {
            let spec = SphereBasisSpec::new(cfg.model_degree);
            let k = spec.len();
            let t = SphereTransform::new(spec)?;
            let e = roundtrip(|c| t.synthesize(c), |f| t.transform(f).map(|s| s.values), k);
            println!("sphere basis: degree {}, {k} harmonics, round-trip error {e:.3e}", cfg.model_degree);
            plot.push((cfg.model_degree as f64, "roundtrip_error".into(), e));
        }
        Geometry::Torus => {
            let b = torus_basis(&cfg, &dirs.cache)?;
            let (orth, res) = b.invariant_errors();
            println!(
                "torus basis: {} eigenfunctions on a {n}x{n} mesh, lambda_1 {:.2e}, orthonormality {orth:.2e}, residual {res:.2e}",
                b.len(),
                b.eigenvalues[0],
                n = cfg.torus_n
            );
            plot.extend(b.eigenvalues.iter().enumerate().map(|(i, &l)| ((i + 1) as f64, "eigenvalue".into(), l)));
        }
    }
    write_plot_csv(&dirs.out.join("basis.csv"), &plot)
}

/// Max error of synthesize-then-transform on a few deterministic coefficient vectors.
fn roundtrip(
    synth: impl Fn(&[f64]) -> Vec<f64>,
    analyse: impl Fn(&[f64]) -> Result<Vec<f64>>,
    k: usize,
) -> f64 {
    (0..8)
        .map(|s| {
            let c: Vec<f64> = (0..k).map(|i| ((i * 7 + s * 13) % 11) as f64 / 11.0 - 0.5).collect();
            analyse(&synth(&c))
                .map(|back| back.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

fn theorem_check(a: &TheoremArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mul = fit_component_net(ComponentNetSpec { target: Target::Mul2 { range: 2.0 }, n: a.n }, a.seed)?;
    println!("mul2 n={}: max error {:.3e}", a.n, mul.max_error);
    let exps = (1..=a.k)
        .map(|i| {
            fit_component_net(ComponentNetSpec { target: Target::ExpDecay { k: i, alpha: 0.01 }, n: 8 }, a.seed + i as u64)
                .map(Component::Fitted)
        })
        .collect::<Result<Vec<_>>>()?;
    let block = assemble_theorem_blocks(Component::Fitted(mul), exps, vec![], a.k)?;
    let err = block.stepping_sup_error();
    let bound = block.stepping_bound();
    println!(
        "assembled stepping K={}: sup error {err:.3e}, component bound {bound:.3e} ({}), {} parameters",
        a.k,
        if err <= bound { "holds" } else { "VIOLATED" },
        block.stepping_param_count()
    );
    let ladder = [8, 16, 32, 64];
    let mut rows = Vec::new();
    for target in [Target::Sine { k: 1 }, Target::ExpDecay { k: 1, alpha: 0.01 }] {
        let r = verify_decay(target, &ladder, a.seed)?;
        println!(
            "{}: errors {:?}, non-increasing {}, last/first {:.2e}",
            target.name(),
            r.rows.iter().map(|x| format!("{:.1e}", x.max_error)).collect::<Vec<_>>(),
            r.non_increasing,
            r.last_over_first
        );
        rows.extend(r.rows);
    }
    let mut w = BufWriter::new(fs::File::create(a.out.join("ladder.csv"))?);
    write_ladder_csv(&mut w, &rows)?;
    w.flush()?;
    if err > bound {
        return Err(Error::DomainError(format!("assembled error {err:e} exceeds bound {bound:e}")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Train(c) => train(c),
        Cmd::Evaluate(c) => {
            let (cfg, dirs) = c.load()?;
            let rep = run_experiment(&cfg, &dirs)?;
            summary(&rep);
            Ok(())
        }
        Cmd::Oracle(c) => oracle(c),
        Cmd::Basis(c) => basis(c),
        Cmd::TheoremCheck(a) => theorem_check(a),
        Cmd::Stability(c) => {
            let (cfg, dirs) = c.load()?;
            let rep = run_experiment(&cfg, &dirs)?;
            filtered(&rep, &dirs.out, "stability.csv", "stability")
        }
        Cmd::Generalize(c) => {
            let (cfg, dirs) = c.load()?;
            let rep = run_experiment(&cfg, &dirs)?;
            filtered(&rep, &dirs.out, "generalization.csv", "generalization_mse")
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } => exit_code(source),
        Error::Config(_) | Error::InvalidVariant(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
