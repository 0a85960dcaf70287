//! `kfp`: batch driver for the spectral laboratory.
//!
//! Subcommands map one-to-one onto the library workflows; every run is
//! reproducible from its config document and outputs are written
//! atomically. Exit codes: 0 ok, 2 not a double well, 3 imaginary-axis
//! eigenvalue, 4 hypothesis failure, 5 solver non-convergence, 6 bad
//! fit, 64 malformed config.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use config::RunConfig;
use kfp_core::complex::{adjoint_symmetry_check, assemble_complex};
use kfp_core::hypotheses::{check_ny17, check_ny19_ny20, default_sample_ring};
use kfp_core::lab::{
    self, fit_splitting, grid_for, lattice_report, low_spectrum, match_lattice,
    model_lattice, predict_prefactor, resolvent_probe, splitting_value, LabConfig,
};
use kfp_core::landscape::{classify_landscape, find_critical_points, ModelSpec, SearchBox};
use kfp_core::symbols::{escape_form, fundamental_eigs, tr_tilde};
use kfp_core::CoreError;

#[derive(Parser)]
#[command(name = "kfp", about = "spectral laboratory for kinetic Fokker-Planck type Witten Laplacians")]
struct Cli {
    /// JSON config document; flags below override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// registry model name
    #[arg(long, global = true)]
    model: Option<String>,
    /// semiclassical parameter for single-h commands
    #[arg(long, global = true)]
    h: Option<f64>,
    /// form degree (0 or 1)
    #[arg(long, global = true)]
    degree: Option<usize>,
    /// seed for the randomized structural probes
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// landscape and symbol geometry reports
    Analyze,
    /// dynamical averaging hypothesis certificates
    Check,
    /// low-lying spectrum at one h, matched against the lattice
    Spectrum,
    /// h-sweep of the splitting plus the exponential fit
    Splitting,
    /// structural identities of the assembled complex
    ComplexVerify {
        /// also dump the operator matrices in triplet text form
        #[arg(long)]
        dump: bool,
    },
    /// resolvent norm probes on the window boundary
    Resolvent,
}

#[derive(Parser)]
#[command(name = "kfp")]
struct CliWithCommand {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Cli,
}

fn main() -> ExitCode {
    let cli = CliWithCommand::parse();
    let mut cfg = match load_config(cli.common.config.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(64);
        }
    };
    if let Some(name) = &cli.common.model {
        cfg.model = config::ModelField::Name(name.clone());
    }
    if let Some(out) = &cli.common.out {
        cfg.out_dir = out.display().to_string();
    }
    cfg.seed = cli.common.seed;
    if let Err(msg) = cfg.validate() {
        eprintln!("config error: {msg}");
        return ExitCode::from(64);
    }

    let result = run(&cli.command, &cfg, cli.common.h, cli.common.degree);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &CoreError) -> u8 {
    match e {
        CoreError::NotDoubleWell(_) => 2,
        CoreError::ImaginaryAxisEigenvalue(_) => 3,
        CoreError::HypothesisFails(_) => 4,
        CoreError::NotConverged(_)
        | CoreError::NoConvergence(_)
        | CoreError::ResidualTooLarge(_) => 5,
        CoreError::BadFit(_) | CoreError::ComplexSplitting { .. } => 6,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| e.to_string())
        }
    }
}

fn lab_config(cfg: &RunConfig) -> LabConfig {
    LabConfig {
        grid_multiplier: cfg.grid.multiplier,
        box_half_width: cfg.grid.box_half_width,
        basis: cfg.solver.basis,
        max_restarts: cfg.solver.max_restarts,
        residual_tol: cfg.solver.residual_tol,
        window_b: cfg.solver.window_b,
        seed: cfg.seed,
    }
}

/// Write-temp-then-rename so reruns never expose partial files.
fn write_atomic(dir: &str, name: &str, contents: &str) -> Result<(), CoreError> {
    std::fs::create_dir_all(dir)?;
    let path = Path::new(dir).join(name);
    let tmp = Path::new(dir).join(format!("{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &str, name: &str, value: &T) -> Result<(), CoreError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(dir, name, &text)
}

fn run(
    command: &Command,
    cfg: &RunConfig,
    h_flag: Option<f64>,
    degree_flag: Option<usize>,
) -> Result<(), CoreError> {
    let model = cfg.resolve_model()?;
    match command {
        Command::Analyze => cmd_analyze(cfg, &model),
        Command::Check => cmd_check(cfg, &model),
        Command::Spectrum => {
            let h = h_flag.unwrap_or_else(|| cfg.sweep.h[cfg.sweep.h.len() - 1]);
            cmd_spectrum(cfg, &model, h, degree_flag.unwrap_or(0))
        }
        Command::Splitting => cmd_splitting(cfg, &model),
        Command::ComplexVerify { dump } => {
            let h = h_flag.unwrap_or(0.1);
            cmd_complex_verify(cfg, &model, h, *dump)
        }
        Command::Resolvent => {
            let h = h_flag.unwrap_or(0.1);
            cmd_resolvent(cfg, &model, h)
        }
    }
}

#[derive(Serialize)]
struct CriticalPointRow {
    location: Vec<f64>,
    value: f64,
    index: usize,
    hessian_eigenvalues: Vec<f64>,
    fundamental_eigenvalues: Vec<[f64; 2]>,
    tr_tilde: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    model: String,
    critical_points: Vec<CriticalPointRow>,
    actions: [f64; 2],
    s_min: f64,
    shallow_well: usize,
    escape_epsilons: Vec<f64>,
    lattices: Vec<kfp_core::symbols::MuLattice>,
}

fn cmd_analyze(cfg: &RunConfig, model: &ModelSpec) -> Result<(), CoreError> {
    model.validate()?;
    let points = find_critical_points(model, SearchBox::default(), 8)?;
    let wells = classify_landscape(&points)?;
    let mut rows = Vec::new();
    let mut eps = Vec::new();
    for cp in &points {
        let lam = fundamental_eigs(model, cp)?;
        let (_, _, e) = escape_form(model, cp)?;
        eps.push(e);
        rows.push(CriticalPointRow {
            location: cp.location.clone(),
            value: cp.value,
            index: cp.index,
            hessian_eigenvalues: cp.hessian.eigenvalues(),
            fundamental_eigenvalues: lam.iter().map(|z| [z.re, z.im]).collect(),
            tr_tilde: tr_tilde(&lam),
        });
    }
    let lattices = lattice_report(model, &points, 0, cfg.solver.window_b)?;
    let report = AnalyzeReport {
        model: model.name.clone(),
        critical_points: rows,
        actions: wells.actions,
        s_min: wells.s_min,
        shallow_well: wells.shallow,
        escape_epsilons: eps,
        lattices,
    };
    write_json(&cfg.out_dir, "analyze.json", &report)?;
    println!(
        "{}: S = ({:.6}, {:.6}), S_min = {:.6}",
        model.name, wells.actions[0], wells.actions[1], wells.s_min
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckReport {
    model: String,
    t0: f64,
    ny17: Vec<Ny17Row>,
    ny19_ny20: kfp_core::hypotheses::AverageReport,
    defaults_used: bool,
}

#[derive(Serialize)]
struct Ny17Row {
    location: Vec<f64>,
    certified_c: f64,
    min_eigenvalue: f64,
}

fn cmd_check(cfg: &RunConfig, model: &ModelSpec) -> Result<(), CoreError> {
    let points = find_critical_points(model, SearchBox::default(), 8)?;
    let hy = &cfg.hypotheses;
    let mut ny17 = Vec::new();
    for cp in &points {
        let (form, c) = check_ny17(model, cp, hy.t0)?;
        let min_eig = form.eigenvalues()[0];
        ny17.push(Ny17Row {
            location: cp.location.clone(),
            certified_c: c,
            min_eigenvalue: min_eig,
        });
    }
    let samples = default_sample_ring(&points, hy.ring_radius, hy.exclusion, hy.samples_per_ring);
    let report = check_ny19_ny20(model, &samples, hy.t0, hy.threshold)?;
    write_atomic(&cfg.out_dir, "averages.csv", &report.to_csv())?;
    let out = CheckReport {
        model: model.name.clone(),
        t0: hy.t0,
        ny17,
        ny19_ny20: report,
        defaults_used: true,
    };
    write_json(&cfg.out_dir, "hypotheses.json", &out)?;
    println!("{}: hypothesis certificates pass (defaults used)", model.name);
    Ok(())
}

fn cmd_spectrum(
    cfg: &RunConfig,
    model: &ModelSpec,
    h: f64,
    degree: usize,
) -> Result<(), CoreError> {
    let lc = lab_config(cfg);
    let points = find_critical_points(model, SearchBox::default(), 8)?;
    let complex = lab::assemble_for(model, h, &lc)?;
    let lattice = model_lattice(model, &points, degree, cfg.solver.window_b * 0.95)?;
    let count = lattice.len() + 2;
    let (spec, pairs) = low_spectrum(&complex, degree, count, &lattice, &lc)?;
    let matched = match_lattice(&spec, &lattice);
    write_atomic(&cfg.out_dir, "spectrum.csv", &lab::spectrum_csv(&spec, &matched))?;
    #[derive(Serialize)]
    struct SpectrumReport {
        spectrum: lab::SpectrumResult,
        matching: lab::MatchReport,
    }
    write_json(
        &cfg.out_dir,
        "spectrum.json",
        &SpectrumReport { spectrum: spec, matching: matched },
    )?;
    let _ = pairs;
    println!("{}: degree-{degree} spectrum at h = {h} written", model.name);
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    slope: f64,
    slope_target: f64,
    prefactor: f64,
    r2: f64,
    pass: bool,
}

fn cmd_splitting(cfg: &RunConfig, model: &ModelSpec) -> Result<(), CoreError> {
    let lc = lab_config(cfg);
    let points = find_critical_points(model, SearchBox::default(), 8)?;
    let wells = classify_landscape(&points)?;
    let mut table: Vec<(f64, f64)> = Vec::new();
    let mut hs = cfg.sweep.h.clone();
    hs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &h in &hs {
        let complex = lab::assemble_for(model, h, &lc)?;
        let (mu1, _) = splitting_value(&complex, &lc)?;
        table.push((h, mu1));
    }
    write_atomic(&cfg.out_dir, "splitting.csv", &lab::splitting_csv(&table))?;
    let slope_target = 2.0 * wells.s_min;
    let fit = fit_splitting(&table)?;
    let pass = fit.pass;
    let report = FitReport {
        slope: fit.slope,
        slope_target,
        prefactor: fit.prefactor,
        r2: fit.r_squared,
        pass,
    };
    write_json(&cfg.out_dir, "fit.json", &report)?;
    let interaction = predict_prefactor(model, &wells, cfg.prefactor_r0)?;
    write_json(&cfg.out_dir, "interaction.json", &interaction)?;
    println!(
        "{}: slope {:.6} (target {:.6}), prefactor {:.6}, R^2 {:.6}",
        model.name, fit.slope, slope_target, fit.prefactor, fit.r_squared
    );
    Ok(())
}

fn cmd_complex_verify(
    cfg: &RunConfig,
    model: &ModelSpec,
    h: f64,
    dump: bool,
) -> Result<(), CoreError> {
    let lc = lab_config(cfg);
    let grid = grid_for(model.dim, h, &lc);
    let complex = assemble_complex(&grid, model, h)?;
    let report = complex.verify(cfg.seed);
    // adjoint symmetry against the transposed structure matrix
    let mt = ModelSpec::new_unchecked(
        format!("{}-transposed", model.name),
        model.phi.clone(),
        model.a.transpose(),
    );
    let ct = assemble_complex(&grid, &mt, h)?;
    let adjoint_defect = adjoint_symmetry_check(&complex, &ct);
    #[derive(Serialize)]
    struct VerifyOut {
        report: kfp_core::complex::ComplexVerifyReport,
        adjoint_defect: f64,
        adjoint_defect_rel: f64,
    }
    let scale = complex.lap0.max_abs();
    write_json(
        &cfg.out_dir,
        "complex_verify.json",
        &VerifyOut {
            adjoint_defect,
            adjoint_defect_rel: adjoint_defect / scale,
            report: report.clone(),
        },
    )?;
    if dump {
        write_atomic(&cfg.out_dir, "lap0.txt", &complex.lap0.to_triplet_text())?;
        write_atomic(&cfg.out_dir, "d0.txt", &complex.d0.to_triplet_text())?;
        write_atomic(&cfg.out_dir, "d1.txt", &complex.d1.to_triplet_text())?;
    }
    println!(
        "{}: d1d0 {:.3e}, kernel {:.3e}, accretivity {:.3e}, pass {}",
        model.name, report.d1d0_rel, report.kernel_rel, report.accretivity_min, report.pass
    );
    if !report.pass {
        return Err(CoreError::InvalidModel("structural verification failed".into()));
    }
    Ok(())
}

fn cmd_resolvent(cfg: &RunConfig, model: &ModelSpec, h: f64) -> Result<(), CoreError> {
    let lc = lab_config(cfg);
    let points = find_critical_points(model, SearchBox::default(), 8)?;
    let complex = lab::assemble_for(model, h, &lc)?;
    let lattice = model_lattice(model, &points, 0, cfg.solver.window_b * 0.95)?;
    let (spec, _) = low_spectrum(&complex, 0, lattice.len() + 2, &lattice, &lc)?;
    let spectrum: Vec<Complex64> = spec
        .eigenvalues
        .iter()
        .map(|r| Complex64::new(r.re, r.im))
        .collect();
    // eight probes on |z| = window_b * h, kept clear of the spectrum
    let radius = cfg.solver.window_b * h;
    let mut zs = Vec::new();
    let mut k = 0usize;
    while zs.len() < 8 && k < 64 {
        let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 16.0;
        let z = Complex64::new(radius * t.cos(), radius * t.sin());
        if spectrum.iter().all(|s| (s - z).norm() >= h / 10.0) {
            zs.push(z);
        }
        k += 1;
    }
    let rows = resolvent_probe(&complex, &zs, &spectrum, 10.0)?;
    let mut csv = String::from("z_re,z_im,sigma_min,estimate,h_estimate\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.z_re, r.z_im, r.sigma_min, r.estimate, r.h_estimate
        ));
    }
    write_atomic(&cfg.out_dir, "resolvent.csv", &csv)?;
    let worst = rows.iter().map(|r| r.h_estimate).fold(0.0f64, f64::max);
    println!("{}: max h ||(z-P)^-1|| = {worst:.6} over {} probes", model.name, rows.len());
    Ok(())
}
