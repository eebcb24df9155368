use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use whitham_core::kdv::{self, ProfileKind};
use whitham_core::model::{verify_model, ModelConfig, SymbolModel, DEFAULT_SAMPLES};
use whitham_core::solver::{
    self, continue_in_eps, limit_profile, newton_solve, phi_residual, unscale, Mode, SolveConfig,
    SolverError, WaveSolution,
};
use whitham_core::spectral::{ddx, l2_inner, l2_norm, PeriodicGrid, SpectralField};
use whitham_core::stability::{
    stability_report, StabilityError, StabilityOptions, StabilityReport, Subspace, Verdict,
};

use crate::output::{csv_table, fmt_f64, read_csv, read_json, sha256_hex, ModelSource, Run};
use crate::{
    ContinueArgs, GridArgs, LimitArgs, ModelArgs, NewtonArgs, Preset, ReproduceArgs, ReproduceMode,
    SolveArgs, StabilityArgs, VerifyArgs,
};

/// A numerical result that contradicts what was expected (exit status 1).
#[derive(Debug)]
pub struct Scientific(pub String);

impl fmt::Display for Scientific {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Scientific {}

fn science(e: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Scientific(e.to_string()))
}

fn solver_error(e: SolverError) -> anyhow::Error {
    match e {
        SolverError::InvalidConfig(_) | SolverError::GuessGrid | SolverError::GuessNotEven(_) => {
            anyhow!(e)
        }
        other => science(other),
    }
}

fn stability_error(e: StabilityError) -> anyhow::Error {
    match e {
        StabilityError::BadShift(_) => anyhow!(e),
        other => science(other),
    }
}

pub enum Status {
    Success,
    Failed(String),
}

fn preset_text(p: Preset) -> &'static str {
    match p {
        Preset::Whitham => include_str!("../models/whitham.toml"),
        Preset::Kdv => include_str!("../models/kdv.toml"),
        Preset::Anti => include_str!("../models/anti.toml"),
    }
}

struct Loaded {
    model: SymbolModel,
    config: ModelConfig,
    /// Directory that relative table paths resolve against.
    base_dir: Option<PathBuf>,
    source: ModelSource,
}

fn load_config(args: &ModelArgs) -> Result<(ModelConfig, Option<PathBuf>, String, Vec<u8>)> {
    match &args.model {
        Some(path) => {
            if !path.is_file() {
                bail!("model file not found: {}", path.display());
            }
            let bytes =
                fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
            let text = String::from_utf8(bytes.clone())
                .with_context(|| format!("{} is not UTF-8", path.display()))?;
            let config = ModelConfig::from_toml_str(&text)
                .with_context(|| format!("in {}", path.display()))?;
            let dir = path
                .canonicalize()
                .ok()
                .and_then(|p| p.parent().map(Path::to_path_buf));
            Ok((config, dir, path.display().to_string(), bytes))
        }
        None => {
            let text = preset_text(args.preset);
            let config = ModelConfig::from_toml_str(text)?;
            let name = format!("preset:{}", config.name.as_deref().unwrap_or("?"));
            Ok((config, None, name, text.as_bytes().to_vec()))
        }
    }
}

fn build(
    config: ModelConfig,
    base_dir: Option<PathBuf>,
    source: String,
    bytes: &[u8],
) -> Result<Loaded> {
    let model = config.build(base_dir.as_deref())?;
    Ok(Loaded {
        source: ModelSource {
            name: model.name(),
            source,
            sha256: sha256_hex(bytes),
        },
        model,
        config,
        base_dir,
    })
}

fn load(args: &ModelArgs) -> Result<Loaded> {
    let (config, dir, source, bytes) = load_config(args)?;
    build(config, dir, source, &bytes)
}

fn solve_config(eps: f64, grid: &GridArgs, newton: &NewtonArgs) -> Result<SolveConfig> {
    let cfg = SolveConfig {
        eps,
        mode: grid.mode.into(),
        half_period: grid.half_period,
        n_points: grid.modes,
        newton_tol: newton.newton_tol,
        max_iter: newton.max_iter,
        damping: newton.damping,
        linear_solver: newton.linear_solver.into(),
        dealias: newton.dealias,
    };
    cfg.validate().map_err(solver_error)?;
    Ok(cfg)
}

pub fn verify(a: VerifyArgs) -> Result<Status> {
    let (mut config, dir, source, bytes) = load_config(&a.model)?;
    if a.k_star.is_some() {
        config.symbol.k_star = a.k_star;
    }
    if a.k_max.is_some() {
        config.symbol.k_max = a.k_max;
    }
    let loaded = build(config, dir, source, &bytes)?;
    let mut run = Run::new(
        &a.out,
        "verify",
        json!({ "samples": a.samples, "k_star": a.k_star, "k_max": a.k_max }),
    );
    run.set_model(loaded.source.clone());
    let report = verify_model(&loaded.model, a.samples)?;
    run.stage("verify");
    for c in &report.checks {
        println!(
            "{} {:<28} {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    match report.gamma {
        Some(g) => println!("gamma = {g:.12}"),
        None => println!("gamma undefined"),
    }
    run.verdict(if report.passed() { "passed" } else { "failed" });
    run.write_json("_verify.json", &report)?;
    run.finish()?;
    Ok(if report.passed() {
        Status::Success
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Status::Failed(format!("hypotheses not satisfied: {}", names.join(", ")))
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalMeta {
    pub period: f64,
    pub amplitude: f64,
    pub residual: f64,
}

/// Everything needed to reload a solution next to its profile CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub model: ModelConfig,
    pub model_dir: Option<PathBuf>,
    pub model_sha256: String,
    pub config: SolveConfig,
    pub eps: f64,
    pub nu: f64,
    pub mode: Mode,
    pub residual: f64,
    pub newton_tol: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub parity_defect: f64,
    pub spectral_tail: f64,
    pub decay_check: Option<f64>,
    pub physical: PhysicalMeta,
    pub slope: Option<f64>,
    /// File name of the profile CSV, relative to this file.
    pub profile: String,
}

fn write_solution(
    run: &mut Run,
    suffix: &str,
    loaded: &Loaded,
    cfg: &SolveConfig,
    sol: &WaveSolution,
    slope: Option<f64>,
) -> Result<PathBuf> {
    let phys = unscale(&loaded.model, sol).map_err(solver_error)?;
    let eps2 = sol.eps * sol.eps;
    let rows = sol
        .grid()
        .nodes()
        .into_iter()
        .zip(sol.field.values())
        .map(|(x, &w)| vec![fmt_f64(x), fmt_f64(w), fmt_f64(eps2 * w)]);
    let profile = run.write(
        &format!("{suffix}_profile.csv"),
        &csv_table(&["x", "W", "u_physical"], rows),
    )?;
    let meta = SolutionMeta {
        model: loaded.config.clone(),
        model_dir: loaded.base_dir.clone(),
        model_sha256: loaded.source.sha256.clone(),
        config: cfg.with_eps(sol.eps),
        eps: sol.eps,
        nu: sol.nu,
        mode: sol.mode,
        residual: sol.residual_sup,
        newton_tol: sol.newton_tol,
        iterations: sol.iterations,
        residual_history: sol.residual_history.clone(),
        parity_defect: sol.parity_defect,
        spectral_tail: sol.spectral_tail,
        decay_check: sol.decay,
        physical: PhysicalMeta {
            period: phys.period,
            amplitude: phys.amplitude,
            residual: phys.residual,
        },
        slope,
        profile: profile
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    run.write_json(&format!("{suffix}_meta.json"), &meta)
}

fn print_solution(sol: &WaveSolution) {
    println!(
        "eps = {}  nu = {:.15}  residual = {:.3e}  iterations = {}  max W = {:.12}",
        sol.eps,
        sol.nu,
        sol.residual_sup,
        sol.iterations,
        sol.field.max_abs()
    );
}

pub fn solve(a: SolveArgs) -> Result<Status> {
    let cfg = solve_config(a.eps, &a.grid, &a.newton)?;
    let loaded = load(&a.model)?;
    let mut run = Run::new(&a.out, "solve", serde_json::to_value(&cfg)?);
    run.set_model(loaded.source.clone());
    let grid = cfg.grid().map_err(solver_error)?;
    let guess = limit_profile(&loaded.model, cfg.mode, &grid).map_err(solver_error)?;
    run.stage("limit profile");
    let sol = newton_solve(&loaded.model, &cfg, &guess.field).map_err(solver_error)?;
    run.stage("newton");
    print_solution(&sol);
    let meta = write_solution(&mut run, "", &loaded, &cfg, &sol, None)?;
    run.verdict("converged");
    run.finish()?;
    println!("wrote {}", meta.display());
    Ok(Status::Success)
}

#[derive(Debug, Serialize)]
struct ContinuationSummary {
    mode: Mode,
    eps: Vec<f64>,
    deviations: Vec<f64>,
    slope: Option<f64>,
    incomplete: bool,
    failure: Option<String>,
    limit_residual: f64,
}

pub fn continuation(a: ContinueArgs) -> Result<Status> {
    let first = a.eps_ladder.first().copied().unwrap_or(0.1);
    let cfg = solve_config(first, &a.grid, &a.newton)?;
    let loaded = load(&a.model)?;
    let mut run = Run::new(
        &a.out,
        "continue",
        json!({ "base": cfg, "eps_ladder": a.eps_ladder }),
    );
    run.set_model(loaded.source.clone());
    let branch = continue_in_eps(&loaded.model, &a.eps_ladder, &cfg).map_err(solver_error)?;
    run.stage("continuation");
    for (sol, d) in branch.solutions.iter().zip(&branch.deviations) {
        print_solution(sol);
        println!("    H1 distance to limit profile {d:.6e}");
        write_solution(
            &mut run,
            &format!("_eps{}", sol.eps),
            &loaded,
            &cfg,
            sol,
            branch.slope,
        )?;
    }
    if let Some(s) = branch.slope {
        println!("fitted slope {s:.6}");
    }
    run.write_json(
        "_continuation.json",
        &ContinuationSummary {
            mode: branch.mode,
            eps: branch.solutions.iter().map(|s| s.eps).collect(),
            deviations: branch.deviations.clone(),
            slope: branch.slope,
            incomplete: branch.incomplete,
            failure: branch.failure.clone(),
            limit_residual: branch.limit.residual,
        },
    )?;
    run.verdict(if branch.incomplete {
        "incomplete"
    } else {
        "complete"
    });
    run.finish()?;
    Ok(match branch.failure {
        Some(f) => Status::Failed(format!("continuation stopped at {f}")),
        None => Status::Success,
    })
}

/// Reloads a solution and re-checks its residual from scratch.
fn load_solution(meta_path: &Path) -> Result<(SymbolModel, SolutionMeta, WaveSolution)> {
    if !meta_path.is_file() {
        bail!("solution file not found: {}", meta_path.display());
    }
    let meta: SolutionMeta = read_json(meta_path)?;
    let model = meta.model.build(meta.model_dir.as_deref())?;
    let profile_path = meta_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&meta.profile);
    let (header, cols) = read_csv(&profile_path)?;
    if header.len() < 2 || header[0] != "x" || header[1] != "W" {
        bail!(
            "{}: expected columns x,W[,u_physical]",
            profile_path.display()
        );
    }
    meta.config.validate().map_err(solver_error)?;
    let grid = meta.config.grid().map_err(solver_error)?;
    if cols[0].len() != grid.len() {
        bail!(
            "{}: {} rows but the grid has {} points",
            profile_path.display(),
            cols[0].len(),
            grid.len()
        );
    }
    let drift = grid
        .nodes()
        .iter()
        .zip(&cols[0])
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    if drift > 1e-12 * grid.half_period() {
        bail!(
            "{}: x column does not match the grid",
            profile_path.display()
        );
    }
    let field = SpectralField::new(&grid, cols[1].clone())?;
    let residual = phi_residual(&model, meta.eps, &field)
        .map_err(solver_error)?
        .max_abs();
    if !(residual <= meta.newton_tol) {
        return Err(science(format!(
            "stored profile is not a converged solution: residual {residual:.3e} > {:.1e}",
            meta.newton_tol
        )));
    }
    let sol = WaveSolution {
        model_name: model.name(),
        eps: meta.eps,
        nu: model.nu(meta.eps),
        mode: meta.mode,
        parity_defect: field.odd_part_sup(),
        spectral_tail: solver::spectral_tail(&field),
        field,
        residual_sup: residual,
        newton_tol: meta.newton_tol,
        iterations: meta.iterations,
        residual_history: meta.residual_history.clone(),
        decay: meta.decay_check,
    };
    Ok((model, meta, sol))
}

fn default_subspace(mode: Mode) -> Subspace {
    match mode {
        Mode::Solitary => Subspace::Whole,
        Mode::Periodic => Subspace::ZeroMean,
    }
}

pub fn stability(a: StabilityArgs) -> Result<Status> {
    if !(a.mu > 0.0 && a.mu.is_finite()) {
        bail!("--mu must be positive, got {}", a.mu);
    }
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    let (model, meta, sol) = load_solution(&a.solution)?;
    let prefix = match a.out {
        Some(p) => p,
        None => {
            let s = a.solution.to_string_lossy();
            PathBuf::from(s.strip_suffix("_meta.json").unwrap_or(&s).to_string())
        }
    };
    let opts = StabilityOptions {
        count: a.count,
        mu: a.mu,
        seed: a.seed,
        resolvent_check: true,
        full_spectrum: a.full_spectrum.then(|| default_subspace(sol.mode)),
    };
    let mut run = Run::new(
        &prefix,
        "stability",
        json!({ "solution": a.solution, "options": opts }),
    );
    run.set_model(ModelSource {
        name: model.name(),
        source: a.solution.display().to_string(),
        sha256: meta.model_sha256.clone(),
    });
    let report = stability_report(&model, &sol, &opts).map_err(stability_error)?;
    run.stage("stability");
    print_report(&report);
    run.verdict(report.verdict.label());
    run.write_json("_stability.json", &report)?;
    let rows = report
        .eigenvalues
        .iter()
        .zip(&report.parities)
        .enumerate()
        .map(|(i, (v, p))| vec![i.to_string(), fmt_f64(*v), format!("{p:?}").to_lowercase()]);
    run.write(
        "_spectrum.csv",
        &csv_table(&["index", "eigenvalue", "parity"], rows),
    )?;
    if let Some(f) = &report.full_spectrum {
        let rows = f
            .eigenvalues
            .iter()
            .map(|&(re, im)| vec![fmt_f64(re), fmt_f64(im)]);
        run.write("_full_spectrum.csv", &csv_table(&["re", "im"], rows))?;
    }
    run.finish()?;
    Ok(match report.verdict {
        Verdict::SpectrallyStable => Status::Success,
        v => Status::Failed(format!("{}: {}", v.label(), report.diagnostics.join("; "))),
    })
}

fn print_report(r: &StabilityReport) {
    println!("eps = {}  mode = {}", r.eps, r.mode.label());
    for (i, v) in r.eigenvalues.iter().enumerate() {
        println!("  lambda{i:<2} {v:+.12e}  {:?}", r.parities[i]);
    }
    println!(
        "morse index {}  kernel dim {}  kernel alignment {:.9}",
        r.morse_index, r.kernel_dim, r.kernel_alignment
    );
    println!(
        "VK {:.9e}  eps^2 VK {:.9}  leading-order eps^2 VK {:.9}",
        r.vk_value,
        r.vk_scaled,
        r.vk_asymptote * r.eps * r.eps
    );
    if let Some(c) = &r.resolvent {
        println!("resolvent difference (mu = {}) {:.6e}", c.mu, c.value);
    }
    if let Some(f) = &r.full_spectrum {
        println!(
            "full spectrum: max Re {:.3e}  quadruple defect {:.3e}{}",
            f.max_real,
            f.quadruple_defect,
            if f.max_real > 1e-7 {
                "  (advisory: above 1e-7)"
            } else {
                ""
            }
        );
    }
    println!(
        "verdict {}  k_unstable <= {}",
        r.verdict.label(),
        r.k_unstable_bound
    );
    for d in &r.diagnostics {
        println!("  {d}");
    }
}

#[derive(Debug, Serialize)]
struct LimitSummary {
    gamma: f64,
    kind: ProfileKind,
    half_period: f64,
    n_points: usize,
    residual: f64,
    iterations: usize,
    eigenvalues: Vec<f64>,
    kernel_alignment: f64,
    vk_numeric: f64,
    vk_closed_form: Option<f64>,
    k_min_singular_value: f64,
}

pub fn limit(a: LimitArgs) -> Result<Status> {
    let gamma = match a.gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => bail!("--gamma must be positive, got {g}"),
        None => {
            let loaded = load(&a.model)?;
            loaded.model.gamma().map_err(science)?
        }
    };
    let grid = PeriodicGrid::new(a.half_period, a.modes)?;
    let mut run = Run::new(
        &a.out,
        "limit",
        json!({ "gamma": gamma, "mode": format!("{:?}", a.mode).to_lowercase(),
                "half_period": a.half_period, "modes": a.modes }),
    );
    let profile = match Mode::from(a.mode) {
        Mode::Solitary => kdv::sigma(gamma, &grid),
        Mode::Periodic => kdv::solve_cnoidal(gamma, &grid, 1e-11),
    }
    .map_err(|e| {
        science(format!(
            "no limit profile with half-period {}: {e}",
            a.half_period
        ))
    })?;
    run.stage("profile");
    let op = kdv::limit_operator(&profile);
    let pairs = op.lowest_eigenpairs(3, true).map_err(science)?;
    let dphi = ddx(&profile.field);
    let kernel_alignment = pairs
        .iter()
        .min_by(|x, y| x.value.abs().total_cmp(&y.value.abs()))
        .and_then(|p| p.vector.as_ref())
        .map(|v| l2_inner(v, &dphi).unwrap_or(0.0).abs() / (l2_norm(v) * l2_norm(&dphi)))
        .unwrap_or(0.0);
    let vk_numeric = kdv::vk_limit_numeric(&profile).map_err(science)?;
    let summary = LimitSummary {
        gamma,
        kind: profile.kind,
        half_period: a.half_period,
        n_points: a.modes,
        residual: profile.residual,
        iterations: profile.iterations,
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        kernel_alignment,
        vk_numeric,
        vk_closed_form: (profile.kind == ProfileKind::Solitary)
            .then(|| kdv::vk_limit_closed_form(gamma)),
        k_min_singular_value: kdv::k_operator_min_singular(&profile),
    };
    run.stage("spectrum");
    println!("gamma = {gamma}  profile residual {:.3e}", summary.residual);
    println!("limit eigenvalues {:.9?}", summary.eigenvalues);
    println!("<L^-1 p, p> = {:.12} (numeric)", summary.vk_numeric);
    if let Some(c) = summary.vk_closed_form {
        println!("<L^-1 p, p> = {c:.12} (closed form)");
    }
    println!(
        "smallest singular value of K (even block) {:.9}",
        summary.k_min_singular_value
    );
    let rows = grid
        .nodes()
        .into_iter()
        .zip(profile.values())
        .map(|(x, &v)| vec![fmt_f64(x), fmt_f64(v)]);
    run.write("_limit_profile.csv", &csv_table(&["x", "value"], rows))?;
    run.write_json("_limit.json", &summary)?;
    run.verdict("computed");
    run.finish()?;
    Ok(Status::Success)
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    mode: Mode,
    eps: f64,
    nu: f64,
    h1_deviation: f64,
    lambda: [f64; 3],
    eps2_vk: f64,
    verdict: Verdict,
    k_unstable_bound: i64,
}

#[derive(Debug, Serialize)]
struct CriterionResult {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct ReproduceSummary {
    gamma: Option<f64>,
    slopes: Vec<(Mode, Option<f64>)>,
    rows: Vec<SummaryRow>,
    criteria: Vec<CriterionResult>,
}

pub fn reproduce(a: ReproduceArgs) -> Result<Status> {
    let loaded = load(&ModelArgs {
        model: None,
        preset: Preset::Whitham,
    })?;
    let model = &loaded.model;
    let modes: Vec<Mode> = match a.mode {
        ReproduceMode::Solitary => vec![Mode::Solitary],
        ReproduceMode::Periodic => vec![Mode::Periodic],
        ReproduceMode::Both => vec![Mode::Solitary, Mode::Periodic],
    };
    let mut criteria = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        criteria.push(CriterionResult {
            name: name.into(),
            passed,
            detail,
        });
    };
    let mut run = Run::new(
        &a.out,
        "reproduce",
        json!({ "modes": modes, "eps_ladder": a.eps_ladder, "half_period": a.half_period,
                "n_points": a.modes, "seed": a.seed }),
    );
    run.set_model(loaded.source.clone());

    let report = verify_model(model, DEFAULT_SAMPLES)?;
    let gamma = report.gamma;
    check(
        "hypotheses",
        report.passed() && gamma.is_some_and(|g| (g - 6.0).abs() <= 1e-6),
        format!("gamma = {gamma:?}"),
    );
    run.stage("verify");

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &mode in &modes {
        let base = SolveConfig {
            mode,
            half_period: a.half_period,
            n_points: a.modes,
            eps: a.eps_ladder.first().copied().unwrap_or(0.1),
            ..SolveConfig::default()
        };
        base.validate().map_err(solver_error)?;
        let branch = continue_in_eps(model, &a.eps_ladder, &base).map_err(solver_error)?;
        run.stage(&format!("continue {}", mode.label()));
        check(
            &format!("{} ladder converges", mode.label()),
            !branch.incomplete,
            branch
                .failure
                .clone()
                .unwrap_or_else(|| format!("{} rungs", branch.solutions.len())),
        );
        slopes.push((mode, branch.slope));
        if let Some(s) = branch.slope {
            check(
                &format!("{} eps^2 rate", mode.label()),
                (s - 2.0).abs() <= 0.2,
                format!("slope {s:.4}"),
            );
        }
        let opts = StabilityOptions {
            seed: a.seed,
            ..StabilityOptions::default()
        };
        let reports: Vec<Result<StabilityReport, StabilityError>> = branch
            .solutions
            .par_iter()
            .map(|s| stability_report(model, s, &opts))
            .collect();
        run.stage(&format!("stability {}", mode.label()));
        for ((sol, dev), rep) in branch.solutions.iter().zip(&branch.deviations).zip(reports) {
            let rep = rep.map_err(stability_error)?;
            let l = |i: usize| rep.eigenvalues.get(i).copied().unwrap_or(f64::NAN);
            check(
                &format!("{} eps = {} stable", mode.label(), sol.eps),
                rep.vk_value < 0.0
                    && rep.verdict == Verdict::SpectrallyStable
                    && rep.k_unstable_bound == 0,
                format!(
                    "{}, k_unstable <= {}, VK {:.4e}",
                    rep.verdict.label(),
                    rep.k_unstable_bound,
                    rep.vk_value
                ),
            );
            if (sol.eps - 0.05).abs() < 1e-12 {
                let ok = (l(0) + 5.0 / 24.0).abs() <= 0.01
                    && l(1).abs() <= 1e-6
                    && (l(2) - 0.125).abs() <= 0.01
                    && rep.kernel_alignment > 0.999;
                check(
                    &format!("{} eigenvalue asymptotics", mode.label()),
                    ok,
                    format!("lambda {:.6} {:.2e} {:.6}", l(0), l(1), l(2)),
                );
                check(
                    &format!("{} VK asymptotics", mode.label()),
                    (rep.vk_scaled + 0.75).abs() <= 0.05 * 0.75,
                    format!("eps^2 VK {:.6}", rep.vk_scaled),
                );
            }
            rows.push(SummaryRow {
                mode,
                eps: sol.eps,
                nu: sol.nu,
                h1_deviation: *dev,
                lambda: [l(0), l(1), l(2)],
                eps2_vk: rep.vk_scaled,
                verdict: rep.verdict,
                k_unstable_bound: rep.k_unstable_bound,
            });
        }
    }

    let with_slope = a.eps_ladder.len() >= 2;
    let mut header = vec![
        "mode",
        "eps",
        "nu",
        "h1_deviation",
        "lambda0",
        "lambda1",
        "lambda2",
        "eps2_vk",
        "verdict",
    ];
    if with_slope {
        header.push("slope");
    }
    println!();
    println!(
        "{:<9} {:>7} {:>18} {:>12} {:>12} {:>10} {:>12} {:>10}  verdict",
        "mode", "eps", "nu", "|W-p|_H1", "lambda0", "lambda1", "lambda2", "eps^2 VK"
    );
    let mut csv_rows = Vec::new();
    for r in &rows {
        println!(
            "{:<9} {:>7} {:>18.15} {:>12.5e} {:>12.8} {:>10.2e} {:>12.8} {:>10.6}  {}",
            r.mode.label(),
            r.eps,
            r.nu,
            r.h1_deviation,
            r.lambda[0],
            r.lambda[1],
            r.lambda[2],
            r.eps2_vk,
            r.verdict.label()
        );
        let mut row = vec![
            r.mode.label().to_string(),
            fmt_f64(r.eps),
            fmt_f64(r.nu),
            fmt_f64(r.h1_deviation),
            fmt_f64(r.lambda[0]),
            fmt_f64(r.lambda[1]),
            fmt_f64(r.lambda[2]),
            fmt_f64(r.eps2_vk),
            r.verdict.label().to_string(),
        ];
        if with_slope {
            let s = slopes
                .iter()
                .find(|(m, _)| *m == r.mode)
                .and_then(|(_, s)| *s);
            row.push(s.map(fmt_f64).unwrap_or_default());
        }
        csv_rows.push(row);
    }
    for (m, s) in &slopes {
        if let Some(s) = s {
            println!("{} slope {s:.6}", m.label());
        }
    }
    run.write("_summary.csv", &csv_table(&header, csv_rows))?;
    let first_failure = criteria.iter().find(|c| !c.passed).map(|c| c.name.clone());
    run.write_json(
        "_summary.json",
        &ReproduceSummary {
            gamma,
            slopes,
            rows,
            criteria,
        },
    )?;
    run.verdict(match &first_failure {
        Some(name) => format!("failed: {name}"),
        None => "all criteria passed".into(),
    });
    run.finish()?;
    Ok(match first_failure {
        Some(name) => Status::Failed(format!("criterion failed: {name}")),
        None => Status::Success,
    })
}
