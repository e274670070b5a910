use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use detequiv_core::capacity::{
    capacity_closed_form, capacity_csv, capacity_quadrature, noiseless_capacity, CapacityReport,
};
use detequiv_core::io::{read_matrix_csv, read_real_matrix_csv};
use detequiv_core::model::{
    block_example_model, build_model, dx_model, gaussian_field_model, separable_model, ModelOrigin,
    ModelSpec,
};
use detequiv_core::montecarlo::{
    block_demo, mc_stieltjes_gap, reports_csv, Distribution, SampleConfig,
};
use detequiv_core::numerics::CMatrix;
use detequiv_core::solver::{self, SolverConfig};
use detequiv_core::spectral::{self, density_estimate, moment_consistency, mp_reference_stieltjes};
use detequiv_core::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{
    CapacityChoice, CommandConfig, ModelConfig, RunConfig, SampleSettings, SchemaError, Tap,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Schema(#[from] SchemaError),
    #[error("{0}")]
    Library(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{summary}validation failed: {}", failed.join(", "))]
    Validation {
        failed: Vec<String>,
        summary: String,
    },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Library(e) => match e {
                Error::MaxIterExceeded { .. }
                | Error::ConvergenceFailure(_)
                | Error::QuadratureFailure { .. }
                | Error::SingularSystem(_)
                | Error::SingularMatrix { .. }
                | Error::NotPositiveDefinite => 2,
                _ => 3,
            },
            RunError::Schema(_) | RunError::Io { .. } => 3,
            RunError::Validation { .. } => 4,
        }
    }
}

pub fn build(model: &ModelConfig) -> Result<ModelSpec, Error> {
    match model {
        ModelConfig::Explicit {
            field,
            profile,
            centering,
        } => {
            let sigma = read_real_matrix_csv(profile)?;
            let a = match centering {
                Some(p) => read_matrix_csv(p)?,
                None => CMatrix::zeros(sigma.nrows(), sigma.ncols()),
            };
            build_model(sigma, a, *field)
        }
        ModelConfig::Separable {
            field,
            d,
            d_tilde,
            centering,
        } => {
            let a = match centering {
                Some(p) => read_matrix_csv(p)?,
                None => CMatrix::zeros(d.len(), d_tilde.len()),
            };
            separable_model(d, d_tilde, a, *field)
        }
        ModelConfig::GaussianField {
            rows,
            cols,
            taps,
            b,
        } => {
            let b = match b {
                Some(p) => read_matrix_csv(p)?,
                None => CMatrix::zeros(*rows, *cols),
            };
            gaussian_field_model(&tap_map(taps), &b, *rows, *cols)
        }
        ModelConfig::BlockExample { n, variant } => block_example_model(*n, *variant),
        ModelConfig::Dx { lambdas, cols } => dx_model(lambdas, *cols),
    }
}

/// Repeated taps add up.
fn tap_map(taps: &[Tap]) -> BTreeMap<(i64, i64), Complex64> {
    let mut map = BTreeMap::new();
    for t in taps {
        *map.entry((t.k1, t.k2)).or_insert(Complex64::new(0.0, 0.0)) += t.value;
    }
    map
}

/// Model of size `n` in the family of a scalable model config.
fn family_member(model: &ModelConfig, n: usize) -> Result<ModelSpec, Error> {
    match model {
        ModelConfig::BlockExample { variant, .. } => block_example_model(n, *variant),
        ModelConfig::GaussianField {
            rows,
            cols,
            taps,
            b: None,
        } => {
            let r = ((n * rows) as f64 / *cols as f64).round().max(1.0) as usize;
            gaussian_field_model(&tap_map(taps), &CMatrix::zeros(r, n), r, n)
        }
        _ => Err(Error::Precondition(format!(
            "model type {} has no size family",
            model.type_name()
        ))),
    }
}

fn sample_config(s: &SampleSettings, model: &ModelSpec) -> SampleConfig {
    SampleConfig {
        distribution: s
            .distribution
            .unwrap_or_else(|| Distribution::default_for(model.field())),
        seed: s.seed,
        trials: s.trials,
    }
}

/// Files written by a successful or validation-failing run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome, RunError> {
    config.solver.validate()?;
    let model = build(&config.model)?;
    let dir = &config.output;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut out = Writer {
        dir: dir.clone(),
        files: Vec::new(),
    };
    let mut summary = format!(
        "model: {} ({}x{}, {} field)\ncommand: {}\n",
        config.model.type_name(),
        model.rows(),
        model.cols(),
        model.field().name(),
        config.command.name()
    );
    let failed = match &config.command {
        CommandConfig::Solve { z } => {
            run_solve(&model, z, &config.solver, &mut out, &mut summary)?;
            Vec::new()
        }
        CommandConfig::Density {
            grid,
            eta,
            intervals,
        } => {
            let points = grid.points();
            let ivs = (!intervals.is_empty()).then_some(intervals.as_slice());
            let est = density_estimate(&model, &points, *eta, &config.solver, ivs)?;
            out.put("density.csv", &est.to_csv()?)?;
            writeln!(
                summary,
                "eta: {}\ngrid mass: {:.6}",
                est.eta,
                est.grid_mass()
            )
            .unwrap();
            for m in est.masses.iter().flatten() {
                writeln!(summary, "mass [{}, {}]: {:.8}", m.a, m.b, m.mass).unwrap();
            }
            Vec::new()
        }
        CommandConfig::Capacity {
            sigma2,
            method,
            quad_tol,
        } => {
            let mut reports: Vec<CapacityReport> = Vec::new();
            if matches!(method, CapacityChoice::ClosedForm | CapacityChoice::Both) {
                reports.extend(capacity_closed_form(&model, sigma2, &config.solver)?);
            }
            if matches!(method, CapacityChoice::Quadrature | CapacityChoice::Both) {
                for &s in sigma2 {
                    reports.push(capacity_quadrature(&model, s, *quad_tol, &config.solver)?);
                }
            }
            out.put("capacity.csv", &capacity_csv(&reports)?)?;
            for r in &reports {
                writeln!(
                    summary,
                    "capacity({}) [{}]: {:.10} nats",
                    r.sigma2,
                    r.method.name(),
                    r.value
                )
                .unwrap();
            }
            Vec::new()
        }
        CommandConfig::Validate { .. } => run_validate(config, &model, &mut out, &mut summary)?,
        CommandConfig::Demo { sample } => {
            let ModelConfig::BlockExample { n, .. } = config.model else {
                return Err(Error::Precondition("demo needs a block_example model".into()).into());
            };
            run_demo(
                n,
                &sample_config(sample, &model),
                &config.solver,
                &mut out,
                &mut summary,
            )?;
            Vec::new()
        }
    };
    if failed.is_empty() {
        summary.push_str("status: ok\n");
    } else {
        writeln!(summary, "status: failed ({})", failed.join(", ")).unwrap();
    }
    out.put("summary.txt", &summary)?;
    if failed.is_empty() {
        Ok(Outcome {
            files: out.files,
            summary,
        })
    } else {
        Err(RunError::Validation { failed, summary })
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn run_solve(
    model: &ModelSpec,
    zs: &[Complex64],
    config: &SolverConfig,
    out: &mut Writer,
    summary: &mut String,
) -> Result<(), RunError> {
    let mut rows = Vec::new();
    for &z in zs {
        let fp = solver::solve_light(model, z, config)?;
        let (m, mt) = (fp.m(), fp.m_tilde());
        writeln!(summary, "m({z}) = {m}  ({} iterations)", fp.iterations).unwrap();
        rows.push(vec![
            z.re.to_string(),
            z.im.to_string(),
            m.re.to_string(),
            m.im.to_string(),
            mt.re.to_string(),
            mt.im.to_string(),
            fp.iterations.to_string(),
            format!("{:e}", fp.residual),
        ]);
    }
    let header = [
        "z_re",
        "z_im",
        "m_re",
        "m_im",
        "m_tilde_re",
        "m_tilde_im",
        "iterations",
        "residual",
    ];
    out.put("solve.csv", &csv_text(&header, &rows))
}

struct Check {
    name: String,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    /// Passes when `value < threshold`.
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value < threshold,
        }
    }

    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }
}

/// Points with `Re z ∈ [−s, 4s]` and `Im z` log-uniform in `[0.01 s, 10 s]`.
fn herglotz_points(model: &ModelSpec, count: usize, seed: u64) -> Vec<Complex64> {
    let s = model.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let re = s * (5.0 * rng.random::<f64>() - 1.0);
            let im = s * 10f64.powf(3.0 * rng.random::<f64>() - 2.0);
            Complex64::new(re, im)
        })
        .collect()
}

fn constant_profile(model: &ModelSpec) -> Option<f64> {
    let sigma = model.profile().sigma();
    let s0 = sigma[(0, 0)];
    sigma.iter().all(|&s| s == s0).then_some(s0)
}

fn run_validate(
    config: &RunConfig,
    model: &ModelSpec,
    out: &mut Writer,
    summary: &mut String,
) -> Result<Vec<String>, RunError> {
    let CommandConfig::Validate {
        z,
        sigma2,
        points,
        family,
        mc_tol,
        sample,
    } = &config.command
    else {
        unreachable!("run_validate called for another command");
    };
    let cfg = &config.solver;
    let mut checks = Vec::new();

    let sols = z
        .iter()
        .map(|&z| solver::solve(model, z, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let worst =
        |f: &dyn Fn(&solver::EquivalentSolution) -> f64| sols.iter().map(f).fold(0.0, f64::max);
    checks.push(Check::at_most(
        "residual",
        worst(&|s| s.residual),
        10.0 * cfg.tol,
    ));

    let moment = moment_consistency(model, 1e6 * model.scale(), cfg)?;
    checks.push(Check::below("moment", moment.relative_gap, 1e-4));

    let mut violations = 0usize;
    let mut identity = worst(&|s| solver::push_through_defect(model, s));
    for zh in herglotz_points(model, *points, sample.seed) {
        let sol = solver::solve(model, zh, cfg)?;
        violations += solver::invariant_violations(&sol)?.len();
        identity = identity.max(solver::push_through_defect(model, &sol));
    }
    checks.push(Check::at_most("herglotz", violations as f64, 0.0));
    checks.push(Check::below("identity", identity, 1e-10));

    let closed = capacity_closed_form(model, sigma2, cfg)?;
    let mut cap_gap = 0f64;
    for r in &closed {
        let q = capacity_quadrature(model, r.sigma2, 1e-8, cfg)?.value;
        cap_gap = cap_gap.max((r.value - q).abs() / (1.0 + r.value.abs()));
    }
    checks.push(Check::below("capacity_methods", cap_gap, 1e-6));

    if let Some(s0) = constant_profile(model) {
        if model.centering().structure().is_zero && s0 > 0.0 {
            let s2 = s0 * s0;
            let mut gap = 0f64;
            for sol in &sols {
                let f = mp_reference_stieltjes(model.ratio(), sol.z / s2)? / s2;
                gap = gap.max((sol.m() - f).norm());
            }
            checks.push(Check::below("mp_oracle", gap, 1e-10));
        } else if s0 == 0.0 {
            let mut gap = 0f64;
            for r in &closed {
                gap = gap.max((r.value - noiseless_capacity(model.a(), r.sigma2)?).abs());
            }
            checks.push(Check::below("noiseless_capacity", gap, 1e-10));
        }
    }

    if model.profile().separable().is_some() {
        let mut gap = 0f64;
        for sol in &sols {
            let sep = solver::solve_separable(model, sol.z, cfg)?.solution;
            let d = sep
                .psi
                .iter()
                .zip(&sol.psi)
                .chain(sep.psi_tilde.iter().zip(&sol.psi_tilde))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            gap = gap.max(d);
        }
        checks.push(Check::below("separable", gap, 1e-9));
    }

    if matches!(model.origin(), ModelOrigin::DeltaX { .. }) {
        checks.push(Check::below(
            "dx_identity",
            worst(&|s| spectral::companion_identity_residual(s, model)),
            1e-10,
        ));
    }

    let sc = sample_config(sample, model);
    let mc = if family.is_empty() {
        mc_stieltjes_gap(|_| Ok(model.clone()), &[model.cols()], z[0], &sc, cfg)?
    } else {
        mc_stieltjes_gap(|n| family_member(&config.model, n), family, z[0], &sc, cfg)?
    };
    let last = mc.last().expect("at least one Monte Carlo report");
    checks.push(Check::below("mc_stieltjes", last.gap, *mc_tol));
    if mc.len() > 1 {
        // Gaps that sit inside their own sampling noise carry no ordering,
        // so the trend check allows two combined standard errors.
        let first = &mc[0];
        let noise = 2.0 * first.stderr.hypot(last.stderr);
        checks.push(Check::below("mc_family_trend", last.gap - first.gap, noise));
    }
    out.put("validate_mc.csv", &reports_csv(&mc)?)?;

    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                format!("{:e}", c.value),
                format!("{:e}", c.threshold),
                c.pass.to_string(),
            ]
        })
        .collect();
    out.put(
        "validate.csv",
        &csv_text(&["check", "value", "threshold", "pass"], &rows),
    )?;
    for c in &checks {
        writeln!(
            summary,
            "{} {}: {:e} (threshold {:e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        )
        .unwrap();
    }
    Ok(checks
        .into_iter()
        .filter(|c| !c.pass)
        .map(|c| c.name)
        .collect())
}

fn run_demo(
    n: usize,
    sample: &SampleConfig,
    cfg: &SolverConfig,
    out: &mut Writer,
    summary: &mut String,
) -> Result<(), RunError> {
    let report = block_demo(n, sample, cfg)?;
    let variants = [&report.upsilon, &report.upsilon_tilde];
    out.put(
        "demo.csv",
        &reports_csv(
            &variants
                .iter()
                .map(|v| v.stieltjes.clone())
                .collect::<Vec<_>>(),
        )?,
    )?;
    let mut rows = Vec::new();
    for v in variants {
        let name = v.variant.name();
        for b in &v.histogram {
            rows.push(vec![
                name.into(),
                "histogram".into(),
                b.left.to_string(),
                b.right.to_string(),
                b.fraction.to_string(),
            ]);
        }
        for &(l, d) in &v.density.points {
            rows.push(vec![
                name.into(),
                "density".into(),
                l.to_string(),
                l.to_string(),
                d.to_string(),
            ]);
        }
    }
    out.put(
        "demo_spectra.csv",
        &csv_text(&["variant", "kind", "x0", "x1", "value"], &rows),
    )?;
    writeln!(
        summary,
        "|m_upsilon(-1) - m_upsilon_tilde(-1)| = {:.6}",
        report.difference
    )
    .unwrap();
    for v in variants {
        writeln!(
            summary,
            "{}: deterministic {:.6}, Monte Carlo {:.6} +/- {:.6}, gap {:.6}, unit eigenvalues per trial {:?}",
            v.variant.name(),
            v.stieltjes.deterministic.re,
            v.stieltjes.mean.re,
            v.stieltjes.stderr,
            v.stieltjes.gap,
            v.unit_eigenvalues
        )
        .unwrap();
    }
    Ok(())
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), SchemaError> {
        let cmd = config.command.name();
        let flag_err = |key: &str| SchemaError {
            key: key.into(),
            line: None,
            message: format!("not used by command {cmd}"),
        };
        if self.seed.is_some() || self.trials.is_some() {
            let sample = config.command.sample_mut().ok_or_else(|| {
                flag_err(if self.seed.is_some() {
                    "command.seed"
                } else {
                    "command.trials"
                })
            })?;
            if let Some(seed) = self.seed {
                sample.seed = seed;
            }
            if let Some(trials) = self.trials {
                if trials == 0 {
                    return Err(SchemaError {
                        key: "command.trials".into(),
                        line: None,
                        message: "must be at least 1".into(),
                    });
                }
                sample.trials = trials;
            }
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(SchemaError {
                    key: "solver.tol".into(),
                    line: None,
                    message: format!("{tol} must be positive"),
                });
            }
            config.solver.tol = tol;
        }
        if let Some(out) = &self.out {
            config.output = out.clone();
        }
        Ok(())
    }
}

/// Reads, overrides and runs a config file. Relative model paths resolve
/// against the config's directory; the output directory against the
/// working directory.
pub fn execute(path: &Path, overrides: &Overrides) -> Result<Outcome, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = crate::config::parse_config(&text)?;
    config.rebase(path.parent().unwrap_or(Path::new(".")));
    overrides.apply(&mut config)?;
    run(&config)
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary)?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}
