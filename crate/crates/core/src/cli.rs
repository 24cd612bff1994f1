//! Command-line front end: runs the verification suites and emits a JSON
//! report (and the torus figure as SVG or CSV).
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a suite
//! hits a numerical error, 2 on usage errors.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use crate::algebra::{Element, Level};
use crate::error::{Error, Result};
use crate::fiber::{
    build_cycle, check_pair_inequalities, check_parallel, cycle_intersection_probe,
    fiber_exact_mult, fiber_numeric, fit_isometry, hopf_raw, hopf_singular_values,
    min_pair_distance, Extraction, FiberSample,
};
use crate::linalg::{self, Matrix};
use crate::lipmap::{degree_jacobian, degree_winding, lipschitz_estimate, SphereMap};
use crate::sphere::{
    angle, product_dist, rng_for, sample_sphere_stream, ProductPoint, SpherePoint,
};
use crate::torus::figure::{build_figure, FigureFormat, FigureSpec};
use crate::torus::{
    f_eval, f_partials, f_partials_fd, gamma_integrate, gradient_norm, gradient_norm_deviation,
    grid, homotopy_dilation, integral_curves_gradient, level_field, one_sided_dfdx, phi,
    projection_dilation, projection_dilation_sup, wrap_dist, RevolutionMetric, TorusPoint,
};

pub const SCHEMA: u32 = 1;
pub const THREADS_ENV: &str = "DSL_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "dsl",
    version,
    about = "Verify the Lipschitz geometry of sphere multiplication maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Suite,
    #[command(flatten)]
    opts: Options,
}

#[derive(clap::Args, Debug)]
struct Options {
    /// Algebra level: 1 = C (S¹), 2 = H (S³), 3 = O (S⁷); all when absent.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: Option<u8>,
    /// Sample count for each randomized check.
    #[arg(long, global = true, default_value_t = 10_000, value_parser = positive_usize)]
    samples: usize,
    /// Pair count for pairwise checks; defaults to --samples.
    #[arg(long, global = true, value_parser = positive_usize)]
    pairs: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Replaces the tolerance of every check.
    #[arg(long, global = true, value_parser = positive_f64)]
    tol: Option<f64>,
    /// Runge–Kutta step for torus curves.
    #[arg(long, global = true, default_value_t = 1e-3, value_parser = positive_f64)]
    step: f64,
    /// Grid resolution (torus: n × n points; cycle: directions × times).
    #[arg(long, global = true, value_parser = positive_usize)]
    grid: Option<usize>,
    /// Report path; for `figure`, the figure path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 => Ok(v as usize),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Cayley–Dickson arithmetic: norms, inverses, (non)associativity.
    Algebra,
    /// Lipschitz constant √2 of the multiplication map.
    Lipschitz,
    /// Degree 2 of the diagonal restriction x ↦ x².
    Degree,
    /// Fiber inequalities, isometry graphs, parallelism and separation.
    Fibers,
    /// The surface of arcs between two fiber points.
    Cycle,
    /// Extension of multiplication to the scaled Hopf map.
    Hopf,
    /// The torus submersion and the projection it is homotopic to.
    Torus,
    /// Level sets and gradient curves of the torus submersion.
    Figure,
    /// Every suite above.
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Lipschitz => "lipschitz",
            Suite::Degree => "degree",
            Suite::Fibers => "fibers",
            Suite::Cycle => "cycle",
            Suite::Hopf => "hopf",
            Suite::Torus => "torus",
            Suite::Figure => "figure",
            Suite::All => "all",
        }
    }

    const MEMBERS: [Suite; 8] = [
        Suite::Algebra,
        Suite::Lipschitz,
        Suite::Degree,
        Suite::Fibers,
        Suite::Cycle,
        Suite::Hopf,
        Suite::Torus,
        Suite::Figure,
    ];
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub subcommand: Suite,
    /// Sphere dimensions `n` under test.
    pub levels: Vec<usize>,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
    pub tol: Option<f64>,
    pub step: f64,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    fn from_cli(cli: Cli) -> Result<Self> {
        let o = cli.opts;
        let levels = match o.level {
            Some(k) => vec![Level::new(k as usize)?.sphere_dim()],
            None => Level::SPHERES.iter().map(|l| l.sphere_dim()).collect(),
        };
        let figure = cli.command == Suite::Figure;
        if !figure && o.format != Format::Json {
            return Err(Error::InvalidArgument(format!(
                "--format {:?} applies only to `figure`",
                o.format
            )));
        }
        if o.step > crate::torus::MAX_STEP {
            return Err(Error::InvalidArgument(format!(
                "--step must not exceed {}",
                crate::torus::MAX_STEP
            )));
        }
        if let Some(g) = o.grid {
            if g < 2 {
                return Err(Error::InvalidArgument("--grid must be at least 2".into()));
            }
        }
        Ok(Self {
            subcommand: cli.command,
            levels,
            samples: o.samples,
            pairs: o.pairs.unwrap_or(o.samples),
            seed: o.seed,
            tol: o.tol,
            step: o.step,
            grid: o.grid,
            out: o.out,
            format: o.format,
        })
    }

    fn level_list(&self) -> Vec<Level> {
        self.levels
            .iter()
            .map(|&n| Level::from_dim(n + 1).expect("validated level"))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|measured − expected| ≤ tolerance`.
    Equal,
    /// `measured ≤ expected + tolerance`.
    AtMost,
    /// `measured ≥ expected − tolerance`.
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub suite: Suite,
    /// Sphere dimension `n` for per-level checks.
    pub level: Option<usize>,
    pub claim: String,
    pub measured: f64,
    pub comparison: Comparison,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn evaluate(&mut self) {
        let m = self.measured;
        self.passed = match self.comparison {
            Comparison::Equal => (m - self.expected).abs() <= self.tolerance,
            Comparison::AtMost => m <= self.expected + self.tolerance,
            Comparison::AtLeast => m >= self.expected - self.tolerance,
        };
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteError {
    pub suite: Suite,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub subcommand: Suite,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub errors: Vec<SuiteError>,
    pub passed: bool,
    pub duration_s: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Collects checks for one suite, applying the global tolerance override.
struct Recorder<'a> {
    suite: Suite,
    level: Option<usize>,
    tol: Option<f64>,
    checks: &'a mut Vec<Check>,
}

impl Recorder<'_> {
    fn push(
        &mut self,
        name: &str,
        claim: &str,
        measured: f64,
        comparison: Comparison,
        expected: f64,
        tolerance: f64,
    ) {
        let mut c = Check {
            name: name.to_string(),
            suite: self.suite,
            level: self.level,
            claim: claim.to_string(),
            measured,
            comparison,
            expected,
            tolerance: self.tol.unwrap_or(tolerance),
            passed: false,
        };
        c.evaluate();
        self.checks.push(c);
    }

    fn equal(&mut self, name: &str, claim: &str, measured: f64, expected: f64, tol: f64) {
        self.push(name, claim, measured, Comparison::Equal, expected, tol);
    }

    fn at_most(&mut self, name: &str, claim: &str, measured: f64, bound: f64, tol: f64) {
        self.push(name, claim, measured, Comparison::AtMost, bound, tol);
    }

    fn at_least(&mut self, name: &str, claim: &str, measured: f64, bound: f64, tol: f64) {
        self.push(name, claim, measured, Comparison::AtLeast, bound, tol);
    }
}

/// Parses `args` (including the program name), runs the requested suite and
/// writes the report; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
                return 0;
            }
            let _ = write!(stderr, "{text}");
            return 2;
        }
    };
    let cfg = match RunConfig::from_cli(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 2;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 2;
        }
    };
    let outcome = match pool {
        Some(pool) => pool.install(|| execute(&cfg)),
        None => execute(&cfg),
    };
    let (report, figure) = match outcome {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return if matches!(e, Error::InvalidArgument(_) | Error::Io(_)) {
                2
            } else {
                1
            };
        }
    };
    if let Err(e) = write_outputs(&cfg, &report, figure.as_deref(), stdout) {
        let _ = writeln!(stderr, "error: {e}");
        return 2;
    }
    for err in &report.errors {
        let _ = writeln!(stderr, "error in {}: {}", err.suite.name(), err.message);
    }
    if report.passed {
        0
    } else {
        1
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        Error::InvalidArgument(format!("{THREADS_ENV}={raw} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn write_outputs(
    cfg: &RunConfig,
    report: &Report,
    figure: Option<&str>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let json = report.to_json();
    match (cfg.subcommand, figure) {
        (Suite::Figure, Some(doc)) => {
            let path = cfg.out.clone().unwrap_or_else(|| {
                PathBuf::from(if cfg.format == Format::Csv {
                    "figure.csv"
                } else {
                    "figure.svg"
                })
            });
            std::fs::write(&path, doc)?;
        }
        _ => {
            if let Some(path) = &cfg.out {
                std::fs::write(path, format!("{json}\n"))?;
            }
        }
    }
    writeln!(stdout, "{json}")?;
    Ok(())
}

/// Runs the configured suite; returns the report and, for `figure`, the
/// rendered figure document.
pub fn execute(cfg: &RunConfig) -> Result<(Report, Option<String>)> {
    let start = Instant::now();
    let suites: Vec<Suite> = match cfg.subcommand {
        Suite::All => Suite::MEMBERS.to_vec(),
        s => vec![s],
    };
    let mut checks = Vec::new();
    let mut errors = Vec::new();
    let mut figure = None;
    for suite in suites {
        let result = match suite {
            Suite::Algebra => algebra_suite(cfg, &mut checks),
            Suite::Lipschitz => lipschitz_suite(cfg, &mut checks),
            Suite::Degree => degree_suite(cfg, &mut checks),
            Suite::Fibers => fibers_suite(cfg, &mut checks),
            Suite::Cycle => cycle_suite(cfg, &mut checks),
            Suite::Hopf => hopf_suite(cfg, &mut checks),
            Suite::Torus => torus_suite(cfg, &mut checks),
            Suite::Figure => figure_suite(cfg, &mut checks).map(|doc| {
                if cfg.subcommand == Suite::Figure {
                    figure = Some(doc);
                }
            }),
            Suite::All => unreachable!("`all` is expanded above"),
        };
        if let Err(e) = result {
            if matches!(e, Error::InvalidArgument(_)) {
                return Err(e);
            }
            errors.push(SuiteError {
                suite,
                message: e.to_string(),
            });
        }
    }
    let passed = errors.is_empty() && !checks.is_empty() && checks.iter().all(|c| c.passed);
    Ok((
        Report {
            schema: SCHEMA,
            subcommand: cfg.subcommand,
            config: cfg.clone(),
            checks,
            errors,
            passed,
            duration_s: start.elapsed().as_secs_f64(),
        },
        figure,
    ))
}

/// Disjoint RNG stream bases for the suites.
mod streams {
    pub const ALGEBRA: u64 = 1 << 40;
    pub const FIBERS: u64 = 2 << 40;
    pub const CYCLE: u64 = 3 << 40;
    pub const HOPF: u64 = 4 << 40;
}

fn gaussian_element(level: Level, rng: &mut impl Rng) -> Element {
    use rand_distr::{Distribution, StandardNormal};
    let coords: Vec<f64> = (0..level.dim())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Element::from_slice(level, &coords).expect("dimension matches level")
}

fn algebra_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    for level in cfg.level_list() {
        let mut rec = Recorder {
            suite: Suite::Algebra,
            level: Some(level.sphere_dim()),
            tol: cfg.tol,
            checks,
        };
        let mut rng = rng_for(cfg.seed, streams::ALGEBRA + level.index() as u64);
        let (mut norm_err, mut inv_err, mut alt_err, mut assoc_max) =
            (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for _ in 0..cfg.pairs {
            let a = gaussian_element(level, &mut rng);
            let b = gaussian_element(level, &mut rng);
            let c = gaussian_element(level, &mut rng);
            let scale = a.norm() * b.norm();
            norm_err = norm_err.max(((a * b).norm() - scale).abs() / scale);
            let one = a * a.inv()?;
            inv_err = inv_err.max((one - Element::one(level)).norm());
            alt_err = alt_err
                .max(Element::associator(&a, &a, &b)?.norm() / (a.norm_sqr() * b.norm()))
                .max(Element::associator(&a, &b, &b)?.norm() / (a.norm() * b.norm_sqr()));
            assoc_max = assoc_max.max(Element::associator(&a, &b, &c)?.norm() / (scale * c.norm()));
        }
        rec.at_most("norm_mult_rel_err", "|ab| = |a||b|", norm_err, 0.0, 1e-12);
        rec.at_most("inverse_err", "a·a⁻¹ = 1", inv_err, 0.0, 1e-12);
        rec.at_most(
            "alternativity_err",
            "(aa)b = a(ab) and (ab)b = a(bb)",
            alt_err,
            0.0,
            1e-12,
        );
        if level == Level::Octonion {
            rec.at_least(
                "associator_max",
                "octonions are not associative",
                assoc_max,
                0.1,
                0.0,
            );
        } else {
            rec.at_most(
                "associator_max",
                "associative below the octonions",
                assoc_max,
                0.0,
                1e-12,
            );
        }
        let mut table_err = 0.0_f64;
        for i in 0..level.dim() {
            for j in 0..level.dim() {
                let p = Element::basis(level, i) * Element::basis(level, j);
                let k = i ^ j;
                let off: f64 = p
                    .coords()
                    .iter()
                    .enumerate()
                    .filter(|&(t, _)| t != k)
                    .map(|(_, v)| v.abs())
                    .sum();
                table_err = table_err.max(off + (p.coords()[k].abs() - 1.0).abs());
            }
        }
        rec.equal(
            "basis_product_err",
            "e_i e_j = ±e_(i xor j)",
            table_err,
            0.0,
            0.0,
        );
    }
    Ok(())
}

fn lipschitz_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    for level in cfg.level_list() {
        let mut rec = Recorder {
            suite: Suite::Lipschitz,
            level: Some(level.sphere_dim()),
            tol: cfg.tol,
            checks,
        };
        let est = lipschitz_estimate(
            &SphereMap::multiplication(level),
            cfg.samples,
            cfg.pairs,
            cfg.seed,
        )?;
        rec.equal(
            "dilation_sup",
            "sup of local dilation of m is √2",
            est.local.sup,
            SQRT_2,
            1e-9,
        );
        rec.equal(
            "dilation_min",
            "m dilates every point by √2",
            est.local.min(),
            SQRT_2,
            1e-9,
        );
        rec.at_most(
            "pairwise_quotient_max",
            "d(m(a),m(b)) ≤ √2 d(a,b)",
            est.pairwise,
            SQRT_2,
            1e-9,
        );
        let diag = lipschitz_estimate(
            &SphereMap::diagonal(level),
            cfg.samples,
            cfg.pairs,
            cfg.seed,
        )?;
        rec.equal(
            "diagonal_dilation_sup",
            "x ↦ x² on √2·Sⁿ has dilation √2",
            diag.local.sup,
            SQRT_2,
            1e-9,
        );
    }
    Ok(())
}

/// Samples used for the winding number of `x ↦ x²` on S¹.
const WINDING_RESOLUTION: usize = 4096;

fn degree_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    for level in cfg.level_list() {
        let mut rec = Recorder {
            suite: Suite::Degree,
            level: Some(level.sphere_dim()),
            tol: cfg.tol,
            checks,
        };
        let square = SphereMap::square(level);
        if level == Level::Complex {
            let w = degree_winding(&square, WINDING_RESOLUTION)?;
            rec.equal(
                "winding",
                "x ↦ x² on S¹ has winding number 2",
                w as f64,
                2.0,
                0.0,
            );
        }
        let est = degree_jacobian(&square, cfg.samples.max(2), cfg.seed)?;
        rec.equal(
            "jacobian_degree",
            "Monte Carlo degree of x ↦ x² is 2 within 3 standard errors",
            est.mean,
            2.0,
            3.0 * est.std_err,
        );
    }
    Ok(())
}

/// Points per fiber where a dense fiber is needed.
const DENSE_FIBER: usize = 1000;

fn exact_fiber(
    level: Level,
    p: &SpherePoint,
    count: usize,
    seed: u64,
    stream: u64,
) -> Result<FiberSample> {
    fiber_exact_mult(
        p,
        &sample_sphere_stream(level.sphere_dim(), count, seed, stream),
    )
}

fn fibers_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    for level in cfg.level_list() {
        let n = level.sphere_dim();
        let mut rec = Recorder {
            suite: Suite::Fibers,
            level: Some(n),
            tol: cfg.tol,
            checks,
        };
        let base = streams::FIBERS + 64 * level.index() as u64;
        let ps = sample_sphere_stream(n, 2, cfg.seed, base);
        let p = &ps[0];

        let fiber = exact_fiber(level, p, cfg.samples, cfg.seed, base + 1)?;
        rec.at_most(
            "exact_fiber_residual_max",
            "m(x, x⁻¹p) = p",
            fiber.max_residual(),
            0.0,
            1e-12,
        );

        let mut rng = rng_for(cfg.seed, base + 2);
        let (mut pair_min, mut closed_dev) = (f64::INFINITY, 0.0_f64);
        let pts = &fiber.points;
        for _ in 0..cfg.pairs {
            let i = rng.random_range(0..pts.len());
            let j = rng.random_range(0..pts.len());
            let r = check_pair_inequalities(&pts[i], &pts[j])?;
            pair_min = pair_min.min(r.min());
            let a = angle(pts[i].first.coords(), pts[j].first.coords());
            let closed = 2.0 * (a - PI).powi(2);
            closed_dev = closed_dev
                .max((r.r1 - closed).abs())
                .max((r.r2 - closed).abs());
        }
        rec.at_least(
            "pair_residual_min",
            "pairs on a fiber satisfy both inequalities",
            pair_min,
            0.0,
            0.0,
        );
        rec.at_most(
            "pair_closed_form_dev",
            "residuals equal 2(a − π)²",
            closed_dev,
            0.0,
            1e-9,
        );
        let mut anti = 0.0_f64;
        for q in pts.iter().take(cfg.pairs) {
            let x2 = q.first.antipode();
            let other = &fiber_exact_mult(p, std::slice::from_ref(&x2))?.points[0];
            let r = check_pair_inequalities(q, other)?;
            anti = anti.max(r.r1.abs()).max(r.r2.abs());
        }
        rec.equal(
            "antipodal_pair_residual",
            "antipodal fiber pairs give equality",
            anti,
            0.0,
            1e-9,
        );

        let dense = exact_fiber(level, p, DENSE_FIBER, cfg.seed, base + 3)?;
        let fit = fit_isometry(&dense)?;
        rec.at_most(
            "isometry_orthogonality_defect",
            "fitted h_p is orthogonal",
            fit.matrix.orthogonality_defect(),
            0.0,
            1e-10,
        );
        rec.at_most(
            "isometry_fit_residual",
            "the fiber is the graph of h_p",
            fit.residual,
            0.0,
            1e-10,
        );
        let back = fit_isometry(&dense.transposed())?;
        let hk = back
            .matrix
            .matmul(&fit.matrix)
            .max_abs_diff(&Matrix::identity(n + 1));
        rec.at_most(
            "hk_identity_dev",
            "k_p ∘ h_p is the identity",
            hk,
            0.0,
            1e-9,
        );
        let noisy = noisy_fiber(&dense, 0.1, cfg.seed, base + 4)?;
        let noisy_residual = match fit_isometry(&noisy) {
            Ok(f) => f.residual,
            Err(Error::Degenerate(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        rec.at_least(
            "noisy_fit_residual",
            "noise-corrupted fibers are rejected",
            noisy_residual,
            0.01,
            0.0,
        );

        // a second fiber at distance π/2
        let p2 = quarter_turn(p, &ps[1])?;
        let fa = exact_fiber(level, p, 50, cfg.seed, base + 5)?;
        let fb = exact_fiber(level, &p2, DENSE_FIBER, cfg.seed, base + 6)?;
        let par = check_parallel(&fa, &fb, p, &p2)?;
        rec.at_most(
            "parallel_deviation",
            "d(q, f⁻¹(p₂)) = d(p₁,p₂)/√2",
            par.deviation,
            0.0,
            par.tolerance,
        );
        let anti_p = p.antipode();
        let fc = exact_fiber(level, &anti_p, DENSE_FIBER, cfg.seed, base + 7)?;
        let par = check_parallel(&fa, &fc, p, &anti_p)?;
        rec.at_most(
            "antipodal_parallel_deviation",
            "antipodal fibers are π/√2 apart pointwise",
            par.deviation,
            0.0,
            par.tolerance,
        );
        let fd = exact_fiber(level, &anti_p, 200, cfg.seed, base + 8)?;
        let fe = exact_fiber(level, p, 200, cfg.seed, base + 9)?;
        let sep = min_pair_distance(&fe, &fd)?;
        rec.at_least(
            "separation_min",
            "antipodal fibers are at least π/√2 apart",
            sep,
            PI / SQRT_2,
            1e-6,
        );

        let m = SphereMap::multiplication(level);
        let seeds = jittered(
            &fiber.points[..fiber.len().min(32)],
            0.05,
            cfg.seed,
            base + 10,
        )?;
        let (residual, dropped) = match fiber_numeric(&m, p, &seeds, 1e-10)? {
            Extraction::Found { fiber, dropped } => (fiber.max_residual(), dropped as f64),
            Extraction::Failed {
                attempted,
                best_residual,
            } => (best_residual, attempted as f64),
        };
        rec.at_most(
            "numeric_fiber_residual_max",
            "descent reaches the fiber",
            residual,
            0.0,
            1e-10,
        );
        rec.equal(
            "numeric_fiber_dropped",
            "no seed fails to converge",
            dropped,
            0.0,
            0.0,
        );
    }
    Ok(())
}

/// Point at distance π/2 from `p` in the direction of `q`.
fn quarter_turn(p: &SpherePoint, q: &SpherePoint) -> Result<SpherePoint> {
    let ip = linalg::dot(p.coords(), q.coords());
    SpherePoint::normalize(
        q.coords()
            .iter()
            .zip(p.coords())
            .map(|(b, a)| b - ip * a)
            .collect(),
    )
}

fn noisy_fiber(fiber: &FiberSample, amplitude: f64, seed: u64, stream: u64) -> Result<FiberSample> {
    let mut rng = rng_for(seed, stream);
    let mut out = fiber.clone();
    for q in &mut out.points {
        let y: Vec<f64> = q
            .second
            .coords()
            .iter()
            .map(|c| c + amplitude * rng.random_range(-1.0..1.0))
            .collect();
        q.second = SpherePoint::normalize(y)?;
    }
    Ok(out)
}

fn jittered(
    points: &[ProductPoint],
    amplitude: f64,
    seed: u64,
    stream: u64,
) -> Result<Vec<ProductPoint>> {
    let mut rng = rng_for(seed, stream);
    let mut shake = |s: &SpherePoint| {
        let v: Vec<f64> = s
            .coords()
            .iter()
            .map(|c| c + amplitude * rng.random_range(-1.0..1.0))
            .collect();
        SpherePoint::normalize(v)
    };
    points
        .iter()
        .map(|q| ProductPoint::new(shake(&q.first)?, shake(&q.second)?))
        .collect()
}

/// Default cycle grid, directions × times.
const CYCLE_GRID: usize = 64;
const CYCLE_PAIRS: usize = 4;

fn cycle_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    let g = cfg.grid.unwrap_or(CYCLE_GRID);
    for level in cfg.level_list() {
        let n = level.sphere_dim();
        let mut rec = Recorder {
            suite: Suite::Cycle,
            level: Some(n),
            tol: cfg.tol,
            checks,
        };
        let base = streams::CYCLE + 64 * level.index() as u64;
        let m = SphereMap::multiplication(level);
        let (mut endpoint, mut pyth, mut excess) = (0.0_f64, 0.0_f64, f64::NEG_INFINITY);
        // worst ratio of probe residual to its mesh bound 2√2·mesh
        let mut probe_ratio = 0.0_f64;
        for k in 0..CYCLE_PAIRS as u64 {
            let p = sample_sphere_stream(n, 1, cfg.seed, base + 3 * k).remove(0);
            let fiber = exact_fiber(level, &p, 2, cfg.seed, base + 3 * k + 1)?;
            let (a, b) = (&fiber.points[0], &fiber.points[1]);
            let cycle = build_cycle(a, b, g, g, cfg.seed.wrapping_add(base + 3 * k + 2))?;
            let bound = cycle.length_bound();
            for c in &cycle.curves {
                endpoint = endpoint
                    .max(product_dist(&c.points[0], a)?)
                    .max(product_dist(&c.points[c.points.len() - 1], b)?);
                pyth = pyth.max((c.gamma_length - c.alpha_length.hypot(c.beta_length)).abs());
                excess = excess.max(c.gamma_length - bound);
            }
            let hit = cycle_intersection_probe(&cycle, &m, &p.antipode())?;
            probe_ratio = probe_ratio.max(hit.min_residual / (2.0 * SQRT_2 * cycle.mesh()));
        }
        rec.at_most(
            "cycle_endpoint_dev",
            "γ_X(0) = (x₁,y₁) and γ_X(1) = (x₂,y₂)",
            endpoint,
            0.0,
            1e-10,
        );
        rec.at_most(
            "cycle_length_identity_dev",
            "ℓ(γ)² = ℓ(α)² + ℓ(β)²",
            pyth,
            0.0,
            1e-6,
        );
        rec.at_most(
            "cycle_length_bound_excess",
            "ℓ(γ_X) ≤ √((2π − d(y₁,y₂))² + d(x₁,x₂)²)",
            excess,
            0.0,
            1e-6,
        );
        rec.at_most(
            "cycle_probe_mesh_ratio",
            "the cycle meets the fiber over −p: probe residual below 2√2·mesh",
            probe_ratio,
            1.0,
            0.0,
        );

        // x₁ = x₂ and y₂ = −y₁: the surface is {x₁} × Sⁿ
        let pts = sample_sphere_stream(n, 2, cfg.seed, base + 40);
        let start = ProductPoint::new(pts[0].clone(), pts[1].clone())?;
        let end = ProductPoint::new(pts[0].clone(), pts[1].antipode())?;
        let cycle = build_cycle(&start, &end, g, g, cfg.seed.wrapping_add(base + 41))?;
        let probes = sample_sphere_stream(n, 2000, cfg.seed, base + 42);
        let cover = probes
            .iter()
            .map(|z| {
                cycle
                    .points()
                    .map(|q| angle(q.second.coords(), z.coords()))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        rec.at_most(
            "cycle_cover_dist",
            "the antipodal cycle covers {x₁} × Sⁿ up to twice its mesh",
            cover,
            2.0 * cycle.mesh(),
            0.0,
        );
    }
    Ok(())
}

/// Points of `√2·S^{2n+1}` used for the finite-difference differential.
const HOPF_SV_POINTS: usize = 200;

fn hopf_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    for level in cfg.level_list() {
        let n = level.sphere_dim();
        let d = level.dim();
        let mut rec = Recorder {
            suite: Suite::Hopf,
            level: Some(n),
            tol: cfg.tol,
            checks,
        };
        let base = streams::HOPF + 64 * level.index() as u64;
        let split = |v: &[f64]| -> Result<(Element, Element)> {
            let s: Vec<f64> = v.iter().map(|c| c * SQRT_2).collect();
            Ok((
                Element::from_slice(level, &s[..d])?,
                Element::from_slice(level, &s[d..])?,
            ))
        };
        let pts = sample_sphere_stream(2 * n + 1, cfg.samples, cfg.seed, base);
        let mut norm_dev = 0.0_f64;
        for z in &pts {
            let (z1, z2) = split(z.coords())?;
            norm_dev = norm_dev.max((linalg::norm(&hopf_raw(&z1, &z2)?) - 1.0).abs());
        }
        rec.at_most("hopf_norm_dev", "|m̃(z₁,z₂)| = 1", norm_dev, 0.0, 1e-12);

        let xs = sample_sphere_stream(n, cfg.samples, cfg.seed, base + 1);
        let ys = sample_sphere_stream(n, cfg.samples, cfg.seed, base + 2);
        let mut restrict = 0.0_f64;
        for (x, y) in xs.iter().zip(&ys) {
            let (z1, z2) = (x.to_element()?, y.to_element()?);
            let raw = hopf_raw(&z1, &z2)?;
            let prod = z1 * z2;
            let dev = raw[..d]
                .iter()
                .zip(prod.coords())
                .map(|(a, b)| (a - b).abs())
                .fold(raw[d].abs(), f64::max);
            restrict = restrict.max(dev);
        }
        rec.at_most(
            "hopf_restriction_dev",
            "m̃ restricted to Sⁿ × Sⁿ is (m, 0)",
            restrict,
            0.0,
            1e-12,
        );

        let (mut upper, mut lower, mut rank_err) = (0.0_f64, 0.0_f64, 0.0_f64);
        for z in pts.iter().take(HOPF_SV_POINTS) {
            let (z1, z2) = split(z.coords())?;
            let s = hopf_singular_values(&z1, &z2)?;
            upper = s[..=n]
                .iter()
                .fold(upper, |acc, v| acc.max((v - SQRT_2).abs()));
            lower = s[n + 1..].iter().fold(lower, |acc, v| acc.max(v.abs()));
            let rank = s.iter().filter(|&&v| v > 0.5).count();
            rank_err = rank_err.max((rank as f64 - (n + 1) as f64).abs());
        }
        rec.at_most(
            "hopf_sv_nonzero_dev",
            "the n+1 nonzero singular values of dm̃ equal √2",
            upper,
            0.0,
            1e-5,
        );
        rec.at_most(
            "hopf_sv_zero_max",
            "the n vertical singular values vanish",
            lower,
            0.0,
            1e-5,
        );
        rec.equal("hopf_sv_rank_err", "dm̃ has rank n+1", rank_err, 0.0, 0.0);
    }
    Ok(())
}

const TORUS_GRID: usize = 200;
/// Level values `a = k/8` used for closure and level-set checks.
const TORUS_LEVELS: usize = 8;

fn torus_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<()> {
    let mut rec = Recorder {
        suite: Suite::Torus,
        level: None,
        tol: cfg.tol,
        checks,
    };
    let g = cfg.grid.unwrap_or(TORUS_GRID);
    let metric = RevolutionMetric;

    rec.at_most(
        "grad_norm_max_dev",
        "|∇f|_g = 1",
        gradient_norm_deviation(g),
        0.0,
        1e-10,
    );
    rec.at_most("phi_one", "Φ(1) = 0", phi(1.0).abs(), 0.0, 1e-10);

    let (mut closure, mut level_dev, mut speed_dev) = (0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..TORUS_LEVELS {
        let a = k as f64 / TORUS_LEVELS as f64;
        let tr = gamma_integrate(a, cfg.step)?;
        closure = closure.max(tr.closure_defect);
        for s in &tr.samples {
            let p = s.point;
            level_dev = level_dev.max(wrap_dist(f_eval(&p), a));
            speed_dev =
                speed_dev.max((metric.norm(p.x(), level_field([p.x(), p.y()])) - 1.0).abs());
        }
    }
    rec.at_most(
        "closure_defect_max",
        "level curves γ_a close after one loop",
        closure,
        0.0,
        1e-8,
    );
    rec.at_most(
        "level_set_max_dev",
        "f is constant along γ_a",
        level_dev,
        0.0,
        1e-6,
    );
    rec.at_most("speed_max_dev", "γ_a has unit speed", speed_dev, 0.0, 1e-10);

    let fd_grid = grid(32);
    let (mut fy_dev, mut fx_dev) = (0.0_f64, 0.0_f64);
    for p in &fd_grid {
        let [fx, fy] = f_partials_fd(p, 1e-5);
        fy_dev = fy_dev.max((fy - 1.0).abs());
        fx_dev = fx_dev.max((fx - f_partials(p.x())[0]).abs());
    }
    rec.at_most("df_dy_fd_max_dev", "∂f/∂y = 1", fy_dev, 0.0, 1e-6);
    rec.at_most(
        "df_dx_fd_max_dev",
        "∂f/∂x = −s(x)√(1 − 1/r²)",
        fx_dev,
        0.0,
        1e-6,
    );
    let mut c1 = 0.0_f64;
    for x in [0.0, 0.5] {
        let (l, r) = one_sided_dfdx(x, 1e-4);
        c1 = c1.max(l.abs()).max(r.abs()).max((l - r).abs());
    }
    rec.at_most(
        "branch_c1_mismatch",
        "∂f/∂x is continuous and zero at x ∈ {0, 1/2}",
        c1,
        0.0,
        1e-6,
    );

    let (sup, attained) = projection_dilation_sup(4 * g, 1e-12);
    rec.equal(
        "projection_dilation_sup",
        "the projection has Lipschitz constant 1",
        sup,
        1.0,
        1e-12,
    );
    let off_branch = attained
        .iter()
        .filter(|&&x| wrap_dist(x, 0.0) > 1e-12 && wrap_dist(x, 0.5) > 1e-12)
        .count();
    let on_branch = attained.len() - off_branch;
    rec.equal(
        "projection_dilation_attained_off_branch",
        "dilation 1 is attained only on x ∈ {0, 1/2}",
        off_branch as f64,
        0.0,
        0.0,
    );
    rec.equal(
        "projection_dilation_attained_on_branch",
        "dilation 1 is attained at x = 0 and x = 1/2",
        on_branch as f64,
        2.0,
        0.0,
    );
    let min = (0..4 * g)
        .map(|k| projection_dilation(k as f64 / (4 * g) as f64))
        .fold(f64::INFINITY, f64::min);
    rec.equal(
        "projection_dilation_min",
        "min dilation 1/3 at x ∈ {1/4, 3/4}",
        min,
        1.0 / 3.0,
        1e-12,
    );

    let f_dil = grid(g).iter().map(gradient_norm).fold(0.0, f64::max);
    rec.at_most("f_dilation_max", "f is 1-Lipschitz", f_dil, 1.0, 1e-6);
    let mut homotopy = f64::INFINITY;
    for k in 0..=10 {
        let s = k as f64 / 10.0;
        let max = (0..4 * g)
            .map(|i| homotopy_dilation(s, i as f64 / (4 * g) as f64))
            .fold(0.0, f64::max);
        homotopy = homotopy.min(max);
    }
    rec.at_least(
        "homotopy_dilation_max_min",
        "every f_s has max dilation ≥ 1",
        homotopy,
        1.0,
        1e-12,
    );

    let seeds = [TorusPoint::new(0.0, 0.0), TorusPoint::new(0.5, 0.0)];
    let traces = integral_curves_gradient(&seeds, cfg.step, 1.0)?;
    let mut closed = 0.0_f64;
    let mut drift = 0.0_f64;
    for t in &traces {
        closed = closed.max(t.closure_defect);
        let x0 = t.unwrapped[0][0];
        drift = t
            .unwrapped
            .iter()
            .fold(drift, |acc, p| acc.max((p[0] - x0).abs()));
    }
    rec.at_most(
        "gradient_closed_defect",
        "gradient curves on x ∈ {0, 1/2} close after Δy = 1",
        closed,
        0.0,
        1e-8,
    );
    rec.at_most(
        "gradient_closed_x_drift",
        "gradient curves on x ∈ {0, 1/2} stay vertical",
        drift,
        0.0,
        1e-10,
    );
    Ok(())
}

const FIGURE_CURVES: usize = 8;

fn figure_suite(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<String> {
    let mut rec = Recorder {
        suite: Suite::Figure,
        level: None,
        tol: cfg.tol,
        checks,
    };
    let spec = FigureSpec {
        step: cfg.step,
        ..FigureSpec::new(FIGURE_CURVES, FIGURE_CURVES)
    };
    let fig = build_figure(&spec)?;
    rec.equal(
        "curve_count",
        "one group per curve",
        fig.curves.len() as f64,
        (2 * FIGURE_CURVES) as f64,
        0.0,
    );
    let crossings = fig.crossings();
    rec.at_least(
        "crossing_count",
        "every gradient curve crosses every level curve",
        crossings.len() as f64,
        (FIGURE_CURVES * FIGURE_CURVES) as f64,
        0.0,
    );
    let cos = crossings.iter().map(|c| c.cosine.abs()).fold(0.0, f64::max);
    rec.at_most(
        "crossing_cosine_max",
        "gradient curves cross level curves g-orthogonally",
        cos,
        0.0,
        1e-4,
    );
    rec.at_least(
        "level_separation_min",
        "level curves do not cross",
        fig.level_separation(4 * TORUS_GRID),
        0.5 / FIGURE_CURVES as f64,
        0.0,
    );
    let format = if cfg.format == Format::Csv {
        FigureFormat::Csv
    } else {
        FigureFormat::Svg
    };
    Ok(fig.render(format))
}
