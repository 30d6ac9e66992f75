//! `filippov`: command-line front end.
//!
//! Machine output (JSON or CSV) goes to stdout or `--output`; diagnostics go
//! to stderr. Exit codes: 0 success, 1 an `--expect` outcome failed,
//! 2 usage or input error, 3 numeric failure.

// `!(a < b)` comparisons are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use filippov::blowup::{
    slow_manifold, sp_from_regularization, trace_slow_dynamics, SlowSettings, SlowTrace, TraceRow,
};
use filippov::canard::{detect_canard_one_fold, sigma_loop_scan, CanardReport};
use filippov::flow::{hybrid_orbit, FlowSettings};
use filippov::index::{angle_winding, interior_census, ClosedPath, IndexSettings};
use filippov::io::{
    emit_report, load_system, parse_path_file, Cell, ConfigError, CsvTable, Format, SystemFile,
};
use filippov::regularize::{
    convergence_study, farthest_from_sigma, find_limit_cycle_through, CycleSettings,
    RegularizedField, TransitionFunction,
};
use filippov::system::{PseudoEquilibrium, SigmaClass};
use filippov::{NonSmoothSystem, Vec2};

#[derive(Parser)]
#[command(
    name = "filippov",
    version,
    about = "Analysis of planar Filippov systems and their canard cycles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify points of Σ over a parameter window.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Σ-parameter samples `a:b:n`.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Sliding-field samples and pseudo-equilibria.
    Slide {
        #[command(flatten)]
        common: Common,
        /// Σ-parameter samples `a:b:n`.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Hybrid Filippov orbit from a point.
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Start point `x,y`.
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// Integration time budget.
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Canard detection around the single visible fold of the window.
    Canard {
        #[command(flatten)]
        common: Common,
        /// Window of the Σ parameter `a:b` for the fold search.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Σ-loop bifurcation scan over `--mu a:b:n` (default: the file's `mu_range`).
    Scan {
        #[command(flatten)]
        common: Common,
        /// Window of the Σ parameter `a:b` for the fold search.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Limit cycle of the ε-regularization near the canard cycle.
    Regularize {
        #[command(flatten)]
        common: Common,
        /// Regularization parameter ε.
        #[arg(long)]
        epsilon: f64,
        /// Transition function of the regularization.
        #[arg(long, value_enum, default_value_t = Transition::Quintic)]
        transition: Transition,
        /// Seed point for the section instead of the canard cycle.
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        /// Window of the Σ parameter `a:b` for the fold search.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Distance of regularized cycles to the canard cycle over a list of ε.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ε values.
        #[arg(long)]
        epsilons: Option<String>,
        /// Transition function of the regularization.
        #[arg(long, value_enum, default_value_t = Transition::Quintic)]
        transition: Transition,
        /// Window of the Σ parameter `a:b` for the fold search.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Winding of a closed path.
    Index {
        #[command(flatten)]
        common: Common,
        /// Path file with one `x,y` vertex per line.
        #[arg(long, conflicts_with = "circle", required_unless_present = "circle")]
        path: Option<PathBuf>,
        /// Circle `cx,cy,r`.
        #[arg(long, allow_hyphen_values = true)]
        circle: Option<String>,
    },
    /// Singular-perturbation data on the blow-up locus.
    Blowup {
        #[command(flatten)]
        common: Common,
        /// Single angle in (0, π).
        #[arg(long, conflicts_with = "theta_range")]
        theta: Option<f64>,
        /// Angle samples `a:b:n`.
        #[arg(long)]
        theta_range: Option<String>,
        /// Window of the Σ coordinate `a:b`.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// Transition function of the regularization.
        #[arg(long, value_enum, default_value_t = Transition::Quintic)]
        transition: Transition,
    },
}

#[derive(Args)]
struct Common {
    /// System file.
    #[arg(long)]
    system: PathBuf,
    /// Parameter value, or `a:b:n` for `scan`.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Report format; each subcommand has its own default.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Required outcome; a mismatch exits with status 1.
    #[arg(long)]
    expect: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transition {
    Quintic,
    Cubic,
}

impl From<Transition> for TransitionFunction {
    fn from(t: Transition) -> Self {
        match t {
            Transition::Quintic => TransitionFunction::Quintic,
            Transition::Cubic => TransitionFunction::Cubic,
        }
    }
}

/// Bad flags or input files (exit 2).
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// An `--expect` outcome that did not hold (exit 1).
#[derive(Debug)]
struct ExpectFailed(String);

impl fmt::Display for ExpectFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expectation failed: {}", self.0)
    }
}

impl std::error::Error for ExpectFailed {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn numbers(text: &str, sep: char, what: &str) -> anyhow::Result<Vec<f64>> {
    text.split(sep)
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{what}: cannot parse `{p}` in `{text}`")))
        })
        .collect()
}

/// `a:b` or `a:b:n`.
fn range(text: &str, what: &str, default_n: usize) -> anyhow::Result<([f64; 2], usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(usage(format!("{what} must be a:b or a:b:n, got `{text}`")));
    }
    let ab = numbers(&parts[..2].join(":"), ':', what)?;
    let n = match parts.get(2) {
        Some(n) => n
            .trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("{what}: bad sample count `{n}`")))?,
        None => default_n,
    };
    if !(ab[0] < ab[1]) || n < 2 {
        return Err(usage(format!("{what} needs a < b and n ≥ 2, got `{text}`")));
    }
    Ok(([ab[0], ab[1]], n))
}

fn point(text: &str, what: &str) -> anyhow::Result<Vec2> {
    match numbers(text, ',', what)?.as_slice() {
        [x, y] => Ok(Vec2::new(*x, *y)),
        _ => Err(usage(format!("{what} must be x,y, got `{text}`"))),
    }
}

struct Loaded {
    sys: NonSmoothSystem,
    file: SystemFile,
}

fn load(common: &Common, mu: Option<f64>) -> anyhow::Result<Loaded> {
    let (sys, file) = load_system(&common.system, mu).map_err(|e| match e {
        ConfigError::Io(_) => usage(e.to_string()),
        _ => usage(format!("{}: {e}", common.system.display())),
    })?;
    Ok(Loaded { sys, file })
}

fn single_mu(common: &Common) -> anyhow::Result<Option<f64>> {
    common
        .mu
        .as_deref()
        .map(|m| {
            m.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--mu must be a number here, got `{m}`")))
        })
        .transpose()
}

struct Output {
    text: String,
    /// `Some(false)` when the requested outcome did not hold.
    expectation: Option<(bool, String)>,
}

fn render<T: Serialize>(
    report: &T,
    table: Option<&CsvTable>,
    format: Format,
) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    emit_report(report, table, format, &mut buf).map_err(|e| usage(e.to_string()))?;
    Ok(String::from_utf8(buf)?)
}

fn format_of(common: &Common, default: Format) -> Format {
    match common.format {
        Some(FormatArg::Json) => Format::Json,
        Some(FormatArg::Csv) => Format::Csv,
        None => default,
    }
}

fn check_expect(common: &Common, allowed: &[&str]) -> anyhow::Result<()> {
    match &common.expect {
        Some(e) if allowed.is_empty() => {
            Err(usage(format!("--expect is not supported here (got `{e}`)")))
        }
        Some(e) if allowed.contains(&"<integer>") && e.parse::<i64>().is_ok() => Ok(()),
        Some(e) if !allowed.contains(&e.as_str()) => Err(usage(format!(
            "--expect must be one of {}, got `{e}`",
            allowed.join(", ")
        ))),
        _ => Ok(()),
    }
}

fn sigma_window(
    text: Option<&str>,
    file: &SystemFile,
    default_n: usize,
) -> anyhow::Result<([f64; 2], usize)> {
    match text {
        Some(t) => range(t, "--window", default_n),
        None => Ok((file.analysis.sigma_window, default_n)),
    }
}

fn flow_settings(file: &SystemFile) -> FlowSettings {
    FlowSettings {
        t_max: file.analysis.t_max,
        ..FlowSettings::default()
    }
}

fn grid(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        if k + 1 == n {
            b
        } else {
            a + (b - a) * k as f64 / (n - 1) as f64
        }
    })
}

#[derive(Serialize)]
struct ClassRow {
    s: f64,
    point: Vec2,
    class: String,
}

fn classify(common: &Common, window: Option<&str>) -> anyhow::Result<Output> {
    check_expect(common, &[])?;
    let l = load(common, single_mu(common)?)?;
    let ([a, b], n) = sigma_window(window, &l.file, 601)?;
    let mut rows = Vec::new();
    for s in grid(a, b, n) {
        let q = l.sys.sigma_point(s)?;
        let class = l.sys.classify_point(q)?;
        rows.push(ClassRow {
            s,
            point: q,
            class: class.label(),
        });
    }
    for fold in l.sys.fold_census(a, b) {
        if rows
            .iter()
            .all(|r| (r.s - fold.s).abs() > 1e-9 * (1.0 + fold.s.abs()))
        {
            rows.push(ClassRow {
                s: fold.s,
                point: fold.point,
                class: fold.class.label(),
            });
        } else if let Some(r) = rows
            .iter_mut()
            .find(|r| (r.s - fold.s).abs() <= 1e-9 * (1.0 + fold.s.abs()))
        {
            r.class = fold.class.label();
        }
    }
    rows.sort_by(|p, q| p.s.total_cmp(&q.s));
    let mut t = CsvTable::new(&["s", "x", "y", "class"]);
    for r in &rows {
        t.push(vec![
            Cell::from(r.s),
            Cell::from(r.point.x),
            Cell::from(r.point.y),
            Cell::from(r.class.clone()),
        ]);
    }
    Ok(Output {
        text: render(&rows, Some(&t), format_of(common, Format::Csv))?,
        expectation: None,
    })
}

#[derive(Serialize)]
struct SlideSample {
    s: f64,
    point: Vec2,
    region: String,
    direction: f64,
    field: Vec2,
}

#[derive(Serialize)]
struct SlideReport {
    samples: Vec<SlideSample>,
    pseudo_equilibria: Vec<PseudoEquilibrium>,
}

fn slide(common: &Common, window: Option<&str>) -> anyhow::Result<Output> {
    check_expect(common, &[])?;
    let l = load(common, single_mu(common)?)?;
    let ([a, b], n) = sigma_window(window, &l.file, 601)?;
    let mut samples = Vec::new();
    for s in grid(a, b, n) {
        let q = l.sys.sigma_point(s)?;
        let class = l.sys.classify_point(q)?;
        if matches!(
            class,
            SigmaClass::Sliding | SigmaClass::Escaping | SigmaClass::PseudoEquilibrium(_)
        ) {
            samples.push(SlideSample {
                s,
                point: q,
                region: class.label(),
                direction: l.sys.direction_at(q)?,
                field: l.sys.sliding_field(q)?,
            });
        }
    }
    let report = SlideReport {
        samples,
        pseudo_equilibria: l.sys.pseudo_equilibria(a, b),
    };
    let mut t = CsvTable::new(&["s", "x", "y", "region", "H", "xdot", "ydot"]);
    for r in &report.samples {
        t.push(vec![
            Cell::from(r.s),
            Cell::from(r.point.x),
            Cell::from(r.point.y),
            Cell::from(r.region.clone()),
            Cell::from(r.direction),
            Cell::from(r.field.x),
            Cell::from(r.field.y),
        ]);
    }
    Ok(Output {
        text: render(&report, Some(&t), format_of(common, Format::Csv))?,
        expectation: None,
    })
}

fn orbit(common: &Common, from: &str, t_max: Option<f64>) -> anyhow::Result<Output> {
    check_expect(common, &[])?;
    let q0 = point(from, "--from")?;
    let l = load(common, single_mu(common)?)?;
    let mut settings = flow_settings(&l.file);
    if let Some(t) = t_max {
        settings.t_max = t;
    }
    let orbit = hybrid_orbit(&l.sys, q0, &settings)?;
    if let Some(d) = &orbit.diagnostic {
        eprintln!("orbit: {d}");
    }
    let text = match format_of(common, Format::Csv) {
        Format::Csv => orbit.to_csv(),
        Format::Json => render(&orbit, None, Format::Json)?,
    };
    Ok(Output {
        text,
        expectation: None,
    })
}

fn canard_report(l: &Loaded, window: Option<&str>) -> anyhow::Result<CanardReport> {
    let ([a, b], _) = sigma_window(window, &l.file, 2)?;
    Ok(detect_canard_one_fold(
        &l.sys,
        [a, b],
        &flow_settings(&l.file),
    )?)
}

fn canard(common: &Common, window: Option<&str>) -> anyhow::Result<Output> {
    check_expect(common, &["canard", "no-canard"])?;
    let l = load(common, single_mu(common)?)?;
    let report = canard_report(&l, window)?;
    if let Some(d) = &report.diagnostic {
        eprintln!("canard: {d}");
    }
    let table = report.cycle.as_ref().map(|c| c.to_csv());
    let text = render(&report, table.as_ref(), format_of(common, Format::Json))?;
    let expectation = common.expect.as_deref().map(|e| {
        let ok = (e == "canard") == report.found;
        (ok, format!("expected {e}, canard found = {}", report.found))
    });
    Ok(Output { text, expectation })
}

fn scan(common: &Common, window: Option<&str>) -> anyhow::Result<Output> {
    check_expect(common, &["bifurcation", "no-bifurcation"])?;
    let file = load_file(&common.system)?;
    let (mu_range, n) = match (common.mu.as_deref(), file.analysis.mu_range) {
        (Some(text), _) => range(text, "--mu", 21)?,
        (None, Some(r)) => (r, 21),
        (None, None) => {
            return Err(usage(
                "scan needs --mu a:b:n or analysis.mu_range in the system file",
            ))
        }
    };
    // validate the family once before the parallel scan
    file.instantiate(Some(mu_range[0]))
        .map_err(|e| usage(e.to_string()))?;
    let ([a, b], _) = sigma_window(window, &file, 2)?;
    let settings = flow_settings(&file);
    let report = sigma_loop_scan(
        |mu| file.instantiate(Some(mu)),
        mu_range,
        n,
        [a, b],
        &settings,
    );
    let text = render(
        &report,
        Some(&report.to_csv()),
        format_of(common, Format::Csv),
    )?;
    if let Some(mu) = report.bifurcation {
        eprintln!(
            "scan: sigma-loop bifurcation at mu = {}",
            filippov::io::sci(mu)
        );
    }
    let expectation = common.expect.as_deref().map(|e| {
        let ok = (e == "bifurcation") == report.bifurcation.is_some();
        (
            ok,
            format!("expected {e}, bifurcation = {:?}", report.bifurcation),
        )
    });
    Ok(Output { text, expectation })
}

fn load_file(path: &Path) -> anyhow::Result<SystemFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    filippov::io::parse_system_file(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn gamma0(l: &Loaded, window: Option<&str>) -> anyhow::Result<Vec<Vec2>> {
    let report = canard_report(l, window)?;
    match report.cycle {
        Some(c) if report.found => Ok(c.polyline()),
        _ => Err(anyhow!(
            "no canard cycle to regularize ({})",
            report
                .diagnostic
                .unwrap_or_else(|| "detector returned no cycle".into())
        )),
    }
}

fn regularize(
    common: &Common,
    epsilon: f64,
    transition: Transition,
    from: Option<&str>,
    window: Option<&str>,
) -> anyhow::Result<Output> {
    check_expect(common, &["hyperbolic"])?;
    if !(epsilon > 0.0) {
        return Err(usage(format!("--epsilon must be positive, got {epsilon}")));
    }
    let seed = from.map(|f| point(f, "--from")).transpose()?;
    let l = load(common, single_mu(common)?)?;
    let field = RegularizedField::new(&l.sys, epsilon, transition.into())?;
    let (top, half_width) = match seed {
        Some(p) => (p, 1.0),
        None => {
            let (top, dist) = farthest_from_sigma(&l.sys, &gamma0(&l, window)?)?;
            (top, 0.5 * dist.max(1e-3))
        }
    };
    let cycle = find_limit_cycle_through(&field, top, half_width, &CycleSettings::default())?;
    let text = render(
        &cycle,
        Some(&cycle.to_csv()),
        format_of(common, Format::Json),
    )?;
    let expectation = common.expect.as_deref().map(|_| {
        (
            cycle.hyperbolic,
            format!(
                "multiplier {} ± {}",
                cycle.multiplier, cycle.multiplier_error
            ),
        )
    });
    Ok(Output { text, expectation })
}

fn converge(
    common: &Common,
    epsilons: Option<&str>,
    transition: Transition,
    window: Option<&str>,
) -> anyhow::Result<Output> {
    check_expect(common, &["convergence"])?;
    let eps = epsilons
        .map(|e| numbers(e, ',', "--epsilons"))
        .transpose()?;
    if let Some(bad) = eps.iter().flatten().find(|e| !(**e > 0.0)) {
        return Err(usage(format!("--epsilons must be positive, got {bad}")));
    }
    let l = load(common, single_mu(common)?)?;
    let eps = eps.unwrap_or_else(|| l.file.analysis.epsilon_list.clone());
    let g0 = gamma0(&l, window)?;
    let study = convergence_study(
        &l.sys,
        &g0,
        &eps,
        &transition.into(),
        &CycleSettings::default(),
    )?;
    for r in &study.rows {
        if let Some(e) = &r.error {
            eprintln!("converge: epsilon = {}: {e}", r.epsilon);
        }
    }
    let text = render(
        &study,
        Some(&study.to_csv()),
        format_of(common, Format::Csv),
    )?;
    let expectation = common.expect.as_deref().map(|_| {
        let complete = study.rows.iter().all(|r| r.error.is_none());
        (
            complete && study.strictly_decreasing,
            "hausdorff distances strictly decrease".to_string(),
        )
    });
    Ok(Output { text, expectation })
}

fn index(common: &Common, path: Option<&Path>, circle: Option<&str>) -> anyhow::Result<Output> {
    check_expect(common, &["<integer>"])?;
    let closed = match (path, circle) {
        (Some(p), _) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let pts = parse_path_file(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            ClosedPath::new(pts).map_err(|e| usage(e.to_string()))?
        }
        (None, Some(c)) => match numbers(c, ',', "--circle")?.as_slice() {
            [cx, cy, r] if *r > 0.0 => ClosedPath::circle(Vec2::new(*cx, *cy), *r, 720)?,
            _ => {
                return Err(usage(format!(
                    "--circle must be cx,cy,r with r > 0, got `{c}`"
                )))
            }
        },
        (None, None) => return Err(usage("index needs --path or --circle")),
    };
    let l = load(common, single_mu(common)?)?;
    let settings = IndexSettings::default();
    let mut report = angle_winding(&l.sys, &closed, &settings)?;
    let margin = 1e-3 * closed.diameter();
    match interior_census(&l.sys, closed.vertices(), margin, &settings) {
        Ok(points) => report.interior = points,
        Err(e) => eprintln!("index: interior census failed: {e}"),
    }
    let text = render(&report, None, format_of(common, Format::Json))?;
    let expectation = common.expect.as_deref().map(|e| {
        let want: i64 = e.parse().unwrap_or(i64::MIN);
        (
            report.index == want,
            format!("expected index {want}, got {}", report.index),
        )
    });
    Ok(Output { text, expectation })
}

fn blowup(
    common: &Common,
    theta: Option<f64>,
    theta_range: Option<&str>,
    window: Option<&str>,
    transition: Transition,
) -> anyhow::Result<Output> {
    check_expect(common, &[])?;
    let l = load(common, single_mu(common)?)?;
    let spp =
        sp_from_regularization(&l.sys, transition.into()).map_err(|e| usage(e.to_string()))?;
    let ([a, b], _) = sigma_window(window, &l.file, 2)?;
    let settings = SlowSettings::default();
    let trace = match theta {
        Some(th) => {
            if !(th > 0.0 && th < std::f64::consts::PI) {
                return Err(usage(format!("--theta must lie in (0, pi), got {th}")));
            }
            let mut rows = Vec::new();
            for y in slow_manifold(&spp, th, [a, b], &settings)? {
                let delta = 1e-3 * (1.0 + y.abs());
                rows.push(TraceRow {
                    theta: th,
                    y,
                    dy_reduced: spp.reduced(th, y)?,
                    dtheta_fast_above: spp.fast(th, y + delta)?.0,
                    dtheta_fast_below: spp.fast(th, y - delta)?.0,
                });
            }
            SlowTrace {
                rows,
                branches: Vec::new(),
                fold_ends: Vec::new(),
                degenerate: spp.is_degenerate(),
            }
        }
        None => {
            let (range, n) = match theta_range {
                Some(t) => range(t, "--theta-range", 200)?,
                None => ([FRAC_PI_4, 3.0 * FRAC_PI_4], 200),
            };
            trace_slow_dynamics(&spp, range, n, [a, b], &settings)?
        }
    };
    if trace.degenerate {
        eprintln!("blowup: the normal components vanish on Σ; slow manifold is degenerate");
    }
    let text = render(
        &trace,
        Some(&trace.to_csv()),
        format_of(common, Format::Csv),
    )?;
    Ok(Output {
        text,
        expectation: None,
    })
}

fn run(cli: &Cli) -> anyhow::Result<Output> {
    match &cli.command {
        Command::Classify { common, window } => classify(common, window.as_deref()),
        Command::Slide { common, window } => slide(common, window.as_deref()),
        Command::Orbit {
            common,
            from,
            t_max,
        } => orbit(common, from, *t_max),
        Command::Canard { common, window } => canard(common, window.as_deref()),
        Command::Scan { common, window } => scan(common, window.as_deref()),
        Command::Regularize {
            common,
            epsilon,
            transition,
            from,
            window,
        } => regularize(
            common,
            *epsilon,
            *transition,
            from.as_deref(),
            window.as_deref(),
        ),
        Command::Converge {
            common,
            epsilons,
            transition,
            window,
        } => converge(common, epsilons.as_deref(), *transition, window.as_deref()),
        Command::Index {
            common,
            path,
            circle,
        } => index(common, path.as_deref(), circle.as_deref()),
        Command::Blowup {
            common,
            theta,
            theta_range,
            window,
            transition,
        } => blowup(
            common,
            *theta,
            theta_range.as_deref(),
            window.as_deref(),
            *transition,
        ),
    }
}

fn common(cli: &Cli) -> &Common {
    match &cli.command {
        Command::Classify { common, .. }
        | Command::Slide { common, .. }
        | Command::Orbit { common, .. }
        | Command::Canard { common, .. }
        | Command::Scan { common, .. }
        | Command::Regularize { common, .. }
        | Command::Converge { common, .. }
        | Command::Index { common, .. }
        | Command::Blowup { common, .. } => common,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("FILIPPOV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            usage(format!(
                "FILIPPOV_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn write_output(cli: &Cli, text: &str) -> anyhow::Result<()> {
    match &common(cli).output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                // a closed downstream pipe is not a failure of the analysis
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| run_and_write(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ExpectFailed>() {
                ExitCode::from(1)
            } else if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run_and_write(cli: &Cli) -> anyhow::Result<()> {
    let output = run(cli)?;
    write_output(cli, &output.text)?;
    match output.expectation {
        Some((false, why)) => Err(anyhow::Error::new(ExpectFailed(why))),
        _ => Ok(()),
    }
}
