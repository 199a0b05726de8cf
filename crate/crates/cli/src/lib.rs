//! Command-line experiments: every command produces a numeric CSV table and
//! a few summary scalars.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::path::PathBuf;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};
use impasse::exec::Execution;
use impasse::geometry::{classify_semilinear, Gamma, ImpasseAnalysis, ImpasseKind, SemiLinearProblem};
use impasse::lane_emden::{
    effectiveness_factor, effectiveness_surface, first_zero, le_bvp, le_ivp, le_system_bvp, BvpOptions,
    CatalystSystemModel, IvpOptions, LaneEmdenModel, ParametricSolution, SystemBvpOptions, OXYGEN_SETS,
};
use impasse::solvers::{RobinBc, ShootMethod};
use impasse::thomas_fermi::{
    self as tf, critical_slope_with, critical_v, large_x_table, majorana_coeffs, phase_family, solve_bc_crystal,
    solve_bc_ion, BcOptions, CriticalOptions, SlopeOptions, TFSolution, TfTermination,
};
use impasse::StepControl;
use thiserror::Error;

mod table;

pub use table::{format_number, write_csv, CsvTable};

/// `x` values of the large-x table.
pub const DEFAULT_TF_POINTS: [f64; 10] = [0.0, 10.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0];

/// Value the published tables use for the critical slope.
pub const PUBLISHED_OMEGA: f64 = -1.58807101687867;

const PROFILE_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum CliError {
    /// `--help` or `--version`; not an error for the exit code.
    #[error("{0}")]
    Display(String),
    #[error("{0}")]
    Usage(String),
    #[error("{stage} failed: {message}")]
    Solver { stage: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Display(_) => 0,
            CliError::Solver { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn solver(stage: &str) -> impl FnOnce(impasse::Error) -> CliError + '_ {
    move |e| CliError::Solver {
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(format!("error: {}", msg.into()))
}

#[derive(Debug, Clone, Parser, PartialEq)]
#[command(name = "impasse", version, about = "Singular Lane–Emden and Thomas–Fermi experiments as CSV tables")]
pub struct Invocation {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, PartialEq)]
pub struct GlobalOpts {
    /// Relative integration tolerance [default: 1e-6; Thomas–Fermi commands use tighter defaults]
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
    /// Absolute integration tolerance [default: 1e-7]
    #[arg(long, global = true)]
    pub tol_abs: Option<f64>,
    /// Distance of the seed from the stationary point
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Write the CSV table here instead of standard output
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Right end of the integration in x
    #[arg(long, global = true)]
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Subcommand, PartialEq)]
pub enum Command {
    /// Lane–Emden polytrope u'' + (N−1)/x u' = −uⁿ, u(0) = 1
    Polytrope {
        #[arg(long = "N", value_parser = clap::value_parser!(u8).range(2..=3))]
        shape: u8,
        #[arg(long = "n")]
        index: f64,
    },
    /// Two-point problem u'(0) = 0, α u(1) + β u'(1) = γ
    LeBvp {
        #[arg(long = "N", default_value_t = 3.0)]
        shape: f64,
        /// power:n[:coef] (h = coef uⁿ, coef defaults to −1), custom:linear:PHI2,
        /// custom:biocatalyst:PHI2:K or custom:oxygen:A:K
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Effectiveness factor of the Michaelis–Menten biocatalyst
    #[command(group(ArgGroup::new("phi2_input").required(true).args(["phi2", "phi2_grid"])))]
    #[command(group(ArgGroup::new("k_input").required(true).args(["k", "k_grid"])))]
    Biocatalyst {
        #[arg(long)]
        phi2: Option<f64>,
        /// lo:hi:count, linearly spaced
        #[arg(long)]
        phi2_grid: Option<String>,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long = "K-grid")]
        k_grid: Option<String>,
    },
    /// Oxygen uptake with a Robin condition α u(1) + u'(1) = α
    #[command(group(ArgGroup::new("params").required(true).args(["set", "a"])))]
    Oxygen {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        set: Option<u8>,
        #[arg(long, requires_all = ["k", "alpha"])]
        a: Option<f64>,
        #[arg(long = "K", requires = "a")]
        k: Option<f64>,
        #[arg(long, requires = "a")]
        alpha: Option<f64>,
    },
    /// Three-species catalyst system, u = v = w = 1 at x = 1
    CatalystSystem {
        #[arg(long, default_value_t = 30.0)]
        mu_u: f64,
        #[arg(long, default_value_t = 0.01)]
        mu_v: f64,
        #[arg(long, default_value_t = 0.01)]
        mu_w: f64,
        #[arg(long, default_value_t = 3.0)]
        lambda_u: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda_v: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda_w: f64,
    },
    /// Critical slope of the Thomas–Fermi equation
    TfSlope {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Partial sums of the Majorana series for the critical slope
    TfSeries {
        #[arg(long, default_value_t = 100)]
        terms: usize,
    },
    /// Critical Thomas–Fermi solution at given x
    TfSolution {
        /// Comma-separated x values
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<f64>>,
    },
    /// Family of solutions with prescribed u'(0) around the critical one
    TfPhase {
        /// Comma-separated values of v0 = −(16/3)^{1/3} u'(0)
        #[arg(long, value_delimiter = ',', conflicts_with = "count")]
        v0_list: Option<Vec<f64>>,
        /// Number of curves spread over ±5 % of the critical v0
        #[arg(long)]
        count: Option<usize>,
    },
    /// Ion (u(a) = 0) or crystal (b u'(b) = u(b)) boundary condition
    #[command(group(ArgGroup::new("bc").required(true).args(["ion_a", "crystal_b"])))]
    TfBvp {
        #[arg(long)]
        ion_a: Option<f64>,
        #[arg(long)]
        crystal_b: Option<f64>,
    },
    /// Impasse-point analysis for a catalogue of models
    Classify {
        /// Also analyse this Lane–Emden shape parameter (with --model)
        #[arg(long = "N", requires = "model")]
        shape: Option<f64>,
        #[arg(long)]
        model: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Polytrope { .. } => "polytrope",
            Command::LeBvp { .. } => "le-bvp",
            Command::Biocatalyst { .. } => "biocatalyst",
            Command::Oxygen { .. } => "oxygen",
            Command::CatalystSystem { .. } => "catalyst-system",
            Command::TfSlope { .. } => "tf-slope",
            Command::TfSeries { .. } => "tf-series",
            Command::TfSolution { .. } => "tf-solution",
            Command::TfPhase { .. } => "tf-phase",
            Command::TfBvp { .. } => "tf-bvp",
            Command::Classify { .. } => "classify",
        }
    }
}

/// Parse `argv` (program name first).
pub fn parse_invocation<I, T>(argv: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::error::ErrorKind;
    Invocation::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Display(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })
}

/// Table plus headline scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: CsvTable,
    pub summary: Vec<(String, String)>,
}

impl Report {
    fn new(table: CsvTable) -> Self {
        Self {
            table,
            summary: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn num(&mut self, key: &str, value: f64) {
        self.note(key, format_number(value));
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.summary.iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }
}

pub fn execute(inv: &Invocation) -> Result<Report, CliError> {
    let g = &inv.global;
    check_positive("--epsilon", Some(g.epsilon))?;
    check_positive("--tol-rel", g.tol_rel)?;
    check_positive("--tol-abs", g.tol_abs)?;
    check_positive("--x-max", g.x_max)?;
    match &inv.command {
        Command::Polytrope { shape, index } => polytrope(g, *shape as f64, *index),
        Command::LeBvp {
            shape,
            model,
            alpha,
            beta,
            gamma,
        } => bvp(g, *shape, model, *alpha, *beta, *gamma),
        Command::Biocatalyst {
            phi2,
            phi2_grid,
            k,
            k_grid,
        } => biocatalyst(g, *phi2, phi2_grid.as_deref(), *k, k_grid.as_deref()),
        Command::Oxygen { set, a, k, alpha } => oxygen(g, *set, *a, *k, *alpha),
        Command::CatalystSystem {
            mu_u,
            mu_v,
            mu_w,
            lambda_u,
            lambda_v,
            lambda_w,
        } => catalyst(
            g,
            CatalystSystemModel {
                mu_u: *mu_u,
                mu_v: *mu_v,
                mu_w: *mu_w,
                lambda_u: *lambda_u,
                lambda_v: *lambda_v,
                lambda_w: *lambda_w,
            },
        ),
        Command::TfSlope { tol } => tf_slope(g, *tol),
        Command::TfSeries { terms } => tf_series(*terms),
        Command::TfSolution { points } => tf_solution(g, points.as_deref().unwrap_or(&DEFAULT_TF_POINTS)),
        Command::TfPhase { v0_list, count } => tf_phase(g, v0_list.as_deref(), *count),
        Command::TfBvp { ion_a, crystal_b } => tf_bvp(g, *ion_a, *crystal_b),
        Command::Classify { shape, model } => classify(*shape, model.as_deref()),
    }
}

fn check_positive(flag: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => Err(usage(format!("{flag} must be positive and finite, got {x}"))),
        _ => Ok(()),
    }
}

fn ctrl(g: &GlobalOpts, rel: f64, abs: f64) -> StepControl {
    StepControl::default().tolerances(g.tol_rel.unwrap_or(rel), g.tol_abs.unwrap_or(abs))
}

fn le_ctrl(g: &GlobalOpts) -> StepControl {
    ctrl(g, 1e-6, 1e-7)
}

/// `lo:hi:count`, linear spacing.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || usage(format!("grid must be lo:hi:count, got '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && !(hi > lo)) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Model grammar of `le-bvp` and `classify`.
pub fn parse_model(spec: &str, shape: f64) -> Result<LaneEmdenModel, CliError> {
    let bad = |why: &str| usage(format!("--model '{spec}': {why}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let nums = |xs: &[&str]| -> Result<Vec<f64>, CliError> {
        xs.iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("expected a number")))
            .collect()
    };
    let fixed_sphere = || -> Result<(), CliError> {
        if shape == 3.0 {
            Ok(())
        } else {
            Err(bad("this model is defined for N = 3 only"))
        }
    };
    let model = match parts.as_slice() {
        ["power", rest @ ..] if (1..=2).contains(&rest.len()) => {
            let v = nums(rest)?;
            let (n, coef) = (v[0], v.get(1).copied().unwrap_or(-1.0));
            power_model(shape, n, coef)
        }
        ["custom", "linear", rest @ ..] if rest.len() == 1 => LaneEmdenModel::linear(shape, nums(rest)?[0]),
        ["custom", "biocatalyst", rest @ ..] if rest.len() == 2 => {
            fixed_sphere()?;
            let v = nums(rest)?;
            LaneEmdenModel::biocatalyst(v[0], v[1])
        }
        ["custom", "oxygen", rest @ ..] if rest.len() == 2 => {
            fixed_sphere()?;
            let v = nums(rest)?;
            LaneEmdenModel::oxygen(v[0], v[1])
        }
        _ => return Err(bad("expected power:n[:coef], custom:linear:PHI2, custom:biocatalyst:PHI2:K or custom:oxygen:A:K")),
    };
    model.map_err(|e| bad(&e.to_string()))
}

fn power_model(shape: f64, n: f64, coef: f64) -> impasse::Result<LaneEmdenModel> {
    if coef == -1.0 {
        return LaneEmdenModel::polytrope(shape, n);
    }
    if !(n >= 0.0) || !n.is_finite() || !coef.is_finite() {
        return Err(impasse::Error::InvalidInput(format!("bad power model n = {n}, coef = {coef}")));
    }
    if n.fract() == 0.0 && n <= i32::MAX as f64 {
        let k = n as i32;
        Ok(LaneEmdenModel::new(shape, move |_, u| coef * u.powi(k))?
            .with_h_u(move |_, u| if k == 0 { 0.0 } else { coef * k as f64 * u.powi(k - 1) }))
    } else {
        Ok(LaneEmdenModel::new(shape, move |_, u| coef * u.max(0.0).powf(n))?
            .with_h_u(move |_, u| if u > 0.0 { coef * n * u.powf(n - 1.0) } else { 0.0 })
            .stop_at_zero(true))
    }
}

fn profile_table(sol: &ParametricSolution, x_end: f64) -> Result<CsvTable, CliError> {
    let d = sol.d();
    let mut header = vec!["x".to_string()];
    let names = ["u", "v", "w"];
    let name = |i: usize| if d == 1 { "u".to_string() } else { names.get(i).map_or(format!("u{i}"), |s| s.to_string()) };
    header.extend((0..d).map(name));
    header.extend((0..d).map(|i| format!("{}prime", name(i))));
    let mut t = CsvTable::new(header);
    for i in 0..PROFILE_POINTS {
        let x = x_end * i as f64 / (PROFILE_POINTS - 1) as f64;
        let y = sol.eval_at_x(x).map_err(solver("profile evaluation"))?;
        t.push(y);
    }
    Ok(t)
}

fn polytrope(g: &GlobalOpts, shape: f64, n: f64) -> Result<Report, CliError> {
    let model = LaneEmdenModel::polytrope(shape, n)
        .map_err(|e| usage(format!("--n: {e}")))?
        .stop_at_zero(true);
    let opts = IvpOptions::default()
        .ctrl(le_ctrl(g))
        .epsilon(g.epsilon)
        .x_max(g.x_max.unwrap_or(50.0));
    let sol = le_ivp(&model, 1.0, &opts).map_err(solver("polytrope integration"))?;
    let mut r = Report::new(profile_table(&sol, sol.x_end())?);
    r.num("N", shape);
    r.num("n", n);
    match first_zero(&model, 1.0, &opts) {
        Ok(z) => {
            r.num("xi1", z.xi1);
            r.num("uprime_xi1", z.du);
            r.num("r", z.ratio);
        }
        Err(_) => r.note("xi1", "none before x_max"),
    }
    r.num("ode_residual", sol.ode_residual_sup(1e-2).map_err(solver("residual check"))?);
    Ok(r)
}

fn bvp(g: &GlobalOpts, shape: f64, model: &str, alpha: f64, beta: f64, gamma: f64) -> Result<Report, CliError> {
    let m = parse_model(model, shape)?;
    let bc = RobinBc::new(alpha, beta, gamma).map_err(|e| usage(format!("--alpha/--beta/--gamma: {e}")))?;
    let mut opts = BvpOptions::default().ctrl(le_ctrl(g));
    opts.ivp = opts.ivp.epsilon(g.epsilon);
    if model.starts_with("custom:biocatalyst") || model.starts_with("custom:oxygen") {
        opts = opts.bracket(0.0, 1.0);
    }
    let sol = le_bvp(&m, bc, &opts).map_err(solver("shooting"))?;
    let mut r = Report::new(profile_table(&sol.solution, 1.0)?);
    r.num("u0", sol.root.x);
    r.num("residual", sol.residual);
    r.note("iterations", sol.root.iterations);
    r.num("ode_residual", sol.solution.ode_residual_sup(1e-2).map_err(solver("residual check"))?);
    Ok(r)
}

fn biocatalyst(
    g: &GlobalOpts,
    phi2: Option<f64>,
    phi2_grid: Option<&str>,
    k: Option<f64>,
    k_grid: Option<&str>,
) -> Result<Report, CliError> {
    let opts = BvpOptions {
        ivp: IvpOptions::default().ctrl(le_ctrl(g)).epsilon(g.epsilon).x_max(1.0),
        ..BvpOptions::default()
    };
    let mut t = CsvTable::new(["phi2", "K", "eta"]);
    if let (Some(p), Some(k)) = (phi2, k) {
        let eta = effectiveness_factor(p, k, &opts).map_err(solver("effectiveness factor"))?;
        t.push(vec![p, k, eta]);
        let mut r = Report::new(t);
        r.num("eta", eta);
        return Ok(r);
    }
    let ps = match (phi2, phi2_grid) {
        (Some(p), _) => vec![p],
        (None, Some(s)) => parse_grid(s)?,
        (None, None) => unreachable!("clap requires one"),
    };
    let ks = match (k, k_grid) {
        (Some(k), _) => vec![k],
        (None, Some(s)) => parse_grid(s)?,
        (None, None) => unreachable!("clap requires one"),
    };
    let start = Instant::now();
    let cells = effectiveness_surface(&ps, &ks, &opts, Execution::Parallel).map_err(|e| usage(e.to_string()))?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut failed = 0;
    for c in &cells {
        failed += usize::from(c.error.is_some());
        t.push(vec![c.phi2, c.k, c.eta]);
    }
    let etas = cells.iter().map(|c| c.eta).filter(|e| e.is_finite());
    let (lo, hi) = etas.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e), b.max(e)));
    let mut r = Report::new(t);
    r.note("cells", cells.len());
    r.note("failed", failed);
    r.num("eta_min", lo);
    r.num("eta_max", hi);
    r.note("seconds", format!("{elapsed:.3}"));
    Ok(r)
}

fn oxygen(g: &GlobalOpts, set: Option<u8>, a: Option<f64>, k: Option<f64>, alpha: Option<f64>) -> Result<Report, CliError> {
    let (a, k, alpha) = match (set, a, k, alpha) {
        (Some(s), ..) => OXYGEN_SETS[s as usize - 1],
        (None, Some(a), Some(k), Some(alpha)) => (a, k, alpha),
        _ => return Err(usage("oxygen needs --set or all of --a, --K, --alpha")),
    };
    let model = LaneEmdenModel::oxygen(a, k).map_err(|e| usage(e.to_string()))?;
    let bc = RobinBc::new(alpha, 1.0, alpha).map_err(|e| usage(e.to_string()))?;
    let mut opts = BvpOptions::default().ctrl(le_ctrl(g)).bracket(0.0, 1.0).tol(1e-9);
    opts.ivp = opts.ivp.epsilon(g.epsilon);
    let st = le_bvp(&model, bc, &opts).map_err(solver("Steffensen shooting"))?;
    let bi = le_bvp(&model, bc, &opts.method(ShootMethod::Bisection)).map_err(solver("bisection shooting"))?;
    let mut r = Report::new(profile_table(&st.solution, 1.0)?);
    r.num("a", a);
    r.num("K", k);
    r.num("alpha", alpha);
    r.num("u0", st.root.x);
    r.num("u0_bisection", bi.root.x);
    r.num("residual", st.residual);
    Ok(r)
}

fn catalyst(g: &GlobalOpts, model: CatalystSystemModel) -> Result<Report, CliError> {
    let opts = SystemBvpOptions {
        ivp: IvpOptions::default().ctrl(le_ctrl(g)).epsilon(g.epsilon).x_max(1.0),
        ..SystemBvpOptions::default()
    };
    let sol = le_system_bvp(&model, &opts).map_err(|e| match e {
        impasse::Error::InvalidInput(m) => usage(m),
        e => solver("Newton shooting")(e),
    })?;
    let mut r = Report::new(profile_table(&sol.solution, 1.0)?);
    for (name, v) in ["u0", "v0", "w0"].iter().zip(&sol.u0) {
        r.num(name, *v);
    }
    r.num("residual", sol.residual);
    r.note("iterations", sol.iterations);
    Ok(r)
}

fn reference_slope() -> f64 {
    // the partial sums converge linearly; 300 terms reach double precision
    tf::slope_from_series(300)
}

fn tf_slope(g: &GlobalOpts, tol: f64) -> Result<Report, CliError> {
    if !(tol >= 1e-13) || !tol.is_finite() {
        return Err(usage(format!("--tol must be at least 1e-13 (double precision), got {tol}")));
    }
    let opts = CriticalOptions::with_tol(tol).epsilon(g.epsilon);
    let start = Instant::now();
    let omega = critical_slope_with(&opts).map_err(solver("unstable manifold integration"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let limit = reference_slope();
    let rel_limit = ((omega - limit) / limit).abs();
    let rel_pub = ((omega - PUBLISHED_OMEGA) / PUBLISHED_OMEGA).abs();
    let mut t = CsvTable::new(["tol", "omega", "rel_err_limit", "rel_err_published"]);
    t.push(vec![tol, omega, rel_limit, rel_pub]);
    let mut r = Report::new(t);
    r.num("omega", omega);
    r.num("v0", tf::v_from_slope(omega));
    r.num("rel_err_limit", rel_limit);
    r.num("rel_err_published", rel_pub);
    r.note("seconds", format!("{elapsed:.4}"));
    Ok(r)
}

fn tf_series(terms: usize) -> Result<Report, CliError> {
    if terms < 1 {
        return Err(usage("--terms must be at least 1"));
    }
    let series = majorana_coeffs(terms).map_err(|e| usage(e.to_string()))?;
    let limit = reference_slope();
    let mut t = CsvTable::new(["terms", "a_n", "omega_n", "rel_err"]);
    let mut sum = 0.0;
    for (n, a) in series.coeffs.iter().enumerate() {
        sum += a;
        let w = tf::slope_from_v(sum);
        t.push(vec![n as f64, *a, w, ((w - limit) / limit).abs()]);
    }
    let w = series.slope();
    let mut r = Report::new(t);
    r.num("omega", w);
    r.num("rel_err", ((w - limit) / limit).abs());
    Ok(r)
}

fn tf_solution(g: &GlobalOpts, points: &[f64]) -> Result<Report, CliError> {
    if let Some(x) = points.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(usage(format!("--points must be non-negative, got {x}")));
    }
    let opts = CriticalOptions::default()
        .ctrl(ctrl(g, 1e-12, 1e-12))
        .epsilon(g.epsilon);
    let rows = large_x_table(points, &opts).map_err(solver("critical solution"))?;
    let mut t = CsvTable::new(["x", "u", "uprime"]);
    for (x, u, up) in rows {
        t.push(vec![x, u, up]);
    }
    let mut r = Report::new(t);
    let eps = if points.iter().any(|&x| x > 200.0) {
        g.epsilon.min(tf::FAR_EPSILON)
    } else {
        g.epsilon
    };
    r.num("epsilon", eps);
    Ok(r)
}

fn termination_code(t: TfTermination) -> f64 {
    match t {
        TfTermination::Origin => 0.0,
        TfTermination::Zero => 1.0,
        TfTermination::Crystal => 2.0,
        TfTermination::Turning => 3.0,
        TfTermination::XMax => 4.0,
        TfTermination::Blowup => 5.0,
        TfTermination::SpanEnd => 6.0,
    }
}

fn tf_phase(g: &GlobalOpts, v0_list: Option<&[f64]>, count: Option<usize>) -> Result<Report, CliError> {
    let vc = critical_v(&CriticalOptions::with_tol(1e-11)).map_err(solver("critical slope"))?;
    let v0s: Vec<f64> = match v0_list {
        Some(list) => list.to_vec(),
        None => {
            let n = count.unwrap_or(9);
            if n == 0 {
                return Err(usage("--count must be positive"));
            }
            if n == 1 {
                vec![vc]
            } else {
                (0..n).map(|i| vc * (0.95 + 0.1 * i as f64 / (n - 1) as f64)).collect()
            }
        }
    };
    let opts = SlopeOptions::default()
        .ctrl(ctrl(g, 1e-10, 1e-10))
        .x_max(g.x_max.unwrap_or(20.0));
    let sols = phase_family(&v0s, &opts, Execution::Parallel);
    let mut t = CsvTable::new(["v0", "end", "s", "t", "v", "x", "u", "uprime"]);
    let mut r = Report::new(CsvTable::new(Vec::<String>::new()));
    r.num("v_critical", vc);
    for (v0, sol) in v0s.iter().zip(sols) {
        let sol: TFSolution = sol.map_err(solver("slope family integration"))?;
        let code = termination_code(sol.termination);
        for p in sol.nodes() {
            t.push(vec![*v0, code, p.s, p.t, p.v, p.x, p.u, p.uprime]);
        }
        r.note(&format!("v0={}", format_number(*v0)), format!("{:?}", sol.termination));
    }
    r.table = t;
    Ok(r)
}

fn tf_bvp(g: &GlobalOpts, ion_a: Option<f64>, crystal_b: Option<f64>) -> Result<Report, CliError> {
    let opts = BcOptions {
        ctrl: ctrl(g, 1e-11, 1e-11),
        critical: CriticalOptions::with_tol(1e-11).epsilon(g.epsilon),
        ..BcOptions::default()
    };
    let (kind, target, res) = match (ion_a, crystal_b) {
        (Some(a), None) => {
            check_positive("--ion-a", Some(a))?;
            ("ion", a, solve_bc_ion(a, &opts).map_err(solver("ion shooting"))?)
        }
        (None, Some(b)) => {
            check_positive("--crystal-b", Some(b))?;
            ("crystal", b, solve_bc_crystal(b, &opts).map_err(solver("crystal shooting"))?)
        }
        _ => return Err(usage("give exactly one of --ion-a, --crystal-b")),
    };
    let (_, hi) = res.solution.x_range();
    let x_end = target.min(hi);
    let mut t = CsvTable::new(["x", "u", "uprime"]);
    for i in 0..PROFILE_POINTS {
        let x = x_end * i as f64 / (PROFILE_POINTS - 1) as f64;
        let (u, up) = res.solution.evaluate_at_x(x).map_err(solver("profile evaluation"))?;
        t.push(vec![x, u, up]);
    }
    let mut r = Report::new(t);
    r.note("condition", kind);
    r.num("v0", res.v0);
    r.num("uprime0", tf::slope_from_v(res.v0));
    r.num("located", res.located);
    r.num("residual", res.residual);
    r.note("iterations", res.iterations);
    Ok(r)
}

fn kind_code(k: ImpasseKind) -> f64 {
    match k {
        ImpasseKind::NotSingular => 0.0,
        ImpasseKind::ProperImpasse => 1.0,
        ImpasseKind::ImproperImpasse => 2.0,
    }
}

fn classify(shape: Option<f64>, model: Option<&str>) -> Result<Report, CliError> {
    let mut cases: Vec<(String, ImpasseAnalysis)> = Vec::new();
    let le = |name: &str, m: LaneEmdenModel, u0: f64| (name.to_string(), classify_semilinear(&m.problem(), [0.0, u0, 0.0]));
    let sphere = LaneEmdenModel::polytrope(3.0, 1.0).map_err(solver("catalogue"))?;
    cases.push(le("polytrope N=3 n=1", sphere, 1.0));
    let cyl = LaneEmdenModel::polytrope(2.0, 1.0).map_err(solver("catalogue"))?;
    cases.push(le("polytrope N=2 n=1", cyl, 1.0));
    let bio = LaneEmdenModel::biocatalyst(1.0, 1.0).map_err(solver("catalogue"))?;
    cases.push(le("biocatalyst phi2=1 K=1", bio, 0.5));
    let oxy = LaneEmdenModel::oxygen(OXYGEN_SETS[0].0, OXYGEN_SETS[0].1).map_err(solver("catalogue"))?;
    cases.push(le("oxygen set 1", oxy, 0.5));
    let thomas_fermi = SemiLinearProblem::new(
        |x: f64| x.max(0.0).sqrt(),
        |x: f64| 0.5 / x.sqrt(),
        |_, u: f64, _| u.max(0.0).powf(1.5),
        |_, _, _| 0.0,
    );
    cases.push((
        "thomas-fermi sqrt(x) u'' = u^1.5".to_string(),
        classify_semilinear(&thomas_fermi, [0.0, 1.0, PUBLISHED_OMEGA]),
    ));
    if let (Some(n), Some(spec)) = (shape, model) {
        let m = parse_model(spec, n)?;
        cases.push(le(&format!("N={} {spec}", format_number(n)), m, 1.0));
    }

    let mut t = CsvTable::new([
        "case", "kind", "delta", "gamma", "lambda", "unique", "ev0", "ev1", "ev2",
    ]);
    let mut r = Report::new(CsvTable::new(Vec::<String>::new()));
    for (i, (name, a)) in cases.iter().enumerate() {
        let gamma = match &a.gamma {
            Gamma::Scalar(g) => *g,
            // the eigenvalue of Γ closest to the imaginary axis
            Gamma::Matrix(m) => m
                .clone()
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let (lambda, ev) = match &a.unstable {
            Some((l, v)) => (*l, (0..3).map(|k| v.get(k).copied().unwrap_or(f64::NAN)).collect()),
            None => (f64::NAN, vec![f64::NAN; 3]),
        };
        let mut row = vec![i as f64, kind_code(a.kind), a.delta, gamma, lambda, f64::from(u8::from(a.unique_solution))];
        row.extend(ev);
        t.push(row);
        r.note(&format!("case {i}"), format!("{name}: {:?}", a.kind));
    }
    r.table = t;
    Ok(r)
}
