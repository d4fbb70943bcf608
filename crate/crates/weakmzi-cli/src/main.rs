//! Command-line surface for the nested-interferometer weak-measurement
//! toolkit: weak values, figure data, meter distributions, Wigner analysis,
//! hidden-variable diagnostics, and Monte Carlo verdicts.
//!
//! Exit codes: 0 = success (and, for `simulate`, all statistical tests
//! passed); 2 = a statistical comparison failed; 1 = usage or internal error.

mod envelope;

use clap::{Args, Parser, Subcommand, ValueEnum};
use envelope::{Cell, Envelope, Format};
use std::f64::consts::FRAC_PI_2;
use weakmzi::interferometer::{bare_probability, weak_value, DetectorId, ExperimentConfig};
use weakmzi::lhv::{
    convex_negative_region_onset, convex_weight_range, convex_weights, factorized_solutions,
    factorized_violation_scan, split_weights, weight_histogram, FactorizedSolution,
};
use weakmzi::numerics::{Grid1D, QuadratureSpec, RngStream, RNG_ALGORITHM};
use weakmzi::phasespace::{default_scan_grids, negativity_scan, wigner_closed_form, WignerLabel};
use weakmzi::pointer::{default_grid_x, density, Basis, QuadratureAxis};
use weakmzi::simulate::{
    committed_distribution_strategy, committed_outcome_strategy, compare_with_significance,
    phi_zero_strategy, quantum_sampler, run_einstein, run_strategy, run_wheeler, BasisPolicy,
    CheatingStrategy, ComparisonVerdict, EventTimeline, TwoArmConfig,
};

#[derive(Parser, Debug)]
#[command(name = "weakmzi", version, about = "Weak values, meter statistics and hidden-variable \
tests for a nested Mach-Zehnder interferometer with a weakly coupled Gaussian meter")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct PhysicsArgs {
    /// Bob's phase in radians.
    #[arg(long, conflicts_with = "phi_degrees")]
    phi: Option<f64>,
    /// Bob's phase in degrees.
    #[arg(long)]
    phi_degrees: Option<f64>,
    /// Coupling strength.
    #[arg(long)]
    g: Option<f64>,
    /// Meter Gaussian width.
    #[arg(long)]
    sigma: Option<f64>,
}

impl PhysicsArgs {
    fn phi_or(&self, default: f64) -> f64 {
        self.phi
            .or(self.phi_degrees.map(f64::to_radians))
            .unwrap_or(default)
    }

    /// Resolve against per-command defaults (paper-figure captions use
    /// phi = pi/2, sigma = 1, and g = 1 except the phase-space figure's
    /// g = 10).
    fn config(&self, default_phi: f64, default_g: f64) -> weakmzi::Result<ExperimentConfig> {
        ExperimentConfig::new(
            self.phi_or(default_phi),
            self.g.unwrap_or(default_g),
            self.sigma.unwrap_or(1.0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    #[value(name = "D1", alias = "d1")]
    D1,
    #[value(name = "D2", alias = "d2")]
    D2,
    #[value(name = "D3", alias = "d3")]
    D3,
}

impl From<DetectorArg> for DetectorId {
    fn from(d: DetectorArg) -> DetectorId {
        match d {
            DetectorArg::D1 => DetectorId::D1,
            DetectorArg::D2 => DetectorId::D2,
            DetectorArg::D3 => DetectorId::D3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BasisArg {
    X,
    K,
    Eta,
}

impl BasisArg {
    fn to_basis(self, a: f64, b: f64) -> Result<Basis, String> {
        Ok(match self {
            BasisArg::X => Basis::Position,
            BasisArg::K => Basis::Wavenumber,
            BasisArg::Eta => {
                QuadratureAxis::new(a, b).map_err(|e| e.to_string())?;
                Basis::Quadrature { a, b }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WignerArg {
    W1,
    W2,
    WA,
    WB,
    WPlus,
}

impl From<WignerArg> for WignerLabel {
    fn from(w: WignerArg) -> WignerLabel {
        match w {
            WignerArg::W1 => WignerLabel::D1,
            WignerArg::W2 => WignerLabel::D2,
            WignerArg::WA => WignerLabel::A,
            WignerArg::WB => WignerLabel::B,
            WignerArg::WPlus => WignerLabel::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WignerReport {
    Grid,
    Negativity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Quantum,
    PhiZero,
    CommittedDistribution,
    CommittedOutcome,
    Cheating,
    Wheeler,
    Einstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    X,
    K,
    Alternating,
    Random,
}

impl From<PolicyArg> for BasisPolicy {
    fn from(p: PolicyArg) -> BasisPolicy {
        match p {
            PolicyArg::X => BasisPolicy::Fixed(Basis::Position),
            PolicyArg::K => BasisPolicy::Fixed(Basis::Wavenumber),
            PolicyArg::Alternating => BasisPolicy::Alternating,
            PolicyArg::Random => BasisPolicy::Random,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weak value of the measured-arm projector post-selected on a detector.
    Weakvalue {
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Sweep phi as lo:hi:count (inclusive endpoints).
        #[arg(long, conflicts_with_all = ["phi", "phi_degrees"])]
        sweep_phi: Option<String>,
        #[arg(long, value_enum)]
        detector: DetectorArg,
    },
    /// The exact data arrays behind the paper-style figures.
    Figures {
        #[arg(long, value_enum)]
        which: FigureId,
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Samples per axis (figures 2/3), per grid side (figure 4), or
        /// histogram bins (figure 7).
        #[arg(long)]
        points: Option<usize>,
    },
    /// Post-selected meter densities in a chosen basis.
    Distributions {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long, value_enum, default_value_t = BasisArg::X)]
        basis: BasisArg,
        /// Quadrature coefficient a (eta basis only).
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Quadrature coefficient b (eta basis only).
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Wigner quasi-probability fields: full grids or negativity reports.
    Wigner {
        #[arg(long, value_enum)]
        which: WignerArg,
        #[arg(long, value_enum, default_value_t = WignerReport::Grid)]
        report: WignerReport,
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Scan resolution per axis.
        #[arg(long, default_value_t = 256)]
        points: usize,
    },
    /// Hidden-variable diagnostics.
    Lhv {
        #[command(subcommand)]
        cmd: LhvCmd,
    },
    /// Monte Carlo runs with statistical verdicts (exit 2 on failure).
    Simulate {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 1_000_000)]
        runs: u64,
        /// RNG seed; falls back to WEAKMZI_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Random)]
        basis_policy: PolicyArg,
        /// Basis the committed-outcome strategy commits to.
        #[arg(long, value_enum, default_value_t = PolicyArg::X)]
        commit_basis: PolicyArg,
        /// Spacelike margin of the event timeline.
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
        /// First arm phase of the two-arm sub-experiment (wheeler).
        #[arg(long, default_value_t = 0.0)]
        phi1: f64,
        /// Second arm phase of the two-arm sub-experiment (wheeler).
        #[arg(long, default_value_t = 0.0)]
        phi2: f64,
        /// Remove the recombining beam splitter (wheeler).
        #[arg(long)]
        no_recombiner: bool,
    },
}

#[derive(Subcommand, Debug)]
enum LhvCmd {
    /// Theorem-style convex weights w_A(x), w_B(x) and their scanned range.
    Convex {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Splitting weights w_i(lambda) at the final beam splitter.
    Split {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long, value_enum, default_value_t = BasisArg::X)]
        basis: BasisArg,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Weight-probability histogram of a splitting weight.
    Histogram {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long, value_enum, default_value_t = BasisArg::X)]
        basis: BasisArg,
        #[arg(long, default_value_t = 100)]
        bins: usize,
    },
    /// Residuals and weight range of a factorized candidate solution.
    Factorized {
        #[command(flatten)]
        phys: PhysicsArgs,
        /// Candidate 1 or 2.
        #[arg(long, default_value_t = 1)]
        which: u8,
    },
    /// Phases at which a factorized candidate's weight leaves [0, 1].
    Violations {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, default_value_t = 1)]
        which: u8,
        #[arg(long, default_value_t = 72)]
        points: usize,
    },
    /// Smallest phi at which the scanned convex-weight minimum crosses zero.
    Onset {
        #[command(flatten)]
        phys: PhysicsArgs,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long, default_value_t = 1e-3)]
        lo: f64,
        #[arg(long, default_value_t = 1.5)]
        hi: f64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Usage problems (and --help/--version) all leave through here;
            // only genuine errors get the nonzero code.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

fn base_metadata(env: &mut Envelope, command: &str, config: Option<&ExperimentConfig>) {
    env.meta("artifact_version", env!("CARGO_PKG_VERSION"));
    env.meta("command", command);
    if let Some(c) = config {
        env.meta("phi", format!("{:.16e}", c.phi));
        env.meta("g", format!("{:.16e}", c.g));
        env.meta("sigma", format!("{:.16e}", c.sigma));
    }
    env.meta("quadrature_abs_tol", format!("{:e}", QuadratureSpec::default().abs_tol));
}

fn grid_metadata(env: &mut Envelope, name: &str, grid: &Grid1D) {
    env.meta(
        &format!("grid_{name}"),
        format!("[{:.16e}, {:.16e}] x {}", grid.min, grid.max, grid.points),
    );
}

type CliResult = Result<(Envelope, i32), String>;

fn run(cli: Cli) -> Result<i32, String> {
    let (env, code) = match cli.command {
        Command::Weakvalue { phys, sweep_phi, detector } => cmd_weakvalue(phys, sweep_phi, detector)?,
        Command::Figures { which, phys, points } => cmd_figures(which, phys, points)?,
        Command::Distributions { phys, detector, basis, a, b, points } => {
            cmd_distributions(phys, detector, basis, a, b, points)?
        }
        Command::Wigner { which, report, phys, points } => cmd_wigner(which, report, phys, points)?,
        Command::Lhv { cmd } => cmd_lhv(cmd)?,
        Command::Simulate {
            phys,
            strategy,
            runs,
            seed,
            basis_policy,
            commit_basis,
            margin,
            significance,
            phi1,
            phi2,
            no_recombiner,
        } => cmd_simulate(
            phys,
            strategy,
            runs,
            seed,
            basis_policy,
            commit_basis,
            margin,
            significance,
            TwoArmConfig { phi1, phi2, recombiner_present: !no_recombiner },
        )?,
    };
    let text = env.emit(cli.format);
    match cli.output {
        Some(path) => std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(code)
}

fn parse_sweep(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("sweep must be lo:hi:count, got {s}"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("sweep lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("sweep hi: {e}"))?;
    let count: usize = parts[2].parse().map_err(|e| format!("sweep count: {e}"))?;
    if count < 2 {
        return Err("sweep count must be at least 2".into());
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn cmd_weakvalue(phys: PhysicsArgs, sweep: Option<String>, detector: DetectorArg) -> CliResult {
    let detector: DetectorId = detector.into();
    let phis = match &sweep {
        Some(s) => parse_sweep(s)?,
        None => vec![phys.phi_or(0.0)],
    };
    let mut env = Envelope {
        columns: ["phi", "detector", "re", "im", "modulus_squared", "bare_probability"]
            .map(String::from)
            .to_vec(),
        ..Default::default()
    };
    base_metadata(&mut env, "weakvalue", None);
    if let Some(s) = &sweep {
        env.meta("sweep_phi", s);
    }
    for phi in phis {
        let w = weak_value(detector, phi).map_err(|e| e.to_string())?;
        env.rows.push(vec![
            Cell::num(phi),
            Cell::text(detector.name()),
            Cell::num(w.re),
            Cell::num(w.im),
            Cell::num(w.modulus_squared()),
            Cell::num(bare_probability(detector, phi)),
        ]);
    }
    Ok((env, 0))
}

/// Uniformly subsample `grid` down to at most `points` values.
fn subsample(grid: &Grid1D, points: usize) -> Vec<f64> {
    let n = points.max(2).min(grid.points);
    (0..n)
        .map(|i| grid.point(i * (grid.points - 1) / (n - 1)))
        .collect()
}

fn cmd_figures(which: FigureId, phys: PhysicsArgs, points: Option<usize>) -> CliResult {
    let default_g = if which == FigureId::Fig4 { 10.0 } else { 1.0 };
    let config = phys.config(FRAC_PI_2, default_g).map_err(|e| e.to_string())?;
    let mut env = Envelope::default();
    base_metadata(&mut env, &format!("figures {which:?}").to_lowercase(), Some(&config));
    match which {
        FigureId::Fig2 => {
            // Convex weights w_B for both post-selections over x.
            let points = points.unwrap_or(1001);
            let w1 = convex_weights(&config, DetectorId::D1, Basis::Position)
                .map_err(|e| e.to_string())?;
            let w2 = convex_weights(&config, DetectorId::D2, Basis::Position)
                .map_err(|e| e.to_string())?;
            let grid = default_grid_x(&config);
            grid_metadata(&mut env, "x", &grid);
            env.columns = ["x", "w_b_d1", "w_b_d2"].map(String::from).to_vec();
            for x in subsample(&grid, points) {
                if let (Some(a), Some(b)) = (w1.eval_b(x), w2.eval_b(x)) {
                    env.rows.push(vec![Cell::num(x), Cell::num(a), Cell::num(b)]);
                }
            }
        }
        FigureId::Fig3 => {
            // Splitting weights over x, k and the two quadrature axes.
            let points = points.unwrap_or(1001);
            env.columns = ["axis", "lambda", "w1", "w2"].map(String::from).to_vec();
            let axes = [
                Basis::Position,
                Basis::Wavenumber,
                Basis::Quadrature { a: 1.0, b: 1.0 },
                Basis::Quadrature { a: 0.1, b: 1.0 },
            ];
            for basis in axes {
                let w1 = split_weights(&config, DetectorId::D1, basis).map_err(|e| e.to_string())?;
                let w2 = split_weights(&config, DetectorId::D2, basis).map_err(|e| e.to_string())?;
                for lambda in subsample(w1.grid(), points) {
                    if let (Some(a), Some(b)) = (w1.eval(lambda), w2.eval(lambda)) {
                        env.rows.push(vec![
                            Cell::text(basis.label()),
                            Cell::num(lambda),
                            Cell::num(a),
                            Cell::num(b),
                        ]);
                    }
                }
            }
        }
        FigureId::Fig4 => {
            let points = points.unwrap_or(201);
            let (gx, gk) = default_scan_grids(&config, points);
            grid_metadata(&mut env, "x", &gx);
            grid_metadata(&mut env, "k", &gk);
            let w1 = wigner_closed_form(WignerLabel::D1, &config);
            let w2 = wigner_closed_form(WignerLabel::D2, &config);
            env.columns = ["x", "k", "w1", "w2"].map(String::from).to_vec();
            for x in gx.iter() {
                for k in gk.iter() {
                    env.rows.push(vec![
                        Cell::num(x),
                        Cell::num(k),
                        Cell::num(w1.eval(x, k)),
                        Cell::num(w2.eval(x, k)),
                    ]);
                }
            }
        }
        FigureId::Fig7 => {
            let bins = points.unwrap_or(100);
            env.columns = ["basis", "bin_lo", "bin_hi", "p_d1", "p_d2", "routed_d1", "routed_d2"]
                .map(String::from)
                .to_vec();
            env.meta("bins", bins);
            for basis in [Basis::Position, Basis::Wavenumber] {
                let h1 = weight_histogram(&config, DetectorId::D1, basis, bins)
                    .map_err(|e| e.to_string())?;
                let h2 = weight_histogram(&config, DetectorId::D2, basis, bins)
                    .map_err(|e| e.to_string())?;
                for n in 0..bins {
                    env.rows.push(vec![
                        Cell::text(basis.label()),
                        Cell::num(n as f64 * h1.delta_w),
                        Cell::num((n + 1) as f64 * h1.delta_w),
                        Cell::num(h1.probabilities[n]),
                        Cell::num(h2.probabilities[n]),
                        Cell::num(h1.routed[n]),
                        Cell::num(h2.routed[n]),
                    ]);
                }
            }
        }
    }
    Ok((env, 0))
}

fn cmd_distributions(
    phys: PhysicsArgs,
    detector: DetectorArg,
    basis: BasisArg,
    a: f64,
    b: f64,
    points: usize,
) -> CliResult {
    let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
    let basis = basis.to_basis(a, b)?;
    let detector: DetectorId = detector.into();
    let dist = density(&config, detector, basis);
    let mass = dist.mass;
    let mut env = Envelope {
        columns: ["lambda", "density", "normalized_density"].map(String::from).to_vec(),
        ..Default::default()
    };
    base_metadata(&mut env, "distributions", Some(&config));
    env.meta("detector", detector.name());
    env.meta("basis", basis.label());
    env.meta("click_probability", format!("{mass:.16e}"));
    grid_metadata(&mut env, "lambda", &dist.grid);
    for lambda in subsample(&dist.grid, points) {
        let v = dist.eval(lambda);
        env.rows.push(vec![Cell::num(lambda), Cell::num(v), Cell::num(v / mass)]);
    }
    Ok((env, 0))
}

fn cmd_wigner(which: WignerArg, report: WignerReport, phys: PhysicsArgs, points: usize) -> CliResult {
    let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
    let field = wigner_closed_form(which.into(), &config);
    let (gx, gk) = default_scan_grids(&config, points);
    let mut env = Envelope::default();
    base_metadata(&mut env, "wigner", Some(&config));
    env.meta("which", format!("{which:?}"));
    grid_metadata(&mut env, "x", &gx);
    grid_metadata(&mut env, "k", &gk);
    match report {
        WignerReport::Grid => {
            env.columns = ["x", "k", "value"].map(String::from).to_vec();
            for x in gx.iter() {
                for k in gk.iter() {
                    env.rows.push(vec![Cell::num(x), Cell::num(k), Cell::num(field.eval(x, k))]);
                }
            }
        }
        WignerReport::Negativity => {
            let r = negativity_scan(&field, &gx, &gk);
            env.columns = ["min_value", "argmin_x", "argmin_k", "negative_mass"]
                .map(String::from)
                .to_vec();
            env.rows.push(vec![
                Cell::num(r.min_value),
                Cell::num(r.argmin.0),
                Cell::num(r.argmin.1),
                Cell::num(r.negative_mass),
            ]);
        }
    }
    Ok((env, 0))
}

fn factorized_kind(which: u8) -> Result<FactorizedSolution, String> {
    match which {
        1 => Ok(FactorizedSolution::Solution1),
        2 => Ok(FactorizedSolution::Solution2),
        other => Err(format!("candidate must be 1 or 2, got {other}")),
    }
}

fn cmd_lhv(cmd: LhvCmd) -> CliResult {
    let mut env = Envelope::default();
    match cmd {
        LhvCmd::Convex { phys, detector, points } => {
            let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
            let detector: DetectorId = detector.into();
            base_metadata(&mut env, "lhv convex", Some(&config));
            let w = convex_weights(&config, detector, Basis::Position).map_err(|e| e.to_string())?;
            let grid = default_grid_x(&config);
            let range = convex_weight_range(&w, &grid);
            env.meta("detector", detector.name());
            env.meta("excluded_point", format!("{:.16e}", w.excluded_point));
            env.meta("range_min", format!("{:.16e}", range.min));
            env.meta("range_max", format!("{:.16e}", range.max));
            env.meta("has_below_zero", range.has_below_zero);
            env.meta("has_above_one", range.has_above_one);
            grid_metadata(&mut env, "x", &grid);
            env.columns = ["x", "w_a", "w_b"].map(String::from).to_vec();
            for x in subsample(&grid, points) {
                if let (Some(a), Some(b)) = (w.eval_a(x), w.eval_b(x)) {
                    env.rows.push(vec![Cell::num(x), Cell::num(a), Cell::num(b)]);
                }
            }
        }
        LhvCmd::Split { phys, detector, basis, a, b, points } => {
            let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
            let detector: DetectorId = detector.into();
            let basis = basis.to_basis(a, b)?;
            base_metadata(&mut env, "lhv split", Some(&config));
            let w = split_weights(&config, detector, basis).map_err(|e| e.to_string())?;
            let (lo, hi) = w.range_on_grid();
            env.meta("detector", detector.name());
            env.meta("basis", basis.label());
            env.meta("range_min", format!("{lo:.16e}"));
            env.meta("range_max", format!("{hi:.16e}"));
            grid_metadata(&mut env, "lambda", w.grid());
            env.columns = ["lambda", "w"].map(String::from).to_vec();
            for lambda in subsample(w.grid(), points) {
                if let Some(v) = w.eval(lambda) {
                    env.rows.push(vec![Cell::num(lambda), Cell::num(v)]);
                }
            }
        }
        LhvCmd::Histogram { phys, detector, basis, bins } => {
            let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
            let detector: DetectorId = detector.into();
            let basis = basis.to_basis(1.0, 1.0)?;
            base_metadata(&mut env, "lhv histogram", Some(&config));
            let h = weight_histogram(&config, detector, basis, bins).map_err(|e| e.to_string())?;
            env.meta("detector", detector.name());
            env.meta("basis", basis.label());
            env.meta("bins", bins);
            env.meta("total_mass", format!("{:.16e}", h.total_mass()));
            env.meta("routed_mass", format!("{:.16e}", h.routed_mass()));
            env.columns = ["bin_lo", "bin_hi", "probability", "routed"].map(String::from).to_vec();
            for n in 0..bins {
                env.rows.push(vec![
                    Cell::num(n as f64 * h.delta_w),
                    Cell::num((n + 1) as f64 * h.delta_w),
                    Cell::num(h.probabilities[n]),
                    Cell::num(h.routed[n]),
                ]);
            }
        }
        LhvCmd::Factorized { phys, which } => {
            let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
            base_metadata(&mut env, "lhv factorized", Some(&config));
            env.meta("candidate", which);
            let (_, _, v) =
                factorized_solutions(&config, factorized_kind(which)?).map_err(|e| e.to_string())?;
            env.columns = ["residual_x", "residual_k", "weight_min", "weight_max", "admissible"]
                .map(String::from)
                .to_vec();
            env.rows.push(vec![
                Cell::num(v.residual_x),
                Cell::num(v.residual_k),
                Cell::num(v.weight_min),
                Cell::num(v.weight_max),
                Cell::num(f64::from(u8::from(v.admissible))),
            ]);
        }
        LhvCmd::Violations { phys, which, points } => {
            let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
            base_metadata(&mut env, "lhv violations", Some(&config));
            env.meta("candidate", which);
            env.meta("scan_points", points);
            let phis = factorized_violation_scan(config.g, config.sigma, factorized_kind(which)?, points)
                .map_err(|e| e.to_string())?;
            env.columns = vec!["phi".into()];
            for phi in phis {
                env.rows.push(vec![Cell::num(phi)]);
            }
        }
        LhvCmd::Onset { phys, detector, lo, hi } => {
            let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
            let detector: DetectorId = detector.into();
            base_metadata(&mut env, "lhv onset", Some(&config));
            env.meta("detector", detector.name());
            let onset = convex_negative_region_onset(config.g, config.sigma, detector, lo, hi)
                .map_err(|e| e.to_string())?;
            env.columns = vec!["phi_onset".into()];
            env.rows.push(vec![Cell::num(onset)]);
        }
    }
    Ok((env, 0))
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("WEAKMZI_SEED") {
        Ok(v) => v.parse().map_err(|e| format!("WEAKMZI_SEED: {e}")),
        Err(_) => Ok(0),
    }
}

fn verdict_rows(env: &mut Envelope, verdict: &ComparisonVerdict) {
    env.columns = ["record", "detector", "basis", "n", "statistic", "p_value", "pass"]
        .map(String::from)
        .to_vec();
    env.rows.push(vec![
        Cell::text("chi_square"),
        Cell::text("all"),
        Cell::text("counts"),
        Cell::num(verdict.n_runs as f64),
        Cell::num(verdict.chi_square_statistic),
        Cell::num(verdict.chi_square_p),
        Cell::num(f64::from(u8::from(verdict.chi_square_pass))),
    ]);
    for c in &verdict.ks_cells {
        env.rows.push(vec![
            Cell::text("ks"),
            Cell::text(c.detector.name()),
            Cell::text(c.basis_label.clone()),
            Cell::num(c.n as f64),
            Cell::num(c.statistic),
            Cell::num(c.p_value),
            Cell::num(f64::from(u8::from(c.pass))),
        ]);
    }
    if !verdict.underpowered_cells.is_empty() {
        env.meta("underpowered_cells", verdict.underpowered_cells.join("; "));
    }
    env.meta("pass", verdict.pass);
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    phys: PhysicsArgs,
    strategy: StrategyArg,
    runs: u64,
    seed: Option<u64>,
    basis_policy: PolicyArg,
    commit_basis: PolicyArg,
    margin: f64,
    significance: f64,
    two_arm: TwoArmConfig,
) -> CliResult {
    let config = phys.config(FRAC_PI_2, 1.0).map_err(|e| e.to_string())?;
    let seed = resolve_seed(seed)?;
    let stream = RngStream::new(seed, 0);
    let policy: BasisPolicy = basis_policy.into();
    let mut env = Envelope::default();
    base_metadata(&mut env, "simulate", Some(&config));
    env.meta("strategy", format!("{strategy:?}").to_lowercase());
    env.meta("runs", runs);
    env.meta("rng_algorithm", RNG_ALGORITHM);
    env.meta("seed", seed);
    env.meta("significance", significance);

    // The two sub-experiments report a two-cell count test instead of the
    // full verdict battery.
    if matches!(strategy, StrategyArg::Wheeler | StrategyArg::Einstein) {
        let ((d1, d2), (p1, p2)) = match strategy {
            StrategyArg::Wheeler => {
                env.meta("phi1", format!("{:.16e}", two_arm.phi1));
                env.meta("phi2", format!("{:.16e}", two_arm.phi2));
                env.meta("recombiner_present", two_arm.recombiner_present);
                (
                    run_wheeler(&two_arm, runs, &stream),
                    weakmzi::simulate::two_arm_quantum_probabilities(&two_arm),
                )
            }
            _ => (run_einstein(runs, &stream), (0.5, 0.5)),
        };
        let chi = chi_square_counts(&[d1, d2], &[p1, p2]);
        let pass = chi.1 >= significance;
        env.columns = ["record", "d1_count", "d2_count", "statistic", "p_value", "pass"]
            .map(String::from)
            .to_vec();
        env.rows.push(vec![
            Cell::text("chi_square"),
            Cell::num(d1 as f64),
            Cell::num(d2 as f64),
            Cell::num(chi.0),
            Cell::num(chi.1),
            Cell::num(f64::from(u8::from(pass))),
        ]);
        env.meta("pass", pass);
        return Ok((env, if pass { 0 } else { 2 }));
    }

    env.meta("basis_policy", format!("{basis_policy:?}").to_lowercase());
    env.meta("spacelike_margin", margin);
    let timeline = EventTimeline::standard(margin).map_err(|e| e.to_string())?;
    let records = match strategy {
        StrategyArg::Quantum => {
            quantum_sampler(&config, runs, policy, &stream).map_err(|e| e.to_string())?
        }
        StrategyArg::PhiZero => {
            let mut s = phi_zero_strategy(&config);
            run_strategy(&mut s, &config, runs, &timeline, policy, &stream)
                .map_err(|e| e.to_string())?
        }
        StrategyArg::CommittedDistribution => {
            let mut s = committed_distribution_strategy(&config);
            run_strategy(&mut s, &config, runs, &timeline, policy, &stream)
                .map_err(|e| e.to_string())?
        }
        StrategyArg::CommittedOutcome => {
            let basis = match commit_basis {
                PolicyArg::X => Basis::Position,
                PolicyArg::K => Basis::Wavenumber,
                _ => return Err("commit-basis must be x or k".into()),
            };
            env.meta("commit_basis", basis.label());
            let mut s = committed_outcome_strategy(&config, basis);
            run_strategy(&mut s, &config, runs, &timeline, policy, &stream)
                .map_err(|e| e.to_string())?
        }
        StrategyArg::Cheating => {
            let mut s = CheatingStrategy;
            run_strategy(&mut s, &config, runs, &timeline, policy, &stream)
                .map_err(|e| e.to_string())?
        }
        StrategyArg::Wheeler | StrategyArg::Einstein => unreachable!("handled above"),
    };
    let verdict =
        compare_with_significance(&records, &config, significance).map_err(|e| e.to_string())?;
    verdict_rows(&mut env, &verdict);
    Ok((env, if verdict.pass { 0 } else { 2 }))
}

/// Two-cell chi-square (statistic, p-value) without pulling the full verdict
/// machinery into the sub-experiments.
fn chi_square_counts(observed: &[u64; 2], probs: &[f64; 2]) -> (f64, f64) {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e > 0.0 {
            let d = o as f64 - e;
            stat += d * d / e;
        } else if o > 0 {
            return (f64::INFINITY, 0.0);
        }
    }
    // dof = 1: p = erfc(sqrt(stat/2)) via the complementary normal tail.
    let z = stat.sqrt();
    let p = 2.0 * 0.5 * statrs_erfc(z / std::f64::consts::SQRT_2);
    (stat, p.clamp(0.0, 1.0))
}

/// erfc via the Abramowitz-Stegun 7.1.26 rational fit (|error| < 1.5e-7,
/// plenty for a pass/fail threshold at 1%).
fn statrs_erfc(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let v = poly * (-x * x).exp();
    if x >= 0.0 {
        v
    } else {
        2.0 - v
    }
}
