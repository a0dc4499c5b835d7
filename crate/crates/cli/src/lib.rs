//! `geomgate` command-line front end.
//!
//! Exit status: 0 on success, 2 when a constraint or golden comparison
//! fails, 1 on I/O, parse or simulation errors.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::json;

use geomgate_core::characterize::{
    average_gate_fidelity, interleaved_rb, qpt, rb_run, Channel, Interleaved, ProcessMatrix, RbConfig, RbNoise,
};
use geomgate_core::evolution::{evolve, fidelity_sweep, ErrorModel, DEFAULT_STEPS};
use geomgate_core::geometry::{bloch_trajectory, constraint_report, PathSpec, SUPER_ROBUST_TOLERANCE};
use geomgate_core::linalg::gate_fidelity;
use geomgate_core::pulses::{build, parse_schedule, serialize_schedule, Gate, PulseSchedule, Scheme};
use geomgate_core::reproduce::{self, linear_grid, log_grid};
use geomgate_core::twoqubit::{
    basis_index, delta_a_sweep, gate_fidelity_2q, parametric_gate, population_traces, run_cz, simulate_two_qubit,
    DeviceParams, Frame, SimOptions, TwoQubitGate, DEFAULT_J1, DIM,
};
use geomgate_core::CMatrix;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GEOMGATE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "geomgate", version, about = "Design, check and simulate nonadiabatic geometric gates")]
pub struct Cli {
    /// Suppress the summary printed to stdout [flag]
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build or check single-qubit pulse schedules
    #[command(subcommand)]
    Pulse(PulseCommand),
    /// Evolve a schedule under a Rabi error and report the gate fidelity
    Simulate(SimulateArgs),
    /// Fidelity against Rabi error over a grid
    Sweep(SweepArgs),
    /// Bloch-sphere trajectory of the first auxiliary state
    Trajectory(TrajectoryArgs),
    /// Parametrically driven two-transmon gates
    #[command(subcommand, name = "two-qubit")]
    TwoQubit(TwoQubitCommand),
    /// Simulated process tomography of a schedule
    Qpt(QptArgs),
    /// Simulated randomized benchmarking
    Rb(RbArgs),
    /// Regenerate a reference table or figure dataset
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleSource {
    /// Schedule file to load [path]
    #[arg(long, conflicts_with_all = ["scheme", "gate"])]
    pub schedule: Option<PathBuf>,
    /// Built-in scheme: sr-ngqg, ngqg-p1, ngqg-p2, sssp, dynamical [name]
    #[arg(long, value_parser = parse_scheme, requires = "gate")]
    pub scheme: Option<Scheme>,
    /// Target gate: x, y, x/2, y/2 [name]
    #[arg(long, value_parser = parse_gate)]
    pub gate: Option<Gate>,
    /// Peak drive frequency of built-in schedules, k/M/G suffixes accepted [Hz]
    #[arg(long, value_parser = parse_hz, default_value = "10M")]
    pub omega0: f64,
}

impl ScheduleSource {
    fn load(&self) -> Result<PulseSchedule> {
        match (&self.schedule, self.scheme, self.gate) {
            (Some(path), _, _) => read_schedule(path),
            (None, Some(scheme), Some(gate)) => Ok(build(scheme, gate, 2.0 * PI * self.omega0)?),
            _ => bail!("give either --schedule or --scheme with --gate"),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum PulseCommand {
    /// Write a built-in schedule to a file
    Build {
        /// Scheme: sr-ngqg, ngqg-p1, ngqg-p2, sssp, dynamical [name]
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        /// Target gate: x, y, x/2, y/2 [name]
        #[arg(long, value_parser = parse_gate)]
        gate: Gate,
        /// Peak drive frequency, k/M/G suffixes accepted [Hz]
        #[arg(long, value_parser = parse_hz, default_value = "10M")]
        omega0: f64,
        /// Output schedule file [path]
        #[arg(long)]
        out: PathBuf,
    },
    /// Report path consistency, residual dynamical phase and D12/eps
    Check {
        #[command(flatten)]
        source: ScheduleSource,
        /// Also fail unless |D12/eps| <= 0.02 [flag]
        #[arg(long)]
        require_super_robust: bool,
    },
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: ScheduleSource,
    /// Proportional Rabi error epsilon [dimensionless]
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Integration steps per segment [count]
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    /// JSON report with the final unitary [path]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: ScheduleSource,
    /// Smallest Rabi error [dimensionless]
    #[arg(long, default_value_t = -0.2, allow_negative_numbers = true)]
    pub eps_min: f64,
    /// Largest Rabi error [dimensionless]
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub eps_max: f64,
    /// Grid points [count]
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    /// CSV with columns epsilon, fidelity, infidelity [path]
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub source: ScheduleSource,
    /// Comma-separated Rabi errors [dimensionless]
    #[arg(long, value_delimiter = ',', default_value = "0,0.1", allow_negative_numbers = true)]
    pub epsilon: Vec<f64>,
    /// Samples per trajectory [count]
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    /// CSV with columns t, x, y, z, epsilon; t in units of 1/omega0 [path]
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    Iswap,
    Cz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Rotating,
    Lab,
}

#[derive(Args, Debug, Clone)]
pub struct DeviceArgs {
    /// Device file with omega1_hz, omega2_hz, anh1_hz, anh2_hz, g12_hz; defaults
    /// to 4.8 GHz, 5.4 GHz, -220 MHz, -230 MHz, 12 MHz [path]
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Effective coupling operating point J1(A/Delta) of the strongest segment [dimensionless]
    #[arg(long, default_value_t = DEFAULT_J1)]
    pub j1: f64,
    /// Integration step, SI suffixes accepted (e.g. 2p) [s]
    #[arg(long, value_parser = parse_si, default_value = "2p")]
    pub dt: f64,
}

impl DeviceArgs {
    fn load(&self) -> Result<DeviceParams> {
        let p = match &self.params {
            Some(path) => DeviceParams::from_toml_str(&read_text(path)?)?,
            None => DeviceParams::default(),
        };
        for w in p.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(p)
    }
}

#[derive(Subcommand, Debug)]
pub enum TwoQubitCommand {
    /// Simulate one gate and write population traces plus the final unitary
    Simulate {
        #[command(flatten)]
        device: DeviceArgs,
        /// Gate: iswap or cz [name]
        #[arg(long, value_enum, default_value = "iswap")]
        gate: GateArg,
        /// Frame the equations are integrated in [name]
        #[arg(long, value_enum, default_value = "rotating")]
        frame: FrameArg,
        /// Single-qubit scheme mapped onto the iSWAP transition [name]
        #[arg(long, value_parser = parse_scheme, default_value = "sr-ngqg")]
        scheme: Scheme,
        /// Drop the frame-phase compensation of segment phases [flag]
        #[arg(long)]
        uncompensated: bool,
        /// Skip the CZ conditional-phase calibration [flag]
        #[arg(long)]
        no_calibrate: bool,
        /// Initial basis state n1n2, e.g. 01; defaults to 01 (iswap) or 11 (cz) [label]
        #[arg(long)]
        initial: Option<String>,
        /// Trajectory samples [count]
        #[arg(long, default_value_t = 400)]
        samples: usize,
        /// CSV with t then the 9 level populations; t in seconds [path]
        #[arg(long)]
        out: PathBuf,
        /// CSV dump of the final rotating-frame unitary; defaults to <out>.unitary.csv [path]
        #[arg(long)]
        unitary_out: Option<PathBuf>,
    },
    /// Sweep the modulation amplitude offset of an iSWAP gate
    Sweep {
        #[command(flatten)]
        device: DeviceArgs,
        /// Single-qubit scheme mapped onto the iSWAP transition [name]
        #[arg(long, value_parser = parse_scheme, default_value = "sr-ngqg")]
        scheme: Scheme,
        /// Smallest amplitude offset, k/M/G suffixes accepted [Hz]
        #[arg(long, value_parser = parse_hz, allow_hyphen_values = true, default_value = "-60M")]
        delta_a_min: f64,
        /// Largest amplitude offset, k/M/G suffixes accepted [Hz]
        #[arg(long, value_parser = parse_hz, allow_hyphen_values = true, default_value = "60M")]
        delta_a_max: f64,
        /// Grid points [count]
        #[arg(long, default_value_t = 11)]
        points: usize,
        /// CSV with columns delta_a_hz, equivalent_epsilon, fidelity [path]
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct QptArgs {
    #[command(flatten)]
    pub source: ScheduleSource,
    /// Proportional Rabi error epsilon [dimensionless]
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// JSON with chi as nested [re, im] pairs in the {I, X, Y, Z} basis [path]
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RbArgs {
    /// Comma-separated sequence lengths [count]
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
    pub lengths: Vec<usize>,
    /// Random sequences per length [count]
    #[arg(long, default_value_t = 50)]
    pub sequences: usize,
    /// Random seed [integer]
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Depolarizing probability after each Clifford [dimensionless]
    #[arg(long, conflicts_with = "epsilon")]
    pub depolarizing: Option<f64>,
    /// Proportional Rabi error on every generator pulse [dimensionless]
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Binomial measurement shots per sequence; exact probabilities if absent [count]
    #[arg(long)]
    pub shots: Option<u64>,
    /// Schedule interleaved after every Clifford [path]
    #[arg(long)]
    pub interleave: Option<PathBuf>,
    /// Rabi error applied to the interleaved schedule [dimensionless]
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub interleave_epsilon: f64,
    /// CSV with columns length, reference and (if interleaved) interleaved [path]
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig3,
    Fig4c,
    Table3,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// Dataset to regenerate [name]
    #[arg(value_enum)]
    pub figure: Figure,
    /// Directory the CSV files are written to [path]
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Outcome of a successful run: whether every check passed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    CheckFailed,
}

pub fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).filter(|s| *s != Scheme::Custom).ok_or_else(|| format!("unknown scheme `{s}`"))
}

pub fn parse_gate(s: &str) -> Result<Gate, String> {
    Gate::parse(s).ok_or_else(|| format!("unknown gate `{s}`"))
}

/// Number with an optional SI prefix: p, n, u, m, k, M, G.
pub fn parse_si(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (num, mult) = match t.char_indices().last() {
        Some((i, c)) => match c {
            'p' => (&t[..i], 1e-12),
            'n' => (&t[..i], 1e-9),
            'u' => (&t[..i], 1e-6),
            'm' => (&t[..i], 1e-3),
            'k' => (&t[..i], 1e3),
            'M' => (&t[..i], 1e6),
            'G' => (&t[..i], 1e9),
            _ => (t, 1.0),
        },
        None => return Err("empty value".into()),
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("invalid number `{s}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{s}`"));
    }
    Ok(v * mult)
}

/// Frequency in Hz; accepts k, M, G and an optional `Hz` unit.
pub fn parse_hz(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let t = t.strip_suffix("Hz").or_else(|| t.strip_suffix("hz")).unwrap_or(t);
    match t.trim().chars().last() {
        Some('p' | 'n' | 'u' | 'm') => Err(format!("frequency `{s}` takes only k, M or G prefixes")),
        _ => parse_si(t),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_schedule(path: &Path) -> Result<PulseSchedule> {
    parse_schedule(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn matrix_json(m: &CMatrix) -> serde_json::Value {
    let n = m.dim();
    json!((0..n).map(|r| (0..n).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

/// Sets the worker count from `GEOMGATE_THREADS` if present.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("{THREADS_ENV} must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

struct Out {
    quiet: bool,
}

impl Out {
    fn line(&self, s: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", s.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    let out = Out { quiet: cli.quiet };
    match cli.command {
        Command::Pulse(PulseCommand::Build { scheme, gate, omega0, out: path }) => {
            let s = build(scheme, gate, 2.0 * PI * omega0)?;
            write_atomic(&path, &serialize_schedule(&s))?;
            out.line(format!("wrote {} ({} segments)", path.display(), s.segments.len()));
            Ok(Status::Pass)
        }
        Command::Pulse(PulseCommand::Check { source, require_super_robust }) => {
            let s = source.load()?;
            let r = constraint_report(&s)?;
            let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
            out.line(format!("schedule           {}", s.name));
            out.line(format!(
                "drive/path residual amplitude {:.3e} phase {:.3e}  {}",
                r.drive_residual.amplitude,
                r.drive_residual.phase,
                mark(r.path_consistent())
            ));
            out.line(format!("dynamical phase    {:+.3e} rad  {}", r.dynamical_phase, mark(r.dynamical_phase_free())));
            let robust = r.super_robust();
            out.line(format!(
                "|D12/eps|          {:.2}{}",
                r.d12_over_eps,
                if require_super_robust {
                    format!("  {} (<= {SUPER_ROBUST_TOLERANCE})", mark(robust))
                } else {
                    String::new()
                }
            ));
            let ok = r.path_consistent() && r.dynamical_phase_free() && (robust || !require_super_robust);
            Ok(if ok { Status::Pass } else { Status::CheckFailed })
        }
        Command::Simulate(a) => {
            let s = a.source.load()?;
            let ideal = s.ideal().ok_or_else(|| anyhow!("schedule {} has no target gate", s.name))?;
            let r = evolve(&s, &ErrorModel::rabi(a.epsilon)?, a.steps)?;
            let f = gate_fidelity(&r.final_unitary, &ideal)?;
            out.line(format!("fidelity {f:.12}  infidelity {:.3e}  halving change {:.1e}", 1.0 - f, r.halving_change));
            if let Some(path) = a.out {
                let doc = json!({
                    "schedule": s.name,
                    "epsilon": a.epsilon,
                    "fidelity": f,
                    "infidelity": 1.0 - f,
                    "steps": r.steps,
                    "halving_change": r.halving_change,
                    "unitarity_defect": r.max_unitarity_defect,
                    "unitary": matrix_json(r.final_unitary.matrix()),
                });
                write_atomic(&path, &serde_json::to_string_pretty(&doc)?)?;
            }
            Ok(Status::Pass)
        }
        Command::Sweep(a) => {
            if a.points < 2 || !(a.eps_min < a.eps_max) {
                bail!("need --points >= 2 and --eps-min < --eps-max");
            }
            let s = a.source.load()?;
            let ideal = s.ideal().ok_or_else(|| anyhow!("schedule {} has no target gate", s.name))?;
            let grid = linear_grid(a.eps_min, a.eps_max, a.points);
            let sw = fidelity_sweep(&s, &ideal, &grid)?;
            let mut csv = String::from("epsilon,fidelity,infidelity\n");
            for (e, f) in &sw.points {
                let _ = writeln!(csv, "{e:.6},{f:.15},{:.6e}", 1.0 - f);
            }
            write_atomic(&a.out, &csv)?;
            out.line(format!("log-log infidelity slope {:.3}", sw.fitted_slope));
            Ok(Status::Pass)
        }
        Command::Trajectory(a) => {
            let s = a.source.load()?;
            let p = PathSpec::from_schedule(&s)?;
            let mut csv = String::from("t,x,y,z,epsilon\n");
            for &e in &a.epsilon {
                for (t, x, y, z) in bloch_trajectory(&p, &s, e, a.samples)? {
                    let _ = writeln!(csv, "{t:.12},{x:.12},{y:.12},{z:.12},{e}");
                }
            }
            write_atomic(&a.out, &csv)?;
            out.line(format!("wrote {}", a.out.display()));
            Ok(Status::Pass)
        }
        Command::TwoQubit(cmd) => two_qubit(cmd, &out),
        Command::Qpt(a) => {
            let s = a.source.load()?;
            let ideal = s.ideal().ok_or_else(|| anyhow!("schedule {} has no target gate", s.name))?;
            let r = evolve(&s, &ErrorModel::rabi(a.epsilon)?, DEFAULT_STEPS)?;
            let ch = Channel::unitary(&r.final_unitary);
            let chi = qpt(|rho| ch.apply(rho))?;
            let fp = chi.process_fidelity(&ProcessMatrix::from_unitary(&ideal));
            let doc = json!({
                "schedule": s.name,
                "epsilon": a.epsilon,
                "basis": ["I", "X", "Y", "Z"],
                "chi": chi.to_nested(),
                "process_fidelity": fp,
                "average_gate_fidelity": average_gate_fidelity(fp),
            });
            write_atomic(&a.out, &serde_json::to_string_pretty(&doc)?)?;
            out.line(format!("process fidelity {fp:.12}  average gate fidelity {:.12}", average_gate_fidelity(fp)));
            Ok(Status::Pass)
        }
        Command::Rb(a) => {
            let noise = match (a.depolarizing, a.epsilon) {
                (Some(q), _) => RbNoise::Depolarizing(q),
                (None, Some(e)) => RbNoise::Rabi(e),
                (None, None) => RbNoise::None,
            };
            let config = RbConfig {
                noise,
                interleaved: None,
                lengths: a.lengths.clone(),
                sequences_per_length: a.sequences,
                seed: a.seed,
                shots: a.shots,
            };
            let mut csv = String::new();
            match &a.interleave {
                None => {
                    let r = rb_run(&config)?;
                    csv.push_str("length,reference\n");
                    for (m, f) in r.lengths.iter().zip(&r.sequence_fidelities) {
                        let _ = writeln!(csv, "{m},{f:.12}");
                    }
                    out.line(format!(
                        "p = {:.6} +- {:.1e}  average gate fidelity {:.6}",
                        r.decay_p, r.sigma_p, r.avg_gate_fidelity
                    ));
                }
                Some(path) => {
                    let s = read_schedule(path)?;
                    let ideal = s.ideal().ok_or_else(|| anyhow!("schedule {} has no target gate", s.name))?;
                    let actual = evolve(&s, &ErrorModel::rabi(a.interleave_epsilon)?, DEFAULT_STEPS)?.final_unitary;
                    let r = interleaved_rb(&config, Interleaved { ideal, actual })?;
                    csv.push_str("length,reference,interleaved\n");
                    for (i, m) in r.reference.lengths.iter().enumerate() {
                        let _ = writeln!(
                            csv,
                            "{m},{:.12},{:.12}",
                            r.reference.sequence_fidelities[i], r.interleaved.sequence_fidelities[i]
                        );
                    }
                    out.line(format!(
                        "reference p = {:.6}  interleaved p = {:.6}  gate fidelity {:.6}",
                        r.reference.decay_p, r.interleaved.decay_p, r.gate_fidelity
                    ));
                }
            }
            write_atomic(&a.out, &csv)?;
            Ok(Status::Pass)
        }
        Command::Reproduce(a) => reproduce_cmd(a, &out),
    }
}

fn parse_label(label: &str) -> Result<usize> {
    let digits: Vec<usize> = label
        .trim()
        .chars()
        .map(|c| c.to_digit(10).map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| anyhow!("initial state `{label}` must be two level digits such as 01"))?;
    match digits[..] {
        [n1, n2] if n1 < 3 && n2 < 3 => Ok(basis_index(n1, n2)),
        _ => bail!("initial state `{label}` must be two digits in 0..=2"),
    }
}

fn two_qubit(cmd: TwoQubitCommand, out: &Out) -> Result<Status> {
    match cmd {
        TwoQubitCommand::Simulate {
            device,
            gate,
            frame,
            scheme,
            uncompensated,
            no_calibrate,
            initial,
            samples,
            out: path,
            unitary_out,
        } => {
            let params = device.load()?;
            let init = parse_label(initial.as_deref().unwrap_or(match gate {
                GateArg::Iswap => "01",
                GateArg::Cz => "11",
            }))?;
            let mut opts = SimOptions {
                frame: match frame {
                    FrameArg::Rotating => Frame::Rotating,
                    FrameArg::Lab => Frame::Lab,
                },
                ..SimOptions::rotating()
            }
            .sampled(init, samples);
            opts.dt = device.dt;
            let (result, summary) = match gate {
                GateArg::Iswap => {
                    let s = build(scheme, Gate::X, geomgate_core::pulses::DEFAULT_OMEGA0)?;
                    let g = parametric_gate(&params, &s, TwoQubitGate::ISwap, device.j1, !uncompensated)?;
                    let r = simulate_two_qubit(&params, &g.drive, &opts)?;
                    let f = gate_fidelity_2q(&r.final_unitary, &g.target);
                    let dur: f64 = g.drive.iter().map(|d| d.duration).sum();
                    (r, format!("{}: duration {:.1} ns, subspace fidelity {f:.6}", g.name, dur * 1e9))
                }
                GateArg::Cz => {
                    let c = run_cz(&params, device.j1, !no_calibrate, &opts)?;
                    let summary = format!(
                        "cz: conditional phase {:.6} rad (offset {:.5}), fidelity after Z corrections {:.6}",
                        c.conditional_phase, c.delta, c.fidelity
                    );
                    (c.result, summary)
                }
            };
            let mut csv = String::from("t");
            for a in 0..DIM {
                let _ = write!(csv, ",p{}{}", a / 3, a % 3);
            }
            csv.push('\n');
            for (t, pops) in population_traces(&result) {
                let _ = write!(csv, "{t:.6e}");
                for p in pops {
                    let _ = write!(csv, ",{p:.10}");
                }
                csv.push('\n');
            }
            write_atomic(&path, &csv)?;
            let upath = unitary_out.unwrap_or_else(|| {
                let mut p = path.clone().into_os_string();
                p.push(".unitary.csv");
                PathBuf::from(p)
            });
            let m = result.final_unitary.matrix();
            let mut ucsv = String::from("row,col,re,im\n");
            for r in 0..DIM {
                for c in 0..DIM {
                    let z: Complex64 = m[(r, c)];
                    let _ = writeln!(ucsv, "{r},{c},{:.15e},{:.15e}", z.re, z.im);
                }
            }
            write_atomic(&upath, &ucsv)?;
            out.line(summary);
            out.line(format!("step-halving change {:.1e}", result.halving_change));
            Ok(Status::Pass)
        }
        TwoQubitCommand::Sweep { device, scheme, delta_a_min, delta_a_max, points, out: path } => {
            if points < 2 || !(delta_a_min < delta_a_max) {
                bail!("need --points >= 2 and --delta-a-min < --delta-a-max");
            }
            let params = device.load()?;
            let s = build(scheme, Gate::X, geomgate_core::pulses::DEFAULT_OMEGA0)?;
            let g = parametric_gate(&params, &s, TwoQubitGate::ISwap, device.j1, true)?;
            let grid: Vec<f64> = linear_grid(delta_a_min, delta_a_max, points).iter().map(|h| 2.0 * PI * h).collect();
            let opts = SimOptions { dt: device.dt, ..SimOptions::rotating() };
            let sw = delta_a_sweep(&params, &g, &grid, &opts)?;
            let mut csv = String::from("delta_a_hz,equivalent_epsilon,fidelity\n");
            for p in &sw.points {
                let _ = writeln!(csv, "{:.6e},{:.8},{:.10}", p.delta_a / (2.0 * PI), p.equivalent_epsilon, p.fidelity);
            }
            write_atomic(&path, &csv)?;
            out.line(format!("{}: fidelity variation {:.4}%", g.name, 100.0 * sw.variation()));
            Ok(Status::Pass)
        }
    }
}

/// Expected log-log slope window for the scaling summary.
fn slope_window(scheme: Scheme, gate: Gate) -> Option<(f64, f64)> {
    match (scheme, gate) {
        (Scheme::SrNgqg, Gate::X | Gate::Y) => Some((3.7, 4.3)),
        (Scheme::Dynamical, Gate::X) => Some((1.8, 2.2)),
        (Scheme::NgqgP1, Gate::X) => Some((3.5, f64::INFINITY)),
        (Scheme::NgqgP2, Gate::X) => Some((1.7, 2.3)),
        _ => None,
    }
}

/// Largest tolerated ΔA fidelity variation across the equivalent-error range.
const FIG4C_VARIATION_LIMIT: f64 = 0.005;

fn reproduce_cmd(a: ReproduceArgs, out: &Out) -> Result<Status> {
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let file = |name: &str| a.out_dir.join(name);
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    match a.figure {
        Figure::Table3 => {
            let rows = reproduce::table3()?;
            let mut csv = String::from("scheme,gate,computed,reference,tolerance,pass\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{:.4},{:.2},{:.2},{}",
                    r.scheme,
                    r.gate.as_str(),
                    r.computed,
                    r.reference,
                    r.tolerance,
                    r.pass()
                );
                out.line(format!(
                    "{:<10} {:<7} computed {:.3}  reference {:.2} +- {:.2}  {}",
                    r.scheme.as_str(),
                    r.gate.as_str(),
                    r.computed,
                    r.reference,
                    r.tolerance,
                    mark(r.pass())
                ));
            }
            write_atomic(&file("table3.csv"), &csv)?;
            Ok(if rows.iter().all(|r| r.pass()) { Status::Pass } else { Status::CheckFailed })
        }
        Figure::Fig3 => {
            let curves = reproduce::fig3(&linear_grid(-0.2, 0.2, 41), &log_grid(0.02, 0.2, 10))?;
            let mut csv = String::from("scheme,gate,epsilon,fidelity,infidelity\n");
            let mut slopes = String::from("scheme,gate,slope,expected_min,expected_max,pass\n");
            let mut ok = true;
            for c in &curves {
                for (e, f) in &c.points {
                    let _ = writeln!(csv, "{},{},{e:.4},{f:.15},{:.6e}", c.scheme, c.gate.as_str(), 1.0 - f);
                }
                let window = slope_window(c.scheme, c.gate);
                let pass = window.map(|(lo, hi)| c.slope >= lo && c.slope <= hi);
                ok &= pass.unwrap_or(true);
                let (lo, hi) = window
                    .map(|(l, h)| (l.to_string(), if h.is_finite() { h.to_string() } else { String::new() }))
                    .unwrap_or_default();
                let verdict = pass.map(|p| p.to_string()).unwrap_or_default();
                let _ = writeln!(slopes, "{},{},{:.4},{lo},{hi},{verdict}", c.scheme, c.gate.as_str(), c.slope);
                out.line(format!(
                    "{:<10} {:<7} slope {:.2}{}",
                    c.scheme.as_str(),
                    c.gate.as_str(),
                    c.slope,
                    pass.map(|p| format!("  {}", mark(p))).unwrap_or_default()
                ));
            }
            write_atomic(&file("fig3.csv"), &csv)?;
            write_atomic(&file("fig3_slopes.csv"), &slopes)?;
            Ok(if ok { Status::Pass } else { Status::CheckFailed })
        }
        Figure::Fig1 => {
            let trajs = reproduce::fig1(&[0.0, 0.1], 400)?;
            for scheme in [Scheme::NgqgP1, Scheme::NgqgP2, Scheme::SrNgqg] {
                let mut csv = String::from("t,x,y,z,epsilon\n");
                for tr in trajs.iter().filter(|t| t.scheme == scheme) {
                    for &(t, x, y, z) in &tr.points {
                        let _ = writeln!(csv, "{t:.12},{x:.12},{y:.12},{z:.12},{}", tr.epsilon);
                    }
                }
                let name = format!("fig1_{scheme}.csv");
                write_atomic(&file(&name), &csv)?;
                out.line(format!("wrote {name}"));
            }
            Ok(Status::Pass)
        }
        Figure::Fig4c => {
            let params = DeviceParams::default();
            let sweeps = reproduce::fig4c(&params, &linear_grid(-0.1, 0.1, 11), &SimOptions::rotating())?;
            let mut csv = String::from("scheme,delta_a_hz,equivalent_epsilon,fidelity\n");
            let mut ok = true;
            for (scheme, sw) in &sweeps {
                for p in &sw.points {
                    let _ = writeln!(
                        csv,
                        "{scheme},{:.6e},{:.6},{:.10}",
                        p.delta_a / (2.0 * PI),
                        p.equivalent_epsilon,
                        p.fidelity
                    );
                }
                let pass = sw.variation() < FIG4C_VARIATION_LIMIT;
                ok &= pass;
                out.line(format!(
                    "{:<10} fidelity variation {:.3}%  {}",
                    scheme.as_str(),
                    100.0 * sw.variation(),
                    mark(pass)
                ));
            }
            write_atomic(&file("fig4c.csv"), &csv)?;
            Ok(if ok { Status::Pass } else { Status::CheckFailed })
        }
    }
}

/// Parses arguments, runs, and maps the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return 1;
    }
    match run(cli) {
        Ok(Status::Pass) => 0,
        Ok(Status::CheckFailed) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
