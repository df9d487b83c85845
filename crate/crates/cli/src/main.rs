//! `nresolve` command-line front end.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nresolve::detection::{build_coincidence_histogram, build_decay_histogram, PhotonStream};
use nresolve::photstat::{
    estimate_g2_area_ratio_with, estimate_g2_instantaneous, fit_decay, DecayModel,
    InstantaneousOptions, DEFAULT_PEAK_WINDOW_FRACTION,
};
use nresolve::pipeline::{
    histogram_stream_csv, read_histogram_csv, read_stream_file, run_pipeline, simulate_particle,
    to_json_string, write_histogram_csv, write_stream_binary, write_stream_csv, ExperimentConfig,
    Versioned, BINARY_MAGIC,
};
use nresolve::resolver::{
    fit_lifetime_scaling, generate_surface, resolve_with_constraints, LifetimeScalingFit,
    SurfaceGrid, DEFAULT_SURFACE_MAX_N,
};
use nresolve::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "nresolve",
    version,
    about = "Simulate collective emission and resolve emitter numbers from g²(0) and lifetime"
)]
struct Cli {
    /// Experiment configuration (JSON). Required by `simulate` and `pipeline`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides the `seed` key of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file, or directory for commands that write several files.
    /// Single-file results go to stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate photon streams for the configured particles.
    Simulate(SimulateArgs),
    /// Build a TCSPC decay histogram from a stream file.
    Trpl(TrplArgs),
    /// Estimate g²(0) from a detected stream file.
    G2(G2Args),
    /// Fit a decay histogram.
    FitDecay(FitDecayArgs),
    /// Resolve the emitter number from g²(0) and the collective lifetime.
    Resolve(ResolveArgs),
    /// Generate the (τ₁, g², N) lookup surface.
    Map(MapArgs),
    /// Run simulate → detect → histogram → fit → resolve for every particle.
    Pipeline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StreamFormatArg {
    Csv,
    Binary,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Stream encoding.
    #[arg(long, value_enum, default_value = "csv")]
    format: StreamFormatArg,
}

#[derive(Args, Debug)]
struct TrplArgs {
    /// Stream file (CSV or QDT1 binary).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Histogram bin width in ps.
    #[arg(long, default_value_t = 100)]
    bin_width_ps: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Instantaneous,
    AreaRatio,
}

#[derive(Args, Debug)]
struct G2Args {
    /// Detected stream file (CSV or QDT1 binary).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "instantaneous")]
    estimator: EstimatorArg,
    /// Early window of the instantaneous estimator in ps; default 5% of the fitted lifetime.
    #[arg(long)]
    window_ps: Option<u64>,
    /// Report the single-window ratio without extrapolation to zero width.
    #[arg(long)]
    no_extrapolate: bool,
    /// Decay histogram bin width (ps) used to fit the default window.
    #[arg(long, default_value_t = 100)]
    decay_bin_width_ps: u64,
    /// Coincidence histogram bin width in ps (area ratio).
    #[arg(long, default_value_t = 1000)]
    coincidence_bin_width_ps: u64,
    /// Side peaks on each side of zero delay (area ratio).
    #[arg(long, default_value_t = 3)]
    side_periods: u32,
    /// Peak integration half-window as a fraction of the period (area ratio).
    #[arg(long, default_value_t = DEFAULT_PEAK_WINDOW_FRACTION)]
    peak_window_fraction: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Mono,
    Biexp,
}

#[derive(Args, Debug)]
struct FitDecayArgs {
    /// Histogram CSV (`bin_start_ps,count`).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "biexp")]
    model: ModelArg,
}

#[derive(Args, Debug)]
struct ResolveArgs {
    /// Measured g²(0).
    #[arg(long)]
    g2: f64,
    /// Collective lifetime τ₁ in ns.
    #[arg(long)]
    tau1_ns: f64,
    /// Mean single-emitter lifetime τ̄₀ in ns.
    #[arg(long)]
    tau0_ns: f64,
    /// Peak intensity relative to a single emitter; breaks ambiguous inversions.
    #[arg(long)]
    brightness: Option<f64>,
    /// Exponent p of the brightness model I ∝ N^p (default 1).
    #[arg(long)]
    brightness_exponent: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MapFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct MapArgs {
    /// Scaling slope a in τ₁ = b + a/N, ns.
    #[arg(long, requires = "b_ns")]
    a_ns: Option<f64>,
    /// Scaling floor b in τ₁ = b + a/N, ns.
    #[arg(long, requires = "a_ns")]
    b_ns: Option<f64>,
    /// Fit a and b from `N:tau1_ns` pairs instead, e.g. `1:48.95,2:31.42`.
    #[arg(long, conflicts_with_all = ["a_ns", "b_ns"], value_name = "PAIRS")]
    pairs: Option<String>,
    /// Mean single-emitter lifetime τ̄₀ in ns.
    #[arg(long)]
    tau0_ns: f64,
    #[arg(long, default_value_t = DEFAULT_SURFACE_MAX_N)]
    n_max: u32,
    #[arg(long, default_value_t = 5.0)]
    tau1_min_ns: f64,
    #[arg(long, default_value_t = 50.0)]
    tau1_max_ns: f64,
    #[arg(long, default_value_t = 91)]
    tau1_steps: usize,
    #[arg(long, default_value_t = 0.5)]
    g2_min: f64,
    #[arg(long, default_value_t = 1.5)]
    g2_max: f64,
    #[arg(long, default_value_t = 201)]
    g2_steps: usize,
    /// Half-width of each g² cell; default half the g² spacing.
    #[arg(long)]
    g2_tolerance: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: MapFormat,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    emit(out, &text)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_stream(s: &PhotonStream, format: StreamFormatArg, out: Option<&Path>) -> Result<()> {
    match (format, out) {
        (StreamFormatArg::Csv, Some(p)) => write_stream_csv(s, File::create(p)?),
        (StreamFormatArg::Csv, None) => write_stream_csv(s, io::stdout().lock()),
        (StreamFormatArg::Binary, Some(p)) => write_stream_binary(s, File::create(p)?),
        (StreamFormatArg::Binary, None) => write_stream_binary(s, io::stdout().lock()),
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let counts = cfg.ensemble.n.values();
    if counts.len() == 1 {
        let (_, s) = simulate_particle(&cfg, 0, counts[0])?;
        return write_stream(&s, args.format, cli.out.as_deref());
    }
    let dir = cli.out.as_ref().ok_or_else(|| {
        Error::InvalidInput(
            "--out DIR is required when the config lists several emitter counts".into(),
        )
    })?;
    std::fs::create_dir_all(dir)?;
    let ext = match args.format {
        StreamFormatArg::Csv => "csv",
        StreamFormatArg::Binary => "qdt",
    };
    for (index, n) in counts.into_iter().enumerate() {
        let (_, s) = simulate_particle(&cfg, index, n)?;
        write_stream(
            &s,
            args.format,
            Some(&dir.join(format!("particle_{index:03}_n{n}_stream.{ext}"))),
        )?;
    }
    Ok(())
}

fn is_binary(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path)?;
    Ok(std::io::Read::read(&mut f, &mut magic)? == 4 && &magic == BINARY_MAGIC)
}

fn trpl(cli: &Cli, args: &TrplArgs) -> Result<()> {
    let h = if is_binary(&args.input)? {
        build_decay_histogram(&read_stream_file(&args.input)?, args.bin_width_ps)?
    } else {
        histogram_stream_csv(File::open(&args.input)?, args.bin_width_ps)?
    };
    match &cli.out {
        Some(p) => write_histogram_csv(&h, File::create(p)?),
        None => write_histogram_csv(&h, io::stdout().lock()),
    }
}

fn g2(cli: &Cli, args: &G2Args) -> Result<()> {
    let s = read_stream_file(&args.input)?;
    let estimate = match args.estimator {
        EstimatorArg::AreaRatio => {
            let h =
                build_coincidence_histogram(&s, args.coincidence_bin_width_ps, args.side_periods)?;
            estimate_g2_area_ratio_with(&h, args.peak_window_fraction)?
        }
        EstimatorArg::Instantaneous => {
            let h = build_decay_histogram(&s, args.decay_bin_width_ps)?;
            let opts = InstantaneousOptions {
                window_ps: args.window_ps,
                extrapolate: !args.no_extrapolate,
            };
            estimate_g2_instantaneous(&s, &h, &opts)?
        }
    };
    emit_json(cli.out.as_deref(), &Versioned::new(estimate))
}

fn fit(cli: &Cli, args: &FitDecayArgs) -> Result<()> {
    let h = read_histogram_csv(File::open(&args.input)?)?;
    let model = match args.model {
        ModelArg::Mono => DecayModel::Mono,
        ModelArg::Biexp => DecayModel::Biexp,
    };
    emit_json(cli.out.as_deref(), &Versioned::new(fit_decay(&h, model)?))
}

fn resolve(cli: &Cli, args: &ResolveArgs) -> Result<()> {
    let est = resolve_with_constraints(
        args.g2,
        args.tau1_ns,
        args.tau0_ns,
        args.brightness,
        args.brightness_exponent,
    )?;
    emit_json(cli.out.as_deref(), &Versioned::new(est))
}

fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|pair| {
            let (n, t) = pair
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("pair {pair:?} is not N:tau1_ns")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("{s:?}: {e}")))
            };
            Ok((parse(n)?, parse(t)?))
        })
        .collect()
}

fn map(cli: &Cli, args: &MapArgs) -> Result<()> {
    let fit = match (&args.pairs, args.a_ns, args.b_ns) {
        (Some(p), _, _) => Some(fit_lifetime_scaling(&parse_pairs(p)?)?),
        (None, Some(a), Some(b)) => Some(LifetimeScalingFit {
            a,
            b,
            covariance: [[0.0; 2]; 2],
            goodness: 0.0,
            b_clamped: false,
        }),
        _ => None,
    };
    let grid = SurfaceGrid {
        tau1_min_ns: args.tau1_min_ns,
        tau1_max_ns: args.tau1_max_ns,
        tau1_steps: args.tau1_steps,
        g2_min: args.g2_min,
        g2_max: args.g2_max,
        g2_steps: args.g2_steps,
        g2_tolerance: args.g2_tolerance,
    };
    let surface = generate_surface(fit.as_ref(), args.tau0_ns, args.n_max, &grid)?;
    match args.format {
        MapFormat::Json => emit_json(cli.out.as_deref(), &surface),
        MapFormat::Csv => match &cli.out {
            Some(p) => surface.write_csv(File::create(p)?),
            None => surface.write_csv(io::stdout().lock()),
        },
    }
}

fn pipeline(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from));
    if let Some(d) = &dir {
        cfg.output.dir = Some(d.display().to_string());
    }
    let report = run_pipeline(&cfg, dir.as_deref())?;
    let mut text = to_json_string(&report)?;
    text.push('\n');
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Trpl(a) => trpl(cli, a),
        Command::G2(a) => g2(cli, a),
        Command::FitDecay(a) => fit(cli, a),
        Command::Resolve(a) => resolve(cli, a),
        Command::Map(a) => map(cli, a),
        Command::Pipeline => pipeline(cli),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim(), 2),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
