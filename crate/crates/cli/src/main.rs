use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use scbicm_core::bitmap::{Tolerances, Violation};
use scbicm_core::channel::{default_snr_grid, ebn0_db, erasure_profile};
use scbicm_core::density::threshold;
use scbicm_core::lifting::{assign_channels, lift};
use scbicm_core::optimizer::{joint_design, optimize_mapping_only};
use scbicm_core::protograph::{
    build_continuous_connected, build_loop_connected, build_single_chain, default_loop_positions,
};
use scbicm_core::simulator::run_ber;
use scbicm_core::workflow::{self, Table2Config};
use scbicm_core::{
    BerRecord, BitMapping, ChannelAssignment, EnsembleDescription, ErasureProfile, Error,
    LabeledConstellation, LiftedCode, Protograph, SimConfig, SingleChainParams,
};

#[derive(Parser)]
#[command(
    name = "scbicm",
    version,
    about = "Connected-chain SC-LDPC coded BICM design tools"
)]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bit-channel erasure profiles.
    #[command(subcommand)]
    Channel(ChannelCmd),
    /// Protograph construction.
    #[command(subcommand)]
    Ensemble(EnsembleCmd),
    /// Density-evolution threshold of a graph and mapping.
    Threshold(ThresholdArgs),
    /// Bit-mapping files.
    #[command(subcommand)]
    Bitmap(BitmapCmd),
    /// Joint or mapping-only design.
    #[command(subcommand)]
    Optimize(OptimizeCmd),
    /// Lift a protograph into a parity-check matrix.
    Lift(LiftArgs),
    /// Monte Carlo BER simulation.
    Simulate(SimulateArgs),
    /// Reference reproduction runs.
    #[command(subcommand)]
    Reproduce(ReproduceCmd),
}

#[derive(Subcommand)]
enum ChannelCmd {
    /// Tabulate per-bit-channel erasure probabilities over an SNR grid.
    Profile {
        #[arg(long, default_value = "16qam-gray")]
        constellation: String,
        /// Grid as `start:step:stop` in dB; -2 to 12 dB in 0.05 dB steps by default.
        #[arg(long)]
        snr: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EnsembleCmd {
    /// Build a protograph from a JSON description or a named family.
    Build {
        /// JSON ensemble description.
        #[arg(long, conflicts_with = "family")]
        description: Option<PathBuf>,
        /// single, loop or continuous.
        #[arg(long)]
        family: Option<String>,
        #[arg(long, default_value = "3,6,10,2")]
        params: String,
        /// Loop connect positions, comma separated.
        #[arg(long)]
        positions: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Profile file; the built-in 16-QAM profile when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Bit mapping; uniform when omitted.
    #[arg(long)]
    bitmap: Option<PathBuf>,
    #[command(flatten)]
    de: DeArgs,
}

#[derive(Args, Clone)]
struct DeArgs {
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    bisect_tol: f64,
}

#[derive(Subcommand)]
enum BitmapCmd {
    /// Check the mapping constraints.
    Validate {
        #[arg(long)]
        bitmap: PathBuf,
        /// Accept row sums off by up to 1e-3, as in tables rounded to 4 digits.
        #[arg(long)]
        rounded: bool,
    },
    /// Realize a fractional mapping on Q copies per VN.
    Expand {
        #[arg(long)]
        bitmap: PathBuf,
        #[arg(long = "Q", alias = "q")]
        q: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct DesignArgs {
    /// JSON design configuration (seed, hyper, opts); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
}

impl DesignArgs {
    fn resolve(&self) -> Result<Table2Config, Error> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => Table2Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.population {
            cfg.hyper.population = p;
        }
        if let Some(g) = self.generations {
            cfg.hyper.generations = g;
        }
        if let Some(c) = self.candidates {
            cfg.hyper.candidate_limit = c;
        }
        cfg.hyper.seed = cfg.seed;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum OptimizeCmd {
    /// Connections and mapping together.
    Joint {
        #[arg(long, default_value = "3,6,10,2")]
        params: String,
        #[arg(long, default_value_t = 2)]
        chains: u32,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        out_graph: Option<PathBuf>,
        #[arg(long)]
        out_bitmap: Option<PathBuf>,
    },
    /// Mapping only, for a fixed graph.
    Mapping {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        out_bitmap: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long = "Q", alias = "q")]
    q: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// `start:step:stop` or a comma-separated list, in dB.
    #[arg(long)]
    ebn0: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_frames: usize,
    #[arg(long, default_value_t = 200)]
    target_errors: usize,
    #[arg(long, default_value_t = 100)]
    bp_iters: usize,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig, Error> {
        Ok(SimConfig {
            ebn0_points: parse_points(&self.ebn0)?,
            max_frames: self.max_frames,
            target_bit_errors: self.target_errors,
            bp_iters: self.bp_iters,
            seed: self.seed,
            random_codewords: false,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    code: PathBuf,
    #[arg(long)]
    assign: PathBuf,
    #[arg(long, default_value = "16qam-gray")]
    constellation: String,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReproduceCmd {
    /// Threshold table for C, L1, L2 and the joint design.
    Table2 {
        #[arg(long)]
        profile: Option<PathBuf>,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write designed graphs and mappings here.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Exit with status 1 if any row misses its target.
        #[arg(long)]
        strict: bool,
    },
    /// BER of C, L1, L2 (uniform) and the designed system at one code length.
    Fig6 {
        /// Lift factor for two-chain ensembles; the single chain uses 2Q.
        #[arg(long = "Q", alias = "q", default_value_t = 500)]
        q: usize,
        /// Designed graph; designed from scratch when omitted.
        #[arg(long, requires = "bitmap")]
        graph: Option<PathBuf>,
        #[arg(long, requires = "graph")]
        bitmap: Option<PathBuf>,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value = "2.4:0.2:3.8")]
        ebn0: String,
        #[arg(long, default_value_t = 1000)]
        max_frames: usize,
        #[arg(long, default_value_t = 200)]
        target_errors: usize,
        #[arg(long, default_value_t = 100)]
        bp_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, Error> {
    Ok(fs::read_to_string(path)?)
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_points(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidParams(format!("bad point list {spec:?}"));
    let nums = |s: &str| -> Result<Vec<f64>, Error> {
        s.split([':', ','])
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    };
    if spec.contains(':') {
        let v = nums(spec)?;
        let [start, step, stop] = v[..] else {
            return Err(bad());
        };
        if step <= 0.0 || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // round to the step's resolution so grid points print cleanly
        Ok((0..=n)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect())
    } else {
        nums(spec)
    }
}

fn load_profile(path: Option<&Path>) -> Result<ErasureProfile, Error> {
    match path {
        Some(p) => ErasureProfile::parse(&read(p)?),
        None => {
            info!("building the 16-QAM Gray profile");
            workflow::qam16_profile()
        }
    }
}

fn load_graph(path: &Path) -> Result<Protograph, Error> {
    Protograph::load_json(&read(path)?)
}

fn rate_of(g: &Protograph) -> f64 {
    let r = g.design_rate();
    *r.numer() as f64 / *r.denom() as f64
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Channel(ChannelCmd::Profile {
            constellation,
            snr,
            out,
        }) => {
            let c = LabeledConstellation::by_id(&constellation)?;
            let grid = match snr {
                Some(s) => parse_points(&s)?,
                None => default_snr_grid(),
            };
            let p = erasure_profile(&c, &grid)?;
            emit(out.as_deref(), &p.to_text())?;
        }
        Command::Ensemble(EnsembleCmd::Build {
            description,
            family,
            params,
            positions,
            out,
        }) => {
            let g = match (description, family.as_deref()) {
                (Some(path), _) => {
                    let d: EnsembleDescription = serde_json::from_str(&read(&path)?)?;
                    d.build()?
                }
                (None, fam) => {
                    let p = SingleChainParams::parse(&params)?;
                    match fam.unwrap_or("single") {
                        "single" => build_single_chain(&p)?,
                        "loop" => {
                            let pos = match positions {
                                Some(s) => s
                                    .split(',')
                                    .map(|x| x.trim().parse::<u32>())
                                    .collect::<Result<Vec<_>, _>>()
                                    .map_err(|e| Error::InvalidParams(e.to_string()))?,
                                None => default_loop_positions(&p),
                            };
                            build_loop_connected(&p, &pos)?
                        }
                        "continuous" => build_continuous_connected(&p)?,
                        other => {
                            return Err(Error::InvalidParams(format!("unknown family {other:?}")))
                        }
                    }
                }
            };
            emit(out.as_deref(), &(g.to_json()? + "\n"))?;
        }
        Command::Threshold(a) => {
            let g = load_graph(&a.graph)?;
            let profile = load_profile(a.profile.as_deref())?;
            let map = match &a.bitmap {
                Some(p) => BitMapping::parse(&read(p)?)?,
                None => BitMapping::uniform(profile.m(), g.vn_count()),
            };
            let opts = scbicm_core::DeOptions {
                max_iters: a.de.max_iters,
                bisect_tol: a.de.bisect_tol,
                ..Default::default()
            };
            let th = threshold(&g, &map, &profile, &opts)?;
            println!("avg_erasure,snr_db,ebn0_db");
            println!(
                "{:.6},{:.4},{:.4}",
                th.avg_erasure,
                th.snr_db,
                ebn0_db(th.snr_db, rate_of(&g), profile.m())
            );
        }
        Command::Bitmap(BitmapCmd::Validate { bitmap, rounded }) => {
            let map = BitMapping::parse(&read(&bitmap)?)?;
            let tol = if rounded {
                Tolerances::ROUNDED
            } else {
                Tolerances::STRICT
            };
            match map.validate(tol) {
                Ok(()) => println!("ok: {} channels x {} VNs", map.m(), map.v()),
                Err(vs) => {
                    for v in &vs {
                        println!("violation: {v}");
                    }
                    let first: &Violation = &vs[0];
                    return Err(Error::Mapping(format!(
                        "{} violations, first: {first}",
                        vs.len()
                    )));
                }
            }
        }
        Command::Bitmap(BitmapCmd::Expand {
            bitmap,
            q,
            seed,
            out,
        }) => {
            let map = BitMapping::parse(&read(&bitmap)?)?;
            let a = assign_channels(&map, q, seed)?;
            emit(out.as_deref(), &a.to_text())?;
        }
        Command::Optimize(OptimizeCmd::Joint {
            params,
            chains,
            profile,
            design,
            out_graph,
            out_bitmap,
        }) => {
            let p = SingleChainParams::parse(&params)?;
            let profile = load_profile(profile.as_deref())?;
            let cfg = design.resolve()?;
            let d = joint_design(&p, chains, &profile, &cfg.hyper, &cfg.opts)?;
            report_design(&d, &profile, out_graph.as_deref(), out_bitmap.as_deref())?;
        }
        Command::Optimize(OptimizeCmd::Mapping {
            graph,
            profile,
            design,
            out_bitmap,
        }) => {
            let g = load_graph(&graph)?;
            let profile = load_profile(profile.as_deref())?;
            let cfg = design.resolve()?;
            let d = optimize_mapping_only(&g, &profile, &cfg.hyper, &cfg.opts)?;
            report_design(&d, &profile, None, out_bitmap.as_deref())?;
        }
        Command::Lift(a) => {
            let g = load_graph(&a.graph)?;
            let code = lift(&g, a.q, a.seed)?;
            emit(a.out.as_deref(), &code.to_text())?;
        }
        Command::Simulate(a) => {
            let code = LiftedCode::parse(&read(&a.code)?)?;
            let assignment = ChannelAssignment::parse(&read(&a.assign)?)?;
            let c = LabeledConstellation::by_id(&a.constellation)?;
            let records = run_ber(&code, &assignment, &c, &a.sim.config()?)?;
            emit(a.out.as_deref(), &ber_csv(&records))?;
        }
        Command::Reproduce(ReproduceCmd::Table2 {
            profile,
            design,
            out,
            artifacts,
            strict,
        }) => {
            let profile = load_profile(profile.as_deref())?;
            let cfg = design.resolve()?;
            let outcome = workflow::reproduce_table2(&cfg, &profile)?;
            emit(out.as_deref(), &outcome.report)?;
            if let Some(dir) = artifacts {
                fs::create_dir_all(&dir)?;
                for (name, d) in &outcome.mapping_only {
                    fs::write(
                        dir.join(format!("{name}-optimized.map")),
                        d.mapping.to_text(),
                    )?;
                }
                fs::write(
                    dir.join("joint.json"),
                    outcome.joint.graph.to_json()? + "\n",
                )?;
                fs::write(dir.join("joint.map"), outcome.joint.mapping.to_text())?;
            }
            if strict && !outcome.all_pass() {
                return Ok(1);
            }
        }
        Command::Reproduce(ReproduceCmd::Fig6 {
            q,
            graph,
            bitmap,
            design,
            ebn0,
            max_frames,
            target_errors,
            bp_iters,
            out,
        }) => {
            let params = workflow::table2_params();
            let cfg = design.resolve()?;
            let (g, map) = match (graph, bitmap) {
                (Some(g), Some(b)) => (load_graph(&g)?, BitMapping::parse(&read(&b)?)?),
                _ => {
                    let profile = workflow::qam16_profile()?;
                    let d = joint_design(&params, 2, &profile, &cfg.hyper, &cfg.opts)?;
                    (d.graph, d.mapping)
                }
            };
            if q >= 2000 {
                log::warn!("Q = {q}: full-scale simulation, expect a very long run");
            }
            let systems = workflow::fig6_systems(&params, (&g, &map), q)?;
            let sim = SimConfig {
                ebn0_points: parse_points(&ebn0)?,
                max_frames,
                target_bit_errors: target_errors,
                bp_iters,
                seed: cfg.seed,
                random_codewords: false,
            };
            let rows =
                workflow::reproduce_fig6(&systems, &LabeledConstellation::qam16_gray(), &sim)?;
            emit(out.as_deref(), &workflow::fig6_csv(&rows))?;
        }
    }
    Ok(0)
}

fn report_design(
    d: &scbicm_core::Design,
    profile: &ErasureProfile,
    out_graph: Option<&Path>,
    out_bitmap: Option<&Path>,
) -> Result<(), Error> {
    if let Some(w) = &d.warning {
        log::warn!("{w}");
    }
    println!("step,design_point,objective,candidates,threshold");
    for (i, s) in d.steps.iter().enumerate() {
        println!(
            "{i},{:.6},{},{},{:.6}",
            s.design_point, s.objective, s.candidates, s.threshold
        );
    }
    println!(
        "# threshold {:.6} (uniform start {:.6}), E_b/N_0 {:.4} dB",
        d.threshold.avg_erasure,
        d.initial_threshold,
        ebn0_db(d.threshold.snr_db, rate_of(&d.graph), profile.m())
    );
    if let Some(p) = out_graph {
        fs::write(p, d.graph.to_json()? + "\n")?;
    }
    if let Some(p) = out_bitmap {
        fs::write(p, d.mapping.to_text())?;
    }
    Ok(())
}

fn ber_csv(records: &[BerRecord]) -> String {
    let mut s = format!("{},ci95_lo,ci95_hi\n", BerRecord::CSV_HEADER);
    for r in records {
        let (lo, hi) = r.ci95();
        s.push_str(&format!("{},{lo:.6e},{hi:.6e}\n", r.csv_row()));
    }
    s
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) => 3,
        Error::Constraint { .. } => 4,
        Error::BudgetMismatch { .. } => 5,
        Error::Profile(_) => 6,
        Error::OutOfRange { .. } => 7,
        Error::NoBracket(_) => 8,
        Error::Mapping(_) => 9,
        Error::Lifting(_) => 10,
        Error::Parse { .. } => 11,
        Error::Io(_) => 12,
        Error::Json(_) => 13,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
