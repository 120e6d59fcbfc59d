//! Command-line front end: sweeps, analyses, verifications, oracles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fds::scaling::{self, CriticalTemps, ScalingPoint};
use fds::sweep::{load_rows, run_sweep, SweepConfig};

#[derive(Parser)]
#[command(name = "fds", about = "Clock-model tensor network toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a (N, T, chi) CTMRG sweep from a TOML config
    Sweep(SweepArgs),
    /// Extrapolate a swept observable to infinite bond dimension
    Extrapolate(ExtrapolateArgs),
    /// Fit the correlation-length scaling form to (N, T, xi) data
    FitXi(FitXiArgs),
    /// Scaling collapses
    #[command(subcommand)]
    Collapse(CollapseCommand),
    /// Integrate the sine-Gordon flow and report closed-form checks
    Rg(RgArgs),
    /// Run the gauge-theory verification suite on a small torus
    LgtVerify(LgtArgs),
    /// Evaluate an independent oracle
    Oracle(OracleArgs),
    /// Fast end-to-end self-test of every module
    Selftest,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep configuration
    #[arg(long)]
    config: PathBuf,
    /// override the configured output directory (env: FDS_OUTPUT_DIR)
    #[arg(long, env = "FDS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// override the configured parallelism degree (env: FDS_PARALLELISM)
    #[arg(long, env = "FDS_PARALLELISM")]
    parallelism: Option<usize>,
}

#[derive(Copy, Clone, ValueEnum)]
enum FieldArg {
    M,
    Xi,
}

#[derive(Args)]
struct ExtrapolateArgs {
    /// results CSV produced by `sweep`
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    n: u32,
    /// temperature of the fixed (N, T) slice
    #[arg(long)]
    temp: f64,
    #[arg(long, value_enum)]
    field: FieldArg,
    #[arg(long, default_value_t = scaling::CHI_MIN_DEFAULT)]
    chi_min: u32,
}

#[derive(Args)]
struct FitXiArgs {
    /// CSV with rows N,T,xi (no header)
    #[arg(long)]
    input: PathBuf,
    /// critical temperatures as N=T_L pairs, e.g. --t-l 6=0.9 --t-l 7=0.88
    #[arg(long = "t-l", value_parser = parse_tl)]
    t_l: Vec<(u32, f64)>,
}

#[derive(Subcommand)]
enum CollapseCommand {
    /// Infinite-chi collapse in N of an observable against reduced T
    AnsatzN(AnsatzArgs),
    /// Critical-window scan for the xi ~ chi^kappa exponent
    Kappa(KappaArgs),
    /// Finite-chi crossover collapse of the magnetization
    Crossover(CrossoverArgs),
}

#[derive(Args)]
struct AnsatzArgs {
    /// CSV with rows N,T,O (no header), O extrapolated to infinite chi
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "t-l", value_parser = parse_tl)]
    t_l: Vec<(u32, f64)>,
    /// fixed scaling dimension; default is the magnetization value 2/N^2
    #[arg(long)]
    delta: Option<f64>,
    /// write the collapse point cloud here as CSV
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args)]
struct KappaArgs {
    /// results CSV produced by `sweep`
    #[arg(long)]
    csv: PathBuf,
    /// critical-window lower edge (per-N windows come from repeated flags
    /// as N=T; a bare number applies to every N)
    #[arg(long)]
    t_min: f64,
    #[arg(long)]
    t_max: f64,
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossoverArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long = "t-l", value_parser = parse_tl)]
    t_l: Vec<(u32, f64)>,
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    delta: Option<f64>,
    /// half-width of the |t| window kept around T_L
    #[arg(long, default_value_t = 0.2)]
    t_window: f64,
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args)]
struct RgArgs {
    #[arg(long)]
    u0: f64,
    #[arg(long)]
    d0: f64,
    #[arg(long, default_value_t = 20.0)]
    l_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    dl: f64,
    /// write the trajectory CSV here (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LgtArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    beta: f64,
    /// torus size as LXxLY, e.g. 2x2
    #[arg(long, default_value = "2x2")]
    lattice: String,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    kind: OracleKind,
}

#[derive(Subcommand)]
enum OracleKind {
    /// log Z by enumeration on a small torus
    Z {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 2)]
        lx: usize,
        #[arg(long, default_value_t = 2)]
        ly: usize,
        #[arg(long, default_value_t = 0.0)]
        h: f64,
    },
    /// strip transfer-matrix free energy, extrapolated in width
    StripF {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "6,8,10,12")]
        widths: Vec<usize>,
    },
    /// closed-form square-lattice results at N = 2
    Ising {
        #[arg(long)]
        beta: f64,
    },
}

fn parse_tl(s: &str) -> Result<(u32, f64), String> {
    let (n, t) = s
        .split_once('=')
        .ok_or_else(|| format!("expected N=T_L, got {s}"))?;
    Ok((
        n.parse().map_err(|e| format!("bad N in {s}: {e}"))?,
        t.parse().map_err(|e| format!("bad T_L in {s}: {e}"))?,
    ))
}

fn temps_from(pairs: &[(u32, f64)]) -> anyhow::Result<CriticalTemps> {
    let mut temps = CriticalTemps::new();
    for &(n, t) in pairs {
        temps.insert(n, t)?;
    }
    Ok(temps)
}

fn read_triples(path: &PathBuf) -> anyhow::Result<Vec<(u32, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            anyhow::bail!("expected 3 fields (N,T,value) per line, got: {line}");
        }
        out.push((
            parts[0].trim().parse()?,
            parts[1].trim().parse()?,
            parts[2].trim().parse()?,
        ));
    }
    Ok(out)
}

fn write_points(path: &PathBuf, result: &scaling::CollapseResult) -> anyhow::Result<()> {
    let mut text = String::from("x,y,N,chi,T\n");
    for p in &result.points {
        text.push_str(&format!("{},{},{},{},{}\n", p.x, p.y, p.n, p.chi, p.temp));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn emit<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn converged_points(path: &PathBuf) -> anyhow::Result<Vec<ScalingPoint>> {
    Ok(load_rows(path)?
        .iter()
        .map(|r| r.as_scaling_point())
        .filter(|p| p.converged && p.xi.is_finite())
        .collect())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sweep(args) => {
            let text = std::fs::read_to_string(&args.config)?;
            let mut cfg = SweepConfig::from_toml(&text)?;
            if let Some(dir) = args.output_dir {
                cfg.output_dir = dir;
            }
            if let Some(par) = args.parallelism {
                cfg.parallelism = Some(par);
            }
            let rows = run_sweep(&cfg)?;
            #[derive(serde::Serialize)]
            struct Summary {
                new_rows: usize,
                csv: PathBuf,
            }
            emit(&Summary {
                new_rows: rows.len(),
                csv: cfg.csv_path(),
            })
        }
        Command::Extrapolate(args) => {
            let slice: Vec<ScalingPoint> = load_rows(&args.csv)?
                .iter()
                .map(|r| r.as_scaling_point())
                .filter(|p| p.n == args.n && (p.temp - args.temp).abs() < 1e-12)
                .collect();
            let field = match args.field {
                FieldArg::M => scaling::Field::M,
                FieldArg::Xi => scaling::Field::Xi,
            };
            let result = scaling::extrapolate_chi(&slice, field, args.chi_min)?;
            emit(&result)
        }
        Command::FitXi(args) => {
            let data = read_triples(&args.input)?;
            let temps = temps_from(&args.t_l)?;
            let fit = scaling::fit_xi_scaling(&data, &temps)?;
            emit(&fit)
        }
        Command::Collapse(cmd) => match cmd {
            CollapseCommand::AnsatzN(args) => {
                let data = read_triples(&args.input)?;
                let temps = temps_from(&args.t_l)?;
                let delta = args.delta;
                let result = scaling::collapse_ansatz_n(&data, &temps, |n| {
                    delta.unwrap_or(2.0 / (n as f64 * n as f64))
                })?;
                if let Some(out) = &args.points_out {
                    write_points(out, &result)?;
                }
                emit(&result)
            }
            CollapseCommand::Kappa(args) => {
                let records: Vec<ScalingPoint> = converged_points(&args.csv)?
                    .into_iter()
                    .filter(|p| p.temp >= args.t_min && p.temp <= args.t_max)
                    .collect();
                let (kappa, result) = scaling::collapse_kappa(&records)?;
                let (grouped, pooled) = scaling::kappa_grouping_scores(&records, kappa)?;
                if let Some(out) = &args.points_out {
                    write_points(out, &result)?;
                }
                #[derive(serde::Serialize)]
                struct KappaReport {
                    kappa: f64,
                    score: f64,
                    grouped_score: f64,
                    pooled_score: f64,
                    points: usize,
                }
                emit(&KappaReport {
                    kappa,
                    score: result.score,
                    grouped_score: grouped,
                    pooled_score: pooled,
                    points: result.points.len(),
                })
            }
            CollapseCommand::Crossover(args) => {
                let temps = temps_from(&args.t_l)?;
                let records: Vec<ScalingPoint> = converged_points(&args.csv)?
                    .into_iter()
                    .filter(|p| {
                        temps
                            .reduced(p.n, p.temp)
                            .map(|t| t.abs() <= args.t_window)
                            .unwrap_or(false)
                    })
                    .collect();
                let delta = args.delta;
                let result = scaling::collapse_crossover(
                    &records,
                    &temps,
                    |n| delta.unwrap_or(2.0 / (n as f64 * n as f64)),
                    args.kappa,
                )?;
                if let Some(out) = &args.points_out {
                    write_points(out, &result)?;
                }
                emit(&result)
            }
        },
        Command::Rg(args) => {
            let params = fds::rg::SgFlowParams {
                u0: args.u0,
                d0: args.d0,
                l_max: args.l_max,
                dl: args.dl,
            };
            let traj = fds::rg::integrate_flow(&params)?;
            let c = params.c_invariant();
            let mut text = String::from("l,z1,z2,z1_analytic\n");
            let c1 = if c > 0.0 {
                Some(fds::rg::c1_small_coupling(args.u0 + args.d0, c)?)
            } else {
                None
            };
            for i in 0..traj.l.len() {
                let analytic = c1
                    .map(|c1| fds::rg::analytic_z1(traj.l[i], c, c1).unwrap_or(f64::NAN))
                    .unwrap_or(f64::NAN);
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    traj.l[i], traj.z1[i], traj.z2[i], analytic
                ));
            }
            match &args.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::LgtVerify(args) => {
            let (lx, ly) = args
                .lattice
                .split_once('x')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| anyhow::anyhow!("bad --lattice, expected LXxLY"))?;
            let mut min_eig = f64::INFINITY;
            let mut max_sos = 0.0f64;
            for k1 in 0..args.n {
                for k2 in 0..args.n {
                    for k3 in 0..args.n {
                        let c = fds::lgt::sector_phase_sum(args.n, [k1, k2, k3]);
                        let (e, r) =
                            fds::lgt::verify_psd_identity(args.n, args.beta, c, 20, 7)?;
                        min_eig = min_eig.min(e);
                        max_sos = max_sos.max(r);
                    }
                }
            }
            let lat = fds::lgt::DualLattice::new(lx, ly, args.n)?;
            let annihilation = fds::lgt::annihilation_residual(&lat, args.beta)?;
            let partition = fds::lgt::partition_equivalence(&lat, args.beta)?;
            let gauss = fds::lgt::LinkSpace::new(lx, ly, args.n)
                .and_then(|ls| ls.gauss_law_residual(args.beta))
                .ok();
            #[derive(serde::Serialize)]
            struct LgtReport {
                min_eigenvalue: f64,
                sos_identity_residual: f64,
                annihilation_residual: f64,
                partition_deviation: f64,
                gauss_residual: Option<f64>,
                pass: bool,
            }
            let report = LgtReport {
                min_eigenvalue: min_eig,
                sos_identity_residual: max_sos,
                annihilation_residual: annihilation,
                partition_deviation: partition,
                gauss_residual: gauss,
                pass: min_eig >= -1e-12
                    && max_sos < 1e-10
                    && annihilation < 1e-10
                    && partition < 1e-12
                    && gauss.map(|g| g < 1e-12).unwrap_or(true),
            };
            emit(&report)?;
            if !report.pass {
                anyhow::bail!("gauge-theory verification failed");
            }
            Ok(())
        }
        Command::Oracle(args) => {
            #[derive(serde::Serialize)]
            struct OracleOut {
                name: &'static str,
                value: f64,
            }
            let out = match args.kind {
                OracleKind::Z { n, beta, lx, ly, h } => OracleOut {
                    name: "log_z",
                    value: fds::oracle::brute_force_z(&fds::oracle::LatticeSpec {
                        lx,
                        ly,
                        boundary: fds::oracle::Boundary::Torus,
                        n,
                        beta,
                        h,
                    })?,
                },
                OracleKind::StripF { n, beta, widths } => OracleOut {
                    name: "strip_f_extrapolated",
                    value: fds::oracle::strip_extrapolate_f(n, beta, &widths)?,
                },
                OracleKind::Ising { beta } => OracleOut {
                    name: "ising_magnetization",
                    value: fds::oracle::ising_exact_magnetization(beta),
                },
            };
            emit(&out)
        }
        Command::Selftest => selftest(),
    }
}

fn selftest() -> anyhow::Result<()> {
    let mut checks: Vec<(&str, bool, String)> = Vec::new();
    let mut push = |name: &'static str, ok: bool, detail: String| {
        checks.push((name, ok, detail));
    };

    // gate decomposition across the full parameter grid
    let mut worst = 0.0f64;
    for n in 2..=12 {
        for &beta in &[0.5, 1.0, 2.0] {
            let p = fds::clock::ClockParams::new(n, beta, 0.0)?;
            worst = worst.max(fds::clock::verify_gate_decomposition(&p)?);
        }
    }
    push("gate_decomposition", worst < 1e-12, format!("max residual {worst:.3e}"));

    // partition-function triangle: bulk contraction vs enumeration
    let p = fds::clock::ClockParams::new(3, 0.6, 0.0)?;
    let bulk = fds::clock::bulk_tensor(&p)?;
    let z_bulk = fds::clock::bulk_torus_log_z(&bulk, 2, 2)?;
    let z_ref = fds::oracle::brute_force_z(&fds::oracle::LatticeSpec {
        lx: 2,
        ly: 2,
        boundary: fds::oracle::Boundary::Torus,
        n: 3,
        beta: 0.6,
        h: 0.0,
    })?;
    let dev = (z_bulk - z_ref).abs() / z_ref.abs();
    push("bulk_contraction", dev < 1e-10, format!("relative deviation {dev:.3e}"));

    // CTMRG magnetization against the closed form
    let cfg = fds::ctmrg::CtmrgConfig::new(16);
    let (env, _) = fds::ctmrg::anneal_run(2, 0.5, &cfg)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let m = fds::observables::magnetization(&env, &fds::clock::ClockParams::new(2, 0.5, 0.0)?)?
        .abs();
    let m_exact = fds::oracle::ising_exact_magnetization(0.5);
    push(
        "ctmrg_magnetization",
        (m - m_exact).abs() < 1e-3,
        format!("M = {m:.6} vs {m_exact:.6}"),
    );

    // flow integrator against the closed form
    let params = fds::rg::SgFlowParams {
        u0: 0.03,
        d0: 0.0,
        l_max: 10.0,
        dl: 1e-4,
    };
    let traj = fds::rg::integrate_flow(&params)?;
    let c = params.c_invariant();
    let c1 = fds::rg::c1_exact(0.03, c)?;
    let mut rg_dev = 0.0f64;
    for (i, &l) in traj.l.iter().enumerate() {
        let z = fds::rg::analytic_z1(l, c, c1)?;
        if z.abs() > 5.0 {
            break;
        }
        rg_dev = rg_dev.max((traj.z1[i] - z).abs());
    }
    push("rg_flow", rg_dev < 1e-8, format!("max deviation {rg_dev:.3e}"));

    // gauge-theory block on a 2x2 torus at N = 3
    let lat = fds::lgt::DualLattice::new(2, 2, 3)?;
    let ann = fds::lgt::annihilation_residual(&lat, 0.8)?;
    let part = fds::lgt::partition_equivalence(&lat, 0.8)?;
    push(
        "lgt_verification",
        ann < 1e-10 && part < 1e-12,
        format!("annihilation {ann:.3e}, partition {part:.3e}"),
    );

    // analysis layer round trips
    let mut temps = CriticalTemps::new();
    for n in 6u32..=9 {
        temps.insert(n, 0.9)?;
    }
    let mut data = Vec::new();
    for n in 6u32..=9 {
        for k in 1..=5 {
            let t = -0.04 * k as f64;
            let logxi = std::f64::consts::LN_2.ln() - 1.5 * (n as f64).ln()
                + std::f64::consts::FRAC_PI_4 / ((-t) / n as f64).sqrt();
            data.push((n, 0.9 * (1.0 + t), logxi.exp()));
        }
    }
    let fit = scaling::fit_xi_scaling(&data, &temps)?;
    push(
        "xi_fit_round_trip",
        (fit.a - 1.5).abs() < 1e-6 && (fit.b - 1.0).abs() < 1e-6,
        format!("a = {:.8}, b = {:.8}, eps0 = {:.8}", fit.a, fit.b, fit.eps0),
    );

    let mut recs = Vec::new();
    for &n in &[6u32, 7] {
        for &chi in &[40u32, 64, 96] {
            for k in 0..5 {
                let temp = 0.95 + 0.01 * k as f64;
                recs.push(ScalingPoint {
                    n,
                    temp,
                    chi,
                    magnetization: 0.1,
                    xi: (1.0 + temp) * (chi as f64).powf(1.247),
                    converged: true,
                });
            }
        }
    }
    let (kappa, _) = scaling::collapse_kappa(&recs)?;
    push(
        "kappa_round_trip",
        (kappa - 1.247).abs() < 1e-3,
        format!("kappa = {kappa:.6}"),
    );

    #[derive(serde::Serialize)]
    struct Check {
        name: String,
        pass: bool,
        detail: String,
    }
    let all: Vec<Check> = checks
        .iter()
        .map(|(n, p, d)| Check {
            name: n.to_string(),
            pass: *p,
            detail: d.clone(),
        })
        .collect();
    emit(&all)?;
    if checks.iter().any(|c| !c.1) {
        anyhow::bail!("selftest failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({ "error": err.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
