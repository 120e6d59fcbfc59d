//! Sweep orchestration: grid execution over (N, T, chi) with warm-start
//! chains, resumable CSV persistence, and environment checkpoints.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctmrg::{anneal_run, default_anneal_schedule, CtmrgConfig, InitMode};
use crate::observables::observables;
use crate::scaling::ScalingPoint;
use crate::{FdsError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub ns: Vec<u32>,
    pub temps: Vec<f64>,
    pub chis: Vec<u32>,
    /// (h, eps) stages; defaults to the standard annealing ladder
    #[serde(default)]
    pub anneal_schedule: Option<Vec<(f64, f64)>>,
    /// chain runs over descending T at fixed (N, chi), warm starting each
    /// from its hotter neighbor
    #[serde(default)]
    pub warm_start_temps: bool,
    #[serde(default)]
    pub max_iters: Option<usize>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub critical_temps: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub checkpoint_environments: bool,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| FdsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.temps.is_empty() || self.chis.is_empty() {
            return Err(FdsError::Config("empty N, T, or chi grid".into()));
        }
        if self.ns.iter().any(|&n| n < 2) {
            return Err(FdsError::Config("all N must be >= 2".into()));
        }
        if self.temps.iter().any(|&t| !(t > 0.0)) {
            return Err(FdsError::Config("all temperatures must be positive".into()));
        }
        if self.chis.iter().any(|&c| c < 2) {
            return Err(FdsError::Config("all chi must be >= 2".into()));
        }
        if let Some(s) = &self.anneal_schedule {
            if s.last().map(|&(h, _)| h) != Some(0.0) {
                return Err(FdsError::Config("anneal schedule must end at h = 0".into()));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<(f64, f64)> {
        self.anneal_schedule
            .clone()
            .unwrap_or_else(default_anneal_schedule)
    }

    pub fn csv_path(&self) -> PathBuf {
        self.output_dir.join("results.csv")
    }
}

pub const CSV_HEADER: &str = "run_id,N,T,beta,chi,h,M,xi,f,iterations,converged,eps_final,config_hash";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: String,
    pub n: u32,
    pub temp: f64,
    pub beta: f64,
    pub chi: u32,
    pub h: f64,
    pub magnetization: f64,
    pub xi: f64,
    pub free_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub eps_final: f64,
    pub config_hash: String,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.n,
            self.temp,
            self.beta,
            self.chi,
            self.h,
            self.magnetization,
            self.xi,
            self.free_energy,
            self.iterations,
            self.converged,
            self.eps_final,
            self.config_hash
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 13 {
            return Err(FdsError::Config(format!(
                "expected 13 CSV fields, got {} in: {line}",
                parts.len()
            )));
        }
        let fld = |i: usize| -> Result<f64> {
            parts[i]
                .parse()
                .map_err(|_| FdsError::Config(format!("bad numeric field {}: {line}", parts[i])))
        };
        Ok(SweepRow {
            run_id: parts[0].to_string(),
            n: parts[1]
                .parse()
                .map_err(|_| FdsError::Config(format!("bad N: {line}")))?,
            temp: fld(2)?,
            beta: fld(3)?,
            chi: parts[4]
                .parse()
                .map_err(|_| FdsError::Config(format!("bad chi: {line}")))?,
            h: fld(5)?,
            magnetization: fld(6)?,
            xi: fld(7)?,
            free_energy: fld(8)?,
            iterations: parts[9]
                .parse()
                .map_err(|_| FdsError::Config(format!("bad iterations: {line}")))?,
            converged: parts[10]
                .parse()
                .map_err(|_| FdsError::Config(format!("bad converged flag: {line}")))?,
            eps_final: fld(11)?,
            config_hash: parts[12].to_string(),
        })
    }

    pub fn as_scaling_point(&self) -> ScalingPoint {
        ScalingPoint {
            n: self.n,
            temp: self.temp,
            chi: self.chi,
            magnetization: self.magnetization,
            xi: self.xi,
            converged: self.converged,
        }
    }
}

pub fn load_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != CSV_HEADER {
                return Err(FdsError::Config(format!("unexpected CSV header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(SweepRow::from_csv(line)?);
    }
    Ok(rows)
}

/// Content hash identifying one grid point under one configuration; the
/// resume mechanism skips hashes already present in the results CSV.
pub fn point_hash(n: u32, temp: f64, chi: u32, schedule: &[(f64, f64)], max_iters: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("N={n};T={temp:.17e};chi={chi};iters={max_iters};"));
    for &(h, eps) in schedule {
        hasher.update(format!("h={h:.17e},eps={eps:.17e};"));
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct PointJob {
    n: u32,
    temp: f64,
    chi: u32,
    hash: String,
}

/// Runs every grid point not already present in the results CSV. Chains at
/// fixed (N, chi) run sequentially over temperatures (hot to cold when warm
/// starting); distinct chains run in parallel. Per-point failures become
/// unconverged rows rather than aborting the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let csv_path = config.csv_path();
    let mut done: HashSet<String> = HashSet::new();
    if csv_path.exists() {
        for row in load_rows(&csv_path)? {
            done.insert(row.config_hash);
        }
    } else {
        fs::write(&csv_path, format!("{CSV_HEADER}\n"))?;
    }
    if config.checkpoint_environments {
        fs::create_dir_all(config.output_dir.join("checkpoints"))?;
    }

    let schedule = config.schedule();
    let max_iters = config.max_iters.unwrap_or(5000);

    // one chain per (N, chi); hot-to-cold inside a chain
    let mut temps = config.temps.clone();
    temps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut chains: Vec<Vec<PointJob>> = Vec::new();
    for &n in &config.ns {
        for &chi in &config.chis {
            let chain: Vec<PointJob> = temps
                .iter()
                .map(|&temp| PointJob {
                    n,
                    temp,
                    chi,
                    hash: point_hash(n, temp, chi, &schedule, max_iters),
                })
                .filter(|j| !done.contains(&j.hash))
                .collect();
            if !chain.is_empty() {
                chains.push(chain);
            }
        }
    }

    let file = OpenOptions::new().append(true).open(&csv_path)?;
    let writer = Mutex::new(file);
    let new_rows: Mutex<Vec<SweepRow>> = Mutex::new(Vec::new());

    let run_chain = |chain: &Vec<PointJob>| -> Result<()> {
        let mut warm: Option<crate::ctmrg::Environment> = None;
        for job in chain {
            let mut ctm = CtmrgConfig::new(job.chi as usize);
            ctm.anneal_schedule = schedule.clone();
            ctm.max_iters = max_iters;
            if config.warm_start_temps {
                if let Some(env) = warm.take() {
                    ctm.init = InitMode::WarmStart(env);
                }
            }
            let beta = 1.0 / job.temp;
            let row = match anneal_run(job.n as usize, beta, &ctm) {
                Ok((env, reports)) => {
                    let last = reports.last().expect("non-empty schedule");
                    let params = crate::clock::ClockParams::new(job.n as usize, beta, 0.0)?;
                    let obs = observables(&env, &params)?;
                    if config.checkpoint_environments {
                        let path = config
                            .output_dir
                            .join("checkpoints")
                            .join(format!("{}.fdsc", job.hash));
                        let meta = crate::checkpoint::CheckpointMeta {
                            n: job.n,
                            beta,
                            h: 0.0,
                            chi: job.chi,
                            schedule_stage: reports.len() - 1,
                            created_unix: std::time::SystemTime::now()
                                .duration_since(std::time::UNIX_EPOCH)
                                .map(|d| d.as_secs())
                                .unwrap_or(0),
                        };
                        crate::checkpoint::save_environment(&path, &env, &meta)?;
                    }
                    let row = SweepRow {
                        run_id: job.hash.clone(),
                        n: job.n,
                        temp: job.temp,
                        beta,
                        chi: job.chi,
                        h: 0.0,
                        magnetization: obs.magnetization,
                        xi: obs.correlation_length,
                        free_energy: obs.free_energy_density,
                        iterations: reports.iter().map(|r| r.iterations).sum(),
                        converged: last.converged,
                        eps_final: last.final_delta,
                        config_hash: job.hash.clone(),
                    };
                    if config.warm_start_temps {
                        warm = Some(env);
                    }
                    row
                }
                Err(failure) => {
                    // record the failure as an unconverged row so the sweep
                    // continues; analyses filter on the converged flag
                    warm = None;
                    SweepRow {
                        run_id: job.hash.clone(),
                        n: job.n,
                        temp: job.temp,
                        beta,
                        chi: job.chi,
                        h: 0.0,
                        magnetization: f64::NAN,
                        xi: f64::NAN,
                        free_energy: f64::NAN,
                        iterations: failure.reports.iter().map(|r| r.iterations).sum(),
                        converged: false,
                        eps_final: f64::NAN,
                        config_hash: job.hash.clone(),
                    }
                }
            };
            {
                let mut f = writer.lock().expect("csv writer lock");
                writeln!(f, "{}", row.to_csv())?;
                f.flush()?;
            }
            new_rows.lock().expect("row buffer lock").push(row);
        }
        Ok(())
    };

    let degree = config.parallelism.unwrap_or_else(num_threads);
    if degree <= 1 || chains.len() <= 1 {
        for chain in &chains {
            run_chain(chain)?;
        }
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(degree)
            .build()
            .map_err(|e| FdsError::Config(e.to_string()))?;
        pool.install(|| chains.par_iter().map(run_chain).collect::<Result<Vec<_>>>())?;
    }

    Ok(new_rows.into_inner().expect("row buffer lock"))
}

fn num_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
