//! Binary environment checkpoints with a JSON provenance sidecar.
//!
//! Layout (little-endian): magic "FDSC", format version (u32), N, D, chi
//! (u32 each), chi f64 corner values, chi*D*chi f64 half-row entries in
//! row-major (u, s, u') order, then the two log scales as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::ctmrg::Environment;
use crate::{FdsError, Result};

const MAGIC: &[u8; 4] = b"FDSC";
const VERSION: u32 = 1;

/// Provenance carried next to the binary file as `<path>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n: u32,
    pub beta: f64,
    pub h: f64,
    pub chi: u32,
    pub schedule_stage: usize,
    pub created_unix: u64,
}

pub fn save_environment(path: &Path, env: &Environment, meta: &CheckpointMeta) -> Result<()> {
    let (chi, d, chi2) = env.t.dim();
    if chi != env.chi || chi2 != chi || env.c.len() != chi {
        return Err(FdsError::Checkpoint(format!(
            "inconsistent environment shape: chi = {}, T = {} x {d} x {chi2}, |C| = {}",
            env.chi,
            chi,
            env.c.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [meta.n, d as u32, chi as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &env.c {
        w.write_all(&v.to_le_bytes())?;
    }
    for u in 0..chi {
        for s in 0..d {
            for up in 0..chi {
                w.write_all(&env.t[[u, s, up]].to_le_bytes())?;
            }
        }
    }
    w.write_all(&env.log_scale_c.to_le_bytes())?;
    w.write_all(&env.log_scale_t.to_le_bytes())?;
    w.flush()?;

    let sidecar = path.with_extension(format!(
        "{}json",
        path.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| FdsError::Checkpoint(e.to_string()))?;
    std::fs::write(sidecar, json)?;
    Ok(())
}

/// Loads an environment and its sidecar metadata (if present).
pub fn load_environment(path: &Path) -> Result<(Environment, Option<CheckpointMeta>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FdsError::Checkpoint(format!(
            "bad magic bytes {magic:?}, expected \"FDSC\""
        )));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(FdsError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let _n = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    let chi = read_u32(&mut r)? as usize;
    if chi == 0 || d == 0 || chi > 1 << 20 || d > 1 << 20 {
        return Err(FdsError::Checkpoint(format!(
            "implausible dimensions chi = {chi}, D = {d}"
        )));
    }
    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut c = vec![0.0; chi];
    for slot in &mut c {
        *slot = read_f64(&mut r)?;
    }
    let mut t = Array3::zeros((chi, d, chi));
    for u in 0..chi {
        for s in 0..d {
            for up in 0..chi {
                t[[u, s, up]] = read_f64(&mut r)?;
            }
        }
    }
    let log_scale_c = read_f64(&mut r)?;
    let log_scale_t = read_f64(&mut r)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(FdsError::Checkpoint("trailing bytes after payload".into()));
    }

    let sidecar = path.with_extension(format!(
        "{}json",
        path.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    let meta = match std::fs::read_to_string(&sidecar) {
        Ok(text) => Some(
            serde_json::from_str(&text).map_err(|e| FdsError::Checkpoint(e.to_string()))?,
        ),
        Err(_) => None,
    };
    Ok((
        Environment {
            chi,
            c,
            t,
            log_scale_c,
            log_scale_t,
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{bulk_tensor, ClockParams};
    use crate::ctmrg::{init_environment, CtmrgConfig};

    fn sample_env() -> Environment {
        let p = ClockParams::new(3, 0.7, 0.0).unwrap();
        let bulk = bulk_tensor(&p).unwrap();
        init_environment(&bulk, &CtmrgConfig::new(5)).unwrap()
    }

    fn sample_meta() -> CheckpointMeta {
        CheckpointMeta {
            n: 3,
            beta: 0.7,
            h: 0.0,
            chi: 5,
            schedule_stage: 2,
            created_unix: 1_700_000_000,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.fdsc");
        let env = sample_env();
        save_environment(&path, &env, &sample_meta()).unwrap();
        let (loaded, meta) = load_environment(&path).unwrap();
        assert_eq!(env, loaded);
        let meta = meta.unwrap();
        assert_eq!(meta.n, 3);
        assert_eq!(meta.schedule_stage, 2);
    }

    #[test]
    fn header_bytes_follow_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.fdsc");
        let env = sample_env();
        save_environment(&path, &env, &sample_meta()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"FDSC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3); // N
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3); // D
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 5); // chi
        let expected = 20 + 8 * (5 + 5 * 3 * 5 + 2);
        assert_eq!(bytes.len(), expected);
        let c0 = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(c0, env.c[0]);
    }

    #[test]
    fn rejects_corrupted_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.fdsc");
        save_environment(&path, &sample_env(), &sample_meta()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_environment(&path),
            Err(FdsError::Checkpoint(_))
        ));
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.fdsc");
        save_environment(&path, &sample_env(), &sample_meta()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_environment(&path).is_err());
    }

    #[test]
    fn loads_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.fdsc");
        save_environment(&path, &sample_env(), &sample_meta()).unwrap();
        std::fs::remove_file(dir.path().join("env.fdsc.json")).unwrap();
        let (_, meta) = load_environment(&path).unwrap();
        assert!(meta.is_none());
    }
}
