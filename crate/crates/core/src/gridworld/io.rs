//! Dataset serialization: a little-endian binary record stream plus a
//! human-readable sidecar header describing the generating configuration.
//!
//! Record layout: obs as `obs_dim` f64, action u8, reward f64, next_obs as
//! `obs_dim` f64, done u8.

use super::{GridConfig, Transition};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("malformed header at line {line}: {message}")]
    Header { line: usize, message: String },
}

pub fn write_records(w: &mut impl Write, records: &[Transition]) -> Result<(), DatasetIoError> {
    for t in records {
        if t.action > u8::MAX as usize {
            return Err(DatasetIoError::Malformed(format!(
                "action {} does not fit the u8 record field",
                t.action
            )));
        }
        for &v in &t.obs {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[t.action as u8])?;
        w.write_all(&t.reward.to_le_bytes())?;
        for &v in &t.next_obs {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[t.done as u8])?;
    }
    Ok(())
}

pub fn read_records(r: &mut impl Read, obs_dim: usize) -> Result<Vec<Transition>, DatasetIoError> {
    let mut out = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let mut obs = Vec::with_capacity(obs_dim);
        match read_f64_opt(r)? {
            None => return Ok(out),
            Some(first) => obs.push(first),
        }
        for _ in 1..obs_dim {
            obs.push(read_f64(r)?);
        }
        r.read_exact(&mut byte)?;
        let action = byte[0] as usize;
        let reward = read_f64(r)?;
        let mut next_obs = Vec::with_capacity(obs_dim);
        for _ in 0..obs_dim {
            next_obs.push(read_f64(r)?);
        }
        r.read_exact(&mut byte)?;
        let done = match byte[0] {
            0 => false,
            1 => true,
            other => {
                return Err(DatasetIoError::Malformed(format!(
                    "done flag byte {}",
                    other
                )))
            }
        };
        out.push(Transition {
            obs,
            action,
            reward,
            next_obs,
            done,
        });
    }
}

fn read_f64(r: &mut impl Read) -> Result<f64, DatasetIoError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Reads one f64, returning `None` on a clean end of stream.
fn read_f64_opt(r: &mut impl Read) -> Result<Option<f64>, DatasetIoError> {
    let mut buf = [0u8; 8];
    let mut filled = 0;
    while filled < 8 {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(DatasetIoError::Malformed("truncated record".into()));
        }
        filled += n;
    }
    Ok(Some(f64::from_le_bytes(buf)))
}

pub fn write_header(config: &GridConfig, n_records: usize) -> String {
    let mut out = String::new();
    writeln!(out, "gridworld_dataset v1").unwrap();
    writeln!(out, "grid_size {}", config.grid_size).unwrap();
    writeln!(out, "obs_height {}", config.obs_height).unwrap();
    writeln!(out, "obs_width {}", config.obs_width).unwrap();
    writeln!(out, "kernel_std {}", config.kernel_std).unwrap();
    writeln!(out, "kernel_truncation {}", config.kernel_truncation).unwrap();
    writeln!(out, "noise_std {}", config.noise_std).unwrap();
    writeln!(out, "seed {}", config.seed).unwrap();
    writeln!(out, "n_records {}", n_records).unwrap();
    writeln!(out, "end").unwrap();
    out
}

pub fn parse_header(input: &str) -> Result<(GridConfig, usize), DatasetIoError> {
    let mut config = GridConfig::default();
    let mut n_records = 0usize;
    let mut saw_magic = false;
    let mut saw_end = false;
    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_magic {
            if !line.starts_with("gridworld_dataset") {
                return Err(DatasetIoError::Header {
                    line: idx + 1,
                    message: format!("expected gridworld_dataset header, found {:?}", line),
                });
            }
            saw_magic = true;
            continue;
        }
        if line == "end" {
            saw_end = true;
            break;
        }
        let (key, value) = line.split_once(char::is_whitespace).ok_or_else(|| {
            DatasetIoError::Header {
                line: idx + 1,
                message: format!("expected `key value`, found {:?}", line),
            }
        })?;
        let value = value.trim();
        let bad = |message: String| DatasetIoError::Header {
            line: idx + 1,
            message,
        };
        match key {
            "grid_size" => config.grid_size = value.parse().map_err(|e| bad(format!("{}", e)))?,
            "obs_height" => config.obs_height = value.parse().map_err(|e| bad(format!("{}", e)))?,
            "obs_width" => config.obs_width = value.parse().map_err(|e| bad(format!("{}", e)))?,
            "kernel_std" => config.kernel_std = value.parse().map_err(|e| bad(format!("{}", e)))?,
            "kernel_truncation" => {
                config.kernel_truncation = value.parse().map_err(|e| bad(format!("{}", e)))?
            }
            "noise_std" => config.noise_std = value.parse().map_err(|e| bad(format!("{}", e)))?,
            "seed" => config.seed = value.parse().map_err(|e| bad(format!("{}", e)))?,
            "n_records" => n_records = value.parse().map_err(|e| bad(format!("{}", e)))?,
            other => {
                return Err(bad(format!("unknown header key {:?}", other)));
            }
        }
    }
    if !saw_magic || !saw_end {
        return Err(DatasetIoError::Header {
            line: 0,
            message: "missing gridworld_dataset header or end marker".into(),
        });
    }
    Ok((config, n_records))
}

/// Write `dataset.bin` and its `dataset.header.txt` sidecar next to each
/// other.
pub fn save_dataset(
    path: impl AsRef<Path>,
    config: &GridConfig,
    records: &[Transition],
) -> Result<(), DatasetIoError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    write_records(&mut w, records)?;
    w.flush()?;
    std::fs::write(sidecar_path(path), write_header(config, records.len()))?;
    Ok(())
}

/// Load a dataset written by [`save_dataset`], returning the header config
/// alongside the records.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(GridConfig, Vec<Transition>), DatasetIoError> {
    let path = path.as_ref();
    let header = std::fs::read_to_string(sidecar_path(path))?;
    let (config, n_records) = parse_header(&header)?;
    let mut r = BufReader::new(File::open(path)?);
    let records = read_records(&mut r, config.obs_dim())?;
    if records.len() != n_records {
        return Err(DatasetIoError::Malformed(format!(
            "header promises {} records, file holds {}",
            n_records,
            records.len()
        )));
    }
    Ok((config, records))
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".header.txt");
    path.with_file_name(name)
}

/// Debug CSV of the collection trajectory: step, cell coordinates, action,
/// reward.
pub fn write_step_csv(
    w: &mut impl Write,
    positions: &[(usize, usize)],
    records: &[Transition],
) -> Result<(), DatasetIoError> {
    writeln!(w, "step,row,col,action,reward")?;
    for (i, t) in records.iter().enumerate() {
        let (row, col) = positions[i];
        writeln!(w, "{},{},{},{},{}", i, row, col, t.action, t.reward)?;
    }
    Ok(())
}
