//! JSON Lines dataset files.
//!
//! Line 1 is a header `{"format_version":1,"env_config":{...}}`; every
//! following line is one trajectory object.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Trajectory};
use crate::env::{EnvConfig, OBS_DIM};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    env_config: EnvConfig,
}

pub fn save(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        format_version: FORMAT_VERSION,
        env_config: dataset.env_config.clone(),
    };
    write_line(&mut w, &header, path)?;
    for traj in &dataset.trajectories {
        write_line(&mut w, traj, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let shown = path.display().to_string();
    let parse_err = |line: usize, field: &str, message: String| Error::Parse {
        path: shown.clone(),
        line,
        field: field.to_string(),
        message,
    };

    let mut lines = BufReader::new(file).lines().enumerate();
    let header_line = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(1, "format_version", "missing header line".into())),
    };
    let header: Header = parse_json(&header_line).map_err(|(f, m)| parse_err(1, &f, m))?;
    if header.format_version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            "format_version",
            format!("unsupported version {}", header.format_version),
        ));
    }
    header.env_config.validate().map_err(|e| parse_err(1, "env_config", e.to_string()))?;

    let mut dataset = Dataset::new(header.env_config);
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory = parse_json(&line).map_err(|(f, m)| parse_err(lineno, &f, m))?;
        validate(&traj, dataset.env_config.horizon).map_err(|(f, m)| parse_err(lineno, f, m))?;
        dataset.trajectories.push(traj);
    }
    Ok(dataset)
}

fn parse_json<T: serde::de::DeserializeOwned>(line: &str) -> std::result::Result<T, (String, String)> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        (field, e.into_inner().to_string())
    })
}

fn validate(t: &Trajectory, horizon: usize) -> std::result::Result<(), (&'static str, String)> {
    let binary = |v: &[u8]| v.iter().position(|&x| x > 1);
    if let Some(i) = binary(&t.rewards) {
        return Err(("rewards", format!("entry {i} is {}, expected 0 or 1", t.rewards[i])));
    }
    if let Some(i) = binary(&t.costs) {
        return Err(("costs", format!("entry {i} is {}, expected 0 or 1", t.costs[i])));
    }
    let lens = [
        ("actions", t.actions.len(), horizon),
        ("rewards", t.rewards.len(), horizon),
        ("costs", t.costs.len(), horizon),
        ("states", t.states.len(), horizon + 1),
    ];
    for (field, got, want) in lens {
        if got != want {
            return Err((field, format!("length {got}, expected {want}")));
        }
    }
    if let Some(i) = t.states.iter().position(|s| s.len() != OBS_DIM || s.iter().any(|v| !v.is_finite())) {
        return Err(("states", format!("state {i} must hold {OBS_DIM} finite values")));
    }
    if !t.goal.is_finite() || t.actions.iter().any(|a| !a.is_finite()) {
        return Err(("actions", "non-finite value".into()));
    }
    if !(t.tolerance > 0.0) {
        return Err(("tolerance", format!("must be > 0, got {}", t.tolerance)));
    }
    t.obstacle.validate().map_err(|e| ("obstacle", e.to_string()))
}
