//! `key = value` parameter files.
//!
//! Blank lines and lines starting with `#` are skipped. Every key may appear
//! at most once; missing keys keep their defaults. A missing `sigma_c`
//! follows `eps_lim / 3`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::params::Params;

/// Recognized keys in the order they are written.
pub const CONFIG_KEYS: [&str; 16] = [
    "T_p", "a_lim", "v_lim", "q_lim", "h_lim", "t_lim", "n_lim", "sigma_px", "WL", "SL", "eps_lim", "r_lim",
    "alpha_lim", "s_lim", "sigma_c", "ratio_test",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value:?}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { line, key: key.into(), value: value.into() })
}

pub fn parse_config(text: &str) -> Result<Params, ConfigError> {
    let mut p = Params::default();
    let mut seen = [false; CONFIG_KEYS.len()];
    let mut sigma_c_given = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        let slot = CONFIG_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey { line, key: key.into() })?;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(ConfigError::Duplicate { line, key: key.into() });
        }
        match key {
            "T_p" => p.t_p = parse(line, key, value)?,
            "a_lim" => p.tracker.a_lim = parse(line, key, value)?,
            "v_lim" => p.tracker.v_lim = parse(line, key, value)?,
            "q_lim" => p.tracker.q_lim = parse(line, key, value)?,
            "h_lim" => p.tracker.h_lim = parse(line, key, value)?,
            "t_lim" => p.tracker.t_lim = parse(line, key, value)?,
            "n_lim" => p.reconstruction.n_lim = parse(line, key, value)?,
            "sigma_px" => p.reconstruction.sigma_px = parse(line, key, value)?,
            "WL" => p.alignment.wl = parse(line, key, value)?,
            "SL" => p.alignment.sl = parse(line, key, value)?,
            "eps_lim" => p.alignment.eps_lim = parse(line, key, value)?,
            "r_lim" => p.alignment.r_lim = parse(line, key, value)?,
            "alpha_lim" => p.alignment.alpha_lim = parse(line, key, value)?,
            "s_lim" => p.alignment.s_lim = parse(line, key, value)?,
            "sigma_c" => {
                p.alignment.sigma_c = parse(line, key, value)?;
                sigma_c_given = true;
            }
            "ratio_test" => p.tracker.ratio_test = parse(line, key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    if !sigma_c_given {
        p.alignment.sigma_c = p.alignment.eps_lim / 3.0;
    }
    validate(&p)?;
    Ok(p)
}

pub fn validate(p: &Params) -> Result<(), ConfigError> {
    let bad = |e: String| ConfigError::Invalid(e);
    if !(p.t_p > 0.0 && p.t_p.is_finite()) {
        return Err(bad("T_p must be positive".into()));
    }
    p.tracker.validate().map_err(|e| bad(e.to_string()))?;
    p.alignment.validate().map_err(|e| bad(e.to_string()))?;
    let r = &p.reconstruction;
    if r.n_lim == 0 || !(r.sigma_px > 0.0) || r.max_iters == 0 || !(r.cost_tol > 0.0) || !(r.step_tol > 0.0) {
        return Err(bad("reconstruction parameters must be positive".into()));
    }
    Ok(())
}

/// Writes every key; floats use the shortest text that parses back to the
/// same value.
pub fn dump_config(p: &Params) -> String {
    let mut out = String::new();
    let values: [String; 16] = [
        p.t_p.to_string(),
        p.tracker.a_lim.to_string(),
        p.tracker.v_lim.to_string(),
        p.tracker.q_lim.to_string(),
        p.tracker.h_lim.to_string(),
        p.tracker.t_lim.to_string(),
        p.reconstruction.n_lim.to_string(),
        p.reconstruction.sigma_px.to_string(),
        p.alignment.wl.to_string(),
        p.alignment.sl.to_string(),
        p.alignment.eps_lim.to_string(),
        p.alignment.r_lim.to_string(),
        p.alignment.alpha_lim.to_string(),
        p.alignment.s_lim.to_string(),
        p.alignment.sigma_c.to_string(),
        p.tracker.ratio_test.to_string(),
    ];
    for (k, v) in CONFIG_KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Params, ConfigError> {
    parse_config(&fs::read_to_string(path)?)
}

pub fn save_config(p: &Params, path: impl AsRef<Path>) -> Result<(), ConfigError> {
    fs::write(path, dump_config(p))?;
    Ok(())
}
