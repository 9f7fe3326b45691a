//! Flag parsing and output plumbing shared by the subcommands.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use revguard::prior::{continuous_from_parts, ContinuousPrior, Prior, PriorFile};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_SIZE_CAP: i32 = 4;

pub fn fail(code: i32, msg: impl Display) -> ! {
    eprintln!("error: {msg}");
    std::process::exit(code);
}

/// Parse the prior mini-language: `uniform`, `beta:b,c`, `powercdf:h`,
/// `concavecdf`, `triangle`, or `file:PATH`.
pub fn parse_prior(spec: &str) -> Result<Prior<f64>, String> {
    if let Some(path) = spec.strip_prefix("file:") {
        let text = fs::read_to_string(Path::new(path))
            .map_err(|e| format!("cannot read prior file {path}: {e}"))?;
        let file: PriorFile =
            serde_json::from_str(&text).map_err(|e| format!("bad prior file {path}: {e}"))?;
        return file.into_prior().map_err(|e| e.to_string());
    }
    let (family, params) = match spec.split_once(':') {
        Some((f, rest)) => {
            let params: Result<Vec<f64>, _> =
                rest.split(',').map(|p| p.trim().parse::<f64>()).collect();
            (f, params.map_err(|e| format!("bad prior parameter in {spec}: {e}"))?)
        }
        None => (spec, Vec::new()),
    };
    let prior = continuous_from_parts::<f64>(family, &params).map_err(|e| e.to_string())?;
    Ok(Prior::Continuous(prior))
}

pub fn require_continuous(prior: Prior<f64>) -> Result<ContinuousPrior<f64>, String> {
    match prior {
        Prior::Continuous(p) => Ok(p),
        Prior::Discrete(_) => Err("this command needs a continuous prior".into()),
    }
}

/// Grid cells from a `--nu` flag: nu must be the reciprocal of an integer.
pub fn cells_from_nu(nu: f64) -> Result<usize, String> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(format!("nu {nu} out of (0, 1]"));
    }
    let n = (1.0 / nu).round();
    if (1.0 / nu - n).abs() > 1e-9 {
        return Err(format!("nu {nu} is not the reciprocal of an integer"));
    }
    Ok(n as usize)
}

/// Parse `key=value` lists such as `a=1,X=0.05`; keys are matched
/// case-insensitively against `expected`.
pub fn parse_kv(spec: &str, expected: &[&str]) -> Result<Vec<f64>, String> {
    let mut out = vec![None; expected.len()];
    for part in spec.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {part}"))?;
        let idx = expected
            .iter()
            .position(|e| e.eq_ignore_ascii_case(key.trim()))
            .ok_or_else(|| format!("unknown key {key} (expected one of {expected:?})"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|e| format!("bad value for {key}: {e}"))?;
        out[idx] = Some(v);
    }
    out.iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| format!("missing {}", expected[i])))
        .collect()
}

/// Write to the given path, or stdout when absent.
pub fn emit(out: &Option<PathBuf>, content: &str) {
    match out {
        Some(path) => {
            if let Err(e) = fs::write(path, content) {
                fail(1, format!("cannot write {}: {e}", path.display()));
            }
        }
        None => print!("{content}"),
    }
}

pub fn to_json<S: serde::Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}
