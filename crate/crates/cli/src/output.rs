//! CSV and model-file writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lccd::Trace;

use crate::CliError;

/// Formats like C's `%.12g`.
pub fn fmt_g(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // the exponent after rounding to 12 significant digits decides the style
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Files written by one command. Unless [`Outputs::keep`] is called, every
/// file is deleted on drop so a failed command leaves nothing half-written.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    keep: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new(), keep: false })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn csv(&mut self, name: &str, header: &[&str]) -> Result<csv::Writer<File>, CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        Ok(w)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn keep(&mut self) {
        self.keep = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub const TRACE_HEADER: [&str; 4] = ["k", "wall_s", "objective", "feas_residual"];
pub const STOCH_HEADER: [&str; 5] = ["k", "wall_s", "objective", "feas_residual", "best_objective"];

pub fn write_trace(out: &mut Outputs, name: &str, trace: &Trace, with_best: bool) -> Result<(), CliError> {
    let header: &[&str] = if with_best { &STOCH_HEADER } else { &TRACE_HEADER };
    let mut w = out.csv(name, header)?;
    for r in &trace.records {
        let mut row = vec![r.k.to_string(), fmt_g(r.wall_s), fmt_g(r.objective), fmt_g(r.feas_residual)];
        if with_best {
            row.push(r.best_objective.map(fmt_g).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `dim` on the first line, then `index value` for every nonzero weight
/// with 1-based indices.
pub fn write_model(out: &mut Outputs, name: &str, w: &[f64]) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(out.path(name))?);
    writeln!(f, "{}", w.len())?;
    for (k, v) in w.iter().enumerate() {
        if *v != 0.0 {
            writeln!(f, "{} {}", k + 1, fmt_g(*v))?;
        }
    }
    f.flush()?;
    Ok(())
}
