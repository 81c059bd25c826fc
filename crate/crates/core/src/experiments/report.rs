//! CSV tables and the plain-text anchor summary.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("creating {}: {e}", path.display())))?;
    write_csv(rows, std::io::BufWriter::new(f))
}

pub fn read_csv_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("opening {}: {e}", path.display())))?;
    read_csv(f)
}

/// One reference value compared against the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub anchor: String,
    pub target: f64,
    pub simulated: f64,
    /// Accepted absolute deviation.
    pub tolerance: f64,
}

impl Verdict {
    pub fn absolute(anchor: impl Into<String>, target: f64, simulated: f64, tolerance: f64) -> Self {
        Self { anchor: anchor.into(), target, simulated, tolerance }
    }

    pub fn relative(anchor: impl Into<String>, target: f64, simulated: f64, rel: f64) -> Self {
        Self::absolute(anchor, target, simulated, rel * target.abs())
    }

    /// A missing simulated value always fails.
    pub fn optional(anchor: impl Into<String>, target: f64, simulated: Option<f64>, tolerance: f64) -> Self {
        Self::absolute(anchor, target, simulated.unwrap_or(f64::NAN), tolerance)
    }

    pub fn pass(&self) -> bool {
        (self.simulated - self.target).abs() <= self.tolerance
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {}: simulated {:.6} target {:.6} ± {:.6}",
            if self.pass() { "PASS" } else { "FAIL" },
            self.anchor,
            self.simulated,
            self.target,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub title: String,
    pub notes: Vec<String>,
    pub verdicts: Vec<Verdict>,
}

impl Summary {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Default::default() }
    }

    pub fn note(&mut self, line: impl Into<String>) -> &mut Self {
        self.notes.push(line.into());
        self
    }

    pub fn check(&mut self, v: Verdict) -> &mut Self {
        self.verdicts.push(v);
        self
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.title)?;
        for n in &self.notes {
            writeln!(f, "{n}")?;
        }
        if !self.verdicts.is_empty() {
            writeln!(f)?;
            for v in &self.verdicts {
                writeln!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        x: f64,
        y: Option<f64>,
        ok: bool,
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            Row { x: 0.1 + 0.2, y: None, ok: true },
            Row { x: 1e-300, y: Some(std::f64::consts::PI), ok: false },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back: Vec<Row> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn verdict_lines() {
        let v = Verdict::relative("rkr", 1550.0, 1600.0, 0.1);
        assert!(v.pass());
        assert!(v.to_string().starts_with("PASS rkr"));
        assert!(!Verdict::optional("reach", 31.0, None, 3.0).pass());
    }
}
