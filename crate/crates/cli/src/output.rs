//! Output directory: CSV tables, plots and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cbrw_core::calibrate::{Bounded, ManifestEntry, Method};
use cbrw_core::spine::VerifyRow;

use crate::svg::Plot;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("plots"))
            .with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn plot(&self, name: &str, plot: &Plot) -> Result<()> {
        let path = self.dir.join("plots").join(name);
        fs::write(&path, plot.render()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn text(&self, name: &str, content: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
    }

    pub fn verify(&self, rows: &[VerifyRow]) -> Result<()> {
        self.csv(
            "verify.csv",
            &["name", "n", "lhs", "rhs", "diff", "tolerance", "pass"],
            rows.iter().map(|r| {
                vec![
                    r.name.clone(),
                    r.n.to_string(),
                    num(r.lhs),
                    num(r.rhs),
                    num(r.diff),
                    num(r.tolerance),
                    if r.pass { "pass" } else { "fail" }.to_string(),
                ]
            }),
        )
    }
}

/// Shortest round-trip decimal, in exponent form for very small or large
/// magnitudes; `-inf` becomes an empty field.
pub fn num(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        String::new()
    } else if x != 0.0 && x.is_finite() && !(1e-4..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// Flat `key = value` manifest.
#[derive(Debug, Default)]
pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    pub fn info(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    pub fn entry(&mut self, e: &ManifestEntry) {
        self.lines.push(e.line());
    }

    pub fn bounded(&mut self, key: &str, value: f64, method: Method, error: f64) {
        self.entry(&ManifestEntry::new(
            key,
            Bounded {
                value,
                error,
                method,
            },
        ));
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_infinity_is_empty() {
        assert_eq!(num(f64::NEG_INFINITY), "");
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e36), "1e36");
        assert_eq!(num(-2.5e-13), "-2.5e-13");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn manifest_lines() {
        let mut m = Manifest::default();
        m.info("seed", 5);
        m.bounded("r", 0.5, Method::Dp, 1e-15);
        let text = m.render();
        assert_eq!(text.lines().next(), Some("seed = 5"));
        assert!(text.contains("r = 0.5 method=DP error=1e-15"));
    }
}
