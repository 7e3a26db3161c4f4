//! Report emission: deterministic JSON plus optional CSV wealth dumps.
//!
//! Identical config and seed must produce byte-identical report files, so
//! floats are printed at 17 significant digits (exact round-trip), struct
//! field order is declaration order, and anything time-dependent goes to
//! a `<out>.meta.json` sidecar instead of the report itself.

use insider_val_core::battery::CriterionResult;
use insider_val_core::diagnostics::{ArbReport, MartingaleReport};
use insider_val_core::dualopt::{MultiplierSolution, UtilityEstimate};
use insider_val_core::replication::ReplicationReport;
use insider_val_core::valuation::ValueRegime;
use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use std::io::{self, Write};
use std::path::Path;

use crate::config::ResolvedConfig;
use crate::CliError;

#[derive(Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub task: String,
    pub seed: u64,
    pub config: ResolvedConfig,
    pub outputs: Outputs,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outputs {
    Diagnose(DiagnoseOutputs),
    Optimize(OptimizeOutputs),
    Value(ValueOutputs),
    Replicate(ReplicateOutputs),
    Suite(SuiteOutputs),
}

#[derive(Serialize)]
pub struct DiagnoseOutputs {
    /// Closed-form or quadrature arbitrage report, when the model has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arbitrage_closed: Option<ArbReport>,
    pub arbitrage_mc: ArbReport,
    pub martingale: Vec<MartingaleEntry>,
}

#[derive(Serialize)]
pub struct MartingaleEntry {
    pub process: String,
    pub report: MartingaleReport,
}

#[derive(Serialize)]
pub struct OptimizeOutputs {
    pub role: String,
    pub multiplier: MultiplierSolution,
    pub utility_closed: f64,
    pub utility_mc: UtilityEstimate,
    pub ordinary_utility_closed: f64,
    /// Insider minus ordinary optimal utility at the same capital.
    pub information_gain_closed: f64,
}

#[derive(Serialize)]
pub struct ValueOutputs {
    pub entries: Vec<ValueEntry>,
}

#[derive(Serialize)]
pub struct ValueEntry {
    pub v: f64,
    pub k: f64,
    pub utility: String,
    /// What actually produced the number: closed, root, or mc.
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<ValueRegime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted_below: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    /// Utility-free value, present when the terminal density is constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub universal: Option<f64>,
}

#[derive(Serialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Serialize)]
pub struct ReplicateOutputs {
    pub report: ReplicationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
}

#[derive(Serialize)]
pub struct SuiteOutputs {
    pub criteria: Vec<CriterionResult>,
    pub all_passed: bool,
}

// -----------------------------------------------------------------------
// JSON writer
// -----------------------------------------------------------------------

/// Pretty formatter that prints every f64 at 17 significant digits.
struct SigDigitFormatter {
    indent: usize,
    has_value: bool,
}

impl SigDigitFormatter {
    fn new() -> Self {
        SigDigitFormatter {
            indent: 0,
            has_value: false,
        }
    }

    fn newline<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for SigDigitFormatter {
    fn write_f64<W: Write + ?Sized>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            // non-finite values have no JSON representation; mirror the
            // default serializer
            w.write_all(b"null")
        }
    }

    fn begin_array<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: Write + ?Sized>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: Write + ?Sized>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: Write + ?Sized>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: Write + ?Sized>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serializes a report to its canonical byte representation.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, SigDigitFormatter::new());
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes the report to `out` (or stdout when `None`) and, for file
/// output, a `<out>.meta.json` sidecar holding the timing information
/// excluded from the byte-stable report.
pub fn emit(report: &RunReport, out: Option<&Path>, wall_seconds: f64) -> Result<(), CliError> {
    let bytes = to_json_bytes(report)?;
    match out {
        None => {
            io::stdout()
                .write_all(&bytes)
                .map_err(|e| CliError::Io(format!("writing report to stdout: {e}")))?;
        }
        Some(path) => {
            std::fs::write(path, &bytes)
                .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
            let meta = Meta {
                created_unix_seconds: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                wall_clock_seconds: wall_seconds,
            };
            let mut meta_path = path.as_os_str().to_owned();
            meta_path.push(".meta.json");
            std::fs::write(&meta_path, to_json_bytes(&meta)?).map_err(|e| {
                CliError::Io(format!("writing {}: {e}", Path::new(&meta_path).display()))
            })?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Meta {
    created_unix_seconds: u64,
    wall_clock_seconds: f64,
}

/// CSV wealth dump: one row per grid time per path, paths in order,
/// `t` restarting at zero on each new path.
pub fn write_wealth_csv(
    path: &Path,
    rows: impl Iterator<Item = (f64, f64, f64, f64)>,
) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
    let mut w = io::BufWriter::new(file);
    (|| -> io::Result<()> {
        writeln!(w, "t,wealth,oracle,density")?;
        for (t, wealth, oracle, density) in rows {
            writeln!(w, "{t},{wealth},{oracle},{density}")?;
        }
        w.flush()
    })()
    .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Probe {
        a: f64,
        b: Vec<f64>,
        c: &'static str,
    }

    #[test]
    fn floats_round_trip_exactly() {
        let probe = Probe {
            a: 0.1 + 0.2,
            b: vec![1.0, f64::MIN_POSITIVE, 1.0 / 3.0],
            c: "x",
        };
        let bytes = to_json_bytes(&probe).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1 + 0.2);
        assert_eq!(back["b"][1].as_f64().unwrap(), f64::MIN_POSITIVE);
        assert_eq!(back["b"][2].as_f64().unwrap(), 1.0 / 3.0);
        // 17 significant digits: mantissa digit, point, 16 more
        assert!(text.contains("3.0000000000000004e-1"));
    }

    #[test]
    fn serialization_is_deterministic() {
        let probe = Probe {
            a: std::f64::consts::PI,
            b: vec![2.5; 3],
            c: "y",
        };
        assert_eq!(to_json_bytes(&probe).unwrap(), to_json_bytes(&probe).unwrap());
    }
}
