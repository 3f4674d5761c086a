//! Measure files and JSON reports.
//!
//! CSV rows hold `n` coordinates followed by a weight; lines starting with `#` are
//! comments, and `# dim=<n>` fixes the dimension. JSON measures look like
//! `{"dim": n, "atoms": [[x1, .., xn, w], ...]}`. Floats in every JSON document written
//! here carry 17 significant digits.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::measure::DiscreteMeasure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub fn load_measure(path: &Path, format: Option<Format>) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Csv => parse_csv(&text),
        Format::Json => parse_json(&text),
    }
}

pub fn parse_csv(text: &str) -> Result<DiscreteMeasure> {
    let mut dim: Option<usize> = None;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("dim=") {
                let d = v
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Input(format!("bad dimension header '{line}'")))?;
                if d == 0 {
                    return Err(Error::Input("dimension must be at least 1".into()));
                }
                dim = Some(d);
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Input(format!("csv: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let values = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Input(format!("line {line}: '{f}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() < 2 {
            return Err(Error::Input(format!(
                "line {line}: need coordinates and a weight"
            )));
        }
        let n = values.len() - 1;
        match dim {
            Some(d) if d != n => {
                return Err(Error::Input(format!(
                    "line {line}: {n} coordinates, expected {d}"
                )));
            }
            None => dim = Some(n),
            _ => {}
        }
        push_atom(&values, &format!("line {line}"), &mut points, &mut weights)?;
    }
    let dim = dim.ok_or_else(|| Error::Input("no atoms and no dimension header".into()))?;
    DiscreteMeasure::with_dim(dim, points, weights)
}

fn push_atom(
    values: &[f64],
    at: &str,
    points: &mut Vec<Point>,
    weights: &mut Vec<f64>,
) -> Result<()> {
    let (coords, w) = values.split_at(values.len() - 1);
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::Input(format!("{at}: coordinates must be finite")));
    }
    if !(w[0].is_finite() && w[0] > 0.0) {
        return Err(Error::Input(format!(
            "{at}: weight {} must be positive",
            w[0]
        )));
    }
    points.push(Point(coords.to_vec()));
    weights.push(w[0]);
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    atoms: Vec<Vec<f64>>,
}

pub fn parse_json(text: &str) -> Result<DiscreteMeasure> {
    let file: MeasureFile =
        serde_json::from_str(text).map_err(|e| Error::Input(format!("json: {e}")))?;
    if file.dim == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (i, atom) in file.atoms.iter().enumerate() {
        if atom.len() != file.dim + 1 {
            return Err(Error::Input(format!(
                "atom {i}: {} values, expected {}",
                atom.len(),
                file.dim + 1
            )));
        }
        push_atom(atom, &format!("atom {i}"), &mut points, &mut weights)?;
    }
    DiscreteMeasure::with_dim(file.dim, points, weights)
}

pub fn measure_to_json(mu: &DiscreteMeasure) -> String {
    let file = MeasureFile {
        dim: mu.dim(),
        atoms: mu
            .atoms()
            .map(|(p, w)| p.iter().copied().chain(std::iter::once(w)).collect())
            .collect(),
    };
    to_json(&file)
}

pub fn measure_to_csv(mu: &DiscreteMeasure) -> String {
    let mut out = format!("# dim={}\n", mu.dim());
    for (p, w) in mu.atoms() {
        let row: Vec<String> = p
            .iter()
            .chain(std::iter::once(&w))
            .map(|v| format!("{v:.16e}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

struct SignificantDigits;

impl serde_json::ser::Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{:.16e}", f64::from(value))
    }
}

/// Compact JSON with 17 significant digits per float; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    value
        .serialize(&mut ser)
        .expect("in-memory serialization cannot fail");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// Writes `to_json(report)` followed by a newline.
pub fn save_report<T: Serialize + ?Sized>(report: &T, path: &Path) -> Result<()> {
    let mut text = to_json(report);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_header_and_comments() {
        let mu = parse_csv("# dim=2\n# a comment\n0,0,1\n").unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.points()[0].0, vec![0.0, 0.0]);
        assert_eq!(mu.weights(), &[1.0]);
    }

    #[test]
    fn zero_weight_names_line() {
        let err = parse_csv("0,0,1\n1,1,0\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn inconsistent_dimension() {
        assert!(parse_csv("0,0,1\n1,1,1,1\n").is_err());
        assert!(parse_csv("# dim=3\n0,0,1\n").is_err());
        assert!(parse_json(r#"{"dim": 2, "atoms": [[0, 0, 1], [1, 1]]}"#).is_err());
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let mu = DiscreteMeasure::new(
            vec![Point(vec![0.1, 1.0 / 3.0]), Point(vec![-2.5e-7, 1e10])],
            vec![0.7, std::f64::consts::PI],
        )
        .unwrap();
        let text = measure_to_json(&mu);
        let back = parse_json(&text).unwrap();
        assert_eq!(back, mu);
        assert_eq!(measure_to_json(&back), text);
        assert_eq!(parse_csv(&measure_to_csv(&mu)).unwrap(), mu);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(to_json(&[0.1f64]), "[1.0000000000000001e-1]");
    }
}
