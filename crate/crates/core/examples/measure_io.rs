//! Round-trips a measure through CSV and JSON and runs a CLI command in-process.

use mrt::geometry::Point;
use mrt::io::{measure_to_csv, measure_to_json, parse_csv, parse_json};
use mrt::measure::DiscreteMeasure;

fn main() -> mrt::Result<()> {
    let mu = DiscreteMeasure::new(
        vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.5, 0.1]),
            Point(vec![1.0, 0.0]),
        ],
        vec![1.0, 2.0, 1.0],
    )?;
    let csv = measure_to_csv(&mu);
    let json = measure_to_json(&mu);
    println!("csv:\n{csv}");
    println!("json: {json}");
    assert_eq!(parse_csv(&csv)?, mu);
    assert_eq!(parse_json(&json)?, mu);

    let path = std::env::temp_dir().join("mrt-measure-io-example.csv");
    std::fs::write(&path, csv).map_err(|e| mrt::Error::Input(e.to_string()))?;
    let outcome = mrt::cli::run(["mrt", "beta", path.to_str().unwrap(), "--p", "2"]);
    let preview: String = outcome.stdout.chars().take(240).collect();
    println!(
        "mrt beta exit code {}, {} bytes of JSON: {preview}...",
        outcome.code,
        outcome.stdout.len()
    );
    Ok(())
}
