use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::Vector2;

use super::PointCloud;
use crate::error::{FilamentError, Result};

/// Read `x,y` rows. A first line that does not parse as two numbers is taken
/// as a header; any later malformed row is an error naming its line.
pub fn read_points_csv(path: &Path) -> Result<PointCloud> {
    read_points_from(File::open(path)?)
}

pub fn read_points_from<R: Read>(reader: R) -> Result<PointCloud> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut pts = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FilamentError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed = (rec.len() == 2)
            .then(|| Some((rec[0].parse::<f64>().ok()?, rec[1].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some((x, y)) if x.is_finite() && y.is_finite() => pts.push(Vector2::new(x, y)),
            _ if k == 0 && rec.len() == 2 => continue,
            _ => {
                return Err(FilamentError::Csv {
                    line,
                    msg: format!("expected two finite numbers, got {:?}", rec.iter().collect::<Vec<_>>()),
                })
            }
        }
    }
    PointCloud::new(pts)
}
