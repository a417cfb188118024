//! CSV form of a simulated series: columns `t, x1, …, xk, y`.

use std::io::{Read, Write};

use crate::error::{Result, SmcError};

/// Hidden states (one row per stage) and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl From<crate::benchmarks::ChangePointData> for Series {
    fn from(d: crate::benchmarks::ChangePointData) -> Self {
        Series {
            x: d.x.into_iter().map(|v| vec![v]).collect(),
            y: d.y,
        }
    }
}

impl From<crate::benchmarks::BearingsData> for Series {
    fn from(d: crate::benchmarks::BearingsData) -> Self {
        Series {
            x: d.x.into_iter().map(|v| v.to_vec()).collect(),
            y: d.y,
        }
    }
}

fn io_error(e: impl std::fmt::Display) -> SmcError {
    SmcError::InvalidConfiguration(format!("series csv: {e}"))
}

pub fn write_series<W: Write>(series: &Series, writer: W) -> Result<()> {
    let width = series.x.first().map_or(0, Vec::len);
    if series.x.len() != series.y.len() || series.x.iter().any(|r| r.len() != width) {
        return Err(SmcError::InvalidConfiguration("series rows are ragged".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((1..=width).map(|j| format!("x{j}")));
    header.push("y".into());
    w.write_record(&header).map_err(io_error)?;
    for (t, (x, y)) in series.x.iter().zip(&series.y).enumerate() {
        let mut row = vec![(t + 1).to_string()];
        // `{:?}` prints the shortest representation that round-trips
        row.extend(x.iter().map(|v| format!("{v:?}")));
        row.push(format!("{y:?}"));
        w.write_record(&row).map_err(io_error)?;
    }
    w.flush().map_err(io_error)?;
    Ok(())
}

pub fn read_series<R: Read>(reader: R) -> Result<Series> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(io_error)?.clone();
    if headers.len() < 2 || &headers[0] != "t" || &headers[headers.len() - 1] != "y" {
        return Err(io_error("expected columns t, x…, y"));
    }
    let width = headers.len() - 2;
    let mut series = Series { x: Vec::new(), y: Vec::new() };
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(io_error)?;
        let values: Vec<f64> = record
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(io_error))
            .collect::<Result<_>>()?;
        if values[0] != (i + 1) as f64 {
            return Err(io_error(format!("row {} has t = {}", i + 1, values[0])));
        }
        series.x.push(values[1..=width].to_vec());
        series.y.push(values[width + 1]);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::simulate_bearings;

    #[test]
    fn round_trip_is_exact() {
        let series: Series = simulate_bearings(12, 4).unwrap().into();
        let mut buf = Vec::new();
        write_series(&series, &mut buf).unwrap();
        let back = read_series(buf.as_slice()).unwrap();
        assert_eq!(back, series);
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x1,x2,x3,x4,y\n"));
    }

    #[test]
    fn rejects_wrong_columns() {
        assert!(read_series("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_series("t,x1,y\n2,0.1,0.2\n".as_bytes()).is_err());
    }
}
