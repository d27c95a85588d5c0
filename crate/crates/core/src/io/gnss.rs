use std::fmt::Write;

use super::{data_lines, parse_floats, tokens, ParseError};
use crate::geodesy::{GeodesyError, GeodeticPosition};
use crate::Vector3;

/// Parses a GNSS log (`timestamp lat lon alt sd_e sd_n sd_u` per line).
pub fn parse_gnss_log(bytes: &[u8]) -> Result<Vec<GeodeticPosition>, ParseError> {
    let lines = data_lines(bytes)?;
    if lines.is_empty() {
        log::warn!("GNSS log contains no fixes");
    }
    lines
        .into_iter()
        .map(|(no, line)| {
            let v = parse_floats(no, line, Some(7))?;
            let cols = tokens(line);
            GeodeticPosition::new(v[0], v[1], v[2], v[3], Vector3::new(v[4], v[5], v[6])).map_err(
                |e| {
                    let col = match e {
                        GeodesyError::Latitude(_) => Some(cols[1].0),
                        GeodesyError::Longitude(_) => Some(cols[2].0),
                        GeodesyError::NegativeStddev => Some(cols[4].0),
                        _ => None,
                    };
                    ParseError::at(no, col, e.to_string())
                },
            )
        })
        .collect()
}

pub fn write_gnss_log(fixes: &[GeodeticPosition]) -> Vec<u8> {
    let mut out = String::from("# timestamp lat lon alt sd_e sd_n sd_u\n");
    for f in fixes {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            f.timestamp, f.latitude, f.longitude, f.altitude, f.stddev.x, f.stddev.y, f.stddev.z
        );
    }
    out.into_bytes()
}
