//! Line-delimited persistence for space-time fields.
//!
//! One line per time slice: `t,re_0,im_0,re_1,im_1,...` over all spatial
//! nodes, boundary nodes included. Numbers use the shortest decimal form that
//! parses back to the same `f64`, so a write/read cycle is bit-exact. Lines
//! starting with `#` are comments.

use std::io::{BufRead, Write};

use crate::grid::{Grid1D, SpaceTimeField, TimeGrid};
use crate::{Error, Result, C64};

pub fn write_field<W: Write>(out: &mut W, field: &SpaceTimeField) -> Result<()> {
    let time = field.time();
    let mut line = String::new();
    for n in 0..time.nodes() {
        line.clear();
        line.push_str(&format!("{}", time.t(n)));
        for v in field.slice(n) {
            line.push_str(&format!(",{},{}", v.re, v.im));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Reads records written by [`write_field`]. The spatial grid is supplied by
/// the caller; the time grid is recovered from the record count and last
/// time stamp, and every stamp must match it exactly.
pub fn read_field<R: BufRead>(input: R, grid: Grid1D) -> Result<SpaceTimeField> {
    let mut stamps = Vec::new();
    let mut slices = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let nums: Vec<f64> = trimmed
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Record { line: lineno, message: format!("`{s}`: {e}") })
            })
            .collect::<Result<_>>()?;
        if nums.len() != 1 + 2 * grid.nodes() {
            return Err(Error::Record {
                line: lineno,
                message: format!("expected {} values, found {}", 1 + 2 * grid.nodes(), nums.len()),
            });
        }
        stamps.push((lineno, nums[0]));
        slices.push(nums[1..].chunks(2).map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>());
    }
    let (_, horizon) = *stamps.last().ok_or(Error::Record { line: 0, message: "no records".into() })?;
    let time = TimeGrid::new(horizon, stamps.len() - 1)
        .map_err(|e| Error::Record { line: stamps.len(), message: e.to_string() })?;
    for (n, &(lineno, t)) in stamps.iter().enumerate() {
        if t != time.t(n) {
            return Err(Error::Record { line: lineno, message: format!("time stamp {t} does not match node {}", time.t(n)) });
        }
    }
    SpaceTimeField::from_slices(grid, time, slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid1D::new(0.7, 5).unwrap();
        let t = TimeGrid::new(1.3, 6).unwrap();
        let f = SpaceTimeField::from_fn(g, t, |x, t| C64::new((x * 17.0).sin() / 3.0, -(t * x).exp() * 1e-300));
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(&buf[..], g).unwrap();
        assert_eq!(back, f);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("0,"));
    }

    #[test]
    fn rejects_malformed_records() {
        let g = Grid1D::new(1.0, 3).unwrap();
        let err = read_field(&b"# header\n0,1,2\n"[..], g).unwrap_err();
        assert!(matches!(err, Error::Record { line: 2, .. }));
        let err = read_field(&b"0,1,2,x,0,0,0,0,0,0,0\n"[..], g).unwrap_err();
        assert!(matches!(err, Error::Record { line: 1, .. }));
        assert!(read_field(&b""[..], g).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 10 * 5)) {
            let g = Grid1D::new(1.0, 3).unwrap();
            let t = TimeGrid::new(2.0, 4).unwrap();
            let slices: Vec<Vec<C64>> = vals.chunks(10).map(|c| c.chunks(2).map(|p| C64::new(p[0], p[1])).collect()).collect();
            let f = SpaceTimeField::from_slices(g, t, slices).unwrap();
            let mut buf = Vec::new();
            write_field(&mut buf, &f).unwrap();
            prop_assert_eq!(read_field(&buf[..], g).unwrap(), f);
        }
    }
}
