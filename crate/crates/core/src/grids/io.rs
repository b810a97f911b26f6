//! Field files: a header `# dim=<d> n=<n1[,n2]> extent=<e1[,e2]>` followed by
//! one value per line in row-major order.
//!
//! An optional `origin=<o1[,o2]>` header key is accepted and written only when
//! the origin is nonzero.

use std::fmt::Write as _;
use std::path::Path;

use super::{FieldRole, Grid, ScalarField};
use crate::error::{Error, Result};

/// Format with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim().parse::<T>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad value `{t}` for `{key}`"),
            })
        })
        .collect()
}

pub fn parse_header(line: &str, line_no: usize) -> Result<Grid> {
    let body = line.trim().strip_prefix('#').ok_or_else(|| Error::Parse {
        line: line_no,
        msg: "header must start with `#`".into(),
    })?;
    let mut dim = None;
    let mut n = None;
    let mut extent = None;
    let mut origin = None;
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected key=value, got `{tok}`"),
        })?;
        match k {
            "dim" => dim = Some(parse_list::<usize>(v, line_no, k)?),
            "n" => n = Some(parse_list::<usize>(v, line_no, k)?),
            "extent" => extent = Some(parse_list::<f64>(v, line_no, k)?),
            "origin" => origin = Some(parse_list::<f64>(v, line_no, k)?),
            _ => {
                return Err(Error::Parse { line: line_no, msg: format!("unknown header key `{k}`") });
            }
        }
    }
    let missing = |k: &str| Error::Parse { line: line_no, msg: format!("header is missing `{k}`") };
    let dim = dim.ok_or_else(|| missing("dim"))?;
    if dim.len() != 1 {
        return Err(Error::Parse { line: line_no, msg: "dim must be a single integer".into() });
    }
    let dim = dim[0];
    let n = n.ok_or_else(|| missing("n"))?;
    let extent = extent.ok_or_else(|| missing("extent"))?;
    let origin = origin.unwrap_or_else(|| vec![0.0; dim]);
    Grid::new(dim, &n, &origin, &extent).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })
}

pub fn format_header(grid: &Grid) -> String {
    let join_u = |v: Vec<usize>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let join_f = |v: Vec<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let d = grid.dim();
    let mut s = format!(
        "# dim={} n={} extent={}",
        d,
        join_u((0..d).map(|a| grid.n(a)).collect()),
        join_f((0..d).map(|a| grid.extent(a)).collect())
    );
    if (0..d).any(|a| grid.origin(a) != 0.0) {
        s.push_str(&format!(" origin={}", join_f((0..d).map(|a| grid.origin(a)).collect())));
    }
    s
}

/// Parse a field from text. Blank lines are skipped.
pub fn parse_field(text: &str, role: FieldRole) -> Result<ScalarField> {
    let mut lines = text.lines().enumerate();
    let (hdr_no, hdr) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(Error::Parse { line: 1, msg: "empty field file".into() })?;
    let grid = parse_header(hdr, hdr_no + 1)?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, l) in lines {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad number `{t}`") })?;
        if !v.is_finite() {
            return Err(Error::Parse { line: i + 1, msg: format!("non-finite value `{t}`") });
        }
        if role == FieldRole::Density && v < 0.0 {
            return Err(Error::Parse { line: i + 1, msg: format!("negative density `{t}`") });
        }
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(Error::Parse {
            line: hdr_no + 1,
            msg: format!("header declares {} values, file has {}", grid.len(), values.len()),
        });
    }
    ScalarField::new(grid, values, role)
}

pub fn format_field(field: &ScalarField) -> String {
    let mut s = format_header(field.grid());
    s.push('\n');
    for v in field.values() {
        let _ = writeln!(s, "{}", fmt_f64(*v));
    }
    s
}

pub fn read_field(path: &Path, role: FieldRole) -> Result<ScalarField> {
    parse_field(&std::fs::read_to_string(path)?, role)
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    std::fs::write(path, format_field(field))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_round_trip() {
        let g = Grid::rect(3, 2, 1.5, 0.25).unwrap();
        assert_eq!(format_header(&g), "# dim=2 n=3,2 extent=1.5,0.25");
        assert_eq!(parse_header(&format_header(&g), 1).unwrap(), g);
        let shifted = Grid::new(1, &[3], &[-0.25], &[1.5]).unwrap();
        assert_eq!(parse_header(&format_header(&shifted), 1).unwrap(), shifted);
    }

    #[test]
    fn malformed_input_names_the_line() {
        let err = parse_field("# dim=1 n=2 extent=1\n0.5\nabc\n", FieldRole::Pressure).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_field("dim=1 n=2 extent=1\n", FieldRole::Pressure).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_field("# dim=1 n=3 extent=1\n1\n2\n", FieldRole::Pressure).unwrap_err();
        assert!(err.to_string().contains("declares 3"));
        let err = parse_field("# dim=1 n=1 extent=1 colour=red\n1\n", FieldRole::Pressure).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    proptest! {
        #[test]
        fn field_text_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let g = Grid::line(values.len(), 2.0).unwrap();
            let f = ScalarField::pressure(g, values).unwrap();
            let back = parse_field(&format_field(&f), FieldRole::Pressure).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
