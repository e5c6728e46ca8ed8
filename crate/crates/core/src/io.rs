//! CSV and JSON artifacts: observation tables in, surfaces, masks and
//! sidecars out.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::dr::CateSurface;
use crate::error::{Error, Result};
use crate::inference::ConfidenceSets;
use crate::model::{Covariates, EvalGrid, LevelSetMask, ObservationSet};

/// Column positions of `y`, `a` and `x1..xd` in a header.
fn locate_columns(header: &csv::StringRecord) -> Result<(usize, usize, Vec<usize>)> {
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let y = find("y").ok_or_else(|| Error::Config("input is missing column `y`".into()))?;
    let a = find("a").ok_or_else(|| Error::Config("input is missing column `a`".into()))?;
    let mut xs = Vec::new();
    while let Some(j) = find(&format!("x{}", xs.len() + 1)) {
        xs.push(j);
    }
    if xs.is_empty() {
        return Err(Error::Config("input is missing column `x1`".into()));
    }
    // a gap such as x1,x3 is almost certainly a typo
    let extra = header.iter().filter_map(|h| h.trim().strip_prefix('x')?.parse::<usize>().ok()).find(|&k| k > xs.len());
    if let Some(k) = extra {
        return Err(Error::Config(format!("input is missing column `x{}` (found x{k})", xs.len() + 1)));
    }
    Ok((y, a, xs))
}

fn parse_field(rec: &csv::StringRecord, j: usize, name: &str, line: usize) -> Result<f64> {
    let raw = rec.get(j).ok_or_else(|| Error::Data { line, message: format!("missing field `{name}`") })?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Data { line, message: format!("cannot parse `{name}` value {raw:?}") })?;
    if !v.is_finite() {
        return Err(Error::Data { line, message: format!("non-finite `{name}` value {raw:?}") });
    }
    Ok(v)
}

/// Read observations from CSV with header `y,a,x1..xd` (any column order,
/// extra columns ignored).
pub fn read_observations(r: impl Read) -> Result<ObservationSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let header = rdr.headers()?.clone();
    let (jy, ja, jx) = locate_columns(&header)?;
    let (mut y, mut a, mut xs) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Data { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Data {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        y.push(parse_field(&rec, jy, "y", line)?);
        let av = parse_field(&rec, ja, "a", line)?;
        if av != 0.0 && av != 1.0 {
            return Err(Error::Data { line, message: format!("treatment `a` must be 0 or 1, got {av}") });
        }
        a.push(av as u8);
        for (k, &j) in jx.iter().enumerate() {
            xs.push(parse_field(&rec, j, &format!("x{}", k + 1), line)?);
        }
    }
    if y.is_empty() {
        return Err(Error::Config("input has no data rows".into()));
    }
    ObservationSet::new(y, a, Covariates::new(xs, jx.len())?)
}

pub fn read_observations_file(path: &Path) -> Result<ObservationSet> {
    let f = std::fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_observations(std::io::BufReader::new(f))
}

pub fn write_observations(data: &ObservationSet, mut w: impl Write) -> Result<()> {
    let d = data.dim();
    let cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    writeln!(w, "y,a,{}", cols.join(","))?;
    for i in 0..data.len() {
        write!(w, "{},{}", data.y()[i], data.a()[i])?;
        for v in data.x().row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_coords(w: &mut impl Write, x: &[f64]) -> Result<()> {
    for (k, v) in x.iter().enumerate() {
        if k > 0 {
            write!(w, ",")?;
        }
        write!(w, "{v}")?;
    }
    Ok(())
}

fn grid_header(grid: &EvalGrid, sep: &str) -> String {
    (1..=grid.dim()).map(|k| format!("x{sep}{k}")).collect::<Vec<_>>().join(",")
}

/// `x1..xd,tau_hat,se`; `se` is left empty when the surface carries none.
pub fn write_surface(surface: &CateSurface, mut w: impl Write) -> Result<()> {
    writeln!(w, "{},tau_hat,se", grid_header(&surface.grid, ""))?;
    for (i, x) in surface.grid.points().rows().enumerate() {
        write_coords(&mut w, x)?;
        write!(w, ",{},", surface.values[i])?;
        if let Some(se) = &surface.se {
            write!(w, "{}", se[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `x_1..x_d,member` with 0/1 membership in grid order.
pub fn write_mask(mask: &LevelSetMask, mut w: impl Write) -> Result<()> {
    writeln!(w, "{},member", grid_header(&mask.grid, "_"))?;
    for (x, &m) in mask.grid.points().rows().zip(&mask.member) {
        write_coords(&mut w, x)?;
        writeln!(w, ",{}", m as u8)?;
    }
    Ok(())
}

/// `x_1..x_d,lower,plug_in,upper` with 0/1 membership in grid order.
pub fn write_confidence_sets(sets: &ConfidenceSets, mut w: impl Write) -> Result<()> {
    let grid = &sets.plug_in.grid;
    writeln!(w, "{},lower,plug_in,upper", grid_header(grid, "_"))?;
    for (i, x) in grid.points().rows().enumerate() {
        write_coords(&mut w, x)?;
        writeln!(
            w,
            ",{},{},{}",
            sets.c_lower.member[i] as u8, sets.plug_in.member[i] as u8, sets.c_upper.member[i] as u8
        )?;
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let s = serde_json::to_string_pretty(value)?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

/// Create `path` and hand a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::dr::SurfaceMeta;
    use crate::model::{scalar_fn, threshold};

    #[test]
    fn reads_any_column_order() {
        let csv = "x2,a,y,x1\n0.5,1,2.0,0.25\n-1,0,3.5,0.75\n";
        let d = read_observations(csv.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.y(), &[2.0, 3.5]);
        assert_eq!(d.a(), &[1, 0]);
        assert_eq!(d.x().row(0), &[0.25, 0.5]);
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_observations("y,x1\n1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = read_observations("y,a,x1,x3\n1,0,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`x2`"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "y,a,x1\n1,0,0.5\n2,1,oops\n";
        match read_observations(csv.as_bytes()).unwrap_err() {
            Error::Data { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let csv = "y,a,x1\n1,0,0.5\n1,2,0.5\n";
        assert!(matches!(read_observations(csv.as_bytes()), Err(Error::Data { line: 3, .. })));
        let csv = "y,a,x1\n1,0\n";
        assert!(matches!(read_observations(csv.as_bytes()), Err(Error::Data { line: 2, .. })));
    }

    #[test]
    fn observations_round_trip() {
        let csv = "y,a,x1,x2\n0.1,1,0.2,0.3\n-4.5,0,1e-3,7\n";
        let d = read_observations(csv.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_observations(&d, &mut out).unwrap();
        assert_eq!(read_observations(out.as_slice()).unwrap(), d);
    }

    #[test]
    fn surface_and_mask_layout() {
        let grid = Arc::new(EvalGrid::new(vec![(0.0, 1.0), (0.0, 1.0)], 2).unwrap());
        let vals = vec![-1.0, 0.5, 2.0, 0.0];
        let s = CateSurface::from_values(Arc::clone(&grid), vals.clone(), scalar_fn(|_| 0.0), SurfaceMeta::new("t"))
            .unwrap();
        let mut out = Vec::new();
        write_surface(&s, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("x1,x2,tau_hat,se"));
        assert_eq!(text.lines().nth(1), Some("0.25,0.25,-1,"));
        assert_eq!(text.lines().nth(2), Some("0.25,0.75,0.5,"));

        let mask = threshold(&grid, &vals, 0.0).unwrap();
        let mut out = Vec::new();
        write_mask(&mask, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_1,x_2,member");
        assert_eq!(lines[1..], ["0.25,0.25,0", "0.25,0.75,1", "0.75,0.25,1", "0.75,0.75,0"]);
    }
}
