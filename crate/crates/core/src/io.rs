use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{RadialField, Representation};
use crate::grid::RadialGrid;

/// Serialize a radial field as CSV with the fixed header `r,value,representation`.
pub fn field_to_csv(field: &RadialField) -> String {
    let mut out = String::from("r,value,representation\n");
    let repr = field.representation().as_str();
    for (r, v) in field.grid().nodes().iter().zip(field.values()) {
        out.push_str(&format!("{r:e},{v:e},{repr}\n"));
    }
    out
}

pub fn write_field_csv(path: &Path, field: &RadialField) -> Result<()> {
    std::fs::write(path, field_to_csv(field))?;
    Ok(())
}

/// Parse a field CSV back onto a freshly built grid. The radii must form a
/// log-uniform mesh; the grid is reconstructed from the endpoints and node
/// count and the parsed radii are checked against it.
pub fn read_field_csv(path: &Path, dim: u32) -> Result<RadialField> {
    let text = std::fs::read_to_string(path)?;
    parse_field_csv(&text, dim)
}

pub fn parse_field_csv(text: &str, dim: u32) -> Result<RadialField> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Io("empty CSV".into()))?;
    if header.trim() != "r,value,representation" {
        return Err(Error::Io(format!("unexpected CSV header: {header}")));
    }
    let mut radii = Vec::new();
    let mut values = Vec::new();
    let mut repr: Option<Representation> = None;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (r, v, rep) = match (parts.next(), parts.next(), parts.next()) {
            (Some(r), Some(v), Some(rep)) => (r, v, rep),
            _ => return Err(Error::Io(format!("line {}: need three columns", lineno + 2))),
        };
        let r: f64 = r.trim().parse().map_err(|_| Error::Io(format!("bad radius: {r}")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Io(format!("bad value: {v}")))?;
        let rep = match rep.trim() {
            "raw" => Representation::Raw,
            "scaled" => Representation::Scaled,
            other => return Err(Error::Io(format!("bad representation: {other}"))),
        };
        match repr {
            None => repr = Some(rep),
            Some(existing) if existing != rep => {
                return Err(Error::Io("mixed representations in one file".into()))
            }
            _ => {}
        }
        radii.push(r);
        values.push(v);
    }
    let m = radii.len();
    if m < 16 {
        return Err(Error::Io(format!("too few samples: {m}")));
    }
    let grid = Arc::new(RadialGrid::new(radii[0], radii[m - 1], m, dim)?);
    for (parsed, built) in radii.iter().zip(grid.nodes()) {
        if ((parsed - built) / built).abs() > 1e-9 {
            return Err(Error::Io(format!(
                "radii are not log-uniform: parsed {parsed}, expected {built}"
            )));
        }
    }
    RadialField::new(grid, values, repr.unwrap_or(Representation::Raw))
}

/// Pretty JSON with a trailing newline; field order follows the struct, so
/// identical inputs give byte-identical files.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Two-column CSV of path-state energies.
pub fn path_energies_csv(energies: &[f64]) -> String {
    let mut out = String::from("state,energy\n");
    for (i, e) in energies.iter().enumerate() {
        out.push_str(&format!("{i},{e:e}\n"));
    }
    out
}

/// Profile CSV holding both solutions in raw form.
pub fn profiles_csv(u_min: &RadialField, second: &RadialField) -> String {
    let mut out = String::from("r,u_min,second\n");
    let a = u_min.to_raw();
    let b = second.to_raw();
    for ((r, x), y) in u_min.grid().nodes().iter().zip(&a).zip(&b) {
        out.push_str(&format!("{r:e},{x:e},{y:e}\n"));
    }
    out
}
