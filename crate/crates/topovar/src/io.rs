//! Plain-text serialization for grids and tensor fields.
//!
//! Format: a `#`-prefixed header line followed by one whitespace-separated
//! line per node (row-major node order, components in lane order). Floats are
//! written with 17 significant digits so a write/read cycle is bit-exact.
//!
//! ```text
//! # dim=2 counts=5,5 bounds=0:1,0:6.283185307179586 periodic=0,1 valence=0,2
//! 1 0 0 1
//! ...
//! ```

use crate::error::{Error, Result};
use crate::field::TensorField;
use crate::grid::Grid;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

pub fn write_tensor<W: Write>(w: &mut W, t: &TensorField) -> Result<()> {
    let g = t.grid();
    let n = g.dim();
    let (con, cov) = t.valence();
    let bounds: Vec<String> = (0..n)
        .map(|a| {
            let (lo, hi) = g.bounds()[a];
            format!("{lo:.16e}:{hi:.16e}")
        })
        .collect();
    let counts: Vec<String> = g.counts().iter().map(|c| c.to_string()).collect();
    let periodic: Vec<String> = g
        .periodic()
        .iter()
        .map(|&p| if p { "1" } else { "0" }.to_string())
        .collect();
    writeln!(
        w,
        "# dim={} counts={} bounds={} periodic={} valence={},{}",
        n,
        counts.join(","),
        bounds.join(","),
        periodic.join(","),
        con,
        cov
    )?;
    let lanes = t.lanes();
    for flat in 0..g.len() {
        let mut line = String::new();
        for l in 0..lanes {
            if l > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:.16e}", t.lane(l)[flat]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_tensor_path<P: AsRef<Path>>(path: P, t: &TensorField) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: BufRead>(r: &mut R) -> Result<TensorField> {
    let mut header = String::new();
    loop {
        header.clear();
        if r.read_line(&mut header)? == 0 {
            return Err(Error::Format("missing header line".to_string()));
        }
        if !header.trim().is_empty() {
            break;
        }
    }
    let header = header.trim();
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("header must start with '#'".to_string()))?
        .trim();

    let mut dim = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut bounds: Option<Vec<(f64, f64)>> = None;
    let mut periodic: Option<Vec<bool>> = None;
    let mut valence: Option<(usize, usize)> = None;
    for tok in body.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header token '{tok}'")))?;
        match key {
            "dim" => {
                dim = Some(val.parse::<usize>().map_err(|_| bad("dim", val))?);
            }
            "counts" => {
                counts = Some(
                    val.split(',')
                        .map(|s| s.parse::<usize>().map_err(|_| bad("counts", s)))
                        .collect::<Result<_>>()?,
                );
            }
            "bounds" => {
                bounds = Some(
                    val.split(',')
                        .map(|pair| {
                            let (a, b) = pair
                                .split_once(':')
                                .ok_or_else(|| bad("bounds", pair))?;
                            Ok((
                                a.parse::<f64>().map_err(|_| bad("bounds", a))?,
                                b.parse::<f64>().map_err(|_| bad("bounds", b))?,
                            ))
                        })
                        .collect::<Result<_>>()?,
                );
            }
            "periodic" => {
                periodic = Some(
                    val.split(',')
                        .map(|s| match s {
                            "0" => Ok(false),
                            "1" => Ok(true),
                            _ => Err(bad("periodic", s)),
                        })
                        .collect::<Result<_>>()?,
                );
            }
            "valence" => {
                let (a, b) = val.split_once(',').ok_or_else(|| bad("valence", val))?;
                valence = Some((
                    a.parse::<usize>().map_err(|_| bad("valence", a))?,
                    b.parse::<usize>().map_err(|_| bad("valence", b))?,
                ));
            }
            other => return Err(Error::Format(format!("unknown header key '{other}'"))),
        }
    }
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let counts = counts.ok_or_else(|| missing("counts"))?;
    let bounds = bounds.ok_or_else(|| missing("bounds"))?;
    let periodic = periodic.ok_or_else(|| missing("periodic"))?;
    let (con, cov) = valence.ok_or_else(|| missing("valence"))?;
    if counts.len() != dim || bounds.len() != dim || periodic.len() != dim {
        return Err(Error::Format(
            "header axis lists disagree with dim".to_string(),
        ));
    }

    let grid = Grid::new(&bounds, &counts, &periodic)?;
    let lanes = crate::field::lane_count(dim, con, cov);
    let mut comps = vec![vec![0.0f64; grid.len()]; lanes];
    let mut line = String::new();
    let mut node = 0usize;
    while node < grid.len() {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format(format!(
                "file ended after {node} of {} nodes",
                grid.len()
            )));
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        for lane in comps.iter_mut() {
            let tok = parts.next().ok_or_else(|| {
                Error::Format(format!("node {node}: expected {lanes} components"))
            })?;
            lane[node] = tok
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("node {node}: bad float '{tok}'")))?;
        }
        if parts.next().is_some() {
            return Err(Error::Format(format!(
                "node {node}: more than {lanes} components"
            )));
        }
        node += 1;
    }
    let mut values = Vec::with_capacity(lanes * grid.len());
    for lane in comps {
        values.extend(lane);
    }
    TensorField::new(grid, con, cov, values)
}

pub fn read_tensor_path<P: AsRef<Path>>(path: P) -> Result<TensorField> {
    let f = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(f);
    read_tensor(&mut r)
}

fn bad(key: &str, val: &str) -> Error {
    Error::Format(format!("bad value '{val}' for header key '{key}'"))
}

fn missing(key: &str) -> Error {
    Error::Format(format!("header key '{key}' missing"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(
            &[(0.0, 1.0), (0.0, std::f64::consts::TAU)],
            &[5, 6],
            &[false, true],
        )
        .unwrap();
        let t = TensorField::from_matrix_fn(g, |x, m| {
            m[0] = 1.0 + x[0] * x[0];
            m[1] = 0.125 * x[0] * x[1].sin();
            m[2] = m[1];
            m[3] = 2.0 - x[1].cos() * 0.5;
        });
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let back = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.grid(), t.grid());
        assert_eq!(back.valence(), t.valence());
        for l in 0..t.lanes() {
            assert_eq!(back.lane(l), t.lane(l), "lane {l} changed in transit");
        }
    }

    #[test]
    fn scalar_round_trip() {
        let g = Grid::uniform(2, -2.0, 2.0, 5, false).unwrap();
        let t = TensorField::new(
            g.clone(),
            0,
            0,
            (0..25).map(|i| (i as f64 * 0.1).exp()).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let back = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.lane(0), t.lane(0));
    }

    #[test]
    fn truncated_body_is_rejected() {
        let g = Grid::uniform(2, 0.0, 1.0, 5, false).unwrap();
        let t = TensorField::new(g, 0, 0, vec![1.0; 25]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let short: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
        let err = read_tensor(&mut short.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
    }

    #[test]
    fn unknown_header_key_is_rejected() {
        let text =
            "# dim=2 counts=5,5 bounds=0:1,0:1 periodic=0,0 valence=0,0 extra=1\n0\n";
        assert!(read_tensor(&mut text.as_bytes()).is_err());
    }

    #[test]
    fn wrong_component_count_is_rejected() {
        let text = "# dim=2 counts=5,5 bounds=0:1,0:1 periodic=0,0 valence=0,0\n0 1\n";
        let err = read_tensor(&mut text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }
}
