//! CSV/JSON serialization of grid functions and symbol tables.
//!
//! Grid functions are stored as their box coefficients, one row per lattice point:
//! `xi_1,…,xi_n,re,im`. Symbol tables are stored as samples on the x-grid times the box,
//! `x_1,…,x_n,xi_1,…,xi_n,re,im`, with a JSON sidecar holding the order and box.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::GridFunction;
use crate::lattice::{FrequencyBox, LatticeFunction};
use crate::symbols::{SymbolOrder, SymbolTable};
use crate::C64;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn header_names(prefixes: &[&str], n: usize) -> Vec<String> {
    let mut h = Vec::new();
    for p in prefixes {
        h.extend((1..=n).map(|j| format!("{p}_{j}")));
    }
    h.push("re".into());
    h.push("im".into());
    h
}

fn parse_field<T: std::str::FromStr>(s: &str, row: usize, col: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Configuration(format!("row {row}: cannot parse {col} = {s:?}")))
}

/// Dimension encoded in a `xi_1,…,xi_n,re,im` header, if it is one.
fn lattice_header_dim(headers: &csv::StringRecord) -> Option<usize> {
    let n = headers.len().checked_sub(2)?;
    let expected = header_names(&["xi"], n);
    (n >= 1 && headers.iter().map(str::trim).eq(expected.iter().map(String::as_str))).then_some(n)
}

pub fn write_lattice_csv<W: Write>(g: &LatticeFunction, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header_names(&["xi"], g.bx.n)).map_err(csv_err)?;
    for (p, v) in g.bx.points().zip(&g.values) {
        let mut rec: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        rec.push(v.re.to_string());
        rec.push(v.im.to_string());
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads lattice values into `bx`; absent points are zero, duplicates and points outside
/// the box are rejected.
pub fn read_lattice_csv<R: Read>(r: R, bx: FrequencyBox) -> Result<LatticeFunction> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let n = lattice_header_dim(&headers)
        .ok_or_else(|| Error::Configuration(format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())))?;
    if n != bx.n {
        return Err(Error::Configuration(format!("file has dimension {n}, box has {}", bx.n)));
    }
    let mut out = LatticeFunction::zeros(bx);
    let mut seen = HashSet::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = row + 2;
        if rec.len() != n + 2 {
            return Err(Error::Configuration(format!("row {row}: expected {} fields", n + 2)));
        }
        let xi = (0..n)
            .map(|j| parse_field::<i64>(&rec[j], row, &headers[j]))
            .collect::<Result<Vec<_>>>()?;
        let re: f64 = parse_field(&rec[n], row, "re")?;
        let im: f64 = parse_field(&rec[n + 1], row, "im")?;
        let idx = bx
            .index(&xi)
            .ok_or_else(|| Error::OutOfRange(format!("row {row}: lattice point {xi:?} outside the box")))?;
        if !seen.insert(idx) {
            return Err(Error::Configuration(format!("row {row}: duplicate lattice point {xi:?}")));
        }
        out.values[idx] = C64::new(re, im);
    }
    Ok(out)
}

/// Writes the box coefficients of `u`; content outside the box is not stored.
pub fn write_grid_function_csv<W: Write>(u: &GridFunction, w: W) -> Result<()> {
    write_lattice_csv(&u.toroidal_ft(), w)
}

pub fn read_grid_function_csv<R: Read>(r: R, bx: FrequencyBox, grid: usize) -> Result<GridFunction> {
    GridFunction::from_coeffs(&read_lattice_csv(r, bx)?, grid)
}

/// JSON sidecar accompanying a symbol-table CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSidecar {
    pub m: f64,
    pub rho: f64,
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub margin: usize,
    #[serde(rename = "N")]
    pub grid: usize,
}

impl SymbolSidecar {
    pub fn of(a: &SymbolTable) -> Self {
        let bx = a.bx();
        SymbolSidecar {
            m: a.order.m,
            rho: a.order.rho,
            delta: a.order.delta,
            k: bx.k,
            margin: bx.margin,
            grid: a.grid(),
        }
    }
}

pub fn write_symbol_csv<W: Write>(a: &SymbolTable, w: W) -> Result<()> {
    let bx = a.bx();
    let n = bx.n;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header_names(&["x", "xi"], n)).map_err(csv_err)?;
    let pts: Vec<Vec<i64>> = bx.points().collect();
    for ix in 0..a.n_x() {
        let x: Vec<String> = a.x_point(ix).iter().map(|c| c.to_string()).collect();
        for (k, p) in pts.iter().enumerate() {
            let v = a.at(ix, k);
            let mut rec = x.clone();
            rec.extend(p.iter().map(|c| c.to_string()));
            rec.push(v.re.to_string());
            rec.push(v.im.to_string());
            wr.write_record(&rec).map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_symbol_sidecar<W: Write>(a: &SymbolTable, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &SymbolSidecar::of(a)).map_err(|e| Error::Io(e.to_string()))
}

/// Reads a symbol table; every (x, ξ) pair of the grid and box must appear exactly once.
pub fn read_symbol_table<R: Read, S: Read>(table: R, sidecar: S) -> Result<SymbolTable> {
    let side: SymbolSidecar =
        serde_json::from_reader(sidecar).map_err(|e| Error::Configuration(format!("symbol sidecar: {e}")))?;
    let order = SymbolOrder::new(side.m, side.rho, side.delta)?;
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(table);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let n = headers.len().saturating_sub(2) / 2;
    let expected = header_names(&["x", "xi"], n);
    if n == 0 || !headers.iter().eq(expected.iter().map(String::as_str)) {
        return Err(Error::Configuration(format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let bx = FrequencyBox::new(n, side.k, side.margin)?;
    let grid = side.grid;
    let nx = grid
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Configuration(format!("grid {grid} too large")))?;
    let l = bx.len();
    let mut values = vec![C64::new(f64::NAN, f64::NAN); nx * l];
    let mut filled = 0usize;
    let h = std::f64::consts::TAU / grid as f64;
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = row + 2;
        if rec.len() != 2 * n + 2 {
            return Err(Error::Configuration(format!("row {row}: expected {} fields", 2 * n + 2)));
        }
        let mut ix = 0usize;
        for j in 0..n {
            let x: f64 = parse_field(&rec[j], row, &headers[j])?;
            let i = (x / h).round();
            if !(0.0..grid as f64).contains(&i) || (x - i * h).abs() > 1e-9 {
                return Err(Error::OutOfRange(format!("row {row}: x_{} = {x} is not a grid point", j + 1)));
            }
            ix = ix * grid + i as usize;
        }
        let xi = (0..n)
            .map(|j| parse_field::<i64>(&rec[n + j], row, &headers[n + j]))
            .collect::<Result<Vec<_>>>()?;
        let k = bx
            .index(&xi)
            .ok_or_else(|| Error::OutOfRange(format!("row {row}: lattice point {xi:?} outside the box")))?;
        let re: f64 = parse_field(&rec[2 * n], row, "re")?;
        let im: f64 = parse_field(&rec[2 * n + 1], row, "im")?;
        let slot = &mut values[ix * l + k];
        if !slot.re.is_nan() {
            return Err(Error::Configuration(format!("row {row}: duplicate entry at x-index {ix}, xi {xi:?}")));
        }
        *slot = C64::new(re, im);
        filled += 1;
    }
    if filled != nx * l {
        return Err(Error::Configuration(format!("symbol table has {filled} of {} entries", nx * l)));
    }
    SymbolTable::from_values(bx, grid, order, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_function_roundtrip() {
        let bx = FrequencyBox::new(2, 3, 1).unwrap();
        let u = GridFunction::from_fn(bx, 16, |x| C64::new(x[0].cos(), (x[1] - x[0]).sin() * 0.5)).unwrap();
        let mut buf = Vec::new();
        write_grid_function_csv(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("xi_1,xi_2,re,im\n-4,-4,"));
        let v = read_grid_function_csv(&buf[..], bx, 16).unwrap();
        assert!(u.max_diff(&v).unwrap() < 1e-15);
    }

    #[test]
    fn lattice_loader_rejects_duplicates_and_strays() {
        let bx = FrequencyBox::new(1, 2, 0).unwrap();
        let dup = "xi_1,re,im\n0,1,0\n1,2,0\n0,3,0\n";
        assert!(matches!(read_lattice_csv(dup.as_bytes(), bx), Err(Error::Configuration(_))));
        let stray = "xi_1,re,im\n5,1,0\n";
        assert!(matches!(read_lattice_csv(stray.as_bytes(), bx), Err(Error::OutOfRange(_))));
        let sparse = read_lattice_csv("xi_1,re,im\n1,0,2\n".as_bytes(), bx).unwrap();
        assert_eq!(sparse.get(&[1]), Some(C64::new(0.0, 2.0)));
        assert_eq!(sparse.get(&[0]), Some(C64::new(0.0, 0.0)));
        assert!(read_lattice_csv("x,re,im\n".as_bytes(), bx).is_err());
    }

    #[test]
    fn symbol_table_roundtrip() {
        let bx = FrequencyBox::new(1, 4, 2).unwrap();
        let a = SymbolTable::from_fn(bx, 16, SymbolOrder::classical(1.0), |x, xi| {
            C64::new(0.0, x[0]).exp() * xi[0] as f64 + 0.25
        })
        .unwrap();
        let (mut t, mut s) = (Vec::new(), Vec::new());
        write_symbol_csv(&a, &mut t).unwrap();
        write_symbol_sidecar(&a, &mut s).unwrap();
        let b = read_symbol_table(&t[..], &s[..]).unwrap();
        assert_eq!(b.bx(), bx);
        assert_eq!(b.order, a.order);
        assert_eq!(a.values(), b.values());
        let short: Vec<u8> = t[..t.len() / 2].to_vec();
        let cut = short.iter().rposition(|&c| c == b'\n').unwrap();
        assert!(read_symbol_table(&short[..=cut], &s[..]).is_err());
    }
}
