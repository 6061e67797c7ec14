//! Columnar text formats for tabulated symbols and dense operators.
//!
//! Symbol files:
//!
//! ```text
//! dim,points,cutoff,margin,order,rho,delta
//! 1,16,7,4,1.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0
//! x0,xi0,re,im
//! 0,-11,3.3166247903554000e0,0.0000000000000000e0
//! ...
//! ```
//!
//! with one `x` column and one `xi` column per axis (grid indices and lattice
//! coordinates). Operator files use the header `dim,points,cutoff,channels,order`
//! followed by `row,col,re,im`. Reals are written with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Lattice, MAX_DIM};
use crate::quantize::DenseOperator;
use crate::symbol::{ScalarSymbol, SymbolClass};

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_symbol<W: Write>(out: &mut W, a: &ScalarSymbol) -> Result<()> {
    let spec = a.spec();
    let dim = spec.dim();
    let c = a.class();
    writeln!(out, "dim,points,cutoff,margin,order,rho,delta")?;
    writeln!(
        out,
        "{},{},{},{},{:.16e},{:.16e},{:.16e}",
        dim,
        spec.points_per_axis(),
        spec.freq_cutoff(),
        a.margin(),
        c.order,
        c.rho,
        c.delta
    )?;
    let mut cols = axis_names("x", dim);
    cols.extend(axis_names("xi", dim));
    cols.push("re".into());
    cols.push("im".into());
    writeln!(out, "{}", cols.join(","))?;
    let lattice = a.lattice();
    for xi in lattice.points() {
        let row = a.row(&xi).expect("stored lattice");
        for (p, v) in row.iter().enumerate() {
            let j = spec.grid_point(p);
            let mut fields: Vec<String> = j[..dim].iter().map(|v| v.to_string()).collect();
            fields.extend(xi[..dim].iter().map(|v| v.to_string()));
            fields.push(format!("{:.16e}", v.re));
            fields.push(format!("{:.16e}", v.im));
            writeln!(out, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<(usize, String)>> {
        for line in self.inner.by_ref() {
            self.number += 1;
            let line = line?;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Ok(Some((self.number, trimmed.to_string())));
            }
        }
        Ok(None)
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, String)> {
        self.next_line()?.ok_or(Error::Parse {
            line: self.number,
            msg: format!("unexpected end of input, expected {what}"),
        })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn expect_header(line: usize, got: &str, expected: &[String]) -> Result<()> {
    let fields: Vec<&str> = got.split(',').map(str::trim).collect();
    if fields != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(parse_err(line, format!("expected header `{}`", expected.join(","))));
    }
    Ok(())
}

fn fields<const K: usize>(line: usize, text: &str) -> Result<[String; K]> {
    let parts: Vec<String> = text.split(',').map(|s| s.trim().to_string()).collect();
    parts
        .try_into()
        .map_err(|p: Vec<String>| parse_err(line, format!("expected {K} fields, found {}", p.len())))
}

fn parse<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from `{s}`")))
}

pub fn read_symbol<R: BufRead>(input: R) -> Result<ScalarSymbol> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    let (ln, head) = lines.expect_line("symbol header")?;
    let names: Vec<String> = ["dim", "points", "cutoff", "margin", "order", "rho", "delta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    expect_header(ln, &head, &names)?;
    let (ln, vals) = lines.expect_line("symbol parameters")?;
    let [dim, g, n, margin, m, rho, delta] = fields::<7>(ln, &vals)?;
    let dim: usize = parse(ln, &dim, "dim")?;
    let spec = GridSpec::new(dim, parse(ln, &g, "points")?, parse(ln, &n, "cutoff")?)
        .map_err(|e| parse_err(ln, e.to_string()))?;
    let margin: usize = parse(ln, &margin, "margin")?;
    let class = SymbolClass::new(parse(ln, &m, "order")?, parse(ln, &rho, "rho")?, parse(ln, &delta, "delta")?)
        .map_err(|e| parse_err(ln, e.to_string()))?;

    let (ln, cols) = lines.expect_line("column header")?;
    let mut expected = axis_names("x", dim);
    expected.extend(axis_names("xi", dim));
    expected.push("re".into());
    expected.push("im".into());
    expect_header(ln, &cols, &expected)?;

    let lattice = Lattice::new(dim, spec.freq_cutoff() + margin);
    let npts = spec.num_points();
    let total = lattice.len() * npts;
    let mut values = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];
    let g = spec.points_per_axis();
    while let Some((ln, row)) = lines.next_line()? {
        let parts: Vec<&str> = row.split(',').map(str::trim).collect();
        if parts.len() != 2 * dim + 2 {
            return Err(parse_err(ln, format!("expected {} fields, found {}", 2 * dim + 2, parts.len())));
        }
        let mut point = 0usize;
        for p in &parts[..dim] {
            let j: usize = parse(ln, p, "grid index")?;
            if j >= g {
                return Err(parse_err(ln, format!("grid index {j} out of range")));
            }
            point = point * g + j;
        }
        let mut xi = [0i64; MAX_DIM];
        for (i, p) in parts[dim..2 * dim].iter().enumerate() {
            xi[i] = parse(ln, p, "frequency")?;
        }
        let li = lattice
            .index(&xi)
            .ok_or_else(|| parse_err(ln, format!("frequency {:?} outside the stored lattice", &xi[..dim])))?;
        let re: f64 = parse(ln, parts[2 * dim], "real part")?;
        let im: f64 = parse(ln, parts[2 * dim + 1], "imaginary part")?;
        let slot = li * npts + point;
        if seen[slot] {
            return Err(parse_err(ln, "duplicate entry"));
        }
        seen[slot] = true;
        values[slot] = Complex64::new(re, im);
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        return Err(parse_err(lines.number, format!("{missing} table entries missing")));
    }
    ScalarSymbol::tabulated(spec, class, margin, values)
}

pub fn write_operator<W: Write>(out: &mut W, op: &DenseOperator) -> Result<()> {
    let spec = op.spec();
    writeln!(out, "dim,points,cutoff,channels,order")?;
    writeln!(
        out,
        "{},{},{},{},{:.16e}",
        spec.dim(),
        spec.points_per_axis(),
        spec.freq_cutoff(),
        op.channels(),
        op.order()
    )?;
    writeln!(out, "row,col,re,im")?;
    let m = op.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            writeln!(out, "{i},{j},{:.16e},{:.16e}", v.re, v.im)?;
        }
    }
    Ok(())
}

pub fn read_operator<R: BufRead>(input: R) -> Result<DenseOperator> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    let (ln, head) = lines.expect_line("operator header")?;
    let names: Vec<String> = ["dim", "points", "cutoff", "channels", "order"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    expect_header(ln, &head, &names)?;
    let (ln, vals) = lines.expect_line("operator parameters")?;
    let [dim, g, n, channels, order] = fields::<5>(ln, &vals)?;
    let spec = GridSpec::new(parse(ln, &dim, "dim")?, parse(ln, &g, "points")?, parse(ln, &n, "cutoff")?)
        .map_err(|e| parse_err(ln, e.to_string()))?;
    let channels: usize = parse(ln, &channels, "channels")?;
    let order: f64 = parse(ln, &order, "order")?;
    let (ln, cols) = lines.expect_line("column header")?;
    let expected: Vec<String> = ["row", "col", "re", "im"].iter().map(|s| s.to_string()).collect();
    expect_header(ln, &cols, &expected)?;
    let size = channels * spec.num_points();
    let mut m = DMatrix::zeros(size, size);
    let mut seen = vec![false; size * size];
    while let Some((ln, row)) = lines.next_line()? {
        let [i, j, re, im] = fields::<4>(ln, &row)?;
        let i: usize = parse(ln, &i, "row")?;
        let j: usize = parse(ln, &j, "col")?;
        if i >= size || j >= size {
            return Err(parse_err(ln, format!("entry ({i}, {j}) outside a {size}x{size} matrix")));
        }
        if seen[i * size + j] {
            return Err(parse_err(ln, "duplicate entry"));
        }
        seen[i * size + j] = true;
        m[(i, j)] = Complex64::new(parse(ln, &re, "real part")?, parse(ln, &im, "imaginary part")?);
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        return Err(parse_err(lines.number, format!("{missing} matrix entries missing")));
    }
    DenseOperator::new(spec, channels, m, order)
}
