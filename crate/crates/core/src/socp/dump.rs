use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Cone, ConeProgram};
use crate::error::{Error, Result};

/// Writes `prog` as a Matrix Market coordinate file for `A`, with `c`, `b`
/// and the cone list carried in `%` comment lines:
///
/// ```text
/// %%MatrixMarket matrix coordinate real general
/// %cones Z 4 Q 8 L 2
/// %c <n values>
/// %b <m values>
/// <rows> <cols> <nnz>
/// <i> <j> <value>      (1-indexed)
/// ```
///
/// Values are printed in shortest round-trip form. `Z`, `L` and `Q` mark
/// zero, nonnegative and second-order cones.
pub fn write_debug_dump(prog: &ConeProgram, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    write!(out, "%cones")?;
    for cone in &prog.cones {
        let (tag, n) = match *cone {
            Cone::Zero(n) => ("Z", n),
            Cone::NonNeg(n) => ("L", n),
            Cone::SecondOrder(n) => ("Q", n),
        };
        write!(out, " {tag} {n}")?;
    }
    writeln!(out)?;
    write!(out, "%c")?;
    for v in prog.c.iter() {
        write!(out, " {v:?}")?;
    }
    writeln!(out)?;
    write!(out, "%b")?;
    for v in prog.b.iter() {
        write!(out, " {v:?}")?;
    }
    writeln!(out)?;
    let nnz = prog.a.iter().filter(|v| **v != 0.0).count();
    writeln!(out, "{} {} {nnz}", prog.a.nrows(), prog.a.ncols())?;
    for j in 0..prog.a.ncols() {
        for i in 0..prog.a.nrows() {
            let v = prog.a[(i, j)];
            if v != 0.0 {
                writeln!(out, "{} {} {v:?}", i + 1, j + 1)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_debug_dump`].
pub fn read_debug_dump(path: &Path) -> Result<ConeProgram> {
    let text = std::fs::read_to_string(path)?;
    let p = path.display().to_string();
    let err = |line: usize, msg: &str| Error::Parse {
        path: p.clone(),
        line,
        msg: msg.to_string(),
    };
    let mut cones = Vec::new();
    let mut c = Vec::new();
    let mut b = Vec::new();
    let mut dims = None;
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let lineno = no + 1;
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(lineno, "bad number"));
        if let Some(rest) = line.strip_prefix("%cones") {
            let f: Vec<&str> = rest.split_whitespace().collect();
            for pair in f.chunks(2) {
                let [tag, n] = pair else {
                    return Err(err(lineno, "odd cone list"));
                };
                let n: usize = n.parse().map_err(|_| err(lineno, "bad cone size"))?;
                cones.push(match *tag {
                    "Z" => Cone::Zero(n),
                    "L" => Cone::NonNeg(n),
                    "Q" => Cone::SecondOrder(n),
                    _ => return Err(err(lineno, "unknown cone tag")),
                });
            }
        } else if let Some(rest) = line.strip_prefix("%c") {
            c = rest.split_whitespace().map(num).collect::<Result<_>>()?;
        } else if let Some(rest) = line.strip_prefix("%b") {
            b = rest.split_whitespace().map(num).collect::<Result<_>>()?;
        } else if line.starts_with('%') || line.trim().is_empty() {
            continue;
        } else {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err(lineno, "expected three fields"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(lineno, "bad index"));
            if dims.is_none() {
                dims = Some((idx(f[0])?, idx(f[1])?));
            } else {
                let (i, j) = (idx(f[0])?, idx(f[1])?);
                if i == 0 || j == 0 {
                    return Err(err(lineno, "indices are 1-based"));
                }
                entries.push((i - 1, j - 1, num(f[2])?));
            }
        }
    }
    let (rows, cols) = dims.ok_or_else(|| err(0, "missing size line"))?;
    let mut a = DMatrix::zeros(rows, cols);
    for (i, j, v) in entries {
        if i >= rows || j >= cols {
            return Err(err(0, "entry outside the matrix"));
        }
        a[(i, j)] = v;
    }
    ConeProgram::new(DVector::from_vec(c), a, DVector::from_vec(b), cones)
}
