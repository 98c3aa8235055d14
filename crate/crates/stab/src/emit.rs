//! Trajectory and synthesis-table CSV.
//!
//! Floats are written as `{:.16e}` (17 significant digits, so parsing gives
//! back the same bits), rows end in `\n`, no locale formatting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use stab_core::flow::Sample;

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n: usize, p: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|k| format!("x{k}")));
    cols.push("F".into());
    cols.extend((1..=p).map(|k| format!("res{k}")));
    cols.join(",")
}

/// `t,x1,…,xn,F,res1,…,resp`; an empty slice gives a header-only file.
pub fn write_trajectory_csv<W: Write>(mut w: W, n: usize, p: usize, samples: &[Sample]) -> io::Result<()> {
    writeln!(w, "{}", trajectory_header(n, p))?;
    for s in samples {
        let mut row = String::with_capacity(24 * (n + p + 2));
        row.push_str(&float(s.t));
        for v in s.state.iter().chain(std::iter::once(&s.f)).chain(&s.residuals) {
            row.push(',');
            row.push_str(&float(*v));
        }
        row.push('\n');
        w.write_all(row.as_bytes())?;
    }
    w.flush()
}

pub fn emit_trajectory_csv(path: &Path, n: usize, p: usize, samples: &[Sample]) -> io::Result<()> {
    write_trajectory_csv(BufWriter::new(File::create(path)?), n, p, samples)
}

/// One grid point of a synthesis table; `control` is `None` off the
/// maximal-rank set.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRow {
    pub point: Vec<f64>,
    pub in_mrk: bool,
    pub gram_det: f64,
    pub control: Option<Vec<f64>>,
}

/// `x1,…,xn,in_mrk,gram_det,u1,…,un`; control cells are empty off the
/// maximal-rank set.
pub fn write_synth_csv<W: Write>(mut w: W, n: usize, rows: &[SynthRow]) -> io::Result<()> {
    let mut cols: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    cols.push("in_mrk".into());
    cols.push("gram_det".into());
    cols.extend((1..=n).map(|k| format!("u{k}")));
    writeln!(w, "{}", cols.join(","))?;
    for r in rows {
        let mut cells: Vec<String> = r.point.iter().map(|v| float(*v)).collect();
        cells.push(u8::from(r.in_mrk).to_string());
        cells.push(float(r.gram_det));
        match &r.control {
            Some(u) => cells.extend(u.iter().map(|v| float(*v))),
            None => cells.extend(std::iter::repeat(String::new()).take(n)),
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}
