//! Snapshot files.
//!
//! CSV: header `set,re_0,im_0,...,re_{M-1},im_{M-1}`, then one row per
//! snapshot with `set` equal to `primary` or `secondary`.
//!
//! Binary: magic `KDOA`, `u32` version, `u32` `M`, `T_p`, `T_s`, then the
//! primary and secondary matrices as little-endian `f64` (re, im) pairs in
//! column-major order.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::array_model::CMatrix;
use crate::error::{Error, Result};
use crate::sampling::SnapshotSet;

const MAGIC: &[u8; 4] = b"KDOA";
const VERSION: u32 = 1;

pub fn snapshots_to_csv(set: &SnapshotSet) -> String {
    let m = set.primary().nrows();
    let mut s = String::from("set");
    for i in 0..m {
        let _ = write!(s, ",re_{i},im_{i}");
    }
    s.push('\n');
    for (name, mat) in [("primary", set.primary()), ("secondary", set.secondary())] {
        for col in mat.column_iter() {
            s.push_str(name);
            for z in col.iter() {
                let _ = write!(s, ",{:.17e},{:.17e}", z.re, z.im);
            }
            s.push('\n');
        }
    }
    s
}

pub fn snapshots_from_csv(text: &str) -> Result<SnapshotSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty snapshot file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"set") || cols.len() < 3 || cols.len() % 2 == 0 {
        return Err(Error::Parse(format!("line 1: bad header `{header}`")));
    }
    let m = (cols.len() - 1) / 2;
    let (mut prim, mut sec) = (Vec::new(), Vec::new());
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, found {}",
                ln + 1,
                cols.len(),
                fields.len()
            )));
        }
        let target = match fields[0] {
            "primary" => &mut prim,
            "secondary" => &mut sec,
            other => return Err(Error::Parse(format!("line {}: unknown set `{other}`", ln + 1))),
        };
        for pair in fields[1..].chunks(2) {
            let num = |f: &str| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: `{f}` is not a number", ln + 1)))
            };
            target.push(Complex64::new(num(pair[0])?, num(pair[1])?));
        }
    }
    let x = CMatrix::from_vec(m, prim.len() / m, prim);
    let y = CMatrix::from_vec(m, sec.len() / m, sec);
    SnapshotSet::from_observations(x, y)
}

pub fn snapshots_to_bytes(set: &SnapshotSet) -> Vec<u8> {
    let (x, y) = (set.primary(), set.secondary());
    let mut out = Vec::with_capacity(20 + 16 * (x.len() + y.len()));
    out.extend_from_slice(MAGIC);
    for v in [VERSION, x.nrows() as u32, x.ncols() as u32, y.ncols() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in x.iter().chain(y.iter()) {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn snapshots_from_bytes(bytes: &[u8]) -> Result<SnapshotSet> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::Parse("not a snapshot file (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != VERSION as usize {
        return Err(Error::Parse(format!("unsupported snapshot file version {}", word(0))));
    }
    let (m, tp, ts) = (word(1), word(2), word(3));
    let n = m * (tp + ts);
    if bytes.len() != 20 + 16 * n {
        return Err(Error::Parse(format!(
            "snapshot file has {} bytes, header implies {}",
            bytes.len(),
            20 + 16 * n
        )));
    }
    let vals: Vec<Complex64> = bytes[20..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let x = CMatrix::from_column_slice(m, tp, &vals[..m * tp]);
    let y = CMatrix::from_column_slice(m, ts, &vals[m * tp..]);
    SnapshotSet::from_observations(x, y)
}

/// Reads either format, picked by content.
pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        snapshots_from_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse("snapshot file is neither binary nor UTF-8".into()))?;
        snapshots_from_csv(&text)
    }
}

/// Writes binary when the extension is `bin`, CSV otherwise.
pub fn write_snapshots(set: &SnapshotSet, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        std::fs::write(path, snapshots_to_bytes(set))?;
    } else {
        std::fs::write(path, snapshots_to_csv(set))?;
    }
    Ok(())
}
