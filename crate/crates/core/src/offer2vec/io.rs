//! Text model format:
//!
//! ```text
//! offer2vec <version> <dim> <window> <vocab size>
//! <offer_id> <count> <dim input components> <dim output components>
//! ```
//!
//! Components are written in `{:.16e}` (17 significant digits), which
//! round-trips every f64 exactly. Leading `#` lines are comments.

use std::io::{BufRead, Write};

use super::model::EmbeddingModel;
use crate::datamodel::OfferId;
use crate::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(mut w: W, model: &EmbeddingModel, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(
        w,
        "offer2vec {MODEL_VERSION} {} {} {}",
        model.dim(),
        model.window(),
        model.vocab_len()
    )?;
    let mut line = String::new();
    for (i, o) in model.vocab().iter().enumerate() {
        use std::fmt::Write as _;
        line.clear();
        write!(line, "{} {}", o, model.counts[i]).unwrap();
        for v in model.input_row(i).iter().chain(model.output_row(i)) {
            write!(line, " {v:.16e}").unwrap();
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: R) -> Result<EmbeddingModel> {
    let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.starts_with('#') => None,
        other => Some((i + 1, other)),
    });
    let io_err = |e| Error::io("<offer2vec model>", e);
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, 1, "missing header"))?;
    let header = header.map_err(io_err)?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 5 || h[0] != "offer2vec" {
        return Err(Error::parse(hline, 1, "expected `offer2vec <version> <dim> <window> <vocab>`"));
    }
    let num = |col: usize| -> Result<usize> {
        h[col]
            .parse()
            .map_err(|_| Error::parse(hline, col + 1, format!("bad header field `{}`", h[col])))
    };
    if num(1)? != MODEL_VERSION as usize {
        return Err(Error::parse(hline, 2, format!("unsupported version {}", h[1])));
    }
    let (dim, window, vocab) = (num(2)?, num(3)?, num(4)?);
    let mut rows = Vec::with_capacity(vocab);
    for (ln, line) in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 2 + 2 * dim {
            return Err(Error::parse(ln, 1, format!("expected {} fields, got {}", 2 + 2 * dim, f.len())));
        }
        let offer: OfferId = f[0].parse().map_err(|_| Error::parse(ln, 1, "bad offer id"))?;
        let count: u64 = f[1].parse().map_err(|_| Error::parse(ln, 2, "bad count"))?;
        let mut vals = Vec::with_capacity(2 * dim);
        for (j, s) in f[2..].iter().enumerate() {
            let v: f64 = s.parse().map_err(|_| Error::parse(ln, j + 3, format!("bad component `{s}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(ln, j + 3, "non-finite component"));
            }
            vals.push(v);
        }
        let out = vals.split_off(dim);
        rows.push((offer, count, vals, out));
    }
    if rows.len() != vocab {
        return Err(Error::parse(hline, 5, format!("header declares {vocab} offers, found {}", rows.len())));
    }
    EmbeddingModel::from_rows(dim, window, rows)
}
