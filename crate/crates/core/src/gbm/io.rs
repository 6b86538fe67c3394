//! Text model format:
//!
//! ```text
//! gbm <version>
//! depth <p>
//! shrinkage <γ>
//! initial_score <F₀>
//! trees <M>
//! features <n>
//! schema <hash or ->
//! tree <i>
//! <feature> <threshold> <left|right> <gain>     (p lines)
//! leaves <2^p values>
//! ```
//!
//! Reals use `{:.16e}`, which round-trips every f64 bit-exactly.

use std::io::{BufRead, Write};

use super::model::GbmModel;
use super::tree::{Level, ObliviousTree};
use crate::{Error, Result};

pub const GBM_MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(mut w: W, m: &GbmModel, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "gbm {GBM_MODEL_VERSION}")?;
    writeln!(w, "depth {}", m.depth)?;
    writeln!(w, "shrinkage {:.16e}", m.shrinkage)?;
    writeln!(w, "initial_score {:.16e}", m.initial_score)?;
    writeln!(w, "trees {}", m.trees.len())?;
    writeln!(w, "features {}", m.n_features)?;
    writeln!(w, "schema {}", if m.schema_hash.is_empty() { "-" } else { &m.schema_hash })?;
    for (i, t) in m.trees.iter().enumerate() {
        writeln!(w, "tree {i}")?;
        for l in &t.levels {
            let side = if l.missing_left { "left" } else { "right" };
            writeln!(w, "{} {:.16e} {side} {:.16e}", l.feature, l.threshold, l.gain)?;
        }
        write!(w, "leaves")?;
        for v in &t.leaves {
            write!(w, " {v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(Error::parse(self.line, 1, "unexpected end of model file")),
                Some(Err(e)) => return Err(Error::io("<gbm model>", e)),
                Some(Ok(s)) if s.starts_with('#') || s.trim().is_empty() => continue,
                Some(Ok(s)) => return Ok(s),
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_owned()),
            _ => Err(Error::parse(self.line, 1, format!("expected `{key} ...`"))),
        }
    }

    fn num<T: std::str::FromStr>(&self, s: &str, col: usize) -> Result<T> {
        s.parse().map_err(|_| Error::parse(self.line, col, format!("bad number `{s}`")))
    }
}

pub fn read_model<R: BufRead>(r: R) -> Result<GbmModel> {
    let mut ls = Lines {
        inner: r.lines(),
        line: 0,
    };
    let v = ls.keyed("gbm")?;
    if ls.num::<u32>(&v, 2)? != GBM_MODEL_VERSION {
        return Err(Error::parse(ls.line, 2, format!("unsupported version {v}")));
    }
    let depth: usize = {
        let s = ls.keyed("depth")?;
        ls.num(&s, 2)?
    };
    if !(1..=16).contains(&depth) {
        return Err(Error::parse(ls.line, 2, "depth out of range"));
    }
    let shrinkage: f64 = {
        let s = ls.keyed("shrinkage")?;
        ls.num(&s, 2)?
    };
    let initial_score: f64 = {
        let s = ls.keyed("initial_score")?;
        ls.num(&s, 2)?
    };
    let n_trees: usize = {
        let s = ls.keyed("trees")?;
        ls.num(&s, 2)?
    };
    let n_features: usize = {
        let s = ls.keyed("features")?;
        ls.num(&s, 2)?
    };
    let schema = ls.keyed("schema")?;
    let mut m = GbmModel::constant(initial_score, shrinkage, depth, n_features)
        .with_schema_hash(if schema == "-" { String::new() } else { schema });
    for i in 0..n_trees {
        let idx = ls.keyed("tree")?;
        if ls.num::<usize>(&idx, 2)? != i {
            return Err(Error::parse(ls.line, 2, format!("expected tree {i}")));
        }
        let mut levels = Vec::with_capacity(depth);
        for _ in 0..depth {
            let l = ls.next()?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(ls.line, 1, "expected `feature threshold side gain`"));
            }
            let feature: usize = ls.num(f[0], 1)?;
            if feature >= n_features {
                return Err(Error::parse(ls.line, 1, format!("feature {feature} out of range")));
            }
            let missing_left = match f[2] {
                "left" => true,
                "right" => false,
                _ => return Err(Error::parse(ls.line, 3, "missing side must be left or right")),
            };
            levels.push(Level {
                feature,
                threshold: ls.num(f[1], 2)?,
                missing_left,
                gain: ls.num(f[3], 4)?,
            });
        }
        let l = ls.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some("leaves") {
            return Err(Error::parse(ls.line, 1, "expected `leaves ...`"));
        }
        let leaves = it.enumerate().map(|(j, s)| ls.num(s, j + 2)).collect::<Result<Vec<f64>>>()?;
        if leaves.len() != 1 << depth {
            return Err(Error::parse(ls.line, 1, format!("expected {} leaves, got {}", 1 << depth, leaves.len())));
        }
        m.trees.push(ObliviousTree { levels, leaves });
    }
    Ok(m)
}
