//! Line-oriented text format for detector error models.
//!
//! ```text
//! # comment
//! num_observables 1
//! detector D0 1 0 0 2 0 0
//! error 1.0000000000000000e-03 D0 D1 L0
//! ```
//!
//! A `detector` line lists `x y t` triples. Probabilities are written with 17
//! significant digits so that a write/read cycle is lossless.

use std::fmt::Write as _;

use super::dem::{Dem, Detector, Hyperedge, MeasCoord};
use crate::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Dem {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "num_observables {}", self.num_observables()).unwrap();
        for det in self.detectors() {
            write!(out, "detector D{}", det.id).unwrap();
            for c in &det.coords {
                write!(out, " {} {} {}", c.x, c.y, c.t).unwrap();
            }
            out.push('\n');
        }
        for e in self.hyperedges() {
            write!(out, "error {}", fmt_f64(e.probability)).unwrap();
            for d in &e.detectors {
                write!(out, " D{d}").unwrap();
            }
            for k in 0..64 {
                if e.observables >> k & 1 == 1 {
                    write!(out, " L{k}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Dem> {
        let mut num_obs: Option<usize> = None;
        let mut detectors: Vec<(usize, Detector)> = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            match toks.next().unwrap() {
                "num_observables" => {
                    let n = toks
                        .next()
                        .ok_or_else(|| Error::parse(lineno, "missing observable count"))?
                        .parse::<usize>()
                        .map_err(|e| Error::parse(lineno, e))?;
                    num_obs = Some(n);
                }
                "detector" => {
                    let id = parse_ref(toks.next(), 'D', lineno)?;
                    let nums: Vec<&str> = toks.collect();
                    if nums.len() % 3 != 0 {
                        return Err(Error::parse(lineno, "coordinates must come in x y t triples"));
                    }
                    let mut coords = Vec::with_capacity(nums.len() / 3);
                    for c in nums.chunks(3) {
                        let x = c[0].parse::<i32>().map_err(|e| Error::parse(lineno, e))?;
                        let y = c[1].parse::<i32>().map_err(|e| Error::parse(lineno, e))?;
                        let t = c[2].parse::<u32>().map_err(|e| Error::parse(lineno, e))?;
                        coords.push(MeasCoord::new(x, y, t));
                    }
                    let det = Detector::new(id, coords).map_err(|e| Error::parse(lineno, e))?;
                    detectors.push((id, det));
                }
                "error" => {
                    let p = toks
                        .next()
                        .ok_or_else(|| Error::parse(lineno, "missing probability"))?
                        .parse::<f64>()
                        .map_err(|e| Error::parse(lineno, e))?;
                    let mut dets = Vec::new();
                    let mut obs = 0u64;
                    for tok in toks {
                        if tok.starts_with('D') {
                            dets.push(parse_ref(Some(tok), 'D', lineno)?);
                        } else if tok.starts_with('L') {
                            let k = parse_ref(Some(tok), 'L', lineno)?;
                            if k >= 64 {
                                return Err(Error::parse(lineno, "observable index too large"));
                            }
                            obs ^= 1 << k;
                        } else {
                            return Err(Error::parse(lineno, format!("unexpected token {tok:?}")));
                        }
                    }
                    edges.push(Hyperedge::new(dets, obs, p));
                }
                other => return Err(Error::parse(lineno, format!("unknown directive {other:?}"))),
            }
        }
        detectors.sort_by_key(|(id, _)| *id);
        let detectors: Vec<Detector> = detectors.into_iter().map(|(_, d)| d).collect();
        let num_obs = match num_obs {
            Some(n) => n,
            None => edges
                .iter()
                .map(|e: &Hyperedge| 64 - e.observables.leading_zeros() as usize)
                .max()
                .unwrap_or(0),
        };
        Dem::new(detectors, edges, num_obs)
    }
}

fn parse_ref(tok: Option<&str>, prefix: char, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {prefix}<id>")))?;
    tok.strip_prefix(prefix)
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::parse(line, format!("expected {prefix}<id>, got {tok:?}")))
}
