//! Monte Carlo shots from an error model, and sensor shots cut out of
//! target-chain shots.
//!
//! Every shot draws from its own ChaCha8 stream selected by the shot index,
//! so results do not depend on how shots are spread over threads.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codegen::RepCode;
use crate::model::Dem;
use crate::{Error, Result};

/// Row-major bit matrix with rows padded to whole `u64` words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix { rows, cols, words_per_row, data: vec![0; rows * words_per_row] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.words_per_row + col / 64] >> (col % 64) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.data[row * self.words_per_row + col / 64];
        let mask = 1u64 << (col % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub fn flip(&mut self, row: usize, col: usize) {
        self.data[row * self.words_per_row + col / 64] ^= 1u64 << (col % 64);
    }

    /// Packed words of one row; bits past `cols` are zero.
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.data[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    fn row_words_mut(&mut self, row: usize) -> &mut [u64] {
        &mut self.data[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    pub fn row_bits(&self, row: usize) -> Vec<bool> {
        (0..self.cols).map(|c| self.get(row, c)).collect()
    }

    pub fn row_is_zero(&self, row: usize) -> bool {
        self.row_words(row).iter().all(|&w| w == 0)
    }

    /// Indices of set bits in a row, ascending.
    pub fn row_ones(&self, row: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, &w) in self.row_words(row).iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push(i * 64 + w.trailing_zeros() as usize);
                w &= w - 1;
            }
        }
        out
    }

    /// Number of set bits in a column.
    pub fn col_count(&self, col: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, col)).count()
    }

    pub fn xor_assign(&mut self, other: &BitMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension("bit matrices differ in shape".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a ^= b;
        }
        Ok(())
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> BitMatrix {
        let mut out = BitMatrix::zeros(rows.len(), self.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_words_mut(i).copy_from_slice(self.row_words(r));
        }
        out
    }

    fn from_rows(cols: usize, rows: Vec<Vec<u64>>) -> BitMatrix {
        let words_per_row = cols.div_ceil(64);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * words_per_row);
        for r in rows {
            debug_assert_eq!(r.len(), words_per_row);
            data.extend(r);
        }
        BitMatrix { rows: n, cols, words_per_row, data }
    }
}

/// A batch of shots: detector bits, observable bits and, for repetition
/// codes, the final readout of the data qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSet {
    pub detectors: BitMatrix,
    pub observables: BitMatrix,
    pub final_data: Option<BitMatrix>,
}

impl ShotSet {
    pub fn new(detectors: BitMatrix, observables: BitMatrix, final_data: Option<BitMatrix>) -> Result<Self> {
        let n = detectors.rows();
        if observables.rows() != n || final_data.as_ref().is_some_and(|f| f.rows() != n) {
            return Err(Error::Dimension("shot matrices disagree on the number of shots".into()));
        }
        Ok(ShotSet { detectors, observables, final_data })
    }

    pub fn n_shots(&self) -> usize {
        self.detectors.rows()
    }

    pub fn num_detectors(&self) -> usize {
        self.detectors.cols()
    }

    pub fn num_observables(&self) -> usize {
        self.observables.cols()
    }

    /// Observable bits of shot `i` as a mask.
    pub fn observable_mask(&self, i: usize) -> u64 {
        self.observables.row_words(i).first().copied().unwrap_or(0)
    }

    /// Shots `range`, in order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<ShotSet> {
        if range.end > self.n_shots() || range.start > range.end {
            return Err(Error::InvalidArgument(format!(
                "shot range {range:?} outside 0..{}",
                self.n_shots()
            )));
        }
        let rows: Vec<usize> = range.collect();
        Ok(self.select(&rows))
    }

    pub fn select(&self, rows: &[usize]) -> ShotSet {
        ShotSet {
            detectors: self.detectors.select_rows(rows),
            observables: self.observables.select_rows(rows),
            final_data: self.final_data.as_ref().map(|f| f.select_rows(rows)),
        }
    }
}

#[derive(Clone)]
struct SamplePlan {
    probs: Vec<f64>,
    dets: Vec<Vec<usize>>,
    obs: Vec<u64>,
    data: Vec<Option<usize>>,
    num_detectors: usize,
    num_observables: usize,
    num_data: usize,
}

impl SamplePlan {
    fn from_dem(dem: &Dem) -> Self {
        let e = dem.hyperedges();
        SamplePlan {
            probs: e.iter().map(|h| h.probability).collect(),
            dets: e.iter().map(|h| h.detectors.clone()).collect(),
            obs: e.iter().map(|h| h.observables).collect(),
            data: vec![None; e.len()],
            num_detectors: dem.num_detectors(),
            num_observables: dem.num_observables(),
            num_data: 0,
        }
    }

    fn run(&self, n: usize, seed: u64) -> Result<ShotSet> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one shot".into()));
        }
        let dw = self.num_detectors.div_ceil(64);
        let qw = self.num_data.div_ceil(64);
        let rows: Vec<(Vec<u64>, u64, Vec<u64>)> = (0..n)
            .into_par_iter()
            .map(|shot| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(shot as u64);
                let mut det = vec![0u64; dw];
                let mut obs = 0u64;
                let mut data = vec![0u64; qw];
                for (e, &p) in self.probs.iter().enumerate() {
                    // one draw per edge keeps edge `e` on a fixed position of the stream
                    let u: f64 = rng.random();
                    if u < p {
                        for &d in &self.dets[e] {
                            det[d / 64] ^= 1 << (d % 64);
                        }
                        obs ^= self.obs[e];
                        if let Some(q) = self.data[e] {
                            data[q / 64] ^= 1 << (q % 64);
                        }
                    }
                }
                (det, obs, data)
            })
            .collect();
        let mut dets = Vec::with_capacity(n);
        let mut obs = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n);
        let ow = self.num_observables.div_ceil(64);
        for (d, o, q) in rows {
            dets.push(d);
            obs.push(if ow == 0 { vec![] } else { vec![o] });
            data.push(q);
        }
        let final_data = (self.num_data > 0).then(|| BitMatrix::from_rows(self.num_data, data));
        ShotSet::new(
            BitMatrix::from_rows(self.num_detectors, dets),
            BitMatrix::from_rows(self.num_observables, obs),
            final_data,
        )
    }
}

/// Samples `n` shots of `dem`: each hyperedge fires independently.
pub fn sample_shots(dem: &Dem, n: usize, seed: u64) -> Result<ShotSet> {
    SamplePlan::from_dem(dem).run(n, seed)
}

/// Samples a repetition-code model and also records the final data readout.
pub fn sample_code(code: &RepCode, n: usize, seed: u64) -> Result<ShotSet> {
    let mut plan = SamplePlan::from_dem(&code.dem);
    plan.data = code.local_data_flips();
    plan.num_data = code.data_qubits().len();
    plan.run(n, seed)
}

/// Cuts sensor shots out of target-chain shots.
///
/// Detector columns are taken from the target; the observable is the parity
/// of the window's final data bits (the initial bits are all zero).
pub fn subsample_sensor_shots(target_shots: &ShotSet, sensor: &RepCode) -> Result<ShotSet> {
    let window = sensor
        .window
        .ok_or_else(|| Error::InvalidArgument("sensor has no window".into()))?;
    let data = target_shots
        .final_data
        .as_ref()
        .ok_or_else(|| Error::Data("target shots carry no final data bits".into()))?;
    if data.cols() != sensor.spec.d || target_shots.num_detectors() != sensor.spec.num_detectors() {
        return Err(Error::Dimension("target shots do not match the sensor's chain".into()));
    }
    let n = target_shots.n_shots();
    let mut det = BitMatrix::zeros(n, sensor.full_detectors.len());
    let mut obs = BitMatrix::zeros(n, 1);
    let mut fd = BitMatrix::zeros(n, window.d_s);
    for i in 0..n {
        for (j, &full) in sensor.full_detectors.iter().enumerate() {
            if target_shots.detectors.get(i, full) {
                det.set(i, j, true);
            }
        }
        let mut parity = false;
        for (j, q) in (window.start..window.end()).enumerate() {
            if data.get(i, q) {
                fd.set(i, j, true);
                parity ^= true;
            }
        }
        obs.set(i, 0, parity);
    }
    ShotSet::new(det, obs, Some(fd))
}

fn header(shots: &ShotSet) -> String {
    let data = shots.final_data.as_ref().map_or(0, |f| f.cols());
    format!(
        "shots {} dets {} obs {} data {}\n",
        shots.n_shots(),
        shots.num_detectors(),
        shots.num_observables(),
        data
    )
}

fn row_bits(shots: &ShotSet, i: usize) -> impl Iterator<Item = bool> + '_ {
    let d = shots.detectors.row_bits(i);
    let o = shots.observables.row_bits(i);
    let q = shots.final_data.as_ref().map(|f| f.row_bits(i)).unwrap_or_default();
    d.into_iter().chain(o).chain(q)
}

fn parse_header(line: &str) -> Result<(usize, usize, usize, usize)> {
    let t: Vec<&str> = line.split_whitespace().collect();
    if t.len() != 8 || t[0] != "shots" || t[2] != "dets" || t[4] != "obs" || t[6] != "data" {
        return Err(Error::parse(1, format!("bad shot header {line:?}")));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(1, e));
    Ok((num(t[1])?, num(t[3])?, num(t[5])?, num(t[7])?))
}

struct Builder {
    det: BitMatrix,
    obs: BitMatrix,
    data: Option<BitMatrix>,
}

impl Builder {
    fn new(n: usize, d: usize, k: usize, q: usize) -> Builder {
        Builder {
            det: BitMatrix::zeros(n, d),
            obs: BitMatrix::zeros(n, k),
            data: (q > 0).then(|| BitMatrix::zeros(n, q)),
        }
    }

    fn width(&self) -> usize {
        self.det.cols() + self.obs.cols() + self.data.as_ref().map_or(0, |f| f.cols())
    }

    fn set(&mut self, row: usize, bit: usize) {
        let (d, k) = (self.det.cols(), self.obs.cols());
        if bit < d {
            self.det.set(row, bit, true);
        } else if bit < d + k {
            self.obs.set(row, bit - d, true);
        } else if let Some(f) = self.data.as_mut() {
            f.set(row, bit - d - k, true);
        }
    }

    fn finish(self) -> Result<ShotSet> {
        ShotSet::new(self.det, self.obs, self.data)
    }
}

/// Writes one `0`/`1` line per shot after the header.
pub fn write_shots_text<W: Write>(shots: &ShotSet, mut w: W) -> Result<()> {
    w.write_all(header(shots).as_bytes())?;
    let mut line = String::new();
    for i in 0..shots.n_shots() {
        line.clear();
        line.extend(row_bits(shots, i).map(|b| if b { '1' } else { '0' }));
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_shots_text<R: Read>(r: R) -> Result<ShotSet> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| Error::parse(1, "empty shot file"))??;
    let (n, d, k, q) = parse_header(&first)?;
    let mut b = Builder::new(n, d, k, q);
    let width = b.width();
    let mut row = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        if row >= n {
            return Err(Error::parse(lineno, "more shots than the header declares"));
        }
        if line.len() != width {
            return Err(Error::parse(lineno, format!("expected {width} bits, got {}", line.len())));
        }
        for (j, c) in line.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => b.set(row, j),
                _ => return Err(Error::parse(lineno, format!("invalid bit character {:?}", c as char))),
            }
        }
        row += 1;
    }
    if row != n {
        return Err(Error::Data(format!("header declares {n} shots, file has {row}")));
    }
    b.finish()
}

/// Header line as text, then each shot's bits packed little-endian within
/// bytes, each row padded to a whole byte.
pub fn write_shots_packed<W: Write>(shots: &ShotSet, mut w: W) -> Result<()> {
    w.write_all(header(shots).as_bytes())?;
    let width = shots.num_detectors()
        + shots.num_observables()
        + shots.final_data.as_ref().map_or(0, |f| f.cols());
    let mut buf = vec![0u8; width.div_ceil(8)];
    for i in 0..shots.n_shots() {
        buf.iter_mut().for_each(|b| *b = 0);
        for (j, bit) in row_bits(shots, i).enumerate() {
            if bit {
                buf[j / 8] |= 1 << (j % 8);
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_shots_packed<R: Read>(r: R) -> Result<ShotSet> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (n, d, k, q) = parse_header(first.trim_end())?;
    let mut b = Builder::new(n, d, k, q);
    let width = b.width();
    let mut buf = vec![0u8; width.div_ceil(8)];
    for row in 0..n {
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::Data(format!("packed shot file ends at shot {row} of {n}")))?;
        for j in 0..width {
            if buf[j / 8] >> (j % 8) & 1 == 1 {
                b.set(row, j);
            }
        }
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Data("trailing bytes after the declared shots".into()));
    }
    b.finish()
}
