//! Repetition-code error graphs, planted ground-truth devices, sensor
//! coverage and the structural ("uninformative") prior.
//!
//! Layout of a distance-`d`, `r`-cycle memory: data qubit `q` sits at
//! `x = 2q`, measure qubit `i` (between data `i` and `i+1`) at `x = 2i+1`.
//! Time coordinate 0 is data preparation, `1..=r` are the measurement cycles
//! and `r+1` is the final data readout. Detector `(col, row)` has id
//! `row·(d−1) + col` with rows `0..=r`: row 0 compares the first cycle with the
//! prepared data, rows `1..r` compare consecutive cycles and row `r` compares
//! the last cycle with the final data readout.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{
    build_parametrization, xor_prob, Binding, ClassKey, Dem, Detector, Hyperedge, MeasCoord,
    Parametrization, P_MAX, P_MIN,
};
use crate::{Error, Result};

/// Space-like edges fire in the structural prior with this probability.
pub const SPACE_PRIOR: f64 = 2e-3;
/// Time-like and spacetime-like edges use this one.
pub const TIME_PRIOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepCodeSpec {
    pub d: usize,
    pub r: usize,
}

impl RepCodeSpec {
    pub fn new(d: usize, r: usize) -> Result<Self> {
        if d < 3 || d % 2 == 0 {
            return Err(Error::InvalidArgument(format!("distance must be odd and at least 3, got {d}")));
        }
        if r < 1 {
            return Err(Error::InvalidArgument("duration must be at least one cycle".into()));
        }
        Ok(RepCodeSpec { d, r })
    }

    pub fn num_detectors(&self) -> usize {
        (self.d - 1) * (self.r + 1)
    }

    /// `3r(d−1) + d`.
    pub fn num_edges(&self) -> usize {
        3 * self.r * (self.d - 1) + self.d
    }

    pub fn detector_id(&self, col: usize, row: usize) -> usize {
        row * (self.d - 1) + col
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeFamily {
    /// Data-qubit flip between cycles (or a sensor boundary edge).
    Space,
    /// Measurement flip.
    Time,
    /// Data-qubit flip between the two CNOT layers of a cycle.
    Diagonal,
}

impl EdgeFamily {
    pub fn prior(self) -> f64 {
        match self {
            EdgeFamily::Space => SPACE_PRIOR,
            EdgeFamily::Time | EdgeFamily::Diagonal => TIME_PRIOR,
        }
    }
}

/// Provenance of a hyperedge in a repetition-code model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeInfo {
    pub family: EdgeFamily,
    /// Data qubit the mechanism flips, if any.
    pub data_qubit: Option<usize>,
}

/// Contiguous block of data qubits `[start, start + d_s)` of a target chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorWindow {
    pub start: usize,
    pub d_s: usize,
}

impl SensorWindow {
    pub fn end(&self) -> usize {
        self.start + self.d_s
    }

    pub fn contains_data(&self, q: usize) -> bool {
        (self.start..self.end()).contains(&q)
    }

    /// Measure qubits strictly between window data qubits.
    pub fn contains_measure(&self, col: usize) -> bool {
        col >= self.start && col + 1 < self.end()
    }
}

/// A repetition-code model together with the metadata needed to sample it
/// against data-qubit readouts and to restrict it to sensor windows.
#[derive(Debug, Clone)]
pub struct RepCode {
    pub spec: RepCodeSpec,
    /// `None` for a full chain.
    pub window: Option<SensorWindow>,
    pub dem: Dem,
    /// One entry per hyperedge of `dem`.
    pub edges: Vec<EdgeInfo>,
    /// Detector id in the full chain for each detector of `dem`.
    pub full_detectors: Vec<usize>,
}

impl RepCode {
    /// Data qubits whose readout parity defines the logical observable.
    pub fn observable_qubits(&self) -> Vec<usize> {
        match self.window {
            None => vec![0],
            Some(w) => (w.start..w.end()).collect(),
        }
    }

    /// Data qubits read out at the end of a shot.
    pub fn data_qubits(&self) -> std::ops::Range<usize> {
        match self.window {
            None => 0..self.spec.d,
            Some(w) => w.start..w.end(),
        }
    }

    /// Per-hyperedge data flip, reindexed relative to [`Self::data_qubits`].
    pub fn local_data_flips(&self) -> Vec<Option<usize>> {
        let base = self.data_qubits().start;
        self.edges.iter().map(|e| e.data_qubit.map(|q| q - base)).collect()
    }

    pub fn with_dem(&self, dem: Dem) -> Result<RepCode> {
        if dem.hyperedges().len() != self.edges.len() || dem.num_detectors() != self.dem.num_detectors() {
            return Err(Error::Dimension("model does not match the repetition-code structure".into()));
        }
        Ok(RepCode { dem, ..self.clone() })
    }
}

fn detector_coords(spec: RepCodeSpec, col: usize, row: usize) -> Vec<MeasCoord> {
    let x = 2 * col as i32 + 1;
    let r = spec.r as u32;
    let row = row as u32;
    if row == 0 {
        vec![MeasCoord::new(x - 1, 0, 0), MeasCoord::new(x + 1, 0, 0), MeasCoord::new(x, 0, 1)]
    } else if row < r {
        vec![MeasCoord::new(x, 0, row), MeasCoord::new(x, 0, row + 1)]
    } else {
        vec![MeasCoord::new(x, 0, r), MeasCoord::new(x - 1, 0, r + 1), MeasCoord::new(x + 1, 0, r + 1)]
    }
}

/// Error graph of a distance-`d`, `r`-cycle repetition-code memory with all
/// probabilities zero. The single observable is the readout of data qubit 0.
pub fn repetition_dem(spec: RepCodeSpec) -> Result<RepCode> {
    let spec = RepCodeSpec::new(spec.d, spec.r)?;
    let (d, r) = (spec.d, spec.r);
    let mut detectors = Vec::with_capacity(spec.num_detectors());
    for row in 0..=r {
        for col in 0..d - 1 {
            detectors.push(Detector::new(spec.detector_id(col, row), detector_coords(spec, col, row))?);
        }
    }
    let mut hyperedges = Vec::with_capacity(spec.num_edges());
    let mut edges = Vec::with_capacity(spec.num_edges());
    let id = |c, k| spec.detector_id(c, k);
    for k in 0..=r {
        for q in 0..d {
            let mut dets = Vec::with_capacity(2);
            if q > 0 {
                dets.push(id(q - 1, k));
            }
            if q < d - 1 {
                dets.push(id(q, k));
            }
            hyperedges.push(Hyperedge::new(dets, u64::from(q == 0), 0.0));
            edges.push(EdgeInfo { family: EdgeFamily::Space, data_qubit: Some(q) });
        }
        if k < r {
            for c in 0..d - 1 {
                hyperedges.push(Hyperedge::new(vec![id(c, k), id(c, k + 1)], 0, 0.0));
                edges.push(EdgeInfo { family: EdgeFamily::Time, data_qubit: None });
            }
            for q in 1..d - 1 {
                hyperedges.push(Hyperedge::new(vec![id(q - 1, k), id(q, k + 1)], 0, 0.0));
                edges.push(EdgeInfo { family: EdgeFamily::Diagonal, data_qubit: Some(q) });
            }
        }
    }
    let dem = Dem::new(detectors, hyperedges, 1)?;
    debug_assert_eq!(dem.hyperedges().len(), spec.num_edges());
    Ok(RepCode { spec, window: None, dem, edges, full_detectors: (0..spec.num_detectors()).collect() })
}

/// Family of every class of `param`, read off the models bound to it.
fn class_families(param: &Parametrization, codes: &[&RepCode]) -> Result<Vec<EdgeFamily>> {
    let mut fam: Vec<Option<EdgeFamily>> = vec![None; param.num_params()];
    for code in codes {
        let binding = param.bind(&code.dem)?;
        for (&j, info) in binding.params().iter().zip(&code.edges) {
            match fam[j] {
                None => fam[j] = Some(info.family),
                Some(f) if f != info.family => {
                    return Err(Error::Model(format!(
                        "class {} mixes {f:?} and {:?} edges",
                        param.classes()[j],
                        info.family
                    )))
                }
                _ => {}
            }
        }
    }
    fam.into_iter()
        .enumerate()
        .map(|(j, f)| {
            f.ok_or_else(|| Error::Model(format!("class {} is not bound to any model", param.classes()[j])))
        })
        .collect()
}

/// Structural prior: one fixed probability per edge family, as `log10`.
///
/// Time-boundary classes take the value of their family, so the output has
/// support on two values only.
pub fn uninformative_prior(param: &Parametrization, codes: &[&RepCode]) -> Result<Vec<f64>> {
    Ok(class_families(param, codes)?.into_iter().map(|f| f.prior().log10()).collect())
}

/// Settings of a synthetic device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSpec {
    /// Standard deviation in decades of the per-class deviation from the base.
    pub spread_sigma: f64,
    pub n_outliers: usize,
    pub outlier_factor: f64,
    pub seed: u64,
}

/// Synthetic ground truth for a full chain.
///
/// `base_theta` is indexed by the chain's own parametrization
/// (`build_parametrization(&[&repetition_dem(spec)?.dem])`). Each class draws one
/// `log10` offset from `Normal(0, spread)` shared by all of its time copies,
/// so the device is stationary apart from the `n_outliers` individual edges
/// that are multiplied by `outlier_factor`.
pub fn planted_dem(spec: RepCodeSpec, base_theta: &[f64], planted: PlantedSpec) -> Result<RepCode> {
    let template = repetition_dem(spec)?;
    let n_edges = template.edges.len();
    if !(planted.spread_sigma >= 0.0 && planted.spread_sigma.is_finite()) {
        return Err(Error::InvalidArgument("spread must be finite and non-negative".into()));
    }
    if planted.n_outliers > n_edges {
        return Err(Error::InvalidArgument(format!(
            "{} outliers requested for {n_edges} edges",
            planted.n_outliers
        )));
    }
    if !(planted.outlier_factor >= 1.0) {
        return Err(Error::InvalidArgument("outlier factor must be at least 1".into()));
    }
    let param = build_parametrization(&[&template.dem])?;
    if base_theta.len() != param.num_params() {
        return Err(Error::Dimension(format!(
            "base theta has {} entries, the chain has {} classes",
            base_theta.len(),
            param.num_params()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(planted.seed);
    let theta: Vec<f64> = if planted.spread_sigma > 0.0 {
        let normal = Normal::new(0.0, planted.spread_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        base_theta.iter().map(|b| b + normal.sample(&mut rng)).collect()
    } else {
        base_theta.to_vec()
    };
    let mut probs: Vec<f64> = param
        .binding(0)
        .params()
        .iter()
        .map(|&j| 10f64.powf(theta[j]).clamp(P_MIN, P_MAX))
        .collect();
    for e in index::sample(&mut rng, n_edges, planted.n_outliers).into_iter() {
        probs[e] = (probs[e] * planted.outlier_factor).clamp(P_MIN, P_MAX);
    }
    let dem = template.dem.with_probabilities(&probs)?;
    template.with_dem(dem)
}

/// Restricts a full chain to the detectors of `window`.
///
/// Edges inside the window are kept. Edges crossing the spatial boundary lose
/// their outside detector and become boundary edges; several of them landing
/// on the same detector merge into one. The sensor observable is the parity
/// of the window's data qubits.
pub fn restrict_to_window(template: &RepCode, window: SensorWindow) -> Result<RepCode> {
    if template.window.is_some() {
        return Err(Error::InvalidArgument("can only restrict a full chain".into()));
    }
    let spec = template.spec;
    if window.d_s < 3 || window.d_s % 2 == 0 || window.end() > spec.d {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} does not fit a distance-{} chain",
            spec.d
        )));
    }
    let cols = spec.d - 1;
    let mut new_id = vec![usize::MAX; spec.num_detectors()];
    let mut full_detectors = Vec::new();
    let mut detectors = Vec::new();
    for (old, det) in template.dem.detectors().iter().enumerate() {
        if window.contains_measure(old % cols) {
            new_id[old] = full_detectors.len();
            detectors.push(Detector { id: full_detectors.len(), coords: det.coords.clone() });
            full_detectors.push(old);
        }
    }
    // (detectors, observables) -> position, for boundary edges that collapse
    let mut slot: HashMap<(Vec<usize>, u64), usize> = HashMap::new();
    let mut hyperedges: Vec<Hyperedge> = Vec::new();
    let mut infos: Vec<EdgeInfo> = Vec::new();
    for (e, info) in template.dem.hyperedges().iter().zip(&template.edges) {
        let kept: Vec<usize> = e.detectors.iter().filter_map(|&d| Some(new_id[d]).filter(|&n| n != usize::MAX)).collect();
        if kept.is_empty() {
            continue;
        }
        let crossing = kept.len() < e.detectors.len();
        let obs = u64::from(info.data_qubit.is_some_and(|q| window.contains_data(q)));
        let info = if crossing { EdgeInfo { family: EdgeFamily::Space, ..*info } } else { *info };
        let key = (kept.clone(), obs);
        match slot.get(&key) {
            Some(&i) => {
                hyperedges[i].probability = xor_prob(hyperedges[i].probability, e.probability);
            }
            None => {
                slot.insert(key, hyperedges.len());
                hyperedges.push(Hyperedge::new(kept, obs, e.probability));
                infos.push(info);
            }
        }
    }
    let dem = Dem::new(detectors, hyperedges, 1)?;
    Ok(RepCode { spec, window: Some(window), dem, edges: infos, full_detectors })
}

/// A target chain covered by overlapping sensor windows sharing one
/// parametrization.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    pub target: RepCode,
    pub windows: Vec<SensorWindow>,
    pub sensors: Vec<RepCode>,
    pub parametrization: Parametrization,
}

impl SensorSuite {
    fn from_windows(target: &RepCode, windows: Vec<SensorWindow>) -> Result<Self> {
        check_windows(target.spec.d, &windows)?;
        let sensors: Vec<RepCode> =
            windows.iter().map(|&w| restrict_to_window(target, w)).collect::<Result<_>>()?;
        let dems: Vec<&Dem> = sensors.iter().map(|s| &s.dem).collect();
        let parametrization = build_parametrization(&dems)?;
        Ok(SensorSuite { target: target.clone(), windows, sensors, parametrization })
    }

    pub fn num_agents(&self) -> usize {
        self.sensors.len()
    }

    pub fn num_params(&self) -> usize {
        self.parametrization.num_params()
    }

    pub fn target_binding(&self) -> Result<Binding> {
        self.parametrization.bind(&self.target.dem)
    }

    /// Same sensors and classes, with probabilities taken from `device`.
    pub fn with_target(&self, device: &RepCode) -> Result<SensorSuite> {
        if device.spec != self.target.spec || device.window.is_some() {
            return Err(Error::InvalidArgument("device does not match the target chain".into()));
        }
        let sensors = self.windows.iter().map(|&w| restrict_to_window(device, w)).collect::<Result<_>>()?;
        Ok(SensorSuite {
            target: device.clone(),
            windows: self.windows.clone(),
            sensors,
            parametrization: self.parametrization.clone(),
        })
    }

    /// Structural prior over this suite's classes.
    pub fn uninformative_prior(&self) -> Result<Vec<f64>> {
        let codes: Vec<&RepCode> = self.sensors.iter().collect();
        uninformative_prior(&self.parametrization, &codes)
    }
}

fn check_windows(d: usize, windows: &[SensorWindow]) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no sensor windows".into()));
    }
    let mut sorted = windows.to_vec();
    sorted.sort_by_key(|w| w.start);
    if sorted[0].start != 0 || sorted.last().unwrap().end() != d {
        return Err(Error::InvalidArgument("windows do not cover the chain".into()));
    }
    for pair in sorted.windows(2) {
        if pair[1].start >= pair[0].end() {
            return Err(Error::InvalidArgument(format!(
                "windows at {} and {} do not overlap",
                pair[0].start, pair[1].start
            )));
        }
    }
    Ok(())
}

/// Windows at `0, stride, 2·stride, …` plus a last window flush with the end.
pub fn build_sensors(target: &RepCode, d_s: usize, stride: usize) -> Result<SensorSuite> {
    let d = target.spec.d;
    validate_ds(d, d_s)?;
    if stride == 0 || stride >= d_s {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} must lie in 1..{d_s} so that windows overlap"
        )));
    }
    let mut starts = Vec::new();
    let mut s = 0;
    while s + d_s < d {
        starts.push(s);
        s += stride;
    }
    starts.push(d - d_s);
    starts.dedup();
    SensorSuite::from_windows(target, starts.into_iter().map(|start| SensorWindow { start, d_s }).collect())
}

/// `count` windows spread as evenly as integer starts allow.
pub fn build_sensors_even(target: &RepCode, d_s: usize, count: usize) -> Result<SensorSuite> {
    let d = target.spec.d;
    validate_ds(d, d_s)?;
    let span = d - d_s;
    let starts: Vec<usize> = match count {
        0 => return Err(Error::InvalidArgument("need at least one sensor".into())),
        1 if span == 0 => vec![0],
        1 => return Err(Error::InvalidArgument("one window cannot cover the chain".into())),
        _ => (0..count).map(|k| (k * span + (count - 1) / 2) / (count - 1)).collect(),
    };
    let mut dedup = starts.clone();
    dedup.dedup();
    if dedup.len() != starts.len() {
        return Err(Error::InvalidArgument(format!(
            "{count} distinct windows of size {d_s} do not fit a distance-{d} chain"
        )));
    }
    SensorSuite::from_windows(target, starts.into_iter().map(|start| SensorWindow { start, d_s }).collect())
}

fn validate_ds(d: usize, d_s: usize) -> Result<()> {
    if d_s < 3 || d_s % 2 == 0 || d_s > d {
        return Err(Error::InvalidArgument(format!("sensor distance {d_s} must be odd in 3..={d}")));
    }
    Ok(())
}

/// Target classes that no sensor parametrizes.
pub fn check_coverage(param: &Parametrization, target: &Dem) -> Result<Vec<ClassKey>> {
    param.missing_classes(target)
}

/// Number of sensor edges of each family, for diagnostics.
pub fn family_counts(code: &RepCode) -> BTreeMap<EdgeFamily, usize> {
    let mut out = BTreeMap::new();
    for e in &code.edges {
        *out.entry(e.family).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(d: usize, r: usize) -> RepCode {
        repetition_dem(RepCodeSpec::new(d, r).unwrap()).unwrap()
    }

    #[test]
    fn edge_counts_match_formula() {
        assert_eq!(code(9, 4).dem.hyperedges().len(), 105);
        assert_eq!(code(3, 1).dem.hyperedges().len(), 9);
        for d in (3..=11).step_by(2) {
            for r in 1..=6 {
                let c = code(d, r);
                assert_eq!(c.dem.hyperedges().len(), 3 * r * (d - 1) + d);
            }
        }
    }

    #[test]
    fn every_detector_has_two_edges() {
        let c = code(5, 3);
        let mut deg = vec![0; c.dem.num_detectors()];
        for e in c.dem.hyperedges() {
            for &d in &e.detectors {
                deg[d] += 1;
            }
        }
        assert!(deg.iter().all(|&k| k >= 2));
    }

    #[test]
    fn only_data_zero_flips_the_target_observable() {
        let c = code(5, 2);
        for (e, info) in c.dem.hyperedges().iter().zip(&c.edges) {
            assert_eq!(e.observables == 1, info.data_qubit == Some(0));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(RepCodeSpec::new(4, 3).is_err());
        assert!(RepCodeSpec::new(1, 3).is_err());
        assert!(RepCodeSpec::new(5, 0).is_err());
    }

    #[test]
    fn class_count_is_nine_per_measure_qubit() {
        for d in [3, 5, 7, 9] {
            for r in [3, 4, 7] {
                let c = code(d, r);
                let p = build_parametrization(&[&c.dem]).unwrap();
                assert_eq!(p.num_params(), 9 * (d - 1), "d={d} r={r}");
            }
        }
    }

    #[test]
    fn uninformative_prior_has_two_values() {
        let c = code(3, 1);
        let p = build_parametrization(&[&c.dem]).unwrap();
        let theta = uninformative_prior(&p, &[&c]).unwrap();
        let binding = p.binding(0);
        let mut values: Vec<f64> = binding.params().iter().map(|&j| theta[j]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert_eq!(values.len(), 2);
        assert!(theta.iter().all(|&t| (-3.0..=-2.69).contains(&t)));
        assert_eq!(theta, uninformative_prior(&p, &[&c]).unwrap());
    }

    #[test]
    fn planted_without_noise_is_the_structural_prior() {
        let spec = RepCodeSpec::new(5, 3).unwrap();
        let c = code(5, 3);
        let p = build_parametrization(&[&c.dem]).unwrap();
        let base = uninformative_prior(&p, &[&c]).unwrap();
        let planted = planted_dem(spec, &base, PlantedSpec { spread_sigma: 0.0, n_outliers: 0, outlier_factor: 1.0, seed: 1 }).unwrap();
        for (e, info) in planted.dem.hyperedges().iter().zip(&planted.edges) {
            assert!((e.probability - info.family.prior()).abs() < 1e-15);
        }
    }

    #[test]
    fn planted_outliers_and_determinism() {
        let spec = RepCodeSpec::new(7, 4).unwrap();
        let c = code(7, 4);
        let p = build_parametrization(&[&c.dem]).unwrap();
        let base = uninformative_prior(&p, &[&c]).unwrap();
        let ps = PlantedSpec { spread_sigma: 0.0, n_outliers: 3, outlier_factor: 10.0, seed: 9 };
        let a = planted_dem(spec, &base, ps).unwrap();
        let above: usize = a
            .dem
            .hyperedges()
            .iter()
            .zip(&a.edges)
            .filter(|(e, i)| e.probability > 5.0 * i.family.prior())
            .count();
        assert_eq!(above, 3);
        let noisy = PlantedSpec { spread_sigma: 0.3, ..ps };
        let b1 = planted_dem(spec, &base, noisy).unwrap();
        let b2 = planted_dem(spec, &base, noisy).unwrap();
        assert_eq!(b1.dem.to_text(), b2.dem.to_text());
        assert!(planted_dem(spec, &base, PlantedSpec { outlier_factor: 0.5, ..ps }).is_err());
        assert!(planted_dem(spec, &base, PlantedSpec { spread_sigma: -1.0, ..ps }).is_err());
        assert!(planted_dem(spec, &base[1..], ps).is_err());
    }

    #[test]
    fn full_window_is_identity() {
        let c = code(5, 3);
        let s = restrict_to_window(&c, SensorWindow { start: 0, d_s: 5 }).unwrap();
        assert_eq!(s.dem.num_detectors(), c.dem.num_detectors());
        let mut a: Vec<_> = c.dem.hyperedges().iter().map(|e| e.detectors.clone()).collect();
        let mut b: Vec<_> = s.dem.hyperedges().iter().map(|e| e.detectors.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn crossing_edges_merge_onto_boundary() {
        let mut c = code(5, 1);
        let probs: Vec<f64> = c
            .dem
            .hyperedges()
            .iter()
            .zip(&c.edges)
            .map(|(_, i)| if i.data_qubit == Some(1) { 0.1 } else { 0.01 })
            .collect();
        c.dem = c.dem.with_probabilities(&probs).unwrap();
        // window [1, 4): data qubit 1 crossing edges land on measure column 1
        let s = restrict_to_window(&c, SensorWindow { start: 1, d_s: 3 }).unwrap();
        let id = s.full_detectors.iter().position(|&f| f == c.spec.detector_id(1, 1)).unwrap();
        let boundary: Vec<_> = s.dem.hyperedges().iter().filter(|e| e.detectors == vec![id]).collect();
        assert_eq!(boundary.len(), 1);
        // the space-like edge at row 1 and the diagonal of round 1 both cross
        assert!((boundary[0].probability - 0.18).abs() < 1e-15);
        assert_eq!(boundary[0].observables, 1);
    }

    #[test]
    fn wide_chain_parameter_counts() {
        let c = code(9, 4);
        let suite = build_sensors(&c, 5, 2).unwrap();
        let starts: Vec<usize> = suite.windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 2, 4]);
        assert_eq!(suite.num_params(), 9 * 8 + 12);
        assert!(check_coverage(&suite.parametrization, &c.dem).unwrap().is_empty());
    }

    #[test]
    fn sensor_layout_errors() {
        let c = code(9, 3);
        assert!(build_sensors(&c, 5, 5).is_err());
        assert!(build_sensors(&c, 4, 2).is_err());
        assert!(build_sensors(&c, 11, 2).is_err());
        assert!(build_sensors_even(&c, 5, 1).is_err());
        let full = build_sensors(&c, 9, 1).unwrap();
        assert_eq!(full.windows.len(), 1);
        assert_eq!(full.sensors[0].dem.hyperedges().len(), c.dem.hyperedges().len());
    }

    #[test]
    fn even_layout_hits_requested_count() {
        let c = code(11, 3);
        let suite = build_sensors_even(&c, 5, 5).unwrap();
        assert_eq!(suite.num_agents(), 5);
        assert!(check_coverage(&suite.parametrization, &c.dem).unwrap().is_empty());
    }

    #[test]
    fn small_sensor_leaves_classes_uncovered() {
        let c = code(9, 3);
        let w = restrict_to_window(&c, SensorWindow { start: 0, d_s: 3 }).unwrap();
        let p = build_parametrization(&[&w.dem]).unwrap();
        assert!(!check_coverage(&p, &c.dem).unwrap().is_empty());
        let own = build_parametrization(&[&c.dem]).unwrap();
        assert!(check_coverage(&own, &c.dem).unwrap().is_empty());
    }
}
