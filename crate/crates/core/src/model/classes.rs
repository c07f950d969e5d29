use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use super::dem::{Detector, Hyperedge, MeasCoord};
use crate::{Error, Result};

/// Which time boundary, if any, an error mechanism touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Bulk,
    TimeStart,
    TimeEnd,
}

impl BoundaryTag {
    fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Bulk => "bulk",
            BoundaryTag::TimeStart => "start",
            BoundaryTag::TimeEnd => "end",
        }
    }
}

/// Time-translation equivalence class of a hyperedge.
///
/// The bundle holds the coordinate sets of the hyperedge's detectors, shifted
/// so that the earliest measurement sits at `t = 0`, then sorted. Ordering and
/// equality follow the serialized form, which makes parameter numbering
/// reproducible.
#[derive(Debug, Clone)]
pub struct ClassKey {
    tag: BoundaryTag,
    bundle: Vec<Vec<MeasCoord>>,
    repr: String,
}

impl ClassKey {
    pub fn new(tag: BoundaryTag, mut bundle: Vec<Vec<MeasCoord>>) -> Result<Self> {
        let min_t = bundle
            .iter()
            .flatten()
            .map(|c| c.t)
            .min()
            .ok_or_else(|| Error::Model("class key needs at least one coordinate".into()))?;
        for set in &mut bundle {
            for c in set.iter_mut() {
                c.t -= min_t;
            }
            set.sort();
        }
        bundle.sort();
        let repr = render(tag, &bundle);
        Ok(ClassKey { tag, bundle, repr })
    }

    pub fn tag(&self) -> BoundaryTag {
        self.tag
    }

    pub fn bundle(&self) -> &[Vec<MeasCoord>] {
        &self.bundle
    }

    /// Number of detectors touched by members of the class.
    pub fn degree(&self) -> usize {
        self.bundle.len()
    }

    pub fn as_str(&self) -> &str {
        &self.repr
    }
}

fn render(tag: BoundaryTag, bundle: &[Vec<MeasCoord>]) -> String {
    let dets: Vec<String> = bundle
        .iter()
        .map(|set| {
            set.iter()
                .map(|c| format!("{},{},{}", c.x, c.y, c.t))
                .collect::<Vec<_>>()
                .join(";")
        })
        .collect();
    format!("{}:{}", tag.as_str(), dets.join("|"))
}

impl PartialEq for ClassKey {
    fn eq(&self, other: &Self) -> bool {
        self.repr == other.repr
    }
}

impl Eq for ClassKey {}

impl PartialOrd for ClassKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ClassKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.repr.cmp(&other.repr)
    }
}

impl std::hash::Hash for ClassKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.repr.hash(state)
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.repr)
    }
}

impl FromStr for ClassKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Model(format!("malformed class key {s:?}"));
        let (tag, rest) = s.split_once(':').ok_or_else(bad)?;
        let tag = match tag {
            "bulk" => BoundaryTag::Bulk,
            "start" => BoundaryTag::TimeStart,
            "end" => BoundaryTag::TimeEnd,
            _ => return Err(bad()),
        };
        let mut bundle = Vec::new();
        for det in rest.split('|') {
            let mut set = Vec::new();
            for c in det.split(';') {
                let v: Vec<&str> = c.split(',').collect();
                if v.len() != 3 {
                    return Err(bad());
                }
                let x = v[0].parse().map_err(|_| bad())?;
                let y = v[1].parse().map_err(|_| bad())?;
                let t = v[2].parse().map_err(|_| bad())?;
                set.push(MeasCoord::new(x, y, t));
            }
            bundle.push(set);
        }
        let key = ClassKey::new(tag, bundle)?;
        if key.repr != s {
            return Err(bad());
        }
        Ok(key)
    }
}

/// Canonical time-invariant key of `edge`.
///
/// `t_max` is the last time coordinate of the circuit (the final readout).
/// Hyperedges touching `t = 0` are tagged [`BoundaryTag::TimeStart`], those
/// touching `t_max` [`BoundaryTag::TimeEnd`], the start tag taking precedence
/// for mechanisms spanning the whole duration.
pub fn canonical_key(edge: &Hyperedge, detectors: &[Detector], t_max: u32) -> Result<ClassKey> {
    let mut bundle = Vec::with_capacity(edge.detectors.len());
    for &d in &edge.detectors {
        let det = detectors
            .get(d)
            .ok_or_else(|| Error::Model(format!("hyperedge references unknown detector D{d}")))?;
        if det.coords.is_empty() {
            return Err(Error::Model(format!("detector D{d} has no coordinates")));
        }
        bundle.push(det.coords.clone());
    }
    let ts = || bundle.iter().flatten().map(|c| c.t);
    let tag = if ts().any(|t| t == 0) {
        BoundaryTag::TimeStart
    } else if ts().any(|t| t == t_max) {
        BoundaryTag::TimeEnd
    } else {
        BoundaryTag::Bulk
    };
    ClassKey::new(tag, bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(id: usize, coords: &[(i32, i32, u32)]) -> Detector {
        Detector::new(id, coords.iter().map(|&(x, y, t)| MeasCoord::new(x, y, t)).collect()).unwrap()
    }

    fn time_like(x: i32, t: u32) -> Vec<Detector> {
        vec![det(0, &[(x, 0, t), (x, 0, t + 1)]), det(1, &[(x, 0, t + 1), (x, 0, t + 2)])]
    }

    #[test]
    fn pure_translation_gives_equal_keys() {
        let e = Hyperedge::new(vec![0, 1], 0, 0.1);
        let a = canonical_key(&e, &time_like(3, 3), 10).unwrap();
        let b = canonical_key(&e, &time_like(3, 5), 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tag(), BoundaryTag::Bulk);
        assert_eq!(a.as_str(), "bulk:3,0,0;3,0,1|3,0,1;3,0,2");
    }

    #[test]
    fn boundary_contact_changes_key() {
        let e = Hyperedge::new(vec![0, 1], 0, 0.1);
        let start = canonical_key(&e, &time_like(3, 0), 10).unwrap();
        let bulk = canonical_key(&e, &time_like(3, 4), 10).unwrap();
        let end = canonical_key(&e, &time_like(3, 8), 10).unwrap();
        assert_eq!(start.tag(), BoundaryTag::TimeStart);
        assert_eq!(end.tag(), BoundaryTag::TimeEnd);
        assert_ne!(start, bulk);
        assert_ne!(end, bulk);
        assert_eq!(start.bundle(), bulk.bundle());
    }

    #[test]
    fn key_round_trips_through_text() {
        let e = Hyperedge::new(vec![0, 1], 0, 0.1);
        let k = canonical_key(&e, &time_like(-2, 4), 10).unwrap();
        let back: ClassKey = k.as_str().parse().unwrap();
        assert_eq!(back, k);
        assert!("nope".parse::<ClassKey>().is_err());
        assert!("bulk:1,0".parse::<ClassKey>().is_err());
        // not canonical: min t is 3
        assert!("bulk:1,0,3".parse::<ClassKey>().is_err());
    }

    #[test]
    fn missing_coordinates_are_rejected() {
        let dets = vec![Detector { id: 0, coords: vec![] }];
        let e = Hyperedge::new(vec![0], 0, 0.1);
        assert!(canonical_key(&e, &dets, 3).is_err());
        let e = Hyperedge::new(vec![4], 0, 0.1);
        assert!(canonical_key(&e, &dets, 3).is_err());
    }
}
