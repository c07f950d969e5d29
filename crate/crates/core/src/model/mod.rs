//! Hypergraph error models, time-invariant equivalence classes and the
//! binding between parameter vectors and hyperedge probabilities.

mod classes;
mod dem;
mod format;
mod params;

pub use classes::{canonical_key, BoundaryTag, ClassKey};
pub use dem::{merge_prob, Dem, Detector, Hyperedge, MeasCoord};
pub(crate) use dem::xor_prob;
pub use format::fmt_f64;
pub use params::{build_parametrization, instantiate, Binding, Parametrization, P_MAX, P_MIN};

use crate::{Error, Result};

/// Cosine of the angle between two parameter means.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("lengths {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
