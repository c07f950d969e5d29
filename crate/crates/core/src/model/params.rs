use std::collections::{BTreeMap, BTreeSet};

use super::classes::{canonical_key, ClassKey};
use super::dem::Dem;
use crate::{Error, Result};

/// Smallest probability written into an instantiated model.
pub const P_MIN: f64 = 1e-12;
/// Largest probability written into an instantiated model.
pub const P_MAX: f64 = 0.49;

/// Map from a model's hyperedges to parameter indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    params: Vec<usize>,
    num_params: usize,
}

impl Binding {
    /// Parameter index of each hyperedge, in hyperedge order.
    pub fn params(&self) -> &[usize] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// Sorted, duplicate-free parameter indices used by the model.
    pub fn support(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.params.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// Shared parameter vector over time-translation classes, with the
/// agent-to-parameter sparsity matrix of the models it was built from.
#[derive(Debug, Clone)]
pub struct Parametrization {
    classes: Vec<ClassKey>,
    index: BTreeMap<ClassKey, usize>,
    sparsity: Vec<Vec<bool>>,
    bindings: Vec<Binding>,
}

/// Collects the union of classes over `dems` (one agent per model).
///
/// Parameters are numbered in the lexicographic order of the serialized keys.
pub fn build_parametrization(dems: &[&Dem]) -> Result<Parametrization> {
    if dems.is_empty() {
        return Err(Error::InvalidArgument("parametrization needs at least one model".into()));
    }
    let mut per_dem_keys = Vec::with_capacity(dems.len());
    let mut all = BTreeSet::new();
    for dem in dems {
        if !dem.has_coordinates() {
            return Err(Error::Model("model is missing detector coordinates".into()));
        }
        let keys = edge_keys(dem)?;
        all.extend(keys.iter().cloned());
        per_dem_keys.push(keys);
    }
    let classes: Vec<ClassKey> = all.into_iter().collect();
    let index: BTreeMap<ClassKey, usize> =
        classes.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let num_params = classes.len();
    let mut sparsity = Vec::with_capacity(dems.len());
    let mut bindings = Vec::with_capacity(dems.len());
    for keys in per_dem_keys {
        let params: Vec<usize> = keys.iter().map(|k| index[k]).collect();
        let mut row = vec![false; num_params];
        for &p in &params {
            row[p] = true;
        }
        sparsity.push(row);
        bindings.push(Binding { params, num_params });
    }
    Ok(Parametrization { classes, index, sparsity, bindings })
}

fn edge_keys(dem: &Dem) -> Result<Vec<ClassKey>> {
    let t_max = dem.t_max();
    dem.hyperedges()
        .iter()
        .map(|e| canonical_key(e, dem.detectors(), t_max))
        .collect()
}

impl Parametrization {
    pub fn num_params(&self) -> usize {
        self.classes.len()
    }

    pub fn num_agents(&self) -> usize {
        self.sparsity.len()
    }

    pub fn classes(&self) -> &[ClassKey] {
        &self.classes
    }

    pub fn index_of(&self, key: &ClassKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Row `a` is true at `j` iff agent `a`'s model has a hyperedge in class `j`.
    pub fn sparsity(&self) -> &[Vec<bool>] {
        &self.sparsity
    }

    /// Binding of the `a`-th model passed to [`build_parametrization`].
    pub fn binding(&self, agent: usize) -> &Binding {
        &self.bindings[agent]
    }

    /// Binds another model to these classes; fails if a class is missing.
    pub fn bind(&self, dem: &Dem) -> Result<Binding> {
        let keys = edge_keys(dem)?;
        let mut params = Vec::with_capacity(keys.len());
        for k in keys {
            let j = self
                .index_of(&k)
                .ok_or_else(|| Error::Model(format!("class {k} is not parametrized")))?;
            params.push(j);
        }
        Ok(Binding { params, num_params: self.num_params() })
    }

    /// Class keys of `dem` that have no parameter here.
    pub fn missing_classes(&self, dem: &Dem) -> Result<Vec<ClassKey>> {
        let keys: BTreeSet<ClassKey> = edge_keys(dem)?.into_iter().collect();
        Ok(keys.into_iter().filter(|k| !self.index.contains_key(k)).collect())
    }

    /// Average number of agents sharing each parameter.
    pub fn mean_parameter_degree(&self) -> f64 {
        let total: usize = self.sparsity.iter().map(|r| r.iter().filter(|&&b| b).count()).sum();
        total as f64 / self.num_params().max(1) as f64
    }
}

/// Writes `clamp(10^theta[j], P_MIN, P_MAX)` into every hyperedge bound to `j`.
pub fn instantiate(template: &Dem, binding: &Binding, theta: &[f64]) -> Result<Dem> {
    if theta.len() != binding.num_params() {
        return Err(Error::Dimension(format!(
            "theta has {} entries, parametrization has {}",
            theta.len(),
            binding.num_params()
        )));
    }
    if binding.params().len() != template.hyperedges().len() {
        return Err(Error::Dimension("binding does not belong to this model".into()));
    }
    let probs: Vec<f64> = binding
        .params()
        .iter()
        .map(|&j| {
            let v = theta[j];
            if v.is_nan() {
                Err(Error::Numerical(format!("theta[{j}] is NaN")))
            } else {
                Ok(10f64.powf(v).clamp(P_MIN, P_MAX))
            }
        })
        .collect::<Result<_>>()?;
    template.with_probabilities(&probs)
}
