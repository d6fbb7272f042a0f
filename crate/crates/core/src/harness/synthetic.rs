use super::FeatureTable;
use crate::error::{Error, Result};
use crate::geometry::{raw, Curvature};
use crate::math;
use crate::rng;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// A tree of class prototypes grown in the tangent space at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTreeSpec {
    /// Children per node, root level first.
    pub branching: Vec<usize>,
    /// Number of leaves kept (depth-first order); each leaf is a class.
    pub leaves: usize,
    pub samples_per_class: usize,
    /// Expected norm of the tangent step from a node to each child.
    pub class_spread: f64,
    /// Expected norm of a sample's tangent offset from its prototype.
    pub within_spread: f64,
    pub dim: usize,
    pub curvature: f64,
    pub seed: u64,
}

impl Default for SyntheticTreeSpec {
    fn default() -> Self {
        Self {
            branching: vec![2, 4],
            leaves: 8,
            samples_per_class: 20,
            class_spread: 0.3,
            within_spread: 0.6,
            dim: 16,
            curvature: -1.0,
            seed: 0,
        }
    }
}

impl SyntheticTreeSpec {
    /// Balanced tree with `leaves` classes below `groups` parents.
    pub fn with_groups(leaves: usize, groups: usize) -> Self {
        let per = leaves.div_ceil(groups.max(1)).max(1);
        Self {
            branching: vec![groups.max(1), per],
            leaves,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> usize {
        self.branching.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} must be positive")));
        if self.branching.is_empty() || self.branching.contains(&0) {
            return bad("branching");
        }
        if self.leaves == 0 {
            return bad("leaves");
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class");
        }
        if self.dim == 0 {
            return bad("dim");
        }
        if !(self.class_spread >= 0.0 && self.class_spread.is_finite()) {
            return bad("class_spread");
        }
        if !(self.within_spread >= 0.0 && self.within_spread.is_finite()) {
            return bad("within_spread");
        }
        Curvature::new(self.curvature)?;
        if self.leaves > self.capacity() {
            return Err(Error::InvalidParameter(format!(
                "{} leaves requested but the tree has {}",
                self.leaves,
                self.capacity()
            )));
        }
        Ok(())
    }
}

/// Sample the prototype tree, then `samples_per_class` wrapped-normal draws
/// (zero mean, isotropic scale) around each leaf. Rows hold tangent images
/// at the origin, grouped by class; labels are `c0`, `c1`, ... in leaf order.
pub fn generate_tree_data(spec: &SyntheticTreeSpec) -> Result<FeatureTable> {
    spec.validate()?;
    let c = spec.curvature;
    let d = spec.dim;
    let unit = 1.0 / math::sqrt(d as f64);
    let mut r = rng::seeded(spec.seed);
    let mut level = vec![vec![0.0; d]];
    for &b in &spec.branching {
        let mut next = Vec::with_capacity(level.len() * b);
        for parent in &level {
            for _ in 0..b {
                let step = rng::standard_normal(&mut r, d);
                next.push(
                    parent
                        .iter()
                        .zip(step)
                        .map(|(p, e)| p + spec.class_spread * unit * e)
                        .collect::<Vec<f64>>(),
                );
            }
        }
        level = next;
    }
    let mut rows = Vec::with_capacity(spec.leaves * spec.samples_per_class);
    for (i, u) in level.iter().take(spec.leaves).enumerate() {
        let p = raw::expm0(u, c);
        let label = format!("c{i}");
        for _ in 0..spec.samples_per_class {
            let v: Vec<f64> = rng::standard_normal(&mut r, d)
                .into_iter()
                .map(|e| spec.within_spread * unit * e)
                .collect();
            let x = raw::expm(&p, &raw::transport_from_origin(&p, &v, c), c);
            rows.push((label.clone(), raw::logm0(&x, c)));
        }
    }
    Ok(FeatureTable::new(d, rows)?.with_curvature(Some(c)))
}
