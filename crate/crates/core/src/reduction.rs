//! Greedy pairwise mixture reduction with the Runnalls merge cost.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};
use crate::linalg::ln_det_spd;
use crate::mixture::{GaussianComponent, GaussianMixture};

/// Moment-matched merge of two components.
pub fn merge_pair(a: &GaussianComponent, b: &GaussianComponent) -> Result<GaussianComponent> {
    if a.dim() != b.dim() {
        return Err(invalid("cannot merge components of different dimension"));
    }
    let w = a.weight() + b.weight();
    if !(w > 0.0) {
        return Err(invalid("cannot merge two zero-weight components"));
    }
    let (wa, wb) = (a.weight() / w, b.weight() / w);
    let mean = a.mean() * wa + b.mean() * wb;
    let da = a.mean() - &mean;
    let db = b.mean() - &mean;
    let cov = (a.cov() + &da * da.transpose()) * wa + (b.cov() + &db * db.transpose()) * wb;
    GaussianComponent::new(w, mean, cov)
}

fn cost_with(a: &GaussianComponent, b: &GaussianComponent, ln_det_a: f64, ln_det_b: f64) -> Result<f64> {
    let merged = merge_pair(a, b)?;
    let ln_det_m = ln_det_spd(merged.cov())?;
    let cost = 0.5 * (merged.weight() * ln_det_m - a.weight() * ln_det_a - b.weight() * ln_det_b);
    Ok(cost.max(0.0))
}

/// Upper bound on the KL divergence caused by merging `a` and `b`:
/// `½[(ωa+ωb) ln det C − ωa ln det Ca − ωb ln det Cb]`.
pub fn merge_cost(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    cost_with(a, b, ln_det_spd(a.cov())?, ln_det_spd(b.cov())?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cost: f64,
    i: usize,
    j: usize,
    version_i: u32,
    version_j: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.i.cmp(&other.i))
            .then(self.j.cmp(&other.j))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Merges the cheapest pair until at most `target` components remain.
///
/// The merged component takes the slot of the lower index; the relative order
/// of surviving components is kept.
pub fn reduce(m: &GaussianMixture, target: usize) -> Result<GaussianMixture> {
    if target < 1 {
        return Err(invalid("reduction target must be at least 1"));
    }
    if m.len() <= target {
        return Ok(m.clone());
    }
    let mut slots: Vec<Option<(GaussianComponent, f64)>> = m
        .components()
        .iter()
        .map(|c| Ok(Some((c.clone(), ln_det_spd(c.cov())?))))
        .collect::<Result<_>>()?;
    let mut versions = vec![0u32; slots.len()];
    let mut heap = BinaryHeap::with_capacity(slots.len() * slots.len() / 2);
    for i in 0..slots.len() {
        for j in i + 1..slots.len() {
            let (a, la) = slots[i].as_ref().expect("fresh slot");
            let (b, lb) = slots[j].as_ref().expect("fresh slot");
            heap.push(Reverse(Candidate {
                cost: cost_with(a, b, *la, *lb)?,
                i,
                j,
                version_i: 0,
                version_j: 0,
            }));
        }
    }

    let mut alive = slots.len();
    while alive > target {
        let Reverse(best) = heap.pop().expect("a live pair exists while more than one component remains");
        if versions[best.i] != best.version_i
            || versions[best.j] != best.version_j
            || slots[best.i].is_none()
            || slots[best.j].is_none()
        {
            continue;
        }
        let (b, _) = slots[best.j].take().expect("checked");
        let (a, _) = slots[best.i].take().expect("checked");
        let merged = merge_pair(&a, &b)?;
        let ln_det = ln_det_spd(merged.cov())?;
        versions[best.i] += 1;
        versions[best.j] += 1;
        alive -= 1;
        for k in 0..slots.len() {
            if k == best.i {
                continue;
            }
            if let Some((c, lc)) = &slots[k] {
                let (i, j) = if k < best.i { (k, best.i) } else { (best.i, k) };
                heap.push(Reverse(Candidate {
                    cost: cost_with(&merged, c, ln_det, *lc)?,
                    i,
                    j,
                    version_i: versions[i],
                    version_j: versions[j],
                }));
            }
        }
        slots[best.i] = Some((merged, ln_det));
    }
    GaussianMixture::new(slots.into_iter().flatten().map(|(c, _)| c).collect())
}
