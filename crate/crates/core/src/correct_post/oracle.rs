//! Brute-force grid search over every group's (p0, p1), used to check the exact solver.
//!
//! Grid points of each group are bucketed by the cell of width `step` their mixed
//! (tpr, fpr) falls in, keeping the cheapest point per cell. A joint solution picks, for a
//! common 2x2 block of cells, the cheapest point of every group inside the block, so the
//! selected rates agree across groups to within two grid steps.

use std::collections::BTreeMap;

use super::{mixed, rates, validate, MixingOptions, MixingPolicy, RateConstraint, SolveMethod};
use crate::confusion::GroupTables;
use crate::error::{Error, Result};
use crate::par::Execution;

const STRIPE: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Best {
    cost: f64,
    i0: u32,
    i1: u32,
}

const EMPTY: Best = Best {
    cost: f64::INFINITY,
    i0: 0,
    i1: 0,
};

fn bucket(x: f64, m: usize) -> usize {
    ((x * m as f64 + 1e-9).floor().max(0.0) as usize).min(m)
}

/// Cheapest grid point per (tpr cell, fpr cell) for one group, laid out row-major by tpr cell.
fn fill_group(
    m: usize,
    tpr: f64,
    fpr: f64,
    cost: impl Fn(f64, f64) -> f64 + Sync + Send,
    exec: Execution,
) -> Vec<Best> {
    let side = m + 1;
    let mut cells = vec![EMPTY; side * side];
    let step = 1.0 / m as f64;
    exec.for_each_chunk(&mut cells, STRIPE * side, |k, chunk| {
        let lo = k * STRIPE;
        let hi = lo + chunk.len() / side;
        for i1 in 0..=m {
            let p1 = i1 as f64 * step;
            // mixed tpr is non-decreasing in p0, so the points of this stripe form a run
            let t_bucket = |i0: usize| bucket(mixed(i0 as f64 * step, p1, tpr), m);
            let start = partition_point(side, |i0| t_bucket(i0) < lo);
            let end = partition_point(side, |i0| t_bucket(i0) < hi);
            for i0 in start..end {
                let p0 = i0 as f64 * step;
                let t = mixed(p0, p1, tpr);
                let f = mixed(p0, p1, fpr);
                let c = cost(t, f);
                let slot = &mut chunk[(bucket(t, m) - lo) * side + bucket(f, m)];
                if c < slot.cost {
                    *slot = Best {
                        cost: c,
                        i0: i0 as u32,
                        i1: i1 as u32,
                    };
                }
            }
        }
    });
    cells
}

fn partition_point(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn min_best(items: impl Iterator<Item = Best>) -> Best {
    items.fold(EMPTY, |acc, b| if b.cost < acc.cost { b } else { acc })
}

/// Equalized-odds grid oracle with symmetric costs.
pub fn mixing_oracle(tables: &GroupTables, grid_step: f64) -> Result<MixingPolicy> {
    mixing_oracle_with(tables, grid_step, &MixingOptions::new(0.0), Execution::default())
}

/// Grid oracle honouring the constraint kind and costs in `options`. Its rate tolerance is
/// fixed by the grid (agreement within `2 * grid_step`) and `options.tolerance` is not used.
pub fn mixing_oracle_with(
    tables: &GroupTables,
    grid_step: f64,
    options: &MixingOptions,
    exec: Execution,
) -> Result<MixingPolicy> {
    validate(tables, options)?;
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidParameter(format!(
            "grid step must lie in (0, 0.1], got {grid_step}"
        )));
    }
    let m = (1.0 / grid_step).round() as usize;
    if ((m as f64) * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid step {grid_step} does not divide 1"
        )));
    }
    let side = m + 1;
    let total: f64 = tables.values().map(|t| t.n()).sum();
    let costs = options.costs;

    let grids: Vec<Vec<Best>> = tables
        .values()
        .map(|t| {
            let (tpr, fpr) = rates(t);
            let (pos, neg) = (t.positives(), t.negatives());
            let cost = move |tt: f64, ff: f64| {
                (costs.fn_cost * pos * (1.0 - tt) + costs.fp_cost * neg * ff) / total
            };
            fill_group(m, tpr, fpr, cost, exec)
        })
        .collect();

    // per group, per centre cell: cheapest point in the block
    let block = |g: &[Best], ct: usize, cf: usize| -> Best {
        let ts = [ct, (ct + 1).min(m)];
        match options.constraint {
            RateConstraint::EqualizedOdds => {
                let fs = [cf, (cf + 1).min(m)];
                min_best(ts.iter().flat_map(|&t| fs.iter().map(move |&f| g[t * side + f])))
            }
            RateConstraint::EqualOpportunity => {
                min_best(ts.iter().flat_map(|&t| g[t * side..(t + 1) * side].iter().copied()))
            }
        }
    };
    let f_centres = match options.constraint {
        RateConstraint::EqualizedOdds => side,
        RateConstraint::EqualOpportunity => 1,
    };
    let row_best: Vec<Option<(f64, usize, usize)>> = exec.map_range(0..side, |ct| {
        let mut best: Option<(f64, usize, usize)> = None;
        for cf in 0..f_centres {
            let sum: f64 = grids.iter().map(|g| block(g, ct, cf).cost).sum();
            if sum.is_finite() && best.is_none_or(|(b, _, _)| sum < b) {
                best = Some((sum, ct, cf));
            }
        }
        best
    });
    let (_, ct, cf) = row_best
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, usize, usize)>, r| match acc {
            Some(a) if a.0 <= r.0 => Some(a),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Infeasible("grid oracle found no common rate cell".into()))?;

    let probs: BTreeMap<String, (f64, f64)> = tables
        .keys()
        .zip(&grids)
        .map(|(name, g)| {
            let b = block(g, ct, cf);
            (name.clone(), (b.i0 as f64 / m as f64, b.i1 as f64 / m as f64))
        })
        .collect();
    let reported = MixingOptions {
        tolerance: 2.0 * grid_step,
        ..*options
    };
    let mut policy = MixingPolicy::from_probabilities(tables, &probs, &reported)?;
    policy.method = SolveMethod::Grid;
    Ok(policy)
}
