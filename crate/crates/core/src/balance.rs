//! Tomek-link undersampling of the training split.

use serde::Serialize;

use crate::modality::{Dataset, Split};
use crate::par::Exec;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest neighbour of `i` among `alive`, ties to the lowest index.
fn nearest(points: &[&[f64]], alive: &[bool], i: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (j, p) in points.iter().enumerate() {
        if j == i || !alive[j] {
            continue;
        }
        let d = sq_dist(points[i], p);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, j));
        }
    }
    best.map(|(_, j)| j)
}

fn links_from(nn: &[Option<usize>], labels: &[usize], alive: &[bool]) -> Vec<(usize, usize)> {
    (0..nn.len())
        .filter(|&i| alive[i])
        .filter_map(|i| {
            let j = nn[i]?;
            (i < j && nn[j] == Some(i) && labels[i] != labels[j]).then_some((i, j))
        })
        .collect()
}

/// Mutual nearest-neighbour pairs with different labels, each as `(i, j)`
/// with `i < j`, sorted.
pub fn find_tomek_links(points: &[&[f64]], labels: &[usize], exec: Exec) -> Vec<(usize, usize)> {
    assert_eq!(points.len(), labels.len(), "one label per point");
    let alive = vec![true; points.len()];
    let nn = exec.map_range(points.len(), |i| nearest(points, &alive, i));
    links_from(&nn, labels, &alive)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UndersampleResult {
    /// Indices kept, ascending.
    pub kept: Vec<usize>,
    /// Indices removed, in removal order.
    pub removed: Vec<usize>,
    pub majority: Option<usize>,
    /// Removed count per class label.
    pub removed_per_class: Vec<usize>,
    pub rounds: usize,
}

/// Repeatedly remove the majority-class member of every Tomek link until
/// no removable link remains. The majority class is never reduced below the
/// size of the next largest class.
pub fn undersample(points: &[&[f64]], labels: &[usize], exec: Exec) -> UndersampleResult {
    let n = points.len();
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_labels];
    for &l in labels {
        counts[l] += 1;
    }
    let majority = (0..n_labels).max_by_key(|&c| (counts[c], std::cmp::Reverse(c)));
    let floor = majority.map_or(0, |m| {
        (0..n_labels).filter(|&c| c != m).map(|c| counts[c]).max().unwrap_or(0)
    });
    let mut result = UndersampleResult {
        kept: Vec::new(),
        removed: Vec::new(),
        majority,
        removed_per_class: vec![0; n_labels],
        rounds: 0,
    };
    let mut alive = vec![true; n];
    if let Some(maj) = majority.filter(|_| n >= 2 && floor > 0) {
        let mut nn = exec.map_range(n, |i| nearest(points, &alive, i));
        let mut maj_count = counts[maj];
        loop {
            let mut dropped = Vec::new();
            for (i, j) in links_from(&nn, labels, &alive) {
                if maj_count <= floor {
                    break;
                }
                let victim = if labels[i] == maj {
                    i
                } else if labels[j] == maj {
                    j
                } else {
                    continue;
                };
                dropped.push(victim);
                maj_count -= 1;
            }
            if dropped.is_empty() {
                break;
            }
            result.rounds += 1;
            for &d in &dropped {
                alive[d] = false;
                result.removed.push(d);
                result.removed_per_class[maj] += 1;
            }
            // Only points whose neighbour vanished can have a new one.
            let stale: Vec<usize> = (0..n)
                .filter(|&i| alive[i] && nn[i].is_some_and(|j| !alive[j]))
                .collect();
            let fresh = exec.map(&stale, |&i| nearest(points, &alive, i));
            for (i, f) in stale.into_iter().zip(fresh) {
                nn[i] = f;
            }
        }
    }
    result.kept = (0..n).filter(|&i| alive[i]).collect();
    result
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub before_per_class: Vec<usize>,
    pub removed_per_class: Vec<usize>,
    pub after_per_class: Vec<usize>,
    pub rounds: usize,
}

/// Undersample the training split of `ds` using each sample's own event
/// vector. Removed samples are marked [`Split::Dropped`].
pub fn balance_dataset(ds: &mut Dataset, n_classes: usize, exec: Exec) -> BalanceReport {
    let train = ds.indices(Split::Train);
    let labels: Vec<usize> = train.iter().map(|&i| ds.samples[i].label(n_classes)).collect();
    let points: Vec<&[f64]> = train
        .iter()
        .map(|&i| ds.events.row(ds.samples[i].event))
        .collect();
    let res = undersample(&points, &labels, exec);
    for &r in &res.removed {
        ds.samples[train[r]].split = Split::Dropped;
    }
    let mut before = vec![0; n_classes];
    for &l in &labels {
        before[l] += 1;
    }
    let mut removed = vec![0; n_classes];
    for (c, &r) in res.removed_per_class.iter().enumerate() {
        removed[c] = r;
    }
    let after = before.iter().zip(&removed).map(|(b, r)| b - r).collect();
    BalanceReport {
        before_per_class: before,
        removed_per_class: removed,
        after_per_class: after,
        rounds: res.rounds,
    }
}
