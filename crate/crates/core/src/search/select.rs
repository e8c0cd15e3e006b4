//! Two-stage load-balancing UCB descent.

use crate::tree::ScenarioTree;

/// UCB with the depth-alignment penalty. `q` is already normalised among the
/// tried siblings. Untried actions score `+inf`; an empty depth range (`lo > hi`)
/// makes a tried action ineligible (`-inf`). `d_ref = None` disables the penalty.
#[inline]
pub fn lb_ucb_score(q: f64, n_parent: u32, n_action: u32, ucb_c: f64, depth_range: (i32, i32), d_ref: Option<i32>, lambda: f64) -> f64 {
    if n_action == 0 {
        return f64::INFINITY;
    }
    let (lo, hi) = depth_range;
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    let ucb = q + ucb_c * ((n_parent as f64).ln() / n_action as f64).sqrt();
    match d_ref {
        Some(r) if lambda != 0.0 => ucb - lambda * (r.clamp(lo, hi) - r).abs() as f64,
        _ => ucb,
    }
}

/// Frontier node reached by one descent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selection {
    /// Edges from the root, the last one being the untried action to expand.
    pub path: Vec<(usize, usize)>,
}

impl Selection {
    pub fn node(&self) -> usize {
        self.path.last().map_or(0, |e| e.0)
    }

    pub fn action(&self) -> usize {
        self.path.last().map_or(0, |e| e.1)
    }

    /// Depth of the frontier node being expanded.
    pub fn depth(&self) -> usize {
        self.path.len() - 1
    }
}

/// Descends from the root until a node with an untried action. Returns
/// `false` when the tree has no frontier left.
pub fn descend(tree: &ScenarioTree, ucb_c: f64, d_ref: Option<i32>, lambda: f64, out: &mut Selection) -> bool {
    out.path.clear();
    let (lo, hi) = tree.depth_range(0);
    if lo > hi {
        return false;
    }
    let b = tree.branching();
    let mut v = 0;
    loop {
        if let Some(a) = tree.first_untried(v) {
            out.path.push((v, a));
            return true;
        }
        let visits = tree.visit_row(v);
        let q = tree.q_row(v);
        let n_parent: u32 = visits.iter().sum();
        let (mut qlo, mut qhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for a in 0..b {
            if visits[a] > 0 {
                qlo = qlo.min(q[a]);
                qhi = qhi.max(q[a]);
            }
        }
        let span = qhi - qlo;
        let mut best = f64::NEG_INFINITY;
        let mut pick = None;
        for a in 0..b {
            let c = tree.child(v, a).expect("descent stays above the horizon");
            let qn = if visits[a] > 0 && span > 0.0 { (q[a] - qlo) / span } else { 0.0 };
            let score = lb_ucb_score(qn, n_parent, visits[a], ucb_c, tree.depth_range(c), d_ref, lambda);
            if score > best {
                best = score;
                pick = Some((a, c));
            }
        }
        let Some((a, c)) = pick else {
            // unreachable while depth ranges are sound: a non-empty range has an eligible child
            out.path.clear();
            return false;
        };
        out.path.push((v, a));
        v = c;
    }
}

/// Majority depth; ties go to the smaller depth.
pub fn majority_depth(depths: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut counts: Vec<usize> = Vec::new();
    for d in depths {
        if counts.len() <= d {
            counts.resize(d + 1, 0);
        }
        counts[d] += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (d, &c) in counts.iter().enumerate() {
        if c > 0 && best.map_or(true, |(_, bc)| c > bc) {
            best = Some((d, c));
        }
    }
    best.map(|(d, _)| d)
}

/// Stage-one and final selections for one minibatch iteration.
#[derive(Clone, Debug, Default)]
pub struct MinibatchSelection {
    pub tentative: Vec<Option<Selection>>,
    pub selected: Vec<Option<Selection>>,
    pub reference_depth: Option<usize>,
}

impl MinibatchSelection {
    pub fn tentative_depths(&self) -> Vec<Option<usize>> {
        self.tentative.iter().map(|s| s.as_ref().map(Selection::depth)).collect()
    }

    pub fn selected_depths(&self) -> Vec<Option<usize>> {
        self.selected.iter().map(|s| s.as_ref().map(Selection::depth)).collect()
    }

    /// All trees are exhausted.
    pub fn is_complete(&self) -> bool {
        self.selected.iter().all(Option::is_none)
    }
}

/// Two-stage selection over a minibatch. With `load_balance` off, the
/// stage-one UCB choices are final.
pub fn traverse_select<'a>(
    trees: impl IntoIterator<Item = &'a ScenarioTree>,
    ucb_c: f64,
    lambda: f64,
    load_balance: bool,
    out: &mut MinibatchSelection,
) {
    let trees: Vec<&ScenarioTree> = trees.into_iter().collect();
    out.tentative.resize(trees.len(), None);
    out.selected.resize(trees.len(), None);
    for (slot, t) in out.tentative.iter_mut().zip(&trees) {
        let mut sel = slot.take().unwrap_or_default();
        *slot = descend(t, ucb_c, None, 0.0, &mut sel).then_some(sel);
    }
    out.reference_depth = majority_depth(out.tentative.iter().flatten().map(Selection::depth));
    for (i, t) in trees.iter().enumerate() {
        let mut sel = out.selected[i].take().unwrap_or_default();
        out.selected[i] = match (&out.tentative[i], load_balance) {
            (None, _) => None,
            (Some(s1), false) => {
                sel.path.clone_from(&s1.path);
                Some(sel)
            }
            (Some(_), true) => {
                let d_ref = out.reference_depth.map(|d| d as i32);
                descend(t, ucb_c, d_ref, lambda, &mut sel).then_some(sel)
            }
        };
    }
}
