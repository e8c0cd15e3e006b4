//! Flat, pre-allocated scenario trees.
//!
//! A tree of depth `H` over `b` actions holds every node of the complete
//! `b`-ary tree in level order, so node `v`'s `i`-th child (1-based) sits at
//! `b * v + i` and no pointers are stored. Statistics live in parallel arrays;
//! per-(node, action) rows are laid out node-major.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::dynamics::EgoState;

/// `sum_{d=0}^{depth} branching^d`, guarded against the `u32` index range.
pub fn tree_capacity(depth: usize, branching: usize) -> Result<usize> {
    if branching == 0 {
        return Err(Error::InvalidConfig("branching must be at least 1".into()));
    }
    let overflow = || Error::CapacityOverflow { depth, branching };
    let mut total: usize = 0;
    let mut level: usize = 1;
    for d in 0..=depth {
        total = total.checked_add(level).ok_or_else(overflow)?;
        if d < depth {
            level = level.checked_mul(branching).ok_or_else(overflow)?;
        }
    }
    if total > u32::MAX as usize || total.checked_mul(branching).is_none() {
        return Err(overflow());
    }
    Ok(total)
}

/// Index of child `i` (1-based) of node `v`.
#[inline]
pub fn child_index(v: usize, i: usize, branching: usize, capacity: usize) -> Result<usize> {
    debug_assert!(i >= 1 && i <= branching);
    let c = branching
        .checked_mul(v)
        .and_then(|x| x.checked_add(i))
        .ok_or(Error::DepthOverflow { node: v, action: i })?;
    if c >= capacity {
        return Err(Error::DepthOverflow { node: v, action: i });
    }
    Ok(c)
}

/// Edges credited for expanding a node at depth `d`: the expansion plus its rollout.
#[inline]
pub fn edge_contribution(d: usize, depth: usize) -> usize {
    depth - d
}

#[derive(Clone, Debug)]
pub struct ScenarioTree {
    depth_limit: usize,
    branching: usize,
    capacity: usize,
    q: Vec<f64>,
    visits: Vec<u32>,
    best: Vec<f64>,
    reward: Vec<f64>,
    expanded: Vec<bool>,
    terminal: Vec<bool>,
    depth: Vec<u8>,
    ego_x: Vec<f64>,
    ego_y: Vec<f64>,
    ego_heading: Vec<f64>,
    ego_speed: Vec<f64>,
    d_min: Vec<i32>,
    d_max: Vec<i32>,
    touched: Vec<u32>,
}

impl ScenarioTree {
    pub fn allocate(depth_limit: usize, branching: usize) -> Result<Self> {
        let capacity = tree_capacity(depth_limit, branching)?;
        if depth_limit > u8::MAX as usize {
            return Err(Error::CapacityOverflow { depth: depth_limit, branching });
        }
        let mut depth = Vec::with_capacity(capacity);
        let mut level = 1usize;
        for d in 0..=depth_limit {
            depth.extend(std::iter::repeat(d as u8).take(level));
            level *= branching;
        }
        let mut t = Self {
            depth_limit,
            branching,
            capacity,
            q: vec![0.0; capacity * branching],
            visits: vec![0; capacity * branching],
            best: vec![f64::NEG_INFINITY; capacity * branching],
            reward: vec![0.0; capacity],
            expanded: vec![false; capacity],
            terminal: vec![false; capacity],
            depth,
            ego_x: vec![0.0; capacity],
            ego_y: vec![0.0; capacity],
            ego_heading: vec![0.0; capacity],
            ego_speed: vec![0.0; capacity],
            d_min: vec![0; capacity],
            d_max: vec![0; capacity],
            touched: Vec::new(),
        };
        let (lo, hi) = t.empty_range();
        t.d_min.fill(lo);
        t.d_max.fill(hi);
        t.touched.push(0);
        t.reset();
        Ok(t)
    }

    /// Restores the freshly-allocated state without reallocating. Only nodes
    /// materialised since the last reset are cleared.
    pub fn reset(&mut self) {
        let (lo, hi) = self.empty_range();
        let b = self.branching;
        for &v in &self.touched {
            let v = v as usize;
            self.q[v * b..(v + 1) * b].fill(0.0);
            self.visits[v * b..(v + 1) * b].fill(0);
            self.best[v * b..(v + 1) * b].fill(f64::NEG_INFINITY);
            self.reward[v] = 0.0;
            self.expanded[v] = false;
            self.terminal[v] = false;
            self.ego_x[v] = 0.0;
            self.ego_y[v] = 0.0;
            self.ego_heading[v] = 0.0;
            self.ego_speed[v] = 0.0;
            self.d_min[v] = lo;
            self.d_max[v] = hi;
        }
        self.touched.clear();
        self.touched.push(0);
        self.expanded[0] = true;
        self.update_depth_range(0);
    }

    /// Number of materialised nodes, root included.
    pub fn node_count(&self) -> usize {
        self.touched.len()
    }

    pub fn set_root(&mut self, ego: &EgoState) {
        self.store_ego(0, ego);
    }

    pub fn empty_range(&self) -> (i32, i32) {
        (self.depth_limit as i32 + 1, -1)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth_limit(&self) -> usize {
        self.depth_limit
    }

    /// Child reached by 0-based action `a`.
    #[inline]
    pub fn child(&self, v: usize, a: usize) -> Result<usize> {
        child_index(v, a + 1, self.branching, self.capacity)
    }

    #[inline]
    fn child_unchecked(&self, v: usize, a: usize) -> usize {
        self.branching * v + a + 1
    }

    #[inline]
    pub fn depth(&self, v: usize) -> usize {
        self.depth[v] as usize
    }

    #[inline]
    pub fn is_expanded(&self, v: usize) -> bool {
        self.expanded[v]
    }

    #[inline]
    pub fn is_terminal(&self, v: usize) -> bool {
        self.terminal[v]
    }

    #[inline]
    pub fn reward(&self, v: usize) -> f64 {
        self.reward[v]
    }

    #[inline]
    pub fn q(&self, v: usize, a: usize) -> f64 {
        self.q[v * self.branching + a]
    }

    #[inline]
    pub fn visits(&self, v: usize, a: usize) -> u32 {
        self.visits[v * self.branching + a]
    }

    /// Largest discounted return observed through `(v, a)`.
    #[inline]
    pub fn best_return(&self, v: usize, a: usize) -> f64 {
        self.best[v * self.branching + a]
    }

    pub fn q_row(&self, v: usize) -> &[f64] {
        &self.q[v * self.branching..(v + 1) * self.branching]
    }

    pub fn visit_row(&self, v: usize) -> &[u32] {
        &self.visits[v * self.branching..(v + 1) * self.branching]
    }

    #[inline]
    pub fn depth_range(&self, v: usize) -> (i32, i32) {
        (self.d_min[v], self.d_max[v])
    }

    #[inline]
    pub fn ego(&self, v: usize) -> EgoState {
        EgoState { x: self.ego_x[v], y: self.ego_y[v], heading: self.ego_heading[v], speed: self.ego_speed[v] }
    }

    fn store_ego(&mut self, v: usize, e: &EgoState) {
        self.ego_x[v] = e.x;
        self.ego_y[v] = e.y;
        self.ego_heading[v] = e.heading;
        self.ego_speed[v] = e.speed;
    }

    /// Lowest untried action of an expandable node.
    #[inline]
    pub fn first_untried(&self, v: usize) -> Option<usize> {
        if !self.expanded[v] || self.terminal[v] || self.depth(v) >= self.depth_limit {
            return None;
        }
        (0..self.branching).find(|&a| !self.expanded[self.child_unchecked(v, a)])
    }

    /// Visited, non-terminal, below the horizon, with an untried action.
    #[inline]
    pub fn is_frontier(&self, v: usize) -> bool {
        self.first_untried(v).is_some()
    }

    /// Recomputes `v`'s depth range from its own frontier status and its
    /// children; reports whether it changed.
    pub fn update_depth_range(&mut self, v: usize) -> bool {
        let (mut lo, mut hi) = self.empty_range();
        if self.is_frontier(v) {
            lo = self.depth[v] as i32;
            hi = lo;
        }
        if self.depth(v) < self.depth_limit {
            for a in 0..self.branching {
                let c = self.child_unchecked(v, a);
                lo = lo.min(self.d_min[c]);
                hi = hi.max(self.d_max[c]);
            }
        }
        let changed = (lo, hi) != (self.d_min[v], self.d_max[v]);
        self.d_min[v] = lo;
        self.d_max[v] = hi;
        changed
    }

    /// Materialises child `a` of `v` with its cached ego state, immediate reward
    /// and terminal flag.
    pub fn write_child(&mut self, v: usize, a: usize, ego: &EgoState, reward: f64, terminal: bool) -> Result<usize> {
        let c = self.child(v, a)?;
        debug_assert!(!self.expanded[c] && !self.terminal[v]);
        self.expanded[c] = true;
        self.touched.push(c as u32);
        self.terminal[c] = terminal;
        self.reward[c] = reward;
        self.store_ego(c, ego);
        self.update_depth_range(c);
        Ok(c)
    }

    /// Credits `leaf_return` (the value after the last edge of `path`) back to
    /// the root, then refreshes depth ranges bottom-up until one is unchanged.
    pub fn backup(&mut self, path: &[(usize, usize)], leaf_return: f64, discount: f64) {
        let mut g = leaf_return;
        for &(v, a) in path.iter().rev() {
            let c = self.child_unchecked(v, a);
            g = self.reward[c] + discount * g;
            let k = v * self.branching + a;
            self.visits[k] += 1;
            self.q[k] += (g - self.q[k]) / self.visits[k] as f64;
            if g > self.best[k] {
                self.best[k] = g;
            }
        }
        for &(v, _) in path.iter().rev() {
            if !self.update_depth_range(v) {
                break;
            }
        }
    }

    /// Action with the highest best return at `v`; ties go to the lowest index.
    pub fn best_action(&self, v: usize) -> Option<usize> {
        let mut out: Option<(usize, f64)> = None;
        for a in 0..self.branching {
            if self.visits(v, a) == 0 {
                continue;
            }
            let b = self.best_return(v, a);
            if out.map_or(true, |(_, ob)| b > ob) {
                out = Some((a, b));
            }
        }
        out.map(|(a, _)| a)
    }

    /// Materialised nodes in level order.
    pub fn expanded_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let mut v: Vec<usize> = self.touched.iter().map(|&v| v as usize).collect();
        v.sort_unstable();
        v.into_iter()
    }

    /// Text dump of every materialised node, one per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for v in self.expanded_nodes() {
            let (lo, hi) = self.depth_range(v);
            let _ = write!(s, "{v} d={} {}{} r={:.6} q=[", self.depth(v), if self.expanded[v] { 'E' } else { '-' }, if self.terminal[v] { 'T' } else { '-' }, self.reward[v]);
            for (i, q) in self.q_row(v).iter().enumerate() {
                let _ = write!(s, "{}{q:.6}", if i > 0 { "," } else { "" });
            }
            s.push_str("] n=[");
            for (i, n) in self.visit_row(v).iter().enumerate() {
                let _ = write!(s, "{}{n}", if i > 0 { "," } else { "" });
            }
            let _ = writeln!(s, "] D=[{lo},{hi}]");
        }
        s
    }
}
