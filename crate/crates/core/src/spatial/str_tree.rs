//! Sort-Tile-Recursive packed R-tree over Frenet AABBs.
//!
//! Nodes live in flat parallel arrays laid out top-down, root first. The
//! children of a node are contiguous, so an internal node only stores the
//! index of its first child and a count. Leaves point into a separate item
//! array holding the payload boxes in packing order.

use crate::spatial::aabb::Aabb;

/// Width of the masked child-box batch used while descending.
pub const QUERY_LANES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct StrTree {
    branching: usize,
    leaf_capacity: usize,
    node_min_s: Vec<f64>,
    node_max_s: Vec<f64>,
    node_min_d: Vec<f64>,
    node_max_d: Vec<f64>,
    first_child: Vec<u32>,
    child_count: Vec<u32>,
    leaf: Vec<bool>,
    item_min_s: Vec<f64>,
    item_max_s: Vec<f64>,
    item_min_d: Vec<f64>,
    item_max_d: Vec<f64>,
    item_ids: Vec<u32>,
    node_count: usize,
    height: usize,
}

#[derive(Clone, Copy)]
struct Packed {
    aabb: Aabb,
    id: u32,
    first: u32,
    count: u32,
}

/// Orders `entries` in STR tiles of `capacity`.
fn str_order(entries: &mut [Packed], capacity: usize) {
    let n = entries.len();
    if n == 0 {
        return;
    }
    let pages = n.div_ceil(capacity);
    let slices = (pages as f64).sqrt().ceil() as usize;
    let slice_len = slices * capacity;
    let key = |p: &Packed, along: bool| {
        let (cs, cd) = p.aabb.center();
        if along { cs } else { cd }
    };
    entries.sort_by(|a, b| key(a, true).total_cmp(&key(b, true)).then(a.id.cmp(&b.id)));
    for chunk in entries.chunks_mut(slice_len) {
        chunk.sort_by(|a, b| key(a, false).total_cmp(&key(b, false)).then(a.id.cmp(&b.id)));
    }
}

fn enclose(entries: &[Packed]) -> Aabb {
    entries.iter().fold(Aabb::EMPTY, |acc, e| acc.union(&e.aabb))
}

/// Bulk-loads boxes tagged with agent ids.
pub fn build_str_tree(boxes: &[(Aabb, u32)], branching: usize, leaf_capacity: usize) -> StrTree {
    assert!(branching >= 2 && leaf_capacity >= 1, "branching must be >= 2 and leaf capacity >= 1");
    let mut items: Vec<Packed> = boxes.iter().map(|&(aabb, id)| Packed { aabb, id, first: 0, count: 0 }).collect();
    let mut tree = StrTree {
        branching,
        leaf_capacity,
        node_min_s: Vec::new(),
        node_max_s: Vec::new(),
        node_min_d: Vec::new(),
        node_max_d: Vec::new(),
        first_child: Vec::new(),
        child_count: Vec::new(),
        leaf: Vec::new(),
        item_min_s: Vec::new(),
        item_max_s: Vec::new(),
        item_min_d: Vec::new(),
        item_max_d: Vec::new(),
        item_ids: Vec::new(),
        node_count: 0,
        height: 0,
    };
    if items.is_empty() {
        tree.pad();
        return tree;
    }
    str_order(&mut items, leaf_capacity);
    let mut levels: Vec<Vec<Packed>> = Vec::new();
    let leaves: Vec<Packed> = items
        .chunks(leaf_capacity)
        .enumerate()
        .map(|(i, c)| Packed { aabb: enclose(c), id: i as u32, first: (i * leaf_capacity) as u32, count: c.len() as u32 })
        .collect();
    levels.push(leaves);
    while levels.last().map_or(0, |l| l.len()) > 1 {
        let below = levels.last_mut().expect("non-empty level list");
        str_order(below, branching);
        let parents = below
            .chunks(branching)
            .enumerate()
            .map(|(i, c)| Packed { aabb: enclose(c), id: i as u32, first: (i * branching) as u32, count: c.len() as u32 })
            .collect();
        levels.push(parents);
    }
    // lay out top-down: offset of each level in the flat node arrays
    let mut offsets = vec![0usize; levels.len()];
    let mut acc = 0;
    for (li, level) in levels.iter().enumerate().rev() {
        offsets[li] = acc;
        acc += level.len();
    }
    tree.node_count = acc;
    tree.height = levels.len();
    for li in (0..levels.len()).rev() {
        for p in &levels[li] {
            tree.node_min_s.push(p.aabb.min_s);
            tree.node_max_s.push(p.aabb.max_s);
            tree.node_min_d.push(p.aabb.min_d);
            tree.node_max_d.push(p.aabb.max_d);
            let first = if li == 0 { p.first as usize } else { offsets[li - 1] + p.first as usize };
            tree.first_child.push(first as u32);
            tree.child_count.push(p.count);
            tree.leaf.push(li == 0);
        }
    }
    for it in &items {
        tree.item_min_s.push(it.aabb.min_s);
        tree.item_max_s.push(it.aabb.max_s);
        tree.item_min_d.push(it.aabb.min_d);
        tree.item_max_d.push(it.aabb.max_d);
        tree.item_ids.push(it.id);
    }
    tree.pad();
    tree
}

impl StrTree {
    /// Appends one masked batch worth of empty boxes so batch loads stay in bounds.
    fn pad(&mut self) {
        for v in [&mut self.node_min_s, &mut self.node_min_d, &mut self.item_min_s, &mut self.item_min_d] {
            v.extend(std::iter::repeat(f64::INFINITY).take(QUERY_LANES));
        }
        for v in [&mut self.node_max_s, &mut self.node_max_d, &mut self.item_max_s, &mut self.item_max_d] {
            v.extend(std::iter::repeat(f64::NEG_INFINITY).take(QUERY_LANES));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.node_count == 0
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn node_aabb(&self, i: usize) -> Aabb {
        Aabb::new(self.node_min_s[i], self.node_max_s[i], self.node_min_d[i], self.node_max_d[i])
    }

    pub fn root_aabb(&self) -> Option<Aabb> {
        (!self.is_empty()).then(|| self.node_aabb(0))
    }

    /// `(first, count, is_leaf)`; leaf ranges index the item arrays.
    pub fn node_children(&self, i: usize) -> (usize, usize, bool) {
        (self.first_child[i] as usize, self.child_count[i] as usize, self.leaf[i])
    }

    pub fn item(&self, i: usize) -> (Aabb, u32) {
        (Aabb::new(self.item_min_s[i], self.item_max_s[i], self.item_min_d[i], self.item_max_d[i]), self.item_ids[i])
    }

    #[inline(always)]
    fn batch_hits(min_s: &[f64], max_s: &[f64], min_d: &[f64], max_d: &[f64], start: usize, count: usize, q: &Aabb) -> [bool; QUERY_LANES] {
        let mut hit = [false; QUERY_LANES];
        for l in 0..QUERY_LANES {
            let i = start + l;
            let overlap = min_s[i] <= q.max_s && q.min_s <= max_s[i] && min_d[i] <= q.max_d && q.min_d <= max_d[i];
            hit[l] = (l < count) & overlap;
        }
        hit
    }

    /// Appends ids of stored boxes intersecting `q` to `out`, using `stack` as scratch.
    pub fn query_into(&self, q: &Aabb, stack: &mut Vec<u32>, out: &mut Vec<u32>) {
        if self.is_empty() || !self.node_aabb(0).intersects(q) {
            return;
        }
        stack.clear();
        stack.push(0);
        while let Some(v) = stack.pop() {
            let v = v as usize;
            let first = self.first_child[v] as usize;
            let count = self.child_count[v] as usize;
            let mut off = 0;
            while off < count {
                let n = (count - off).min(QUERY_LANES);
                if self.leaf[v] {
                    let hit = Self::batch_hits(&self.item_min_s, &self.item_max_s, &self.item_min_d, &self.item_max_d, first + off, n, q);
                    for l in 0..n {
                        if hit[l] {
                            out.push(self.item_ids[first + off + l]);
                        }
                    }
                } else {
                    let hit = Self::batch_hits(&self.node_min_s, &self.node_max_s, &self.node_min_d, &self.node_max_d, first + off, n, q);
                    for l in (0..n).rev() {
                        if hit[l] {
                            stack.push((first + off + l) as u32);
                        }
                    }
                }
                off += n;
            }
        }
    }

    pub fn broad_phase_query(&self, q: &Aabb) -> Vec<u32> {
        let mut out = Vec::new();
        self.query_into(q, &mut Vec::new(), &mut out);
        out
    }

    /// One line per node: index, leaf flag, child range and box.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for i in 0..self.node_count {
            let b = self.node_aabb(i);
            s.push_str(&format!(
                "{i} {} {}+{} [{:.3},{:.3}]x[{:.3},{:.3}]\n",
                if self.leaf[i] { "leaf" } else { "node" },
                self.first_child[i],
                self.child_count[i],
                b.min_s,
                b.max_s,
                b.min_d,
                b.max_d
            ));
        }
        s
    }
}

/// `broad_phase_query` as a free function.
pub fn broad_phase_query(tree: &StrTree, query: &Aabb) -> Vec<u32> {
    tree.broad_phase_query(query)
}
