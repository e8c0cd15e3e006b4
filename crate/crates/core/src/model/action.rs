use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PATH_COUNT: usize = 3;
pub const NUDGES: [f64; 3] = [-1.0, 0.0, 1.0];

/// Follow candidate path `path_id` offset laterally by `nudge` meters for `duration` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroAction {
    pub path_id: usize,
    pub nudge: f64,
    pub duration: f64,
}

/// Ordered macro-action set. The full set enumerates paths then nudges.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    actions: Vec<MacroAction>,
}

impl ActionSet {
    pub fn full(duration: f64) -> Self {
        let actions = (0..PATH_COUNT)
            .flat_map(|p| NUDGES.iter().map(move |&n| MacroAction { path_id: p, nudge: n, duration }))
            .collect();
        Self { actions }
    }

    /// A subset of the full set, kept in the given order.
    pub fn subset(duration: f64, indices: &[usize]) -> Result<Self> {
        let full = Self::full(duration);
        if indices.is_empty() {
            return Err(Error::InvalidConfig("action set must not be empty".into()));
        }
        let mut actions = Vec::with_capacity(indices.len());
        for &i in indices {
            let a = *full.actions.get(i).ok_or_else(|| Error::InvalidConfig(format!("action index {i} out of range")))?;
            if actions.contains(&a) {
                return Err(Error::InvalidConfig(format!("duplicate action index {i}")));
            }
            actions.push(a);
        }
        Ok(Self { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> MacroAction {
        self.actions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MacroAction> {
        self.actions.iter()
    }
}
