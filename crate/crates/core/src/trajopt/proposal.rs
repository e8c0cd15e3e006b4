//! Critical-agent detection, hazard-tilted proposals and importance resampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::belief::{sample_from, AgentState, Belief, Scenario, SceneState, TrajectoryLibrary};
use crate::model::geometry::ReferencePath;

/// Agents whose predicted footprint centre comes within `half_width` of
/// `path` under any intention, or whose track crosses it.
pub fn identify_critical_agents(library: &TrajectoryLibrary, belief: &Belief, state: &SceneState, path: &ReferencePath, half_width: f64) -> Vec<usize> {
    let segs = path.segments();
    let near = |a: &AgentState| {
        let j = path.nearest_segment(a.x, a.y);
        crate::model::geometry::segment_dist2(segs.ax[j], segs.ay[j], segs.ux[j], segs.uy[j], segs.len[j], a.x, a.y) <= half_width * half_width
    };
    let side = |a: &AgentState| {
        let f = path.project(a.x, a.y);
        (!f.clamped).then_some(f.d > 0.0)
    };
    (0..belief.agents.len())
        .filter(|&j| {
            let start = &state.agents[j];
            (0..belief.agents[j].intentions.len()).any(|i| {
                let traj = library.get(j, i);
                let mut prev = side(start);
                if near(start) {
                    return true;
                }
                for s in &traj.states {
                    if near(s) {
                        return true;
                    }
                    let cur = side(s);
                    if let (Some(a), Some(b)) = (prev, cur) {
                        if a != b {
                            return true;
                        }
                    }
                    prev = cur;
                }
                false
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalDistribution {
    /// Per-agent intention probabilities to sample from.
    pub q: Vec<Vec<f64>>,
    pub critical: Vec<bool>,
}

/// Multiplies hazardous-intention mass of critical agents by `1 / (1 - tilt)`
/// and renormalises; every other agent keeps its belief.
pub fn build_proposal(belief: &Belief, critical: &[usize], tilt: f64) -> Result<ProposalDistribution> {
    if !(0.0..1.0).contains(&tilt) {
        return Err(Error::InvalidConfig(format!("tilt {tilt} must lie in [0, 1)")));
    }
    let factor = 1.0 / (1.0 - tilt);
    let mut flags = vec![false; belief.agents.len()];
    for &j in critical {
        flags[j] = true;
    }
    let q = belief
        .agents
        .iter()
        .zip(&flags)
        .map(|(a, &crit)| {
            let p: Vec<f64> = a.intentions.iter().map(|it| it.probability).collect();
            if !crit || tilt == 0.0 {
                return p;
            }
            let boosted: Vec<f64> = a.intentions.iter().zip(&p).map(|(it, &pi)| if it.kind.is_hazardous() { pi * factor } else { pi }).collect();
            let total: f64 = boosted.iter().sum();
            boosted.iter().map(|x| x / total).collect()
        })
        .collect();
    Ok(ProposalDistribution { q, critical: flags })
}

#[derive(Clone, Debug)]
pub struct WeightedScenario {
    pub scenario: Scenario,
    /// Product over agents of belief over proposal mass of the drawn intention.
    pub weight: f64,
}

/// Likelihood ratio of one joint intention draw.
pub fn importance_weight(belief: &[Vec<f64>], proposal: &[Vec<f64>], intentions: &[usize]) -> f64 {
    let mut w = 1.0;
    for (j, &i) in intentions.iter().enumerate() {
        w *= belief[j][i] / proposal[j][i];
    }
    w
}

/// Draws `count` scenarios from the proposal and attaches their weights.
pub fn resample_with_proposal(
    library: &TrajectoryLibrary,
    belief: &Belief,
    state: &SceneState,
    proposal: &ProposalDistribution,
    count: usize,
    seed: u64,
) -> Result<Vec<WeightedScenario>> {
    let b = belief.probabilities();
    for (j, (pb, pq)) in b.iter().zip(&proposal.q).enumerate() {
        if pb.len() != pq.len() {
            return Err(Error::InvalidBelief(format!("proposal for agent {j} has {} intentions, belief has {}", pq.len(), pb.len())));
        }
        if let Some(i) = pb.iter().zip(pq).position(|(&x, &y)| x > 0.0 && !(y > 0.0)) {
            return Err(Error::AbsoluteContinuity { agent: j, intention: i });
        }
    }
    let scenarios = sample_from(library, state, &proposal.q, count, seed)?;
    Ok(scenarios
        .into_iter()
        .map(|s| {
            let weight = importance_weight(&b, &proposal.q, &s.intentions);
            WeightedScenario { scenario: s, weight }
        })
        .collect())
}
