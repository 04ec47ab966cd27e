//! Desk-scale synthetic traffic with long-range incident propagation.
//!
//! Flow at each sensor is a daily sinusoid, smoothed by one-step diffusion
//! from road neighbors. Incidents cut the flow at a source sensor and the
//! cut spreads outward over the road graph: a sensor `h` hops away is hit
//! `⌈h / propagation_speed⌉` steps after onset, scaled by `hop_decay^h`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TrafficSeries, DEFAULT_STEP_SECONDS};
use crate::error::{Error, Result};
use crate::graph::{DistanceEntry, RoadGraph};
use crate::rng::{rng_for, Stream};

const STEPS_PER_DAY: usize = 288;
const SEGMENT_METERS: f64 = 500.0;
const START_EPOCH: i64 = 1_546_300_800; // 2019-01-01T00:00:00Z
const ORIGIN: (f64, f64) = (32.72, -117.16);
/// Pairs up to this many road hops apart are listed in the distance table.
const DISTANCE_PAIR_HOPS: usize = 4;
const RECOVERY: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Chain,
    Grid,
    TwoClusterBridge,
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Topology::Chain),
            "grid" => Ok(Topology::Grid),
            "two-cluster-bridge" => Ok(Topology::TwoClusterBridge),
            _ => Err(Error::Config(format!("unknown topology `{s}`"))),
        }
    }
}

fn default_incident_rate() -> f64 {
    12.0
}

fn default_magnitude() -> f64 {
    0.5
}

fn default_speed() -> f64 {
    0.25
}

fn default_hop_decay() -> f64 {
    0.9
}

fn default_duration() -> usize {
    24
}

fn default_diffusion() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenario {
    pub topology: Topology,
    pub num_nodes: usize,
    pub days: usize,
    /// Expected incidents per day over the whole network.
    #[serde(default = "default_incident_rate")]
    pub incident_rate: f64,
    /// Fractional flow drop at the incident source, in `[0, 1]`.
    #[serde(default = "default_magnitude")]
    pub incident_magnitude: f64,
    /// Hops travelled per time step.
    #[serde(default = "default_speed")]
    pub propagation_speed: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-hop attenuation of the drop.
    #[serde(default = "default_hop_decay")]
    pub hop_decay: f64,
    /// Steps an incident holds at full strength before recovering.
    #[serde(default = "default_duration")]
    pub incident_duration: usize,
    /// Weight of the neighbor average in the one-step diffusion.
    #[serde(default = "default_diffusion")]
    pub diffusion: f64,
}

impl SyntheticScenario {
    pub fn new(topology: Topology, num_nodes: usize, days: usize, seed: u64) -> Self {
        Self {
            topology,
            num_nodes,
            days,
            incident_rate: default_incident_rate(),
            incident_magnitude: default_magnitude(),
            propagation_speed: default_speed(),
            seed,
            hop_decay: default_hop_decay(),
            incident_duration: default_duration(),
            diffusion: default_diffusion(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 4 {
            return Err(Error::Config(format!(
                "scenario needs >= 4 nodes, got {}",
                self.num_nodes
            )));
        }
        if self.days == 0 {
            return Err(Error::Config("scenario days must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.incident_magnitude) {
            return Err(Error::Config(format!(
                "incident magnitude must lie in [0, 1], got {}",
                self.incident_magnitude
            )));
        }
        if !(self.incident_rate >= 0.0) {
            return Err(Error::Config("incident rate must be >= 0".into()));
        }
        if !(self.propagation_speed > 0.0) {
            return Err(Error::Config("propagation speed must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.hop_decay) || !(0.0..1.0).contains(&self.diffusion) {
            return Err(Error::Config("hop_decay must lie in [0, 1] and diffusion in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.days * STEPS_PER_DAY
    }
}

/// Incident onset at a source node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub start: usize,
    pub node: usize,
}

struct Layout {
    /// Planar positions in meters.
    xy: Vec<(f64, f64)>,
    roads: Vec<(usize, usize)>,
}

fn grid_layout(n: usize, x0: f64, offset: usize, xy: &mut Vec<(f64, f64)>, roads: &mut Vec<(usize, usize)>) -> usize {
    let cols = (n as f64).sqrt().ceil() as usize;
    for i in 0..n {
        let (r, c) = (i / cols, i % cols);
        xy.push((x0 + c as f64 * SEGMENT_METERS, r as f64 * SEGMENT_METERS));
        if c + 1 < cols && i + 1 < n {
            roads.push((offset + i, offset + i + 1));
        }
        if i + cols < n {
            roads.push((offset + i, offset + i + cols));
        }
    }
    cols
}

fn layout(topology: Topology, n: usize) -> Layout {
    let mut xy = Vec::with_capacity(n);
    let mut roads = Vec::new();
    match topology {
        Topology::Chain => {
            for i in 0..n {
                xy.push((i as f64 * SEGMENT_METERS, 0.0));
                if i + 1 < n {
                    roads.push((i, i + 1));
                }
            }
        }
        Topology::Grid => {
            grid_layout(n, 0.0, 0, &mut xy, &mut roads);
        }
        Topology::TwoClusterBridge => {
            let na = n / 2;
            let nb = n - na;
            let cols_a = grid_layout(na, 0.0, 0, &mut xy, &mut roads);
            let x0 = cols_a as f64 * SEGMENT_METERS;
            grid_layout(nb, x0, na, &mut xy, &mut roads);
            // Bridge: easternmost sensor of the first row of cluster A to the
            // westernmost sensor of the first row of cluster B.
            let a_end = cols_a.min(na) - 1;
            roads.push((a_end, na));
        }
    }
    Layout { xy, roads }
}

fn neighbors(n: usize, roads: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in roads {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

fn bfs_hops(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Shortest road lengths from `src` (Dijkstra on a small graph).
fn road_lengths(adj: &[Vec<usize>], seg: &dyn Fn(usize, usize) -> f64, src: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let u = (0..n)
            .filter(|&i| !done[i])
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        let Some(u) = u else { break };
        if dist[u].is_infinite() {
            break;
        }
        done[u] = true;
        for &v in &adj[u] {
            let nd = dist[u] + seg(u, v);
            if nd < dist[v] {
                dist[v] = nd;
            }
        }
    }
    dist
}

/// Draws incident onsets: each step starts one with probability
/// `incident_rate / 288` at a uniformly chosen node.
pub fn sample_incidents(scenario: &SyntheticScenario) -> Vec<Incident> {
    let mut rng = rng_for(scenario.seed, Stream::Incidents);
    let p = (scenario.incident_rate / STEPS_PER_DAY as f64).min(1.0);
    let mut out = Vec::new();
    if p <= 0.0 {
        return out;
    }
    for start in 0..scenario.steps() {
        if rng.gen::<f64>() < p {
            out.push(Incident {
                start,
                node: rng.gen_range(0..scenario.num_nodes),
            });
        }
    }
    out
}

pub fn generate_synthetic(scenario: &SyntheticScenario) -> Result<(RoadGraph, TrafficSeries)> {
    let incidents = sample_incidents(scenario);
    generate_with_incidents(scenario, &incidents)
}

/// Deterministic generation with an explicit incident list.
pub fn generate_with_incidents(
    scenario: &SyntheticScenario,
    incidents: &[Incident],
) -> Result<(RoadGraph, TrafficSeries)> {
    scenario.validate()?;
    let n = scenario.num_nodes;
    let steps = scenario.steps();
    let mut rng = rng_for(scenario.seed, Stream::Synthetic);
    let Layout { xy, roads } = layout(scenario.topology, n);
    let adj = neighbors(n, &roads);

    // Jittered positions, then road segment lengths slightly above straight
    // line distance.
    let xy: Vec<(f64, f64)> = xy
        .iter()
        .map(|(x, y)| {
            (
                x + rng.gen_range(-0.05..0.05) * SEGMENT_METERS,
                y + rng.gen_range(-0.05..0.05) * SEGMENT_METERS,
            )
        })
        .collect();
    let mut detour = vec![1.0; n * n];
    for &(a, b) in &roads {
        let f = 1.0 + rng.gen_range(0.0..0.05);
        detour[a * n + b] = f;
        detour[b * n + a] = f;
    }
    let seg = |a: usize, b: usize| {
        let (dx, dy) = (xy[a].0 - xy[b].0, xy[a].1 - xy[b].1);
        (dx * dx + dy * dy).sqrt() * detour[a * n + b]
    };

    let hops: Vec<Vec<Option<usize>>> = (0..n).map(|s| bfs_hops(&adj, s)).collect();
    let mut distances = Vec::new();
    for (src, h) in hops.iter().enumerate() {
        let lengths = road_lengths(&adj, &seg, src);
        for (dst, hd) in h.iter().enumerate() {
            if dst != src && hd.is_some_and(|hd| hd <= DISTANCE_PAIR_HOPS) {
                distances.push(DistanceEntry {
                    from: src,
                    to: dst,
                    meters: lengths[dst],
                });
            }
        }
    }

    let coords = xy
        .iter()
        .map(|(x, y)| {
            let lat = ORIGIN.0 + y / 111_320.0;
            let lon = ORIGIN.1 + x / (111_320.0 * lat.to_radians().cos());
            (lat, lon)
        })
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("S{i:03}")).collect();
    let graph = RoadGraph::new(ids.clone(), coords, distances)?;

    let level: Vec<f64> = (0..n).map(|_| rng.gen_range(150.0..350.0)).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let base = |i: usize, t: usize| {
        let angle = 2.0 * PI * (t % STEPS_PER_DAY) as f64 / STEPS_PER_DAY as f64 + phase[i];
        level[i] * (1.0 + 0.5 * angle.sin())
    };

    // One-step diffusion from road neighbors.
    let alpha = scenario.diffusion;
    let mut flow = vec![0.0; n * steps];
    let mut prev: Vec<f64> = (0..n).map(|i| base(i, 0)).collect();
    for t in 0..steps {
        let cur: Vec<f64> = (0..n)
            .map(|i| {
                let b = base(i, t);
                if t == 0 || adj[i].is_empty() {
                    return b;
                }
                let mean = adj[i].iter().map(|&j| prev[j]).sum::<f64>() / adj[i].len() as f64;
                (1.0 - alpha) * b + alpha * mean
            })
            .collect();
        for i in 0..n {
            flow[i * steps + t] = cur[i];
        }
        prev = cur;
    }

    // Incident drops, composed multiplicatively.
    let mut keep = vec![1.0; n * steps];
    let d = scenario.incident_duration;
    let tail = (1e-3f64.ln() / RECOVERY.ln()).ceil() as usize;
    for inc in incidents {
        if inc.node >= n {
            return Err(Error::Config(format!("incident node {} out of range", inc.node)));
        }
        for (i, h) in hops[inc.node].iter().enumerate() {
            let Some(h) = *h else { continue };
            let delay = (h as f64 / scenario.propagation_speed).ceil() as usize;
            let strength = scenario.incident_magnitude * scenario.hop_decay.powi(h as i32);
            let onset = inc.start + delay;
            for s in 0..d + tail {
                let t = onset + s;
                if t >= steps {
                    break;
                }
                let shape = if s < d {
                    1.0
                } else {
                    RECOVERY.powi((s - d + 1) as i32)
                };
                keep[i * steps + t] *= 1.0 - strength * shape;
            }
        }
    }
    let values = flow
        .iter()
        .zip(&keep)
        .map(|(f, k)| (f * k).max(0.0))
        .collect();
    let timestamps = (0..steps)
        .map(|t| START_EPOCH + t as i64 * DEFAULT_STEP_SECONDS)
        .collect();
    let series = TrafficSeries::new(ids, timestamps, values)?;
    Ok((graph, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_distance_adjacency, hop_distances, DEFAULT_DISTANCE_THRESHOLD};

    #[test]
    fn distance_adjacency_recovers_road_topology() {
        for topo in [Topology::Chain, Topology::Grid, Topology::TwoClusterBridge] {
            let sc = SyntheticScenario::new(topo, 24, 1, 3);
            let (g, _) = generate_synthetic(&sc).unwrap();
            let a = build_distance_adjacency(&g, DEFAULT_DISTANCE_THRESHOLD).unwrap();
            let roads = layout(topo, 24).roads;
            let adj = neighbors(24, &roads);
            for i in 0..24 {
                for j in 0..24 {
                    let road = adj[i].contains(&j);
                    assert_eq!(a.at(i, j) > 0.0, road, "{topo:?} ({i},{j})");
                }
            }
            // connected
            assert!(hop_distances(&a)[0].iter().all(Option::is_some));
        }
    }

    #[test]
    fn bridge_is_the_only_link_between_clusters() {
        let roads = layout(Topology::TwoClusterBridge, 24).roads;
        let crossing: Vec<_> = roads.iter().filter(|(a, b)| (*a < 12) != (*b < 12)).collect();
        assert_eq!(crossing.len(), 1);
    }

    #[test]
    fn invalid_scenarios() {
        let mut sc = SyntheticScenario::new(Topology::Chain, 3, 1, 0);
        assert!(sc.validate().is_err());
        sc.num_nodes = 5;
        sc.days = 0;
        assert!(sc.validate().is_err());
        sc.days = 1;
        sc.incident_magnitude = 1.5;
        assert!(sc.validate().is_err());
    }
}
