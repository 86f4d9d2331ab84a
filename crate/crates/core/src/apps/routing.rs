//! Road graph, PAQI edge weights and exposure-aware shortest paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde_json::{json, Value};

use super::Predictor;
use crate::geo::distance_km;
use crate::ingest::RoadSegment;
use crate::{Error, Execution, GeoPoint, Hour, Result};

/// Smallest edge weight, so pollution-free edges still cost their length.
pub const PAQI_FLOOR: f64 = 1e-3;

/// Coordinates are merged into one node when equal at this many decimal degrees.
const QUANTUM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub functional_class: u8,
    pub segment_id: String,
    pub midpoint: GeoPoint,
    /// 1 until [`annotate_paqi`] runs.
    pub paqi_weight: f64,
}

impl Edge {
    pub fn exposure(&self) -> f64 {
        self.length_km * self.paqi_weight
    }

    fn other(&self, node: usize) -> usize {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }
}

/// Undirected graph with one edge per road segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    pub nodes: Vec<GeoPoint>,
    pub edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

fn quantize(p: &GeoPoint) -> (i64, i64) {
    (
        (p.lat() * QUANTUM).round() as i64,
        (p.lon() * QUANTUM).round() as i64,
    )
}

/// Nodes at segment endpoints; endpoints equal to 1e-6° share a node.
pub fn build_graph(segments: &[RoadSegment]) -> RoadGraph {
    let mut lookup: HashMap<(i64, i64), usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut node_of = |p: &GeoPoint, nodes: &mut Vec<GeoPoint>| {
        *lookup.entry(quantize(p)).or_insert_with(|| {
            nodes.push(*p);
            nodes.len() - 1
        })
    };
    let mut edges = Vec::with_capacity(segments.len());
    for s in segments {
        let from = node_of(&s.polyline[0], &mut nodes);
        let to = node_of(s.polyline.last().expect("validated polyline"), &mut nodes);
        edges.push(Edge {
            from,
            to,
            length_km: s.length_km,
            functional_class: s.functional_class,
            segment_id: s.id.clone(),
            midpoint: s.midpoint(),
            paqi_weight: 1.0,
        });
    }
    RoadGraph::new(nodes, edges)
}

impl RoadGraph {
    pub fn new(nodes: Vec<GeoPoint>, edges: Vec<Edge>) -> RoadGraph {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.from].push(i);
            if e.to != e.from {
                adjacency[e.to].push(i);
            }
        }
        RoadGraph {
            nodes,
            edges,
            adjacency,
        }
    }

    /// Edge ids touching `node`.
    pub fn incident(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Closest node to `p`, lowest index on ties.
    pub fn nearest_node(&self, p: &GeoPoint) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = distance_km(n, p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| i)
    }

    /// Component label per node; labels are the smallest node index in the component.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.nodes.len()];
        for start in 0..self.nodes.len() {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = start;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &e in &self.adjacency[u] {
                    let v = self.edges[e].other(u);
                    if label[v] == usize::MAX {
                        label[v] = start;
                        stack.push(v);
                    }
                }
            }
        }
        label
    }
}

/// Sets every edge weight to the PAQI predicted at its midpoint, floored at [`PAQI_FLOOR`].
pub fn annotate_paqi(
    graph: &RoadGraph,
    predictor: &Predictor,
    hour: Hour,
    exec: Execution,
) -> Result<RoadGraph> {
    let weights = exec
        .map(&graph.edges, |e| {
            let (c, _) = predictor.raw(&e.midpoint, hour)?;
            Ok(predictor.paqi(&c)?.max(PAQI_FLOOR))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut out = graph.clone();
    for (e, w) in out.edges.iter_mut().zip(weights) {
        e.paqi_weight = w;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub length_km: f64,
    /// Σ length · PAQI weight.
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub shortest: Path,
    pub clean: Path,
    /// Clean path length relative to the shortest one, in %.
    pub length_delta_pct: f64,
    /// Clean path exposure relative to the shortest one, in %.
    pub exposure_delta_pct: f64,
}

#[derive(PartialEq)]
struct State {
    cost: (f64, f64),
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    // Reversed so the max-heap pops the cheapest state; lower node ids first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .0
            .total_cmp(&self.cost.0)
            .then(other.cost.1.total_cmp(&self.cost.1))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn lex_less(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Dijkstra on the lexicographic cost `(primary, secondary)` summed along the path.
fn dijkstra(
    graph: &RoadGraph,
    from: usize,
    to: usize,
    cost: impl Fn(&Edge) -> (f64, f64),
) -> Option<Vec<usize>> {
    let n = graph.nodes.len();
    let mut best = vec![(f64::INFINITY, f64::INFINITY); n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[from] = (0.0, 0.0);
    heap.push(State {
        cost: (0.0, 0.0),
        node: from,
    });
    while let Some(State { cost: c, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == to {
            break;
        }
        for &e in &graph.adjacency[u] {
            let edge = &graph.edges[e];
            let v = edge.other(u);
            if done[v] {
                continue;
            }
            let w = cost(edge);
            let next = (c.0 + w.0, c.1 + w.1);
            if lex_less(next, best[v]) {
                best[v] = next;
                via[v] = Some(e);
                heap.push(State {
                    cost: next,
                    node: v,
                });
            }
        }
    }
    if !done[to] {
        return None;
    }
    let mut edges = Vec::new();
    let mut at = to;
    while at != from {
        let e = via[at].expect("settled nodes have a predecessor");
        edges.push(e);
        at = graph.edges[e].other(at);
    }
    edges.reverse();
    Some(edges)
}

impl Path {
    /// Path from `from` along `edges`, totals summed from the origin.
    pub fn from_edges(graph: &RoadGraph, from: usize, edges: Vec<usize>) -> Path {
        let mut nodes = vec![from];
        let (mut length_km, mut exposure) = (0.0, 0.0);
        for &e in &edges {
            let edge = &graph.edges[e];
            nodes.push(edge.other(*nodes.last().expect("non-empty")));
            length_km += edge.length_km;
            exposure += edge.exposure();
        }
        Path {
            nodes,
            edges,
            length_km,
            exposure,
        }
    }
}

fn delta_pct(base: f64, value: f64) -> f64 {
    if base > 0.0 {
        100.0 * (value - base) / base
    } else {
        0.0
    }
}

/// Shortest path by length and cleanest path by Σ length·PAQI. Each breaks
/// ties on the other criterion.
pub fn route(graph: &RoadGraph, from: usize, to: usize) -> Result<RoutePlan> {
    let n = graph.nodes.len();
    if from >= n || to >= n {
        return Err(Error::InvalidParameter(format!(
            "node index out of range (graph has {n} nodes)"
        )));
    }
    let shortest = dijkstra(graph, from, to, |e| (e.length_km, e.exposure()))
        .ok_or(Error::Disconnected { from, to })?;
    let clean = dijkstra(graph, from, to, |e| (e.exposure(), e.length_km))
        .ok_or(Error::Disconnected { from, to })?;
    let shortest = Path::from_edges(graph, from, shortest);
    let clean = Path::from_edges(graph, from, clean);
    Ok(RoutePlan {
        length_delta_pct: delta_pct(shortest.length_km, clean.length_km),
        exposure_delta_pct: delta_pct(shortest.exposure, clean.exposure),
        shortest,
        clean,
    })
}

impl RoutePlan {
    /// For example `+11% longer, 32% less polluted`.
    pub fn summary(&self) -> String {
        // Adding 0.0 turns -0.0 into 0.0 so equal routes print without a sign.
        format!(
            "{:+.0}% longer, {:.0}% less polluted",
            self.length_delta_pct + 0.0,
            -self.exposure_delta_pct + 0.0
        )
    }

    /// FeatureCollection with the shortest and clean paths as LineStrings.
    pub fn to_geojson(&self, graph: &RoadGraph) -> Value {
        let feature = |name: &str, p: &Path| {
            let coords: Vec<Value> = p
                .nodes
                .iter()
                .map(|&i| json!([graph.nodes[i].lon(), graph.nodes[i].lat()]))
                .collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": {
                    "route": name,
                    "length_km": p.length_km,
                    "exposure": p.exposure,
                    "length_delta_pct": self.length_delta_pct,
                    "exposure_delta_pct": self.exposure_delta_pct,
                },
            })
        };
        json!({
            "type": "FeatureCollection",
            "features": [feature("shortest", &self.shortest), feature("clean", &self.clean)],
            "properties": {
                "length_delta_pct": self.length_delta_pct,
                "exposure_delta_pct": self.exposure_delta_pct,
                "summary": self.summary(),
            },
        })
    }
}
