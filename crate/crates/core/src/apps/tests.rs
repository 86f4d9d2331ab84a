use super::*;
use crate::geo::distance_km;
use crate::ingest::synth::{generate_synthetic_world, WorldSpec};
use crate::ingest::RoadSegment;
use crate::model::Shape;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_world() -> IndexedWorld {
    let spec = WorldSpec {
        size_km: 6.0,
        station_count: 8,
        road_count: 120,
        towns: 2,
        hours: 4,
        grid_resolution_km: 3.0,
        land_spacing_km: 0.2,
        ..WorldSpec::default()
    };
    IndexedWorld::new(generate_synthetic_world(11, &spec).unwrap().world)
}

fn random_model(seed: u64) -> MlpModel {
    let names = FeatureConfig::default().layout().names().to_vec();
    let shape = Shape {
        inputs: names.len(),
        n1: 6,
        n2: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..shape.param_count())
        .map(|_| rng.random_range(-0.5..0.5))
        .collect();
    let mut m = MlpModel::from_parts(
        "full".into(),
        names,
        shape,
        vec![0.0; shape.inputs],
        vec![1.0; shape.inputs],
        Some(params),
    )
    .unwrap();
    let n = m.params().len();
    m.params_mut()[n - 4..].copy_from_slice(&[30.0, 50.0, 12.0, 20.0]);
    m
}

fn point(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

fn seg(id: &str, a: (f64, f64), b: (f64, f64)) -> RoadSegment {
    RoadSegment::new(id, vec![point(a.0, a.1), point(b.0, b.1)], 3, false).unwrap()
}

#[test]
fn predictor_checks_layout_and_coverage() {
    let w = small_world();
    let bp = AqiBreakpoints::default();
    let m = random_model(1);
    assert!(Predictor::new(&m, &w, FeatureConfig::with_preset(Preset::Reduced), &bp).is_err());
    let other = MlpModel::zeros("full", vec!["x".into()], 2, 2).unwrap();
    assert!(matches!(
        Predictor::new(&other, &w, FeatureConfig::default(), &bp),
        Err(Error::LayoutMismatch(_))
    ));
    let p = Predictor::new(&m, &w, FeatureConfig::default(), &bp).unwrap();
    let hour = w.world().measurements.start();
    let out = p.predict(&w.world().region.bbox.center(), hour).unwrap();
    assert!(out.concentrations.iter().all(|v| *v >= 0.0));
    assert_eq!(out.imputed.len(), m.input_dim());
    assert!(matches!(
        p.predict(&point(10.0, 10.0), hour),
        Err(Error::OutOfCoverage(_))
    ));
}

#[test]
fn grid_examples() {
    assert_eq!(cell_count(1.0, 50.0), 20);
    assert_eq!(cell_count(1.01, 50.0), 21);
    assert_eq!(cell_count(0.0, 50.0), 1);

    let w = small_world();
    let bp = AqiBreakpoints::default();
    let m = random_model(2);
    let p = Predictor::new(&m, &w, FeatureConfig::default(), &bp).unwrap();
    let hour = w.world().measurements.start().offset(1);
    let c = w.world().region.bbox.center();
    let tiny = BoundingBox::new(c, c.offset_km(0.04, 0.04).unwrap()).unwrap();
    let one = render_grid(&p, &tiny, 50.0, hour, Execution::Sequential).unwrap();
    assert_eq!((one.rows, one.cols), (1, 1));
    let direct = p.predict(&tiny.center(), hour).unwrap();
    assert_eq!(one.cells[0].concentrations, direct.concentrations);
    assert_eq!(one.cells[0].paqi, direct.paqi);

    let bbox = BoundingBox::new(c, c.offset_km(0.5, 0.3).unwrap()).unwrap();
    let g = render_grid(&p, &bbox, 50.0, hour, Execution::Sequential).unwrap();
    let (sl, so) = bbox.span_km();
    assert_eq!(
        (g.rows, g.cols),
        (cell_count(sl, 50.0), cell_count(so, 50.0))
    );
    assert_eq!(g.cells.len(), g.rows * g.cols);
    assert!(g
        .cells
        .iter()
        .all(|c| c.paqi >= 0.0 && bbox.contains(&c.center)));
    let par = render_grid(&p, &bbox, 50.0, hour, Execution::Parallel).unwrap();
    assert_eq!(par, g);
    assert_eq!(g.to_csv().lines().count(), 1 + g.cells.len());
    assert_eq!(g.gray_levels(crate::Pollutant::No2).len(), g.cells.len());

    let mut zero = MlpModel::zeros("full", m.feature_names().to_vec(), 3, 2).unwrap();
    zero.params_mut().fill(0.0);
    let pz = Predictor::new(&zero, &w, FeatureConfig::default(), &bp).unwrap();
    let gz = render_grid(&pz, &bbox, 100.0, hour, Execution::default()).unwrap();
    assert!(gz.cells.iter().all(|c| c.paqi == 0.0));

    let outside = BoundingBox::from_degrees(0.0, 0.0, 1.0, 1.0).unwrap();
    assert!(matches!(
        render_grid(&p, &outside, 50.0, hour, Execution::Sequential),
        Err(Error::OutOfCoverage(_))
    ));
    assert!(render_grid(&p, &bbox, 0.0, hour, Execution::Sequential).is_err());

    let dir = tempfile::tempdir().unwrap();
    g.save_all(dir.path(), "map", true).unwrap();
    assert!(dir.path().join("map_pm25.png").exists());
}

#[test]
fn graph_counting() {
    let g = build_graph(&[
        seg("a", (45.0, 5.0), (45.001, 5.0)),
        seg("b", (45.001, 5.0), (45.001, 5.002)),
    ]);
    assert_eq!((g.nodes.len(), g.edges.len()), (3, 2));
    // Coordinates equal at 1e-6° merge.
    let g = build_graph(&[
        seg("a", (45.0, 5.0), (45.001, 5.0)),
        seg("b", (45.001_000_000_2, 5.0), (45.002, 5.0)),
    ]);
    assert_eq!(g.nodes.len(), 3);
    let g = build_graph(&[
        seg("a", (45.0, 5.0), (45.001, 5.0)),
        seg("b", (45.1, 5.0), (45.101, 5.0)),
    ]);
    let comp = g.components();
    assert_eq!(comp, vec![0, 0, 2, 2]);
    assert!(matches!(
        route(&g, 0, 3),
        Err(Error::Disconnected { from: 0, to: 3 })
    ));

    // k × m block street grid.
    let (k, m) = (4, 6);
    let mut segs = Vec::new();
    for r in 0..=k {
        for c in 0..=m {
            let (lat, lon) = (45.0 + r as f64 * 0.002, 5.0 + c as f64 * 0.003);
            if c < m {
                segs.push(seg(&format!("h{r}_{c}"), (lat, lon), (lat, lon + 0.003)));
            }
            if r < k {
                segs.push(seg(&format!("v{r}_{c}"), (lat, lon), (lat + 0.002, lon)));
            }
        }
    }
    let g = build_graph(&segs);
    assert_eq!(g.nodes.len(), (k + 1) * (m + 1));
    assert_eq!(g.edges.len(), k * (m + 1) + m * (k + 1));
    assert!(g.components().iter().all(|&c| c == 0));
}

#[test]
fn synthetic_network_counts() {
    let w = small_world();
    let roads = &w.world().roads;
    let g = build_graph(roads);
    let towns = 2;
    let town_edges = roads.iter().filter(|r| r.id.starts_with('t')).count();
    let highway_edges = roads.len() - town_edges;
    // Each town is an s × s grid with 2·s·(s − 1) edges.
    let s = (1..100)
        .find(|s| 2 * s * (s - 1) * towns == town_edges)
        .unwrap();
    // A highway with n segments between two hubs adds n − 1 nodes.
    assert_eq!(g.edges.len(), roads.len());
    assert_eq!(g.nodes.len(), towns * s * s + highway_edges - (towns - 1));
    assert!(g.components().iter().all(|&c| c == 0));
    for e in &g.edges {
        let d = distance_km(&g.nodes[e.from], &g.nodes[e.to]);
        assert!((d - e.length_km).abs() <= 0.01 * e.length_km);
    }
}

#[test]
fn annotation_examples() {
    let w = small_world();
    let bp = AqiBreakpoints::default();
    let hour = w.world().measurements.start();
    let graph = build_graph(&w.world().roads);

    let zero = MlpModel::zeros(
        "full",
        FeatureConfig::default().layout().names().to_vec(),
        3,
        2,
    )
    .unwrap();
    let pz = Predictor::new(&zero, &w, FeatureConfig::default(), &bp).unwrap();
    let gz = annotate_paqi(&graph, &pz, hour, Execution::default()).unwrap();
    assert!(gz.edges.iter().all(|e| e.paqi_weight == PAQI_FLOOR));

    let m = random_model(3);
    let p = Predictor::new(&m, &w, FeatureConfig::default(), &bp).unwrap();
    let g = annotate_paqi(&graph, &p, hour, Execution::default()).unwrap();
    for e in &g.edges {
        let direct = p.predict(&e.midpoint, hour).unwrap().paqi.max(PAQI_FLOOR);
        assert_eq!(e.paqi_weight, direct);
        assert!(e.paqi_weight > 0.0);
    }
    assert_eq!(
        annotate_paqi(&graph, &p, hour, Execution::Sequential).unwrap(),
        g
    );
}

fn edge(from: usize, to: usize, length_km: f64, paqi_weight: f64) -> Edge {
    Edge {
        from,
        to,
        length_km,
        functional_class: 3,
        segment_id: format!("e{from}_{to}"),
        midpoint: point(45.0, 5.0),
        paqi_weight,
    }
}

fn nodes(n: usize) -> Vec<GeoPoint> {
    (0..n)
        .map(|i| point(45.0 + 0.001 * i as f64, 5.0))
        .collect()
}

#[test]
fn route_examples() {
    // Two routes 0 → 3: via 1 (length 1.00) and via 2 (length 1.11).
    let edges = vec![
        edge(0, 1, 0.5, 1.0),
        edge(1, 3, 0.5, 1.0),
        edge(0, 2, 0.555, 0.68 / 1.11),
        edge(2, 3, 0.555, 0.68 / 1.11),
    ];
    let g = RoadGraph::new(nodes(4), edges.clone());
    let plan = route(&g, 0, 3).unwrap();
    assert_eq!(plan.shortest.nodes, vec![0, 1, 3]);
    assert_eq!(plan.clean.nodes, vec![0, 2, 3]);
    assert!((plan.length_delta_pct - 11.0).abs() < 1e-9);
    assert!((plan.exposure_delta_pct + 32.0).abs() < 1e-9);
    assert_eq!(plan.summary(), "+11% longer, 32% less polluted");
    let same = RoutePlan {
        clean: plan.shortest.clone(),
        length_delta_pct: 0.0,
        exposure_delta_pct: 0.0,
        ..plan.clone()
    };
    assert_eq!(same.summary(), "+0% longer, 0% less polluted");
    let geo = plan.to_geojson(&g);
    assert_eq!(geo["features"][1]["properties"]["route"], "clean");
    assert_eq!(
        geo["features"][0]["geometry"]["coordinates"]
            .as_array()
            .unwrap()
            .len(),
        3
    );

    let uniform: Vec<Edge> = edges
        .iter()
        .map(|e| Edge {
            paqi_weight: 7.0,
            ..e.clone()
        })
        .collect();
    let plan = route(&RoadGraph::new(nodes(4), uniform), 0, 3).unwrap();
    assert_eq!(plan.shortest, plan.clean);
    assert_eq!((plan.length_delta_pct, plan.exposure_delta_pct), (0.0, 0.0));

    let same = route(&g, 2, 2).unwrap();
    assert_eq!(same.shortest.nodes, vec![2]);
    assert_eq!(same.length_delta_pct, 0.0);
    assert!(route(&g, 0, 9).is_err());
}

/// Lexicographic optima over all simple paths: (length, exposure) and (exposure, length).
fn brute_force(g: &RoadGraph, from: usize, to: usize) -> Option<((f64, f64), (f64, f64))> {
    fn walk(
        g: &RoadGraph,
        at: usize,
        to: usize,
        seen: &mut Vec<bool>,
        acc: (f64, f64),
        out: &mut Vec<(f64, f64)>,
    ) {
        if at == to {
            out.push(acc);
            return;
        }
        for &e in g.incident(at) {
            let edge = &g.edges[e];
            let v = if edge.from == at { edge.to } else { edge.from };
            if !seen[v] {
                seen[v] = true;
                walk(
                    g,
                    v,
                    to,
                    seen,
                    (acc.0 + edge.length_km, acc.1 + edge.exposure()),
                    out,
                );
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; g.nodes.len()];
    seen[from] = true;
    let mut all = Vec::new();
    walk(g, from, to, &mut seen, (0.0, 0.0), &mut all);
    let short = all
        .iter()
        .copied()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))?;
    let clean = all
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))?;
    Some((short, clean))
}

fn arb_graph() -> impl Strategy<Value = RoadGraph> {
    (2usize..=10).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n, 1u32..20, 1u32..10), 0..25).prop_map(move |es| {
            RoadGraph::new(
                nodes(n),
                es.into_iter()
                    .map(|(a, b, l, w)| edge(a, b, l as f64, w as f64))
                    .collect(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dijkstra_matches_enumeration(g in arb_graph(), a in 0usize..10, b in 0usize..10) {
        let (from, to) = (a % g.nodes.len(), b % g.nodes.len());
        match (route(&g, from, to), brute_force(&g, from, to)) {
            (Ok(plan), Some((short, clean))) => {
                prop_assert_eq!((plan.shortest.length_km, plan.shortest.exposure), short);
                prop_assert_eq!((plan.clean.length_km, plan.clean.exposure), clean);
                prop_assert!(plan.clean.exposure <= plan.shortest.exposure);
                prop_assert!(plan.shortest.length_km <= plan.clean.length_km);
            }
            (Err(Error::Disconnected { .. }), None) => {}
            (r, o) => prop_assert!(false, "route {:?} vs enumeration {:?}", r, o),
        }
    }

    #[test]
    fn clean_path_invariant_to_weight_scale(g in arb_graph(), a in 0usize..10, b in 0usize..10, c in 1u32..50) {
        let (from, to) = (a % g.nodes.len(), b % g.nodes.len());
        let mut scaled = g.clone();
        for e in &mut scaled.edges {
            e.paqi_weight *= c as f64;
        }
        if let Ok(plan) = route(&g, from, to) {
            prop_assert_eq!(route(&scaled, from, to).unwrap().clean.nodes, plan.clean.nodes);
        }
    }
}
