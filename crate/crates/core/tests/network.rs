use nalgebra::DMatrix;

use sparse_ode::network::{compare_network, AdjacencyOutput, Cell, Provenance};
use sparse_ode::{Error, PipelineConfig, TimeMap};

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("g{i}")).collect()
}

fn adjacency(p: usize, edges: &[(usize, usize)]) -> AdjacencyOutput {
    let mut a = DMatrix::zeros(p, p);
    for &(s, t) in edges {
        a[(t, s)] = 0.5;
    }
    AdjacencyOutput {
        names: names(p),
        coefficients: a,
        provenance: Provenance {
            tool_version: sparse_ode::VERSION.to_string(),
            seed: None,
            input: None,
            time_map: TimeMap::IDENTITY,
            config: PipelineConfig::default(),
            bandwidths: vec![],
            rows: vec![],
        },
    }
}

fn edge(s: usize, t: usize) -> (String, String) {
    (format!("g{s}"), format!("g{t}"))
}

#[test]
fn small_grid_by_hand() {
    // regulators g0, g1 over targets g0..g3:
    //        g0 g1
    //   g0   -  R
    //   g1   *  -
    //   g2   I  .
    //   g3   .  *
    let adj = adjacency(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
    let reference = vec![edge(1, 0), edge(0, 1), edge(1, 3)];
    let cmp = compare_network(&adj, &reference, None).unwrap();
    assert_eq!(cmp.regulators, vec!["g1", "g0"]);
    let cmp = compare_network(&adj, &reference, Some(&names(2))).unwrap();
    use Cell::*;
    assert_eq!(
        cmp.cells,
        vec![
            vec![SelfLoop, ReferenceOnly],
            vec![Both, SelfLoop],
            vec![InferredOnly, Neither],
            vec![Neither, Both],
        ]
    );
    let s = cmp.stats;
    assert_eq!((s.true_positive, s.false_positive, s.false_negative, s.true_negative), (2, 1, 1, 2));
    assert_eq!(s.ppv(), Some(2.0 / 3.0));
    assert_eq!(s.sensitivity(), Some(2.0 / 3.0));
    let table = cmp.render();
    assert!(table.contains("ppv 0.6667\n"));
    assert!(table.contains("sensitivity 0.6667\n"));
}

#[test]
fn edges_outside_the_regulator_columns_are_ignored() {
    let adj = adjacency(3, &[(2, 0)]);
    let cmp = compare_network(&adj, &[edge(0, 1)], None).unwrap();
    assert_eq!(cmp.stats.false_positive, 0);
    assert_eq!(cmp.stats.total(), 2);
}

#[test]
fn empty_reference_leaves_sensitivity_undefined() {
    let adj = adjacency(3, &[(0, 1)]);
    let cmp = compare_network(&adj, &[], Some(&names(3))).unwrap();
    assert_eq!(cmp.stats.sensitivity(), None);
    assert_eq!(cmp.stats.ppv(), Some(0.0));
    assert!(cmp.render().contains("sensitivity undefined"));

    let empty = adjacency(3, &[]);
    let cmp = compare_network(&empty, &[], Some(&names(3))).unwrap();
    assert!(cmp.render().contains("ppv undefined"));
}

#[test]
fn unknown_names_are_rejected() {
    let adj = adjacency(3, &[]);
    let err = compare_network(&adj, &[("g0".into(), "zz".into())], None).unwrap_err();
    assert!(matches!(err, Error::UnknownGeneName(ref n) if n == "zz"));
    let err = compare_network(&adj, &[], Some(&["nope".to_string()])).unwrap_err();
    assert!(matches!(err, Error::UnknownGeneName(_)));
}
