use masim::graph::{self, Edge, GraphTopology};
use masim::linalg::{Mat, Vector};
use masim::Error;
use proptest::prelude::*;

fn chain() -> GraphTopology {
    GraphTopology::from_one_based(2, &[(1, 2, 1.0)], vec![1.0, 0.0]).unwrap()
}

/// Plain Gaussian elimination with partial pivoting, kept independent of nalgebra.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

#[test]
fn chain_laplacian_and_h() {
    let m = graph::build_matrices(&chain()).unwrap();
    assert_eq!(m.laplacian, Mat::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 1.0]));
    assert_eq!(m.h, Mat::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
}

#[test]
fn graph_a_phi_against_elimination() {
    let m = graph::build_matrices(&graph::paper_graph_a()).unwrap();
    let ht: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| m.h[(j, i)]).collect()).collect();
    let want = gauss_solve(ht, vec![1.0; 5]);
    for (i, w) in want.iter().enumerate() {
        assert!((m.phi[i] - w).abs() < 1e-12);
    }
    assert_eq!(m.phi.iter().map(|v| v.round()).collect::<Vec<_>>(), vec![5.0, 3.0, 1.0, 2.0, 1.0]);
}

#[test]
fn graph_a_symmetrized_lambda_is_positive() {
    let m = graph::build_matrices(&graph::paper_graph_a()).unwrap();
    let sym = &m.phi_mat * &m.h + m.h.transpose() * &m.phi_mat;
    let eig = sym.symmetric_eigen().eigenvalues;
    assert!((m.lambda_min_sym - eig.min()).abs() < 1e-12);
    assert!(m.lambda_min_sym > 0.0);
    // H is triangular with a repeated unit eigenvalue (defective), so only ~√ε accuracy.
    assert!((m.lambda_min_h - 1.0).abs() < 1e-6);
}

#[test]
fn unpinned_graph_has_no_spanning_tree() {
    let g = GraphTopology::from_one_based(2, &[(1, 2, 1.0)], vec![0.0, 0.0]).unwrap();
    assert!(matches!(graph::build_matrices(&g), Err(Error::SpanningTreeMissing)));
    let isolated = GraphTopology::from_one_based(2, &[], vec![0.0, 0.0]).unwrap();
    assert!(!graph::has_spanning_tree(&isolated));
    let single = GraphTopology::from_one_based(1, &[], vec![1.0]).unwrap();
    assert!(graph::has_spanning_tree(&single));
    assert!(graph::has_spanning_tree(&graph::paper_graph_a()));
}

#[test]
fn invalid_topologies_are_rejected() {
    assert!(GraphTopology::from_one_based(2, &[(1, 1, 1.0)], vec![1.0, 0.0]).is_err());
    assert!(GraphTopology::from_one_based(2, &[(1, 3, 1.0)], vec![1.0, 0.0]).is_err());
    assert!(GraphTopology::from_one_based(2, &[(1, 2, 0.0)], vec![1.0, 0.0]).is_err());
    assert!(GraphTopology::from_one_based(2, &[(1, 2, 1.0), (1, 2, 2.0)], vec![1.0, 0.0]).is_err());
    assert!(GraphTopology::from_one_based(2, &[(1, 2, 1.0)], vec![-1.0, 0.0]).is_err());
}

#[test]
fn connectivity_margins() {
    assert_eq!(graph::connectivity_margin(&graph::paper_graph_a(), &[1]), 0);
    assert_eq!(graph::connectivity_margin(&graph::paper_graph_b(), &[1]), 1);
    let mut edges = Vec::new();
    for i in 1..=5 {
        for j in 1..=5 {
            if i != j {
                edges.push((i, j, 1.0));
            }
        }
    }
    let complete = GraphTopology::from_one_based(5, &edges, vec![1.0; 5]).unwrap();
    assert_eq!(graph::connectivity_margin(&complete, &[]), 2);
    assert_eq!(graph::paper_graph_a().in_degree(3), 1);
    assert_eq!(graph::paper_graph_b().in_degree(3), 3);
}

#[test]
fn with_edges_extends_graph_a_to_b() {
    let b = graph::paper_graph_a()
        .with_edges(&[Edge { from: 4, to: 3, weight: 1.0 }, Edge { from: 0, to: 3, weight: 1.0 }])
        .unwrap();
    assert_eq!(graph::laplacian(&b), graph::laplacian(&graph::paper_graph_b()));
}

fn random_graph() -> impl Strategy<Value = GraphTopology> {
    (2usize..7).prop_flat_map(|n| {
        let pairs = proptest::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..3 * n);
        let pins = proptest::collection::vec(prop_oneof![Just(0.0), 0.5f64..2.0], n);
        (Just(n), pairs, pins).prop_map(|(n, pairs, mut pins)| {
            // A spanning chain from the leader guarantees connectivity.
            pins[0] = pins[0].max(1.0);
            let mut edges: Vec<Edge> = (1..n).map(|i| Edge { from: i - 1, to: i, weight: 1.0 }).collect();
            for (f, t, w) in pairs {
                if f != t && !edges.iter().any(|e| e.from == f && e.to == t) {
                    edges.push(Edge { from: f, to: t, weight: w });
                }
            }
            GraphTopology::new(n, edges, pins).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn laplacian_rows_sum_to_zero(g in random_graph()) {
        let l = graph::laplacian(&g);
        for r in l.row_iter() {
            prop_assert!(r.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn phi_is_positive_and_solves_ht(g in random_graph()) {
        let m = graph::build_matrices(&g).unwrap();
        prop_assert!(m.phi.iter().all(|&p| p > 0.0));
        let res = m.h.transpose() * &m.phi - Vector::repeat(g.n_agents(), 1.0);
        prop_assert!(res.norm() < 1e-9 * m.phi.norm().max(1.0));
        prop_assert!(m.lambda_min_sym > 0.0);
    }
}
