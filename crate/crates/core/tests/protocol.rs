use masim::baseline::{self, BaselineGains};
use masim::graph::{self, GraphTopology};
use masim::harness::{self, scenarios_dir};
use masim::linalg::{Mat, Vector};
use masim::observer::{self, ObserverGains};
use masim::plant::{Signal, SystemModel};
use masim::scenario::Scenario;
use masim::trust::{self, Incoming};

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn scalar(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

#[test]
fn local_error_vanishes_on_the_manifold() {
    let z = v(&[0.7, -0.2]);
    let states = vec![z.clone(); 5];
    for i in 0..5 {
        assert_eq!(baseline::local_tracking_error(i, &states, &z, &graph::paper_graph_a()).norm(), 0.0);
    }
}

#[test]
fn chain_local_error_is_negative_offset() {
    let g = GraphTopology::from_one_based(2, &[(1, 2, 1.0)], vec![1.0, 0.0]).unwrap();
    let z = v(&[1.0, 2.0]);
    let delta = v(&[0.3, -0.1]);
    let states = vec![z.clone(), &z + &delta];
    assert!((baseline::local_tracking_error(1, &states, &z, &g) + delta).norm() < 1e-15);
}

#[test]
fn local_error_matches_global_form() {
    let g = graph::paper_graph_a();
    let h = graph::build_matrices(&g).unwrap().h;
    let z = v(&[0.4, -1.3]);
    let states: Vec<Vector> = (0..5).map(|i| v(&[(i as f64 * 1.7).sin(), (i as f64 * 0.9).cos()])).collect();
    for i in 0..5 {
        let mut want = Vector::zeros(2);
        for j in 0..5 {
            want -= (&states[j] - &z) * h[(i, j)];
        }
        let got = baseline::local_tracking_error(i, &states, &z, &g);
        assert!((got - want).norm() < 1e-14);
    }
}

#[test]
fn normalizer_properties() {
    assert_eq!(baseline::normalizer(&v(&[3.0, 4.0]), 0.0), v(&[0.6, 0.8]));
    assert_eq!(baseline::normalizer(&v(&[0.0, 0.0]), 0.0), v(&[0.0, 0.0]));
    assert_eq!(baseline::normalizer(&v(&[0.0, 0.0]), 1e-3), v(&[0.0, 0.0]));
    let h = baseline::normalizer(&v(&[-2.0, 5.0]), 0.0);
    assert!((h.norm() - 1.0).abs() < 1e-15);
}

#[test]
fn two_term_law_values() {
    let g = BaselineGains { c1: 1.0, c2: 4.0, k: scalar(-1.0) };
    // c1 K e + c2 h(K e) = −2 − 4.
    let u = baseline::two_term(&g.k, &v(&[2.0]), g.c1, g.c2, 0.0);
    assert_eq!(u[0], -6.0);
    let topo = GraphTopology::from_one_based(1, &[], vec![1.0]).unwrap();
    let z = v(&[0.5]);
    assert_eq!(baseline::control(0, &[z.clone()], &z, &topo, &g, 0.0)[0], 0.0);
}

#[test]
fn baseline_design_on_paper_graph() {
    let m = SystemModel::paper();
    let gm = graph::build_matrices(&graph::paper_graph_a()).unwrap();
    let g = BaselineGains::design(&m, &gm, 1.1, 1.1).unwrap();
    assert!((g.k[(0, 0)] + 1.11634).abs() < 1e-5 && (g.k[(0, 1)] + 0.12311).abs() < 1e-5);
    assert!(g.c1 >= BaselineGains::c1_bound(&gm));
    assert!((g.c2 - 4.4).abs() < 1e-12);
}

#[test]
fn observer_design_on_paper_graph() {
    let m = SystemModel::paper();
    let gm = graph::build_matrices(&graph::paper_graph_a()).unwrap();
    let o = ObserverGains::design(&m, &gm, 1.1).unwrap();
    assert!((o.f[(0, 0)] + 1.11634).abs() < 1e-5 && (o.f[(0, 1)] + 0.12311).abs() < 1e-5);
    assert!((o.rho - 4.4).abs() < 1e-12);
    let sym = &gm.phi_mat * &gm.h + gm.h.transpose() * &gm.phi_mat;
    let lam = sym.symmetric_eigen().eigenvalues.min();
    assert!((o.c - 1.1 * 5.0 / lam).abs() < 1e-9);
}

#[test]
fn observer_design_scalar_closed_form() {
    let m = SystemModel::new(scalar(0.0), scalar(1.0), scalar(1.0), vec![Signal::Zero], Some(0.0)).unwrap();
    let topo = GraphTopology::from_one_based(1, &[], vec![1.0]).unwrap();
    let gm = graph::build_matrices(&topo).unwrap();
    let o = ObserverGains::design(&m, &gm, 1.0).unwrap();
    assert!((o.p_obs[(0, 0)] - 1.0).abs() < 1e-12 && (o.f[(0, 0)] + 1.0).abs() < 1e-12);
    assert_eq!((gm.h[(0, 0)], gm.phi[0]), (1.0, 1.0));
    assert!((o.c - 0.5).abs() < 1e-12);
}

#[test]
fn observer_input_values() {
    let o = ObserverGains { f: scalar(-1.0), c: 1.0, rho: 4.0, p_obs: scalar(1.0) };
    assert_eq!(observer::observer_input(&v(&[0.0]), &o, 0.0)[0], 0.0);
    // The two-term law itself: c F η + ρ h(F η) = −2 − 4.
    assert_eq!(baseline::two_term(&o.f, &v(&[2.0]), o.c, o.rho, 0.0)[0], -6.0);
    // The observer applies it to the disagreement −η.
    assert_eq!(observer::observer_input(&v(&[2.0]), &o, 0.0)[0], 6.0);
}

#[test]
fn eta_with_and_without_trust() {
    let z = v(&[1.0, 0.0]);
    let ri = v(&[1.0, 0.0]);
    let rj = v(&[-3.0, 2.0]);
    let synced = [Incoming { weight: 1.0, r: &ri, confidence: 1.0, trust: 1.0 }];
    assert_eq!(trust::eta(&ri, &synced, 1.0, &z).norm(), 0.0);
    let distrusted = [Incoming { weight: 1.0, r: &rj, confidence: 0.0, trust: 1.0 }];
    assert_eq!(trust::eta(&ri, &distrusted, 0.0, &z).norm(), 0.0);
    let full = [Incoming { weight: 2.0, r: &rj, confidence: 1.0, trust: 1.0 }];
    assert_eq!(trust::eta(&ri, &full, 0.5, &z), (&rj - &ri) * 2.0);
}

#[test]
fn evidence_and_gap_score() {
    let z = v(&[0.2, 0.2]);
    let inc = [Incoming { weight: 1.0, r: &z, confidence: 1.0, trust: 1.0 }];
    let ev = trust::observe(&z, &inc, 1.0, &z, 0.1);
    assert_eq!((ev.o, ev.s, ev.q), (0.0, 0.0, 1.0));
    assert!((trust::gap_score(0.1, 1.0, 0.1) - 0.1).abs() < 1e-15);
}

#[test]
fn confidence_filter_closed_form() {
    let (beta, dt) = (10.0, 1e-3);
    let mut c = 0.0;
    for k in 1..=500 {
        c = trust::update_confidence(0.5, c, beta, dt);
        let t = k as f64 * dt;
        assert!((c - 0.5 * (1.0 - (-beta * t).exp())).abs() < 1e-10);
    }
    let mut c = 1.0;
    for _ in 0..100 {
        c = trust::update_confidence(1.0, c, beta, dt);
    }
    assert_eq!(c, 1.0);
}

#[test]
fn trust_weights_take_the_max() {
    assert_eq!(trust::trust_weights(0.2, &[0.7], false), vec![0.7]);
    assert_eq!(trust::trust_weights(0.9, &[0.7, 0.1], false), vec![0.9, 0.9]);
    let n = trust::trust_weights(0.0, &[0.5, 0.25, 0.25], true);
    assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    let a = v(&[0.3, 0.1]);
    assert!(trust::neighbor_scores(&[&a, &a, &a], 0.1).iter().all(|l| (l - 1.0).abs() < 1e-14));
}

#[test]
fn low_confidence_trust_settles_on_neighbour_score() {
    let good = v(&[0.0, 0.0]);
    let bad = v(&[2.0, 0.0]);
    let theta = 0.1;
    let l = trust::neighbor_scores(&[&good, &good, &bad], theta);
    // h = (2/3, 0): the outlier sits 4/3 away from the average.
    assert!((l[2] - theta / (4.0 / 3.0 + theta)).abs() < 1e-15);
    let (mut d, mut t) = (1.0, 1.0);
    for _ in 0..2000 {
        (d, t) = trust::update_trust(l[2], d, 0.01, 10.0, 1e-3);
    }
    assert!((t - l[2]).abs() < 1e-6 && (d - l[2]).abs() < 1e-6);
}

fn load(name: &str) -> Scenario {
    Scenario::load(&scenarios_dir().join(name), &[]).unwrap()
}

#[test]
fn no_attack_run_keeps_full_confidence() {
    let tr = harness::simulate(&load("paper_no_attack_baseline.toml")).unwrap().trace;
    for i in 0..5 {
        let min_c = tr.indices_in(2.0, 10.0).map(|k| tr.agents[i][k].c).fold(1.0, f64::min);
        assert!(min_c >= 0.99, "agent {} C = {min_c}", i + 1);
    }
}

#[test]
fn type1_attack_leaves_observers_on_the_leader() {
    let tr = harness::simulate(&load("paper_fig4_hinf.toml")).unwrap().trace;
    for i in 0..5 {
        let err = tr.max_over(10.0, 30.0, |k| tr.observer_error(i, k));
        assert!(err < 1e-2, "agent {}: {err}", i + 1);
    }
}

fn o_and_s(name: &str, agent: usize) -> (f64, f64) {
    let tr = harness::simulate(&load(name)).unwrap().trace;
    let o = tr.max_over(25.0, 30.0, |k| tr.agents[agent][k].o);
    let s = tr.max_over(25.0, 30.0, |k| tr.agents[agent][k].s);
    (o, s)
}

#[test]
fn type2_attack_hides_in_o_but_not_in_s() {
    // On G_B agent 4 hears agents 1, 2 and 5: its trust-weighted error o settles while the
    // raw disagreement s with the corrupted neighbour stays large.
    let (o, s) = o_and_s("paper_fig6_type2_assum4.toml", 3);
    assert!(o < 1e-2, "o = {o}");
    assert!(s > 0.1, "s = {s}");
}

#[test]
fn single_in_neighbour_cannot_see_type2() {
    // On G_A agent 4 hears only agent 2 and reaches consensus with it, so s vanishes too
    // and confidence has nothing to react to.
    let (o, s) = o_and_s("paper_fig5_type2_noassum4.toml", 3);
    assert!(o < 1e-2 && s < 1e-2, "o = {o}, s = {s}");
}

#[test]
fn lyapunov_function_does_not_increase() {
    let sc = load("paper_no_attack_baseline.toml");
    let tr = harness::simulate(&sc).unwrap().trace;
    let v: Vec<f64> = (0..tr.t.len())
        .map(|k| {
            let etas: Vec<Vector> = (0..5)
                .map(|i| {
                    let ri = &tr.agents[i][k].r;
                    let mut e = (ri - &tr.leader[k]) * sc.topology.pinning()[i];
                    for (j, w) in sc.topology.in_neighbors(i) {
                        e += (ri - &tr.agents[j][k].r) * w;
                    }
                    e
                })
                .collect();
            observer::lyapunov_value(&etas, &sc.matrices.phi, &sc.observer.p_obs)
        })
        .collect();
    for w in v.windows(2) {
        assert!(w[1] - w[0] <= 1e-6, "{} -> {}", w[0], w[1]);
    }
}
