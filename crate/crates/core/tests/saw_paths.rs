use wetting_core::saw::{
    contacts, enumerate_saw, grand_canonical_partition, is_regular, regularity_stats, saw_partition, Constraint,
    LatticePath,
};
use wetting_core::{Execution, PinningPotential};

fn seq() -> Execution {
    Execution::Sequential
}

#[test]
fn hand_built_path_contacts() {
    // three horizontal bonds on the wall line, seven interior level-zero vertices
    let v = vec![
        (0, 0), (1, 0), (2, 0), (2, 1), (3, 1), (4, 1), (4, 0), (4, -1), (5, -1), (5, 0),
        (6, 0), (6, 1), (7, 1), (7, 0), (7, -1), (8, -1), (8, 0), (8, 1), (9, 1), (9, 0),
    ];
    let p = LatticePath::new(v).unwrap();
    let c = contacts(&p, 0, 10);
    assert_eq!((c.n, c.n_hat, c.n_ext), (7, 3, 0));
    assert_eq!(contacts(&p, 1, 10).n, 6);
    for u in 0..=10 {
        assert!(is_regular(&p, u, 10).unwrap(), "u={u}");
    }
}

#[test]
fn external_contacts_left_of_span() {
    let p = LatticePath::new(vec![(0, 0), (-1, 0), (-1, 1), (0, 1), (1, 1), (2, 1), (2, 0)]).unwrap();
    let c = contacts(&p, 0, 3);
    assert_eq!(c.n_ext, 1);
    assert!(!is_regular(&p, 0, 3).unwrap());
}

#[test]
fn enumerated_paths_are_valid_and_dump_cleanly() {
    let paths = enumerate_saw((0, 0), (2, 1), 4).unwrap();
    assert!(!paths.is_empty());
    for p in &paths {
        assert_eq!(p.start(), (0, 0));
        assert_eq!(p.end(), (2, 1));
        assert!(p.length() <= 7 && p.length() % 2 == 1);
        assert_eq!(&LatticePath::from_dump(&p.to_dump()).unwrap(), p);
    }
    let mut sorted = paths.clone();
    sorted.dedup();
    assert_eq!(sorted.len(), paths.len());
}

#[test]
fn wider_cap_stays_inside_earlier_interval() {
    let pot = PinningPotential::from_values(vec![0.05, 0.02]).unwrap();
    for (l, beta) in [(4, 2.5), (5, 3.0)] {
        let coarse = saw_partition(l, beta, 2, Constraint::None, Some(&pot), true, seq()).unwrap();
        let fine = saw_partition(l, beta, 6, Constraint::None, Some(&pot), true, seq()).unwrap();
        let (a, b) = (coarse.interval(), fine.interval());
        assert!(a.contains_interval(&b), "{a:?} vs {b:?}");
        assert!(b.width() < a.width());
    }
}

#[test]
fn constraints_shrink_the_ensemble() {
    let free = saw_partition(5, 2.5, 6, Constraint::None, None, false, seq()).unwrap();
    let wall = saw_partition(5, 2.5, 6, Constraint::Wall { depth: 0 }, None, false, seq()).unwrap();
    let avoid = saw_partition(5, 2.5, 6, Constraint::AvoidLevel { level: 1 }, None, false, seq()).unwrap();
    assert!(wall.partial_sum < free.partial_sum);
    assert!(avoid.partial_sum < free.partial_sum);
    assert!(wall.paths < free.paths);
}

#[test]
fn closed_form_two_column_sum() {
    let beta: f64 = 3.0;
    let exact = (-beta).exp() * (1.0 + 2.0 * (-2.0 * beta).exp() / (1.0 - (-2.0 * beta).exp()));
    let z = saw_partition(2, beta, 12, Constraint::None, None, false, seq()).unwrap();
    // the full ensemble also contains paths with extra horizontal bonds
    assert!(z.interval().hi > exact);
    assert!(z.partial_sum > 0.99 * exact);
}

#[test]
fn regularity_moments_and_bounds() {
    let zero_a = regularity_stats(6, 3.0, 6, 0.0, seq()).unwrap();
    assert!(zero_a.ext_moment_minus_one.contains(0.0));
    assert_eq!(zero_a.ext_moment_minus_one.lo, 0.0);
    for beta in [3.0, 4.0] {
        let s = regularity_stats(6, beta, 8, 0.1, seq()).unwrap();
        assert!(s.first_edge_vertical.hi < 3.0 * (-beta).exp());
    }
    let hot = regularity_stats(6, 2.5, 8, 0.1, seq()).unwrap();
    let cold = regularity_stats(6, 4.0, 8, 0.1, seq()).unwrap();
    for u in [0, 3, 6] {
        assert!(cold.nonregular_at(u).hi < hot.nonregular_at(u).lo, "u={u}");
    }
    assert!(regularity_stats(13, 3.0, 2, 0.1, seq()).is_err());
}

#[test]
fn pinning_rate_grows_with_amplitude() {
    for l in [6, 8] {
        let plain = saw_partition(l, 2.5, 5, Constraint::Wall { depth: 0 }, None, false, seq()).unwrap();
        let mut last = f64::NEG_INFINITY;
        for amp in [0.1, 0.2, 0.4, 0.8] {
            let vals = (0..8).map(|j| amp / ((j + 1) * (j + 1)) as f64).collect();
            let pot = PinningPotential::from_values(vals).unwrap();
            let z = saw_partition(l, 2.5, 5, Constraint::Wall { depth: 0 }, Some(&pot), false, seq()).unwrap();
            let rate = (z.partial_sum / plain.partial_sum).ln() / l as f64;
            assert!(rate > last);
            last = rate;
        }
    }
}

#[test]
fn grand_canonical_dominates_fixed_endpoint() {
    let xi = grand_canonical_partition(4, 3.0, 4, seq()).unwrap();
    let z = saw_partition(4, 3.0, 4, Constraint::None, None, false, seq()).unwrap();
    assert!(xi.partial_sum > z.partial_sum);
    assert!(xi.paths > z.paths);
    let par = grand_canonical_partition(4, 3.0, 4, Execution::Parallel).unwrap();
    assert_eq!(par.paths, xi.paths);
    assert!((par.partial_sum - xi.partial_sum).abs() <= 1e-15 * xi.partial_sum);
}
