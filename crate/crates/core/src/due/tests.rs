use super::*;
use crate::operators::{estimate_lipschitz, sample_monotonicity};
use crate::solvers::{solve_fbf, Schedule, SolveOptions, StepRule};

fn toy() -> (Network, PathSet) {
    fixture("two_path_toy").unwrap()
}

#[test]
fn penalty_off_gives_plain_delays() {
    let (net, paths) = fixture("nguyen_topology").unwrap();
    let grid = TimeGrid::uniform(0.0, 2.0, 12).unwrap();
    let model = DelayModel::synthetic_affine(&net, &paths, &grid, 1.0, 0.25).unwrap();
    let h = HVector::filled(paths.len(), 12, 30.0);
    let d = path_delays(&model, &net, &paths, &h, &grid).unwrap();
    let psi = effective_delay(&model, &Penalty::off(), &net, &paths, &h, &grid).unwrap();
    assert_eq!(d, psi);
}

#[test]
fn zero_kernel_gives_constant_delays() {
    let (net, paths) = toy();
    let grid = TimeGrid::uniform(0.0, 2.0, 8).unwrap();
    let model = DelayModel::affine(vec![0.25, 0.35], InteractionKernel::zero(2, 8)).unwrap();
    let h = HVector::from_fn(2, 8, |p, i| (p * 100 + i * 37) as f64);
    let d = path_delays(&model, &net, &paths, &h, &grid).unwrap();
    assert!(d.channel(0).iter().all(|&v| v == 0.25));
    assert!(d.channel(1).iter().all(|&v| v == 0.35));
}

#[test]
fn linear_penalty_by_hand() {
    // One bin on [0, 1]: midpoint 0.5, D = 0.5, T_A = 0.8, lateness 0.2.
    let net = Network::new(
        vec![1, 2],
        vec![Link {
            id: 1,
            from: 1,
            to: 2,
            free_flow_time: 0.5,
            capacity: 1000.0,
        }],
        vec![OdPair {
            origin: 1,
            destination: 2,
            demand: 10.0,
            target_arrival: 0.8,
        }],
    )
    .unwrap();
    let paths = PathSet::new(&net, vec![vec![1]], vec![0]).unwrap();
    let grid = TimeGrid::uniform(0.0, 1.0, 1).unwrap();
    let model = DelayModel::affine(vec![0.5], InteractionKernel::zero(1, 1)).unwrap();
    let h = HVector::filled(1, 1, 10.0);
    let psi = effective_delay(
        &model,
        &Penalty::new(1.0, 1).unwrap(),
        &net,
        &paths,
        &h,
        &grid,
    )
    .unwrap();
    assert!((psi.get(0, 0) - 0.7).abs() < 1e-12);
    let pq = effective_delay(
        &DelayModel::PointQueue,
        &Penalty::new(1.0, 1).unwrap(),
        &net,
        &paths,
        &h,
        &grid,
    )
    .unwrap();
    assert!((pq.get(0, 0) - 0.7).abs() < 1e-12);
}

#[test]
fn penalty_validation() {
    assert!(Penalty::new(-1.0, 2).is_err());
    assert!(Penalty::new(1.0, 3).is_err());
    let p = Penalty::new(2.0, 2).unwrap();
    assert_eq!(p.value(-1.0), 0.0);
    assert_eq!(p.value(0.0), 0.0);
    assert_eq!(p.value(0.5), 0.5);
}

#[test]
fn effective_delay_dominates_free_flow() {
    let (net, paths) = fixture("nguyen_topology").unwrap();
    let grid = TimeGrid::uniform(0.0, 2.0, 12).unwrap();
    let model = DelayModel::synthetic_affine(&net, &paths, &grid, 1.0, 0.25).unwrap();
    let h = HVector::from_fn(paths.len(), 12, |p, i| ((p + 3 * i) % 7) as f64 * 20.0);
    let psi = effective_delay(&model, &Penalty::default(), &net, &paths, &h, &grid).unwrap();
    let d = path_delays(&model, &net, &paths, &h, &grid).unwrap();
    let min_link = net
        .links()
        .iter()
        .map(|l| l.free_flow_time)
        .fold(f64::INFINITY, f64::min);
    for (a, b) in psi.as_slice().iter().zip(d.as_slice()) {
        assert!(a >= b && *b >= min_link && a.is_finite());
    }
}

#[test]
fn min_cost_examples() {
    let psi = HVector::from_vec(1, 4, vec![5.0, 2.0, 7.0, 4.0]).unwrap();
    assert_eq!(min_costs(&psi, &[0]).0, vec![2.0]);
    let psi = HVector::from_vec(2, 2, vec![3.0, 3.0, 2.0, 2.5]).unwrap();
    let (nu_p, nu_w) = min_costs(&psi, &[0, 0]);
    assert_eq!(nu_p, vec![3.0, 2.0]);
    assert_eq!(nu_w, vec![2.0]);
}

#[test]
fn od_gap_examples() {
    let h = HVector::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let psi = HVector::from_vec(2, 2, vec![2.0, 9.0, 1.0, 2.3]).unwrap();
    let gap = od_gap(&h, &psi, &[0, 0], 0.0)[0].unwrap();
    assert!((gap - 0.3).abs() < 1e-12);
    let equal = HVector::from_vec(2, 2, vec![2.0, 9.0, 1.0, 2.0]).unwrap();
    assert_eq!(od_gap(&h, &equal, &[0, 0], 0.0), vec![Some(0.0)]);
    assert_eq!(
        od_gap(&HVector::zeros(2, 2), &psi, &[0, 0], 0.0),
        vec![None]
    );
}

#[test]
fn od_gap_shrinks_with_threshold() {
    let h = HVector::from_fn(3, 5, |p, i| ((p * 7 + i * 3) % 5) as f64);
    let psi = HVector::from_fn(3, 5, |p, i| 1.0 + ((p * 11 + i * 5) % 9) as f64 / 10.0);
    let owner = [0, 1, 0];
    let mut last = od_gap(&h, &psi, &owner, -1.0);
    for theta in [0.0, 1.0, 2.0, 3.0, 4.0] {
        let now = od_gap(&h, &psi, &owner, theta);
        for (a, b) in now.iter().zip(&last) {
            if let Some(a) = a {
                assert!(*a <= b.unwrap());
            }
        }
        last = now;
    }
}

fn solve(problem: &VIProblem, gamma: f64, kmax: usize) -> HVector {
    let x0 = problem
        .set
        .project_point(
            &HVector::zeros(problem.shape().0, problem.shape().1),
            &problem.grid,
        )
        .unwrap();
    let r = solve_fbf(
        problem,
        StepRule::Constant { gamma },
        &Schedule::default(),
        &x0,
        SolveOptions::new(0.0, kmax),
    )
    .unwrap();
    r.feasible_point
}

#[test]
fn cheaper_constant_path_takes_all_flow() {
    let (net, paths) = toy();
    let grid = TimeGrid::uniform(0.0, 2.0, 6).unwrap();
    let model = DelayModel::affine(vec![1.0, 2.0], InteractionKernel::zero(2, 6)).unwrap();
    let p = build_due_problem(net, paths, model, Penalty::off(), grid, true).unwrap();
    let h = solve(&p, 500.0, 2_000);
    for i in 0..6 {
        assert!((h.get(0, i) - 750.0).abs() < 1e-6, "{h:?}");
        assert_eq!(h.get(1, i), 0.0);
    }
    let psi = p.evaluate(&h).unwrap();
    assert_eq!(
        od_gap(&h, &psi, &[0, 0], support_threshold(&h)),
        vec![Some(0.0)]
    );
}

#[test]
fn symmetric_paths_split_equally() {
    let (net, paths) = toy();
    let grid = TimeGrid::uniform(0.0, 2.0, 4).unwrap();
    let m = 4;
    let time: Vec<f64> = (0..m * m)
        .map(|k| if k / m == k % m { 0.5 } else { 0.0 })
        .collect();
    let kernel = InteractionKernel::new(2, m, vec![1e-3, 0.0, 0.0, 1e-3], time).unwrap();
    let model = DelayModel::affine(vec![0.3, 0.3], kernel).unwrap();
    let p = build_due_problem(net, paths, model, Penalty::off(), grid, true).unwrap();
    let l = p.lipschitz_hint.unwrap();
    let h = solve(&p, 0.9 / l, 20_000);
    for i in 0..m {
        assert!((h.get(0, i) - h.get(1, i)).abs() < 1e-3, "{h:?}");
        assert!((h.get(0, i) - 375.0).abs() < 1e-3);
    }
}

#[test]
fn psd_kernel_is_monotone_and_within_lipschitz_bound() {
    for name in ["two_path_toy", "nguyen_topology"] {
        let scenario = DueScenario {
            fixture: name.into(),
            bins: 8,
            penalty: Penalty::off(),
            ..DueScenario::default()
        };
        let p = builtin_due_problem(&scenario).unwrap();
        let report = sample_monotonicity(&p, 2_000, 1).unwrap();
        assert_eq!(report.monotone_violations, 0, "{name}: {report:?}");
        let bound = p.lipschitz_hint.unwrap();
        let est = estimate_lipschitz(&p, 500, 2).unwrap();
        assert!(est <= bound * (1.0 + 1e-12), "{name}: {est} > {bound}");
    }
}

#[test]
fn linear_penalty_keeps_a_lipschitz_hint() {
    let scenario = DueScenario {
        penalty: Penalty::new(2.0, 1).unwrap(),
        ..DueScenario::default()
    };
    let p = builtin_due_problem(&scenario).unwrap();
    let bound = p.lipschitz_hint.unwrap();
    assert!(estimate_lipschitz(&p, 500, 4).unwrap() <= bound);
    let quadratic = builtin_due_problem(&DueScenario::default()).unwrap();
    assert!(quadratic.lipschitz_hint.is_none());
    let pq = DueScenario {
        model: DelayModelKind::PointQueue,
        ..DueScenario::default()
    };
    assert!(builtin_due_problem(&pq).unwrap().lipschitz_hint.is_none());
}

#[test]
fn point_queue_operator_clamps_negative_queries() {
    let scenario = DueScenario {
        model: DelayModelKind::PointQueue,
        fixture: "nguyen_topology".into(),
        bins: 6,
        ..DueScenario::default()
    };
    let p = builtin_due_problem(&scenario).unwrap();
    let x = HVector::from_fn(24, 6, |c, i| if (c + i) % 3 == 0 { -50.0 } else { 100.0 });
    let clamped = x.map(|v| v.max(0.0));
    assert_eq!(p.evaluate(&x).unwrap(), p.evaluate(&clamped).unwrap());
}

#[test]
fn projection_meets_demand() {
    let p = builtin_due_problem(&DueScenario {
        fixture: "nguyen_topology".into(),
        ..DueScenario::default()
    })
    .unwrap();
    let x = HVector::from_fn(24, 24, |c, i| ((c * 13 + i * 7) % 11) as f64 * 40.0 - 100.0);
    let z = p.set.project_point(&x, &p.grid).unwrap();
    let FeasibleSet::DemandFlow(set) = &p.set else {
        panic!()
    };
    for (w, &q) in set.demands().iter().enumerate() {
        assert!((set.group_total(w, &z, &p.grid) - q).abs() <= 1e-8 * q);
    }
    assert!(z.as_slice().iter().all(|&v| v >= 0.0));
}

#[test]
fn support_check_flags_costly_support() {
    let h = HVector::from_vec(2, 2, vec![1.0, 1.0, 1.0, 0.0]).unwrap();
    let psi = HVector::from_vec(2, 2, vec![2.0, 2.001, 2.0, 1.0]).unwrap();
    let r = support_check(&h, &psi, &[0, 0], 0.0);
    assert_eq!(r.min_cost, vec![1.0]);
    assert!(!r.holds(0.5));
    assert!(r.holds(1.01));
    assert_eq!(r.supported, 3);
}

#[test]
fn network_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let files = NetworkFiles {
        nodes: dir.path().join("nodes.csv"),
        links: dir.path().join("links.csv"),
        od: dir.path().join("od.csv"),
        paths: dir.path().join("paths.csv"),
    };
    for name in FIXTURES {
        let (net, paths) = fixture(name).unwrap();
        write_network(&net, &paths, &files, "synthetic parameters").unwrap();
        let (net2, paths2) = read_network(&files).unwrap();
        assert_eq!(net, net2);
        assert_eq!(paths, paths2);
    }
}

#[test]
fn network_file_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let files = NetworkFiles {
        nodes: write("nodes.csv", "# comment\nid\n1\n2\n"),
        links: write(
            "links.csv",
            "id,from,to,free_flow_time,capacity\n1,1,2,0.5,abc\n",
        ),
        od: write(
            "od.csv",
            "origin,destination,demand,target_arrival\n1,2,100,1\n",
        ),
        paths: write("paths.csv", "path_id,od_index,links\n0,0,1\n"),
    };
    match read_network(&files) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 2);
            assert!(message.contains("capacity"));
        }
        other => panic!("{other:?}"),
    }
    let files = NetworkFiles {
        nodes: write("nodes2.csv", "1\n2\n"),
        ..files
    };
    assert!(matches!(
        read_network(&files),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn path_validation() {
    let (net, _) = fixture("nguyen_topology").unwrap();
    let owner = vec![0, 1, 2, 3];
    let good = vec![
        vec![2, 18, 11],
        vec![1, 6, 13, 19],
        vec![4, 12, 14, 15],
        vec![4, 13, 19],
    ];
    assert!(PathSet::new(&net, good.clone(), owner.clone()).is_ok());
    let mut broken = good.clone();
    broken[0] = vec![2, 11];
    assert!(PathSet::new(&net, broken, owner.clone()).is_err());
    let mut wrong_end = good.clone();
    wrong_end[0] = vec![1, 6, 13, 19];
    assert!(PathSet::new(&net, wrong_end, owner.clone()).is_err());
    assert!(PathSet::new(&net, good[..3].to_vec(), owner[..3].to_vec()).is_err());
}
