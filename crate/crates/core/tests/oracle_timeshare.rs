mod common;

use privpolar::construction::{construct_sets, Mode, PolarSpec};
use privpolar::oracle::{enumerate_joint, exact_equivocation, exact_pe, FrozenMode, Oracle};
use privpolar::source::{DistortionMetric, JointLaw, JointSource, TestChannel};
use privpolar::timeshare::{evaluate_frozen_ensemble, evaluate_with_oracle, points_csv, select_plan, TimeSharePlan};
use privpolar::Error;

fn sets(f: &common::Fixture, n: usize, frozen: Vec<usize>, computable: Vec<usize>) -> PolarSpec {
    PolarSpec::from_sets(&f.law, n, frozen, computable, vec![0.5; n], vec![0.5; n], 0.3, Mode::Threshold).unwrap()
}

#[test]
fn ensemble_sizes_and_guard() {
    let f = common::dsbs();
    assert_eq!(evaluate_frozen_ensemble(&f.law, &sets(&f, 4, vec![], vec![]), &f.d, 4096).unwrap().len(), 1);
    let pts = evaluate_frozen_ensemble(&f.law, &sets(&f, 4, vec![0, 2], vec![]), &f.d, 4096).unwrap();
    let labels: Vec<&Vec<u32>> = pts.iter().map(|p| &p.frozen).collect();
    assert_eq!(labels, [&vec![0, 0], &vec![0, 1], &vec![1, 0], &vec![1, 1]]);
    assert!(matches!(
        evaluate_frozen_ensemble(&f.law, &sets(&f, 4, vec![0, 1, 2], vec![]), &f.d, 4),
        Err(Error::GuardExceeded { .. })
    ));
    assert_eq!(points_csv(&pts).lines().next(), Some("frozen,D,Delta"));
}

#[test]
fn ensemble_average_equals_averaged_mode() {
    for f in [common::dsbs(), common::skewed()] {
        let spec = sets(&f, 8, vec![0, 1, 2], vec![7]);
        let o = Oracle::run(&f.law, &spec, &f.d).unwrap();
        let pts = evaluate_with_oracle(&o, &spec, 4096).unwrap();
        assert_eq!(pts.len(), 8);
        let m = pts.len() as f64;
        let avg_d = pts.iter().map(|p| p.distortion).sum::<f64>() / m;
        let avg_e = pts.iter().map(|p| p.equivocation).sum::<f64>() / m;
        assert!((avg_d - o.distortion(&FrozenMode::Averaged).unwrap().pd_distortion).abs() <= 1e-10);
        assert!((avg_e - o.equivocation(&FrozenMode::Averaged).unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn selected_plans_meet_their_targets() {
    let f = common::z_asym();
    let spec = sets(&f, 8, vec![0, 1, 2], vec![]);
    let pts = evaluate_frozen_ensemble(&f.law, &spec, &f.d, 4096).unwrap();
    let m = pts.len() as f64;
    let avg = (pts.iter().map(|p| p.distortion).sum::<f64>() / m, pts.iter().map(|p| p.equivocation).sum::<f64>() / m);
    for slack in [0.0, 1e-3, 1e-2] {
        let plan = select_plan(&pts, avg.0 + slack, avg.1 - slack).unwrap();
        assert!(plan.meets(avg.0 + slack, avg.1 - slack));
        if let TimeSharePlan::Pair { alpha, .. } = plan {
            assert!((0.0..=1.0).contains(&alpha));
        }
    }
    assert!(matches!(select_plan(&pts, avg.0 - 0.1, avg.1), Err(Error::Precondition(_))));
}

#[test]
fn no_message_leaves_full_equivocation() {
    for f in common::binary_fixtures() {
        let spec = sets(&f, 4, vec![0, 1], vec![2, 3]);
        let delta = exact_equivocation(&f.law, &spec, &f.d, &FrozenMode::Averaged).unwrap();
        assert!((delta - f.law.src.entropy_y(2)).abs() <= 1e-12, "{}: {delta}", f.name);
    }
}

#[test]
fn lossless_copy_leaves_no_equivocation() {
    let src = JointSource::new(vec![vec![0.3, 0.0], vec![0.0, 0.7]]).unwrap();
    let law = JointLaw::new(&src, &TestChannel::identity(&src, 2).unwrap()).unwrap();
    let d = DistortionMetric::hamming(2, 2);
    let spec = PolarSpec::from_sets(&law, 4, vec![], vec![], vec![0.0; 4], vec![0.0; 4], 0.3, Mode::Threshold).unwrap();
    let o = Oracle::run(&law, &spec, &d).unwrap();
    assert!(o.equivocation(&FrozenMode::Averaged).unwrap().abs() <= 1e-12);
    assert!(o.distortion(&FrozenMode::Averaged).unwrap().pd_distortion.abs() <= 1e-12);
}

#[test]
fn entropy_bookkeeping() {
    for f in common::binary_fixtures() {
        let spec = construct_sets(&f.law, 8, 0.3, Mode::Rank { rate: 0.5 }, 5000, 2).unwrap();
        let o = Oracle::run(&f.law, &spec, &f.d).unwrap();
        let g = o.entropy_gaps();
        assert!(g.conditional_gap <= g.joint_gap + g.marginal_gap + 1e-12);
        assert!((g.h_pe_y_given_xhat - o.pe_conditional_entropy(&FrozenMode::Averaged).unwrap()).abs() <= 1e-12);
        if let Some(b) = g.continuity_bound {
            assert!(g.joint_gap <= b + 1e-12, "{}", f.name);
        }
        // conditioning on the message can only leave more uncertainty than conditioning on x̂
        assert!(o.equivocation(&FrozenMode::Averaged).unwrap() >= g.h_pe_y_given_xhat - 1e-12);
        // marginalizing cannot increase the L1 distance
        assert!(g.yx_l1 <= o.variational().exact + 1e-12);
    }
}

#[test]
fn laws_are_normalized_and_agree_when_nothing_is_frozen() {
    let f = common::z_ternary();
    let p = enumerate_joint(&f.law, 2).unwrap();
    assert!((p.total() - 1.0).abs() <= 1e-12);
    let spec = sets(&f, 2, vec![], vec![]);
    let pe = exact_pe(&f.law, &spec, &FrozenMode::Averaged).unwrap();
    assert!(p.l1_distance(&pe).unwrap() <= 1e-12);
    let spec = sets(&f, 4, vec![0], vec![3]);
    let pe = exact_pe(&f.law, &spec, &FrozenMode::Averaged).unwrap();
    let p = enumerate_joint(&f.law, 4).unwrap();
    for (a, b) in pe.marginal_pairs().iter().zip(p.marginal_pairs()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn exact_z_matches_its_range_and_guard_applies() {
    let f = common::skewed();
    let spec = sets(&f, 8, vec![0], vec![7]);
    let o = Oracle::run(&f.law, &spec, &f.d).unwrap();
    for i in 0..8 {
        assert!((0.0..=1.0).contains(&o.z_cond(i)));
        assert!((0.0..=1.0).contains(&o.z_marg(i)));
        // side information can only sharpen the conditional
        assert!(o.h_cond(i) <= o.h_marg(i) + 1e-12);
    }
    let t = common::dsbs_ternary();
    let big = sets(&t, 8, vec![], vec![]);
    assert!(matches!(Oracle::run(&t.law, &big, &t.d), Err(Error::GuardExceeded { .. })));
}
