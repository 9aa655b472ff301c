mod common;

use privpolar::region::{min_rate_at, sweep_region, sweep_region_with, RegionOptions};
use privpolar::source::{target_point, DistortionMetric, JointSource};
use privpolar::Error;

fn zsrc() -> JointSource {
    JointSource::z_channel(0.3).unwrap()
}

fn hamming() -> DistortionMetric {
    DistortionMetric::hamming(2, 2)
}

#[test]
fn frontier_contains_both_corners() {
    let src = zsrc();
    let d = hamming();
    let fr = sweep_region(&src, &d, 20, 6).unwrap();
    let px = src.marginal_x();
    let min_d = px[0].min(px[1]);
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    assert!(fr.points.iter().any(|p| p.op.rate == 0.0 && near(p.op.equivocation, src.entropy_y(2)) && near(p.op.distortion, min_d)));
    assert!(fr
        .points
        .iter()
        .any(|p| near(p.op.rate, src.entropy_x(2)) && p.op.distortion == 0.0 && near(p.op.equivocation, src.entropy_y_given_x(2))));
}

#[test]
fn frontier_is_sorted_consistent_and_non_dominated() {
    let src = zsrc();
    let d = hamming();
    let fr = sweep_region(&src, &d, 12, 4).unwrap();
    assert_eq!(fr.grid_size, 13usize.pow(3));
    for w in fr.points.windows(2) {
        assert!(w[0].op.rate <= w[1].op.rate);
    }
    for p in &fr.points {
        let again = target_point(&src, &p.channel, &d).unwrap();
        assert!((again.rate - p.op.rate).abs() <= 1e-12);
        assert!((again.distortion - p.op.distortion).abs() <= 1e-12);
        assert!((again.equivocation - p.op.equivocation).abs() <= 1e-12);
        let dominated = fr.points.iter().any(|o| {
            o.op.rate <= p.op.rate - 1e-9 && o.op.distortion <= p.op.distortion - 1e-9 && o.op.equivocation >= p.op.equivocation + 1e-9
        });
        assert!(!dominated);
    }
}

#[test]
fn sweep_is_deterministic() {
    let src = zsrc();
    let d = hamming();
    assert_eq!(sweep_region(&src, &d, 10, 3).unwrap(), sweep_region(&src, &d, 10, 3).unwrap());
}

#[test]
fn relabeling_reconstruction_symbols_keeps_the_region() {
    let f = common::dsbs_ternary();
    let src = &f.law.src;
    let perm = [2, 0, 1];
    let d2 = f.d.relabeled(&perm);
    let a = sweep_region(src, &f.d, 6, 8).unwrap();
    let b = sweep_region(src, &d2, 6, 8).unwrap();
    for (dq, eq) in [(0.3, 0.4), (0.2, 0.3), (0.45, 0.55)] {
        let ra = min_rate_at(src, &f.d, dq, eq, &a).unwrap();
        let rb = min_rate_at(src, &d2, dq, eq, &b).unwrap();
        assert!((ra.op.rate - rb.op.rate).abs() <= 5e-3, "{} vs {}", ra.op.rate, rb.op.rate);
    }
}

#[test]
fn query_refines_at_or_below_the_frontier() {
    let src = zsrc();
    let d = hamming();
    let fr = sweep_region(&src, &d, 16, 6).unwrap();
    for (dq, eq) in [(0.05, 0.5), (0.1, 0.6), (0.2, 0.7)] {
        let got = min_rate_at(&src, &d, dq, eq, &fr).unwrap();
        assert!(got.op.distortion <= dq + 1e-9 && got.op.equivocation >= eq - 1e-9);
        let best = fr
            .points
            .iter()
            .filter(|p| p.op.distortion <= dq + 1e-9 && p.op.equivocation >= eq - 1e-9)
            .map(|p| p.op.rate)
            .fold(f64::INFINITY, f64::min);
        assert!(got.op.rate <= best + 1e-12);
    }
}

#[test]
fn query_edge_cases() {
    let src = zsrc();
    let d = hamming();
    let fr = sweep_region(&src, &d, 10, 3).unwrap();
    let zero = min_rate_at(&src, &d, d.d_max(), src.entropy_y_given_x(2), &fr).unwrap();
    assert!(zero.op.rate.abs() <= 1e-12);
    assert!(matches!(min_rate_at(&src, &d, 0.2, src.entropy_y(2) + 0.01, &fr), Err(Error::Infeasible(_))));
    assert!(matches!(min_rate_at(&src, &d, -0.1, 0.0, &fr), Err(Error::Infeasible(_))));
    assert!(matches!(min_rate_at(&src, &d, 0.0, src.entropy_y(2), &fr), Err(Error::NotFound(_))));
}

#[test]
fn csv_layout() {
    let src = JointSource::dsbs(0.1).unwrap();
    let fr = sweep_region(&src, &hamming(), 8, 2).unwrap();
    let csv = fr.to_csv(&src);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "R,D,Delta,p_x0_y0_xh0,p_x0_y0_xh1,p_x0_y1_xh0,p_x0_y1_xh1,p_x1_y0_xh0,p_x1_y0_xh1,p_x1_y1_xh0,p_x1_y1_xh1"
    );
    assert_eq!(lines.count(), fr.points.len());
}

#[test]
fn guards_and_dimension_checks() {
    let src = JointSource::dsbs(0.1).unwrap();
    let opts = RegionOptions { grid_res: 200, ..RegionOptions::default() };
    assert!(matches!(sweep_region_with(&src, &hamming(), &opts), Err(Error::GuardExceeded { .. })));
    assert!(sweep_region(&src, &DistortionMetric::hamming(2, 4), 4, 1).is_err());
    assert!(sweep_region(&src, &DistortionMetric::hamming(3, 2), 4, 1).is_err());
    assert!(sweep_region(&src, &hamming(), 0, 1).is_err());
}
