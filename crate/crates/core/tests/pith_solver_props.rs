use proptest::prelude::*;
use woodpith::pith_solver::{
    cost, cost_gradient, least_squares_init, optimize_center, refine_pith, SolverParams,
};
use woodpith::synthgen::{generate_lo, LoSpec};
use woodpith::{LoSegment, LoSet, Point, Rect, SliceMask};

/// Mean of `cos²` between each segment and the ray from `c`, written with angles.
fn cost_oracle(c: Point<f64>, lo: &LoSet<f64>) -> f64 {
    let sum: f64 = lo
        .iter()
        .map(|s| {
            let (dx, dy) = (s.midpoint.x - c.x, s.midpoint.y - c.y);
            if dx.hypot(dy) < 1e-9 {
                1.0
            } else {
                (s.alpha - dy.atan2(dx)).cos().powi(2)
            }
        })
        .sum();
    sum / lo.len() as f64
}

fn segments(n: std::ops::Range<usize>) -> impl Strategy<Value = LoSet<f64>> {
    prop::collection::vec((0.0f64..640.0, 0.0f64..480.0, 0.0f64..std::f64::consts::PI), n)
        .prop_map(|v| v.into_iter().map(|(x, y, a)| LoSegment::new(Point::new(x, y), a, 1.0)).collect())
}

fn min_distance(c: Point<f64>, lo: &LoSet<f64>) -> f64 {
    lo.iter().map(|s| s.midpoint.distance(c)).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cost_bounded_and_matches_oracle(lo in segments(1..60), x in -100.0f64..740.0, y in -100.0f64..580.0) {
        let c = Point::new(x, y);
        let h = cost(c, &lo).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - cost_oracle(c, &lo)).abs() < 1e-12);
    }

    #[test]
    fn radial_sets_score_one_at_center(cx in 50.0f64..600.0, cy in 50.0f64..400.0, n in 3usize..300, seed in any::<u64>()) {
        let spec = LoSpec { center: (cx, cy), n_segments: n, seed, ..LoSpec::default() };
        let (lo, c) = generate_lo::<f64>(&spec).unwrap();
        prop_assert!((cost(c, &lo).unwrap() - 1.0).abs() < 1e-12);
        let g = cost_gradient(c, &lo).unwrap();
        prop_assert!(g.norm() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences(lo in segments(2..40), x in 0.0f64..640.0, y in 0.0f64..480.0) {
        let c = Point::new(x, y);
        prop_assume!(min_distance(c, &lo) > 1.0);
        let g = cost_gradient(c, &lo).unwrap();
        let h = 1e-5;
        let fx = (cost(Point::new(x + h, y), &lo).unwrap() - cost(Point::new(x - h, y), &lo).unwrap()) / (2.0 * h);
        let fy = (cost(Point::new(x, y + h), &lo).unwrap() - cost(Point::new(x, y - h), &lo).unwrap()) / (2.0 * h);
        let err = (g.x - fx).hypot(g.y - fy);
        let scale = g.norm().max(fx.hypot(fy));
        prop_assert!(err <= 1e-4 * scale + 1e-10, "analytic {g:?} numeric ({fx}, {fy})");
    }

    #[test]
    fn similarity_invariance(
        lo in segments(1..50), x in 0.0f64..640.0, y in 0.0f64..480.0,
        tx in -300.0f64..300.0, ty in -300.0f64..300.0, s in 0.1f64..10.0, px in -100.0f64..700.0, py in -100.0f64..500.0,
    ) {
        let pivot = Point::new(px, py);
        let map = |p: Point<f64>| (p - pivot) * s + pivot + Point::new(tx, ty);
        let moved: LoSet<f64> = lo.iter().map(|seg| LoSegment::new(map(seg.midpoint), seg.alpha, seg.coherence)).collect();
        let c = Point::new(x, y);
        prop_assume!(min_distance(c, &lo) > 1e-3);
        prop_assert!((cost(c, &lo).unwrap() - cost(map(c), &moved).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn refinement_terminates_inside_bbox(lo in segments(1..80), max_iter in 1usize..8, seed in any::<u64>()) {
        let mask = SliceMask::from_fn(640, 480, |x, y| (60..600).contains(&x) && (40..420).contains(&y)).unwrap();
        let params = SolverParams { max_iter, seed, ..SolverParams::default() };
        let r = refine_pith(&lo, &mask, &params).unwrap();
        prop_assert!(r.iterations >= 1 && r.iterations <= max_iter);
        let b = mask.bbox();
        prop_assert!(r.center.x >= b.x_min as f64 && r.center.x <= b.x_max as f64);
        prop_assert!(r.center.y >= b.y_min as f64 && r.center.y <= b.y_max as f64);
        prop_assert_eq!(refine_pith(&lo, &mask, &params).unwrap(), r);
    }
}

#[test]
fn argmax_follows_similarity() {
    let spec = LoSpec { center: (300.0, 220.0), radial_noise_sigma: 0.05, seed: 3, ..LoSpec::default() };
    let (lo, _) = generate_lo::<f64>(&spec).unwrap();
    let region = Rect::new(0.0, 0.0, 639.0, 479.0);
    let init = least_squares_init(&lo, &region).center;
    let a = optimize_center(&lo, &region, init, 0).unwrap().center;

    let (s, t) = (0.5, Point::new(40.0, -20.0));
    let map = |p: Point<f64>| p * s + t;
    let moved: LoSet<f64> = lo.iter().map(|seg| LoSegment::new(map(seg.midpoint), seg.alpha, 1.0)).collect();
    let region2 = Rect::new(t.x, t.y, t.x + 639.0 * s, t.y + 479.0 * s);
    let init2 = least_squares_init(&moved, &region2).center;
    let b = optimize_center(&moved, &region2, init2, 0).unwrap().center;
    assert!(b.distance(map(a)) < 1e-4, "{b:?} vs {:?}", map(a));
}

#[test]
fn optimizer_reaches_brute_force_maximum() {
    for seed in 0..4 {
        let spec = LoSpec { center: (320.0, 300.0), outlier_fraction: 0.3, seed, ..LoSpec::default() };
        let (lo, truth) = generate_lo::<f64>(&spec).unwrap();
        let region = Rect::new(0.0, 0.0, 639.0, 639.0);
        let init = least_squares_init(&lo, &region).center;
        let opt = optimize_center(&lo, &region, init, seed).unwrap();
        let mut best = f64::MIN;
        for i in -100..=100 {
            for j in -100..=100 {
                let c = Point::new(truth.x + i as f64 * 0.1, truth.y + j as f64 * 0.1);
                best = best.max(cost(c, &lo).unwrap());
            }
        }
        assert!(opt.value >= best - 1e-9, "seed {seed}: optimizer {} < grid {best}", opt.value);
    }
}

#[test]
fn outliers_barely_move_the_optimum() {
    for seed in 0..20 {
        let spec = LoSpec { center: (320.0, 300.0), outlier_fraction: 0.3, n_segments: 2000, seed, ..LoSpec::default() };
        let (lo, truth) = generate_lo::<f64>(&spec).unwrap();
        let region = Rect::new(0.0, 0.0, 639.0, 639.0);
        let init = least_squares_init(&lo, &region).center;
        let opt = optimize_center(&lo, &region, init, seed).unwrap();
        let err = opt.center.distance(truth);
        assert!(err < 0.01 * spec.outer_radius, "seed {seed}: error {err}");
    }
}

#[test]
fn f32_and_f64_agree_on_radial_sets() {
    let spec = LoSpec { center: (210.5, 190.25), radial_noise_sigma: 0.02, seed: 11, ..LoSpec::default() };
    let (lo64, truth) = generate_lo::<f64>(&spec).unwrap();
    let (lo32, _) = generate_lo::<f32>(&spec).unwrap();
    let mask = SliceMask::full(480, 480);
    let r64 = refine_pith(&lo64, &mask, &SolverParams::default()).unwrap();
    let r32 = refine_pith(&lo32, &mask, &SolverParams::default()).unwrap();
    assert!(r64.center.distance(truth) < 1.0);
    assert!(r32.center.to_f64().distance(r64.center) < 0.05);
}
