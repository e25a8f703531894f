use lrperc::analytic::{
    box_exit_constant, box_exit_fraction, box_exit_grid, convolution_grid, threshold_convolution_sum, CheckParams,
};
use num_rational::Ratio;
use proptest::prelude::*;

fn bracket(v: &[i64]) -> f64 {
    v.iter().map(|c| c.unsigned_abs()).max().unwrap().max(2) as f64
}

/// Direct transcription of the double sum over `a` and `b`.
fn naive_sum(d: usize, alpha: f64, radius: f64, x: &[i64]) -> f64 {
    let s = d as f64 + alpha;
    let q = x.iter().map(|c| c.abs()).max().unwrap() / 4;
    let side = (2 * q + 1) as usize;
    let ball: Vec<Vec<i64>> = (0..side.pow(d as u32))
        .map(|mut i| {
            (0..d)
                .map(|_| {
                    let c = (i % side) as i64 - q;
                    i /= side;
                    c
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for a in &ball {
        for off in &ball {
            let b: Vec<i64> = x.iter().zip(off).map(|(x, o)| x + o).collect();
            let ab: Vec<i64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
            let xb: Vec<i64> = x.iter().zip(&b).map(|(x, b)| x - b).collect();
            total += bracket(a).powf(-s)
                * bracket(&ab).powf(-s)
                * bracket(&xb).powf(-s)
                * (bracket(a) / radius).min(1.0)
                * (bracket(&xb) / radius).min(1.0);
        }
    }
    total
}

#[test]
fn golden_value() {
    let v: f64 = threshold_convolution_sum(1, 0.5, 4.0, &[64]).unwrap();
    assert!((v - 0.010901119449220238).abs() < 1e-15, "{v}");
}

#[test]
fn matches_direct_transcription() {
    for (d, alpha, radius, x) in [
        (1, 0.5, 4.0, vec![64i64]),
        (1, 0.3, 3.0, vec![-37]),
        (2, 0.7, 2.5, vec![12, -5]),
        (2, 0.2, 8.0, vec![3, 16]),
        (3, 0.5, 4.0, vec![8, 0, -4]),
    ] {
        let got: f64 = threshold_convolution_sum(d, alpha, radius, &x).unwrap();
        let want = naive_sum(d, alpha, radius, &x);
        assert!((got - want).abs() < 1e-12 * want, "{x:?}: {got} vs {want}");
    }
}

#[test]
fn invariant_under_reflection_and_permutation() {
    let base: f64 = threshold_convolution_sum(2, 0.4, 4.0, &[20, 7]).unwrap();
    for x in [[-20, -7], [7, 20], [-7, 20], [20, -7]] {
        let v = threshold_convolution_sum(2, 0.4, 4.0, &x).unwrap();
        assert!((v - base).abs() < 1e-13 * base);
    }
}

#[test]
fn non_increasing_in_radius() {
    let x = [128i64];
    let mut last = f64::INFINITY;
    for r in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0] {
        let v: f64 = threshold_convolution_sum(1, 0.6, r, &x).unwrap();
        assert!(v <= last, "R = {r}");
        last = v;
    }
}

#[test]
fn normalized_ratio_is_bounded_on_the_grid() {
    for alpha in [0.25, 0.5, 0.75] {
        let rows = convolution_grid::<f64>(1, alpha).unwrap();
        assert_eq!(rows.len(), 9);
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        assert!(max / min < 10.0, "alpha {alpha}: spread {}", max / min);
        if alpha < 0.5 {
            continue;
        }
        // Rows of three multiples per radius: the growth decelerates.
        for row in ratios.chunks(3) {
            assert!(row[2] - row[1] < row[1] - row[0], "alpha {alpha}: {row:?}");
        }
    }
}

#[test]
fn grid_in_two_dimensions() {
    let rows = convolution_grid::<f64>(2, 0.5).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let max = ratios.iter().copied().fold(f64::MIN, f64::max);
    let min = ratios.iter().copied().fold(f64::MAX, f64::min);
    assert!(max / min < 10.0);
}

#[test]
fn exit_fraction_is_one_far_from_the_core() {
    for k in 3..=7u32 {
        let inner = 1i64 << (k - 3);
        let outer = 1i64 << (k - 1);
        for u in [-inner, 0, inner] {
            for v in [outer + 1, -outer - 1, 1 << k] {
                assert_eq!(box_exit_fraction(1, k, &[u], &[v]).unwrap(), Ratio::new(1, 1));
            }
        }
        assert_eq!(box_exit_fraction(2, k, &[inner, -inner], &[0, outer + 1]).unwrap(), Ratio::new(1, 1));
    }
}

#[test]
fn exit_constant_is_stable_across_scales() {
    for (d, ks) in [(1usize, 4..=8u32), (2, 4..=5)] {
        let rows = box_exit_grid::<f64>(d, ks).unwrap();
        let c: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let max = c.iter().copied().fold(f64::MIN, f64::max);
        let min = c.iter().copied().fold(f64::MAX, f64::min);
        assert!(max / min <= 2.0, "d = {d}: {c:?}");
        for r in &rows {
            let CheckParams::BoxExit { k, u, v } = &r.params else { panic!("wrong row kind") };
            assert!(u.iter().all(|c| c.abs() <= 1 << (k - 2)));
            assert!(r.value > 0.0 && r.value <= 1.0 && u != v);
        }
    }
}

#[test]
fn exit_constant_in_single_precision_agrees() {
    let a = box_exit_constant::<f64>(1, 5).unwrap();
    let b = box_exit_constant::<f32>(1, 5).unwrap();
    assert!((a.ratio - b.ratio as f64).abs() < 1e-5 * a.ratio);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exit_fraction_properties(k in 3u32..=7, u in -200i64..200, v in -200i64..200) {
        let f = box_exit_fraction(1, k, &[u], &[v]).unwrap();
        prop_assert!(f >= Ratio::new(0, 1) && f <= Ratio::new(1, 1));
        prop_assert_eq!(f, box_exit_fraction(1, k, &[-u], &[-v]).unwrap());
        let (lo, hi) = (u.min(v), u.max(v));
        // The boxes are intervals, so lying between u and v cannot help exit.
        let mid = lo + (hi - lo) / 2;
        let g = box_exit_fraction(1, k, &[u], &[if u <= v { mid.max(u) } else { mid.min(u) }]).unwrap();
        prop_assert!(g <= f);
        if u == v {
            prop_assert_eq!(f, Ratio::new(0, 1));
        }
    }

    #[test]
    fn exit_fraction_counts_by_hand(k in 3u32..=6, u in -40i64..40, v in -80i64..80) {
        let (c, h) = (1i64 << (k - 3), 1i64 << (k - 2));
        let hits = (-c..=c).filter(|z| (z - u).abs() <= h && (z - v).abs() > h).count() as u64;
        prop_assert_eq!(box_exit_fraction(1, k, &[u], &[v]).unwrap(), Ratio::new(hits, (2 * c + 1) as u64));
    }
}
