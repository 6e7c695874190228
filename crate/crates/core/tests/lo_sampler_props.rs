use std::f64::consts::PI;

use proptest::prelude::*;
use woodpith::lo_sampler::{coherence_threshold, sample_lo, LoSamplerParams};
use woodpith::{Grid, SliceMask};

#[derive(Debug)]
struct Fields {
    orient: Grid<f64>,
    coh: Grid<f64>,
    mask: SliceMask,
}

fn fields() -> impl Strategy<Value = Fields> {
    (4usize..40, 4usize..40).prop_flat_map(|(w, h)| {
        let n = w * h;
        (
            prop::collection::vec(0.0f64..PI, n),
            prop::collection::vec(prop_oneof![Just(0.0f64), 0.0f64..1.0], n),
            prop::collection::vec(prop::bool::weighted(0.8), n),
        )
            .prop_map(move |(o, c, mut m)| {
                m[n / 2] = true;
                Fields {
                    orient: Grid::new(w, h, o).unwrap(),
                    coh: Grid::new(w, h, c).unwrap(),
                    mask: SliceMask::new(w, h, m).unwrap(),
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn structural_invariants(f in fields(), lo_w in prop::sample::select(vec![3usize, 5, 7, 9, 11]), percent_lo in 0.05f64..1.0) {
        let params = LoSamplerParams { lo_w, percent_lo };
        let lo = sample_lo(&f.orient, &f.coh, &f.mask, &params).unwrap();
        let (w, h) = f.coh.size();
        prop_assert!(lo.len() <= w.div_ceil(lo_w) * h.div_ceil(lo_w));
        let mut patches = std::collections::HashSet::new();
        for s in lo.iter() {
            let (x, y) = (s.midpoint.x as usize, s.midpoint.y as usize);
            prop_assert_eq!(s.midpoint.x, x as f64);
            prop_assert!(f.mask.contains(x, y));
            prop_assert!(patches.insert((x / lo_w, y / lo_w)), "two segments in one patch");
            prop_assert!((s.p1.distance(s.midpoint) - 1.0).abs() < 1e-12);
            prop_assert!((s.p2.distance(s.midpoint) - 1.0).abs() < 1e-12);
            prop_assert!(((s.p1 + s.p2) * 0.5).distance(s.midpoint) < 1e-12);
            prop_assert!(s.coherence > 0.0);
        }
    }

    #[test]
    fn gate_is_monotone_in_percent_lo(f in fields(), lo_w in prop::sample::select(vec![3usize, 5]), p in 0.05f64..0.95, dp in 0.0f64..0.5) {
        let lower = LoSamplerParams { lo_w, percent_lo: p };
        let higher = LoSamplerParams { lo_w, percent_lo: (p + dp).min(1.0) };
        let a = sample_lo(&f.orient, &f.coh, &f.mask, &lower).unwrap();
        let b = sample_lo(&f.orient, &f.coh, &f.mask, &higher).unwrap();
        prop_assert!(b.len() >= a.len());
    }

    #[test]
    fn threshold_is_lower_quantile_of_foreground(f in fields(), percent_lo in 0.01f64..1.0) {
        let t = coherence_threshold(&f.coh, &f.mask, percent_lo).unwrap();
        let mut fg: Vec<f64> = f.coh.data().iter().zip(f.mask.inside()).filter(|(_, &m)| m).map(|(&c, _)| c).collect();
        fg.sort_by(f64::total_cmp);
        let k = ((fg.len() - 1) as f64 * (1.0 - percent_lo)).floor() as usize;
        prop_assert_eq!(t, fg[k]);
    }

    #[test]
    fn chosen_pixel_is_patch_maximum(f in fields(), lo_w in prop::sample::select(vec![3usize, 5, 7])) {
        let lo = sample_lo(&f.orient, &f.coh, &f.mask, &LoSamplerParams { lo_w, percent_lo: 1.0 }).unwrap();
        let (w, h) = f.coh.size();
        for s in lo.iter() {
            let (x, y) = (s.midpoint.x as usize, s.midpoint.y as usize);
            let (px, py) = (x / lo_w * lo_w, y / lo_w * lo_w);
            for yy in py..(py + lo_w).min(h) {
                for xx in px..(px + lo_w).min(w) {
                    if f.mask.contains(xx, yy) {
                        prop_assert!(f.coh.get(xx, yy) <= s.coherence);
                    }
                }
            }
            prop_assert_eq!(s.alpha, f.orient.get(x, y));
        }
    }
}

#[test]
fn all_zero_coherence_emits_nothing() {
    let mask = SliceMask::full(10, 10);
    let lo = sample_lo(&Grid::filled(10, 10, 0.3), &Grid::filled(10, 10, 0.0), &mask, &LoSamplerParams::APD).unwrap();
    assert!(lo.is_empty());
}
