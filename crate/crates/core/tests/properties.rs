use std::sync::Arc;

use approx::assert_relative_eq;
use fhjb_core::correction::CorrectionData;
use fhjb_core::fraclap::weights_1d;
use fhjb_core::grid::{ExteriorPolicy, Grid, GridFunction};
use fhjb_core::stencil::build_sl_local_stencil;
use proptest::prelude::*;

fn periodic(dim: usize, h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(dim, 1.0, h, ExteriorPolicy::Periodic).unwrap())
}

fn corr(c0: [f64; 2], c1: [f64; 2]) -> CorrectionData {
    CorrectionData { delta: 0.1, a_delta: [[0.0; 2]; 2], sqrt_a: [c0, c1], b_tilde: [0.0; 2], b_delta: [0.0; 2], psd_clip: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn interpolation_is_a_partition_of_unity(x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let g = periodic(2, 0.125);
        let w = g.interp_weights(&[x, y]);
        let sum: f64 = w.iter().map(|(_, v)| v).sum();
        prop_assert!(w.iter().all(|(_, v)| *v > 0.0));
        assert_relative_eq!(sum, 1.0, epsilon = 1e-14);
        // Linear functions are reproduced.
        let cx: f64 = w.iter().map(|(i, v)| v * i[0] as f64 * g.h).sum();
        let cy: f64 = w.iter().map(|(i, v)| v * i[1] as f64 * g.h).sum();
        assert_relative_eq!(cx, x, epsilon = 1e-13);
        assert_relative_eq!(cy, y, epsilon = 1e-13);
    }

    #[test]
    fn sl_stencil_is_monotone_and_linear(
        c in prop::array::uniform4(-1.0..1.0f64),
        k in 0.05..0.5f64,
        alpha in -3.0..3.0f64,
        p in 1.0..4.0f64,
    ) {
        let g = periodic(2, 0.125);
        let st = build_sl_local_stencil(&corr([c[0], c[1]], [c[2], c[3]]), &g, k).unwrap();
        prop_assert!(st.entries.is_empty() || st.min_weight() >= 0.0);
        let pi = std::f64::consts::PI;
        let u = GridFunction::from_fn(g.clone(), |x| (pi * x[0]).sin() * (pi * x[1]).cos());
        let v = GridFunction::from_fn(g.clone(), move |x| (p * pi * x[0] + x[1]).cos());
        let mut w = u.clone();
        for (a, b) in w.values.iter_mut().zip(&v.values) {
            *a = alpha * *a + b;
        }
        let lu = st.apply(&u).unwrap();
        let lv = st.apply(&v).unwrap();
        let lw = st.apply(&w).unwrap();
        let scale = 1.0 + st.total_weight() * (2.0 + 2.0 * alpha.abs());
        for i in 0..g.len() {
            prop_assert!((lw.values[i] - alpha * lu.values[i] - lv.values[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn sl_stencil_respects_touching_comparison(c in prop::array::uniform2(-1.0..1.0f64), k in 0.05..0.5f64, bump in prop::collection::vec(0.0..1.0f64, 16)) {
        // u ≤ v with equality at node 0 forces (L u)_0 ≤ (L v)_0.
        let g = periodic(1, 0.125);
        let st = build_sl_local_stencil(&corr([c[0], 0.0], [0.0, c[1]]), &g, k).unwrap();
        let u = GridFunction::from_fn(g.clone(), |x| x[0] * x[0]);
        let mut v = u.clone();
        for (i, b) in bump.iter().enumerate().take(v.values.len()) {
            if i != 0 {
                v.values[i] += b;
            }
        }
        let lu = st.apply(&u).unwrap();
        let lv = st.apply(&v).unwrap();
        prop_assert!(lu.values[0] <= lv.values[0] + 1e-14);
    }

    #[test]
    fn fraclap_weights_scale_with_h(sigma in 0.05..1.95f64, level in 0u32..8) {
        let h = 0.5f64.powi(level as i32);
        let unit = weights_1d(sigma, 1.0, 24).unwrap();
        let scaled = weights_1d(sigma, h, 24).unwrap();
        prop_assert_eq!(unit.entries.len(), scaled.entries.len());
        for ((i, a), (j, b)) in unit.entries.iter().zip(&scaled.entries) {
            prop_assert_eq!(i, j);
            prop_assert!(*a > 0.0);
            assert_relative_eq!(*b, a * h.powf(-sigma), max_relative = 1e-13);
        }
    }
}
