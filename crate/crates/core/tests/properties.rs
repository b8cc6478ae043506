use drm_core::basis::{Basis, BasisMatrix, FixedBasis};
use drm_core::el_drm::{fit_drm_values, fitted_cdf, profile_loglik, DrmParams};
use drm_core::estimators::drm_quantile;
use drm_core::fpca_basis::{eigensystem, m_hat, LogRatioSet};
use drm_core::kde::{self, FloorPolicy, KGrid, KdeEstimate, ReferenceFamily};
use drm_core::quadrature::trapezoid;
use drm_core::rng::Stream;
use drm_core::simbench::{generate, Family, ScenarioId, ScenarioSpec};
use drm_core::MultiSample;
use proptest::prelude::*;

fn sample(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn samples(k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(sample(15..40), k)
}

fn spread(v: &[f64]) -> bool {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo > 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pooling_ignores_order_within_samples(s in samples(3), seed in 0u64..1000) {
        let ms = MultiSample::new(s.clone()).unwrap();
        let mut rng = Stream::new(seed);
        let shuffled: Vec<Vec<f64>> = s
            .iter()
            .map(|v| {
                let mut v = v.clone();
                for i in (1..v.len()).rev() {
                    let j = (rng.uniform() * (i + 1) as f64) as usize;
                    v.swap(i, j.min(i));
                }
                v
            })
            .collect();
        let a = ms.pool();
        let b = MultiSample::new(shuffled).unwrap().pool();
        prop_assert_eq!(a.points(), b.points());
        prop_assert_eq!(a.sizes(), b.sizes());
    }

    #[test]
    fn kde_integrates_to_one_and_translates(s in sample(5..30), h in 0.1f64..1.5, shift in -50.0f64..50.0) {
        let kde = KdeEstimate::fit(&s, h, None, s.len()).unwrap();
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * h;
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * h;
        let step = (hi - lo) / 4000.0;
        let vals: Vec<f64> = (0..=4000).map(|i| kde.eval(lo + i as f64 * step)).collect();
        prop_assert!((trapezoid(&vals, step) - 1.0).abs() < 1e-6);

        let moved: Vec<f64> = s.iter().map(|x| x + shift).collect();
        let kde2 = KdeEstimate::fit(&moved, h, None, s.len()).unwrap();
        for &x in &[lo, 0.0, 0.37, hi] {
            let (a, b) = (kde.ln_eval(x), kde2.ln_eval(x + shift));
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn floor_never_lowers_the_density(s in sample(5..30), h in 0.1f64..1.0, x in -30.0f64..30.0) {
        let plain = KdeEstimate::fit(&s, h, None, 100).unwrap();
        let floored = KdeEstimate::fit(&s, h, FloorPolicy::Auto.constant(s.len(), h), 100).unwrap();
        prop_assert!(floored.ln_eval(x) >= plain.ln_eval(x));
    }

    #[test]
    fn profile_loglik_is_concave(s in samples(3), t1 in prop::collection::vec(-1.0f64..1.0, 6), t2 in prop::collection::vec(-1.0f64..1.0, 6)) {
        let ms = MultiSample::new(s).unwrap();
        let pooled = ms.pool();
        let v = FixedBasis::parse("x,x2").unwrap().values_at(&pooled).unwrap();
        let ll = |t: &[f64]| profile_loglik(&DrmParams::from_vec(t, 2, 2), &v, pooled.origin(), pooled.sizes()).unwrap();
        let mid: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| 0.5 * (a + b)).collect();
        let (a, b, c) = (ll(&t1), ll(&t2), ll(&mid));
        prop_assert!(c >= 0.5 * (a + b) - 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn fitted_cdfs_are_monotone(s in samples(3)) {
        prop_assume!(s.iter().all(|v| spread(v)));
        let ms = MultiSample::new(s).unwrap();
        let pooled = ms.pool();
        let fit = match fit_drm_values(&pooled, FixedBasis::parse("x").unwrap().values_at(&pooled).unwrap()) {
            Ok(f) => f,
            // Separated samples have no finite maximizer.
            Err(_) => return Ok(()),
        };
        for r in 0..3 {
            let c = fit.cumulative(r);
            prop_assert!(c.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!((c[c.len() - 1] - 1.0).abs() < 1e-8);
            prop_assert_eq!(fitted_cdf(&fit, r, -1e9).unwrap(), 0.0);
            let qs: Vec<f64> = [0.1, 0.4, 0.6, 0.95].iter().map(|&t| drm_quantile(&fit, r, t).unwrap()).collect();
            prop_assert!(qs.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn fit_is_invariant_to_affine_basis_changes(s in samples(3), a in prop::collection::vec(0.5f64..3.0, 2), off in -0.9f64..0.9, b in prop::collection::vec(-5.0f64..5.0, 2)) {
        prop_assume!(s.iter().all(|v| spread(v)));
        let ms = MultiSample::new(s).unwrap();
        let pooled = ms.pool();
        let q = FixedBasis::parse("x,x2").unwrap().values_at(&pooled).unwrap();
        let rows: Vec<Vec<f64>> = (0..q.rows())
            .map(|i| {
                let r = q.row(i);
                vec![a[0] * r[0] + off * r[1] + b[0], off * r[0] + a[1] * r[1] + b[1]]
            })
            .collect();
        let (Ok(f1), Ok(f2)) = (fit_drm_values(&pooled, q.clone()), fit_drm_values(&pooled, BasisMatrix::from_rows(&rows).unwrap())) else {
            return Ok(());
        };
        prop_assert!((f1.loglik() - f2.loglik()).abs() < 1e-8 * (1.0 + f1.loglik().abs()));
        for (u, v) in f1.weights().iter().zip(f2.weights()) {
            prop_assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn m_hat_is_symmetric_psd_with_zero_row_sums(s in samples(4), h in 0.3f64..1.5) {
        let ms = MultiSample::new(s).unwrap();
        let pooled = ms.pool();
        let kdes = kde::fit_all(&ms, &[h; 4], FloorPolicy::Off).unwrap();
        let lr = LogRatioSet::from_kdes(kdes, &pooled).unwrap();
        let m = m_hat(&lr);
        let scale = (0..4).map(|i| m.get(i, i)).fold(0.0, f64::max).max(1e-300);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        for r in m.row_sums() {
            prop_assert!(r.abs() < 1e-10 * scale.max(1.0));
        }
        let eig = eigensystem(&m).unwrap();
        prop_assert!(eig.values.iter().all(|&v| v > -1e-10 * scale.max(1.0)));
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn bandwidth_choice_ignores_order_within_samples(seed in 0u64..1000) {
        let mut s = Stream::new(seed);
        let data: Vec<Vec<f64>> = (0..3).map(|k| (0..40).map(|_| k as f64 * 0.4 + s.normal()).collect()).collect();
        let reversed: Vec<Vec<f64>> = data.iter().map(|v| v.iter().rev().copied().collect()).collect();
        let grid = KGrid::range(0.5, 2.0, 0.25).unwrap();
        let a = kde::select_bandwidth(&MultiSample::new(data).unwrap(), ReferenceFamily::Normal, &grid, FloorPolicy::Off).unwrap();
        let b = kde::select_bandwidth(&MultiSample::new(reversed).unwrap(), ReferenceFamily::Normal, &grid, FloorPolicy::Off).unwrap();
        prop_assert_eq!(a.k, b.k);
        for (x, y) in a.bandwidths.iter().zip(&b.bandwidths) {
            prop_assert!((x - y).abs() < 1e-12 * x);
        }
    }
}

/// Kolmogorov–Smirnov statistic of `draws` against `family`.
fn ks(family: &Family, mut draws: Vec<f64>) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = family.cdf(x).unwrap();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn scenario_samplers_match_their_distributions() {
    let n = 3000;
    // 1.95 / sqrt(n) is the 0.1% critical value.
    let crit = 1.95 / (n as f64).sqrt();
    for id in [
        ScenarioId::NormalEqVar,
        ScenarioId::NormalUneqVar,
        ScenarioId::Gamma,
        ScenarioId::SelfDesigned,
        ScenarioId::Weibull,
        ScenarioId::NormalMixture,
    ] {
        let spec = ScenarioSpec::new(id, n, 1, 99).unwrap();
        let ms = generate(&spec, 0).unwrap();
        for (r, family) in spec.populations.iter().enumerate() {
            let d = ks(family, ms.sample(r).to_vec());
            assert!(d < crit, "{id:?} population {r}: KS {d} >= {crit}");
        }
    }
}
