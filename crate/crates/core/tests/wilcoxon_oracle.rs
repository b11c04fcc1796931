mod common;

use common::enumerate_wilcoxon;
use flexconn::metrics::wilcoxon_signed_rank;
use flexconn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_p_values_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..400 {
        let n = rng.random_range(1..=10);
        // coarse values so ties and zero differences are common
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        let n_eff = x.iter().zip(&y).filter(|(a, b)| a != b).count();
        let got = wilcoxon_signed_rank(&x, &y);
        if n_eff == 0 {
            assert!(matches!(got, Err(Error::DegenerateSample)), "trial {trial}");
            continue;
        }
        if n_eff < 5 {
            assert!(got.is_err(), "trial {trial}: n_eff {n_eff}");
            continue;
        }
        let r = got.unwrap();
        let (wp, wm, p) = enumerate_wilcoxon(&x, &y);
        assert!(r.exact);
        assert_eq!(r.n_effective, n_eff);
        assert!((r.w_plus - wp).abs() < 1e-12 && (r.w_minus - wm).abs() < 1e-12, "trial {trial}");
        assert_eq!(r.statistic, r.w_plus.min(r.w_minus));
        assert!((r.p_value - p).abs() < 1e-12, "trial {trial}: {} vs {p}", r.p_value);
    }
}

#[test]
fn continuous_samples_every_n_up_to_ten() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 5..=10 {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = vec![0.0; n];
            let r = wilcoxon_signed_rank(&x, &y).unwrap();
            let (_, _, p) = enumerate_wilcoxon(&x, &y);
            assert!((r.p_value - p).abs() < 1e-12);
        }
    }
}

#[test]
fn five_positive_differences() {
    let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
    assert_eq!(r.p_value, 0.0625);
    assert_eq!(enumerate_wilcoxon(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).2, 0.0625);
}
