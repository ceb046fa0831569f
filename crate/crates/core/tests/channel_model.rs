use coskg::channel_model::*;
use coskg::rng::{stream, Stream};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Direct O(N·L) evaluation of Σ t_i e^{-j2πni/N}.
fn brute_dft(taps: &[C64], n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| {
            taps.iter()
                .enumerate()
                .map(|(i, t)| {
                    let w = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                    t * c(w.cos(), w.sin())
                })
                .sum()
        })
        .collect()
}

fn max_rel_err(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(1e-300, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

#[test]
fn channel_set_shapes() {
    let p = EvolutionParams::exponential(0.999, 16).unwrap();
    let set = generate_channel_set(8, 512, &p, 1).unwrap();
    assert_eq!((set.ab.antennas(), set.ab.subcarriers()), (8, 512));
    assert_eq!((set.ae.antennas(), set.ae.subcarriers()), (8, 512));
    assert_eq!((set.be.antennas(), set.be.subcarriers()), (1, 512));
    assert_eq!(set.ab.entries().shape(), (8, 512));
}

#[test]
fn unit_impulse_is_flat() {
    let ch = SpatialChannel::from_taps(vec![vec![c(1.0, 0.0)]], 64, vec![1.0]).unwrap();
    assert!(ch.row(0).iter().all(|v| *v == c(1.0, 0.0)));
}

#[test]
fn rows_match_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &n in &[16usize, 100, 512] {
        let taps: Vec<C64> = (0..16).map(|_| complex_gaussian(&mut rng)).collect();
        let ch = SpatialChannel::from_taps(vec![taps.clone()], n, vec![1.0 / 16.0; 16]).unwrap();
        assert!(max_rel_err(ch.row(0), &brute_dft(&taps, n)) < 1e-12);
    }
}

#[test]
fn exponential_profile() {
    let p = EvolutionParams::exponential(0.5, 16).unwrap();
    let total: f64 = p.power_profile.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!((p.power_profile[15] / p.power_profile[0] - 0.01).abs() < 1e-12);
    assert!(p.power_profile.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn invalid_dimensions_rejected() {
    let p = EvolutionParams::exponential(0.9, 16).unwrap();
    assert!(generate_channel_set(0, 64, &p, 1).is_err());
    assert!(generate_channel_set(2, 8, &p, 1).is_err());
    assert!(EvolutionParams::exponential(1.5, 4).is_err());
    assert!(EvolutionParams::exponential(-0.1, 4).is_err());
    assert!(EvolutionParams::exponential(0.5, 0).is_err());
}

#[test]
fn subchannels_use_independent_streams() {
    let p = EvolutionParams::exponential(1.0, 16).unwrap();
    let a = generate_channel_set(2, 64, &p, 9).unwrap();
    let b = generate_channel_set(2, 64, &p, 9).unwrap();
    assert_eq!(a.ab.row(0), b.ab.row(0));
    assert_ne!(a.ab.row(0), a.ae.row(0));
    assert_ne!(a.ab.row(0), a.be.row(0));
}

#[test]
fn evolve_rho_one_is_identity() {
    let p = EvolutionParams::exponential(1.0, 16).unwrap();
    let set = generate_channel_set(3, 128, &p, 2).unwrap();
    let out = evolve(&set.ab, 1.0, &mut stream(2, Stream::Evolution)).unwrap();
    for m in 0..3 {
        assert_eq!(out.row(m), set.ab.row(m));
    }
}

#[test]
fn evolve_rejects_bad_rho() {
    let p = EvolutionParams::exponential(1.0, 4).unwrap();
    let set = generate_channel_set(1, 16, &p, 2).unwrap();
    assert!(evolve(&set.ab, 1.01, &mut stream(2, Stream::Evolution)).is_err());
}

fn ar1_correlation(rho: f64, pairs: usize) -> (f64, f64) {
    // Correlation and power ratio of one tap across an evolution step.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut cross, mut p0, mut p1) = (0.0, 0.0, 0.0);
    for _ in 0..pairs {
        let t = complex_gaussian(&mut rng);
        let ch = SpatialChannel::from_taps(vec![vec![t]], 1, vec![1.0]).unwrap();
        let next = evolve(&ch, rho, &mut rng).unwrap();
        let u = next.taps(0)[0];
        cross += (t.conj() * u).re;
        p0 += t.norm_sqr();
        p1 += u.norm_sqr();
    }
    (cross / (p0 * p1).sqrt(), p1 / p0)
}

#[test]
fn evolve_correlation_monte_carlo() {
    let (r, ratio) = ar1_correlation(0.99, 10_000);
    assert!((r - 0.99).abs() < 0.01, "r = {r}");
    assert!((ratio - 1.0).abs() < 0.05);
    let (r0, _) = ar1_correlation(0.0, 10_000);
    assert!(r0.abs() < 0.03, "r0 = {r0}");
}

#[test]
fn slow_variation_between_rounds() {
    let p = EvolutionParams::exponential(0.99, 16).unwrap();
    let mut set = generate_channel_set(1, 512, &p, 3).unwrap();
    let mut rng = stream(3, Stream::Evolution);
    let mut worst: f64 = 1.0;
    let mut sum = 0.0;
    for _ in 0..1000 {
        let before = set.ab.row(0).to_vec();
        set.ab.evolve_in_place(0.99, &mut rng).unwrap();
        let num: C64 = before.iter().zip(set.ab.row(0)).map(|(a, b)| a.conj() * b).sum();
        let den = (before.iter().map(|v| v.norm_sqr()).sum::<f64>()
            * set.ab.row(0).iter().map(|v| v.norm_sqr()).sum::<f64>())
        .sqrt();
        worst = worst.min(num.norm() / den);
        sum += num.norm() / den;
    }
    assert!(sum / 1000.0 >= 0.98, "mean = {}", sum / 1000.0);
    assert!(worst >= 0.9, "worst = {worst}");
}

#[test]
fn noiseless_observation_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let row: Vec<C64> = (0..32).map(|_| complex_gaussian(&mut rng)).collect();
    let pilot: Vec<C64> = (0..32).map(|i| c(1.0 + i as f64, -0.5)).collect();
    let obs = observe(&row, &pilot, f64::INFINITY, &mut rng).unwrap();
    for ((y, h), s) in obs.y.iter().zip(&row).zip(&pilot) {
        assert_eq!(*y, h * s);
    }
    let est = estimate_csi(&obs, &pilot).unwrap();
    assert!(max_rel_err(&est, &row) < 1e-15);
}

#[test]
fn pilot_cancellation() {
    let row = vec![c(0.3, -0.7), c(-1.2, 0.1)];
    let pilot = vec![c(2.0, 0.0); 2];
    let obs = ProbeObservation {
        y: row.iter().map(|h| h * 2.0).collect(),
        snr_db: f64::INFINITY,
    };
    assert_eq!(estimate_csi(&obs, &pilot).unwrap(), row);
}

#[test]
fn zero_pilot_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pilot = vec![c(1.0, 0.0), c(0.0, 0.0)];
    assert!(observe(&[c(1.0, 0.0); 2], &pilot, 10.0, &mut rng).is_err());
}

#[test]
fn noise_power_at_zero_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ones = vec![c(1.0, 0.0); 10_000];
    let obs = observe(&ones, &ones, 0.0, &mut rng).unwrap();
    let p = obs.y.iter().map(|y| (y - 1.0).norm_sqr()).sum::<f64>() / 10_000.0;
    assert!((p - 1.0).abs() < 0.05, "noise power {p}");
}

#[test]
fn measured_snr_at_twenty_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let row: Vec<C64> = (0..10_000).map(|_| complex_gaussian(&mut rng)).collect();
    let pilot = vec![c(1.0, 0.0); row.len()];
    let obs = observe(&row, &pilot, 20.0, &mut rng).unwrap();
    let sig = row.iter().map(|h| h.norm_sqr()).sum::<f64>();
    let noise = obs.y.iter().zip(&row).map(|(y, h)| (y - h).norm_sqr()).sum::<f64>();
    let snr = 10.0 * (sig / noise).log10();
    assert!((snr - 20.0).abs() < 0.5, "snr {snr}");
}

#[test]
fn estimation_error_at_ten_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let row: Vec<C64> = (0..10_000).map(|_| complex_gaussian(&mut rng)).collect();
    let pilot = vec![c(0.0, 1.0); row.len()];
    let est = estimate_csi(&observe(&row, &pilot, 10.0, &mut rng).unwrap(), &pilot).unwrap();
    let power = row.iter().map(|h| h.norm_sqr()).sum::<f64>() / row.len() as f64;
    let mse = est.iter().zip(&row).map(|(e, h)| (e - h).norm_sqr()).sum::<f64>() / row.len() as f64;
    assert!((mse / (power / 10.0) - 1.0).abs() < 0.1, "mse {mse}");
}

#[test]
fn round_robin_examples() {
    let seq: Vec<usize> = (1..=8).map(|k| round_robin_index(k, 0, 8).unwrap()).collect();
    assert_eq!(seq, (1..=8).collect::<Vec<_>>());
    assert_eq!(round_robin_index(3, 1, 8).unwrap(), 4);
    assert!(round_robin_index(1, 8, 8).is_err());
    assert!(round_robin_index(0, 0, 8).is_err());
}

#[test]
fn eve_channel_uncorrelated_with_bob() {
    // Across-subcarrier correlation of one pair of rows is limited by the
    // 16-tap degrees of freedom, so independence is checked over realizations.
    let p = EvolutionParams::exponential(1.0, 16).unwrap();
    let sets: Vec<ChannelSet> = (0..2000).map(|s| generate_channel_set(1, 512, &p, s).unwrap()).collect();
    for n in [0usize, 100, 256, 511] {
        let a: Vec<f64> = sets.iter().map(|s| s.ab.row(0)[n].norm()).collect();
        let b: Vec<f64> = sets.iter().map(|s| s.be.row(0)[n].norm()).collect();
        let r = coskg::statistics::pearson(&a, &b).unwrap();
        assert!(r.abs() <= 0.1, "subcarrier {n}: r = {r}");
    }
}

#[test]
fn csi_matrix_rejects_non_finite() {
    let m = nalgebra::DMatrix::from_element(2, 2, c(f64::NAN, 0.0));
    assert!(CsiMatrix::from_matrix(m).is_err());
    assert!(CsiMatrix::from_columns(&[vec![c(1.0, 0.0)], vec![c(1.0, 0.0), c(2.0, 0.0)]]).is_err());
}

proptest! {
    #[test]
    fn round_robin_has_period_m(m in 1usize..16, c in 0usize..16, k in 1usize..200) {
        prop_assume!(c < m);
        let a = round_robin_index(k, c, m).unwrap();
        prop_assert!((1..=m).contains(&a));
        prop_assert_eq!(a, round_robin_index(k + m, c, m).unwrap());
    }

    #[test]
    fn reciprocity_is_bitwise(seed in 0u64..1000, m in 1usize..4) {
        let p = EvolutionParams::exponential(0.9, 4).unwrap();
        let set = generate_channel_set(m, 32, &p, seed).unwrap();
        let pilot = vec![c(1.0, 0.0); 32];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in 0..m {
            let fwd = estimate_csi(&observe(set.ab.row(a), &pilot, f64::INFINITY, &mut rng).unwrap(), &pilot).unwrap();
            let rev = estimate_csi(&observe(set.ab.row(a), &pilot, f64::INFINITY, &mut rng).unwrap(), &pilot).unwrap();
            prop_assert_eq!(fwd, rev);
        }
    }

    #[test]
    fn evolve_keeps_rows_finite(seed in 0u64..1000, rho in 0.0f64..=1.0) {
        let p = EvolutionParams::exponential(rho, 8).unwrap();
        let set = generate_channel_set(2, 16, &p, seed).unwrap();
        let out = evolve(&set.ab, rho, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(out.row(1).iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    }
}
