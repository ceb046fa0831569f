use coskg::channel_model::{complex_gaussian, C64};
use coskg::harness::{raw_key_metrics, ExperimentConfig};
use coskg::kl_transform::{BlockShape, TransformBasis, TransformedMatrix};
use coskg::quantizer::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn basis_with(eigenvalues: Vec<f64>, selected: usize) -> TransformBasis {
    let rows = eigenvalues.len();
    let shape = BlockShape::new(rows, 1).unwrap();
    let mut b = TransformBasis::from_projection(DMatrix::identity(selected, rows), 0.999, shape, "energy").unwrap();
    b.eigenvalues = eigenvalues;
    b
}

fn random_transformed(p: usize, c: usize, seed: u64) -> TransformedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TransformedMatrix {
        data: DMatrix::from_fn(p, c, |_, _| complex_gaussian(&mut rng)),
    }
}

fn noisy_copy(t: &TransformedMatrix, sigma: f64, seed: u64) -> TransformedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TransformedMatrix {
        data: t.data.map(|v| v + complex_gaussian(&mut rng) * sigma),
    }
}

/// Both parties quantize under Alice's plan and keep the intersection of
/// the masks each rebuilds from the other's published drops.
fn both_keys(a: &TransformedMatrix, b: &TransformedMatrix, levels: &[usize], cfg: &QuantizerConfig) -> (RawKey, RawKey, Vec<Vec<bool>>) {
    let plan = plan(a, levels, cfg).unwrap();
    let (qa, da) = quantize(a, &plan, cfg).unwrap();
    let (qb, db) = quantize(b, &plan, cfg).unwrap();
    let ma = mask_from_message(&plan, &da);
    let mb = mask_from_message(&plan, &db);
    let mask: Vec<Vec<bool>> = ma.iter().zip(&mb).map(|(x, y)| x.iter().zip(y).map(|(p, q)| *p && *q).collect()).collect();
    assert_eq!(mask, intersect_masks(&qa, &qb).unwrap());
    (raw_key(&qa, &mask).unwrap(), raw_key(&qb, &mask).unwrap(), mask)
}

#[test]
fn default_levels() {
    let cfg = QuantizerConfig::default();
    let b = basis_with(vec![100.0, 50.0, 20.0, 1.0, 1.0, 1.0], 3);
    assert_eq!(assign_levels(&b, 1.0, &cfg), vec![2, 1, 1]);
    let single = basis_with(vec![100.0, 1.0, 1.0], 1);
    assert_eq!(assign_levels(&single, 1.0, &cfg), vec![2]);
}

#[test]
fn weak_components_demoted() {
    let cfg = QuantizerConfig {
        first_component_bits: 3,
        other_component_bits: 2,
        ..QuantizerConfig::default()
    };
    let b = basis_with(vec![3.0, 2.0, 1.0, 1.0], 3);
    assert_eq!(assign_levels(&b, 1.0, &cfg), vec![1, 1, 1]);
    let mixed = basis_with(vec![30.0, 5.0, 2.0, 1.0], 3);
    assert_eq!(assign_levels(&mixed, 1.0, &cfg), vec![3, 2, 1]);
}

#[test]
fn median_split() {
    let v: Vec<f64> = vec![5.0, 1.0, 4.0, 2.0, 3.0, 6.0];
    let th = window_thresholds(&v, 1, 0.0).unwrap();
    assert_eq!(th.thresholds, vec![3.5]);
}

#[test]
fn quartile_thresholds_by_sorting() {
    let v: Vec<f64> = (1..=64).rev().map(|x| x as f64).collect();
    let th = window_thresholds(&v, 2, 0.0).unwrap();
    for (t, rank) in th.thresholds.iter().zip([16, 32, 48]) {
        assert_eq!(v.iter().filter(|&&x| x <= *t).count(), rank);
    }
}

#[test]
fn guard_mass() {
    // Samples are N(0, 1/2); each guard should hold β/2^{L_p} = 0.05 of that law.
    let law = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mass, mut dropped) = (0.0, 0usize);
    let windows = 2000;
    for _ in 0..windows {
        let v: Vec<f64> = (0..64).map(|_| complex_gaussian(&mut rng).re).collect();
        let th = window_thresholds(&v, 1, 0.1).unwrap();
        let (lo, hi) = th.guards[0];
        mass += law.cdf(hi) - law.cdf(lo);
        dropped += v.iter().filter(|&&x| th.guarded(x)).count();
    }
    let mass = mass / windows as f64;
    assert!((mass - 0.05).abs() < 0.005, "guard mass {mass}");
    // Within the window the two order statistics straddling the median are
    // always close to it, so the count runs a little above 64 × 0.05.
    let per_window = dropped as f64 / windows as f64;
    assert!((3.0..=4.5).contains(&per_window), "{per_window} dropped per window");
}

#[test]
fn short_window_rejected() {
    assert!(window_thresholds(&[1.0, 2.0, 3.0], 2, 0.0).is_err());
    let bad = QuantizerConfig {
        guard_fraction: 0.5,
        ..QuantizerConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = QuantizerConfig {
        first_component_bits: 5,
        ..QuantizerConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn gray_examples() {
    let two: Vec<Vec<u8>> = (0..4).map(|c| gray_encode(c, 2).unwrap()).collect();
    assert_eq!(two, vec![vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 0]]);
    assert_eq!(gray_encode(0, 1).unwrap(), vec![0]);
    assert_eq!(gray_encode(1, 1).unwrap(), vec![1]);
    assert!(gray_encode(4, 2).is_err());
}

#[test]
fn gray_adjacency_exhaustive() {
    for bits in 1..=4 {
        let codes: Vec<Vec<u8>> = (0..1usize << bits).map(|c| gray_encode(c, bits).unwrap()).collect();
        for w in codes.windows(2) {
            assert_eq!(w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count(), 1);
        }
        let mut uniq = codes.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), codes.len());
    }
}

#[test]
fn noiseless_keys_agree() {
    let t = random_transformed(3, 640, 1);
    let cfg = QuantizerConfig::default();
    let (a, b, _) = both_keys(&t, &t.clone(), &[2, 1, 1], &cfg);
    assert!(!a.is_empty());
    assert_eq!(a.bits, b.bits);
}

#[test]
fn constant_window_gives_equal_bits() {
    let t = TransformedMatrix {
        data: DMatrix::from_element(1, 64, C64::new(0.7, -0.2)),
    };
    let cfg = QuantizerConfig {
        guard_fraction: 0.0,
        ..QuantizerConfig::default()
    };
    let (a, _, _) = both_keys(&t, &t, &[2], &cfg);
    assert_eq!(a.len(), 2 * 64 * 2);
    let first = &a.bits[..2];
    assert!(a.bits.chunks(2).all(|c| c == first));
}

#[test]
fn empty_input_rejected() {
    let t = TransformedMatrix {
        data: DMatrix::zeros(0, 0),
    };
    assert!(plan(&t, &[], &QuantizerConfig::default()).is_err());
}

#[test]
fn bit_order_is_component_major() {
    let t = random_transformed(2, 128, 5);
    let cfg = QuantizerConfig::default();
    let (a, _, mask) = both_keys(&t, &t, &[2, 1], &cfg);
    let keys: Vec<(usize, usize, usize, usize)> = a.provenance.iter().map(|p| (p.component, p.part, p.column, p.slot)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    // Bit count = Σ kept samples × their component's level.
    let expect: usize = mask.iter().enumerate().map(|(r, row)| row.iter().filter(|&&k| k).count() * [2, 1][r / 2]).sum();
    assert_eq!(a.len(), expect);
}

#[test]
fn masked_lengths_match_on_noisy_runs() {
    let cfg = QuantizerConfig::default();
    for seed in 0..100 {
        let a = random_transformed(3, 256, seed);
        let b = noisy_copy(&a, 0.2, seed + 1000);
        let (ka, kb, _) = both_keys(&a, &b, &[2, 1, 1], &cfg);
        assert_eq!(ka.len(), kb.len(), "seed {seed}");
        assert_eq!(ka.provenance, kb.provenance);
    }
}

#[test]
fn tail_window_rule() {
    // 64 + 7 columns: a 7-sample tail is shorter than 2·2^2 and is skipped at 2 bits,
    // but kept at 1 bit where the minimum is 4.
    let t = random_transformed(1, 71, 6);
    let cfg = QuantizerConfig::default();
    let two = plan(&t, &[2], &cfg).unwrap();
    assert_eq!(two.windows[0], vec![0..64]);
    let one = plan(&t, &[1], &cfg).unwrap();
    assert_eq!(one.windows[0], vec![0..64, 64..71]);
}

#[test]
fn adaptive_window_splits_loud_windows() {
    let mut t = random_transformed(1, 256, 7);
    for v in t.data.row_mut(0).iter_mut().skip(64).take(64) {
        *v *= 10.0;
    }
    let cfg = QuantizerConfig {
        adaptive_window: true,
        ..QuantizerConfig::default()
    };
    let p = plan(&t, &[1], &cfg).unwrap();
    assert_eq!(p.windows[0], vec![0..64, 64..96, 96..128, 128..192, 192..256]);
}

#[test]
fn amplitude_mode_has_one_part() {
    let t = random_transformed(2, 128, 8);
    let cfg = QuantizerConfig {
        part_mode: PartMode::Amplitude,
        ..QuantizerConfig::default()
    };
    let (a, _, mask) = both_keys(&t, &t, &[2, 1], &cfg);
    assert_eq!(mask.len(), 2);
    assert!(a.provenance.iter().all(|p| p.part == 0));
    assert!("phase".parse::<PartMode>().is_err());
}

fn mean_bgr(cfg: &ExperimentConfig, seeds: u64) -> f64 {
    (0..seeds)
        .map(|s| {
            let mut c = cfg.clone();
            c.seed = 100 + s;
            raw_key_metrics(&c).unwrap().0.bgr
        })
        .sum::<f64>()
        / seeds as f64
}

#[test]
fn bgr_grows_with_levels_and_eta() {
    let base = ExperimentConfig::desk();
    let mut prev = 0.0;
    for bits in 1..=3 {
        let mut c = base.clone();
        c.quantizer.first_component_bits = bits;
        let b = mean_bgr(&c, 4);
        assert!(b > prev, "L_p {bits}: {b} <= {prev}");
        prev = b;
    }
    let mut prev = 0.0;
    for eta in [0.5, 0.9, 0.999] {
        let mut c = base.clone();
        c.eta = eta;
        let b = mean_bgr(&c, 4);
        assert!(b >= prev, "eta {eta}: {b} < {prev}");
        prev = b;
    }
}

#[test]
fn short_windows_yield_more_bits() {
    let mut short = ExperimentConfig::desk();
    short.quantizer.window_len = 4;
    let mut long = ExperimentConfig::desk();
    long.quantizer.window_len = 128;
    assert!(mean_bgr(&short, 4) > mean_bgr(&long, 4));
}

proptest! {
    #[test]
    fn median_split_is_balanced(seed in 0u64..10_000, len in 2usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..len).map(|_| complex_gaussian(&mut rng).re).collect();
        let th = window_thresholds(&v, 1, 0.0).unwrap();
        let ones = v.iter().filter(|&&x| th.cell(x) == 1).count();
        let zeros = len - ones;
        prop_assert!(ones.abs_diff(zeros) <= 1);
    }

    #[test]
    fn one_cell_slip_flips_one_bit(bits in 1usize..=4, cell in 0usize..15) {
        prop_assume!(cell + 1 < 1 << bits);
        let a = gray_encode(cell, bits).unwrap();
        let b = gray_encode(cell + 1, bits).unwrap();
        prop_assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 1);
    }

    #[test]
    fn thresholds_sorted_and_guards_contain_them(seed in 0u64..10_000, bits in 1usize..=3, beta in 0.0f64..0.49) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..64).map(|_| complex_gaussian(&mut rng).re).collect();
        let th = window_thresholds(&v, bits, beta).unwrap();
        prop_assert_eq!(th.thresholds.len(), (1 << bits) - 1);
        prop_assert!(th.thresholds.windows(2).all(|w| w[0] <= w[1]));
        for (t, (lo, hi)) in th.thresholds.iter().zip(&th.guards) {
            prop_assert!(lo <= t && t <= hi);
        }
    }
}
