//! Monte-Carlo checks of the random primitives against closed forms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfagree_core::estimation::{estimate_from_counts, sample_counts};
use rfagree_core::geometry::{random_frame, random_unit_vector};
use rfagree_core::{distance, UnitVector};

#[test]
fn count_frequencies_are_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = UnitVector::normalize(0.3, -0.5, 0.8).unwrap();
    let (m, reps) = (500u64, 4000);
    let mut sums = [0.0; 3];
    for _ in 0..reps {
        let k = sample_counts(&c, m, &mut rng);
        for i in 0..3 {
            sums[i] += 2.0 * k[i] as f64 / m as f64 - 1.0;
        }
    }
    for (i, &ci) in c.to_array().iter().enumerate() {
        let mean = sums[i] / reps as f64;
        let sd = ((1.0 - ci * ci) / m as f64 / reps as f64).sqrt();
        assert!((mean - ci).abs() < 5.0 * sd, "axis {i}: mean {mean} vs {ci}");
    }
}

#[test]
fn uniform_directions_fill_octants_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 80_000;
    let mut bins = [0u32; 8];
    let mut mean = [0.0; 3];
    for _ in 0..n {
        let [x, y, z] = random_unit_vector(&mut rng).to_array();
        bins[(usize::from(x > 0.0) << 2) | (usize::from(y > 0.0) << 1) | usize::from(z > 0.0)] += 1;
        mean[0] += x;
        mean[1] += y;
        mean[2] += z;
    }
    let expected = n as f64 / 8.0;
    let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
    // 7 degrees of freedom; 24.3 is the 0.999 quantile.
    assert!(chi2 < 24.3, "chi2 = {chi2}, bins {bins:?}");
    for m in mean {
        // each coordinate has variance 1/3
        assert!((m / n as f64).abs() < 5.0 * (1.0 / 3.0 / n as f64).sqrt());
    }
}

#[test]
fn random_frames_move_a_fixed_axis_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40_000;
    let mut z_hist = [0u32; 4];
    for _ in 0..n {
        let z = random_frame(&mut rng).to_global(&UnitVector::Z).z();
        // uniform on the sphere means z is uniform on [-1, 1]
        z_hist[(((z + 1.0) / 2.0 * 4.0) as usize).min(3)] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = z_hist.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 16.3, "chi2 = {chi2}, {z_hist:?}");
}

#[test]
fn estimation_error_shrinks_like_inverse_root_m() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = UnitVector::normalize(1.0, 2.0, -2.0).unwrap();
    let rms = |m: u64, rng: &mut ChaCha8Rng| {
        let reps = 3000;
        let s: f64 = (0..reps)
            .map(|_| distance(&estimate_from_counts(sample_counts(&c, m, rng), m).unwrap(), &c).powi(2))
            .sum();
        (s / reps as f64).sqrt()
    };
    let small = rms(400, &mut rng);
    let large = rms(6400, &mut rng);
    // 16x the qubits gives a quarter of the error
    assert!((small / large - 4.0).abs() < 0.4, "{small} / {large}");
}
