use proptest::prelude::*;

use hyperstab::numerics::{eigenvalues, expm, stabilizing_gain, Matrix};

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |v| Matrix::from_row_slice(rows, cols, &v) * scale)
}

/// Random 4×4 matrix rescaled to spectral norm at most 2.
fn bounded4() -> impl Strategy<Value = Matrix> {
    (matrix(4, 4, 1.0), 0.0..2.0f64).prop_map(|(a, target)| {
        let n = a.clone().svd(false, false).singular_values.max();
        if n == 0.0 {
            a
        } else {
            a * (target / n)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_semigroup(a in bounded4(), s in -1.0..1.0f64, t in -1.0..1.0f64) {
        let lhs = expm(&a, s + t).unwrap();
        let rhs = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10);
    }

    #[test]
    fn expm_inverse(a in bounded4(), t in 0.0..2.0f64) {
        let prod = expm(&a, t).unwrap() * expm(&a, -t).unwrap();
        prop_assert!((prod - Matrix::identity(4, 4)).amax() <= 1e-10);
    }

    #[test]
    fn stabilizing_gain_meets_margin(
        n in 1usize..5,
        m in 1usize..3,
        seed in any::<u64>(),
        margin in 0.05..1.0f64,
    ) {
        // Random pairs with a full-rank B are controllable almost surely.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let b = Matrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let k = stabilizing_gain(&a, &b, margin).unwrap();
        let worst = eigenvalues(&(&a + &b * &k)).unwrap().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(worst <= -margin + 1e-8, "max Re = {worst}, margin {margin}");
    }
}

#[test]
fn random_controllable_pairs_are_stabilized() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let a = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-2.0..2.0));
        let b = Matrix::from_fn(3, 1, |_, _| rng.gen_range(-1.0..1.0));
        let k = stabilizing_gain(&a, &b, 0.1).unwrap();
        let worst = eigenvalues(&(&a + &b * &k)).unwrap().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst <= -0.1 + 1e-8);
    }
}
