use kanscale::linalg::{gram, singular_values, spectrum_summary, Condition, Matrix};
use kanscale::rng::SeededRng;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_row_major(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

#[test]
fn singular_values_match_nalgebra_svd() {
    let mut rng = SeededRng::new(42);
    for (r, c) in [(1, 1), (5, 3), (3, 5), (40, 12), (12, 40), (90, 30), (64, 64)] {
        let m = random(r, c, &mut rng);
        let ours = singular_values(&m).unwrap();
        let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-11 * theirs[0], "{r}x{c}: {a} vs {b}");
        }
    }
}

#[test]
fn gram_eigenvalues_are_squared_singular_values() {
    let mut rng = SeededRng::new(7);
    let m = random(30, 10, &mut rng);
    let g = gram(&m).unwrap();
    let mut eig: Vec<f64> = to_na(&g).symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let sv = singular_values(&m).unwrap();
    for (e, s) in eig.iter().zip(&sv) {
        assert!((e - s * s).abs() <= 1e-10 * sv[0] * sv[0]);
    }
}

#[test]
fn graded_spectrum_is_resolved() {
    // U diag(10^-k) Vᵀ with orthogonal factors from nalgebra's QR.
    let mut rng = SeededRng::new(3);
    let n = 8;
    let q = |rng: &mut SeededRng| to_na(&random(n, n, rng)).qr().q();
    let (u, v) = (q(&mut rng), q(&mut rng));
    let s: Vec<f64> = (0..n).map(|k| 10f64.powi(-(k as i32))).collect();
    let a = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * v.transpose();
    let m = Matrix::from_row_major(n, n, a.transpose().as_slice().to_vec()).unwrap();
    let ours = singular_values(&m).unwrap();
    for (a, b) in ours.iter().zip(&s) {
        assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gram_squares_the_condition_number(rows in 2usize..30, cols in 1usize..10, seed in any::<u64>()) {
        prop_assume!(rows >= cols);
        let mut rng = SeededRng::new(seed);
        let m = random(rows, cols, &mut rng);
        let a = spectrum_summary(&m).unwrap();
        let g = spectrum_summary(&gram(&m).unwrap()).unwrap();
        if let (Condition::Finite(k), Condition::Finite(k2)) = (a.condition_number, g.condition_number) {
            prop_assert!((k2 - k * k).abs() <= 1e-8 * k * k);
        }
    }

    #[test]
    fn frobenius_norm_is_singular_value_energy(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let m = random(rows, cols, &mut rng);
        let energy: f64 = singular_values(&m).unwrap().iter().map(|s| s * s).sum();
        let f = m.frobenius_norm().powi(2);
        prop_assert!((energy - f).abs() <= 1e-12 * f.max(1.0));
    }
}
