use proptest::prelude::*;
use richspace_core::{frob_inner, lerp, row_cosine_mean, Matrix};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |data| Matrix::new(rows, cols, data).unwrap())
}

fn pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c)))
}

fn triple() -> impl Strategy<Value = (Matrix, Matrix, Matrix)> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c), matrix(r, c)))
}

fn has_zero_row(m: &Matrix) -> bool {
    (0..m.rows()).any(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6)
}

proptest! {
    #[test]
    fn lerp_steps_are_uniform((x, y) in pair(), k in 1usize..40) {
        let step: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) / k as f64).collect();
        let mut prev = lerp(&x, &y, 0, k).unwrap();
        for i in 1..=k {
            let cur = lerp(&x, &y, i, k).unwrap();
            for ((c, p), s) in cur.as_slice().iter().zip(prev.as_slice()).zip(&step) {
                let scale = x.as_slice().iter().chain(y.as_slice()).fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assert!((c - p - s).abs() <= 1e-12 * scale);
            }
            prev = cur;
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded((x, y) in pair()) {
        prop_assume!(!has_zero_row(&x) && !has_zero_row(&y));
        let xy = row_cosine_mean(&x, &y).unwrap();
        prop_assert_eq!(xy.to_bits(), row_cosine_mean(&y, &x).unwrap().to_bits());
        prop_assert!(xy.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn cosine_ignores_positive_row_scaling((x, y) in pair(), row in 0usize..6, factor in 1e-3f64..1e3) {
        prop_assume!(!has_zero_row(&x) && !has_zero_row(&y));
        let row = row % x.rows();
        let mut data = x.as_slice().to_vec();
        for v in &mut data[row * x.cols()..(row + 1) * x.cols()] {
            *v *= factor;
        }
        let scaled = Matrix::new(x.rows(), x.cols(), data).unwrap();
        let before = row_cosine_mean(&x, &y).unwrap();
        let after = row_cosine_mean(&scaled, &y).unwrap();
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn frobenius_is_bilinear((x, z, y) in triple(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let lhs = frob_inner(&x.combine(a, &z, b).unwrap(), &y).unwrap();
        let rhs = a * frob_inner(&x, &y).unwrap() + b * frob_inner(&z, &y).unwrap();
        // Relative to the magnitude of the summed terms, not the (possibly cancelling) result.
        let scale: f64 = x.as_slice().iter().zip(z.as_slice()).zip(y.as_slice())
            .map(|((p, q), r)| (a * p).abs() * r.abs() + (b * q).abs() * r.abs())
            .sum::<f64>()
            .max(1e-300);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
    }
}
