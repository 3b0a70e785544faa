//! Central-difference gradient verification.

use crate::tensor::{Element, Tensor};

/// Relative error with the `max(|a|, |n|, 1e-8)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Central difference of `f` along coordinate `index` of `x`.
///
/// The perturbed coordinate is rounded to `T`, so the divisor is the step that
/// was actually taken rather than the nominal `2h`.
pub fn central_difference<T, F>(f: &mut F, x: &Tensor<T>, index: usize, h: f64) -> f64
where
    T: Element,
    F: FnMut(&Tensor<T>) -> f64,
{
    let mut probe = x.clone();
    let x0 = x.data()[index].as_f64();
    let plus = T::lit(x0 + h);
    let minus = T::lit(x0 - h);
    probe.data_mut()[index] = plus;
    let f_plus = f(&probe);
    probe.data_mut()[index] = minus;
    let f_minus = f(&probe);
    (f_plus - f_minus) / (plus.as_f64() - minus.as_f64())
}

/// Largest relative error between `analytic` and central differences of `f`,
/// over the given coordinates of `x`.
pub fn finite_difference_check_at<T, F>(
    mut f: F,
    x: &Tensor<T>,
    analytic: &Tensor<T>,
    h: f64,
    indices: &[usize],
) -> f64
where
    T: Element,
    F: FnMut(&Tensor<T>) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    assert_eq!(x.shape(), analytic.shape(), "gradient shape mismatch");
    indices
        .iter()
        .map(|&i| {
            let numeric = central_difference(&mut f, x, i, h);
            relative_error(analytic.data()[i].as_f64(), numeric)
        })
        .fold(0.0, f64::max)
}

/// [`finite_difference_check_at`] over every coordinate.
pub fn finite_difference_check<T, F>(f: F, x: &Tensor<T>, analytic: &Tensor<T>, h: f64) -> f64
where
    T: Element,
    F: FnMut(&Tensor<T>) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    finite_difference_check_at(f, x, analytic, h, &all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::<f64>::from_f64(&[3], &[1., 2., 3.]).unwrap();
        let g = Tensor::from_f64(&[3], &[2., 4., 6.]).unwrap();
        let err = finite_difference_check(
            |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum(),
            &x,
            &g,
            1e-4,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::<f64>::from_f64(&[2], &[0.3, -1.]).unwrap();
        let err = finite_difference_check(|_: &Tensor<f64>| 4.0, &x, &Tensor::zeros(&[2]), 1e-3);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = Tensor::<f64>::from_f64(&[1], &[2.]).unwrap();
        let wrong = Tensor::from_f64(&[1], &[3.]).unwrap();
        let err = finite_difference_check(|t: &Tensor<f64>| t.data()[0].powi(2), &x, &wrong, 1e-4);
        assert!(err > 0.2);
    }
}
