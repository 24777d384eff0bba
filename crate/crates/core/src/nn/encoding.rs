use ndarray::{Array2, ArrayViewMut2};

use super::Scalar;
use crate::error::{Error, Result};

/// Sinusoidal position code: `PE[t,2i] = sin(t / 10000^(2i/d))`,
/// `PE[t,2i+1] = cos(t / 10000^(2i/d))`.
pub fn temporal_encoding<S: Scalar>(len: usize, dim: usize) -> Result<Array2<S>> {
    if dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "temporal encoding width must be even, got {dim}"
        )));
    }
    let mut pe = Array2::zeros((len, dim));
    for t in 0..len {
        for i in 0..dim / 2 {
            let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
            let arg = t as f64 / freq;
            pe[[t, 2 * i]] = S::lit(arg.sin());
            pe[[t, 2 * i + 1]] = S::lit(arg.cos());
        }
    }
    Ok(pe)
}

/// Adds a `len × d` code to every window of a window-major batch.
pub fn add_temporal_encoding<S: Scalar>(x: &mut ArrayViewMut2<'_, S>, pe: &Array2<S>) {
    let len = pe.nrows();
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &pe.row(r % len);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_row_alternates_zero_one() {
        let pe = temporal_encoding::<f64>(4, 8).unwrap();
        for i in 0..8 {
            assert_eq!(pe[[0, i]], if i % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn values_bounded_and_known_entry() {
        let pe = temporal_encoding::<f64>(50, 16).unwrap();
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!((pe[[1, 0]] - 0.841_470_98).abs() < 1e-7);
    }

    #[test]
    fn odd_width_rejected() {
        assert!(temporal_encoding::<f32>(3, 7).is_err());
    }
}
