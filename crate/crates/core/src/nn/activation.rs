use super::Scalar;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// GELU, tanh approximation.
#[inline]
pub fn gelu<S: Scalar>(x: S) -> S {
    let inner = S::lit(SQRT_2_OVER_PI) * (x + S::lit(GELU_CUBIC) * x * x * x);
    S::lit(0.5) * x * (S::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let k = S::lit(SQRT_2_OVER_PI);
    let c = S::lit(GELU_CUBIC);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let dinner = k * (S::one() + S::lit(3.0) * c * x * x);
    S::lit(0.5) * (S::one() + t) + S::lit(0.5) * x * (S::one() - t * t) * dinner
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_grad_matches_central_difference() {
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn sigmoid_is_half_at_zero() {
        assert_eq!(sigmoid(0.0f64), 0.5);
    }
}
