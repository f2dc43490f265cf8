//! Standard normal density and distribution function.

use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `E[(m + sZ)⁺]` for `Z ~ N(0, 1)`, `s ≥ 0` (the Bachelier call price).
pub fn normal_call(m: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return m.max(0.0);
    }
    let k = m / s;
    m * norm_cdf(k) + s * norm_pdf(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(0.5) - 0.691_462_461_274_013_1).abs() < 1e-15);
        assert!((norm_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!((normal_call(0.5, 1.0) - 0.6977966).abs() < 1e-7);
        assert!((normal_call(1.0, 1.0) - 1.0833155).abs() < 1e-7);
        assert!((normal_call(0.25, 1.0) - 0.5363447).abs() < 1e-7);
        assert_eq!(normal_call(-1.0, 0.0), 0.0);
    }
}
