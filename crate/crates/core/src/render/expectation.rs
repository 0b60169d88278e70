//! Closed-form expectations of the compositing model under i.i.d. α.
//!
//! Both assume every α along a pixel's blend sequence is independent with mean
//! `E[o]·E[G²ᴰ]` and that the sequence ends with transmittance ≈ `T_sat`.

use crate::error::{Result, SplatError};

fn check_product(mean_opacity: f64, mean_g2d: f64) -> Result<f64> {
    let a = mean_opacity * mean_g2d;
    if !(a > 0.0 && a < 1.0) {
        return Err(SplatError::InvalidArgument(format!(
            "E[o]·E[G] must lie in (0, 1), got {a}"
        )));
    }
    Ok(a)
}

/// Expected `∂Ĉ/∂α_m = (c0 − c_bg)·T_sat / (1 − E[o]·E[G²ᴰ])`, per channel.
pub fn expected_grad_magnitude_oracle(
    mean_opacity: f64,
    mean_g2d: f64,
    c0: [f64; 3],
    c_bg: [f64; 3],
    t_sat: f64,
) -> Result<[f64; 3]> {
    let a = mean_opacity * mean_g2d;
    if !(1.0 - a > 0.0) || !a.is_finite() {
        return Err(SplatError::InvalidArgument(format!("denominator 1 − E[o]·E[G] = {} is not positive", 1.0 - a)));
    }
    let a = check_product(mean_opacity, mean_g2d)?;
    let scale = t_sat / (1.0 - a);
    Ok([0, 1, 2].map(|ch| (c0[ch] - c_bg[ch]) * scale))
}

/// Blend depth `N` solving `(1 − E[o]·E[G²ᴰ])^N = T_sat`.
pub fn expected_blend_depth_oracle(mean_opacity: f64, mean_g2d: f64, t_sat: f64) -> Result<f64> {
    let a = check_product(mean_opacity, mean_g2d)?;
    if !(t_sat > 0.0 && t_sat < 1.0) {
        return Err(SplatError::InvalidArgument(format!("T_sat must lie in (0, 1), got {t_sat}")));
    }
    Ok(t_sat.ln() / (1.0 - a).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grad_zero_when_color_matches_background() {
        let g = expected_grad_magnitude_oracle(0.5, 0.5, [0.3; 3], [0.3; 3], 1e-4).unwrap();
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn grad_limit_small_alpha() {
        let g = expected_grad_magnitude_oracle(1e-9, 1e-3, [1.0, 0.5, 0.0], [0.0; 3], 1e-4).unwrap();
        assert_relative_eq!(g[0], 1e-4, max_relative = 1e-9);
        assert_relative_eq!(g[1], 0.5e-4, max_relative = 1e-9);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn grad_rejects_degenerate() {
        assert!(expected_grad_magnitude_oracle(1.0, 1.0, [1.0; 3], [0.0; 3], 1e-4).is_err());
        assert!(expected_grad_magnitude_oracle(2.0, 0.9, [1.0; 3], [0.0; 3], 1e-4).is_err());
    }

    #[test]
    fn depth_examples() {
        assert_relative_eq!(expected_blend_depth_oracle(1.0, 0.5, 0.25).unwrap(), 2.0, epsilon = 1e-12);
        let n = expected_blend_depth_oracle(1.0, 1.0 - 1e-12, 1e-4).unwrap();
        assert_eq!(n.ceil(), 1.0);
        assert!(expected_blend_depth_oracle(0.0, 0.5, 0.25).is_err());
        assert!(expected_blend_depth_oracle(0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn depth_decreases_with_opacity() {
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let n = expected_blend_depth_oracle(k as f64 / 10.0, 0.3, 1e-4).unwrap();
            assert!(n < prev);
            prev = n;
        }
    }
}
