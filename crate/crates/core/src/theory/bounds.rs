use serde::{Deserialize, Serialize};

use super::{positive, TheoryError};

/// A steplength sequence for the consistent-read condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule<'a> {
    Constant(f64),
    /// γ_1, γ_2, …; the last value repeats past the end.
    Sequence(&'a [f64]),
}

/// Which consistent-read bound to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConBound {
    /// General bound at constant γ, with the window Σ_{j=k−T}^{k−1} γ_j² = Tγ².
    Thm1Const,
    /// Tuned-steplength bound 4·sqrt(gap·L / (M·K))·σ.
    Cor2,
}

/// Which inconsistent-read bound to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InconBound {
    /// General bound with middle term L_T²·T·M·γ²·σ² / (2n).
    Thm3,
    /// Same bound with the larger middle term 2·L_T²·T·M·γ²·σ² / n.
    Thm3Appendix,
    /// Tuned-steplength bound sqrt(72·gap·L_T·n / (K·M))·σ.
    Cor4,
    /// Sparse variant with max_k ‖g_k‖₀ = `g0max`.
    Sparse { g0max: f64 },
}

/// γ = sqrt(gap / (M·L·K·σ²)).
pub fn steplength_corollary2(
    gap: f64,
    m: usize,
    l: f64,
    k: u64,
    sigma_sq: f64,
) -> Result<f64, TheoryError> {
    let gap = positive("gap", gap)?;
    let m = positive("M", m as f64)?;
    let l = positive("L", l)?;
    let k = positive("K", k as f64)?;
    let sigma_sq = positive("sigma_sq", sigma_sq)?;
    Ok((gap / (m * l * k * sigma_sq)).sqrt())
}

/// K_min = ceil(4·M·L·gap / σ² · (T + 1)²).
pub fn k_threshold_corollary2(
    gap: f64,
    m: usize,
    l: f64,
    sigma_sq: f64,
    t: usize,
) -> Result<u64, TheoryError> {
    let gap = positive("gap", gap)?;
    let m = positive("M", m as f64)?;
    let l = positive("L", l)?;
    let sigma_sq = positive("sigma_sq", sigma_sq)?;
    let t1 = (t + 1) as f64;
    Ok((4.0 * m * l * gap / sigma_sq * t1 * t1).ceil() as u64)
}

/// Largest left-hand side of L·M·γ_k + 2L²M²T·γ_k·Σ_{κ=1}^{T} γ_{k+κ} over k.
pub fn condition_thm1_value(schedule: Schedule<'_>, l: f64, m: usize, t: usize) -> f64 {
    let m = m as f64;
    let tf = t as f64;
    match schedule {
        Schedule::Constant(g) => l * m * g + 2.0 * l * l * m * m * tf * tf * g * g,
        Schedule::Sequence(gs) => {
            let Some(&last) = gs.last() else {
                return 0.0;
            };
            let at = |i: usize| gs.get(i).copied().unwrap_or(last);
            (0..gs.len())
                .map(|k| {
                    let ahead: f64 = (1..=t).fold(0.0, |acc, kappa| acc + at(k + kappa));
                    l * m * gs[k] + 2.0 * l * l * m * m * tf * gs[k] * ahead
                })
                .fold(0.0, f64::max)
        }
    }
}

pub fn check_condition_thm1(schedule: Schedule<'_>, l: f64, m: usize, t: usize) -> bool {
    condition_thm1_value(schedule, l, m, t) <= 1.0
}

/// γ = sqrt(gap·n) / (sqrt(K·L_T·M)·σ).
pub fn steplength_corollary4(
    gap: f64,
    n: usize,
    k: u64,
    l_t: f64,
    m: usize,
    sigma: f64,
) -> Result<f64, TheoryError> {
    let gap = positive("gap", gap)?;
    let n = positive("n", n as f64)?;
    let k = positive("K", k as f64)?;
    let l_t = positive("L_T", l_t)?;
    let m = positive("M", m as f64)?;
    let sigma = positive("sigma", sigma)?;
    Ok((gap * n).sqrt() / ((k * l_t * m).sqrt() * sigma))
}

/// K_min = ceil(16·gap·L_T·M·(n^{3/2} + 4T²) / (√n·σ²)).
pub fn k_threshold_corollary4(
    gap: f64,
    l_t: f64,
    m: usize,
    n: usize,
    t: usize,
    sigma_sq: f64,
) -> Result<u64, TheoryError> {
    let gap = positive("gap", gap)?;
    let l_t = positive("L_T", l_t)?;
    let m = positive("M", m as f64)?;
    let n = positive("n", n as f64)?;
    let sigma_sq = positive("sigma_sq", sigma_sq)?;
    let tf = t as f64;
    Ok(
        (16.0 * gap * l_t * m * (n.powf(1.5) + 4.0 * tf * tf) / (n.sqrt() * sigma_sq)).ceil()
            as u64,
    )
}

/// 2M²T·L_T²·(√n + T − 1)·γ² / n^{3/2} + 2M·L_max·γ.
pub fn condition_thm3_value(gamma: f64, m: usize, t: usize, l_t: f64, l_max: f64, n: usize) -> f64 {
    let m = m as f64;
    let tf = t as f64;
    let nf = n as f64;
    2.0 * m * m * tf * l_t * l_t * (nf.sqrt() + tf - 1.0) * gamma * gamma / nf.powf(1.5)
        + 2.0 * m * l_max * gamma
}

pub fn check_condition_thm3(
    gamma: f64,
    m: usize,
    t: usize,
    l_t: f64,
    l_max: f64,
    n: usize,
) -> bool {
    condition_thm3_value(gamma, m, t, l_t, l_max, n) <= 1.0
}

#[allow(clippy::too_many_arguments)]
pub fn bound_con(
    gap: f64,
    m: usize,
    l: f64,
    k: u64,
    sigma_sq: f64,
    t: usize,
    gamma: f64,
    variant: ConBound,
) -> Result<f64, TheoryError> {
    let gap = positive("gap", gap)?;
    let mf = positive("M", m as f64)?;
    let l = positive("L", l)?;
    let kf = positive("K", k as f64)?;
    if !(sigma_sq.is_finite() && sigma_sq >= 0.0) {
        return Err(TheoryError::NonFinite {
            name: "sigma_sq",
            value: sigma_sq,
        });
    }
    match variant {
        ConBound::Thm1Const => {
            let gamma = positive("gamma", gamma)?;
            let value = condition_thm1_value(Schedule::Constant(gamma), l, m, t);
            if value > 1.0 {
                return Err(TheoryError::ConditionViolated {
                    which: "eq7",
                    value,
                });
            }
            let tf = t as f64;
            Ok(2.0 * gap / (mf * kf * gamma)
                + gamma * l * sigma_sq
                + 2.0 * l * l * mf * tf * gamma * gamma * sigma_sq)
        }
        ConBound::Cor2 => {
            let k_min = k_threshold_corollary2(gap, m, l, sigma_sq, t)?;
            if k < k_min {
                return Err(TheoryError::BelowThreshold { k, k_min });
            }
            Ok(4.0 * (gap * l / (mf * kf)).sqrt() * sigma_sq.sqrt())
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn bound_incon(
    gap: f64,
    n: usize,
    k: u64,
    m: usize,
    t: usize,
    l_t: f64,
    l_max: f64,
    sigma_sq: f64,
    gamma: f64,
    variant: InconBound,
) -> Result<f64, TheoryError> {
    let gap = positive("gap", gap)?;
    let nf = positive("n", n as f64)?;
    let kf = positive("K", k as f64)?;
    let mf = positive("M", m as f64)?;
    let l_t = positive("L_T", l_t)?;
    let tf = t as f64;
    let sigma = sigma_sq.sqrt();
    match variant {
        InconBound::Thm3 | InconBound::Thm3Appendix => {
            let gamma = positive("gamma", gamma)?;
            let l_max = positive("L_max", l_max)?;
            let value = condition_thm3_value(gamma, m, t, l_t, l_max, n);
            if value > 1.0 {
                return Err(TheoryError::ConditionViolated {
                    which: "eq15",
                    value,
                });
            }
            let middle = l_t * l_t * tf * mf * gamma * gamma * sigma_sq / nf;
            let middle = if variant == InconBound::Thm3 {
                middle / 2.0
            } else {
                2.0 * middle
            };
            Ok(2.0 * nf * gap / (kf * mf * gamma) + middle + l_max * gamma * sigma_sq)
        }
        InconBound::Cor4 => {
            let k_min = k_threshold_corollary4(gap, l_t, m, n, t, sigma_sq)?;
            if k < k_min {
                return Err(TheoryError::BelowThreshold { k, k_min });
            }
            Ok((72.0 * gap * l_t * nf / (kf * mf)).sqrt() * sigma)
        }
        InconBound::Sparse { g0max } => {
            let g0max = positive("g0max", g0max)?;
            let k_min = k_threshold_corollary4(gap, l_t, m, n, t, sigma_sq)?;
            if k < k_min {
                return Err(TheoryError::BelowThreshold { k, k_min });
            }
            // The root closes after L_T; ‖g‖₀ multiplies outside it.
            Ok(6.0 * (2.0 * gap * l_t).sqrt() * g0max * sigma / (kf * mf).sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn con_tuned_steplength() {
        assert!(close(
            steplength_corollary2(1.0, 1, 1.0, 100, 1.0).unwrap(),
            0.1
        ));
        assert!(close(
            steplength_corollary2(2.0, 4, 0.5, 800, 0.25).unwrap(),
            0.005f64.sqrt()
        ));
        assert!(close(
            steplength_corollary2(1.0, 1, 1.0, 400, 1.0).unwrap(),
            0.05
        ));
        assert!(matches!(
            steplength_corollary2(0.0, 1, 1.0, 100, 1.0),
            Err(TheoryError::NonPositive { name: "gap", .. })
        ));
        assert!(steplength_corollary2(1.0, 0, 1.0, 100, 1.0).is_err());
    }

    #[test]
    fn con_tuned_threshold() {
        assert_eq!(k_threshold_corollary2(1.0, 1, 1.0, 1.0, 3).unwrap(), 64);
        assert_eq!(k_threshold_corollary2(1.0, 1, 1.0, 1.0, 0).unwrap(), 4);
        assert_eq!(k_threshold_corollary2(0.5, 2, 1.0, 0.25, 1).unwrap(), 64);
        assert!(k_threshold_corollary2(1.0, 1, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn consistent_condition() {
        assert!(close(
            condition_thm1_value(Schedule::Constant(0.1), 1.0, 1, 2),
            0.18
        ));
        assert!(check_condition_thm1(Schedule::Constant(0.1), 1.0, 1, 2));
        assert!(!check_condition_thm1(Schedule::Constant(1.0), 1.0, 1, 2));
        assert!(close(
            condition_thm1_value(Schedule::Constant(1.0), 1.0, 1, 2),
            9.0
        ));
        // T = 0 reduces to L·M·γ ≤ 1.
        assert!(check_condition_thm1(Schedule::Constant(0.5), 2.0, 1, 0));
        assert!(check_condition_thm1(Schedule::Constant(0.25), 1.0, 4, 0));
        assert!(!check_condition_thm1(Schedule::Constant(0.26), 1.0, 4, 0));
    }

    #[test]
    fn consistent_condition_on_sequences() {
        let constant = [0.1; 5];
        assert!(close(
            condition_thm1_value(Schedule::Sequence(&constant), 1.0, 1, 2),
            condition_thm1_value(Schedule::Constant(0.1), 1.0, 1, 2)
        ));
        // Steps ahead enter the window: k = 1 sees 0.1 + 4·0.1·(0.1 + 2.0) = 0.94.
        let spike = [0.1, 0.1, 0.1, 2.0, 0.1];
        let at_one = 0.1 + 4.0 * 0.1 * (0.1 + 2.0);
        assert!(condition_thm1_value(Schedule::Sequence(&spike[..3]), 1.0, 1, 2) < at_one);
        assert!(!check_condition_thm1(Schedule::Sequence(&spike), 1.0, 1, 2));
        assert!(check_condition_thm1(Schedule::Sequence(&[]), 1.0, 1, 2));
    }

    #[test]
    fn incon_tuned_steplength() {
        assert!(close(
            steplength_corollary4(1.0, 4, 100, 1.0, 1, 1.0).unwrap(),
            0.2
        ));
        assert!(close(
            steplength_corollary4(1.0, 1, 100, 1.0, 1, 1.0).unwrap(),
            0.1
        ));
        assert!(close(
            steplength_corollary4(4.0, 4, 100, 1.0, 4, 2.0).unwrap(),
            0.1
        ));
        assert!(steplength_corollary4(1.0, 4, 100, -1.0, 1, 1.0).is_err());
    }

    #[test]
    fn incon_tuned_threshold() {
        assert_eq!(k_threshold_corollary4(1.0, 1.0, 1, 4, 1, 1.0).unwrap(), 96);
        assert_eq!(k_threshold_corollary4(1.0, 1.0, 1, 4, 0, 1.0).unwrap(), 64);
        assert_eq!(k_threshold_corollary4(1.0, 1.0, 1, 1, 0, 1.0).unwrap(), 16);
        assert!(k_threshold_corollary4(1.0, 1.0, 1, 0, 0, 1.0).is_err());
    }

    #[test]
    fn inconsistent_condition() {
        assert!(close(condition_thm3_value(0.1, 1, 1, 1.0, 1.0, 4), 0.205));
        assert!(check_condition_thm3(0.1, 1, 1, 1.0, 1.0, 4));
        assert!(close(condition_thm3_value(1.0, 1, 1, 1.0, 1.0, 4), 2.5));
        assert!(!check_condition_thm3(1.0, 1, 1, 1.0, 1.0, 4));
        // T = 0: equality at γ = 1 / (2·M·L_max).
        assert_eq!(condition_thm3_value(0.25, 2, 0, 3.0, 1.0, 9), 1.0);
        assert!(check_condition_thm3(0.25, 2, 0, 3.0, 1.0, 9));
    }

    #[test]
    fn consistent_read_bounds() {
        let v = bound_con(1.0, 1, 1.0, 100, 1.0, 2, 0.1, ConBound::Thm1Const).unwrap();
        assert!(close(v, 0.34));
        let v = bound_con(1.0, 1, 1.0, 100, 1.0, 3, 0.1, ConBound::Cor2).unwrap();
        assert!(close(v, 0.4));
        let quad = bound_con(1.0, 1, 1.0, 400, 1.0, 3, 0.0, ConBound::Cor2).unwrap();
        assert!(close(quad, 0.2));
        assert!(matches!(
            bound_con(1.0, 1, 1.0, 100, 1.0, 2, 1.0, ConBound::Thm1Const),
            Err(TheoryError::ConditionViolated { which: "eq7", .. })
        ));
        assert!(matches!(
            bound_con(1.0, 1, 1.0, 63, 1.0, 3, 0.1, ConBound::Cor2),
            Err(TheoryError::BelowThreshold { k: 63, k_min: 64 })
        ));
    }

    #[test]
    fn inconsistent_read_bounds() {
        let v = bound_incon(1.0, 4, 288, 1, 1, 1.0, 1.0, 1.0, 0.0, InconBound::Cor4).unwrap();
        assert!(close(v, 1.0));
        let v = bound_incon(1.0, 1, 100, 1, 0, 1.0, 1.0, 1.0, 0.1, InconBound::Thm3).unwrap();
        assert!(close(v, 0.3));
        let v = bound_incon(
            1.0,
            1,
            72,
            2,
            0,
            1.0,
            1.0,
            1.0,
            0.0,
            InconBound::Sparse { g0max: 2.0 },
        )
        .unwrap();
        assert!(close(v, 2f64.sqrt()));
    }

    #[test]
    fn incon_variants_differ_by_four_in_the_middle_term() {
        let args = (1.0, 4, 1000, 2, 3, 1.5, 1.0, 0.5, 0.05);
        let stated = bound_incon(
            args.0,
            args.1,
            args.2,
            args.3,
            args.4,
            args.5,
            args.6,
            args.7,
            args.8,
            InconBound::Thm3,
        )
        .unwrap();
        let appendix = bound_incon(
            args.0,
            args.1,
            args.2,
            args.3,
            args.4,
            args.5,
            args.6,
            args.7,
            args.8,
            InconBound::Thm3Appendix,
        )
        .unwrap();
        let outer = 2.0 * 4.0 * 1.0 / (1000.0 * 2.0 * 0.05) + 1.0 * 0.05 * 0.5;
        assert!(close((appendix - outer) / (stated - outer), 4.0));
    }

    proptest! {
        #[test]
        fn tuned_bounds_scale_as_inverse_sqrt_k(
            gap in 0.01f64..10.0,
            l in 0.1f64..10.0,
            m in 1usize..16,
            sigma_sq in 0.01f64..4.0,
            t in 0usize..8,
            n in 1usize..64,
        ) {
            let k = k_threshold_corollary2(gap, m, l, sigma_sq, t).unwrap()
                .max(k_threshold_corollary4(gap, l, m, n, t, sigma_sq).unwrap());
            let a = bound_con(gap, m, l, k, sigma_sq, t, 0.0, ConBound::Cor2).unwrap();
            let b = bound_con(gap, m, l, 2 * k, sigma_sq, t, 0.0, ConBound::Cor2).unwrap();
            prop_assert!((b / a - 0.5f64.sqrt()).abs() < 1e-12);
            let a = bound_incon(gap, n, k, m, t, l, l, sigma_sq, 0.0, InconBound::Cor4).unwrap();
            let b = bound_incon(gap, n, 2 * k, m, t, l, l, sigma_sq, 0.0, InconBound::Cor4).unwrap();
            prop_assert!((b / a - 0.5f64.sqrt()).abs() < 1e-12);
        }
    }
}
