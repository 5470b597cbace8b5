use super::{steplength_corollary2, steplength_corollary4, TheoryError, TheoryInputs};
use crate::config::{GammaRule, RunConfig};
use crate::problems::Problem;

/// L_T for the run's delay bound. At T = 0 the single-coordinate constant L_1
/// stands in, since supports cannot be empty.
pub fn delay_support_lipschitz<P: Problem + ?Sized>(p: &P, delay_bound: usize) -> Option<f64> {
    p.support_lipschitz(delay_bound.max(1))
}

/// Problem constants and run shape, ready for `theory_report`.
pub fn theory_inputs<P: Problem + ?Sized>(p: &P, cfg: &RunConfig) -> TheoryInputs {
    let c = p.constants();
    TheoryInputs {
        gap: c.gap,
        n: p.dim(),
        m: cfg.minibatch,
        k: cfg.iterations as u64,
        t: cfg.delay_bound,
        l: c.lipschitz,
        l_max: c.lipschitz_max,
        l_t: delay_support_lipschitz(p, cfg.delay_bound),
        sigma_sq: c.sigma_sq,
        g0max: None,
        provenance: c.provenance,
    }
}

/// The constant steplength a run uses.
pub fn resolve_gamma<P: Problem + ?Sized>(p: &P, cfg: &RunConfig) -> Result<f64, TheoryError> {
    match cfg.gamma {
        GammaRule::Constant { value } => Ok(value),
        GammaRule::Corollary2 => {
            let c = p.constants();
            let l = c.lipschitz.ok_or(TheoryError::MissingConstant("L"))?;
            let s2 = c.sigma_sq.ok_or(TheoryError::MissingConstant("sigma_sq"))?;
            steplength_corollary2(c.gap, cfg.minibatch, l, cfg.iterations as u64, s2)
        }
        GammaRule::Corollary4 => {
            let c = p.constants();
            let l_t = delay_support_lipschitz(p, cfg.delay_bound)
                .ok_or(TheoryError::MissingConstant("L_T"))?;
            let s2 = c.sigma_sq.ok_or(TheoryError::MissingConstant("sigma_sq"))?;
            steplength_corollary4(
                c.gap,
                p.dim(),
                cfg.iterations as u64,
                l_t,
                cfg.minibatch,
                s2.sqrt(),
            )
        }
    }
}
