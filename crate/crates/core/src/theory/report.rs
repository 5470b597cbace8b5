use serde::{Deserialize, Serialize};

use super::{
    bound_con, bound_incon, condition_thm1_value, condition_thm3_value, k_threshold_corollary2,
    k_threshold_corollary4, steplength_corollary2, steplength_corollary4, ConBound, InconBound,
    Schedule, TheoryError,
};
use crate::problems::Provenance;

/// Everything the theory engine needs about a run and its problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub gap: f64,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(rename = "L_max")]
    pub l_max: Option<f64>,
    #[serde(rename = "L_T")]
    pub l_t: Option<f64>,
    pub sigma_sq: Option<f64>,
    /// max_k ‖g_k‖₀ for the sparse bound; `n` when absent.
    pub g0max: Option<f64>,
    pub provenance: Provenance,
}

/// One number per bound variant. Absent keys could not be evaluated
/// (missing constant, unmet precondition); `notes` says why.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_eq9: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmin_eq10: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_eq7: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_eq7_value: Option<f64>,
    /// General consistent-read bound at `gamma_eq9` with the T·γ² window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_eq8: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_eq11: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_eq17: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmin_eq18: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_eq15: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_eq15_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_eq16: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_eq42: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_eq19: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_eq20: Option<f64>,
    pub constants: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<TheoryInputs>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TheoryReport {
    /// Re-evaluate both conditions from the stored inputs and γ values.
    pub fn is_consistent(&self) -> bool {
        let Some(inp) = &self.inputs else {
            return true;
        };
        let con_ok = match (self.gamma_eq9, inp.l, self.cond_eq7) {
            (Some(g), Some(l), Some(c)) => {
                (condition_thm1_value(Schedule::Constant(g), l, inp.m, inp.t) <= 1.0) == c
            }
            _ => true,
        };
        let incon_ok = match (self.gamma_eq17, inp.l_t, inp.l_max, self.cond_eq15) {
            (Some(g), Some(lt), Some(lm), Some(c)) => {
                (condition_thm3_value(g, inp.m, inp.t, lt, lm, inp.n) <= 1.0) == c
            }
            _ => true,
        };
        con_ok && incon_ok
    }

    pub fn bounds(&self) -> Vec<(&'static str, f64)> {
        [
            ("bound_eq8", self.bound_eq8),
            ("bound_eq11", self.bound_eq11),
            ("bound_eq16", self.bound_eq16),
            ("bound_eq42", self.bound_eq42),
            ("bound_eq19", self.bound_eq19),
            ("bound_eq20", self.bound_eq20),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

fn note<T>(notes: &mut Vec<String>, key: &str, r: Result<T, TheoryError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{key}: {e}"));
            None
        }
    }
}

/// Evaluate the consistent-read keys (`con`), inconsistent-read keys
/// (`incon`), or both.
pub fn theory_report(inputs: &TheoryInputs, con: bool, incon: bool) -> TheoryReport {
    let mut r = TheoryReport {
        constants: Some(inputs.provenance),
        inputs: Some(inputs.clone()),
        ..TheoryReport::default()
    };
    let notes = &mut r.notes;
    let (gap, m, k, t, n) = (inputs.gap, inputs.m, inputs.k, inputs.t, inputs.n);

    if con {
        match (inputs.l, inputs.sigma_sq) {
            (Some(l), Some(s2)) => {
                r.gamma_eq9 = note(notes, "gamma_eq9", steplength_corollary2(gap, m, l, k, s2));
                r.kmin_eq10 = note(notes, "kmin_eq10", k_threshold_corollary2(gap, m, l, s2, t));
                if let Some(g) = r.gamma_eq9 {
                    let v = condition_thm1_value(Schedule::Constant(g), l, m, t);
                    r.cond_eq7_value = Some(v);
                    r.cond_eq7 = Some(v <= 1.0);
                    r.bound_eq8 = note(
                        notes,
                        "bound_eq8",
                        bound_con(gap, m, l, k, s2, t, g, ConBound::Thm1Const),
                    );
                }
                r.bound_eq11 = note(
                    notes,
                    "bound_eq11",
                    bound_con(gap, m, l, k, s2, t, 0.0, ConBound::Cor2),
                );
            }
            _ => notes.push("consistent-read keys need L and sigma_sq".into()),
        }
    }

    if incon {
        match (inputs.l_t, inputs.l_max, inputs.sigma_sq) {
            (Some(lt), Some(lm), Some(s2)) => {
                let sigma = s2.sqrt();
                r.gamma_eq17 = note(
                    notes,
                    "gamma_eq17",
                    steplength_corollary4(gap, n, k, lt, m, sigma),
                );
                r.kmin_eq18 = note(
                    notes,
                    "kmin_eq18",
                    k_threshold_corollary4(gap, lt, m, n, t, s2),
                );
                if let Some(g) = r.gamma_eq17 {
                    let v = condition_thm3_value(g, m, t, lt, lm, n);
                    r.cond_eq15_value = Some(v);
                    r.cond_eq15 = Some(v <= 1.0);
                    r.bound_eq16 = note(
                        notes,
                        "bound_eq16",
                        bound_incon(gap, n, k, m, t, lt, lm, s2, g, InconBound::Thm3),
                    );
                    r.bound_eq42 = note(
                        notes,
                        "bound_eq42",
                        bound_incon(gap, n, k, m, t, lt, lm, s2, g, InconBound::Thm3Appendix),
                    );
                }
                r.bound_eq19 = note(
                    notes,
                    "bound_eq19",
                    bound_incon(gap, n, k, m, t, lt, lm, s2, 0.0, InconBound::Cor4),
                );
                let g0max = inputs.g0max.unwrap_or(n as f64);
                r.bound_eq20 = note(
                    notes,
                    "bound_eq20",
                    bound_incon(
                        gap,
                        n,
                        k,
                        m,
                        t,
                        lt,
                        lm,
                        s2,
                        0.0,
                        InconBound::Sparse { g0max },
                    ),
                );
            }
            _ => notes.push("inconsistent-read keys need L_T, L_max and sigma_sq".into()),
        }
    }
    r
}
