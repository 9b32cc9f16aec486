//! Stage objectives as weighted sums of loss components.

use serde::{Deserialize, Serialize};

use super::{Stage, Weights};

/// Interpolation coefficient `n / total` for the gradual transition from
/// monolingual to bilingual auxiliary data. Steps past the budget clamp to 1.
pub fn lambda(n: u64, total: u64) -> f64 {
    if total == 0 || n >= total {
        if n > total {
            log::warn!("transition step {n} beyond budget {total}; clamping to 1");
        }
        return 1.0;
    }
    n as f64 / total as f64
}

/// Measured loss terms of one step. A term is `None` when the stage did not
/// compute it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub sent: Option<f64>,
    pub nct: Option<f64>,
    /// Bilingual-dialogue utterance discrimination, both sides summed.
    pub ud: Option<f64>,
    pub sd: Option<f64>,
    /// Monolingual-dialogue utterance discrimination, both languages summed.
    pub ud_mono: Option<f64>,
    pub sd_mono: Option<f64>,
}

/// Multipliers applied to each component to form a stage objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coefficients {
    pub sent: f64,
    pub nct: f64,
    pub ud: f64,
    pub sd: f64,
    pub ud_mono: f64,
    pub sd_mono: f64,
}

/// How the stage-3 auxiliary terms are weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage3Objective {
    /// Interpolate from monolingual to bilingual auxiliary data with λ.
    Transition,
    /// Bilingual auxiliary data only, fixed weights.
    Fixed,
}

impl Coefficients {
    pub fn for_stage(stage: Stage, w: &Weights, objective: Stage3Objective, lambda: f64) -> Self {
        let zero = Coefficients::default();
        match stage {
            Stage::Sentence => Coefficients { sent: 1.0, ..zero },
            Stage::Monolingual => Coefficients {
                sent: 1.0,
                ud_mono: w.alpha1,
                sd_mono: w.beta1,
                ..zero
            },
            Stage::Dialogue => match objective {
                Stage3Objective::Transition => Coefficients {
                    nct: 1.0,
                    ud: lambda * w.alpha2,
                    sd: lambda * w.beta2,
                    ud_mono: (1.0 - lambda) * w.alpha1,
                    sd_mono: (1.0 - lambda) * w.beta1,
                    ..zero
                },
                Stage3Objective::Fixed => Coefficients {
                    nct: 1.0,
                    ud: w.alpha2,
                    sd: w.beta2,
                    ..zero
                },
            },
        }
    }
}

fn v(x: Option<f64>) -> f64 {
    x.unwrap_or(0.0)
}

/// `L_sent + α1·L_ud_mono + β1·L_sd_mono`.
pub fn stage2_total(c: &Components, w: &Weights) -> f64 {
    v(c.sent) + w.alpha1 * v(c.ud_mono) + w.beta1 * v(c.sd_mono)
}

/// `L_nct + α2·L_ud + β2·L_sd`.
pub fn stage3_fixed_total(c: &Components, w: &Weights) -> f64 {
    v(c.nct) + w.alpha2 * v(c.ud) + w.beta2 * v(c.sd)
}

/// `L_nct + λ(α2·L_ud + β2·L_sd) + (1−λ)(α1·L_ud_mono + β1·L_sd_mono)`.
pub fn stage3_transition_total(c: &Components, w: &Weights, lambda: f64) -> f64 {
    v(c.nct)
        + lambda * (w.alpha2 * v(c.ud) + w.beta2 * v(c.sd))
        + (1.0 - lambda) * (w.alpha1 * v(c.ud_mono) + w.beta1 * v(c.sd_mono))
}

/// One logged optimisation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub stage: u8,
    /// Steps of this stage completed before this one.
    pub step: u64,
    pub steps: u64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub total: f64,
    pub components: Components,
    pub weights: Weights,
    pub objective: Stage3Objective,
}

impl LossReport {
    /// The stage formula applied to the logged components.
    pub fn recomputed_total(&self) -> f64 {
        match Stage::from_number(self.stage) {
            Some(Stage::Sentence) => v(self.components.sent),
            Some(Stage::Monolingual) => stage2_total(&self.components, &self.weights),
            Some(Stage::Dialogue) => match self.objective {
                Stage3Objective::Transition => {
                    stage3_transition_total(&self.components, &self.weights, self.lambda)
                }
                Stage3Objective::Fixed => stage3_fixed_total(&self.components, &self.weights),
            },
            None => f64::NAN,
        }
    }
}
