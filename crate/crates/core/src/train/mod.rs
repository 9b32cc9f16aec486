//! Three-stage training: sentence-level pre-training, multi-task training
//! on monolingual dialogues, and context-aware fine-tuning with a gradual
//! shift of the auxiliary tasks from monolingual to bilingual dialogues.

mod checkpoint;
mod corpora;
mod losses;
mod objective;
mod runner;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamConfig;

pub use checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION};
pub use corpora::{target_context, Corpora, Task};
pub(crate) use corpora::source_with_history;
pub use losses::{aux_loss, translation_loss, TranslationExample};
pub use objective::{
    lambda, stage2_total, stage3_fixed_total, stage3_transition_total, Coefficients, Components,
    LossReport, Stage3Objective,
};
pub use runner::{Collect, Observer, StepOutcome, Trainer};

/// Training stages, numbered 1 to 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Sentence,
    Monolingual,
    Dialogue,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Sentence => 1,
            Stage::Monolingual => 2,
            Stage::Dialogue => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Stage> {
        match n {
            1 => Some(Stage::Sentence),
            2 => Some(Stage::Monolingual),
            3 => Some(Stage::Dialogue),
            _ => None,
        }
    }

    /// Tag of the checkpoint this stage produces.
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Sentence => "M1",
            Stage::Monolingual => "M2",
            Stage::Dialogue => "M3",
        }
    }
}

/// Full three-stage schedule, or the two-stage baseline that skips stage 2
/// and every auxiliary term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mmt,
    Ft,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmt" => Ok(Mode::Mmt),
            "ft" => Ok(Mode::Ft),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected mmt or ft)"))),
        }
    }
}

/// Balancing factors of the auxiliary terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    /// Monolingual utterance discrimination.
    pub alpha1: f64,
    /// Monolingual speaker discrimination.
    pub beta1: f64,
    /// Bilingual utterance discrimination.
    pub alpha2: f64,
    /// Bilingual speaker discrimination.
    pub beta2: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            alpha1: 1.0,
            beta1: 0.2,
            alpha2: 0.2,
            beta2: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub steps: u64,
    /// Target-token budget of one translation batch.
    #[serde(default = "default_batch_tokens")]
    pub batch_tokens: usize,
    /// Examples per auxiliary-task batch.
    #[serde(default = "default_aux_batch")]
    pub aux_batch: usize,
}

fn default_batch_tokens() -> usize {
    128
}

fn default_aux_batch() -> usize {
    8
}

impl StageConfig {
    pub fn with_steps(steps: u64) -> Self {
        StageConfig {
            steps,
            batch_tokens: default_batch_tokens(),
            aux_batch: default_aux_batch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub mode: Mode,
    /// Preceding utterances visible to translation and to the classifiers.
    pub window: usize,
    pub label_smoothing: f64,
    /// Negatives drawn per positive utterance-discrimination sample.
    pub ud_negatives: usize,
    /// Prepend target-side history to the source context.
    pub target_context: bool,
    pub stage3_objective: Stage3Objective,
    pub weights: Weights,
    pub optimizer: AdamConfig,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub stage3: StageConfig,
    /// Emit a loss report every this many steps (the last step always
    /// reports).
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            mode: Mode::Mmt,
            window: 3,
            label_smoothing: 0.1,
            ud_negatives: 1,
            target_context: false,
            stage3_objective: Stage3Objective::Transition,
            weights: Weights::default(),
            optimizer: AdamConfig::default(),
            stage1: StageConfig::with_steps(200_000),
            stage2: StageConfig::with_steps(5_000),
            stage3: StageConfig::with_steps(5_000),
            log_every: 1,
        }
    }
}

impl TrainConfig {
    /// Desk-scale profile: short stages, a short warmup and larger
    /// auxiliary batches for the monolingual stage.
    pub fn tiny() -> Self {
        TrainConfig {
            optimizer: AdamConfig {
                lr: 1.5,
                warmup_steps: 200,
                ..AdamConfig::default()
            },
            stage1: StageConfig::with_steps(2_000),
            stage2: StageConfig {
                aux_batch: 64,
                ..StageConfig::with_steps(500)
            },
            stage3: StageConfig::with_steps(500),
            ..TrainConfig::default()
        }
    }

    pub fn stage(&self, stage: Stage) -> &StageConfig {
        match stage {
            Stage::Sentence => &self.stage1,
            Stage::Monolingual => &self.stage2,
            Stage::Dialogue => &self.stage3,
        }
    }

    /// Stages executed under the configured mode.
    pub fn stages(&self) -> Vec<Stage> {
        match self.mode {
            Mode::Mmt => vec![Stage::Sentence, Stage::Monolingual, Stage::Dialogue],
            Mode::Ft => vec![Stage::Sentence, Stage::Dialogue],
        }
    }

    /// Weights in force: the baseline carries no auxiliary terms.
    pub fn effective_weights(&self) -> Weights {
        match self.mode {
            Mode::Mmt => self.weights,
            Mode::Ft => Weights {
                alpha1: 0.0,
                beta1: 0.0,
                alpha2: 0.0,
                beta2: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let w = &self.weights;
        for (name, x) in [("alpha1", w.alpha1), ("beta1", w.beta1), ("alpha2", w.alpha2), ("beta2", w.beta2)] {
            if !(x >= 0.0 && x.is_finite()) {
                bad.push(format!("weights.{name} must be a nonnegative number"));
            }
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            bad.push("label_smoothing must be in [0, 1)".into());
        }
        if self.stage1.steps == 0 {
            bad.push("stage1.steps must be at least 1".into());
        }
        if self.stage3.steps == 0 {
            bad.push("stage3.steps must be at least 1".into());
        }
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2), ("stage3", &self.stage3)] {
            if s.batch_tokens == 0 || s.aux_batch == 0 {
                bad.push(format!("{name}: batch sizes must be positive"));
            }
        }
        if self.ud_negatives == 0 {
            bad.push("ud_negatives must be at least 1".into());
        }
        if self.log_every == 0 {
            bad.push("log_every must be at least 1".into());
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            bad.push("optimizer: need lr > 0, betas in [0, 1) and eps > 0".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}
