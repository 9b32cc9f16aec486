use serde::Serialize;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{FlatNct, Head, ModelConfig, Pass};
use crate::optim::{adam_step, AdamState};
use crate::params::Bound;
use crate::rng::{stream, DetRng};
use crate::tensor::{Graph, Var};

use super::checkpoint::fingerprint_of;
use super::corpora::{Corpora, Task};
use super::losses::{aux_loss, translation_loss};
use super::objective::{lambda, Coefficients, Components, LossReport, Stage3Objective};
use super::{Checkpoint, CheckpointMeta, Mode, Stage, TrainConfig};

/// Stream path reserved for parameter initialisation. Stage streams start
/// with the stage number, so they never collide with it.
const INIT_STREAM: u64 = 0;
const SAMPLING: u64 = 0;
const DROPOUT: u64 = 1;

/// Receives progress from a running stage.
pub trait Observer {
    fn report(&mut self, _report: &LossReport) -> Result<()> {
        Ok(())
    }

    /// Called at every checkpoint interval and when the stage stops.
    fn checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

/// Keeps every report, and every checkpoint when asked to.
#[derive(Default)]
pub struct Collect {
    pub reports: Vec<LossReport>,
    pub checkpoints: Vec<Checkpoint>,
    pub keep_checkpoints: bool,
}

impl Collect {
    pub fn keeping_checkpoints() -> Self {
        Collect {
            keep_checkpoints: true,
            ..Collect::default()
        }
    }
}

impl Observer for Collect {
    fn report(&mut self, report: &LossReport) -> Result<()> {
        self.reports.push(report.clone());
        Ok(())
    }

    fn checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        if self.keep_checkpoints {
            self.checkpoints.push(checkpoint.clone());
        }
        Ok(())
    }
}

/// Result of one optimisation step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub total: f64,
    pub components: Components,
    pub learning_rate: f64,
}

/// Runs training stages over fixed corpora.
pub struct Trainer<'a> {
    config: TrainConfig,
    model: ModelConfig,
    vocab: &'a Vocabulary,
    corpora: &'a Corpora,
    halt_after: Option<u64>,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    train: &'a TrainConfig,
    model: &'a ModelConfig,
    vocab: String,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: TrainConfig,
        model: ModelConfig,
        vocab: &'a Vocabulary,
        corpora: &'a Corpora,
    ) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        Ok(Trainer {
            config,
            model,
            vocab,
            corpora,
            halt_after: None,
        })
    }

    /// Stops a stage once it has completed `steps` steps in total, leaving a
    /// resumable partial checkpoint.
    pub fn halt_after(mut self, steps: u64) -> Self {
        self.halt_after = Some(steps);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Hash of the training and model configuration and the vocabulary.
    pub fn fingerprint(&self) -> u64 {
        fingerprint_of(&FingerprintInput {
            train: &self.config,
            model: &self.model,
            vocab: self.vocab.fingerprint(),
        })
    }

    /// Freshly initialised model for this configuration.
    pub fn initial_model(&self) -> Result<FlatNct> {
        let mut rng = stream(self.config.seed, &[INIT_STREAM]);
        FlatNct::new(self.model.clone(), self.vocab.len(), &mut rng)
    }

    /// Every stage of the configured mode in order.
    pub fn run_all(&self, observer: &mut dyn Observer) -> Result<Checkpoint> {
        let mut last: Option<Checkpoint> = None;
        for stage in self.config.stages() {
            let out = self.run_stage(stage, last.as_ref(), observer)?;
            if !out.is_complete() {
                return Ok(out);
            }
            last = Some(out);
        }
        Ok(last.expect("every mode has stages"))
    }

    /// Runs `stage` from `input`: nothing for stage 1, the completed output
    /// of the previous stage, or a partial checkpoint of `stage` itself to
    /// resume.
    pub fn run_stage(
        &self,
        stage: Stage,
        input: Option<&Checkpoint>,
        observer: &mut dyn Observer,
    ) -> Result<Checkpoint> {
        let budget = self.config.stage(stage).steps;
        let (mut params, mut adam, start) = match input {
            Some(c) if c.stage == stage => {
                self.check_compatible(c)?;
                if c.fingerprint != self.fingerprint() {
                    return Err(gate(stage, c, "configuration fingerprint differs; cannot resume"));
                }
                if c.is_complete() {
                    return Ok(c.clone());
                }
                (c.params.clone(), c.adam.clone(), c.step)
            }
            Some(c) => {
                let expected = self.predecessor(stage)?;
                if Some(c.stage) != expected {
                    let want = expected.map_or("none".to_string(), |s| s.tag().to_string());
                    return Err(gate(stage, c, &format!("expected {want}")));
                }
                if !c.is_complete() {
                    return Err(gate(stage, c, "input checkpoint is incomplete"));
                }
                self.check_compatible(c)?;
                (c.params.clone(), c.adam.clone(), 0)
            }
            None => {
                if let Some(prev) = self.predecessor(stage)? {
                    return Err(Error::StageGate {
                        stage: stage.number(),
                        found: "none".into(),
                        reason: format!("needs a completed {} checkpoint", prev.tag()),
                    });
                }
                let model = self.initial_model()?;
                let adam = AdamState::new(model.params(), &self.config.optimizer, self.model.hidden);
                (model.params().clone(), adam, 0)
            }
        };
        let mut model = FlatNct::from_params(self.model.clone(), self.vocab.len(), params.clone())?;
        let interval = (budget / 10).max(1);
        let stop = self.halt_after.map_or(budget, |h| h.min(budget)).max(start);
        for step in start..stop {
            let out = self.step(&model, stage, step, &mut adam, &mut params)?;
            *model.params_mut() = params.clone();
            if step % self.config.log_every == 0 || step + 1 == budget {
                observer.report(&self.report(stage, step, &out))?;
            }
            let done = step + 1;
            if done % interval == 0 && done < stop {
                observer.checkpoint(&self.checkpoint(stage, done, &params, &adam))?;
            }
        }
        let out = self.checkpoint(stage, stop, &params, &adam);
        observer.checkpoint(&out)?;
        Ok(out)
    }

    fn predecessor(&self, stage: Stage) -> Result<Option<Stage>> {
        Ok(match (stage, self.config.mode) {
            (Stage::Sentence, _) => None,
            (Stage::Monolingual, Mode::Mmt) => Some(Stage::Sentence),
            (Stage::Monolingual, Mode::Ft) => {
                return Err(Error::Config("the ft baseline has no stage 2".into()))
            }
            (Stage::Dialogue, Mode::Mmt) => Some(Stage::Monolingual),
            (Stage::Dialogue, Mode::Ft) => Some(Stage::Sentence),
        })
    }

    fn check_compatible(&self, c: &Checkpoint) -> Result<()> {
        if c.meta.vocab_fingerprint != self.vocab.fingerprint() || c.meta.vocab_size != self.vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "checkpoint {} was trained with a different vocabulary",
                c.tag()
            )));
        }
        if c.meta.model != self.model {
            return Err(Error::Config(format!(
                "checkpoint {} has a different model configuration",
                c.tag()
            )));
        }
        Ok(())
    }

    fn checkpoint(&self, stage: Stage, step: u64, params: &crate::params::ParamSet, adam: &AdamState) -> Checkpoint {
        Checkpoint {
            stage,
            step,
            fingerprint: self.fingerprint(),
            meta: CheckpointMeta {
                model: self.model.clone(),
                vocab_size: self.vocab.len(),
                vocab_fingerprint: self.vocab.fingerprint(),
                stage_steps: self.config.stage(stage).steps,
                mode: self.config.mode,
            },
            params: params.clone(),
            adam: adam.clone(),
        }
    }

    fn coefficients(&self, stage: Stage, step: u64) -> (f64, Coefficients) {
        let lam = lambda(step, self.config.stage(stage).steps);
        let w = self.config.effective_weights();
        (lam, Coefficients::for_stage(stage, &w, self.config.stage3_objective, lam))
    }

    fn report(&self, stage: Stage, step: u64, out: &StepOutcome) -> LossReport {
        let (lam, _) = self.coefficients(stage, step);
        LossReport {
            stage: stage.number(),
            step,
            steps: self.config.stage(stage).steps,
            lambda: lam,
            learning_rate: out.learning_rate,
            total: out.total,
            components: out.components,
            weights: self.config.effective_weights(),
            objective: self.config.stage3_objective,
        }
    }

    /// Auxiliary tasks computed at `stage`, with the component they add to.
    fn aux_tasks(&self, stage: Stage) -> Vec<(Task, Slot)> {
        if self.config.mode == Mode::Ft {
            return Vec::new();
        }
        let mono = [
            (Task::UdMonoSource, Slot::UdMono),
            (Task::UdMonoTarget, Slot::UdMono),
            (Task::SdMonoSource, Slot::SdMono),
            (Task::SdMonoTarget, Slot::SdMono),
        ];
        let bilingual = [
            (Task::UdSource, Slot::Ud),
            (Task::UdTarget, Slot::Ud),
            (Task::SdSource, Slot::Sd),
            (Task::SdTarget, Slot::Sd),
        ];
        match (stage, self.config.stage3_objective) {
            (Stage::Sentence, _) => Vec::new(),
            (Stage::Monolingual, _) => mono.to_vec(),
            (Stage::Dialogue, Stage3Objective::Fixed) => bilingual.to_vec(),
            (Stage::Dialogue, Stage3Objective::Transition) => {
                bilingual.iter().chain(&mono).copied().collect()
            }
        }
    }

    fn rng(&self, stage: Stage, step: u64, task: Task, purpose: u64) -> DetRng {
        stream(self.config.seed, &[stage.number() as u64, step, task as u64, purpose])
    }

    /// Objective of `stage` on the batches drawn at `step`, weighted with an
    /// explicit λ. Parameters are left untouched.
    pub fn objective_at(&self, model: &FlatNct, stage: Stage, step: u64, lambda: f64) -> Result<(f64, Components)> {
        let coef = Coefficients::for_stage(stage, &self.config.effective_weights(), self.config.stage3_objective, lambda);
        let mut g = Graph::new();
        let b = Bound::bind(&mut g, model.params());
        let (total, components) = self.objective(&mut g, &b, model, stage, step, &coef)?;
        Ok((g.scalar(total), components))
    }

    fn step(
        &self,
        model: &FlatNct,
        stage: Stage,
        step: u64,
        adam: &mut AdamState,
        params: &mut crate::params::ParamSet,
    ) -> Result<StepOutcome> {
        let (_, coef) = self.coefficients(stage, step);
        let mut g = Graph::new();
        let b = Bound::bind(&mut g, model.params());
        let (total, components) = self.objective(&mut g, &b, model, stage, step, &coef)?;
        let total_value = g.scalar(total);
        g.backward(total)?;
        let grads = b.grads(&g, model.params());
        let learning_rate = adam_step(params, &grads, adam)?;
        Ok(StepOutcome {
            total: total_value,
            components,
            learning_rate,
        })
    }

    fn objective(
        &self,
        g: &mut Graph,
        b: &Bound,
        model: &FlatNct,
        stage: Stage,
        step: u64,
        coef: &Coefficients,
    ) -> Result<(Var, Components)> {
        let cfg = &self.config;
        let sc = cfg.stage(stage);

        let (main_task, main_slot) = match stage {
            Stage::Dialogue => (Task::Dialogue, Slot::Nct),
            _ => (Task::Sentence, Slot::Sent),
        };
        let mut sampling = self.rng(stage, step, main_task, SAMPLING);
        let batch = match stage {
            Stage::Dialogue => {
                self.corpora
                    .sample_turns(sc.batch_tokens, cfg.window, cfg.target_context, &self.model, &mut sampling)?
            }
            _ => self.corpora.sample_sentences(sc.batch_tokens, &self.model, &mut sampling)?,
        };
        let mut dropout = self.rng(stage, step, main_task, DROPOUT);
        let main = translation_loss(model, g, b, &batch, cfg.label_smoothing, &mut Pass::train(&mut dropout))?;
        let mut terms: Vec<(Slot, Var)> = vec![(main_slot, main)];

        for (task, slot) in self.aux_tasks(stage) {
            let mut sampling = self.rng(stage, step, task, SAMPLING);
            let samples = self
                .corpora
                .sample_aux(task, sc.aux_batch, cfg.window, cfg.ud_negatives, &mut sampling)?;
            let head = match slot {
                Slot::Ud | Slot::UdMono => Head::Utterance,
                _ => Head::Speaker,
            };
            let mut dropout = self.rng(stage, step, task, DROPOUT);
            let l = aux_loss(model, g, b, head, &samples, &mut Pass::train(&mut dropout))?;
            terms.push((slot, l));
        }

        let mut components = Components::default();
        let mut total: Option<Var> = None;
        for (slot, var) in terms {
            let value = g.scalar(var);
            let entry = slot.component(&mut components);
            *entry = Some(entry.unwrap_or(0.0) + value);
            let weighted = g.scale(var, slot.coefficient(coef));
            total = Some(match total {
                None => weighted,
                Some(t) => g.add(t, weighted),
            });
        }
        Ok((total.expect("the translation term is always present"), components))
    }
}

fn gate(stage: Stage, c: &Checkpoint, reason: &str) -> Error {
    Error::StageGate {
        stage: stage.number(),
        found: c.tag().into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Sent,
    Nct,
    Ud,
    Sd,
    UdMono,
    SdMono,
}

impl Slot {
    fn component(self, c: &mut Components) -> &mut Option<f64> {
        match self {
            Slot::Sent => &mut c.sent,
            Slot::Nct => &mut c.nct,
            Slot::Ud => &mut c.ud,
            Slot::Sd => &mut c.sd,
            Slot::UdMono => &mut c.ud_mono,
            Slot::SdMono => &mut c.sd_mono,
        }
    }

    fn coefficient(self, k: &Coefficients) -> f64 {
        match self {
            Slot::Sent => k.sent,
            Slot::Nct => k.nct,
            Slot::Ud => k.ud,
            Slot::Sd => k.sd,
            Slot::UdMono => k.ud_mono,
            Slot::SdMono => k.sd_mono,
        }
    }
}

#[cfg(test)]
mod tests;
