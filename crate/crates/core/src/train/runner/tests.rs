use super::*;
use crate::data::{Dialogue, Lang};
use crate::train::StageConfig;

struct Fixture {
    vocab: Vocabulary,
    corpora: Corpora,
}

fn fixture() -> Fixture {
    let bct = vec![
        Dialogue::bilingual("b0", &["a b", "c d", "e f", "a c"], &["x y", "z w", "v u", "x z"]),
        Dialogue::bilingual("b1", &["d e", "f a", "b c"], &["w v", "u x", "y z"]),
    ];
    let sent = vec![Dialogue::bilingual("s0", &["a b c", "d e f"], &["x y z", "w v u"])];
    let ms = vec![
        Dialogue::monolingual("m0", Lang::Source, &["a", "b c", "d", "e f"]),
        Dialogue::monolingual("m1", Lang::Source, &["f", "e d", "c"]),
    ];
    let mt = vec![
        Dialogue::monolingual("n0", Lang::Target, &["x", "y z", "w"]),
        Dialogue::monolingual("n1", Lang::Target, &["u v", "x", "z y", "w"]),
    ];
    let texts: Vec<String> = bct
        .iter()
        .chain(&sent)
        .chain(&ms)
        .chain(&mt)
        .flat_map(|d| d.turns.iter().chain(d.aligned_turns.iter().flatten()))
        .map(|u| u.text.clone())
        .collect();
    let vocab = Vocabulary::train(texts.iter().map(String::as_str), 4);
    let corpora = Corpora::encode(&vocab, &sent, &bct, &ms, &mt).unwrap();
    Fixture { vocab, corpora }
}

fn model_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 8,
        ff: 16,
        heads: 2,
        ..ModelConfig::default()
    }
}

fn config(mode: Mode) -> TrainConfig {
    let small = |steps| StageConfig {
        steps,
        batch_tokens: 8,
        aux_batch: 2,
    };
    TrainConfig {
        mode,
        stage1: small(4),
        stage2: small(3),
        stage3: small(5),
        ..TrainConfig::tiny()
    }
}

fn trainer<'a>(f: &'a Fixture, cfg: TrainConfig) -> Trainer<'a> {
    Trainer::new(cfg, model_config(), &f.vocab, &f.corpora).unwrap()
}

#[test]
fn stage_gates() {
    let f = fixture();
    let t = trainer(&f, config(Mode::Mmt));
    let mut obs = Collect::default();
    assert!(matches!(
        t.run_stage(Stage::Monolingual, None, &mut obs),
        Err(Error::StageGate { stage: 2, .. })
    ));
    let m1 = t.run_stage(Stage::Sentence, None, &mut obs).unwrap();
    assert_eq!(m1.tag(), "M1");
    assert!(matches!(
        t.run_stage(Stage::Dialogue, Some(&m1), &mut obs),
        Err(Error::StageGate { stage: 3, .. })
    ));
    let ft = trainer(&f, config(Mode::Ft));
    assert!(ft.run_stage(Stage::Monolingual, Some(&m1), &mut obs).is_err());
    let m3 = ft.run_stage(Stage::Dialogue, Some(&m1), &mut obs).unwrap();
    assert_eq!(m3.tag(), "M3");
    assert!(m3.is_complete());
}

#[test]
fn partial_input_is_refused_by_the_next_stage() {
    let f = fixture();
    let t = trainer(&f, config(Mode::Mmt)).halt_after(2);
    let partial = t.run_stage(Stage::Sentence, None, &mut Collect::default()).unwrap();
    assert_eq!(partial.step, 2);
    assert!(!partial.is_complete());
    let full = trainer(&f, config(Mode::Mmt));
    assert!(matches!(
        full.run_stage(Stage::Monolingual, Some(&partial), &mut Collect::default()),
        Err(Error::StageGate { .. })
    ));
}

#[test]
fn reports_recompute_and_lambda_spans_the_stage() {
    let f = fixture();
    let t = trainer(&f, config(Mode::Mmt));
    let mut obs = Collect::default();
    t.run_all(&mut obs).unwrap();
    assert_eq!(obs.reports.len(), 4 + 3 + 5);
    for r in &obs.reports {
        assert!((r.total - r.recomputed_total()).abs() < 1e-9, "{r:?}");
        assert!(r.total.is_finite());
    }
    let s3: Vec<_> = obs.reports.iter().filter(|r| r.stage == 3).collect();
    assert_eq!(s3[0].lambda, 0.0);
    assert_eq!(s3[4].lambda, 0.8);
    assert!(s3.iter().all(|r| r.components.ud.is_some() && r.components.sd_mono.is_some()));
    let s2: Vec<_> = obs.reports.iter().filter(|r| r.stage == 2).collect();
    assert!(s2.iter().all(|r| r.components.ud_mono.is_some() && r.components.nct.is_none()));
}

#[test]
fn baseline_computes_no_auxiliary_terms() {
    let f = fixture();
    let t = trainer(&f, config(Mode::Ft));
    let mut obs = Collect::default();
    t.run_all(&mut obs).unwrap();
    assert_eq!(obs.reports.len(), 4 + 5);
    for r in obs.reports.iter().filter(|r| r.stage == 3) {
        assert!(r.components.ud.is_none() && r.components.sd_mono.is_none());
        assert_eq!(r.total, r.components.nct.unwrap());
    }
}

#[test]
fn runs_are_bit_identical() {
    let f = fixture();
    let a = trainer(&f, config(Mode::Mmt)).run_all(&mut Collect::default()).unwrap();
    let b = trainer(&f, config(Mode::Mmt)).run_all(&mut Collect::default()).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let mut other = config(Mode::Mmt);
    other.seed = 2;
    let c = trainer(&f, other).run_all(&mut Collect::default()).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn resume_matches_the_uninterrupted_run() {
    let f = fixture();
    let cfg = config(Mode::Mmt);
    let full = trainer(&f, cfg.clone());
    let m1 = full.run_stage(Stage::Sentence, None, &mut Collect::default()).unwrap();
    let m2 = full.run_stage(Stage::Monolingual, Some(&m1), &mut Collect::default()).unwrap();
    let mut straight = Collect::default();
    let m3 = full.run_stage(Stage::Dialogue, Some(&m2), &mut straight).unwrap();

    let halted = trainer(&f, cfg.clone()).halt_after(2);
    let mut first = Collect::default();
    let partial = halted.run_stage(Stage::Dialogue, Some(&m2), &mut first).unwrap();
    let reloaded = Checkpoint::from_bytes(&partial.to_bytes()).unwrap();
    let mut second = Collect::default();
    let resumed = full.run_stage(Stage::Dialogue, Some(&reloaded), &mut second).unwrap();

    assert_eq!(resumed.to_bytes(), m3.to_bytes());
    let joined: Vec<_> = first.reports.into_iter().chain(second.reports).collect();
    assert_eq!(joined, straight.reports);
}

#[test]
fn resume_refuses_a_different_configuration() {
    let f = fixture();
    let partial = trainer(&f, config(Mode::Mmt))
        .halt_after(1)
        .run_stage(Stage::Sentence, None, &mut Collect::default())
        .unwrap();
    let mut other = config(Mode::Mmt);
    other.label_smoothing = 0.2;
    assert!(matches!(
        trainer(&f, other).run_stage(Stage::Sentence, Some(&partial), &mut Collect::default()),
        Err(Error::StageGate { .. })
    ));
}

#[test]
fn zero_weight_mmt_reproduces_the_baseline() {
    let f = fixture();
    let mut mmt = config(Mode::Mmt);
    mmt.stage2.steps = 0;
    mmt.weights = crate::train::Weights {
        alpha1: 0.0,
        beta1: 0.0,
        alpha2: 0.0,
        beta2: 0.0,
    };
    let mut a = Collect::default();
    let mut b = Collect::default();
    let x = trainer(&f, mmt).run_all(&mut a).unwrap();
    let y = trainer(&f, config(Mode::Ft)).run_all(&mut b).unwrap();
    assert_eq!(x.params, y.params);
    assert_eq!(x.adam, y.adam);
    let nct = |c: &Collect| -> Vec<_> { c.reports.iter().filter(|r| r.stage == 3).map(|r| r.components.nct).collect() };
    assert_eq!(nct(&a), nct(&b));
}

#[test]
fn checkpoints_arrive_at_intervals() {
    let f = fixture();
    let mut cfg = config(Mode::Ft);
    cfg.stage1.steps = 20;
    let mut obs = Collect::keeping_checkpoints();
    trainer(&f, cfg).run_stage(Stage::Sentence, None, &mut obs).unwrap();
    let steps: Vec<u64> = obs.checkpoints.iter().map(|c| c.step).collect();
    assert_eq!(steps, vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20]);
}
