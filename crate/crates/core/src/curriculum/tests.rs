use super::*;
use crate::lm::{gradients, trainable_mask};

fn quick_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.corpus.videos = 4;
    for p in &mut cfg.plans {
        p.steps = 3;
        p.batch_size = 2;
    }
    cfg
}

#[test]
fn stage_one_touches_projectors_only() {
    let cfg = quick_config();
    let corpus = Corpus::build(&cfg.corpus).unwrap();
    let mut model = cfg.init_model(&corpus).unwrap();
    let before = model.clone();
    run_stage(&mut model, &corpus, &cfg.plans[0]).unwrap();
    assert_eq!(model.embedding, before.embedding);
    assert_eq!(model.head, before.head);
    assert_eq!(model.blocks, before.blocks);
    assert_ne!(model.spatial_proj, before.spatial_proj);
}

#[test]
fn vocabulary_and_adapters_appear_at_stage_boundaries() {
    let cfg = quick_config();
    let mut sizes = Vec::new();
    let (model, corpus, log) = train(&cfg, &[1, 2, 3], |m, l| {
        sizes.push((l.stage, m.vocab_size(), m.adapters.is_some()));
        Ok(())
    })
    .unwrap();
    let base = corpus.tokenizer.size();
    assert_eq!(sizes, vec![(1, base, false), (2, corpus.vocab.total_size(), false), (3, corpus.vocab.total_size(), true)]);
    assert!(!log.alignment_skipped);
    assert!(log.stages[2].adapter_parameters > 0);
    assert_eq!(model.stage, 3);
}

#[test]
fn skipping_alignment_is_flagged() {
    let (_, _, log) = train(&quick_config(), &[1, 3], |_, _| Ok(())).unwrap();
    assert!(log.alignment_skipped);
    assert_eq!(log.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), vec![1, 3]);
}

#[test]
fn same_seed_same_model() {
    let cfg = quick_config();
    let (a, _, la) = train(&cfg, &[1, 2], |_, _| Ok(())).unwrap();
    let (b, _, lb) = train(&cfg, &[1, 2], |_, _| Ok(())).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

#[test]
fn plan_validation() {
    let cfg = quick_config();
    assert!(matches!(train(&cfg, &[2, 1], |_, _| Ok(())), Err(Error::Config(_))));
    assert!(matches!(cfg.plans_for(&[4]), Err(Error::UnknownStage(4))));
    let mut bad = cfg.plans[0].clone();
    bad.tasks.insert(TaskKind::SentenceGrounding, 1.0);
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let mut zero = cfg.plans[1].clone();
    zero.tasks.values_mut().for_each(|w| *w = 0.0);
    assert!(matches!(zero.validate(), Err(Error::Config(_))));
}

#[test]
fn huge_learning_rate_diverges() {
    let mut cfg = quick_config();
    cfg.plans[1].learning_rates.head = 1e200;
    cfg.plans[1].steps = 20;
    let err = train(&cfg, &[1, 2], |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::Divergence { stage: 2, .. }), "{err:?}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn small_steps_on_one_example_do_not_increase_loss() {
    let cfg = quick_config();
    let corpus = Corpus::build(&cfg.corpus).unwrap();
    let mut model = cfg.init_model(&corpus).unwrap();
    model.extend_vocab(corpus.vocab.clone(), cfg.embed_init, 1).unwrap();
    let sample = corpus.samples_of(TaskKind::SentenceGrounding).next().unwrap();
    let ex = corpus.example(sample, model.vocab.as_ref()).unwrap();
    let mask = trainable_mask(2, EmbedUpdate::TemporalOnly).unwrap();
    let mut prev = f64::INFINITY;
    for _ in 0..15 {
        let (loss, g) = gradients(&model, &ex, &mask, Reduction::Sum).unwrap();
        assert!(loss <= prev + 1e-12, "{loss} > {prev}");
        prev = loss;
        let mut grads = Vec::new();
        g.visit(&mut |_, _, v| grads.push(v.to_vec()));
        let mut i = 0;
        model.visit_mut(&mut |_, _, v| {
            for (p, d) in v.iter_mut().zip(&grads[i]) {
                *p -= 1e-3 * d;
            }
            i += 1;
        });
    }
}
