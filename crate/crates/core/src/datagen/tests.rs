use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;

fn demo() -> SegmentAnnotation {
    let seg = |s, e, d: &str| Segment { start: s, end: e, description: d.into() };
    SegmentAnnotation {
        video_id: "demo".into(),
        duration: 82.73,
        segments: vec![
            seg(0.83, 19.86, "A young woman is seen standing in a room and leads into her dancing."),
            seg(17.37, 60.81, "The girl dances around the room while the camera captures her movements."),
            seg(56.26, 79.42, "She continues dancing around the room and ends by laying on the floor."),
        ],
    }
}

/// Fixed vectors keyed by text.
struct TableEmbedder(HashMap<String, Vec<f64>>);

impl EmbeddingClient for TableEmbedder {
    fn model(&self) -> &str {
        "table"
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.0.get(text).cloned().ok_or_else(|| Error::Client(format!("no vector for {text:?}")))
    }
}

/// Unit vector at cosine `c` to (1, 0).
fn at(c: f64) -> Vec<f64> {
    vec![c, (1.0 - c * c).sqrt()]
}

fn cand(answer: &str) -> Candidate {
    Candidate { question: format!("q {answer}"), answer: answer.into(), similarity: 0.0 }
}

#[test]
fn prompt_shape() {
    let msgs = build_prompt(&demo()).unwrap();
    assert_eq!(msgs.len(), 4);
    assert_eq!(msgs[0].role, Role::System);
    assert!(msgs[0].content.starts_with("You are a good question generator."));
    assert!(msgs[0].content.contains("(0) Avoid choosing the segment spanning across the whole video."));
    assert!(msgs[0].content.contains("consistent with the content of the give description"));
    assert!(msgs[0].content.contains("(4) Your answer should be a phrase no more than 7 words."));
    assert_eq!(user_message(&demo()), DEMO_USER);
    assert!(msgs[3].content.starts_with("video duration: 82.73 seconds"));
    let one = SegmentAnnotation { segments: demo().segments[..1].to_vec(), ..demo() };
    assert_eq!(build_prompt(&one).unwrap()[3].content.lines().count(), 2);
    let empty = SegmentAnnotation { segments: vec![], ..demo() };
    assert!(matches!(build_prompt(&empty), Err(Error::EmptyInput(_))));
}

#[test]
fn parse_demo_response() {
    let g = parse_generation(DEMO_RESPONSE).unwrap();
    assert_eq!(g.segment, 3);
    assert_eq!((g.start, g.end), (56.26, 79.42));
    assert_eq!(g.question, "What did the girl do after she ended dancing?");
    assert_eq!(g.answer, "lay on the floor");
    let mut lines: Vec<&str> = DEMO_RESPONSE.lines().collect();
    lines.reverse();
    let shuffled = format!("  {}\n\n", lines.join("\n   "));
    assert_eq!(parse_generation(&shuffled).unwrap(), g);
    let no_answer: String = DEMO_RESPONSE.lines().filter(|l| !l.starts_with("answer")).collect::<Vec<_>>().join("\n");
    assert!(matches!(parse_generation(&no_answer), Err(Error::GenerationFormat(_))));
    assert!(matches!(parse_generation("chosen segment: third\nsegment timestamps: [1, 2]\nquestion: q\nanswer: a"), Err(Error::GenerationFormat(_))));
}

#[test]
fn retrieval_ranks_by_question_similarity() {
    let e = HashEmbedder::default();
    let pool: Vec<PriorQa> = ["what does the dog do", "why is the baby crying", "where is the chef"]
        .iter()
        .enumerate()
        .map(|(i, q)| PriorQa::new(&format!("v{i}"), q, &format!("a{i}"), &e).unwrap())
        .collect();
    let got = retrieve_candidates("why is the baby crying", &pool, &e, 50).unwrap();
    assert_eq!(got.len(), 3);
    assert_eq!(got[0].answer, "a1");
    assert!((got[0].similarity - 1.0).abs() < 1e-12);
    assert!(got.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    assert_eq!(retrieve_candidates("why is the baby crying", &pool, &e, 2).unwrap().len(), 2);
    assert_eq!(got, retrieve_candidates("why is the baby crying", &pool, &e, 50).unwrap());
}

#[test]
fn embedder_is_unit_norm() {
    let e = HashEmbedder::default();
    for t in ["", "a", "a man opens the door", "Lay on the floor."] {
        let v = e.embed(t).unwrap();
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn distractor_band_is_inclusive() {
    let mut table = HashMap::from([("ans".to_string(), at(1.0))]);
    for (t, c) in [("lo", 0.2), ("hi", 0.9), ("mid", 0.5), ("mid2", 0.6), ("near", 0.95), ("far", 0.1)] {
        table.insert(t.to_string(), at(c));
    }
    let e = TableEmbedder(table);
    let cands: Vec<Candidate> = ["lo", "hi", "mid", "mid2", "near", "far", "ans", "Ans."].map(cand).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut got: Vec<String> = sample_distractors("ans", &cands, &e, Band::default(), 4, &mut rng).unwrap().into_iter().map(|d| d.text).collect();
    got.sort();
    assert_eq!(got, ["hi", "lo", "mid", "mid2"]);
    let too_close: Vec<Candidate> = ["near"; 5].map(cand).to_vec();
    assert!(matches!(
        sample_distractors("ans", &too_close, &e, Band::default(), 4, &mut rng),
        Err(Error::InsufficientDistractors { found: 0, needed: 4 })
    ));
}

#[test]
fn distractor_sampling_is_seeded() {
    let e = HashEmbedder::default();
    let anns = synthetic_annotations(40, 3);
    let cands: Vec<Candidate> = anns.iter().flat_map(|a| a.segments.iter().map(|s| cand(s.description.trim_end_matches('.')))).collect();
    let draw = |seed| sample_distractors("a man opens the door", &cands, &e, Band::default(), 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(draw(5), draw(5));
    assert!(draw(5).iter().all(|d| Band::default().contains(d.similarity)));
}

fn qa() -> GeneratedQa {
    GeneratedQa {
        video_id: "demo".into(),
        duration: 82.73,
        segment: 2,
        start: 56.26,
        end: 79.42,
        question: "What did the girl do after she ended dancing?".into(),
        answer: "lay on the floor".into(),
        distractors: ["jump", "sing", "run", "sit"].iter().map(|t| Distractor { text: t.to_string(), similarity: 0.5 }).collect(),
        provenance: QaProvenance { chat_model: "m".into(), embedding_model: "e".into(), seed: 0 },
    }
}

#[test]
fn assembled_record() {
    for seed in 0..10 {
        let r = assemble_record(&qa(), 300, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(r.options.len(), 5);
        assert_eq!(r.options[r.correct], "lay on the floor");
        assert_eq!(r.rounds[0].assistant, format!("Answer: {}.", crate::curriculum::OPTION_LETTERS[r.correct]));
        assert_eq!(r.rounds[1].user, "Provide the timestamps that correspond to your answer.");
        let toks: Vec<usize> = r.rounds[1].assistant.split(['<', '>']).filter_map(|s| s.parse().ok()).collect();
        assert_eq!(toks.len(), 2);
        let half = 82.73 / 600.0 + 1e-9;
        assert!((crate::codec::token_to_timestamp(toks[0], 300, 82.73).unwrap() - 56.26).abs() <= half);
        assert!((crate::codec::token_to_timestamp(toks[1], 300, 82.73).unwrap() - 79.42).abs() <= half);
    }
}

fn stub_cfg() -> DatagenConfig {
    DatagenConfig { backoff_ms: 0, ..DatagenConfig::default() }
}

#[test]
fn stub_pipeline_is_deterministic() {
    let anns = synthetic_annotations(30, 11);
    let run = || run_pipeline(&anns, &StubChat::default(), &HashEmbedder::default(), &stub_cfg()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.stats.emitted > 20, "{:?}", a.stats);
    assert_eq!(a.stats.emitted + a.stats.skipped.values().sum::<usize>(), 30);
    let e = HashEmbedder::default();
    for r in &a.records {
        let ans = e.embed(&r.options[r.correct]).unwrap();
        for (k, o) in r.options.iter().enumerate().filter(|(k, _)| *k != r.correct) {
            let s = cosine(&ans, &e.embed(o).unwrap());
            assert!(Band::default().contains(s), "{o:?} at {s}");
            assert!((s - r.option_similarity[k]).abs() < 1e-12);
            assert_ne!(normalize_answer(o), normalize_answer(&r.options[r.correct]));
        }
        assert!(0.0 <= r.gold.start && r.gold.end <= r.duration);
    }
}

#[test]
fn malformed_generations_are_skipped() {
    let anns = synthetic_annotations(10, 1);
    let out = run_pipeline(&anns, &StubChat { mode: StubMode::Malformed }, &HashEmbedder::default(), &stub_cfg()).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.stats.skipped.get("generation_format"), Some(&10));
    assert_eq!(out.stats.skips.len(), 10);
}

struct Flaky {
    failures: usize,
    calls: AtomicUsize,
}

impl ChatClient for Flaky {
    fn model(&self) -> &str {
        "flaky"
    }

    fn chat(&self, m: &[ChatMessage]) -> Result<String> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.failures {
            return Err(Error::Client("timeout".into()));
        }
        StubChat::default().chat(m)
    }
}

#[test]
fn client_failures_retry_then_skip() {
    let anns = synthetic_annotations(1, 1);
    let cfg = DatagenConfig { retries: 2, max_in_flight: 1, ..stub_cfg() };
    let ok = Flaky { failures: 2, calls: AtomicUsize::new(0) };
    let out = run_pipeline(&anns, &ok, &HashEmbedder::default(), &cfg).unwrap();
    assert_eq!(out.stats.generated, 1);
    let bad = Flaky { failures: 3, calls: AtomicUsize::new(0) };
    let out = run_pipeline(&anns, &bad, &HashEmbedder::default(), &cfg).unwrap();
    assert_eq!(out.stats.skipped.get("client"), Some(&1));
    assert_eq!(bad.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn interpolation() {
    std::env::set_var("GVTG_TEST_HOST", "example.org");
    assert_eq!(interpolate("https://${GVTG_TEST_HOST}/v1").unwrap(), "https://example.org/v1");
    assert!(matches!(interpolate("${GVTG_SURELY_UNSET_VAR}"), Err(Error::Config(_))));
    assert!(matches!(interpolate("${oops"), Err(Error::Config(_))));
}

#[test]
fn invalid_annotations_are_skipped() {
    let mut anns = synthetic_annotations(3, 2);
    anns[1].segments[0].end = anns[1].duration + 1.0;
    let out = run_pipeline(&anns, &StubChat::default(), &HashEmbedder::default(), &stub_cfg()).unwrap();
    assert_eq!(out.stats.skipped.get("invalid_annotation"), Some(&1));
}
