use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Captioning,
    SentenceGrounding,
    DenseCaptioning,
    TemporalReferring,
    GroundedQa,
    VideoQa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Captioning,
        TaskKind::SentenceGrounding,
        TaskKind::DenseCaptioning,
        TaskKind::TemporalReferring,
        TaskKind::GroundedQa,
        TaskKind::VideoQa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Captioning => "captioning",
            TaskKind::SentenceGrounding => "sentence_grounding",
            TaskKind::DenseCaptioning => "dense_captioning",
            TaskKind::TemporalReferring => "temporal_referring",
            TaskKind::GroundedQa => "grounded_qa",
            TaskKind::VideoQa => "video_qa",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

pub const CAPTIONING: &[&str] = &[
    "Describe the following video concisely.",
    "Provide a brief description of the given video clip.",
    "Offer a succinct explanation of the footage presented.",
    "Summarize the visual content of the following video.",
    "Give a short and clear explanation of the subsequent video clip.",
    "Share a concise interpretation of the video provided.",
    "Present a compact description of the clip's key features.",
    "Relay a brief, clear account of the video shown.",
    "Render a clear and concise summary of the video below.",
    "Write a terse but informative summary of the following video clip.",
];

pub const SENTENCE_GROUNDING: &[&str] = &[
    "When does <query> happen in the video?",
    "At what time does the occurrence <query> take place in the video?",
    "During which part of the video does <query> occur?",
    "When in the video does the <query> incident occur?",
    "At which moment does <query> take place in the video?",
    "During which phase of the video does <query> happen?",
    "When does the <query> event occur in the video?",
    "At what time does <query> occur in the video sequence?",
    "When does the <query> situation take place in the video?",
    "At which time interval in the video can we see <query> occurring?",
];

pub const DENSE_CAPTIONING: &[&str] = &[
    "Localize a series of activity events in the video, output the start and end timestamp for each event, and describe each event with sentences.",
    "Detect and report the start and end timestamps of activity events in the video, along with descriptions.",
    "Pinpoint the time intervals of activity events in the video, and provide descriptions for each event.",
    "Can you compile a list of the activities and their timestamps featured in the video?",
    "I need you to scrutinize the video and catalog every event it contains, along with the timestamps.",
];

pub const TEMPORAL_REFERRING: &[&str] = &[
    "What is happening from <start> to <end>?",
    "What is taking place between <start> and <end>?",
    "What events unfold between <start> and <end>?",
    "What is happening during the period from <start> to <end>?",
    "What occurs between <start> and <end>?",
    "What is going on from <start> to <end>?",
    "How do things progress from <start> to <end>?",
    "Can you describe what happens from <start> to <end>?",
    "Describe the events occurring between <start> and <end>.",
    "Narrate the actions that unfold from <start> to <end>.",
];

/// Second-round request of the grounded QA conversation.
pub const TIMESTAMP_REQUEST: &str = "Provide the timestamps that correspond to your answer.";

/// Template list of a task. Question-answering tasks use the question itself
/// as the instruction and have none.
pub fn templates(task: TaskKind) -> Result<&'static [&'static str]> {
    match task {
        TaskKind::Captioning => Ok(CAPTIONING),
        TaskKind::SentenceGrounding => Ok(SENTENCE_GROUNDING),
        TaskKind::DenseCaptioning => Ok(DENSE_CAPTIONING),
        TaskKind::TemporalReferring => Ok(TEMPORAL_REFERRING),
        TaskKind::GroundedQa | TaskKind::VideoQa => Err(Error::UnknownTask(format!("{} has no instruction templates", task.name()))),
    }
}

/// Slot values for `<query>`, `<start>` and `<end>`.
#[derive(Debug, Clone, Default)]
pub struct Slots<'a> {
    pub query: Option<&'a str>,
    pub start: Option<&'a str>,
    pub end: Option<&'a str>,
}

/// Pick one template uniformly and fill its slots.
pub fn instruction_template(task: TaskKind, slots: &Slots<'_>, rng: &mut impl Rng) -> Result<String> {
    let list = templates(task)?;
    let template = list[rng.random_range(0..list.len())];
    let mut out = template.to_string();
    for (slot, value) in [("<query>", slots.query), ("<start>", slots.start), ("<end>", slots.end)] {
        if out.contains(slot) {
            let value = value.ok_or_else(|| Error::InvalidInput(format!("{} template needs a {slot} value", task.name())))?;
            out = out.replace(slot, value);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn template_counts() {
        assert_eq!(CAPTIONING.len(), 10);
        assert_eq!(SENTENCE_GROUNDING.len(), 10);
        assert_eq!(DENSE_CAPTIONING.len(), 5);
        assert_eq!(TEMPORAL_REFERRING.len(), 10);
        assert!(DENSE_CAPTIONING.iter().any(|t| t.contains("Detect and report the start and end timestamps")));
    }

    #[test]
    fn slots_are_filled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = instruction_template(
                TaskKind::TemporalReferring,
                &Slots { start: Some("<4>"), end: Some("<9>"), ..Default::default() },
                &mut rng,
            )
            .unwrap();
            assert!(s.contains("<4>") && s.contains("<9>") && !s.contains("<start>") && !s.contains("<end>"), "{s}");
            let q = instruction_template(TaskKind::SentenceGrounding, &Slots { query: Some("a dog barks"), ..Default::default() }, &mut rng)
                .unwrap();
            assert!(q.contains("a dog barks") && !q.contains("<query>"));
        }
    }

    #[test]
    fn seeded_choice_is_reproducible() {
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| instruction_template(TaskKind::Captioning, &Slots::default(), &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(pick(9), pick(9));
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(instruction_template(TaskKind::VideoQa, &Slots::default(), &mut rng), Err(Error::UnknownTask(_))));
        assert!(matches!("nope".parse::<TaskKind>(), Err(Error::UnknownTask(_))));
        assert!(matches!(
            instruction_template(TaskKind::SentenceGrounding, &Slots::default(), &mut rng),
            Err(Error::InvalidInput(_))
        ));
        assert_eq!("dense_captioning".parse::<TaskKind>().unwrap(), TaskKind::DenseCaptioning);
    }
}
