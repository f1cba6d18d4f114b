//! Prompt rendering and training-data emission.
//!
//! Three output formats are supported for the same ranking task:
//!
//! * [`PromptFormat::DirectList`]: the model answers with one
//!   `[a] > [b] > ...` line.
//! * [`PromptFormat::CoTExplicit`]: the model walks through the selection
//!   stepwise (`Step k: [..k chosen ids..]`) and closes with a
//!   `Final Answer: [...]` line. Each step extends the previous one by the
//!   single passage picked from the remaining pool.
//! * [`PromptFormat::CoTImplicitFinal`]: the model performs the stepwise
//!   selection silently and answers with the `Final Answer:` line only.
//!
//! [`emit_sft_dataset`] turns teacher-labeled candidate lists into a
//! supervised split and a held-out prompt set for preference-pair
//! construction, with a seeded shuffle so emission is a pure function of
//! (inputs, seed).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ioutil;
use crate::types::{CandidateList, CoreError, Ranking};

/// Largest candidate list a single prompt may carry by default. Longer lists
/// go through the sliding-window orchestrator instead.
pub const DEFAULT_MAX_PASSAGES: usize = 20;

/// How the model is asked to express its ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptFormat {
    #[serde(rename = "direct_list")]
    DirectList,
    #[serde(rename = "cot_explicit")]
    CoTExplicit,
    #[serde(rename = "cot_implicit_final")]
    CoTImplicitFinal,
}

impl PromptFormat {
    pub const ALL: [PromptFormat; 3] = [
        PromptFormat::DirectList,
        PromptFormat::CoTExplicit,
        PromptFormat::CoTImplicitFinal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptFormat::DirectList => "direct_list",
            PromptFormat::CoTExplicit => "cot_explicit",
            PromptFormat::CoTImplicitFinal => "cot_implicit_final",
        }
    }
}

impl fmt::Display for PromptFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "direct_list" => Ok(PromptFormat::DirectList),
            "cot_explicit" => Ok(PromptFormat::CoTExplicit),
            "cot_implicit_final" => Ok(PromptFormat::CoTImplicitFinal),
            other => Err(format!(
                "unknown format {other:?}; expected direct_list, cot_explicit, or cot_implicit_final"
            )),
        }
    }
}

/// A prompt ready to send, with the passage count it was built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub num_passages: usize,
    pub format: PromptFormat,
}

/// Errors raised while building prompts or emitting datasets.
#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{n} passages exceed the prompt cap of {max}")]
    TooManyPassages { n: usize, max: usize },
    #[error("cannot build a prompt over an empty candidate list")]
    EmptyCandidateList,
    #[error("invalid format mix: {0}")]
    BadMix(String),
    #[error("split fraction {0} outside [0, 1]")]
    BadSplit(f64),
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn header_line(num: usize, query: &str) -> String {
    format!(
        "I will provide you with {num} passages, each indicated by a numerical identifier []. \
         Rank the passages based on their relevance to the search query: {query}."
    )
}

fn stepwise_task_line(num: usize) -> String {
    format!(
        "Rank the {num} passages by selecting the most relevant passage at each step from the \
         remaining passages. After choosing the most relevant passage, remove it from the pool \
         and continue ranking until all passages are ordered."
    )
}

const INSTRUCTION_FULL_LIST: &str =
    "Start with the most relevant passage and select it from the full list.";
const INSTRUCTION_REMAINING: &str =
    "For each following step, pick the most relevant passage from the remaining passages only.";
const INSTRUCTION_LIST_STEPS: &str = "List the selected passages by their identifiers at each \
                                      step, one after the other, until all passages are ranked.";
const INSTRUCTION_SILENT_STEPS: &str = "Carry out the steps silently and do not write them out.";
const CLOSING_EXPLICIT: &str = "Only respond with each step and the final answer, ensuring each \
                                passage is included once and ranked in descending relevance.";
const CLOSING_IMPLICIT: &str = "Only respond with the final answer, ensuring each passage is \
                                included once and ranked in descending relevance.";

/// Renders the ranking prompt for `candidates` with the default passage cap.
pub fn build_prompt(
    candidates: &CandidateList,
    format: PromptFormat,
) -> Result<RenderedPrompt, PromptError> {
    build_prompt_capped(candidates, format, DEFAULT_MAX_PASSAGES)
}

/// Renders the ranking prompt for `candidates`, rejecting lists longer than
/// `max_passages`. Identifiers are 1-based positions within this list.
pub fn build_prompt_capped(
    candidates: &CandidateList,
    format: PromptFormat,
    max_passages: usize,
) -> Result<RenderedPrompt, PromptError> {
    let n = candidates.len();
    if n == 0 {
        return Err(PromptError::EmptyCandidateList);
    }
    if n > max_passages {
        return Err(PromptError::TooManyPassages {
            n,
            max: max_passages,
        });
    }
    let query = candidates.query().text();
    let mut lines: Vec<String> = Vec::new();
    lines.push(header_line(n, query));
    for (i, passage) in candidates.passages().iter().enumerate() {
        lines.push(format!("[{}] {}", i + 1, passage.text()));
    }
    lines.push(format!("Search Query: {query}."));
    match format {
        PromptFormat::DirectList => {
            lines.push(format!(
                "Rank the {n} passages above based on their relevance to the search query. The \
                 passages should be listed in descending order using identifiers. The most \
                 relevant passages should be listed first. The output format should be [] > [], \
                 e.g., [4] > [2] > [3]. Only respond with the ranking results, do not say any \
                 word or explain."
            ));
        }
        PromptFormat::CoTExplicit => {
            lines.push(stepwise_task_line(n));
            lines.push("Instructions:".to_string());
            lines.push(INSTRUCTION_FULL_LIST.to_string());
            lines.push(INSTRUCTION_REMAINING.to_string());
            lines.push(INSTRUCTION_LIST_STEPS.to_string());
            lines.push("Example Output:".to_string());
            lines.push("Step 1: [4]".to_string());
            lines.push("Step 2: [4, 2]".to_string());
            lines.push("Step 3: [4, 2, 3]".to_string());
            lines.push("...".to_string());
            lines.push(format!("step {n}: [4,2,3,15,...,14]"));
            lines.push("Final Answer: [4, 2, 3,..., 14]".to_string());
            lines.push(CLOSING_EXPLICIT.to_string());
        }
        PromptFormat::CoTImplicitFinal => {
            lines.push(stepwise_task_line(n));
            lines.push("Instructions:".to_string());
            lines.push(INSTRUCTION_FULL_LIST.to_string());
            lines.push(INSTRUCTION_REMAINING.to_string());
            lines.push(INSTRUCTION_SILENT_STEPS.to_string());
            lines.push("Example Output:".to_string());
            lines.push("Final Answer: [4, 2, 3,..., 14]".to_string());
            lines.push(CLOSING_IMPLICIT.to_string());
        }
    }
    Ok(RenderedPrompt {
        text: lines.join("\n"),
        num_passages: n,
        format,
    })
}

fn bracket_list(indices: &[usize]) -> String {
    let inner = indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{inner}]")
}

/// Renders an index sequence the way a well-behaved model would answer in
/// `format`. The sequence is rendered as given; validity is the caller's
/// concern (the mock oracle uses this to emit deliberately malformed output).
pub fn render_completion(order: &[usize], format: PromptFormat) -> String {
    match format {
        PromptFormat::DirectList => order
            .iter()
            .map(|i| format!("[{i}]"))
            .collect::<Vec<_>>()
            .join(" > "),
        PromptFormat::CoTExplicit => {
            let mut lines: Vec<String> = Vec::with_capacity(order.len() + 1);
            for k in 1..=order.len() {
                lines.push(format!("Step {k}: {}", bracket_list(&order[..k])));
            }
            lines.push(format!("Final Answer: {}", bracket_list(order)));
            lines.join("\n")
        }
        PromptFormat::CoTImplicitFinal => format!("Final Answer: {}", bracket_list(order)),
    }
}

/// Renders the teacher's ideal completion for a validated ranking.
pub fn render_target(teacher: &Ranking, format: PromptFormat) -> String {
    render_completion(teacher.order(), format)
}

/// Proportions of each prompt format in emitted datasets. Must be
/// non-negative and sum to 1 (within 1e-6). The default mixes the three
/// formats in equal thirds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormatMix {
    pub direct_list: f64,
    pub cot_explicit: f64,
    pub cot_implicit_final: f64,
}

impl Default for FormatMix {
    fn default() -> Self {
        FormatMix {
            direct_list: 1.0 / 3.0,
            cot_explicit: 1.0 / 3.0,
            cot_implicit_final: 1.0 / 3.0,
        }
    }
}

impl FormatMix {
    /// A mix that always emits `format`.
    pub fn only(format: PromptFormat) -> Self {
        let mut mix = FormatMix {
            direct_list: 0.0,
            cot_explicit: 0.0,
            cot_implicit_final: 0.0,
        };
        match format {
            PromptFormat::DirectList => mix.direct_list = 1.0,
            PromptFormat::CoTExplicit => mix.cot_explicit = 1.0,
            PromptFormat::CoTImplicitFinal => mix.cot_implicit_final = 1.0,
        }
        mix
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let parts = [self.direct_list, self.cot_explicit, self.cot_implicit_final];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(PromptError::BadMix(
                "proportions must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(PromptError::BadMix(format!(
                "proportions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> PromptFormat {
        let r: f64 = rng.random();
        if r < self.direct_list {
            PromptFormat::DirectList
        } else if r < self.direct_list + self.cot_explicit {
            PromptFormat::CoTExplicit
        } else {
            PromptFormat::CoTImplicitFinal
        }
    }
}

/// A candidate list with its teacher ordering and optional provenance tag
/// naming where the teacher labels came from. Provenance is opaque metadata;
/// it never changes behavior.
#[derive(Debug, Clone)]
pub struct TeacherExample {
    candidates: CandidateList,
    teacher: Ranking,
    provenance: Option<String>,
}

impl TeacherExample {
    pub fn new(candidates: CandidateList, teacher: Ranking) -> Result<Self, CoreError> {
        if teacher.len() != candidates.len() {
            return Err(CoreError::LengthMismatch {
                expected: candidates.len(),
                got: teacher.len(),
            });
        }
        Ok(TeacherExample {
            candidates,
            teacher,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Option<String>) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn candidates(&self) -> &CandidateList {
        &self.candidates
    }

    pub fn teacher(&self) -> &Ranking {
        &self.teacher
    }
}

/// One supervised training record: prompt plus ideal completion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SftRecord {
    pub qid: String,
    pub format: PromptFormat,
    pub prompt: String,
    pub target: String,
    pub teacher_order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// One held-out prompt for preference-pair construction: same as
/// [`SftRecord`] minus the target completion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RpoPromptRecord {
    pub qid: String,
    pub format: PromptFormat,
    pub prompt: String,
    pub teacher_order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Result of [`emit_sft_dataset`]: the supervised records and the held-out
/// prompts, each in seeded-shuffle order.
#[derive(Debug, Clone, PartialEq)]
pub struct SftSplit {
    pub sft: Vec<SftRecord>,
    pub rpo_prompts: Vec<RpoPromptRecord>,
}

/// Splits teacher-labeled examples into a supervised set and a held-out
/// prompt set. The shuffle, the split boundary (`round(split_fraction * n)`
/// examples go to the supervised side), and the per-record format draw are
/// all driven by one ChaCha stream seeded with `seed`, so the output is a
/// pure function of (examples, mix, split_fraction, seed).
pub fn emit_sft_dataset(
    examples: &[TeacherExample],
    mix: &FormatMix,
    split_fraction: f64,
    seed: u64,
) -> Result<SftSplit, PromptError> {
    mix.validate()?;
    if !(0.0..=1.0).contains(&split_fraction) || !split_fraction.is_finite() {
        return Err(PromptError::BadSplit(split_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..examples.len()).collect();
    indices.shuffle(&mut rng);
    let n_sft = ((split_fraction * examples.len() as f64).round() as usize).min(examples.len());

    let mut sft = Vec::with_capacity(n_sft);
    let mut rpo_prompts = Vec::with_capacity(examples.len() - n_sft);
    for (pos, &idx) in indices.iter().enumerate() {
        let example = &examples[idx];
        let format = mix.sample(&mut rng);
        let prompt = build_prompt(example.candidates(), format)?;
        let qid = example.candidates().query().qid().to_string();
        let teacher_order = example.teacher().order().to_vec();
        if pos < n_sft {
            sft.push(SftRecord {
                qid,
                format,
                prompt: prompt.text,
                target: render_target(example.teacher(), format),
                teacher_order,
                provenance: example.provenance.clone(),
            });
        } else {
            rpo_prompts.push(RpoPromptRecord {
                qid,
                format,
                prompt: prompt.text,
                teacher_order,
                provenance: example.provenance.clone(),
            });
        }
    }
    Ok(SftSplit { sft, rpo_prompts })
}

pub fn write_sft_records(path: &Path, records: &[SftRecord]) -> std::io::Result<()> {
    ioutil::write_jsonl(path, records)
}

pub fn write_rpo_prompts(path: &Path, records: &[RpoPromptRecord]) -> std::io::Result<()> {
    ioutil::write_jsonl(path, records)
}

pub fn read_rpo_prompts(path: &Path) -> Result<Vec<RpoPromptRecord>, ioutil::JsonlError> {
    ioutil::read_jsonl(path)
}
