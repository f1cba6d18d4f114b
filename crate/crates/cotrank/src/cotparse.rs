//! Parsing model output back into rankings.
//!
//! [`parse_cot_output`] is the strict reading: the completion must contain
//! exactly what the prompt asked for (a full stepwise trace, a final-answer
//! line, or a `[a] > [b]` chain, depending on the format), and the final
//! list must be a permutation of the window's 1-based indices.
//!
//! [`extract_final_ranking`] adds a repair mode that is total: whatever the
//! model produced, it returns a valid ranking plus a report of the rules it
//! applied. Repairs, in order:
//!
//! * R1: drop repeated indices, keeping the first occurrence.
//! * R2: drop indices outside 1..=n (including unparseable tokens).
//! * R3: append indices the model never mentioned, in first-stage order
//!   (ascending window position).
//! * R4: if no list can be found at all, fall back to the identity ranking.
//!
//! When several `Final Answer:` lines appear, the last one wins. A broken
//! trace whose final line is clean is accepted with a warning flag rather
//! than repaired; only the final list determines the ranking in repair mode.

use std::sync::OnceLock;

use regex::Regex;

use crate::promptgen::PromptFormat;
use crate::types::{CoreError, Ranking};

/// How strictly model output is held to the requested format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairPolicy {
    /// Any deviation is an error.
    Strict,
    /// Deviations are repaired; extraction always succeeds.
    Repair,
}

/// Errors raised by strict parsing.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no final answer found in model output")]
    NoFinalAnswer,
    /// The stepwise trace breaks at this 1-based step: wrong label, wrong
    /// length, not extending the previous step by one new index, or a final
    /// answer that contradicts the last step.
    #[error("stepwise trace breaks at step {0}")]
    PrefixViolation(usize),
    #[error("final ranking is not a permutation: {0}")]
    NotAPermutation(String),
    #[error("expected {expected} steps, found {got}")]
    StepCountMismatch { expected: usize, got: usize },
}

/// A parsed stepwise ranking trace. `steps()[k]` holds the first k+1 chosen
/// indices; the last step equals `final_order()`, which is a permutation of
/// 1..=n. For formats without written-out steps the trace is synthesized
/// from the prefixes of the final answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoTTrace {
    steps: Vec<Vec<usize>>,
    final_order: Vec<usize>,
}

impl CoTTrace {
    pub fn steps(&self) -> &[Vec<usize>] {
        &self.steps
    }

    pub fn final_order(&self) -> &[usize] {
        &self.final_order
    }

    pub fn into_final_order(self) -> Vec<usize> {
        self.final_order
    }
}

/// One repair rule application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RepairRule {
    /// R1: repeated indices dropped (first occurrence kept).
    DroppedDuplicates,
    /// R2: out-of-range or unparseable indices dropped.
    DroppedOutOfRange,
    /// R3: missing indices appended in first-stage order.
    AppendedMissing,
    /// R4: no parseable list at all; identity ranking returned.
    IdentityFallback,
}

impl RepairRule {
    pub fn code(&self) -> &'static str {
        match self {
            RepairRule::DroppedDuplicates => "R1",
            RepairRule::DroppedOutOfRange => "R2",
            RepairRule::AppendedMissing => "R3",
            RepairRule::IdentityFallback => "R4",
        }
    }
}

impl std::fmt::Display for RepairRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// What repair mode did to one completion.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RepairReport {
    rules: Vec<RepairRule>,
    broken_trace: bool,
}

impl RepairReport {
    pub fn clean() -> Self {
        RepairReport::default()
    }

    /// Rules applied, in application order (R1 before R2 before R3).
    pub fn rules(&self) -> &[RepairRule] {
        &self.rules
    }

    pub fn rule_codes(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.code()).collect()
    }

    /// True when no repair rule fired. A set `broken_trace` flag does not
    /// make a report unclean; the ranking itself needed no fixing.
    pub fn is_clean(&self) -> bool {
        self.rules.is_empty()
    }

    /// True when the final list was usable as-is but the surrounding trace
    /// would not survive strict parsing.
    pub fn broken_trace(&self) -> bool {
        self.broken_trace
    }
}

fn final_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)final\s+answer\s*:\s*\[([^\[\]]*)\]").expect("valid regex"))
}

fn step_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^\s*step\s+(\d+)\s*:\s*\[([^\[\]]*)\]").expect("valid regex")
    })
}

fn chain_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*\d+\s*\](?:\s*>\s*\[\s*\d+\s*\])+").expect("valid regex"))
}

fn lone_list_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*\[\s*(\d+)\s*\]\s*$").expect("valid regex"))
}

fn bracket_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*(\d+)\s*\]").expect("valid regex"))
}

/// Splits the inside of a bracket list on commas. Tokens that do not parse
/// as an index become `None` (strict mode rejects them, repair drops them).
fn parse_index_list(inner: &str) -> Vec<Option<usize>> {
    let trimmed = inner.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    trimmed
        .split(',')
        .map(|tok| tok.trim().parse::<usize>().ok())
        .collect()
}

fn last_final_answer(text: &str) -> Option<Vec<Option<usize>>> {
    final_re()
        .captures_iter(text)
        .last()
        .map(|cap| parse_index_list(cap.get(1).expect("group 1").as_str()))
}

fn last_chain(text: &str) -> Option<Vec<Option<usize>>> {
    chain_re().find_iter(text).last().map(|m| {
        bracket_id_re()
            .captures_iter(m.as_str())
            .map(|cap| cap.get(1).expect("group 1").as_str().parse::<usize>().ok())
            .collect()
    })
}

fn last_lone_list(text: &str) -> Option<Vec<Option<usize>>> {
    lone_list_re()
        .captures_iter(text)
        .last()
        .map(|cap| vec![cap.get(1).expect("group 1").as_str().parse::<usize>().ok()])
}

fn step_lines(text: &str) -> Vec<(usize, Vec<Option<usize>>)> {
    step_re()
        .captures_iter(text)
        .filter_map(|cap| {
            let label = cap
                .get(1)
                .expect("group 1")
                .as_str()
                .parse::<usize>()
                .ok()?;
            Some((
                label,
                parse_index_list(cap.get(2).expect("group 2").as_str()),
            ))
        })
        .collect()
}

/// Maps permutation-validation failures onto parser error text.
fn permutation_error(err: CoreError, n: usize) -> ParseError {
    match err {
        CoreError::DuplicateIndex(i) => ParseError::NotAPermutation(format!("duplicate index {i}")),
        CoreError::OutOfRange(i) => {
            ParseError::NotAPermutation(format!("index {i} out of range for {n} passages"))
        }
        CoreError::MissingIndex(i) => ParseError::NotAPermutation(format!("missing index {i}")),
        other => ParseError::NotAPermutation(other.to_string()),
    }
}

fn validate_final(items: Vec<Option<usize>>, n: usize) -> Result<Vec<usize>, ParseError> {
    let resolved: Vec<usize> = items
        .into_iter()
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| ParseError::NotAPermutation("unparseable index in final answer".into()))?;
    Ranking::new(resolved.clone(), n).map_err(|e| permutation_error(e, n))?;
    Ok(resolved)
}

fn prefixes_of(order: &[usize]) -> Vec<Vec<usize>> {
    (1..=order.len()).map(|k| order[..k].to_vec()).collect()
}

/// Strictly parses a completion in `format` for an n-candidate window into a
/// stepwise trace. Prose outside the recognized lines is tolerated; keyword
/// case and bracket spacing are flexible.
pub fn parse_cot_output(
    text: &str,
    n: usize,
    format: PromptFormat,
) -> Result<CoTTrace, ParseError> {
    match format {
        PromptFormat::CoTExplicit => {
            let final_items = last_final_answer(text).ok_or(ParseError::NoFinalAnswer)?;
            let raw_steps = step_lines(text);
            let mut steps: Vec<Vec<usize>> = Vec::with_capacity(raw_steps.len());
            for (i, (label, items)) in raw_steps.into_iter().enumerate() {
                let k = i + 1;
                if label != k {
                    return Err(ParseError::PrefixViolation(k));
                }
                let items: Vec<usize> = items
                    .into_iter()
                    .collect::<Option<Vec<usize>>>()
                    .ok_or(ParseError::PrefixViolation(k))?;
                if items.len() != k {
                    return Err(ParseError::PrefixViolation(k));
                }
                if let Some(prev) = steps.last() {
                    if items[..k - 1] != prev[..] || prev.contains(&items[k - 1]) {
                        return Err(ParseError::PrefixViolation(k));
                    }
                }
                steps.push(items);
            }
            if steps.len() != n {
                return Err(ParseError::StepCountMismatch {
                    expected: n,
                    got: steps.len(),
                });
            }
            let final_order = validate_final(final_items, n)?;
            if final_order != steps[n - 1] {
                return Err(ParseError::PrefixViolation(n));
            }
            Ok(CoTTrace { steps, final_order })
        }
        PromptFormat::CoTImplicitFinal => {
            let final_items = last_final_answer(text).ok_or(ParseError::NoFinalAnswer)?;
            let final_order = validate_final(final_items, n)?;
            Ok(CoTTrace {
                steps: prefixes_of(&final_order),
                final_order,
            })
        }
        PromptFormat::DirectList => {
            let items = last_chain(text)
                .or_else(|| last_lone_list(text))
                .ok_or(ParseError::NoFinalAnswer)?;
            let final_order = validate_final(items, n)?;
            Ok(CoTTrace {
                steps: prefixes_of(&final_order),
                final_order,
            })
        }
    }
}

/// Pulls a raw index list out of arbitrary completion text: the last final
/// answer if any, else the last `[a] > [b]` chain, else the last step line,
/// else the last lone bracketed index on its own line.
fn extract_raw_list(text: &str) -> Option<Vec<Option<usize>>> {
    last_final_answer(text)
        .or_else(|| last_chain(text))
        .or_else(|| step_lines(text).into_iter().last().map(|(_, items)| items))
        .or_else(|| last_lone_list(text))
}

/// Extracts the ranking a completion encodes. Strict mode is
/// [`parse_cot_output`] plus conversion; repair mode always succeeds and
/// reports which rules fired.
pub fn extract_final_ranking(
    text: &str,
    n: usize,
    format: PromptFormat,
    policy: RepairPolicy,
) -> Result<(Ranking, RepairReport), ParseError> {
    match policy {
        RepairPolicy::Strict => {
            let trace = parse_cot_output(text, n, format)?;
            let ranking = Ranking::new(trace.final_order, n)
                .expect("strict parse output is a valid permutation");
            Ok((ranking, RepairReport::clean()))
        }
        RepairPolicy::Repair => {
            let mut rules = Vec::new();
            let order = match extract_raw_list(text) {
                None => {
                    rules.push(RepairRule::IdentityFallback);
                    Ranking::identity(n).order().to_vec()
                }
                Some(items) => {
                    let mut seen = vec![false; n + 1];
                    let mut kept: Vec<usize> = Vec::with_capacity(items.len());
                    let mut dropped_duplicate = false;
                    let mut dropped_out_of_range = false;
                    for item in items {
                        match item {
                            Some(idx) if (1..=n).contains(&idx) => {
                                if seen[idx] {
                                    dropped_duplicate = true;
                                } else {
                                    seen[idx] = true;
                                    kept.push(idx);
                                }
                            }
                            // Unparseable tokens count as out-of-range: the
                            // model named something that is not a window
                            // index.
                            _ => dropped_out_of_range = true,
                        }
                    }
                    if dropped_duplicate {
                        rules.push(RepairRule::DroppedDuplicates);
                    }
                    if dropped_out_of_range {
                        rules.push(RepairRule::DroppedOutOfRange);
                    }
                    if kept.len() < n {
                        rules.push(RepairRule::AppendedMissing);
                        kept.extend((1..=n).filter(|&idx| !seen[idx]));
                    }
                    kept
                }
            };
            let ranking = Ranking::new(order, n).expect("repair yields a permutation");
            let broken_trace = rules.is_empty() && parse_cot_output(text, n, format).is_err();
            Ok((
                ranking,
                RepairReport {
                    rules,
                    broken_trace,
                },
            ))
        }
    }
}
