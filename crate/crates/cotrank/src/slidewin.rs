//! Sliding-window orchestration for candidate lists longer than one prompt
//! can hold.
//!
//! Windows are planned tail-first: the first window covers the end of the
//! list, each later window shifts toward the head by `stride`, and planning
//! stops after the first window that touches position 0. Each window is
//! reranked in place, so strong passages bubble toward the head as the
//! sweep moves forward. One pass with window w and stride s guarantees the
//! true top (w - s) candidates reach the head in order under a perfect
//! window reranker.
//!
//! Scores follow the last window that ranked a passage: a passage that ends
//! the pass at 0-based position p never moved after its last window placed
//! it there, so its retained score equals n - p on the global descending
//! scale anchored at its absolute position.

use std::collections::HashMap;

use crate::types::{CandidateList, CoreError, Ranking};

/// Window geometry: `window_size` passages per prompt, head of each next
/// window `stride` positions earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub window_size: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_size: 20,
            stride: 10,
        }
    }
}

impl WindowConfig {
    pub fn new(window_size: usize, stride: usize) -> Result<Self, SlideError> {
        let cfg = WindowConfig {
            window_size,
            stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SlideError> {
        if self.stride < 1 {
            return Err(SlideError::InvalidConfig(
                "stride must be at least 1".into(),
            ));
        }
        if self.stride > self.window_size {
            return Err(SlideError::InvalidConfig(format!(
                "stride {} exceeds window size {}",
                self.stride, self.window_size
            )));
        }
        Ok(())
    }
}

/// Half-open 0-based position range of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub start: usize,
    pub end: usize,
}

impl WindowSpec {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Errors raised by window planning and orchestration.
#[derive(Debug, thiserror::Error)]
pub enum SlideError {
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    /// The window reranker failed, or returned a ranking that does not fit
    /// its window. In repair pipelines parse failures are absorbed by the
    /// identity fallback before they reach here, so this surfaces only for
    /// strict parsing or transport failures.
    #[error("window {window} reranker failed: {source}")]
    WindowRerankerFailure {
        window: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Plans the tail-first window sweep for `n` candidates. Windows end at
/// n, n - stride, n - 2*stride, ... and each spans `window_size` positions
/// clipped at the head; planning stops with the first window whose start is
/// 0. A list no longer than one window yields the single window [0, n).
pub fn plan_windows(n: usize, cfg: &WindowConfig) -> Result<Vec<WindowSpec>, SlideError> {
    cfg.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n <= cfg.window_size {
        return Ok(vec![WindowSpec { start: 0, end: n }]);
    }
    let mut windows = Vec::new();
    let mut end = n;
    loop {
        let start = end.saturating_sub(cfg.window_size);
        windows.push(WindowSpec { start, end });
        if start == 0 {
            break;
        }
        end -= cfg.stride;
    }
    Ok(windows)
}

/// Final order plus the per-docid score table of one sliding pass.
#[derive(Debug, Clone)]
pub struct SlideOutcome {
    /// Permutation of the original candidate indices (1-based), best first.
    pub ranking: Ranking,
    /// docid -> retained score: n minus the passage's final 0-based
    /// position, i.e. the score assigned by the last window that ranked it.
    pub scores: HashMap<String, f64>,
}

/// Runs one tail-first sliding pass over `candidates`. The `window_reranker`
/// receives each window as its own candidate list and returns a ranking of
/// that window (1-based, window-local); the working order is rewritten in
/// place after every window.
pub fn rerank_sliding<F>(
    candidates: &CandidateList,
    mut window_reranker: F,
    cfg: &WindowConfig,
) -> Result<SlideOutcome, SlideError>
where
    F: FnMut(&CandidateList) -> Result<Ranking, Box<dyn std::error::Error + Send + Sync>>,
{
    let n = candidates.len();
    let plan = plan_windows(n, cfg)?;
    let mut working: Vec<usize> = (0..n).collect();
    let mut scores: HashMap<String, f64> = HashMap::with_capacity(n);
    for (widx, window) in plan.iter().enumerate() {
        let positions = &working[window.start..window.end];
        let sub = candidates.select(positions);
        let local = window_reranker(&sub).map_err(|source| SlideError::WindowRerankerFailure {
            window: widx,
            source,
        })?;
        if local.len() != window.len() {
            return Err(SlideError::WindowRerankerFailure {
                window: widx,
                source: Box::new(CoreError::LengthMismatch {
                    expected: window.len(),
                    got: local.len(),
                }),
            });
        }
        let reordered: Vec<usize> = local
            .order()
            .iter()
            .map(|&idx| working[window.start + idx - 1])
            .collect();
        working[window.start..window.end].copy_from_slice(&reordered);
        for (offset, &orig) in reordered.iter().enumerate() {
            let absolute = window.start + offset;
            scores.insert(
                candidates.passages()[orig].docid().to_string(),
                (n - absolute) as f64,
            );
        }
    }
    debug_assert!(scores.len() == n, "every passage is ranked by some window");
    debug_assert!(working
        .iter()
        .enumerate()
        .all(|(pos, &orig)| { scores[candidates.passages()[orig].docid()] == (n - pos) as f64 }));
    let ranking = Ranking::new(working.iter().map(|&i| i + 1).collect(), n)
        .expect("window rewrites preserve the permutation");
    Ok(SlideOutcome { ranking, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{apply_ranking, Passage, Query};

    fn scored_list(scores: &[f64]) -> CandidateList {
        let passages = (0..scores.len())
            .map(|i| Passage::new(format!("d{i:03}"), format!("passage {i}")).unwrap())
            .collect();
        CandidateList::new(
            Query::new("q1", "which passage wins").unwrap(),
            passages,
            Some(scores.to_vec()),
        )
        .unwrap()
    }

    /// Ranks a window by its carried first-stage scores, descending.
    fn perfect_oracle(
        sub: &CandidateList,
    ) -> Result<Ranking, Box<dyn std::error::Error + Send + Sync>> {
        let scores = sub.source_scores().expect("test lists carry scores");
        let mut order: Vec<usize> = (1..=sub.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b - 1].total_cmp(&scores[a - 1]).then_with(|| {
                sub.passages()[a - 1]
                    .docid()
                    .cmp(sub.passages()[b - 1].docid())
            })
        });
        Ok(Ranking::new(order, sub.len()).unwrap())
    }

    #[test]
    fn test_plan_default_config_hundred() {
        let plan = plan_windows(100, &WindowConfig::default()).unwrap();
        assert_eq!(plan.len(), 9);
        assert_eq!(
            plan[0],
            WindowSpec {
                start: 80,
                end: 100
            }
        );
        assert_eq!(plan[1], WindowSpec { start: 70, end: 90 });
        assert_eq!(plan[8], WindowSpec { start: 0, end: 20 });
    }

    #[test]
    fn test_plan_short_list_single_window() {
        let plan = plan_windows(15, &WindowConfig::default()).unwrap();
        assert_eq!(plan, vec![WindowSpec { start: 0, end: 15 }]);
        let plan = plan_windows(20, &WindowConfig::default()).unwrap();
        assert_eq!(plan, vec![WindowSpec { start: 0, end: 20 }]);
    }

    #[test]
    fn test_plan_stops_at_first_zero_start() {
        let plan = plan_windows(25, &WindowConfig::default()).unwrap();
        assert_eq!(
            plan,
            vec![
                WindowSpec { start: 5, end: 25 },
                WindowSpec { start: 0, end: 15 },
            ]
        );
    }

    #[test]
    fn test_plan_small_config() {
        let cfg = WindowConfig::new(2, 1).unwrap();
        let plan = plan_windows(5, &cfg).unwrap();
        assert_eq!(
            plan,
            vec![
                WindowSpec { start: 3, end: 5 },
                WindowSpec { start: 2, end: 4 },
                WindowSpec { start: 1, end: 3 },
                WindowSpec { start: 0, end: 2 },
            ]
        );
    }

    #[test]
    fn test_plan_windows_never_empty_and_cover_head() {
        for n in 1..=60 {
            for (w, s) in [(2, 1), (10, 5), (20, 10), (7, 3)] {
                let cfg = WindowConfig::new(w, s).unwrap();
                let plan = plan_windows(n, &cfg).unwrap();
                assert!(!plan.is_empty());
                assert!(plan.iter().all(|win| !win.is_empty()));
                assert_eq!(plan.last().unwrap().start, 0);
                assert_eq!(plan[0].end, n);
            }
        }
    }

    #[test]
    fn test_invalid_configs_rejected() {
        assert!(matches!(
            WindowConfig::new(10, 0),
            Err(SlideError::InvalidConfig(_))
        ));
        assert!(matches!(
            WindowConfig::new(5, 6),
            Err(SlideError::InvalidConfig(_))
        ));
    }

    #[test]
    fn test_single_window_sorts_fully() {
        let scores = [0.3, 0.9, 0.1, 0.7];
        let cl = scored_list(&scores);
        let outcome = rerank_sliding(&cl, perfect_oracle, &WindowConfig::default()).unwrap();
        assert_eq!(outcome.ranking.order(), &[2, 4, 1, 3]);
        assert_eq!(outcome.scores["d001"], 4.0);
        assert_eq!(outcome.scores["d002"], 1.0);
    }

    #[test]
    fn test_sliding_pass_brings_true_top_ten_to_head() {
        // 100 scores arranged worst-case: best passages buried at the head
        // of the tail region.
        let scores: Vec<f64> = (0..100).map(|i| (i as f64 * 37.0) % 100.0).collect();
        let cl = scored_list(&scores);
        let outcome = rerank_sliding(&cl, perfect_oracle, &WindowConfig::default()).unwrap();
        let reranked = apply_ranking(&cl, &outcome.ranking).unwrap();
        let mut expect: Vec<usize> = (0..100).collect();
        expect.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        for (i, &orig) in expect.iter().take(10).enumerate() {
            assert_eq!(
                reranked.passages()[i].docid(),
                format!("d{orig:03}"),
                "position {i} after one pass"
            );
        }
    }

    #[test]
    fn test_scores_follow_final_positions() {
        let scores: Vec<f64> = (0..30).map(|i| ((i * 13) % 30) as f64).collect();
        let cl = scored_list(&scores);
        let outcome = rerank_sliding(&cl, perfect_oracle, &WindowConfig::default()).unwrap();
        let order = outcome.ranking.order();
        for (pos, &idx) in order.iter().enumerate() {
            let docid = cl.passages()[idx - 1].docid();
            assert_eq!(outcome.scores[docid], (30 - pos) as f64);
        }
    }

    #[test]
    fn test_output_is_permutation_of_input() {
        let scores: Vec<f64> = (0..47).map(|i| ((i * 31) % 47) as f64).collect();
        let cl = scored_list(&scores);
        let cfg = WindowConfig::new(10, 5).unwrap();
        let outcome = rerank_sliding(&cl, perfect_oracle, &cfg).unwrap();
        let reranked = apply_ranking(&cl, &outcome.ranking).unwrap();
        let mut docids: Vec<&str> = reranked.passages().iter().map(|p| p.docid()).collect();
        docids.sort_unstable();
        let mut expect: Vec<&str> = cl.passages().iter().map(|p| p.docid()).collect();
        expect.sort_unstable();
        assert_eq!(docids, expect);
    }

    #[test]
    fn test_reranker_failure_names_window() {
        let cl = scored_list(&[1.0, 2.0, 3.0]);
        let cfg = WindowConfig::new(2, 1).unwrap();
        let mut calls = 0;
        let err = rerank_sliding(
            &cl,
            |sub| {
                calls += 1;
                if calls == 2 {
                    Err("window exploded".into())
                } else {
                    perfect_oracle(sub)
                }
            },
            &cfg,
        )
        .unwrap_err();
        match err {
            SlideError::WindowRerankerFailure { window, .. } => assert_eq!(window, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn test_wrong_length_ranking_is_a_failure() {
        let cl = scored_list(&[1.0, 2.0, 3.0]);
        let err = rerank_sliding(
            &cl,
            |_| Ok(Ranking::new(vec![1], 1).unwrap()),
            &WindowConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SlideError::WindowRerankerFailure { window: 0, .. }
        ));
    }

    #[test]
    fn test_single_passage() {
        let cl = scored_list(&[5.0]);
        let outcome = rerank_sliding(&cl, perfect_oracle, &WindowConfig::default()).unwrap();
        assert_eq!(outcome.ranking.order(), &[1]);
        assert_eq!(outcome.scores["d000"], 1.0);
    }
}
