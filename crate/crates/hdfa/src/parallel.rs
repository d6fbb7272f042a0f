//! Episodes spread over threads.

use hdfa_core::estimator::EstimatorBank;
use hdfa_core::harness::{run_episode, sample_episode, EpisodeMetrics, EpisodeOutcome, EpisodeSpec, FeatureTable, Mode};
use hdfa_core::trainer::InnerConfig;

/// [`hdfa_core::harness::run_episodes`] on `threads` workers. Episode `e`
/// always uses substream `e` of the seed and outcomes are aggregated in
/// episode order, so the result does not depend on `threads`.
pub fn run_episodes_parallel(
    bank: &EstimatorBank,
    table: &FeatureTable,
    spec: &EpisodeSpec,
    mode: Mode,
    inner: &InnerConfig,
    threads: usize,
) -> hdfa_core::Result<EpisodeMetrics> {
    spec.validate()?;
    let classes = table.grouped();
    let threads = threads.clamp(1, spec.episodes.max(1));
    let one = |e: usize| run_episode(bank, &sample_episode(&classes, spec, e as u64)?, mode, inner);
    let mut slots: Vec<Option<hdfa_core::Result<EpisodeOutcome>>> = (0..spec.episodes).map(|_| None).collect();
    if threads == 1 {
        for (e, s) in slots.iter_mut().enumerate() {
            *s = Some(one(e));
        }
    } else {
        let chunk = spec.episodes.div_ceil(threads);
        std::thread::scope(|scope| {
            for (k, part) in slots.chunks_mut(chunk).enumerate() {
                let one = &one;
                scope.spawn(move || {
                    for (i, s) in part.iter_mut().enumerate() {
                        *s = Some(one(k * chunk + i));
                    }
                });
            }
        });
    }
    let outcomes = slots
        .into_iter()
        .map(|s| s.expect("every episode ran"))
        .collect::<hdfa_core::Result<Vec<_>>>()?;
    Ok(EpisodeMetrics::aggregate(mode, *spec, &outcomes))
}
