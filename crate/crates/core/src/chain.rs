//! Driving a sampler through burn-in, thinning and retention.

use crate::data::ChainConfig;

/// Called with the 1-based iteration number every [`PROGRESS_EVERY`] iterations.
pub type Progress<'a> = &'a mut dyn FnMut(u64);

pub const PROGRESS_EVERY: u64 = 100;

/// Run `cfg.iterations` sweeps of `step`, handing every retained state to `keep`.
pub fn drive<S, E, Step, Keep>(
    cfg: &ChainConfig,
    state: &mut S,
    mut step: Step,
    mut keep: Keep,
    progress: Option<Progress<'_>>,
) -> Result<(), E>
where
    Step: FnMut(&mut S, u64) -> Result<(), E>,
    Keep: FnMut(&S),
{
    let mut progress = progress;
    for it in 1..=cfg.iterations {
        step(state, it)?;
        if cfg.retains(it) {
            keep(state);
        }
        if it % PROGRESS_EVERY == 0 {
            if let Some(p) = progress.as_mut() {
                p(it);
            }
        }
    }
    Ok(())
}
