//! Stage 1 of the two-stage attack: sweep pitch twists of every library
//! carrier, score each by TPR against the surrogate over an evaluation set,
//! and keep the top-K twisted carriers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::carriers::{pitch_twist_carrier, Carrier, CarrierLibrary};
use crate::error::{Error, Result};
use crate::eval::tpr;
use crate::models::{SpeakerModel, Task, Thresholds};
use crate::perception::{PairFeatureExtractor, SrsModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Options {
    /// Semitone sweep bound (integer twists in [-bound, bound]).
    pub pitch_bound: i32,
    /// Sweep stride in semitones (1 = the full integer grid).
    pub pitch_step: usize,
    /// Mixing weight used when probing a single carrier (the full budget).
    pub probe_weight: f64,
}

impl Default for Stage1Options {
    fn default() -> Self {
        Self {
            pitch_bound: 25,
            pitch_step: 1,
            probe_weight: 0.08,
        }
    }
}

/// A carrier's best twist and its TPR score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedCarrier<S> {
    pub carrier: Carrier<S>,
    pub tpr: f64,
    pub fooling_rate: f64,
    pub mean_srs: f64,
}

/// Evaluate every (carrier, integer pitch twist) pair on the surrogate and
/// evaluation clips; keep each carrier's best twist, return the top-K by
/// TPR (ties by carrier id).
pub fn stage1_select_candidates<S: Scalar>(
    surrogate: &SpeakerModel<S>,
    library: &CarrierLibrary<S>,
    eval_set: &[AudioClip<S>],
    target: &str,
    k: usize,
    srs_model: &SrsModel<S>,
    opts: &Stage1Options,
) -> Result<Vec<RankedCarrier<S>>> {
    if library.len() < k {
        return Err(Error::InsufficientData(format!(
            "library holds {} carriers, K = {k}",
            library.len()
        )));
    }
    if eval_set.is_empty() {
        return Err(Error::InsufficientData("empty evaluation set".into()));
    }
    if !surrogate.labels().iter().any(|l| l == target) {
        return Err(Error::UnknownLabel(target.to_string()));
    }

    let extractors: Vec<PairFeatureExtractor<S>> = eval_set
        .iter()
        .map(PairFeatureExtractor::new)
        .collect::<Result<_>>()?;
    let weight = S::of_f64(opts.probe_weight);

    let twists: Vec<i32> = (-opts.pitch_bound..=opts.pitch_bound)
        .step_by(opts.pitch_step.max(1))
        .collect();

    let mut ranked: Vec<RankedCarrier<S>> = library
        .carriers
        .par_iter()
        .map(|carrier| -> Result<RankedCarrier<S>> {
            let mut best: Option<RankedCarrier<S>> = None;
            for &s in &twists {
                let twisted = pitch_twist_carrier(carrier, s as f64)?;
                let mut fooled = 0usize;
                let mut srs_acc = 0.0f64;
                for (x, extractor) in eval_set.iter().zip(&extractors) {
                    let ae = x.add_scaled(&twisted.waveform, weight)?;
                    let decision = surrogate.decide(&ae, Task::Csi, &Thresholds::default())?;
                    if decision.outcome.accepted_as(target) {
                        fooled += 1;
                    }
                    srs_acc += extractor.srs(srs_model, &ae)?.as_f64();
                }
                let fooling_rate = fooled as f64 / eval_set.len() as f64;
                let mean_srs = (srs_acc / eval_set.len() as f64).clamp(1.0, 7.0);
                let score = tpr(fooling_rate, mean_srs)?;
                if best.as_ref().map_or(true, |b| score > b.tpr) {
                    best = Some(RankedCarrier {
                        carrier: twisted,
                        tpr: score,
                        fooling_rate,
                        mean_srs,
                    });
                }
            }
            Ok(best.expect("at least one twist evaluated"))
        })
        .collect::<Result<_>>()?;

    ranked.sort_by(|a, b| {
        b.tpr
            .partial_cmp(&a.tpr)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.carrier.id.cmp(&b.carrier.id))
    });
    ranked.truncate(k);
    Ok(ranked)
}
