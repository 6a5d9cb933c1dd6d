//! Transferability and attack-success measurement: match rate, TPR, ASR,
//! phoneme diversity, and the report shapes they feed.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::fixtures::PHONEME_ALPHABET;
use crate::models::{SpeakerModel, Task, Thresholds};
use crate::scalar::Scalar;

/// Transferability-perception ratio: m / (8 - srs), with m in [0, 1] and
/// srs on the 1..7 scale.
pub fn tpr(m: f64, srs: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidArgument(format!("match rate {m} outside [0, 1]")));
    }
    if !(1.0..=7.0).contains(&srs) {
        return Err(Error::InvalidArgument(format!("SRS {srs} outside [1, 7]")));
    }
    Ok(m / (8.0 - srs))
}

/// Per-carrier-type summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprReport {
    pub carrier_type: String,
    pub match_rate: f64,
    pub mean_srs: f64,
    pub tpr: f64,
}

impl TprReport {
    pub fn new(carrier_type: impl Into<String>, match_rate: f64, mean_srs: f64) -> Result<Self> {
        let mean_srs = mean_srs.clamp(1.0, 7.0);
        Ok(Self {
            carrier_type: carrier_type.into(),
            match_rate,
            mean_srs,
            tpr: tpr(match_rate, mean_srs)?,
        })
    }
}

/// One adversarial example with the clean clip it came from.
pub struct AeInstance<'a, S> {
    pub original: &'a AudioClip<S>,
    pub adversarial: &'a AudioClip<S>,
}

/// Fraction of AEs where surrogate and target predict the same label and
/// that label differs from the surrogate's clean prediction.
pub fn match_rate<S: Scalar>(
    surrogate: &SpeakerModel<S>,
    target_model: &SpeakerModel<S>,
    instances: &[AeInstance<'_, S>],
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::InsufficientData("no adversarial examples".into()));
    }
    let none = Thresholds::default();
    let mut matched = 0usize;
    for inst in instances {
        let surr_ae = surrogate.decide(inst.adversarial, Task::Csi, &none)?.outcome;
        let tgt_ae = target_model.decide(inst.adversarial, Task::Csi, &none)?.outcome;
        let surr_clean = surrogate.decide(inst.original, Task::Csi, &none)?.outcome;
        if surr_ae == tgt_ae && surr_ae != surr_clean {
            matched += 1;
        }
    }
    Ok(matched as f64 / instances.len() as f64)
}

/// Surrogate-by-target match-rate table for one carrier type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub carrier_type: String,
    pub surrogates: Vec<String>,
    pub targets: Vec<String>,
    /// Row-major `surrogates x targets` match rates.
    pub rates: Vec<f64>,
}

impl TransferMatrix {
    pub fn rate(&self, surrogate: usize, target: usize) -> f64 {
        self.rates[surrogate * self.targets.len() + target]
    }

    /// Mean match rate per surrogate row.
    pub fn row_averages(&self) -> Vec<f64> {
        self.surrogates
            .iter()
            .enumerate()
            .map(|(s, _)| {
                let row = &self.rates[s * self.targets.len()..(s + 1) * self.targets.len()];
                row.iter().sum::<f64>() / row.len().max(1) as f64
            })
            .collect()
    }
}

/// Attack success rate under the task's decision rule.
pub fn asr<S: Scalar>(
    model: &SpeakerModel<S>,
    adversarial: &[AudioClip<S>],
    target: &str,
    task: Task,
    thresholds: &Thresholds<S>,
) -> Result<f64> {
    if adversarial.is_empty() {
        return Err(Error::InsufficientData("no adversarial examples".into()));
    }
    let mut hits = 0usize;
    for ae in adversarial {
        let d = model.decide(ae, task, thresholds)?;
        let success = match task {
            Task::Csi | Task::Osi => d.outcome.accepted_as(target),
            Task::Sv => d.outcome == crate::models::Outcome::Accept,
        };
        if success {
            hits += 1;
        }
    }
    Ok(hits as f64 / adversarial.len() as f64)
}

/// Count unique phonemes in a transcript. Strict mode rejects tokens outside
/// the declared alphabet.
pub fn phoneme_diversity<T: AsRef<str>>(transcript: &[T], strict: bool) -> Result<usize> {
    let mut seen = std::collections::BTreeSet::new();
    for token in transcript {
        let token = token.as_ref();
        if strict && !PHONEME_ALPHABET.contains(&token) {
            return Err(Error::InvalidArgument(format!(
                "unknown phoneme token `{token}`"
            )));
        }
        seen.insert(token.to_string());
    }
    Ok(seen.len())
}

/// Rank items by diversity and split into (high, low) halves; the top half
/// (ties broken by id for determinism) is `high`.
pub fn split_by_diversity(items: &[(String, usize)]) -> (Vec<String>, Vec<String>) {
    let mut ranked: Vec<&(String, usize)> = items.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let cut = ranked.len() / 2;
    let high = ranked[..cut].iter().map(|(id, _)| id.clone()).collect();
    let low = ranked[cut..].iter().map(|(id, _)| id.clone()).collect();
    (high, low)
}

/// Mean diversity and mean total count for a set of transcripts.
pub fn diversity_stats<T: AsRef<str>>(transcripts: &[Vec<T>]) -> (f64, f64) {
    if transcripts.is_empty() {
        return (0.0, 0.0);
    }
    let mut div = 0.0;
    let mut total = 0.0;
    for t in transcripts {
        div += phoneme_diversity(t, false).unwrap_or(0) as f64;
        total += t.len() as f64;
    }
    let n = transcripts.len() as f64;
    (div / n, total / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tpr_formula_values() {
        assert_eq!(tpr(0.0, 3.0).unwrap(), 0.0);
        assert!((tpr(0.25, 4.0).unwrap() - 0.0625).abs() < 1e-15);
        assert!(tpr(1.2, 4.0).is_err());
        assert!(tpr(0.5, 0.5).is_err());
        assert!(tpr(0.5, 7.5).is_err());
    }

    #[test]
    fn tpr_monotone_in_both_arguments() {
        let mut prev = 0.0;
        for m in [0.1, 0.2, 0.5, 0.9] {
            let v = tpr(m, 4.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        let mut prev = 0.0;
        for srs in [1.0, 3.0, 5.0, 6.9] {
            let v = tpr(0.5, srs).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn phoneme_diversity_counts_unique() {
        assert_eq!(phoneme_diversity(&["AA", "AA", "AA"], true).unwrap(), 1);
        assert_eq!(phoneme_diversity::<&str>(&[], true).unwrap(), 0);
        assert_eq!(phoneme_diversity(&["AA", "B", "AA", "K"], true).unwrap(), 3);
        assert!(phoneme_diversity(&["AA", "XX"], true).is_err());
        assert_eq!(phoneme_diversity(&["AA", "XX"], false).unwrap(), 2);
    }

    #[test]
    fn diversity_split_ranks_and_halves() {
        let items = vec![
            ("a".to_string(), 10),
            ("b".to_string(), 30),
            ("c".to_string(), 20),
            ("d".to_string(), 5),
        ];
        let (high, low) = split_by_diversity(&items);
        assert_eq!(high, vec!["b", "c"]);
        assert_eq!(low, vec!["a", "d"]);
    }

    #[test]
    fn transfer_matrix_row_averages() {
        let m = TransferMatrix {
            carrier_type: "noise".into(),
            surrogates: vec!["s0".into(), "s1".into()],
            targets: vec!["t0".into(), "t1".into()],
            rates: vec![0.1, 0.3, 0.2, 0.4],
        };
        assert_eq!(m.rate(1, 0), 0.2);
        let avg = m.row_averages();
        assert!((avg[0] - 0.2).abs() < 1e-12);
        assert!((avg[1] - 0.3).abs() < 1e-12);
    }
}
