use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Patch;
use crate::error::{ensure, Error, Result};
use crate::nn::NetworkWeights;

/// Per-pixel variance below which a patch counts as textureless.
pub const ZNCC_MIN_VARIANCE: f64 = 1e-12;

/// Measure selector. Every measure is reported higher-is-better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "sad")]
    Sad,
    #[serde(rename = "zncc")]
    Zncc,
    #[serde(rename = "learned2")]
    LearnedPairwise,
    #[serde(rename = "learnedN")]
    LearnedMulti,
}

impl MeasureKind {
    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Sad => "sad",
            MeasureKind::Zncc => "zncc",
            MeasureKind::LearnedPairwise => "learned2",
            MeasureKind::LearnedMulti => "learnedN",
        }
    }

    /// Scores are negated dissimilarities (SAD) or similarities; after that
    /// normalization all measures are max-oriented.
    pub fn higher_is_better(self) -> bool {
        true
    }

    pub fn is_learned(self) -> bool {
        matches!(self, MeasureKind::LearnedPairwise | MeasureKind::LearnedMulti)
    }

    /// Score assigned when a patch cannot be evaluated.
    pub fn worst_score(self) -> f64 {
        match self {
            MeasureKind::Sad | MeasureKind::Zncc => -1.0,
            MeasureKind::LearnedPairwise | MeasureKind::LearnedMulti => 0.0,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sad" => Ok(MeasureKind::Sad),
            "zncc" => Ok(MeasureKind::Zncc),
            "learned2" => Ok(MeasureKind::LearnedPairwise),
            "learnedN" | "learnedn" => Ok(MeasureKind::LearnedMulti),
            other => Err(Error::InvalidArgument(format!(
                "unknown measure {other:?} (expected sad, zncc, learned2 or learnedN)"
            ))),
        }
    }
}

/// Reduction of reference-to-partner scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Consensus {
    #[default]
    Mean,
    Median,
}

impl FromStr for Consensus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Consensus::Mean),
            "median" => Ok(Consensus::Median),
            other => Err(Error::InvalidArgument(format!("unknown consensus {other:?} (expected mean or median)"))),
        }
    }
}

fn check_sides(a: &Patch, b: &Patch) -> Result<()> {
    ensure!(
        a.side() == b.side(),
        Shape,
        "patch sides differ: {} vs {}",
        a.side(),
        b.side()
    );
    Ok(())
}

fn joint<'a>(a: &'a Patch, b: &'a Patch) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.data()
        .iter()
        .zip(b.data())
        .zip(a.mask().iter().zip(b.mask()))
        .filter(|(_, (&ma, &mb))| ma && mb)
        .map(|((&x, &y), _)| (x as f64, y as f64))
}

/// Negated mean absolute difference over jointly valid pixels.
pub fn sad(a: &Patch, b: &Patch) -> Result<f64> {
    check_sides(a, b)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (x, y) in joint(a, b) {
        sum += (x - y).abs();
        count += 1;
    }
    if count == 0 {
        return Ok(MeasureKind::Sad.worst_score());
    }
    Ok(-sum / count as f64)
}

/// Pearson correlation over jointly valid pixels; 0 if either side is flat.
pub fn zncc(a: &Patch, b: &Patch) -> Result<f64> {
    check_sides(a, b)?;
    let pairs: Vec<(f64, f64)> = joint(a, b).collect();
    if pairs.is_empty() {
        return Ok(MeasureKind::Zncc.worst_score());
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    Ok(zncc_from_moments(saa / n, sbb / n, sab / n))
}

/// Correlation from per-pixel (co)variances, shared with the sweep fast path.
#[inline]
pub(crate) fn zncc_from_moments(var_a: f64, var_b: f64, cov: f64) -> f64 {
    if var_a < ZNCC_MIN_VARIANCE || var_b < ZNCC_MIN_VARIANCE {
        return 0.0;
    }
    (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
}

/// Combine the scores of the reference against each partner.
pub fn pairwise_consensus(scores: &[f64], mode: Consensus) -> Result<f64> {
    ensure!(!scores.is_empty(), InvalidArgument, "consensus needs at least one partner score");
    ensure!(
        scores.iter().all(|s| s.is_finite()),
        InvalidArgument,
        "consensus scores must be finite"
    );
    Ok(match mode {
        Consensus::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        Consensus::Median => {
            let mut s = scores.to_vec();
            s.sort_by(f64::total_cmp);
            let m = s.len() / 2;
            if s.len() % 2 == 1 {
                s[m]
            } else {
                0.5 * (s[m - 1] + s[m])
            }
        }
    })
}

/// Learned n-way similarity of complete (fully valid) patches.
pub fn learned_multi(patches: &[Patch], weights: &NetworkWeights<f32>) -> Result<f64> {
    ensure!(patches.len() >= 2, InvalidArgument, "learned similarity needs at least two patches");
    ensure!(
        patches.iter().all(Patch::all_valid),
        InvalidArgument,
        "learned similarity requires fully valid patches"
    );
    let tensors: Vec<_> = patches.iter().map(Patch::to_tensor).collect();
    let scores = weights.similarity_forward(&tensors)?;
    ensure!(
        scores.len() == 1,
        Shape,
        "patches of side {} give {} scores; use the sweep for tiles",
        patches[0].side(),
        scores.len()
    );
    Ok(scores.data()[0] as f64)
}

/// Two-view learned scores of the reference against each partner, then consensus.
pub fn learned_pairwise(reference: &Patch, partners: &[Patch], weights: &NetworkWeights<f32>, mode: Consensus) -> Result<f64> {
    let scores = partners
        .iter()
        .map(|p| learned_multi(&[reference.clone(), p.clone()], weights))
        .collect::<Result<Vec<_>>>()?;
    pairwise_consensus(&scores, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(side: usize, v: &[f32]) -> Patch {
        Patch::new(side, v.to_vec()).unwrap()
    }

    #[test]
    fn sad_examples() {
        let a = patch(2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(sad(&a, &a).unwrap(), 0.0);
        let zeros = patch(3, &[0.0; 9]);
        let ones = patch(3, &[1.0; 9]);
        assert_eq!(sad(&zeros, &ones).unwrap(), -1.0);
        assert!(sad(&zeros, &a).is_err());
    }

    #[test]
    fn sad_masks_jointly() {
        let a = Patch::with_mask(1, vec![0.0], vec![false]).unwrap();
        let b = patch(1, &[0.5]);
        assert_eq!(sad(&a, &b).unwrap(), MeasureKind::Sad.worst_score());
        let a = Patch::with_mask(2, vec![0.0, 0.0, 9.0, 9.0], vec![true, true, false, false]).unwrap();
        let b = patch(2, &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(sad(&a, &b).unwrap(), -0.5);
    }

    #[test]
    fn zncc_examples() {
        let a = patch(2, &[0.1, 0.3, 0.2, 0.4]);
        let gain = patch(2, &a.data().iter().map(|v| 2.0 * v + 0.1).collect::<Vec<_>>());
        assert!((zncc(&a, &gain).unwrap() - 1.0).abs() < 1e-9);
        let neg = patch(2, &a.data().iter().map(|v| 0.5 - v).collect::<Vec<_>>());
        assert!((zncc(&a, &neg).unwrap() + 1.0).abs() < 1e-9);
        let flat = patch(2, &[0.5; 4]);
        assert_eq!(zncc(&a, &flat).unwrap(), 0.0);
    }

    #[test]
    fn zncc_closed_form() {
        // a = [1,2,3,4], b = [1,2,3,5]: means 2.5 and 2.75,
        // cov = 6.5/4, var_a = 5/4, var_b = 8.75/4.
        let a = patch(2, &[1.0, 2.0, 3.0, 4.0]);
        let b = patch(2, &[1.0, 2.0, 3.0, 5.0]);
        let expected = 6.5 / (5.0f64 * 8.75).sqrt();
        assert!((zncc(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn consensus() {
        assert_eq!(pairwise_consensus(&[0.3; 4], Consensus::Mean).unwrap(), 0.3);
        assert_eq!(pairwise_consensus(&[0.1, 0.9, 0.5, 0.2], Consensus::Median).unwrap(), 0.35);
        assert!(pairwise_consensus(&[], Consensus::Mean).is_err());
        assert!(pairwise_consensus(&[f64::NAN], Consensus::Mean).is_err());
    }

    #[test]
    fn measure_names_round_trip() {
        for k in [MeasureKind::Sad, MeasureKind::Zncc, MeasureKind::LearnedPairwise, MeasureKind::LearnedMulti] {
            assert_eq!(k.name().parse::<MeasureKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("ncc".parse::<MeasureKind>().is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Patch, Patch)> {
        (1usize..6).prop_flat_map(|s| {
            let n = s * s;
            (
                prop::collection::vec(0.0f32..1.0, n),
                prop::collection::vec(0.0f32..1.0, n),
                prop::collection::vec(prop::bool::weighted(0.9), n),
            )
                .prop_map(move |(a, b, m)| (Patch::with_mask(s, a, m).unwrap(), Patch::new(s, b).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn symmetric((a, b) in arb_pair()) {
            prop_assert_eq!(sad(&a, &b).unwrap(), sad(&b, &a).unwrap());
            prop_assert_eq!(zncc(&a, &b).unwrap(), zncc(&b, &a).unwrap());
        }

        #[test]
        fn zncc_gain_invariance(v in prop::collection::vec(0.2f32..0.6, 16), alpha in 0.5f32..1.5, beta in -0.1f32..0.1) {
            let a = Patch::new(4, v.clone()).unwrap();
            let b = Patch::new(4, v.iter().map(|x| alpha * x + beta).collect()).unwrap();
            let var = {
                let m = v.iter().map(|&x| x as f64).sum::<f64>() / 16.0;
                v.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / 16.0
            };
            prop_assume!(var > 1e-6);
            prop_assert!((zncc(&a, &b).unwrap() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn consensus_permutation(mut s in prop::collection::vec(-1.0f64..1.0, 1..8), seed in any::<u64>()) {
            let m = pairwise_consensus(&s, Consensus::Median).unwrap();
            let mean = pairwise_consensus(&s, Consensus::Mean).unwrap();
            let k = (seed as usize) % s.len();
            s.rotate_left(k);
            prop_assert_eq!(pairwise_consensus(&s, Consensus::Median).unwrap(), m);
            prop_assert!((pairwise_consensus(&s, Consensus::Mean).unwrap() - mean).abs() < 1e-12);
        }
    }
}
