//! On-the-fly Siamese pair construction.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use rand::Rng;

use super::augment::augment;
use super::config::MetricTrainConfig;
use super::loss::{PairLabel, DISSIMILAR, SIMILAR};
use crate::code::GardinerCode;
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::raster::GlyphImage;

#[derive(Debug, Clone)]
pub struct PairSample {
    pub image_a: GlyphImage,
    pub image_b: GlyphImage,
    pub label: PairLabel,
    /// Indices of the source samples in the dataset passed to [`sample_pairs`].
    pub source: (usize, usize),
}

/// Draws `count` pairs. Each pair is positive with probability
/// `positive_fraction`; classes are drawn uniformly (not by frequency) so
/// rare signs take part as often as common ones. Positive pairs use two
/// distinct samples of a class with at least two samples.
///
/// With `augmentation` set, both images go through [`augment`].
pub fn sample_pairs<S, R>(
    dataset: &[S],
    count: usize,
    positive_fraction: f64,
    augmentation: Option<&MetricTrainConfig>,
    rng: &mut R,
) -> Result<Vec<PairSample>>
where
    S: Borrow<LabeledSample>,
    R: Rng,
{
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::Config(format!("positive fraction {positive_fraction} outside [0, 1]")));
    }
    let mut by_class: BTreeMap<&GardinerCode, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        by_class.entry(&s.borrow().code).or_default().push(i);
    }
    let classes: Vec<&Vec<usize>> = by_class.values().collect();
    let anchors: Vec<&Vec<usize>> = classes.iter().copied().filter(|v| v.len() >= 2).collect();
    if positive_fraction < 1.0 && classes.len() < 2 {
        return Err(Error::InvalidInput(
            "negative pairs need at least two classes".into(),
        ));
    }
    if positive_fraction > 0.0 && anchors.is_empty() {
        return Err(Error::InvalidInput(
            "positive pairs need a class with at least two samples".into(),
        ));
    }

    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let positive = rng.random_bool(positive_fraction);
        let (a, b, label) = if positive {
            let members = anchors[rng.random_range(0..anchors.len())];
            let i = rng.random_range(0..members.len());
            let mut j = rng.random_range(0..members.len() - 1);
            if j >= i {
                j += 1;
            }
            (members[i], members[j], SIMILAR)
        } else {
            let ca = rng.random_range(0..classes.len());
            let mut cb = rng.random_range(0..classes.len() - 1);
            if cb >= ca {
                cb += 1;
            }
            let pick = |c: &Vec<usize>, rng: &mut R| c[rng.random_range(0..c.len())];
            (pick(classes[ca], rng), pick(classes[cb], rng), DISSIMILAR)
        };
        let (img_a, img_b) = (&dataset[a].borrow().image, &dataset[b].borrow().image);
        let (image_a, image_b) = match augmentation {
            Some(cfg) => (augment(img_a, cfg, rng), augment(img_b, cfg, rng)),
            None => (img_a.clone(), img_b.clone()),
        };
        pairs.push(PairSample {
            image_a,
            image_b,
            label,
            source: (a, b),
        });
    }
    Ok(pairs)
}
