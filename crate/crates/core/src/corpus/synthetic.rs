//! Synthetic corpora with planted ordinal structure.
//!
//! Each candidate of rank `r` carries marker words drawn from a pool that is
//! specific to `r`, plus `2r` words copied from its prompt and some shared
//! filler. Markers make the ranks linearly separable in bag-of-words space;
//! the copied prompt words make prompt/paper similarity grow with rank.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{CandidatePaper, Category, Instance};
use crate::seeds::{self, Stream};

const TOPIC_VOCAB: usize = 240;
const FILLER_VOCAB: usize = 400;
const MARKERS_PER_RANK: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub instances: usize,
    pub seed: u64,
    /// Marker words per candidate abstract.
    pub markers: usize,
    /// Filler words per candidate abstract.
    pub filler: usize,
}

impl PlantedSpec {
    pub fn new(instances: usize, seed: u64) -> Self {
        PlantedSpec {
            instances,
            seed,
            markers: 4,
            filler: 12,
        }
    }
}

fn topic_word(i: usize) -> String {
    format!("topic{i}")
}

fn filler_word(i: usize) -> String {
    format!("lex{i}")
}

fn marker_word(rank: u8, i: usize) -> String {
    format!("grade{rank}cue{i}")
}

fn pick<R: Rng>(rng: &mut R, vocab: usize, count: usize, make: impl Fn(usize) -> String) -> Vec<String> {
    (0..count).map(|_| make(rng.random_range(0..vocab))).collect()
}

/// Generates `spec.instances` valid instances with ids `syn-00000`, `syn-00001`, ...
pub fn planted_instances(spec: &PlantedSpec) -> Vec<Instance> {
    (0..spec.instances)
        .map(|i| {
            let mut rng = seeds::rng(spec.seed, Stream::Synthetic, i as u64);
            let topic: Vec<String> = pick(&mut rng, TOPIC_VOCAB, 8, topic_word);
            let prompt = format!("Write a systematic survey about {}", topic.join(" "));
            let candidates = Category::ALL.map(|cat| {
                let rank = cat.rank().value();
                let markers: Vec<String> = (0..spec.markers)
                    .map(|_| marker_word(rank, rng.random_range(0..MARKERS_PER_RANK)))
                    .collect();
                let copied: Vec<String> = topic.choose_multiple(&mut rng, 2 * rank as usize).cloned().collect();
                let filler = pick(&mut rng, FILLER_VOCAB, spec.filler, filler_word);
                let title = format!(
                    "{} {} {}",
                    markers[0],
                    filler_word(rng.random_range(0..FILLER_VOCAB)),
                    filler_word(rng.random_range(0..FILLER_VOCAB))
                );
                let abstract_text = markers
                    .iter()
                    .chain(&copied)
                    .chain(&filler)
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(" ");
                let related_work = pick(&mut rng, FILLER_VOCAB, 6, filler_word).join(" ");
                CandidatePaper::new(title, abstract_text, related_work)
            });
            Instance::new(format!("syn-{i:05}"), prompt, candidates).expect("generated instances are valid")
        })
        .collect()
}
