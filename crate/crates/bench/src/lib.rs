//! Shared fixtures for the benchmarks.

use textgap::corpus::{DocumentSet, GroupLabels};
use textgap::embedreg::{self, ContextObservation, EmbedConfig, EmbeddingTable};
use textgap::synth::{self, SynthSpec};

pub struct Fixture {
    pub docs: DocumentSet,
    pub groups: GroupLabels,
    pub table: EmbeddingTable,
}

/// Synthetic corpus with one document per author.
pub fn fixture(authors_per_group: usize, dim: usize, seed: u64) -> Fixture {
    let spec = SynthSpec::new(authors_per_group, 0.25, seed);
    let (docs, authors) = synth::generate_corpus(&spec).expect("valid spec");
    let table = synth::spec_embeddings(&spec, dim, 0.3, seed + 1).expect("dim > 0");
    Fixture {
        docs,
        groups: authors.binary_groups("party", ["dem", "rep"]),
        table,
    }
}

pub fn observations(f: &Fixture) -> Vec<ContextObservation> {
    embedreg::prepare_observations(&f.docs, &f.groups, "kids", &f.table, &EmbedConfig::default())
        .expect("prepared")
        .observations
}
