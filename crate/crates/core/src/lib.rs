//! Narrative analogy toolkit.
//!
//! Covers the full desk-scale pipeline over a corpus of short fables:
//! the seven-dimension analogy annotation model ([`corpus`]), lexical and
//! semantic story similarity ([`textsim`]), hedonometric story arcs
//! ([`shapes`]), semantic-frame sequences ([`frames`]), analogical pair
//! generation ([`pairing`]), gradient-descent logistic classifiers
//! ([`learn`]) and evaluation statistics ([`metrics`]). The [`cli`] module
//! wires these into the `fabula` command-line tool.

pub mod cli;
pub mod corpus;
pub mod frames;
pub mod learn;
pub mod metrics;
pub mod pairing;
pub mod resources;
pub mod seed;
pub mod shapes;
pub mod textsim;

pub use corpus::{
    AnalogyDimension, EvidenceTriple, HedonometerLexicon, MoralTag, PairAnnotation, RatingSet,
    Story,
};
pub use frames::FrameSeq;
pub use learn::{LogisticModel, TrainConfig};
pub use pairing::{PairingMethod, StoryPair};
pub use shapes::{ArcProfile, ArcType, SegmentLevel};
