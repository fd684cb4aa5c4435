//! Unsupervised sentiment knowledge mining.
//!
//! Word polarity comes from PMI against a small seed list; aspect-sentiment
//! pairs join each sentiment word with its nearest noun within three tokens.
//! The ADJ/ADV candidate filter approximates the usual adjective/adverb
//! phrase patterns and is not an exact reproduction of any published list.

mod lexicon;
mod seeds;
mod stats;

pub use lexicon::{
    mine_lexicon, mine_pairs, nearest_noun, Exclusion, LexEntry, MinerConfig, MiningReport, SentimentLexicon,
    SEED_SCORE,
};
pub use seeds::{Polarity, SeedSet};
pub use stats::{collect_stats, collect_stats_sharded, pmi, word_polarity, CooccurrenceStats, Smoothing};
