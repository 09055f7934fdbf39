//! Behavior-sequence analytics for collaborative writing logs.
//!
//! Coded events are assembled into one sequence per author and stage
//! ([`ingest`]). Each collection of sequences is clustered twice: jointly with
//! pattern extraction ([`synopsis`]) and hierarchically over edit distances
//! ([`distance`], [`hicluster`]). The two partitions are reconciled into
//! agreed clusters and singletons ([`consensus`]), which seed an editable
//! [`session`]. Clusters are described by mined patterns ([`patterns`]),
//! transition profiles ([`insight`]) and generated summaries ([`summarize`]).
//!
//! ```
//! use penflow_core::ingest::{assemble_collections, parse_event_log, CollectionKey, LogFormat};
//! use penflow_core::insight::transition_profile;
//!
//! let log = "team_id,author_role,turn,event_category,activity_label,start_s,end_s\n\
//!            1,NNS,2,WordsmithCrosslingual,Using translators to write,0,42\n\
//!            1,NNS,2,Writing,On Google Docs,42,300\n";
//! let records = parse_event_log(log.as_bytes(), LogFormat::Csv).unwrap();
//! let collections = assemble_collections(&records).unwrap();
//! let seq = &collections.get("NNS-collaborative".parse::<CollectionKey>().unwrap()).sequences[0];
//! let profile = transition_profile(seq);
//! assert_eq!(profile.entries.len(), 1);
//! assert_eq!(profile.entries[0].frequency, 1.0);
//! ```

pub mod consensus;
pub mod distance;
pub mod hicluster;
pub mod ingest;
pub mod insight;
pub mod patterns;
pub mod session;
pub mod summarize;
pub mod synopsis;

use thiserror::Error;

/// Any error the engine can report, with a stable machine code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Distance(#[from] distance::DistanceError),
    #[error(transparent)]
    Cluster(#[from] hicluster::ClusterError),
    #[error(transparent)]
    Synopsis(#[from] synopsis::SynopsisError),
    #[error(transparent)]
    Pattern(#[from] patterns::PatternError),
    #[error(transparent)]
    Consensus(#[from] consensus::ConsensusError),
    #[error(transparent)]
    Summarize(#[from] summarize::SummarizeError),
    #[error(transparent)]
    Session(#[from] session::SessionError),
}

impl Error {
    pub fn code(&self) -> &'static str {
        use consensus::ConsensusError as C;
        use session::SessionError as S;
        use synopsis::SynopsisError as Y;
        match self {
            Error::Ingest(e) => e.code(),
            Error::Distance(distance::DistanceError::EmptyCollection) => "EmptyCollection",
            Error::Cluster(hicluster::ClusterError::EmptyMatrix) => "EmptyMatrix",
            Error::Cluster(hicluster::ClusterError::KOutOfRange { .. }) => "KOutOfRange",
            Error::Cluster(hicluster::ClusterError::InvalidPartition(_)) => "InvalidPartition",
            Error::Synopsis(e) | Error::Consensus(C::Synopsis(e)) | Error::Session(S::Consensus(C::Synopsis(e))) => {
                match e {
                    Y::EmptyCollection => "EmptyCollection",
                    Y::KOutOfRange { .. } => "KOutOfRange",
                    Y::InvalidAlpha(_) => "InvalidAlpha",
                }
            }
            Error::Pattern(patterns::PatternError::EmptyCluster) => "EmptyCluster",
            Error::Pattern(patterns::PatternError::InvalidSupport(_)) => "InvalidSupport",
            Error::Pattern(patterns::PatternError::NoPatterns) => "NoPatterns",
            Error::Consensus(e) | Error::Session(S::Consensus(e)) => match e {
                C::AuthorSetMismatch => "AuthorSetMismatch",
                C::KOutOfRange { .. } => "KOutOfRange",
                C::NTooSmall { .. } => "NTooSmall",
                C::EmptyCollection => "EmptyCollection",
                C::Synopsis(_) => unreachable!("matched above"),
            },
            Error::Summarize(summarize::SummarizeError::EmptyCluster) => "EmptyCluster",
            Error::Session(e) => match e {
                S::UnknownAuthor(_) => "UnknownAuthor",
                S::UnknownCluster(_) => "UnknownCluster",
                S::KOutOfRange { .. } => "KOutOfRange",
                S::EmptyName => "EmptyName",
                S::NothingToUndo => "NothingToUndo",
                S::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
                S::CorruptFile(_) => "CorruptFile",
                S::CollectionMismatch(_) => "CollectionMismatch",
                S::Consensus(_) => unreachable!("matched above"),
            },
        }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data-model.md")]
    mod data_model {}
    #[doc = include_str!("../../../book/src/edit-distance.md")]
    mod edit_distance {}
    #[doc = include_str!("../../../book/src/hierarchical.md")]
    mod hierarchical {}
    #[doc = include_str!("../../../book/src/synopsis.md")]
    mod synopsis {}
    #[doc = include_str!("../../../book/src/patterns.md")]
    mod patterns {}
    #[doc = include_str!("../../../book/src/consensus.md")]
    mod consensus {}
    #[doc = include_str!("../../../book/src/insights.md")]
    mod insights {}
    #[doc = include_str!("../../../book/src/summaries.md")]
    mod summaries {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    mod sessions {}
}
