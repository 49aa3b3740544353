//! Multi-angle query generation and retriever fine-tuning for Q&A retrieval.
//!
//! Stored questions are rewritten into several query styles, each rewrite is
//! paired with its answer and a mined hard negative, and a hashed-feature
//! embedding model is fine-tuned on the triples. The tuned retriever feeds a
//! prompt for a generator, and both stages are scored.
//!
//! Module map, in pipeline order: [`corpus`], [`querygen`], [`augment`],
//! [`embedder`], [`trainer`], [`retriever`], [`metrics`], [`ragpipe`],
//! [`pipeline`].

pub mod client;
pub mod corpus;
pub mod embedder;
pub mod jsonl;
pub mod querygen;
pub mod rng;
pub mod augment;
pub mod trainer;
pub mod retriever;
pub mod metrics;
pub mod ragpipe;
pub mod pipeline;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/corpus.md")]
mod book_corpus {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/querygen.md")]
mod book_querygen {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/augment.md")]
mod book_augment {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/embedder.md")]
mod book_embedder {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/training.md")]
mod book_training {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/retrieval.md")]
mod book_retrieval {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
mod book_metrics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/rag.md")]
mod book_rag {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pipeline.md")]
mod book_pipeline {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
