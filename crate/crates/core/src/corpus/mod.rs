//! Graph ingestion, vocabulary, padding and train/test splits.

mod graph;
mod split;
mod vocab;

pub use graph::{
    adjacency, degrees_of, load_graph, save_graph, tokenize, undirected, TOKENIZATION, LoadedGraph, NodeId,
    TextualGraph,
};
pub use split::{split_edges, split_nodes_unseen, EdgeSplit, NodeSplit};
pub use vocab::{
    build_vocab, encode_graph, pad_and_mask, PaddedText, TokenId, Vocabulary, PAD_ID, PAD_TOKEN,
};
