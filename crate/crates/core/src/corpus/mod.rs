//! Corpus ingestion: JSON-lines loading, tokenization and vocabulary
//! construction, uniform time chunking, and co-author graphs.

mod chunk;
mod coauthor;
mod ingest;
mod preprocess;

pub use chunk::{chunk_by_time, chunk_by_time_with_margin, Chunk, ChunkLength, ChunkedCorpus, TimeInterval};
pub use coauthor::{build_coauthor_graph, Authored, CoAuthorGraph};
pub use ingest::{ingest, normalize_author, parse_date, read_records, Document, IngestReport, Schema};
pub use preprocess::{
    load_stopwords, parse_stopwords, preprocess, tokenize, PreprocessConfig, PreprocessReport, TokenizedDoc,
    Vocabulary, ENGLISH_STOPWORDS,
};
