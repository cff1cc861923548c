use crate::corpus::{Corpus, Vocabulary};
use crate::diffkit::DiffError;
use crate::ekg::{extract_local_ekg, GlobalEKG, LocalEKG};
use crate::embed::{materialize_embeddings, EkgEmbeddings};

/// A passage, its materialized local graph and its reference comments.
#[derive(Clone, Debug)]
pub struct G2sExample {
    pub passage_id: String,
    /// Token ids, truncated to the passage limit from the start.
    pub passage: Vec<usize>,
    pub local: LocalEKG,
    /// Token ids without BOS or EOS.
    pub comments: Vec<Vec<usize>>,
}

pub fn build_examples(
    corpus: &Corpus,
    ekg: &GlobalEKG,
    embeddings: &EkgEmbeddings,
    vocab: &Vocabulary,
    k: usize,
    max_passage_len: usize,
    max_comment_len: usize,
) -> Result<Vec<G2sExample>, DiffError> {
    corpus
        .passages
        .iter()
        .map(|p| {
            let mut local = extract_local_ekg(ekg, p, k);
            materialize_embeddings(&embeddings.store, &embeddings.table, &embeddings.rn, &mut local)?;
            let mut passage = vocab.encode(&p.text);
            passage.truncate(max_passage_len);
            let comments = p
                .comments
                .iter()
                .map(|c| {
                    let mut ids = vocab.encode(&c.text);
                    ids.truncate(max_comment_len);
                    ids
                })
                .collect();
            Ok(G2sExample {
                passage_id: p.id.clone(),
                passage,
                local,
                comments,
            })
        })
        .collect()
}
