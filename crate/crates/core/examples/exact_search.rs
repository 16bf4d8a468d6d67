//! Builds a brute-force index over the source documents with an untrained
//! encoder, runs a few queries and mines hard negatives for them.

use modir::encoder::{Activation, Encoder};
use modir::numerics::{Rng, Stream};
use modir::retrieval::{build_index, mine_hard_negatives, top_k};
use modir::synthdata::{generate, Collection, GenConfig};

fn main() -> modir::Result<()> {
    let (source, _) = generate(&GenConfig::default())?;
    let enc = Encoder::init(&[32, 64, 32], Activation::Tanh, &mut Rng::new(3, Stream::Init))?;
    let index = build_index(&enc, &[&source], 0)?;
    println!("indexed {} documents", index.len());

    for q in source.queries().iter().take(3) {
        let relevant = &source.qrels()[&q.id];
        let hits = top_k(&index, &enc.embed(&q.vector), 5);
        println!("\n{} ({} relevant docs)", q.id, relevant.len());
        for h in hits {
            let mark = if relevant.contains(&h.doc_id) { "relevant" } else { "" };
            println!("  {}  {:+.4}  {mark}", h.doc_id, h.score);
        }
    }

    let queries: Vec<_> = source.queries().iter().take(3).cloned().collect();
    let mined = mine_hard_negatives(&index, &enc, &queries, source.qrels(), 4, &mut Rng::new(3, Stream::Train))?;
    println!();
    for (qid, negs) in mined {
        println!("hard negatives for {qid}: {}", negs.join(", "));
    }
    Ok(())
}
