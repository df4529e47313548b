//! Parse a LETOR file, normalize it, and write it back.
//!
//! cargo run --example letor_roundtrip [path.txt]

use std::io::BufReader;

use elimrank::dataset::{apply_normalization, fit_normalization, parse_letor};

const SAMPLE: &str = "\
# grade qid:<id> fid:value ...
2 qid:10 1:0.5 3:1.25
0 qid:10 2:-1
4 qid:10 1:3 2:0.5 3:0.75
1 qid:11 3:2 # trailing comment
3 qid:11 1:1 2:1
";

fn main() -> elimrank::Result<()> {
    let corpus = match std::env::args().nth(1) {
        Some(path) => parse_letor(BufReader::new(std::fs::File::open(path)?), None)?,
        None => parse_letor(SAMPLE.as_bytes(), None)?,
    };
    println!("{} queries, {} items, {} features", corpus.groups.len(), corpus.num_items(), corpus.feature_dim);

    let stats = fit_normalization(&corpus)?;
    print!("{}", stats.to_text());
    let normalized = apply_normalization(&corpus, &stats)?;
    print!("{}", normalized.to_letor());

    let reparsed = parse_letor(corpus.to_letor().as_bytes(), Some(corpus.feature_dim))?;
    assert_eq!(reparsed, corpus);
    println!("round trip ok");
    Ok(())
}
