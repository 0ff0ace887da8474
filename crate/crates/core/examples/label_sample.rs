//! Labels the bundled four-sentence sample and prints the records and
//! metrics: `cargo run --example label_sample`.

use gml_core::engine::{run, EngineConfig};
use gml_core::sample::{sample_corpus, sample_resources};

fn main() -> gml_core::Result<()> {
    let corpus = sample_corpus();
    let result = run(&corpus, &sample_resources(), &EngineConfig::default())?;
    print!("{}", result.to_jsonl());
    println!("{:#}", result.metrics_json(&corpus)?);
    Ok(())
}
