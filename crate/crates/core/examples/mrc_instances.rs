//! Lays a sentence and a demonstration out as a reading-comprehension
//! instance and prints each position's role and labels.
//!
//! ```sh
//! cargo run --example mrc_instances
//! ```

use grape_ner::corpus::{parse_conll_str, LabelSet};
use grape_ner::demos::{select_grape, DensityConfig};
use grape_ner::spanconv::{assemble_instance, iob2_to_spans, AssembleOptions};

const TRAIN: &str = "\
Cisplatin\tB-Chemical
and\tO
carboplatin\tB-Chemical
were\tO
compared\tO
.\tO

Patients\tO
received\tO
aspirin\tB-Chemical
.\tO
";

const QUERY: &str = "\
Serum\tO
sodium\tB-Chemical
chloride\tI-Chemical
rose\tO
.\tO
";

fn main() -> grape_ner::Result<()> {
    let labels = LabelSet::new(["Chemical"]);
    let train = parse_conll_str(TRAIN, "train", &labels)?.sentences;
    let query = &parse_conll_str(QUERY, "test", &labels)?.sentences[0];
    let demo = select_grape(&train, "Chemical", &DensityConfig::default());
    println!("demonstration: {} (density {:.3})", demo.sentence.as_ref().map_or("-".into(), |s| s.text()), demo.score);
    println!("gold spans: {:?}", iob2_to_spans(query));

    let inst = assemble_instance(query, Some(&demo), "Chemical", AssembleOptions::default())?;
    println!("\npos\ttoken\trole\tstart\tend");
    for i in 0..inst.len() {
        println!("{i}\t{}\t{:?}\t{}\t{}", inst.tokens[i], inst.roles[i], inst.y_start[i], inst.y_end[i]);
    }
    println!("context offset {}", inst.context_offset);
    Ok(())
}
