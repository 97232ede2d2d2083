//! Convert span-level summary annotations (hallucinated spans plus an
//! overall factuality verdict) into entity-level labels.
//!
//! ```sh
//! cargo run --example ment_conversion
//! ```

use entfact::corpus::{
    convert_ment, tokenize, Dataset, DatasetRecord, Document, MentSpanAnnotation, SummaryKind,
    SummaryRecord,
};

fn main() {
    let docs = Dataset::new(vec![DatasetRecord::new(
        Document::new(
            "d0",
            tokenize("The panther chameleon was found at Marl Park and put down"),
        )
        .unwrap(),
        SummaryRecord::new("d0", vec![], SummaryKind::Reference, vec![]).unwrap(),
    )])
    .unwrap();

    let annotations = [
        // Factual summary: the span is hallucinated but world-consistent.
        MentSpanAnnotation {
            doc_id: "d0".into(),
            summary_tokens: tokenize("a chameleon found in Cardiff was put down"),
            extrinsic_spans: vec![(2, 3)],
            summary_factual: true,
        },
        // Non-factual summary, fully spanned: one in-span entity is
        // absent from the source, the other occurs in it.
        MentSpanAnnotation {
            doc_id: "d0".into(),
            summary_tokens: tokenize("the Waverley chameleon escaped from Marl Park"),
            extrinsic_spans: vec![(0, 7)],
            summary_factual: false,
        },
    ];

    // Iterating one annotation at a time keeps doc ids unique.
    for (i, annotation) in annotations.iter().enumerate() {
        let converted = convert_ment(std::slice::from_ref(annotation), &docs).unwrap();
        println!("annotation {i} ({}):", annotation.summary_tokens.join(" "));
        for entity in &converted.records[0].summary.entities {
            println!(
                "  {:?} -> {}",
                entity.surface,
                entity.label.unwrap().as_str()
            );
        }
        if converted.records[0].summary.entities.is_empty() {
            println!("  (all candidates dropped or none found)");
        }
    }
    println!("note: \"Marl Park\" inside the second span is dropped — it occurs in the source.");
}
