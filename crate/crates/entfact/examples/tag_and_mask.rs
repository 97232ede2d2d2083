//! Tokenize a summary, tag its entity mentions and mask one of them.
//!
//! ```sh
//! cargo run --example tag_and_mask
//! ```

use entfact::corpus::{extract_entities, mask_span, tokenize};

fn main() {
    let text = "Tian Tian visited Edinburgh Zoo on 15 December 2015, officials said.";
    let tokens = tokenize(text);
    println!("tokens: {tokens:?}");

    let mentions = extract_entities(&tokens);
    for mention in &mentions {
        println!(
            "entity {:>12?} at {}..{}",
            mention.surface,
            mention.start,
            mention.end()
        );
    }

    let masked = mask_span(&tokens, mentions[1].start, mentions[1].length).unwrap();
    println!("masked: {}", masked.join(" "));
}
