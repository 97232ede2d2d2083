//! Annotator-agreement statistics over a vote matrix: Fleiss' kappa and
//! the mean majority-vote fraction mu.
//!
//! ```sh
//! cargo run --example annotator_agreement
//! ```

use entfact::metrics::{fleiss_kappa, majority_mu, AgreementMatrix};

fn main() {
    // Five annotators labeling entities with one of four statuses; each
    // row is one entity, each column a status.
    let votes = vec![
        vec![5, 0, 0, 0],
        vec![4, 1, 0, 0],
        vec![0, 5, 0, 0],
        vec![0, 4, 1, 0],
        vec![0, 1, 4, 0],
        vec![5, 0, 0, 0],
        vec![0, 0, 5, 0],
        vec![4, 0, 0, 1],
        vec![0, 0, 1, 4],
        vec![5, 0, 0, 0],
    ];
    let matrix = AgreementMatrix::new(votes, 5).unwrap();
    println!(
        "items: {}, annotators per item: {}",
        matrix.counts.len(),
        matrix.annotators
    );
    println!("fleiss kappa: {:.3}", fleiss_kappa(&matrix));
    println!("majority mu:  {:.3}", majority_mu(&matrix));

    let unanimous = AgreementMatrix::new(vec![vec![5, 0], vec![0, 5], vec![5, 0]], 5).unwrap();
    println!(
        "unanimous panel: kappa {:.1}, mu {:.1}",
        fleiss_kappa(&unanimous),
        majority_mu(&unanimous)
    );
}
