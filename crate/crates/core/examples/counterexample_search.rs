//! Scans small one-mark trees for comparison failures under a generator that
//! violates (Aγ) and prints the instance with the largest margin.

use levy_bsde::experiments::{search_counterexample, SearchGrid};

fn main() -> levy_bsde::Result<()> {
    let grid = SearchGrid::default();
    match search_counterexample(&grid)? {
        Some(best) => println!("{}", serde_json::to_string_pretty(&best).expect("serializable")),
        None => println!("no violating instance on the grid"),
    }
    Ok(())
}
