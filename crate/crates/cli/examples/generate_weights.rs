//! Writes a seeded random weight container for a built-in architecture.
//!
//!     cargo run -p convfactor-cli --example generate_weights -- l2net 42 weights.cdpw

use convfactor::WeightStore;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 4 {
        eprintln!("usage: generate_weights <l2net|superpoint> <seed> <out-file>");
        std::process::exit(2);
    }
    let arch = match args[1].as_str() {
        "l2net" => convfactor::l2net(),
        "superpoint" => convfactor::superpoint(),
        other => {
            eprintln!("unknown architecture {other}");
            std::process::exit(2);
        }
    };
    let seed: u64 = args[2].parse().expect("seed is a u64");
    let store = WeightStore::generate(&arch, seed).expect("valid architecture");
    std::fs::write(&args[3], store.to_bytes()).expect("writable output path");
    println!(
        "wrote {} tensors for {} to {}",
        store.len(),
        arch.name,
        args[3]
    );
}
