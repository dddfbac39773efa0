// SPDX-License-Identifier: MIT OR Apache-2.0

use clap::Parser;
use idiom_circuits::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let record = serde_json::json!({
            "error": { "kind": e.kind(), "message": e.to_string() }
        });
        eprintln!("{}", record);
        std::process::exit(1);
    }
}
