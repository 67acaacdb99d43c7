//! Writes every shipped fixture to `<dir>/<name>/` as the four JSON
//! files the command line tool consumes. Default directory: `fixtures`.

use std::path::Path;

use hisa_core::fixtures;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let dir = Path::new(&dir);
    for f in [
        fixtures::lenet_small(),
        fixtures::conv_heavy(),
        fixtures::fc_heavy(),
        fixtures::activation_chain(),
        fixtures::passthrough(),
    ] {
        let root = fixtures::write_files(&f, dir).expect("write fixture files");
        println!("{}", root.display());
    }
}
