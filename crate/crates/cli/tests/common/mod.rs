#![allow(dead_code)]

use std::path::Path;

use leafsift_core::imaging::write_ppm;
use leafsift_core::synth::leaf;

pub const FIXTURE_CLASSES: [&str; 3] = ["early_blight", "healthy", "leaf_mold"];

/// `root/<class>/leaf_NN.ppm`, `per_class` images per class.
pub fn write_leaf_dataset(root: &Path, per_class: usize, side: usize) {
    for (c, name) in FIXTURE_CLASSES.iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let img = leaf(side, side, c, 100 + i as u64);
            write_ppm(dir.join(format!("leaf_{i:02}.ppm")), &img).unwrap();
        }
    }
}

/// Runs the CLI in-process, returning (status, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<String> = std::iter::once("leafsift").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = leafsift_cli::run(&argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
