#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rdloop::cli::config::{self, LoadedConfig};

pub fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

pub fn load(name: &str) -> LoadedConfig {
    config::load(&config_dir().join(format!("{name}.toml")))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every shipped scenario (the `invalid/` directory excluded).
pub fn shipped() -> Vec<(String, LoadedConfig)> {
    let mut names: Vec<String> = std::fs::read_dir(config_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "toml")
                .then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), load(&n))).collect()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rdloop")
}

/// Print the acceptance line and return whether it passed.
pub fn report(criterion: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!(
        "{} {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
