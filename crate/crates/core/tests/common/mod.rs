#![allow(dead_code)]

use std::path::PathBuf;

pub mod oracle;

use tamilnist::fontrender::{FontEntry, FontRegistry};

pub fn fonts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fonts")
}

pub fn testing_font(name: &str) -> PathBuf {
    fonts_dir().join("testing").join(name)
}

pub fn registry() -> FontRegistry {
    FontRegistry::load_dir(fonts_dir()).expect("bundled fonts load")
}

pub fn font(id: &str) -> FontEntry {
    registry().get(id).cloned().expect("bundled font")
}
