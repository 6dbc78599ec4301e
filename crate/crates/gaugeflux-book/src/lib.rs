//! Doc-test harness for the guide in `book/src`.
//!
//! mdbook cannot link external crates when it tests code blocks, so each
//! chapter is attached to an empty module here and `cargo test --doc` runs
//! its snippets against the workspace build of `gaugeflux`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/matrices.md")]
pub mod matrices {}
#[doc = include_str!("../../../book/src/algebras.md")]
pub mod algebras {}
#[doc = include_str!("../../../book/src/fields.md")]
pub mod fields {}
#[doc = include_str!("../../../book/src/lagrangians.md")]
pub mod lagrangians {}
#[doc = include_str!("../../../book/src/gauge.md")]
pub mod gauge {}
#[doc = include_str!("../../../book/src/noether.md")]
pub mod noether {}
#[doc = include_str!("../../../book/src/oracles.md")]
pub mod oracles {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[cfg(test)]
mod tests {
    use std::path::Path;

    // every chapter listed in SUMMARY.md must be compiled above
    #[test]
    fn summary_chapters_are_included() {
        let book = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src");
        let summary = std::fs::read_to_string(book.join("SUMMARY.md")).unwrap();
        let lib = include_str!("lib.rs");
        for line in summary.lines() {
            let Some(start) = line.find("](") else { continue };
            let file = &line[start + 2..line.len() - 1];
            assert!(book.join(file).exists(), "{file} is missing");
            assert!(lib.contains(&format!("book/src/{file}\")")), "{file} is not doc-tested");
        }
    }
}
