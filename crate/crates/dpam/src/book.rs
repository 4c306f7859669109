//! The guide chapters under `book/` are included here as doc comments so
//! that `cargo test --doc` compiles and runs every Rust snippet in the book.
//! mdbook renders the same Markdown files, which keeps the two in sync by
//! construction.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
