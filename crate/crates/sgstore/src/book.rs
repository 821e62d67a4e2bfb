//! Doc-test carriers for the guide in `book/`.
//!
//! Each chapter is included as a doc comment, so every fenced Rust block in
//! the book compiles and runs under `cargo test --doc`. The book cannot
//! drift from the library.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro_chapter {}

#[doc = include_str!("../../../book/src/store.md")]
pub mod store_chapter {}

#[doc = include_str!("../../../book/src/keys.md")]
pub mod keys_chapter {}

#[doc = include_str!("../../../book/src/laziness.md")]
pub mod laziness_chapter {}

#[doc = include_str!("../../../book/src/access-control.md")]
pub mod access_control_chapter {}

#[doc = include_str!("../../../book/src/links.md")]
pub mod links_chapter {}

#[doc = include_str!("../../../book/src/persistence.md")]
pub mod persistence_chapter {}

#[doc = include_str!("../../../book/src/classid.md")]
pub mod classid_chapter {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline_chapter {}
