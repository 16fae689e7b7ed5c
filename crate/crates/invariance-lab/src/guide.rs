//! The long-form guide, mirrored verbatim from `book/src/` (the mdbook
//! sources). Including the chapters here makes every code block in the book
//! a doc-test, so the book cannot drift from the API.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/families.md")]
pub mod families {}

#[doc = include_str!("../../../book/src/criteria.md")]
pub mod criteria {}

#[doc = include_str!("../../../book/src/realization.md")]
pub mod realization {}

#[doc = include_str!("../../../book/src/estimators.md")]
pub mod estimators {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
