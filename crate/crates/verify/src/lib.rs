//! Acceptance runner only; see `tests/acceptance.rs`.
