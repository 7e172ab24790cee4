//! Staged experiment pipeline.
