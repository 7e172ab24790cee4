//! JSON experiment configuration.
