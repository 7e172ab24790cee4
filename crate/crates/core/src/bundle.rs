//! Versioned serialization of measure/corrector/effective bundles.
