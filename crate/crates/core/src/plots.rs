//! SVG plot emission.
