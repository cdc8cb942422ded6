//! Holds the `acceptance` test target. Run it with
//! `cargo test --release -p lassoprune-validation --test acceptance`.
