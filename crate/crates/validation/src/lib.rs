//! Hosts the `acceptance` test target. Run it with
//! `cargo test -p gdsr-validation --test acceptance`.
