//! Acceptance criteria for `lplab`; run with `cargo test -p lplab-validation --test acceptance`.
