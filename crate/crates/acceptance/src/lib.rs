//! Holds the `acceptance` test target (`cargo test -p lcsvr-verification`),
//! which prints one PASS/FAIL line per acceptance criterion.
