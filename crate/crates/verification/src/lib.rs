//! Holds the `acceptance` test target, which trains and scores models on the
//! full golden cohort. It lives in its own package so that it runs after
//! every other test suite in the workspace.
