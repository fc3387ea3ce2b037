//! Pipeline orchestration for the `lpa` command-line tool.
