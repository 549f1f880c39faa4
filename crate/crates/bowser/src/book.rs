//! Book chapters are included as doc-tests once written.
