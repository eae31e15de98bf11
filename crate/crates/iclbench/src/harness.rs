//! Run pipelines. (placeholder)
