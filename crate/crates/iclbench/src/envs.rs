//! Built-in environments. (placeholder)
