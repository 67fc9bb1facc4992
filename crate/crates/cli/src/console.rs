//! Panic-free stdout.
//!
//! `println!` aborts the process when stdout goes away — the classic
//! `fedldp shuffle-demo | head` case. Every command therefore funnels its
//! output through [`emit`], which drops write errors on the floor: once
//! the reader hung up there is nobody left to tell, and the command's real
//! work (run directories, report files) is already on disk by the time
//! anything is printed.

use std::io::Write;

/// Writes to stdout, ignoring failure.
pub fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

/// [`emit`] plus a trailing newline.
pub fn emit_line(text: &str) {
    emit(text);
    emit("\n");
}
