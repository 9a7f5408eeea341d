use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_open-intake");

/// The binary with logging quiet and no stray config file picked up.
pub fn command(cwd: &Path) -> Command {
    let mut command = Command::new(BIN);
    command.current_dir(cwd).env("RUST_LOG", "error");
    for (key, _) in std::env::vars() {
        if key.starts_with("OPEN_INTAKE_") {
            command.env_remove(key);
        }
    }
    command
}

pub fn run(cwd: &Path, args: &[&str]) -> Output {
    command(cwd).args(args).output().expect("spawn open-intake")
}

/// Runs a command that must succeed and returns its standard output.
pub fn ok(cwd: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let output = run(cwd, args);
    if !output.status.success() {
        return Err(format!(
            "`open-intake {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    Ok(output.stdout)
}

pub fn ok_json(cwd: &Path, args: &[&str]) -> Result<Value, String> {
    let stdout = ok(cwd, args)?;
    serde_json::from_slice(&stdout).map_err(|e| format!("`{}` printed invalid JSON: {e}", args.join(" ")))
}

/// `code` from an `error[code]: message` line.
pub fn error_code(stderr: &[u8]) -> Option<String> {
    let text = String::from_utf8_lossy(stderr);
    let line = text.lines().rev().find(|l| l.starts_with("error["))?;
    Some(line["error[".len()..line.find(']')?].to_owned())
}

pub fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}
