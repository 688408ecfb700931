use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
    let out = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output();
    if let Ok(o) = out {
        if o.status.success() {
            let s = String::from_utf8_lossy(&o.stdout).trim().to_string();
            if !s.is_empty() {
                println!("cargo:rustc-env=SYMVI_GIT_DESCRIBE={s}");
            }
        }
    }
}
