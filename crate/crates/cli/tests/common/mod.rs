#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Runs the binary in `dir` with any inherited `T2V_*` overrides removed.
pub fn t2v(dir: &Path, args: &[&str]) -> Output {
    t2v_env(dir, args, &[])
}

pub fn t2v_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_t2v"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("T2V_") {
            cmd.env_remove(k);
        }
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// 8 frames of 16x16 pixels with narrow networks, for fast end-to-end runs.
pub const TINY_CONF: &str = "\
frames = 8
height = 16
width = 16
text_dim = 8
word_dim = 8
encoder_hidden = 8
frame_feat_dim = 16
gist_latent_dim = 4
cvae_width = 2
filter_channels = 4
text_gist_dim = 8
text_gist_width = 2
noise_dim = 4
generator_width = 2
critic_width = 2
critic_hidden = 8
batch_size = 8
classifier_epochs = 2
eval_per_class = 3
";

pub fn write_conf(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Workspace `configs/` directory.
pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}
