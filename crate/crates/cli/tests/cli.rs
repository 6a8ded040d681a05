//! End-to-end runs of the `t2v` binary.

mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{ok, t2v, t2v_env, write_conf, TINY_CONF};

#[test]
fn synth_data_writes_every_clip_and_an_index() {
    let dir = tempfile::tempdir().unwrap();
    write_conf(dir.path(), "tiny.conf", TINY_CONF);
    let args = ["synth-data", "--config", "tiny.conf", "--colors", "4", "--motions", "4", "--per-combo", "10", "--seed", "7"];
    ok(&t2v(dir.path(), &[&args[..], &["--out", "a"]].concat()));
    ok(&t2v(dir.path(), &[&args[..], &["--out", "b"]].concat()));
    let index = fs::read_to_string(dir.path().join("a/index.tsv")).unwrap();
    assert_eq!(index.lines().count(), 160);
    assert_eq!(fs::read_dir(dir.path().join("a/clips")).unwrap().count(), 160);
    assert_eq!(index, fs::read_to_string(dir.path().join("b/index.tsv")).unwrap());
    for line in index.lines().take(5) {
        let id = line.split('\t').next().unwrap();
        let clip = |d: &str| fs::read(dir.path().join(d).join("clips").join(format!("{id}.raw"))).unwrap();
        assert_eq!(clip("a"), clip("b"));
    }
}

fn corpus(dir: &std::path::Path) {
    write_conf(dir, "tiny.conf", TINY_CONF);
    ok(&t2v(dir, &["synth-data", "--config", "tiny.conf", "--colors", "2", "--motions", "2", "--per-combo", "5", "--out", "corpus"]));
}

#[test]
fn train_then_generate_emits_gist_video_and_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(&t2v(d, &["train", "--config", "tiny.conf", "--corpus", "corpus", "--variant", "T2V", "--steps", "6", "--out", "runs/T2V"]));
    let log = fs::read_to_string(d.join("runs/T2V/loss_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("step,cvae,gan_d,gan_g,recons,total"));
    assert_eq!(lines.count(), 6);
    for f in ["checkpoint.bin", "splits.tsv", "config.txt"] {
        assert!(d.join("runs/T2V").join(f).is_file(), "{f}");
    }
    let caption = "a shape moving right on a green background";
    ok(&t2v(d, &["generate", "--checkpoint", "runs/T2V/checkpoint.bin", "--caption", caption, "--seed", "1", "--out", "samples"]));
    for f in ["sample_gist.png", "sample.gif", "sample.raw"] {
        assert!(d.join("samples").join(f).is_file(), "{f}");
    }
    let raw = fs::read(d.join("samples/sample.raw")).unwrap();
    ok(&t2v(d, &["generate", "--checkpoint", "runs/T2V/checkpoint.bin", "--caption", caption, "--seed", "1", "--out", "again"]));
    assert_eq!(raw, fs::read(d.join("again/sample.raw")).unwrap());

    ok(&t2v(d, &["train", "--config", "tiny.conf", "--corpus", "corpus", "--variant", "T2V", "--steps", "2", "--out", "runs/T2V", "--resume"]));
    let log = fs::read_to_string(d.join("runs/T2V/loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 9);
    assert!(log.lines().last().unwrap().starts_with("8,"));

    // Variants without a gist write only the clip.
    ok(&t2v(d, &["train", "--config", "tiny.conf", "--corpus", "corpus", "--variant", "DT2V", "--steps", "2", "--out", "runs/DT2V"]));
    ok(&t2v(d, &["generate", "--checkpoint", "runs/DT2V/checkpoint.bin", "--caption", caption, "--out", "dt"]));
    assert!(!d.join("dt/sample_gist.png").exists());
    assert!(d.join("dt/sample.gif").is_file());
}

#[test]
fn evaluate_reports_one_accuracy_per_variant_matching_the_tally() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let variants = ["DT2V", "GT2V", "T2V"];
    for v in variants {
        ok(&t2v(d, &["train", "--config", "tiny.conf", "--corpus", "corpus", "--variant", v, "--steps", "3", "--out", &format!("runs/{v}")]));
    }
    ok(&t2v(d, &["evaluate", "--config", "tiny.conf", "--corpus", "corpus", "--runs", "runs", "--variants", "DT2V,GT2V,T2V", "--out", "eval"]));
    let csv = fs::read_to_string(d.join("eval/accuracy.csv")).unwrap();
    let acc: BTreeMap<String, (f64, usize)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), (f[1].parse().unwrap(), f[2].parse().unwrap()))
        })
        .collect();
    assert_eq!(acc.keys().cloned().collect::<Vec<_>>(), vec!["DT2V", "GT2V", "T2V", "in-set"]);
    let report = fs::read_to_string(d.join("eval/report.txt")).unwrap();
    for v in variants {
        assert_eq!(report.lines().filter(|l| l.starts_with(&format!("{v}\taccuracy"))).count(), 1);
        let tsv = fs::read_to_string(d.join(format!("eval/predictions_{v}.tsv"))).unwrap();
        let rows: Vec<(usize, usize)> = tsv
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<usize> = l.split('\t').map(|x| x.parse().unwrap()).collect();
                (f[1], f[2])
            })
            .collect();
        // 4 classes, 3 samples each.
        assert_eq!(rows.len(), 12);
        let hits = rows.iter().filter(|(t, p)| t == p).count();
        assert_eq!(acc[v], (hits as f64 / 12.0, 12));
        let confusion = fs::read_to_string(d.join(format!("eval/confusion_{v}.csv"))).unwrap();
        for (k, line) in confusion.lines().skip(1).enumerate() {
            let cells: Vec<u64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
            assert_eq!(cells.iter().sum::<u64>(), 3);
            assert_eq!(cells[k] as usize, rows.iter().filter(|(t, p)| *t == k && *p == k).count());
        }
        assert!(d.join(format!("eval/confusion_{v}.png")).is_file());
        assert!(report.contains(&format!("{v}\tcolor_match_rate")));
    }
}

#[test]
fn identical_invocations_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    for run in ["r1", "r2"] {
        ok(&t2v(d, &["train", "--config", "tiny.conf", "--corpus", "corpus", "--variant", "PT2V", "--steps", "5", "--seed", "3", "--out", run]));
    }
    for f in ["loss_log.csv", "checkpoint.bin", "splits.tsv"] {
        assert_eq!(fs::read(d.join("r1").join(f)).unwrap(), fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }
    ok(&t2v(d, &["train", "--config", "tiny.conf", "--corpus", "corpus", "--variant", "PT2V", "--steps", "5", "--seed", "4", "--out", "r3"]));
    assert_ne!(fs::read(d.join("r1/loss_log.csv")).unwrap(), fs::read(d.join("r3/loss_log.csv")).unwrap());
}

#[test]
fn exit_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = t2v(d, &["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(t2v(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(t2v(d, &["--help"]).status.code(), Some(0));

    write_conf(d, "typo.conf", "gama3 = 0.5\n");
    let out = t2v(d, &["synth-data", "--config", "typo.conf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama3"));

    write_conf(d, "bad.conf", "gamma3 = lots\n");
    assert_eq!(t2v(d, &["synth-data", "--config", "bad.conf"]).status.code(), Some(1));
    let out = t2v_env(d, &["synth-data"], &[("T2V_GAMA3", "1")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("GAMA3") || String::from_utf8_lossy(&out.stderr).contains("gama3"));

    // A missing checkpoint is a runtime failure, not a usage error.
    let out = t2v(d, &["generate", "--checkpoint", "nowhere.bin", "--caption", "a b"]);
    assert_eq!(out.status.code(), Some(2));
    write_conf(d, "tiny.conf", TINY_CONF);
    let out = t2v(d, &["synth-data", "--config", "tiny.conf", "--colors", "1", "--out", "c"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn environment_overrides_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    write_conf(d, "g.conf", &format!("{TINY_CONF}gamma3 = 0.25\n"));
    ok(&t2v_env(d, &["train", "--config", "g.conf", "--corpus", "corpus", "--steps", "1", "--out", "r"], &[("T2V_GAMMA3", "0.5")]));
    let cfg = fs::read_to_string(d.join("r/config.txt")).unwrap();
    assert!(cfg.lines().any(|l| l.replace(' ', "") == "gamma3=0.5"), "{cfg}");
    assert!(cfg.lines().any(|l| l.replace(' ', "") == "variant=T2V"));
}

#[test]
fn help_lists_every_flag_with_its_default() {
    let dir = tempfile::tempdir().unwrap();
    let expected: [(&str, &[&str]); 6] = [
        ("curate", &["--metadata", "--allowlist", "--out", "--rejections", "--config", "--seed", "--workers"]),
        ("preprocess", &["--manifest", "--out"]),
        ("synth-data", &["--colors", "--motions", "--per-combo", "--noise", "--out"]),
        ("train", &["--corpus", "--variant", "--steps", "--out", "--resume"]),
        ("generate", &["--checkpoint", "--caption", "--out", "--name", "--delay-ms"]),
        ("evaluate", &["--corpus", "--runs", "--variants", "--out"]),
    ];
    for (sub, flags) in expected {
        let help = ok(&t2v(dir.path(), &[sub, "--help"]));
        for flag in flags.iter().chain(&["--config", "--seed", "--workers"]) {
            let line = help.lines().position(|l| l.trim_start().starts_with(flag) || l.contains(&format!(" {flag} ")));
            let line = line.unwrap_or_else(|| panic!("{sub} --help lacks {flag}:\n{help}"));
            // The default sits on the flag line or in its wrapped description.
            let block: String = help.lines().skip(line).take_while(|l| !l.trim().is_empty()).take(4).collect();
            let required = ["--metadata", "--allowlist", "--manifest", "--caption"].contains(flag);
            let switch = *flag == "--resume";
            assert!(required || switch || block.contains("default"), "{sub} {flag}:\n{help}");
        }
    }
}
