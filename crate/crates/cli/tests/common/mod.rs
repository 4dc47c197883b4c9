#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_seaice");

pub fn seaice(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn seaice")
}

/// Runs the binary and fails the test with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> String {
    let out = seaice(args);
    assert!(
        out.status.success(),
        "seaice {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(args: &[&str]) -> i32 {
    seaice(args).status.code().expect("terminated by signal")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn split_old_taxonomy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/sa_codes_split_old.txt")
}

/// File paths of one prepared corpus.
pub struct Corpus {
    pub root: PathBuf,
    pub scenes: PathBuf,
    pub tiles: PathBuf,
    pub manifest: PathBuf,
    pub stats: PathBuf,
}

impl Corpus {
    /// Common data flags for train / eval / experiment.
    pub fn data_args(&self) -> Vec<&str> {
        vec![
            "--manifest",
            s(&self.manifest),
            "--scenes",
            s(&self.scenes),
            "--stats",
            s(&self.stats),
        ]
    }
}

/// gen-synthetic → tile → split → stats through the binary.
///
/// `gen_extra` and `split_extra` are appended to those commands.
pub fn prepare(root: &Path, gen_extra: &[&str], split_extra: &[&str]) -> Corpus {
    let c = Corpus {
        root: root.to_path_buf(),
        scenes: root.join("scenes"),
        tiles: root.join("tiles.csv"),
        manifest: root.join("manifest.csv"),
        stats: root.join("stats.json"),
    };
    let mut gen = vec!["gen-synthetic", "--out", s(&c.scenes)];
    gen.extend_from_slice(gen_extra);
    ok(&gen);
    ok(&[
        "tile",
        "--scenes",
        s(&c.scenes),
        "--patch-size",
        "8",
        "--out",
        s(&c.tiles),
    ]);
    let mut split = vec!["split", "--manifest", s(&c.tiles), "--out", s(&c.manifest)];
    split.extend_from_slice(split_extra);
    ok(&split);
    ok(&[
        "stats",
        "--manifest",
        s(&c.manifest),
        "--scenes",
        s(&c.scenes),
        "--out",
        s(&c.stats),
    ]);
    c
}

/// Small three-scene corpus that splits at a loose tolerance.
pub fn small(root: &Path) -> Corpus {
    prepare(
        root,
        &["--scenes", "3", "--width", "96", "--height", "96"],
        &["--block-size", "2", "--tolerance", "0.1"],
    )
}

/// Every file below `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Parses a CSV with a header line into rows of fields.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}
