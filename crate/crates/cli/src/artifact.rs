use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cksvar::ingest::sha256_hex;
use serde::Serialize;

/// An input file identified by its content.
#[derive(Debug, Clone, Serialize)]
pub struct Input {
    pub path: String,
    pub bytes: usize,
    /// SHA-256 of `blob <len>\0<content>`, the git object id of the file.
    pub git_sha256: String,
}

pub fn hash_input(path: &Path) -> Result<Input> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Input { path: path.display().to_string(), bytes: data.len(), git_sha256: git_blob_sha256(&data) })
}

pub fn git_blob_sha256(data: &[u8]) -> String {
    let mut obj = format!("blob {}\0", data.len()).into_bytes();
    obj.extend_from_slice(data);
    sha256_hex(&obj)
}

/// File names `<command>_<dataset>_<spec>_<seed>.{json,csv,txt}` in one
/// directory.
pub struct Artifacts {
    dir: PathBuf,
    stem: String,
    pub written: Vec<PathBuf>,
}

/// Keeps names free of separators and dots so the stem survives extension
/// handling.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' => c,
            '.' => 'p',
            _ => '-',
        })
        .collect()
}

#[derive(Serialize)]
struct Record<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a C,
    inputs: &'a [Input],
    result: &'a R,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str, dataset: &str, spec: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            stem: format!("{}_{}_{}_{seed}", slug(command), slug(dataset), slug(spec)),
            written: Vec::new(),
        })
    }

    pub fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.stem))
    }

    pub fn stem_path(&self) -> PathBuf {
        self.dir.join(&self.stem)
    }

    fn write(&mut self, ext: &str, text: &str) -> Result<()> {
        let p = self.path(ext);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(p);
        Ok(())
    }

    pub fn json<C: Serialize, R: Serialize>(&mut self, config: &C, inputs: &[Input], result: &R) -> Result<()> {
        let rec = Record { tool: "cksvar", version: env!("CARGO_PKG_VERSION"), config, inputs, result };
        self.write("json", &(serde_json::to_string_pretty(&rec)? + "\n"))
    }

    /// CSV preceded by `#` comment lines carrying the config hash and inputs.
    pub fn csv(&mut self, header: &Header, body: &str) -> Result<()> {
        self.write("csv", &(header.comment("#") + body))
    }

    pub fn txt(&mut self, header: &Header, body: &str) -> Result<()> {
        self.write("txt", &(header.comment("#") + body))
    }
}

/// Provenance lines shared by the text artifacts.
pub struct Header {
    pub config_json: String,
    pub inputs: Vec<Input>,
}

impl Header {
    pub fn new<C: Serialize>(config: &C, inputs: &[Input]) -> Result<Self> {
        Ok(Header { config_json: serde_json::to_string(config)?, inputs: inputs.to_vec() })
    }

    fn comment(&self, mark: &str) -> String {
        let mut s = format!("{mark} config {}\n", self.config_json);
        for i in &self.inputs {
            s.push_str(&format!("{mark} input {} {} bytes {}\n", i.path, i.bytes, i.git_sha256));
        }
        s
    }
}
