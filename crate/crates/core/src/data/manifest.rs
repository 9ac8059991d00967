use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Heldout,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Heldout => "heldout",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "heldout" => Ok(Split::Heldout),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// One mixture: a speech file, a masker file and how to combine them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub id: String,
    pub speech_path: PathBuf,
    pub noise_path: PathBuf,
    pub snr_db: f64,
    pub crop_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhanced_path: Option<PathBuf>,
    pub split: Split,
}

/// JSON-lines dataset description. Relative paths resolve against `base`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub base: PathBuf,
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>, base: impl Into<PathBuf>) -> Result<Self> {
        let m = Self { rows, base: base.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id `{}` (row {})", r.id, i + 1)));
            }
            if !r.snr_db.is_finite() {
                return Err(Error::Manifest(format!("row `{}`: snr_db is not finite", r.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = serde_json::from_str(line).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))?;
            rows.push(row);
        }
        Self::new(rows, base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    /// Rows whose files do not exist.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for r in &self.rows {
            let paths = [Some(&r.speech_path), Some(&r.noise_path), r.enhanced_path.as_ref()];
            for p in paths.into_iter().flatten() {
                let full = self.resolve(p);
                if !full.is_file() && !out.contains(&full) {
                    out.push(full);
                }
            }
        }
        out
    }
}
