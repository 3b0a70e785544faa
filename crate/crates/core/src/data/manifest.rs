use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

/// Labeled file listing for one split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Lists `<root>/<split>/<class>/*.{jpg,jpeg,png}`; classes are the sorted
/// subdirectory names and labels are their indices.
pub fn scan_dataset(root: &Path, split: Split) -> Result<DatasetManifest> {
    let split_dir = root.join(split.as_str());
    if !split_dir.is_dir() {
        return Err(Error::Config(format!(
            "split directory {} not found; expected <root>/{split}/<class>/<images>",
            split_dir.display()
        )));
    }
    let class_dirs: Vec<PathBuf> = sorted_dir(&split_dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if class_dirs.is_empty() {
        return Err(Error::Config(format!(
            "{} has no class subdirectories",
            split_dir.display()
        )));
    }

    let mut class_names = Vec::with_capacity(class_dirs.len());
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("non UTF-8 class directory {}", dir.display())))?
            .to_string();
        let before = entries.len();
        entries.extend(
            sorted_dir(dir)?
                .into_iter()
                .filter(|p| p.is_file() && has_image_extension(p))
                .map(|path| ManifestEntry { path, label }),
        );
        if entries.len() == before {
            warnings.push(format!("class `{name}` in split {split} has no images"));
        }
        class_names.push(name);
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DatasetManifest {
        split,
        class_names,
        entries,
        warnings,
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sample count per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for e in &self.entries {
            counts[e.label] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(p: PathBuf) {
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, b"x").unwrap();
    }

    #[test]
    fn scans_class_directories() {
        let dir = tempfile::tempdir().unwrap();
        let train = dir.path().join("train");
        for f in ["b.jpg", "a.PNG"] {
            touch(train.join("fire").join(f));
        }
        for f in ["3.jpeg", "1.jpg", "2.png", "notes.txt", "x.webp"] {
            touch(train.join("nofire").join(f));
        }
        let m = scan_dataset(dir.path(), Split::Train).unwrap();
        assert_eq!(m.class_names, ["fire", "nofire"]);
        assert_eq!(m.len(), 5);
        assert_eq!(m.class_counts(), vec![2, 3]);
        let names: Vec<_> = m
            .entries
            .iter()
            .map(|e| e.path.file_name().unwrap().to_str().unwrap())
            .collect();
        assert_eq!(names, ["a.PNG", "b.jpg", "1.jpg", "2.png", "3.jpeg"]);
        assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn empty_class_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path().join("val/fire/a.jpg"));
        std::fs::create_dir_all(dir.path().join("val/nofire")).unwrap();
        let m = scan_dataset(dir.path(), Split::Val).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn layout_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), Split::Test),
            Err(Error::Config(_))
        ));
        std::fs::create_dir_all(dir.path().join("test")).unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), Split::Test),
            Err(Error::Config(_))
        ));
        assert!("dev".parse::<Split>().is_err());
    }
}
