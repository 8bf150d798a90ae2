use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MeshError;

/// Per-face semantic label.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Label {
    pub class: i64,
    pub instance: i64,
}

impl Label {
    pub const fn new(class: i64, instance: i64) -> Self {
        Label { class, instance }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.class, self.instance)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Structural,
    Loose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: i64,
    pub name: String,
    pub kind: ClassKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

/// Class table; `unknown` is the structural class given to unlabeled faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    pub unknown: i64,
    pub classes: Vec<ClassInfo>,
}

pub const CLASS_UNKNOWN: i64 = 0;
pub const CLASS_WALL: i64 = 1;
pub const CLASS_FLOOR: i64 = 2;
pub const CLASS_CEILING: i64 = 3;
pub const CLASS_FURNITURE: i64 = 10;

impl Default for ClassMap {
    fn default() -> Self {
        let s = |id, name: &str| ClassInfo {
            id,
            name: name.to_string(),
            kind: ClassKind::Structural,
            color: None,
        };
        let l = |id, name: &str| ClassInfo {
            id,
            name: name.to_string(),
            kind: ClassKind::Loose,
            color: None,
        };
        ClassMap {
            unknown: CLASS_UNKNOWN,
            classes: vec![
                s(CLASS_UNKNOWN, "unknown"),
                s(CLASS_WALL, "wall"),
                s(CLASS_FLOOR, "floor"),
                s(CLASS_CEILING, "ceiling"),
                s(4, "beam"),
                s(5, "column"),
                l(CLASS_FURNITURE, "furniture"),
                l(11, "chair"),
                l(12, "table"),
                l(13, "cabinet"),
                l(14, "clutter"),
            ],
        }
    }
}

impl ClassMap {
    pub fn get(&self, id: i64) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn contains(&self, id: i64) -> bool {
        self.get(id).is_some()
    }

    pub fn is_structural(&self, id: i64) -> bool {
        matches!(self.get(id), Some(c) if c.kind == ClassKind::Structural)
    }

    pub fn is_loose(&self, id: i64) -> bool {
        matches!(self.get(id), Some(c) if c.kind == ClassKind::Loose)
    }

    /// Checks id uniqueness, the `unknown` class, and that both kinds exist.
    pub fn validate(&self) -> Result<(), MeshError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c.id) {
                return Err(MeshError::Invalid(format!("duplicate class id {}", c.id)));
            }
        }
        if !self.is_structural(self.unknown) {
            return Err(MeshError::Invalid(format!(
                "unknown class {} must be a structural class",
                self.unknown
            )));
        }
        if !self.classes.iter().any(|c| c.kind == ClassKind::Loose) {
            return Err(MeshError::Invalid("class map has no loose class".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct SidecarEntry {
    class: i64,
    instance: i64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    new: bool,
}

/// Face labels read from a JSON sidecar, indexed by input face.
#[derive(Clone, Debug, Default)]
pub struct Sidecar {
    pub labels: BTreeMap<usize, Label>,
    pub new_faces: BTreeMap<usize, bool>,
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::from_io(path, e))?;
    let raw: BTreeMap<String, SidecarEntry> =
        serde_json::from_str(&text).map_err(|e| MeshError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
    let mut out = Sidecar::default();
    for (k, v) in raw {
        let idx: usize = k.parse().map_err(|_| MeshError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("face key {k:?} is not a non-negative integer"),
        })?;
        out.labels.insert(idx, Label::new(v.class, v.instance));
        if v.new {
            out.new_faces.insert(idx, true);
        }
    }
    Ok(out)
}

pub fn write_sidecar(path: &Path, labels: &[Label], is_new: &[bool]) -> Result<(), MeshError> {
    // Hand-written so keys stay in face order.
    let mut s = String::with_capacity(labels.len() * 40 + 4);
    s.push_str("{\n");
    for (i, (l, n)) in labels.iter().zip(is_new).enumerate() {
        if i > 0 {
            s.push_str(",\n");
        }
        if *n {
            s.push_str(&format!(
                "  \"{i}\": {{\"class\": {}, \"instance\": {}, \"new\": true}}",
                l.class, l.instance
            ));
        } else {
            s.push_str(&format!(
                "  \"{i}\": {{\"class\": {}, \"instance\": {}}}",
                l.class, l.instance
            ));
        }
    }
    s.push_str("\n}\n");
    std::fs::write(path, s).map_err(|e| MeshError::from_io(path, e))
}
