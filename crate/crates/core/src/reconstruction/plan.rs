//! Removal grouping and the clean-cut face removal rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mesh::{ClassMap, Label, LabeledMesh};
use crate::segmentation::ObjectBox;

/// Ordered removal groups; each group lists loose instances removed together.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RemovalPlan {
    pub groups: Vec<Vec<Label>>,
}

impl RemovalPlan {
    /// Every box in its own group, in the given order.
    pub fn singletons(boxes: &[ObjectBox]) -> RemovalPlan {
        RemovalPlan {
            groups: boxes.iter().map(|b| vec![b.label()]).collect(),
        }
    }
}

/// Connected components of the box-overlap graph, smallest total box volume
/// first (ties by smallest member label). Members are ascending.
pub fn plan_removal_order(boxes: &[ObjectBox]) -> RemovalPlan {
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if boxes[i].overlaps(&boxes[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let mut groups: Vec<(f64, Vec<Label>)> = comps
        .into_values()
        .map(|members| {
            let vol = members.iter().map(|&i| boxes[i].volume()).sum();
            let mut labels: Vec<Label> = members.iter().map(|&i| boxes[i].label()).collect();
            labels.sort();
            labels.dedup();
            (vol, labels)
        })
        .collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    RemovalPlan {
        groups: groups.into_iter().map(|g| g.1).collect(),
    }
}

/// Faces dropped by one removal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RemovalRecord {
    /// Input face indices removed, ascending.
    pub removed: Vec<u32>,
    /// Removed structural faces per element (input face indices).
    pub structural: BTreeMap<Label, Vec<u32>>,
}

impl RemovalRecord {
    /// Vertices of every removed face.
    pub fn vertices(&self, mesh: &LabeledMesh) -> BTreeSet<u32> {
        self.removed
            .iter()
            .flat_map(|&f| mesh.triangles[f as usize])
            .collect()
    }
}

/// Removes the faces of the boxed instances and every face whose centroid
/// lies inside any box. Vertices are kept so indices stay stable.
pub fn remove_object_faces(
    mesh: &LabeledMesh,
    boxes: &[ObjectBox],
    class_map: &ClassMap,
) -> (LabeledMesh, RemovalRecord) {
    let boxed: BTreeSet<Label> = boxes.iter().map(|b| b.label()).collect();
    let mut record = RemovalRecord::default();
    let mut keep = vec![true; mesh.face_count()];
    if boxes.is_empty() {
        return (mesh.clone(), record);
    }
    for f in 0..mesh.face_count() {
        let l = mesh.labels[f];
        let hit = boxed.contains(&l) || {
            let c = mesh.face_centroid(f);
            boxes.iter().any(|b| b.contains(&c))
        };
        if hit {
            keep[f] = false;
            record.removed.push(f as u32);
            if class_map.is_structural(l.class) {
                record.structural.entry(l).or_default().push(f as u32);
            }
        }
    }
    (mesh.retain_faces(&keep), record)
}
